"""Synthetic multi-channel RSS trace generator with ground truth.

Produces an empty-room calibration segment followed by person-present
frames. The forward model is deliberately simple and *synthetic* — it
exists to exercise the pipeline end to end, not to simulate physics: each
link/channel owns a fixed fade offset around the log-distance mean; when
the person stands inside a link's direction-dependent ellipse the RSS
change has sign chosen by a fade-level-dependent coin (anti-fade links
attenuate with high probability) and exponential magnitude, plus Gaussian
sensor noise and optional 1 dB quantization. Everything is deterministic
given the seed.
"""

from dataclasses import dataclass, field

import numpy as np

from .calibration import CHANNEL_MAX, CHANNEL_MIN, RssFrame, path_loss
from .geometry import LinkTable, NodeLayout, enumerate_links, excess_path_field
from .measurement_model import MeasurementModelParams
from .spatial_model import DIR_DOWN, DIR_UP, EllipseModelParams, _lambda_array

__all__ = [
    "DEFAULT_CHANNELS",
    "ScenarioSpec",
    "SimulatedTrace",
    "generate_trace",
    "perimeter_layout",
    "stationary_trajectory",
]

DEFAULT_CHANNELS = (11, 16, 21, 26)


def perimeter_layout(n_nodes: int, width: float, height: float,
                     origin: tuple[float, float] = (0.0, 0.0)) -> NodeLayout:
    """Nodes evenly spaced along the perimeter of a rectangle.

    Node ids are 1..n_nodes, walking counter-clockwise from the origin
    corner.
    """
    if n_nodes < 3:
        raise ValueError("need at least 3 nodes")
    if width <= 0 or height <= 0:
        raise ValueError("rectangle dimensions must be > 0")
    perim = 2 * (width + height)
    xy = np.empty((n_nodes, 2))
    for i in range(n_nodes):
        s = perim * i / n_nodes
        if s < width:
            xy[i] = (s, 0.0)
        elif s < width + height:
            xy[i] = (width, s - width)
        elif s < 2 * width + height:
            xy[i] = (width - (s - width - height), height)
        else:
            xy[i] = (0.0, height - (s - 2 * width - height))
    xy += np.asarray(origin)
    return NodeLayout(ids=np.arange(1, n_nodes + 1), xy=xy)


def stationary_trajectory(position, start_k: int, n_frames: int) -> np.ndarray:
    """(n_frames, 3) trajectory rows (k, x, y) standing at one position."""
    if n_frames < 1:
        raise ValueError("n_frames must be >= 1")
    x, y = float(position[0]), float(position[1])
    ks = np.arange(start_k, start_k + n_frames)
    return np.column_stack((ks, np.full(n_frames, x), np.full(n_frames, y)))


@dataclass(frozen=True)
class ScenarioSpec:
    """Everything that defines one synthetic recording.

    Attributes:
        layout: sensor deployment.
        channels: measured channel numbers, ascending within 11..26.
        eta: true path-loss exponent.
        p0: true reference loss at d0, dB.
        d0: reference distance, meters.
        calibration_frames: person-absent frames at the start (k = 0...).
        trajectory: (T, 3) rows (k, x, y); times strictly increasing and
            after the calibration segment. Empty for a person-free trace.
        fade_offsets: explicit (L, C) per-link/channel dB offsets, or None
            to draw them Gaussian(0, fade_sigma) from the seed.
        fade_sigma: std of generated fade offsets, dB.
        noise_sigma: sensor noise std, dB.
        quantize: round final RSS to whole dB steps.
        seed: RNG seed; the whole trace is a pure function of the spec.
    """

    layout: NodeLayout
    channels: tuple = DEFAULT_CHANNELS
    eta: float = 2.0
    p0: float = 40.0
    d0: float = 1.0
    calibration_frames: int = 100
    trajectory: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    fade_offsets: np.ndarray | None = None
    fade_sigma: float = 5.0
    noise_sigma: float = 0.5
    quantize: bool = True
    seed: int = 0

    def __post_init__(self):
        channels = np.asarray(self.channels, dtype=int)
        if channels.size == 0:
            raise ValueError("need at least one channel")
        if channels.min() < CHANNEL_MIN or channels.max() > CHANNEL_MAX:
            raise ValueError(f"channels must lie in [{CHANNEL_MIN}, {CHANNEL_MAX}]")
        if np.any(np.diff(channels) <= 0):
            raise ValueError("channels must be strictly ascending")
        if self.calibration_frames < 1:
            raise ValueError("calibration_frames must be >= 1")
        traj = np.asarray(self.trajectory, dtype=float)
        if traj.size and (traj.ndim != 2 or traj.shape[1] != 3):
            raise ValueError("trajectory must be (T, 3) rows of (k, x, y)")
        if traj.size:
            if np.any(np.diff(traj[:, 0]) <= 0):
                raise ValueError("trajectory times must be strictly increasing")
            if traj[0, 0] < self.calibration_frames:
                raise ValueError(
                    "trajectory must start after the calibration segment"
                )
        if self.noise_sigma < 0 or self.fade_sigma < 0:
            raise ValueError("noise/fade sigmas must be >= 0")
        if self.d0 <= 0:
            raise ValueError("d0 must be > 0")
        if not np.isfinite(self.eta) or not np.isfinite(self.p0):
            raise ValueError("eta and p0 must be finite")
        object.__setattr__(self, "channels", tuple(int(c) for c in channels))
        object.__setattr__(self, "trajectory", traj.reshape(-1, 3))


@dataclass(frozen=True)
class SimulatedTrace:
    """generate_trace output bundle.

    Attributes:
        frames: calibration frames then person frames, ascending k.
        truth: (T, 3) ground-truth rows (k, x, y) for person frames.
        fade_offsets: (L, C) true offsets (= true fade levels).
        baseline: (L, C) true noise-free empty-room RSS in dBm.
        table: link table the rows refer to.
        calibration_frames: length of the person-absent prefix.
    """

    frames: tuple
    truth: np.ndarray
    fade_offsets: np.ndarray
    baseline: np.ndarray
    table: LinkTable
    calibration_frames: int


def _sign_probability_down(fade: np.ndarray) -> np.ndarray:
    """P(RSS decreases | obstructed): logistic in fade level, slope 0.5/dB.

    Anti-fade links (F > 0) attenuate when blocked; deep-fade links mostly
    gain power.
    """
    return 1.0 / (1.0 + np.exp(-0.5 * fade))


def generate_trace(spec: ScenarioSpec,
                   ellipse: EllipseModelParams | None = None,
                   measurement: MeasurementModelParams | None = None,
                   ) -> SimulatedTrace:
    """Generate a full synthetic recording for a scenario.

    Args:
        spec: scenario definition.
        ellipse: ellipse-width model the simulated person obeys (defaults
            to the standard parameters).
        measurement: rate parameters for simulated change magnitudes
            (defaults to the standard parameters).

    Returns:
        SimulatedTrace; bit-identical for identical specs.
    """
    if ellipse is None:
        ellipse = EllipseModelParams()
    if measurement is None:
        measurement = MeasurementModelParams()
    rng = np.random.default_rng(spec.seed)
    table = enumerate_links(spec.layout)
    channels = np.asarray(spec.channels, dtype=int)
    shape = (table.n_links, channels.size)

    if spec.fade_offsets is not None:
        offsets = np.asarray(spec.fade_offsets, dtype=float)
        if offsets.shape != shape:
            raise ValueError(f"fade_offsets shape {offsets.shape} != {shape}")
    else:
        offsets = rng.normal(0.0, spec.fade_sigma, size=shape)

    baseline = np.empty(shape)
    for ci, c in enumerate(channels):
        baseline[:, ci] = [
            path_loss(d, int(c), spec.p0, spec.eta, spec.d0) for d in table.lengths
        ]
    baseline = baseline + offsets

    prob_down = _sign_probability_down(offsets)
    lam_down = _lambda_array(offsets, DIR_DOWN, ellipse)
    lam_up = _lambda_array(offsets, DIR_UP, ellipse)
    beta_up = measurement.b_beta_plus * np.exp(offsets / measurement.k_beta_plus)

    def emit(k: int, delta: np.ndarray) -> RssFrame:
        rss = baseline + delta
        if spec.noise_sigma > 0:
            rss = rss + rng.normal(0.0, spec.noise_sigma, size=shape)
        if spec.quantize:
            rss = np.round(rss)
        return RssFrame(k=int(k), rss=rss, channels=channels)

    frames = []
    for k in range(spec.calibration_frames):
        frames.append(emit(k, np.zeros(shape)))

    zero = np.zeros(shape)
    for k, x, y in spec.trajectory:
        lam_p = excess_path_field(table, spec.layout, [[x, y]])[:, 0]  # (L,)
        goes_down = rng.random(shape) < prob_down
        lam_model = np.where(goes_down, lam_down, lam_up)
        fires = lam_p[:, None] < lam_model
        rate = np.where(goes_down, measurement.beta_minus, beta_up)
        magnitude = rng.exponential(1.0, size=shape) / rate
        signed = np.where(goes_down, -magnitude, magnitude)
        frames.append(emit(k, np.where(fires, signed, zero)))

    return SimulatedTrace(
        frames=tuple(frames),
        truth=spec.trajectory.copy(),
        fade_offsets=offsets,
        baseline=baseline,
        table=table,
        calibration_frames=spec.calibration_frames,
    )
