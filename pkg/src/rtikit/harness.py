"""End-to-end pipelines, benchmark orchestration, and model cross-checks.

Four estimator variants share one reconstruction core and differ only in
the weight matrix and measurement vector fed to it:

- ``rti``: one channel's RSS loss with the fixed-width ellipse weights.
- ``cdrti``: every channel treated as an independent link — stacked RSS
  losses over per-channel copies of the fixed-width weights.
- ``flrti``: per link, the m most anti-fade channels averaged into one
  RSS-loss measurement over the fixed-width weights.
- ``msrti``: direction-resolved in-ellipse probabilities over the
  fade-level-scaled multi-scale weights.

Baseline variants image the *loss* s = −Δr so that the argmax localizer
targets attenuation for every variant.
"""

from dataclasses import dataclass, field

import numpy as np

from .calibration import FadeLevelTable, calibrate
from .geometry import NodeLayout, VoxelGrid, enumerate_links
from .measurement_model import (
    HoldBuffer,
    MeasurementAssembler,
    MeasurementModelParams,
    inside_probability,
    rss_change,
)
from .reconstruction import (
    ReconstructionParams,
    build_operator,
    prior_precision_term,
    reconstruct,
)
from .simulator import (
    DEFAULT_CHANNELS,
    ScenarioSpec,
    generate_trace,
    stationary_trajectory,
)
from .spatial_model import (
    DIR_DOWN,
    EllipseModelParams,
    WeightMatrix,
    build_classic_weights,
    build_multiscale_weights,
    lambda_for,
)
from .tracking import (
    error_summary,
    init_track,
    kalman_step,
    localization_error,
    localize,
)

__all__ = [
    "VARIANTS",
    "PipelineConfig",
    "PipelineResult",
    "VariantPipeline",
    "build_pipeline",
    "run_pipeline",
    "benchmark",
    "crosscheck_models",
]

VARIANTS = ("rti", "cdrti", "flrti", "msrti")


@dataclass(frozen=True)
class PipelineConfig:
    """Everything a pipeline run needs beyond the data itself.

    Attributes:
        voxel_width: image voxel size p, meters.
        grid_margin: padding around the node bounding box; None = one
            voxel width.
        calibration_frames: person-free prefix of the trace used for
            calibration.
        classic_lambda: fixed ellipse width of the baseline weights.
        rti_channel: channel for the single-channel variant; None = first
            calibrated channel.
        flrti_m: how many most-anti-fade channels each link averages.
        ellipse / measurement / reconstruction: model parameter sets.
        hold: apply the missing-sample hold policy during the run.
        kalman: smooth positions with the Kalman filter.
        kalman_q: process-noise intensity (white-noise jerk).
        kalman_r_scale: measurement variance = scale * voxel_width².
        dt: frame period in seconds (Kalman only).
    """

    voxel_width: float = 0.1524
    grid_margin: float | None = None
    calibration_frames: int = 100
    classic_lambda: float = 0.02
    rti_channel: int | None = None
    flrti_m: int = 3
    ellipse: EllipseModelParams = field(default_factory=EllipseModelParams)
    measurement: MeasurementModelParams = field(default_factory=MeasurementModelParams)
    reconstruction: ReconstructionParams = field(default_factory=ReconstructionParams)
    hold: bool = True
    kalman: bool = False
    kalman_q: float = 1.0
    kalman_r_scale: float = 4.0
    dt: float = 1.0

    def __post_init__(self):
        if self.voxel_width <= 0:
            raise ValueError("voxel_width must be > 0")
        if self.calibration_frames < 1:
            raise ValueError("calibration_frames must be >= 1")
        if self.flrti_m < 1:
            raise ValueError("flrti_m must be >= 1")
        if self.classic_lambda < 0:
            raise ValueError("classic_lambda must be >= 0")

    @classmethod
    def from_dict(cls, kv: dict) -> "PipelineConfig":
        """Build from flat key-value pairs (see load_key_value).

        Unknown keys raise; parameter-set keys map onto their dataclasses
        (k_lambda_minus, beta_minus, sigma_x, ...).
        """
        ellipse_keys = {
            "k_lambda_minus": "k_down", "b_lambda_minus": "b_down",
            "k_lambda_plus": "k_up", "b_lambda_plus": "b_up",
            "lambda_max": "lambda_max",
        }
        measurement_keys = {
            "beta_minus": "beta_minus", "k_beta_plus": "k_beta_plus",
            "b_beta_plus": "b_beta_plus", "dead_zone_db": "dead_zone_db",
        }
        recon_keys = {"sigma_x": "sigma_x", "sigma_n": "sigma_n",
                      "delta_c": "delta_c"}
        top_float = {"voxel_width", "grid_margin", "classic_lambda",
                     "kalman_q", "kalman_r_scale", "dt"}
        top_int = {"calibration_frames", "rti_channel", "flrti_m"}
        top_bool = {"hold", "kalman"}

        ellipse, measurement, recon, top = {}, {}, {}, {}
        for key, values in kv.items():
            if len(values) != 1 or len(values[0]) != 1:
                raise ValueError(f"config key {key!r} needs exactly one value")
            value = values[0][0]
            if key in ellipse_keys:
                ellipse[ellipse_keys[key]] = float(value)
            elif key in measurement_keys:
                measurement[measurement_keys[key]] = float(value)
            elif key == "hold_frames":
                measurement["hold_frames"] = int(value)
            elif key in recon_keys:
                recon[recon_keys[key]] = float(value)
            elif key in top_float:
                top[key] = float(value)
            elif key in top_int:
                top[key] = int(value)
            elif key in top_bool:
                top[key] = value.lower() in ("1", "true", "yes", "on")
            else:
                raise ValueError(f"unknown config key {key!r}")
        return cls(
            ellipse=EllipseModelParams(**ellipse),
            measurement=MeasurementModelParams(**measurement),
            reconstruction=ReconstructionParams(**recon),
            **top,
        )


class VariantPipeline:
    """One variant's frame-to-image machinery, state included.

    Construction does the expensive work (weights + operator); measurement
    and image assembly per frame are array operations. The hold buffer
    makes a pipeline single-pass — build a fresh one per trace.
    """

    def __init__(self, variant: str, fades: FadeLevelTable, layout: NodeLayout,
                 grid: VoxelGrid, config: PipelineConfig,
                 precision_term: np.ndarray | None = None,
                 operator=None):
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}; pick from {VARIANTS}")
        self.variant = variant
        self.fades = fades
        self.grid = grid
        self.config = config
        table = enumerate_links(layout)
        self.table = table
        self._hold = (
            HoldBuffer(table.n_links, fades.channels.size,
                       config.measurement.hold_frames)
            if config.hold else None
        )

        if variant == "msrti":
            # Multi-scale weights depend on the fade levels, so a prebuilt
            # operator is only valid for this exact calibration.
            if operator is None:
                weights = build_multiscale_weights(
                    table, layout, grid, fades, config.ellipse
                )
                operator = build_operator(
                    weights, grid, config.reconstruction, precision_term
                )
            self._assembler = MeasurementAssembler(
                fades, config.measurement, operator.weights
            )
            self.operator = operator
            return

        if variant == "rti":
            channel = (config.rti_channel if config.rti_channel is not None
                       else int(fades.channels[0]))
            self._rti_col = fades.channel_column(channel)
            self.channel = channel
        elif variant == "flrti":
            self._selection = _flrti_selection(fades.values, config.flrti_m)

        if operator is None:
            operator = build_operator(
                _baseline_weights(variant, table, layout, grid, config,
                                  fades.channels),
                grid, config.reconstruction, precision_term,
            )
        self.operator = operator

    def measurement(self, frame) -> np.ndarray:
        """Per-frame measurement vector in this variant's row order."""
        if self.variant == "msrti":
            return self._assembler(frame, self._hold)
        delta = rss_change(frame, self.fades, self._hold)
        loss = -np.nan_to_num(delta, nan=0.0)  # positive under attenuation
        if self.variant == "rti":
            return loss[:, self._rti_col]
        if self.variant == "cdrti":
            return loss.T.reshape(-1)  # channel-major, links within channel
        return (loss * self._selection).sum(axis=1)  # flrti

    def image(self, frame) -> np.ndarray:
        return reconstruct(self.operator, self.measurement(frame))


def _baseline_weights(variant, table, layout, grid, config,
                      channels) -> WeightMatrix:
    """Fixed-width weights for a baseline variant.

    rti and flrti use one row per link; cdrti treats each (channel, link)
    pair as its own link, stacking per-channel copies channel-major.
    """
    classic = build_classic_weights(table, layout, grid, config.classic_lambda)
    if variant != "cdrti":
        return classic
    from scipy import sparse

    stacked = sparse.vstack([classic.matrix] * len(channels), format="csr")
    keys = tuple(
        (int(c), l) for c in channels for l in range(table.n_links)
    )
    return WeightMatrix(matrix=stacked, row_keys=keys)


def _flrti_selection(fade_values: np.ndarray, m: int) -> np.ndarray:
    """Per-link averaging weights over each link's m most anti-fade channels.

    Returns an (L, C) matrix whose row l holds 1/m_l on the selected
    channels (m_l = min(m, #calibrated channels of link l)) and 0
    elsewhere. Links with no calibrated channel get an all-zero row.
    """
    n_links, n_channels = fade_values.shape
    selection = np.zeros((n_links, n_channels))
    for l in range(n_links):
        fades_l = fade_values[l]
        order = np.argsort(-fades_l, kind="stable")  # NaN sorts last
        order = [c for c in order if not np.isnan(fades_l[c])]
        chosen = order[:m]
        if chosen:
            selection[l, chosen] = 1.0 / len(chosen)
    return selection


def build_pipeline(variant: str, fades: FadeLevelTable, layout: NodeLayout,
                   grid: VoxelGrid, config: PipelineConfig,
                   precision_term: np.ndarray | None = None) -> VariantPipeline:
    """Construct a ready-to-run pipeline for one variant."""
    return VariantPipeline(variant, fades, layout, grid, config,
                           precision_term=precision_term)


@dataclass(frozen=True)
class PipelineResult:
    """run_pipeline output.

    Attributes:
        variant: which estimator produced this.
        rows: track rows (k, x_hat, y_hat) or (k, x_hat, y_hat, x_true,
            y_true, error_m) when truth was given.
        summary: error statistics dict, or None without truth.
        grid: image grid used.
        channels: channel set of the calibration.
    """

    variant: str
    rows: tuple
    summary: dict | None
    grid: VoxelGrid
    channels: tuple


def run_pipeline(variant: str, frames, layout: NodeLayout,
                 config: PipelineConfig, truth: dict | None = None,
                 fades: FadeLevelTable | None = None,
                 grid: VoxelGrid | None = None) -> PipelineResult:
    """Calibrate on the trace prefix, then localize every following frame.

    Args:
        variant: one of VARIANTS.
        frames: full trace; the first config.calibration_frames frames
            must be person-free.
        layout: node deployment.
        config: pipeline configuration.
        truth: optional k -> (x, y) ground truth; adds error columns and
            summary.
        fades: skip calibration and use these fade levels (the trace
            prefix is then not consumed).
        grid: override the default node-bounding-box grid.

    Returns:
        PipelineResult; deterministic for identical inputs.
    """
    frames = list(frames)
    if fades is None:
        if len(frames) <= config.calibration_frames:
            raise ValueError(
                f"trace has {len(frames)} frames; needs more than the "
                f"{config.calibration_frames}-frame calibration prefix"
            )
        table = enumerate_links(layout)
        fades = calibrate(frames[:config.calibration_frames], table)
        frames = frames[config.calibration_frames:]
    if grid is None:
        grid = VoxelGrid.from_layout(layout, config.voxel_width,
                                     config.grid_margin)
    pipeline = build_pipeline(variant, fades, layout, grid, config)

    estimates = []
    for frame in frames:
        estimates.append(localize(pipeline.image(frame), grid, k=frame.k))

    positions = [est.xy for est in estimates]
    if config.kalman and estimates:
        r = config.kalman_r_scale * config.voxel_width**2
        track = init_track(estimates[0])
        positions = [estimates[0].xy]
        for est in estimates[1:]:
            track = kalman_step(track, est, dt=config.dt,
                                q=config.kalman_q, r=r)
            positions.append(tuple(track.position))

    rows = []
    errors = []
    for est, (x, y) in zip(estimates, positions):
        if truth is None:
            rows.append((est.k, x, y))
        elif est.k in truth:
            tx, ty = truth[est.k]
            err = localization_error((x, y), (tx, ty))
            errors.append(err)
            rows.append((est.k, x, y, tx, ty, err))
        else:
            # keep row widths uniform when truth covers only part of the run
            rows.append((est.k, x, y, float("nan"), float("nan"), float("nan")))
    return PipelineResult(
        variant=variant,
        rows=tuple(rows),
        summary=error_summary(errors) if errors else None,
        grid=grid,
        channels=tuple(int(c) for c in fades.channels),
    )


def benchmark(layout: NodeLayout, positions, seeds,
              config: PipelineConfig | None = None,
              variants=("msrti", "cdrti"),
              frames_per_position: int = 10,
              scenario_name: str = "stationary-grid",
              scenario_kwargs: dict | None = None):
    """Stationary-target benchmark over seeds and estimator variants.

    For each seed, one synthetic trace places the person at every given
    position for frames_per_position frames after a calibration prefix;
    each variant then runs on the identical trace. Expensive pieces that
    do not depend on the seed (grid, prior term, fixed-width operator) are
    shared across runs.

    Args:
        layout: sensor deployment.
        positions: iterable of (x, y) ground-truth positions.
        seeds: iterable of RNG seeds, one trace per seed.
        config: pipeline configuration (defaults if None).
        variants: estimator variants to compare.
        frames_per_position: person frames per position.
        scenario_name: label for the report rows.
        scenario_kwargs: extra ScenarioSpec fields (channels, noise_sigma,
            quantize, fade_sigma, ...).

    Returns:
        list of (variant, scenario_name, seed, summary) rows, seeds outer,
        variants inner.
    """
    if config is None:
        config = PipelineConfig()
    positions = [(float(x), float(y)) for x, y in positions]
    if not positions:
        raise ValueError("benchmark needs at least one position")
    scenario_kwargs = dict(scenario_kwargs or {})
    scenario_kwargs.setdefault("calibration_frames", config.calibration_frames)
    if scenario_kwargs["calibration_frames"] != config.calibration_frames:
        raise ValueError("scenario calibration_frames must match config")

    trajectory_parts = []
    k = config.calibration_frames
    for x, y in positions:
        trajectory_parts.append(stationary_trajectory((x, y), k, frames_per_position))
        k += frames_per_position
    trajectory = np.vstack(trajectory_parts)

    grid = VoxelGrid.from_layout(layout, config.voxel_width, config.grid_margin)
    precision_term = prior_precision_term(grid, config.reconstruction)
    table = enumerate_links(layout)

    # Baseline operators don't depend on the calibration, so build each
    # once and reuse it for every seed. The multi-scale operator must be
    # rebuilt per seed from that seed's fade levels.
    channels = tuple(scenario_kwargs.get("channels", DEFAULT_CHANNELS))
    cached = {
        v: build_operator(
            _baseline_weights(v, table, layout, grid, config, channels),
            grid, config.reconstruction, precision_term,
        )
        for v in variants if v != "msrti"
    }

    rows = []
    for seed in seeds:
        spec = ScenarioSpec(layout=layout, trajectory=trajectory,
                            seed=int(seed), **scenario_kwargs)
        trace = generate_trace(spec, ellipse=config.ellipse,
                               measurement=config.measurement)
        fades = calibrate(trace.frames[:config.calibration_frames], table)
        truth = {int(k): (x, y) for k, x, y in trace.truth}
        person_frames = trace.frames[config.calibration_frames:]
        for variant in variants:
            pipeline = VariantPipeline(variant, fades, layout, grid, config,
                                       precision_term=precision_term,
                                       operator=cached.get(variant))
            estimates = [
                localize(pipeline.image(f), grid, k=f.k) for f in person_frames
            ]
            errors = [
                localization_error(est.xy, truth[est.k]) for est in estimates
            ]
            rows.append((variant, scenario_name, int(seed),
                         error_summary(errors)))
    return rows


def crosscheck_models(ellipse: EllipseModelParams | None = None,
                      measurement: MeasurementModelParams | None = None):
    """Evaluate the five published model anchors against the defaults.

    Returns:
        (checks, passed): checks is a list of dicts with name, computed,
        expected, tolerance, and ok fields; passed is the conjunction.
    """
    if ellipse is None:
        ellipse = EllipseModelParams()
    if measurement is None:
        measurement = MeasurementModelParams()

    def prob(delta_r, fade):
        _, p = inside_probability(delta_r, fade, measurement)
        return p

    anchors = [
        ("lambda_down(F=+8)", lambda_for(8.0, DIR_DOWN, ellipse), 0.0530, 0.0005),
        ("lambda_down(F=-8)", lambda_for(-8.0, DIR_DOWN, ellipse), 0.8413, 0.0010),
        ("p(dr=-10, F=+8)", prob(-10.0, 8.0), 0.69, 0.01),
        ("p(dr=+10, F=+8)", prob(10.0, 8.0), 0.97, 0.01),
        ("p(dr=+10, F=-8)", prob(10.0, -8.0), 0.63, 0.01),
    ]
    checks = []
    for name, computed, expected, tol in anchors:
        checks.append({
            "name": name,
            "computed": float(computed),
            "expected": expected,
            "tolerance": tol,
            "ok": abs(computed - expected) <= tol,
        })
    return checks, all(c["ok"] for c in checks)
