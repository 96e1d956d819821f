"""RSS changes to ellipse-occupancy probabilities and stacked measurements.

Each (link, channel) RSS change Δr is mapped to the probability that the
person is inside the corresponding direction-dependent ellipse:
p = 1 − exp(−β^δ |Δr|), where the loss-direction rate β⁻ is constant and
the gain-direction rate β⁺ grows with fade level. Probabilities are then
stacked into the measurement vector matching the multi-scale weight-matrix
row order, with the non-matching direction slot left at zero.
"""

from dataclasses import dataclass

import numpy as np

from .calibration import FadeLevelTable, RssFrame
from .spatial_model import DIR_DOWN, DIR_UP, WeightMatrix

__all__ = [
    "MeasurementModelParams",
    "HoldBuffer",
    "MeasurementAssembler",
    "beta_plus",
    "inside_probability",
    "rss_change",
    "assemble_measurement",
]


@dataclass(frozen=True)
class MeasurementModelParams:
    """Probability-model rates plus frame-handling policy knobs.

    Attributes:
        beta_minus: decay rate for RSS loss, 1/dB (fade-level independent).
        k_beta_plus: fade-level shape of the gain-direction rate, dB.
        b_beta_plus: gain-direction rate at F = 0, 1/dB.
        hold_frames: missing samples repeat the last Δr for at most this
            many consecutive frames, then count as 0.
        dead_zone_db: |Δr| at or below this threshold contributes nothing
            (0 disables thresholding; the exponential model already
            suppresses small changes smoothly).
    """

    beta_minus: float = 0.1172
    k_beta_plus: float = 13.0018
    b_beta_plus: float = 0.1839
    hold_frames: int = 5
    dead_zone_db: float = 0.0

    def __post_init__(self):
        if self.beta_minus <= 0 or self.k_beta_plus <= 0 or self.b_beta_plus <= 0:
            raise ValueError("rate parameters must be strictly positive")
        if self.hold_frames < 0:
            raise ValueError("hold_frames must be >= 0")
        if self.dead_zone_db < 0:
            raise ValueError("dead_zone_db must be >= 0")


def beta_plus(fade_level: float, params: MeasurementModelParams) -> float:
    """Gain-direction decay rate in 1/dB: b_β⁺ · exp(F / k_β⁺)."""
    if not np.isfinite(fade_level):
        raise ValueError("fade level must be finite")
    return params.b_beta_plus * np.exp(fade_level / params.k_beta_plus)


def inside_probability(delta_r: float, fade_level: float,
                       params: MeasurementModelParams) -> tuple[str, float]:
    """Direction and in-ellipse probability for one RSS change.

    Args:
        delta_r: RSS change in dB, finite.
        fade_level: calibrated fade level of the pair, finite.
        params: model parameters.

    Returns:
        (direction, probability): direction is "+" for Δr > 0 and "-"
        otherwise; probability is 1 − exp(−β^δ |Δr|), which is 0 at
        Δr = 0 and within the dead zone (direction then "-" by
        convention; both slots would be zero either way).
    """
    if not np.isfinite(delta_r):
        raise ValueError("delta_r must be finite")
    mag = abs(delta_r)
    if mag <= params.dead_zone_db or delta_r == 0.0:
        return DIR_DOWN, 0.0
    if delta_r > 0:
        rate = beta_plus(fade_level, params)
        return DIR_UP, 1.0 - np.exp(-rate * mag)
    return DIR_DOWN, 1.0 - np.exp(-params.beta_minus * mag)


class HoldBuffer:
    """Per-pipeline missing-sample state for the hold policy.

    Tracks the last observed Δr and the consecutive-miss count for every
    calibrated (link, channel). One buffer belongs to exactly one
    sequential pass over a trace.
    """

    def __init__(self, n_links: int, n_channels: int, hold_frames: int = 5):
        if hold_frames < 0:
            raise ValueError("hold_frames must be >= 0")
        self.hold_frames = int(hold_frames)
        self._last = np.full((n_links, n_channels), np.nan)
        self._missed = np.zeros((n_links, n_channels), dtype=np.int64)

    def update(self, delta_obs: np.ndarray, calibrated: np.ndarray) -> np.ndarray:
        """Fill gaps in one frame's Δr and advance the hold state.

        Args:
            delta_obs: (L, C) observed Δr, NaN where the sample is missing.
            calibrated: (L, C) bool mask of pairs with calibration.

        Returns:
            (L, C) Δr with gaps filled: held value while within the hold
            window, 0 after it expires or with no history; NaN only on
            uncalibrated pairs.
        """
        if delta_obs.shape != self._last.shape:
            raise ValueError(
                f"expected shape {self._last.shape}, got {delta_obs.shape}"
            )
        out = np.where(calibrated, delta_obs, np.nan)
        fresh = calibrated & ~np.isnan(delta_obs)
        gap = calibrated & np.isnan(delta_obs)
        self._missed[fresh] = 0
        self._missed[gap] += 1
        held = gap & (self._missed <= self.hold_frames) & ~np.isnan(self._last)
        out[held] = self._last[held]
        out[gap & ~held] = 0.0
        self._last[fresh] = delta_obs[fresh]
        return out


def rss_change(frame: RssFrame, fades: FadeLevelTable,
               hold: HoldBuffer | None = None) -> np.ndarray:
    """Per-(link, channel) RSS change relative to the empty-room mean.

    Args:
        frame: current snapshot; channel set must match the fade table.
        fades: calibration result supplying the baselines.
        hold: optional hold-policy state; without it missing samples of
            calibrated pairs count as Δr = 0 immediately.

    Returns:
        (L, C) Δr in dB; NaN exactly on uncalibrated pairs.
    """
    if not np.array_equal(frame.channels, fades.channels):
        raise ValueError("frame channel set does not match fade table")
    if frame.rss.shape != fades.mean_rss.shape:
        raise ValueError(
            f"frame rss shape {frame.rss.shape} != fade table "
            f"{fades.mean_rss.shape}"
        )
    delta_obs = frame.rss - fades.mean_rss
    calibrated = fades.observed()
    if hold is not None:
        return hold.update(delta_obs, calibrated)
    out = np.where(calibrated, delta_obs, np.nan)
    out[calibrated & np.isnan(delta_obs)] = 0.0
    return out


class MeasurementAssembler:
    """Maps frames to measurement vectors aligned with a weight matrix.

    Precomputes, once, the (link, channel-column, direction) lookup for
    every weight row so per-frame assembly is pure array indexing.
    """

    def __init__(self, fades: FadeLevelTable, params: MeasurementModelParams,
                 weights: WeightMatrix):
        self.fades = fades
        self.params = params
        self.weights = weights
        col_of = {int(c): i for i, c in enumerate(fades.channels)}
        n = weights.n_rows
        self._links = np.empty(n, dtype=np.int64)
        self._cols = np.empty(n, dtype=np.int64)
        self._is_up = np.empty(n, dtype=bool)
        for r, key in enumerate(weights.row_keys):
            if not (isinstance(key, tuple) and len(key) == 3):
                raise ValueError(
                    "weights must be a multi-scale matrix keyed by "
                    "(channel, link, direction)"
                )
            channel, link, direction = key
            self._links[r] = link
            self._cols[r] = col_of[int(channel)]
            self._is_up[r] = direction == DIR_UP
        # fade-dependent gain rate, fixed per (link, channel)
        with np.errstate(invalid="ignore"):
            self._beta_up = params.b_beta_plus * np.exp(
                fades.values / params.k_beta_plus
            )

    def __call__(self, frame: RssFrame,
                 hold: HoldBuffer | None = None) -> np.ndarray:
        """Measurement vector for one frame, same length/order as W rows."""
        delta = rss_change(frame, self.fades, hold)
        mag = np.abs(delta)
        active = mag > self.params.dead_zone_db
        with np.errstate(invalid="ignore"):
            p_up = np.where(
                (delta > 0) & active,
                1.0 - np.exp(-self._beta_up * mag), 0.0,
            )
            p_down = np.where(
                (delta < 0) & active,
                1.0 - np.exp(-self.params.beta_minus * mag), 0.0,
            )
        return np.where(
            self._is_up,
            p_up[self._links, self._cols],
            p_down[self._links, self._cols],
        )


def assemble_measurement(frame: RssFrame, fades: FadeLevelTable,
                         params: MeasurementModelParams,
                         weights: WeightMatrix,
                         hold: HoldBuffer | None = None) -> np.ndarray:
    """One-shot measurement assembly (see MeasurementAssembler).

    Returns:
        (rows,) vector of probabilities in [0, 1); the entry at row
        (c, l, δ) is the in-ellipse probability when δ matches the sign of
        Δr_cl, 0 otherwise.
    """
    return MeasurementAssembler(fades, params, weights)(frame, hold)
