"""Empty-room calibration: path-loss fit and per-link fade levels.

From a person-free RSS recording we fit one log-distance path-loss model
pooled over all links and channels, after removing the known per-channel
transmit-power offset. The residual of each link/channel mean against the
fitted model is its fade level: positive in anti-fade (constructive
multipath), negative in deep fade. Missing link/channel combinations stay
NaN and are excluded everywhere downstream.
"""

from dataclasses import dataclass

import numpy as np

from .geometry import LinkTable

__all__ = [
    "CHANNEL_MIN",
    "CHANNEL_MAX",
    "channel_frequency",
    "normalized_tx_power",
    "path_loss",
    "RssFrame",
    "FadeLevelTable",
    "PathLossFit",
    "calibrate",
    "calibrate_means",
]

CHANNEL_MIN = 11
CHANNEL_MAX = 26

# Measured per-channel TX power trend of the 2.4 GHz radios, linear in the
# channel number (dB).
_TX_POWER_SLOPE = 0.1452
_TX_POWER_INTERCEPT = 1.7332


def channel_frequency(channel: int) -> float:
    """Center frequency in MHz of a 2.4 GHz channel (11..26)."""
    channel = int(channel)
    if not CHANNEL_MIN <= channel <= CHANNEL_MAX:
        raise ValueError(f"channel {channel} outside [{CHANNEL_MIN}, {CHANNEL_MAX}]")
    return 2405.0 + 5.0 * (channel - 11)


def normalized_tx_power(channel: int) -> float:
    """Relative transmit power of a channel in dB, linear in channel number."""
    channel = int(channel)
    if not CHANNEL_MIN <= channel <= CHANNEL_MAX:
        raise ValueError(f"channel {channel} outside [{CHANNEL_MIN}, {CHANNEL_MAX}]")
    return _TX_POWER_SLOPE * channel + _TX_POWER_INTERCEPT


def path_loss(distance: float, channel: int, p0: float, eta: float,
              d0: float = 1.0) -> float:
    """Predicted obstruction-free RSS in dBm at a TX-RX distance.

    P(d, c) = P_T(c) - p0 - 10 eta log10(d / d0).

    Args:
        distance: TX-RX separation in meters, > 0.
        channel: channel number, used only for its TX-power offset.
        p0: reference loss at d0 in dB.
        eta: path-loss exponent.
        d0: reference distance in meters (default 1).

    Returns:
        Predicted RSS in dBm.
    """
    if distance <= 0:
        raise ValueError("distance must be > 0")
    if d0 <= 0:
        raise ValueError("reference distance d0 must be > 0")
    return normalized_tx_power(channel) - p0 - 10.0 * eta * np.log10(distance / d0)


@dataclass(frozen=True)
class RssFrame:
    """One synchronized RSS snapshot across all links and channels.

    Attributes:
        k: time index.
        rss: (L, C) RSS in dBm; NaN marks a missing sample.
        channels: (C,) channel numbers, strictly ascending, within 11..26.
    """

    k: int
    rss: np.ndarray
    channels: np.ndarray

    def __post_init__(self):
        rss = np.asarray(self.rss, dtype=float)
        channels = np.asarray(self.channels, dtype=int)
        if rss.ndim != 2 or rss.shape[1] != channels.size:
            raise ValueError("rss must be (L, C) matching channels")
        if channels.size and (channels.min() < CHANNEL_MIN or channels.max() > CHANNEL_MAX):
            raise ValueError(f"channels must lie in [{CHANNEL_MIN}, {CHANNEL_MAX}]")
        if np.any(np.diff(channels) <= 0):
            raise ValueError("channels must be strictly ascending")
        if np.any(np.isinf(rss)):
            raise ValueError("rss values must be finite or NaN")
        object.__setattr__(self, "rss", rss)
        object.__setattr__(self, "channels", channels)
        object.__setattr__(self, "k", int(self.k))

    def value(self, link: int, channel: int) -> float:
        """RSS of one (link, channel); NaN if missing."""
        col = np.nonzero(self.channels == int(channel))[0]
        if col.size == 0:
            raise KeyError(f"channel {channel} not in frame")
        return float(self.rss[link, col[0]])


@dataclass(frozen=True)
class PathLossFit:
    """Fitted log-distance model parameters.

    Attributes:
        p0: reference loss at d0 in dB.
        eta: path-loss exponent.
        d0: reference distance in meters.
        n_pairs: number of (link, channel) means that entered the fit.
        rmse: root-mean-square residual of the fit in dB.
    """

    p0: float
    eta: float
    d0: float
    n_pairs: int
    rmse: float

    def predict(self, distance, channel: int):
        """Vectorized path-loss prediction for one channel."""
        distance = np.asarray(distance, dtype=float)
        if np.any(distance <= 0):
            raise ValueError("distance must be > 0")
        return (normalized_tx_power(channel) - self.p0
                - 10.0 * self.eta * np.log10(distance / self.d0))


@dataclass(frozen=True)
class FadeLevelTable:
    """Per-(link, channel) fade levels from an empty-room recording.

    Attributes:
        values: (L, C) fade levels in dB; NaN marks never-observed pairs.
        mean_rss: (L, C) empty-room mean RSS in dBm, NaN where unobserved.
        channels: (C,) channel numbers, ascending.
        fit: the pooled path-loss fit the fade levels are residuals of.
    """

    values: np.ndarray
    mean_rss: np.ndarray
    channels: np.ndarray
    fit: PathLossFit

    def __post_init__(self):
        if self.values.shape != self.mean_rss.shape:
            raise ValueError("values and mean_rss must have matching shapes")
        if self.values.shape[1] != self.channels.size:
            raise ValueError("channel axis mismatch")

    @property
    def n_links(self) -> int:
        return self.values.shape[0]

    def channel_column(self, channel: int) -> int:
        cols = np.nonzero(self.channels == int(channel))[0]
        if cols.size == 0:
            raise KeyError(f"channel {channel} not in fade table")
        return int(cols[0])

    def fade_level(self, link: int, channel: int) -> float:
        """Fade level of one link on one channel (NaN if unobserved)."""
        return float(self.values[link, self.channel_column(channel)])

    def observed(self) -> np.ndarray:
        """(L, C) boolean mask of link/channel pairs that were measured."""
        return ~np.isnan(self.values)


def calibrate(frames, table: LinkTable, d0: float = 1.0) -> FadeLevelTable:
    """Calibrate from an empty-room recording.

    Averages each (link, channel)'s available samples across frames, then
    fits the pooled path-loss model (see calibrate_means). Pairs with zero
    samples stay NaN and are excluded downstream.

    Args:
        frames: iterable of RssFrame, all sharing one channel set.
        table: link table supplying per-link distances.
        d0: reference distance in meters.

    Returns:
        FadeLevelTable.

    Raises:
        ValueError: no frames, inconsistent channel sets or frame shapes,
            or any condition calibrate_means rejects.
    """
    frames = list(frames)
    if not frames:
        raise ValueError("calibration needs at least one frame")
    channels = frames[0].channels
    shape = (table.n_links, channels.size)
    total = np.zeros(shape)
    count = np.zeros(shape, dtype=np.int64)
    for f in frames:
        if not np.array_equal(f.channels, channels):
            raise ValueError(f"frame {f.k}: channel set differs across frames")
        if f.rss.shape != shape:
            raise ValueError(
                f"frame {f.k}: rss shape {f.rss.shape} != expected {shape}"
            )
        present = ~np.isnan(f.rss)
        total[present] += f.rss[present]
        count += present
    with np.errstate(invalid="ignore"):
        mean = np.where(count > 0, total / np.maximum(count, 1), np.nan)
    return calibrate_means(mean, channels, table, d0=d0)


def calibrate_means(mean_rss: np.ndarray, channels, table: LinkTable,
                    d0: float = 1.0) -> FadeLevelTable:
    """Fit the pooled path-loss model and derive fade levels.

    The fit removes the known TX-power offset P_T(c) from each mean and
    regresses the remainder on -10 log10(d / d0) with an intercept, pooling
    every observed (link, channel) pair into one ordinary least-squares
    problem. Slope is eta, negated intercept is p0. Fade levels are then
    F = mean_rss - P(d, c).

    Args:
        mean_rss: (L, C) empty-room mean RSS in dBm; NaN = unobserved.
        channels: (C,) channel numbers matching the columns.
        table: link table supplying per-link distances.
        d0: reference distance in meters.

    Returns:
        FadeLevelTable with fitted model and residual fade levels.

    Raises:
        ValueError: shape mismatch, < 2 observed pairs, or degenerate
            distance spread (all links the same length).
    """
    mean_rss = np.asarray(mean_rss, dtype=float)
    channels = np.asarray(channels, dtype=int)
    if mean_rss.ndim != 2 or mean_rss.shape[0] != table.n_links:
        raise ValueError(
            f"mean_rss must be (L, C) with L={table.n_links}, got {mean_rss.shape}"
        )
    if mean_rss.shape[1] != channels.size:
        raise ValueError("mean_rss columns must match channels")
    if np.any(np.diff(channels) <= 0):
        raise ValueError("channels must be strictly ascending")
    if d0 <= 0:
        raise ValueError("reference distance d0 must be > 0")

    tx_power = np.array([normalized_tx_power(c) for c in channels])
    log_term = -10.0 * np.log10(table.lengths / d0)  # (L,)

    mask = ~np.isnan(mean_rss)
    n_pairs = int(mask.sum())
    if n_pairs < 2:
        raise ValueError(f"need at least 2 observed (link, channel) pairs, got {n_pairs}")

    # y = mean - P_T(c) = -p0 + eta * log_term, solved by least squares.
    y = (mean_rss - tx_power[None, :])[mask]
    x = np.broadcast_to(log_term[:, None], mean_rss.shape)[mask]
    if np.ptp(x) < 1e-12:
        raise ValueError("cannot fit path loss: all observed links share one length")
    eta, neg_p0 = np.polyfit(x, y, 1)
    p0 = -neg_p0

    predicted = (tx_power[None, :] - p0 + eta * log_term[:, None])
    residual = mean_rss - predicted
    rmse = float(np.sqrt(np.mean(residual[mask] ** 2)))
    fade = np.where(mask, residual, np.nan)
    return FadeLevelTable(
        values=fade,
        mean_rss=mean_rss.copy(),
        channels=channels,
        fit=PathLossFit(p0=float(p0), eta=float(eta), d0=float(d0),
                        n_pairs=n_pairs, rmse=rmse),
    )
