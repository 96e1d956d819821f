"""Calibration: channel map, TX power, path-loss fit, fade levels."""

import numpy as np
import pytest

from rtikit.calibration import (
    FadeLevelTable,
    RssFrame,
    calibrate,
    calibrate_means,
    channel_frequency,
    normalized_tx_power,
    path_loss,
)
from rtikit.geometry import NodeLayout, enumerate_links


def ring_layout(n=8, radius=4.0):
    ids = np.arange(1, n + 1)
    ang = 2 * np.pi * np.arange(n) / n
    return NodeLayout(ids=ids, xy=radius * np.column_stack((np.cos(ang), np.sin(ang))))


def test_channel_frequency_endpoints():
    assert channel_frequency(11) == 2405.0
    assert channel_frequency(26) == 2480.0
    assert channel_frequency(12) == 2410.0
    for bad in (10, 27, 0):
        with pytest.raises(ValueError):
            channel_frequency(bad)


def test_normalized_tx_power():
    assert normalized_tx_power(11) == pytest.approx(3.3304)
    assert normalized_tx_power(26) == pytest.approx(5.5084)
    # monotone increasing over the band
    powers = [normalized_tx_power(c) for c in range(11, 27)]
    assert all(b > a for a, b in zip(powers, powers[1:]))
    with pytest.raises(ValueError):
        normalized_tx_power(27)


def test_path_loss_shape():
    # halving log-distance slope: doubling d drops RSS by 10*eta*log10(2)
    base = path_loss(2.0, 11, p0=40.0, eta=2.3)
    assert path_loss(4.0, 11, p0=40.0, eta=2.3) == pytest.approx(
        base - 10 * 2.3 * np.log10(2)
    )
    assert path_loss(1.0, 11, p0=40.0, eta=2.3) == pytest.approx(
        normalized_tx_power(11) - 40.0
    )
    with pytest.raises(ValueError):
        path_loss(0.0, 11, p0=40.0, eta=2.3)


def test_calibrate_recovers_exact_model():
    # Synthetic means built from a known model must be recovered exactly.
    layout = ring_layout()
    table = enumerate_links(layout)
    channels = np.arange(11, 27)
    p0_true, eta_true = 38.5, 2.17
    mean = np.empty((table.n_links, channels.size))
    for ci, c in enumerate(channels):
        mean[:, ci] = [path_loss(d, c, p0_true, eta_true) for d in table.lengths]
    fades = calibrate_means(mean, channels, table)
    assert fades.fit.p0 == pytest.approx(p0_true, abs=1e-9)
    assert fades.fit.eta == pytest.approx(eta_true, abs=1e-9)
    assert fades.fit.rmse == pytest.approx(0.0, abs=1e-9)
    assert np.allclose(fades.values, 0.0, atol=1e-9)
    assert fades.fit.n_pairs == table.n_links * channels.size


def test_calibrate_matches_lstsq_oracle_with_noise():
    # With noisy means the fit must equal the explicit normal-equations
    # solution of the pooled regression.
    rng = np.random.default_rng(42)
    layout = ring_layout(10)
    table = enumerate_links(layout)
    channels = np.arange(11, 19)
    mean = np.empty((table.n_links, channels.size))
    for ci, c in enumerate(channels):
        mean[:, ci] = [path_loss(d, c, 40.0, 2.0) for d in table.lengths]
    mean += rng.normal(0, 3.0, size=mean.shape)

    fades = calibrate_means(mean, channels, table)

    tx = np.array([normalized_tx_power(c) for c in channels])
    logd = -10.0 * np.log10(table.lengths)
    rows = []
    ys = []
    for l in range(table.n_links):
        for ci in range(channels.size):
            rows.append([logd[l], 1.0])
            ys.append(mean[l, ci] - tx[ci])
    coef, *_ = np.linalg.lstsq(np.array(rows), np.array(ys), rcond=None)
    assert fades.fit.eta == pytest.approx(coef[0], abs=1e-8)
    assert fades.fit.p0 == pytest.approx(-coef[1], abs=1e-8)
    # residual definition: F = mean - P(d, c)
    pred01 = fades.fit.predict(table.lengths[0], channels[1])
    assert fades.values[0, 1] == pytest.approx(mean[0, 1] - pred01, abs=1e-9)


def test_calibrate_offsets_shift_fades_not_fit_balance():
    # A fade offset pattern with zero mean per distance bucket leaves the
    # fitted slope near truth and shows up in the residuals.
    layout = ring_layout()
    table = enumerate_links(layout)
    channels = np.arange(11, 27)
    mean = np.empty((table.n_links, channels.size))
    for ci, c in enumerate(channels):
        mean[:, ci] = [path_loss(d, c, 40.0, 2.0) for d in table.lengths]
    la, lb = table.link_index(1, 2), table.link_index(2, 3)  # both adjacent
    assert table.lengths[la] == pytest.approx(table.lengths[lb])
    offsets = np.zeros(table.n_links)
    offsets[la], offsets[lb] = +6.0, -6.0  # equal lengths: balanced
    mean += offsets[:, None]
    fades = calibrate_means(mean, channels, table)
    assert fades.values[la, 0] - fades.values[lb, 0] == pytest.approx(12.0, abs=1e-6)


def test_calibrate_nan_handling():
    layout = ring_layout()
    table = enumerate_links(layout)
    channels = np.arange(11, 15)
    mean = np.empty((table.n_links, channels.size))
    for ci, c in enumerate(channels):
        mean[:, ci] = [path_loss(d, c, 40.0, 2.0) for d in table.lengths]
    mean[3, :] = np.nan
    mean[5, 2] = np.nan
    fades = calibrate_means(mean, channels, table)
    assert np.all(np.isnan(fades.values[3, :]))
    assert np.isnan(fades.values[5, 2])
    assert fades.fit.n_pairs == table.n_links * channels.size - channels.size - 1
    assert fades.fit.p0 == pytest.approx(40.0, abs=1e-9)
    obs = fades.observed()
    assert not obs[3, 0] and obs[5, 1]


def test_calibrate_errors():
    layout = ring_layout()
    table = enumerate_links(layout)
    channels = np.arange(11, 15)
    with pytest.raises(ValueError):
        calibrate_means(np.zeros((3, channels.size)), channels, table)
    full = np.full((table.n_links, channels.size), np.nan)
    with pytest.raises(ValueError):
        calibrate_means(full, channels, table)
    # all same distance -> slope unidentifiable
    ids = np.array([1, 2, 3, 4])
    sq = NodeLayout(ids=ids, xy=np.array([[0, 0], [1, 0], [0.5, 2], [0.5, -2]], dtype=float))
    pairs = [(1, 2), (3, 4)]  # lengths 1 and 4 -> fine; now degenerate:
    tbl = enumerate_links(sq, mode="explicit_list", pairs=[(1, 2)])
    one = np.array([[path_loss(1.0, c, 40.0, 2.0) for c in channels]])
    with pytest.raises(ValueError):
        calibrate_means(one, channels, tbl)
    # non-ascending channels rejected
    tbl2 = enumerate_links(sq, mode="explicit_list", pairs=pairs)
    with pytest.raises(ValueError):
        calibrate_means(np.zeros((2, 4)), np.array([14, 13, 12, 11]), tbl2)


def test_calibrate_from_frames_matches_means_path():
    # Frame-based calibration must equal calibrating the per-pair means,
    # with missing samples simply left out of each average.
    rng = np.random.default_rng(5)
    layout = ring_layout()
    table = enumerate_links(layout)
    channels = np.arange(11, 15)
    base = np.empty((table.n_links, channels.size))
    for ci, c in enumerate(channels):
        base[:, ci] = [path_loss(d, c, 40.0, 2.0) for d in table.lengths]
    frames = []
    for k in range(30):
        rss = base + rng.normal(0, 2.0, size=base.shape)
        if k % 3 == 0:
            rss[1, 2] = np.nan  # drop one pair in a third of the frames
        frames.append(RssFrame(k=k, rss=rss, channels=channels))
    fades = calibrate(frames, table)

    count = np.full(base.shape, 30.0)
    count[1, 2] = 20.0
    total = np.zeros(base.shape)
    for f in frames:
        total += np.where(np.isnan(f.rss), 0.0, f.rss)
    expect = calibrate_means(total / count, channels, table)
    assert fades.fit.p0 == pytest.approx(expect.fit.p0, abs=1e-12)
    assert fades.fit.eta == pytest.approx(expect.fit.eta, abs=1e-12)
    np.testing.assert_allclose(fades.values, expect.values, atol=1e-12)


def test_calibrate_frames_never_observed_pair_is_nan():
    layout = ring_layout()
    table = enumerate_links(layout)
    channels = np.arange(11, 13)
    base = np.empty((table.n_links, channels.size))
    for ci, c in enumerate(channels):
        base[:, ci] = [path_loss(d, c, 40.0, 2.0) for d in table.lengths]
    frames = []
    for k in range(5):
        rss = base.copy()
        rss[2, 0] = np.nan
        frames.append(RssFrame(k=k, rss=rss, channels=channels))
    fades = calibrate(frames, table)
    assert np.isnan(fades.values[2, 0])
    assert not np.isnan(fades.values[2, 1])
    with pytest.raises(ValueError):
        calibrate([], table)
    bad = [RssFrame(k=0, rss=base, channels=channels),
           RssFrame(k=1, rss=base[:, :1], channels=channels[:1])]
    with pytest.raises(ValueError):
        calibrate(bad, table)


def test_rss_frame_validation():
    channels = np.array([11, 12])
    frame = RssFrame(k=3, rss=np.array([[-50.0, np.nan]]), channels=channels)
    assert frame.value(0, 11) == -50.0
    assert np.isnan(frame.value(0, 12))
    with pytest.raises(KeyError):
        frame.value(0, 13)
    with pytest.raises(ValueError):
        RssFrame(k=0, rss=np.zeros((2, 2)), channels=np.array([10, 11]))
    with pytest.raises(ValueError):
        RssFrame(k=0, rss=np.zeros((2, 2)), channels=np.array([12, 11]))
    with pytest.raises(ValueError):
        RssFrame(k=0, rss=np.array([[np.inf, 0.0]]), channels=channels)


def test_fade_table_lookup():
    layout = ring_layout()
    table = enumerate_links(layout)
    channels = np.arange(11, 27)
    mean = np.empty((table.n_links, channels.size))
    for ci, c in enumerate(channels):
        mean[:, ci] = [path_loss(d, c, 40.0, 2.0) for d in table.lengths]
    fades = calibrate_means(mean, channels, table)
    assert fades.channel_column(11) == 0
    assert fades.channel_column(26) == 15
    assert fades.fade_level(0, 11) == pytest.approx(0.0, abs=1e-9)
    with pytest.raises(KeyError):
        fades.channel_column(27)
