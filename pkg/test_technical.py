#!/usr/bin/env python3
"""
lobfeat - Technical indicator tests
"""

from collections import Counter

import numpy as np
import pytest

from lobfeat.config import TechnicalConfig
from lobfeat.lob_core import derive_bar, segment_blocks
from lobfeat.technical import (
    BarSeries,
    channel_band_family,
    ema,
    moving_average_family,
    oscillator_family,
    regression_filter_family,
    rsi,
    savgol_weights,
    sma,
    technical_feature_matrix,
    technical_feature_names,
    wilder,
    wma,
    zero_phase,
)


def test_family_widths():
    names = technical_feature_names()
    assert len(names) == 83
    assert Counter(f for _, f in names) == {
        "moving_average": 10, "oscillator": 24, "channel_band": 39, "regression_filter": 10,
    }


def test_sma_and_seeded_ema():
    x = np.arange(1.0, 6.0)
    np.testing.assert_allclose(sma(x, 2), [np.nan, 1.5, 2.5, 3.5, 4.5])
    np.testing.assert_allclose(ema(x[:4], 2), [np.nan, 1.5, 2.5, 3.5])
    np.testing.assert_allclose(wilder(np.full(6, 4.0), 3), [np.nan, np.nan, 4.0, 4.0, 4.0, 4.0])


def test_window_must_be_positive():
    with pytest.raises(ValueError):
        sma(np.ones(3), 0)


def test_rsi_extremes():
    rising = np.arange(30, dtype=np.float64)
    assert rsi(rising, 14)[-1] == pytest.approx(100.0)
    assert rsi(np.full(30, 5.0), 14)[-1] == pytest.approx(50.0)


def test_flat_window_oscillators_are_neutral():
    flat = np.full(60, 10.0)
    bars = BarSeries.from_arrays(flat, flat, flat, flat, np.ones(60))
    values = oscillator_family(bars)
    assert values["williams_r"][-1] == pytest.approx(-50.0)
    assert values["stoch_rsi"][-1] == pytest.approx(0.5)
    assert values["cmo"][-1] == pytest.approx(0.0)


def test_aroon_up_on_new_highs():
    rising = np.arange(50, dtype=np.float64)
    bars = BarSeries.from_arrays(rising, rising + 1, rising - 1, rising, np.ones(50))
    assert oscillator_family(bars)["aroon_up"][-1] == pytest.approx(100.0)


def test_savgol_weights_reproduce_cubic():
    weights = savgol_weights(9, 3, 8)
    assert weights.sum() == pytest.approx(1.0)
    t = np.arange(9, dtype=np.float64)
    cubic = 0.5 * t ** 3 - 2.0 * t ** 2 + t + 4.0
    assert weights @ cubic == pytest.approx(cubic[-1])


def test_savgol_rejects_underdetermined_fit():
    with pytest.raises(ValueError):
        savgol_weights(3, 5, 2)


def test_zero_phase_keeps_constants():
    np.testing.assert_allclose(zero_phase(np.full(10, 3.0)), 3.0, rtol=1e-6)


def test_matrix_finite_after_warm_up(random_bars):
    matrix = technical_feature_matrix(random_bars)
    assert matrix.shape == (300, 83)
    assert np.all(np.isfinite(matrix[120:]))
    assert np.isnan(matrix[0]).any()


def test_dpo_variant_switch(random_bars):
    default = oscillator_family(random_bars)["dpo"]
    standard = oscillator_family(random_bars, TechnicalConfig(dpo_standard=True))["dpo"]
    assert not np.allclose(default[50:], standard[50:])


def _flat_bars(value: float = 10.0, n: int = 80) -> BarSeries:
    flat = np.full(n, value)
    return BarSeries.from_arrays(flat, flat, flat, flat, np.ones(n))


def test_wma_weights_recent_values_more():
    np.testing.assert_allclose(wma([1.0, 2.0, 3.0], 3), [np.nan, np.nan, 14.0 / 6.0])


def test_moving_averages_of_a_constant():
    values = moving_average_family(_flat_bars())
    for name, series in values.items():
        assert series[-1] == pytest.approx(10.0), name


def test_dema_lags_less_than_ema_on_a_ramp():
    ramp = np.arange(100, dtype=np.float64)
    bars = BarSeries.from_arrays(ramp, ramp, ramp, ramp, np.ones(100))
    dema = moving_average_family(bars)["dema"]
    assert abs(dema[-1] - ramp[-1]) < abs(ema(ramp, 20)[-1] - ramp[-1])


def test_bands_collapse_on_a_constant():
    values = channel_band_family(_flat_bars())
    for name in ("bollinger_upper", "bollinger_lower", "keltner_upper", "donchian_middle", "heikin_ashi_close"):
        assert values[name][-1] == pytest.approx(10.0), name
    assert values["atr"][-1] == pytest.approx(0.0)
    assert values["internal_bar_strength"][-1] == pytest.approx(0.5)
    assert len(values) == 39


def test_regression_filters_on_a_line():
    line = 2.0 * np.arange(40, dtype=np.float64) + 5.0
    bars = BarSeries.from_arrays(line, line, line, line, np.ones(40))
    values = regression_filter_family(bars)
    assert values["lrl_slope"][-1] == pytest.approx(2.0)
    assert values["lrl_r"][-1] == pytest.approx(1.0)
    assert values["detrend"][-1] == pytest.approx(0.0, abs=1e-9)
    assert values["remove_offset"][-1] == pytest.approx(9.0)
    assert values["savitzky_golay"][-1] == pytest.approx(line[-1])
    assert np.isnan(values["lrl_slope"][8])


def test_bar_series_from_single_bars(stream, block_series):
    events, book = stream
    bars = [derive_bar(block) for block in segment_blocks(events, book)]
    from_bars = BarSeries.from_bars(bars)
    from_blocks = BarSeries.from_blocks(block_series)
    np.testing.assert_allclose(from_bars.close, from_blocks.close)
    np.testing.assert_allclose(from_bars.high, from_blocks.high)
    np.testing.assert_array_equal(from_bars.volume, from_blocks.volume)


def test_indicator_windows_come_from_config(random_bars):
    tuned = TechnicalConfig(rsi_window=7, bollinger_window=10, ichimoku_windows=(5, 10, 20))
    assert technical_feature_names(tuned) == technical_feature_names()
    assert technical_feature_matrix(random_bars, tuned).shape == (300, 83)

    np.testing.assert_allclose(oscillator_family(random_bars, tuned)["rsi"], rsi(random_bars.close, 7))
    default = channel_band_family(random_bars)
    bands = channel_band_family(random_bars, tuned)
    np.testing.assert_allclose(bands["bollinger_middle"], sma(random_bars.close, 10))
    assert not np.allclose(bands["ichimoku_span_b"][60:], default["ichimoku_span_b"][60:])
    np.testing.assert_allclose(bands["keltner_upper"], default["keltner_upper"])


def test_nonpositive_window_is_a_config_error(tmp_path):
    from lobfeat.config import LobfeatConfig, get_config
    from lobfeat.errors import ConfigError

    with pytest.raises(ConfigError):
        LobfeatConfig(technical=TechnicalConfig(aroon_window=0))
    path = tmp_path / "windows.toml"
    path.write_text("[technical]\nichimoku_windows = [5, 10, 20]\nrsi_window = 9\n")
    config = get_config(str(path))
    assert config.technical.ichimoku_windows == (5, 10, 20)
    assert config.technical.rsi_window == 9


# ---------------------------------------------------------------------------
# loop-based reference implementations


def _walk(n: int, seed: int) -> BarSeries:
    rng = np.random.default_rng(seed)
    close = 50.0 + np.cumsum(rng.normal(0.0, 0.5, n))
    open_ = np.r_[close[0], close[:-1]]
    high = np.maximum(open_, close) + rng.uniform(0.05, 0.5, n)
    low = np.minimum(open_, close) - rng.uniform(0.05, 0.5, n)
    return BarSeries.from_arrays(open_, high, low, close, rng.integers(1, 100, n))


def _loop_recursive(x, n, alpha):
    out = np.full(len(x), np.nan)
    start = next(i for i, v in enumerate(x) if not np.isnan(v))
    out[start + n - 1] = np.mean(x[start:start + n])
    for t in range(start + n, len(x)):
        out[t] = alpha * x[t] + (1.0 - alpha) * out[t - 1]
    return out


def test_moving_averages_match_loops():
    bars = _walk(200, 21)
    c = bars.close
    expected_sma = [np.nan] * 9 + [np.mean(c[t - 9:t + 1]) for t in range(9, 200)]
    np.testing.assert_allclose(sma(c, 10), expected_sma)
    np.testing.assert_allclose(ema(c, 10), _loop_recursive(c, 10, 2.0 / 11))
    weights = np.arange(1, 6)
    expected_wma = [np.nan] * 4 + [c[t - 4:t + 1] @ weights / 15.0 for t in range(4, 200)]
    np.testing.assert_allclose(wma(c, 5), expected_wma)


def test_oscillators_match_loops():
    bars = _walk(200, 22)
    c, h, l = bars.close, bars.high, bars.low
    values = oscillator_family(bars)

    expected_rsi = np.full(200, np.nan)
    expected_williams = np.full(200, np.nan)
    expected_aroon = np.full(200, np.nan)
    for t in range(200):
        if t >= 14:
            diffs = np.diff(c[t - 14:t + 1])
            gains, losses = diffs[diffs > 0].sum(), -diffs[diffs < 0].sum()
            expected_rsi[t] = 100.0 * gains / (gains + losses)
        if t >= 13:
            hh, ll = h[t - 13:t + 1].max(), l[t - 13:t + 1].min()
            expected_williams[t] = -100.0 * (hh - c[t]) / (hh - ll)
        if t >= 19:
            window = h[t - 19:t + 1]
            since = 19 - max(i for i in range(20) if window[i] == window.max())
            expected_aroon[t] = (20 - since) / 20 * 100.0
    np.testing.assert_allclose(values["rsi"], expected_rsi)
    np.testing.assert_allclose(values["williams_r"], expected_williams)
    np.testing.assert_allclose(values["aroon_up"], expected_aroon)


def test_channels_match_loops():
    bars = _walk(200, 23)
    c, h, l = bars.close, bars.high, bars.low
    values = channel_band_family(bars)

    upper = [np.nan] * 19 + [np.mean(c[t - 19:t + 1]) + 2.0 * np.std(c[t - 19:t + 1]) for t in range(19, 200)]
    np.testing.assert_allclose(values["bollinger_upper"], upper)

    tr = np.full(200, np.nan)
    for t in range(1, 200):
        tr[t] = max(h[t] - l[t], abs(h[t] - c[t - 1]), abs(l[t] - c[t - 1]))
    np.testing.assert_allclose(values["atr"], _loop_recursive(tr, 14, 1.0 / 14))

    span_b = [np.nan] * 51 + [(h[t - 51:t + 1].max() + l[t - 51:t + 1].min()) / 2.0 for t in range(51, 200)]
    np.testing.assert_allclose(values["ichimoku_span_b"], span_b)


def test_oscillators_ignore_price_scale_and_offset():
    bars = _walk(200, 24)
    moved = BarSeries.from_arrays(2.0 * bars.open + 5.0, 2.0 * bars.high + 5.0, 2.0 * bars.low + 5.0,
                                  2.0 * bars.close + 5.0, bars.volume)
    before, after = oscillator_family(bars), oscillator_family(moved)
    for name in ("rsi", "williams_r", "stoch_rsi", "cmo", "aroon_up", "aroon_down", "ultimate_oscillator", "adx"):
        np.testing.assert_allclose(after[name], before[name], rtol=1e-9, atol=1e-9, err_msg=name)
    bands = channel_band_family(moved)
    np.testing.assert_allclose(bands["bollinger_upper"], 2.0 * channel_band_family(bars)["bollinger_upper"] + 5.0)


def test_zero_phase_filter_is_time_symmetric():
    x = _walk(120, 25).close
    np.testing.assert_allclose(zero_phase(x[::-1]), zero_phase(x)[::-1], atol=1e-8)


@pytest.mark.slow
def test_bounded_indicators_stay_in_range():
    bars = _walk(10_000, 26)
    values = oscillator_family(bars)
    bounds = {
        "rsi": (0.0, 100.0), "williams_r": (-100.0, 0.0), "stoch_rsi": (0.0, 1.0), "cmo": (-100.0, 100.0),
        "aroon_up": (0.0, 100.0), "aroon_down": (0.0, 100.0), "ultimate_oscillator": (0.0, 100.0),
        "plus_di": (0.0, 100.0), "minus_di": (0.0, 100.0), "adx": (0.0, 100.0),
    }
    for name, (low, high) in bounds.items():
        series = values[name][np.isfinite(values[name])]
        assert len(series) > 9_000, name
        assert series.min() >= low - 1e-9 and series.max() <= high + 1e-9, name
    ibs = channel_band_family(bars)["internal_bar_strength"]
    assert np.all((ibs >= 0.0) & (ibs <= 1.0))
