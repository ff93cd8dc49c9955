#!/usr/bin/env python3
"""
lobfeat - Technical indicators over the block-level OHLC bar series

Every indicator is computed causally over the whole series at once and
returns an array aligned with the bars; entries without enough history
are NaN. Bounded oscillators emit their neutral midpoint on flat windows.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import filtfilt, lfilter

from .config import TechnicalConfig
from .lob_core import BlockSeries, OhlcBar

logger = logging.getLogger(__name__)

RATIONAL_B = np.full(4, 0.25)
RATIONAL_A = np.array([1.0])


@dataclass(frozen=True)
class BarSeries:
    open: np.ndarray
    high: np.ndarray
    low: np.ndarray
    close: np.ndarray
    volume: np.ndarray

    def __post_init__(self):
        lengths = {len(self.open), len(self.high), len(self.low), len(self.close), len(self.volume)}
        if len(lengths) != 1:
            raise ValueError(f"bar arrays differ in length: {sorted(lengths)}")

    def __len__(self) -> int:
        return len(self.close)

    @property
    def median(self) -> np.ndarray:
        return (self.high + self.low) / 2.0

    @classmethod
    def from_arrays(cls, open_, high, low, close, volume=None) -> "BarSeries":
        close = np.asarray(close, dtype=np.float64)
        volume = np.zeros(len(close)) if volume is None else np.asarray(volume, dtype=np.float64)
        return cls(np.asarray(open_, dtype=np.float64), np.asarray(high, dtype=np.float64),
                   np.asarray(low, dtype=np.float64), close, volume)

    @classmethod
    def from_bars(cls, bars: Sequence[OhlcBar]) -> "BarSeries":
        return cls.from_arrays([b.open for b in bars], [b.high for b in bars], [b.low for b in bars],
                               [b.close for b in bars], [b.block_volume for b in bars])

    @classmethod
    def from_blocks(cls, series: BlockSeries) -> "BarSeries":
        return cls.from_arrays(series.open, series.high, series.low, series.close, series.volume)


# ---------------------------------------------------------------------------
# building blocks


def _check_window(n: int):
    if n < 1:
        raise ValueError(f"window must be >= 1, got {n}")


def _trailing(x: np.ndarray, n: int, reducer: Callable) -> np.ndarray:
    _check_window(n)
    x = np.asarray(x, dtype=np.float64)
    out = np.full(len(x), np.nan)
    if len(x) >= n:
        out[n - 1:] = reducer(sliding_window_view(x, n), axis=-1)
    return out


def _shift(x: np.ndarray, k: int) -> np.ndarray:
    out = np.full(len(x), np.nan)
    if k < len(x):
        out[k:] = x[: len(x) - k]
    return out


def _ratio(num, den, neutral: float) -> np.ndarray:
    """num/den with `neutral` where den == 0; NaN inputs stay NaN"""
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(den == 0, neutral, num / den)
    out[np.isnan(num) | np.isnan(den)] = np.nan
    return out


def sma(x, n: int) -> np.ndarray:
    return _trailing(x, n, np.mean)


def wma(x, n: int) -> np.ndarray:
    _check_window(n)
    weights = np.arange(1, n + 1, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    out = np.full(len(x), np.nan)
    if len(x) >= n:
        out[n - 1:] = sliding_window_view(x, n) @ weights / weights.sum()
    return out


def _recursive_average(x, n: int, alpha: float) -> np.ndarray:
    """y[t] = alpha*x[t] + (1-alpha)*y[t-1], seeded with the mean of the first n valid values"""
    _check_window(n)
    x = np.asarray(x, dtype=np.float64)
    out = np.full(len(x), np.nan)
    valid = np.flatnonzero(~np.isnan(x))
    if valid.size == 0:
        return out
    seed_at = valid[0] + n - 1
    if seed_at >= len(x):
        return out
    seed = x[valid[0]: seed_at + 1].mean()
    out[seed_at] = seed
    if seed_at + 1 < len(x):
        out[seed_at + 1:], _ = lfilter([alpha], [1.0, alpha - 1.0], x[seed_at + 1:], zi=[(1.0 - alpha) * seed])
    return out


def ema(x, n: int) -> np.ndarray:
    return _recursive_average(x, n, 2.0 / (n + 1))


def wilder(x, n: int) -> np.ndarray:
    """Wilder smoothing: (prev * (n-1) + x) / n"""
    return _recursive_average(x, n, 1.0 / n)


def highest(x, n: int) -> np.ndarray:
    return _trailing(x, n, np.max)


def lowest(x, n: int) -> np.ndarray:
    return _trailing(x, n, np.min)


def true_range(bars: BarSeries) -> np.ndarray:
    prev = _shift(bars.close, 1)
    return np.maximum(bars.high - bars.low, np.maximum(np.abs(bars.high - prev), np.abs(bars.low - prev)))


def money_flow_multiplier(bars: BarSeries) -> np.ndarray:
    return _ratio((bars.close - bars.low) - (bars.high - bars.close), bars.high - bars.low, 0.0)


def rsi(close, n: int = 14) -> np.ndarray:
    """Plain-sum RSI: average gain and loss over the last n differences"""
    diff = np.asarray(close, dtype=np.float64) - _shift(np.asarray(close, dtype=np.float64), 1)
    gains = _trailing(np.maximum(diff, 0.0), n, np.sum) / n
    losses = _trailing(np.maximum(-diff, 0.0), n, np.sum) / n
    return _ratio(100.0 * gains, gains + losses, 50.0)


def savgol_weights(window: int, degree: int, position: int) -> np.ndarray:
    """Least-squares polynomial weights returning the fitted value at `position` of the window.

    Abscissae are taken relative to `position`, so the response is p0 of the
    solution of the normal equations A P = B.
    """
    x = np.arange(window, dtype=np.float64) - position
    vander = np.vander(x, degree + 1, increasing=True)
    normal = vander.T @ vander
    if np.linalg.matrix_rank(normal) < degree + 1:
        raise ValueError(f"singular normal matrix for window={window}, degree={degree}")
    return np.linalg.solve(normal, vander.T)[0]


def zero_phase(x) -> np.ndarray:
    """Forward-backward 4-tap mean filter (Gustafsson edges, so reversing the input reverses the output)"""
    return filtfilt(RATIONAL_B, RATIONAL_A, np.asarray(x, dtype=np.float64), method="gust")


def linear_fit(x, window: int = 10):
    """Trailing least-squares line over time index 0..window-1: slope, intercept, r"""
    windows = sliding_window_view(np.asarray(x, dtype=np.float64), window)
    t = np.arange(window, dtype=np.float64)
    t_dev = t - t.mean()
    y_dev = windows - windows.mean(axis=1, keepdims=True)
    sxy = y_dev @ t_dev
    sxx = t_dev @ t_dev
    syy = (y_dev ** 2).sum(axis=1)
    slope = sxy / sxx
    intercept = windows.mean(axis=1) - slope * t.mean()
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(syy > 0, sxy / np.sqrt(sxx * syy), np.nan)
    return slope, intercept, r


def beta_ratio(a, b, window: int = 10) -> np.ndarray:
    """Trailing cov(a, b) / var(b); NaN where var(b) is zero"""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    out = np.full(len(a), np.nan)
    if len(a) < window:
        return out
    wa, wb = sliding_window_view(a, window), sliding_window_view(b, window)
    da = wa - wa.mean(axis=1, keepdims=True)
    db = wb - wb.mean(axis=1, keepdims=True)
    cov = (da * db).mean(axis=1)
    var = (db * db).mean(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        out[window - 1:] = np.where(var > 0, cov / var, np.nan)
    return out


def _fractals(price: np.ndarray):
    """Five-bar peak/trough centred two bars back, reported on the bar that completes it"""
    buy = np.full(len(price), np.nan)
    sell = np.full(len(price), np.nan)
    if len(price) >= 5:
        w = sliding_window_view(price, 5)
        center = w[:, 2:3]
        others = w[:, [0, 1, 3, 4]]
        buy[4:] = (center > others).all(axis=1)
        sell[4:] = (center < others).all(axis=1)
    return buy, sell


def _psar(bars: BarSeries, config: TechnicalConfig) -> np.ndarray:
    n = len(bars)
    w = config.psar_extreme_window
    start = max(w - 1, 1)
    out = np.full(n, np.nan)
    if n <= start:
        return out
    hh = highest(bars.high, w)
    ll = lowest(bars.low, w)

    rising = bars.close[1] - bars.close[0] >= 0
    sar = ll[start] if rising else hh[start]
    ep = hh[start] if rising else ll[start]
    af = config.psar_initial_af
    out[start] = sar
    for t in range(start + 1, n):
        sar = sar + af * (ep - sar)
        if rising and bars.low[t] < sar:
            rising, sar, ep, af = False, ep, ll[t], config.psar_initial_af
        elif not rising and bars.high[t] > sar:
            rising, sar, ep, af = True, ep, hh[t], config.psar_initial_af
        elif rising and hh[t] > ep:
            ep, af = hh[t], min(af + config.psar_step, config.psar_max_af)
        elif not rising and ll[t] < ep:
            ep, af = ll[t], min(af + config.psar_step, config.psar_max_af)
        out[t] = sar
    return out


def _vma(close: np.ndarray, lookback: int) -> np.ndarray:
    """Efficiency-ratio adaptive average, alpha = 2/(N+1), volatility scaled by N"""
    alpha = 2.0 / (lookback + 1)
    direction = np.abs(close - _shift(close, lookback))
    volatility = lookback * _trailing(np.abs(close - _shift(close, 1)), lookback, np.sum)
    er = _ratio(direction, volatility, 0.0)
    out = np.full(len(close), np.nan)
    if len(close) <= lookback:
        return out
    out[lookback] = close[lookback]
    for t in range(lookback + 1, len(close)):
        k = alpha * er[t]
        out[t] = k * close[t] + (1.0 - k) * out[t - 1]
    return out


def _aroon(x: np.ndarray, n: int, pick: Callable) -> np.ndarray:
    out = np.full(len(x), np.nan)
    if len(x) >= n:
        # reversed so the most recent extreme wins ties
        since = pick(sliding_window_view(x, n)[:, ::-1], axis=1)
        out[n - 1:] = (n - since) / n * 100.0
    return out


# ---------------------------------------------------------------------------
# indicator families


def moving_average_family(bars: BarSeries, config: TechnicalConfig = TechnicalConfig()) -> Dict[str, np.ndarray]:
    m, c = bars.median, bars.close
    n = config.ma_window
    e1 = ema(c, n)
    e2 = ema(e1, n)
    e3 = ema(e2, n)
    e4 = ema(e3, n)
    e5 = ema(e4, n)
    e6 = ema(e5, n)
    a = config.t3_volume_factor
    c1 = -a ** 3
    c2 = 3 * a ** 2 + 3 * a ** 3
    c3 = -6 * a ** 2 - 3 * a - 3 * a ** 3
    c4 = 1 + 3 * a + a ** 3 + 3 * a ** 2
    ema_m = ema(m, config.dema_window)
    lag = config.zlema_lag
    zlema_input = c + (c - _shift(c, lag)) if lag > 0 else c
    hull = config.hull_window
    jaw, teeth, lips = config.alligator_windows
    return {
        "dema": 2 * ema_m - ema(ema_m, config.dema_window),
        "tema": 3 * e1 - 3 * e2 + e3,
        "trima": sma(sma(sma(c, n), n), n),
        "t3": c1 * e6 + c2 * e5 + c3 * e4 + c4 * e3,
        "hull_ma": wma(2 * wma(m, max(hull // 2, 1)) - wma(m, hull), int(round(np.sqrt(hull)))),
        "zlema": ema(zlema_input, n),
        "vma": _vma(c, config.vma_lookback),
        "alligator_jaw": sma(m, jaw),
        "alligator_teeth": sma(m, teeth),
        "alligator_lips": sma(m, lips),
    }


def oscillator_family(bars: BarSeries, config: TechnicalConfig = TechnicalConfig()) -> Dict[str, np.ndarray]:
    m, c, h, l = bars.median, bars.close, bars.high, bars.low
    prev = _shift(c, 1)
    diff = c - prev

    ao_fast, ao_slow = config.awesome_windows
    ao = sma(m, ao_fast) - sma(m, ao_slow)
    macd_fast, macd_slow = config.macd_windows
    macd = ema(m, macd_fast) - ema(m, macd_slow)
    up_sum = _trailing(np.maximum(diff, 0.0), config.cmo_window, np.sum)
    down_sum = _trailing(np.maximum(-diff, 0.0), config.cmo_window, np.sum)
    adl = np.cumsum(money_flow_multiplier(bars) * bars.volume)

    n_cog = config.cog_window
    cog = np.full(len(m), np.nan)
    if len(m) >= n_cog:
        windows = sliding_window_view(m, n_cog)
        weights = n_cog - np.arange(n_cog, dtype=np.float64)  # oldest column carries the largest weight
        cog[n_cog - 1:] = -_ratio(windows @ weights, windows.sum(axis=1), 0.0)

    n_dpo = config.dpo_window
    if config.dpo_standard:
        dpo = _shift(c, n_dpo // 2 + 1) - sma(c, n_dpo)
    else:
        dpo = highest(h, n_dpo) / (n_dpo + 2) - sma(c, n_dpo)

    r = rsi(c, config.rsi_window)
    n_trix = config.trix_window
    e3 = ema(ema(ema(c, n_trix), n_trix), n_trix)
    e3_prev = _shift(e3, 1)
    tsi_long, tsi_short = config.tsi_windows
    pc_smooth = ema(ema(diff, tsi_long), tsi_short)
    apc_smooth = ema(ema(np.abs(diff), tsi_long), tsi_short)

    buying = c - np.minimum(l, prev)
    ranges = np.maximum(h, prev) - np.minimum(l, prev)
    averages = [_ratio(_trailing(buying, n, np.sum), _trailing(ranges, n, np.sum), 0.5)
                for n in config.ultimate_windows]

    hh, ll = highest(h, config.williams_window), lowest(l, config.williams_window)
    aroon_up = _aroon(h, config.aroon_window, np.argmax)
    aroon_down = _aroon(l, config.aroon_window, np.argmin)
    n_stoch = config.stoch_rsi_window
    chaikin_fast, chaikin_slow = config.chaikin_windows
    apo_fast, apo_slow = config.apo_windows
    n_roc = config.roc_window

    tr = true_range(bars)
    up_move = h - _shift(h, 1)
    down_move = _shift(l, 1) - l
    undefined = np.isnan(up_move)
    plus_dm = np.where(undefined, np.nan, np.where((up_move > down_move) & (up_move > 0), up_move, 0.0))
    minus_dm = np.where(undefined, np.nan, np.where((down_move > up_move) & (down_move > 0), down_move, 0.0))
    n_adx = config.adx_window
    atr = wilder(tr, n_adx)
    plus_di = _ratio(100.0 * wilder(plus_dm, n_adx), atr, 0.0)
    minus_di = _ratio(100.0 * wilder(minus_dm, n_adx), atr, 0.0)
    dx = _ratio(100.0 * np.abs(plus_di - minus_di), plus_di + minus_di, 0.0)
    adx = wilder(dx, n_adx)

    return {
        "awesome_oscillator": ao,
        "accelerator_oscillator": ao - sma(ao, config.accelerator_window),
        "apo": ema(m, apo_fast) - ema(m, apo_slow),
        "macd": macd,
        "ppo": macd / ema(m, macd_slow) * 100.0,
        "cmo": _ratio(100.0 * (up_sum - down_sum), up_sum + down_sum, 0.0),
        "chaikin_oscillator": ema(adl, chaikin_fast) - ema(adl, chaikin_slow),
        "center_of_gravity": cog,
        "dpo": dpo,
        "momentum": diff,
        "roc": (c - _shift(c, n_roc)) / _shift(c, n_roc) * 100.0,
        "rsi": r,
        "stoch_rsi": _ratio(r - lowest(r, n_stoch), highest(r, n_stoch) - lowest(r, n_stoch), 0.5),
        "trix": (e3 - e3_prev) / e3_prev * 100.0,
        "tsi": _ratio(100.0 * pc_smooth, apc_smooth, 0.0),
        "ultimate_oscillator": 100.0 * (4 * averages[0] + 2 * averages[1] + averages[2]) / 7.0,
        "williams_r": _ratio(-100.0 * (hh - c), hh - ll, -50.0),
        "aroon_up": aroon_up,
        "aroon_down": aroon_down,
        "aroon_oscillator": aroon_up - aroon_down,
        "plus_di": plus_di,
        "minus_di": minus_di,
        "adx": adx,
        "adxr": (adx + _shift(adx, 1)) / 2.0,
    }


def channel_band_family(bars: BarSeries, config: TechnicalConfig = TechnicalConfig()) -> Dict[str, np.ndarray]:
    o, h, l, c, m = bars.open, bars.high, bars.low, bars.close, bars.median
    tr = true_range(bars)

    bb_mid = sma(c, config.bollinger_window)
    bb_band = config.bollinger_width * _trailing(c, config.bollinger_window, np.std)
    kc_mid = ema(m, config.keltner_window)
    kc_band = config.keltner_width * wilder(tr, config.keltner_atr_window)
    atr = wilder(tr, config.atr_window)
    n_ch = config.chandelier_window
    ch_band = config.chandelier_multiplier * wilder(tr, n_ch)
    hh, ll = highest(h, config.donchian_window), lowest(l, config.donchian_window)
    n_conv, n_base, n_span = config.ichimoku_windows
    tenkan = (highest(h, n_conv) + lowest(l, n_conv)) / 2.0
    kijun = (highest(h, n_base) + lowest(l, n_base)) / 2.0
    deviation = c - sma(c, config.deviation_window)
    prev_o, prev_c = _shift(o, 1), _shift(c, 1)

    values = {
        "bollinger_upper": bb_mid + bb_band,
        "bollinger_middle": bb_mid,
        "bollinger_lower": bb_mid - bb_band,
        "keltner_upper": kc_mid + kc_band,
        "keltner_middle": kc_mid,
        "keltner_lower": kc_mid - kc_band,
        "donchian_upper": hh,
        "donchian_middle": (hh + ll) / 2.0,
        "donchian_lower": ll,
        "chandelier_long": highest(h, n_ch) - ch_band,
        "chandelier_short": lowest(l, n_ch) + ch_band,
        "ichimoku_conversion": tenkan,
        "ichimoku_base": kijun,
        "ichimoku_span_a": (tenkan + kijun) / 2.0,
        "ichimoku_span_b": (highest(h, n_span) + lowest(l, n_span)) / 2.0,
        "ichimoku_lagging": _shift(c, n_base),
        "highest_high": hh,
        "lowest_low": ll,
        "parabolic_sar": _psar(bars, config),
        "atr": atr,
        "natr": atr / c * 100.0,
        "std_deviation": deviation,
        "std_sasd": np.sqrt(sma(deviation ** 2, config.deviation_window)),
        "accumulation_distribution": np.cumsum(money_flow_multiplier(bars) * bars.volume),
        "median_price": m,
        "weighted_close": (h + l + 2.0 * c) / 4.0,
        "internal_bar_strength": _ratio(c - l, h - l, 0.5),
        "heikin_ashi_open": (prev_o + prev_c) / 2.0,
        "heikin_ashi_high": np.maximum(h, np.maximum(prev_o, prev_c)),
        "heikin_ashi_low": np.minimum(l, np.minimum(prev_o, prev_c)),
        "heikin_ashi_close": (o + h + l + c) / 4.0,
    }
    for label, price in (("open", o), ("high", h), ("low", l), ("close", c)):
        buy, sell = _fractals(price)
        values[f"fractal_buy_{label}"] = buy
        values[f"fractal_sell_{label}"] = sell
    return values


def regression_filter_family(bars: BarSeries, config: TechnicalConfig = TechnicalConfig()) -> Dict[str, np.ndarray]:
    c = bars.close
    n = len(c)
    lookback = config.filter_lookback

    slope = np.full(n, np.nan)
    intercept = np.full(n, np.nan)
    corr = np.full(n, np.nan)
    detrended = np.full(n, np.nan)
    smoothed = np.full(n, np.nan)
    zero_phased = np.full(n, np.nan)
    if n >= lookback:
        s, i, r = linear_fit(c, lookback)
        slope[lookback - 1:], intercept[lookback - 1:], corr[lookback - 1:] = s, i, r
        detrended[lookback - 1:] = c[lookback - 1:] - (i + s * (lookback - 1))
        zero_phased[lookback - 1:] = zero_phase(sliding_window_view(c, lookback))[:, -1]

    window = config.savgol_window
    weights = savgol_weights(window, config.savgol_degree, window - 1)
    if n >= window:
        smoothed[window - 1:] = sliding_window_view(c, window) @ weights

    rational = lfilter(RATIONAL_B, RATIONAL_A, c) if n else np.zeros(0)
    rational[: len(RATIONAL_B) - 1] = np.nan

    nb = config.beta_window
    average = sma(c, nb)
    index_close = c / _shift(c, 1)
    index_average = average / _shift(average, 1)
    beta = beta_ratio(index_close - sma(index_close, nb), index_average - sma(index_average, nb), nb)

    return {
        "lrl_slope": slope,
        "lrl_intercept": intercept,
        "lrl_r": corr,
        "lrl_r_squared": corr ** 2,
        "rational_transfer": rational,
        "savitzky_golay": smoothed,
        "zero_phase": zero_phased,
        "remove_offset": c - sma(c, lookback),
        "detrend": detrended,
        "beta": beta,
    }


FAMILIES = (
    ("moving_average", moving_average_family),
    ("oscillator", oscillator_family),
    ("channel_band", channel_band_family),
    ("regression_filter", regression_filter_family),
)


def technical_feature_names(config: TechnicalConfig = TechnicalConfig()) -> List[tuple]:
    """(name, family) for every column; computed on a short dummy series so names track the code"""
    dummy = BarSeries.from_arrays(np.ones(3), np.ones(3) * 2, np.ones(3) * 0.5, np.ones(3), np.ones(3))
    return [(name, family) for family, fn in FAMILIES for name in fn(dummy, config)]


def technical_feature_matrix(bars: BarSeries, config: TechnicalConfig = TechnicalConfig()) -> np.ndarray:
    """All technical indicators, bars x 83"""
    columns = []
    for family, fn in FAMILIES:
        columns.extend(fn(bars, config).values())
    return np.column_stack(columns) if columns else np.zeros((len(bars), 0))
