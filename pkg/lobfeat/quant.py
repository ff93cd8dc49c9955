#!/usr/bin/env python3
"""
lobfeat - Third feature group: serial correlation, cointegration and depth imbalance

Layout per block (9 lags, 10 levels by default):
    autocorrelation of mids and of log-returns        2 x max_lag
    partial autocorrelation of mids and log-returns   2 x max_lag
    Engle-Granger on best ask vs best bid             3 (flag, p-value, statistic)
    volume imbalance per level plus total depth       levels + 1
    adaptive logistic outputs                         5

The window statistics look back over the trailing `correlation_window`
(`coint_window`) blocks ending at the current block. Shorter streams use
an expanding window from a small minimum, so only the first few blocks
come out NaN.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from statsmodels.tsa.adfvalues import mackinnonp

from .adaptive_logistic import LOGISTIC_OUTPUTS, logistic_feature
from .config import ADF_CRITICAL_VALUES, QuantConfig
from .lob_core import BlockSeries, LobSnapshot

logger = logging.getLogger(__name__)

# statistic reported when the residuals of the cointegrating fit vanish
PERFECT_FIT_STATISTIC = -100.0
_TINY = 1e-12


# ---------------------------------------------------------------------------
# serial correlation


def _windowed_autocorrelation(windows: np.ndarray, max_lag: int) -> np.ndarray:
    """Lag 1..max_lag autocorrelation for every row of `windows` (rows x length)"""
    mu = windows.mean(axis=1, keepdims=True)
    dev = windows - mu
    out = np.full((len(windows), max_lag), np.nan)
    for k in range(1, max_lag + 1):
        head, tail = dev[:, :-k], dev[:, k:]
        cov = (head * tail).mean(axis=1)
        scale = np.sqrt((head * head).mean(axis=1) * (tail * tail).mean(axis=1))
        with np.errstate(divide="ignore", invalid="ignore"):
            out[:, k - 1] = np.where(scale > _TINY, cov / scale, np.nan)
    return np.clip(out, -1.0, 1.0)


def _durbin_levinson(ac: np.ndarray) -> np.ndarray:
    """Last Yule-Walker coefficient of every order 1..p, rows solved independently.

    `ac` holds lags 1..p with ac_0 = 1 implied. Rows whose Toeplitz system
    becomes singular (or that start with NaN) are NaN from that order on.
    """
    rows, p = ac.shape
    pacf = np.full((rows, p), np.nan)
    phi = np.zeros((rows, p))
    variance = np.ones(rows)
    ok = np.all(np.isfinite(ac), axis=1)
    safe = np.where(np.isfinite(ac), ac, 0.0)
    for k in range(p):
        if k == 0:
            num = safe[:, 0].copy()
        else:
            num = safe[:, k] - np.sum(phi[:, :k] * safe[:, k - 1::-1], axis=1)
        ok &= np.abs(variance) > _TINY
        with np.errstate(divide="ignore", invalid="ignore"):
            reflection = np.where(ok, num / np.where(ok, variance, 1.0), 0.0)
        if k > 0:
            phi[:, :k] = phi[:, :k] - reflection[:, np.newaxis] * phi[:, k - 1::-1]
        phi[:, k] = reflection
        variance = variance * (1.0 - reflection ** 2)
        pacf[ok, k] = reflection[ok]
    return pacf


def _check_series(series, max_lag: int) -> np.ndarray:
    if max_lag < 1:
        raise ValueError(f"max_lag must be >= 1, got {max_lag}")
    series = np.asarray(series, dtype=np.float64)
    if series.ndim != 1 or len(series) <= max_lag:
        raise ValueError(f"need a 1-d series longer than max_lag={max_lag}, got shape {series.shape}")
    return series


def autocorrelation(series, max_lag: int = 9) -> np.ndarray:
    """Autocorrelation at lags 1..max_lag around the series mean; NaN when a segment has no variance"""
    series = _check_series(series, max_lag)
    return _windowed_autocorrelation(series[np.newaxis, :], max_lag)[0]


def partial_autocorrelation(series, max_lag: int = 9) -> np.ndarray:
    """PACF at lags 1..max_lag from the Yule-Walker equations; NaN from a singular order on"""
    return _durbin_levinson(autocorrelation(series, max_lag)[np.newaxis, :])[0]


def _rolling(values: np.ndarray, window: int, max_lag: int) -> Tuple[np.ndarray, np.ndarray]:
    """Trailing-window AC and PACF aligned with `values` (NaN inside values propagate).

    Until `window` values exist the window is everything seen so far,
    starting once max_lag + 2 values are available.
    """
    n = len(values)
    ac = np.full((n, max_lag), np.nan)
    for t in range(max_lag + 1, min(window - 1, n)):
        ac[t] = _windowed_autocorrelation(values[np.newaxis, : t + 1], max_lag)[0]
    if n >= window:
        ac[window - 1:] = _windowed_autocorrelation(sliding_window_view(values, window), max_lag)
    return ac, _durbin_levinson(ac)


def log_returns(mids) -> np.ndarray:
    mids = np.asarray(mids, dtype=np.float64)
    out = np.full(len(mids), np.nan)
    if len(mids) > 1:
        out[1:] = np.diff(np.log(mids))
    return out


# ---------------------------------------------------------------------------
# cointegration


@dataclass(frozen=True)
class CointegrationResult:
    cointegrated: bool
    p_value: float
    statistic: float

    @property
    def flagged(self) -> bool:
        return bool(np.isnan(self.statistic))

    def as_row(self) -> List[float]:
        if self.flagged:
            return [np.nan, np.nan, np.nan]
        return [float(self.cointegrated), self.p_value, self.statistic]


FLAGGED_COINTEGRATION = CointegrationResult(False, np.nan, np.nan)


def critical_value(table: Dict[str, Tuple[float, ...]], level: str, nobs: int) -> float:
    """Response-surface critical value b0 + b1/T + b2/T^2 ..."""
    coeffs = table[level]
    return float(sum(c / nobs ** i for i, c in enumerate(coeffs)))


def _batched_lstsq(x: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """OLS of y (W x m) on x (W x m x q) per row: coefficients, residuals, ok mask"""
    xtx = np.einsum("wmi,wmj->wij", x, x)
    xty = np.einsum("wmi,wm->wi", x, y)
    with np.errstate(divide="ignore", invalid="ignore"):
        ok = np.linalg.cond(xtx) < 1e12
    xtx[~ok] = np.eye(x.shape[2])
    coef = np.linalg.solve(xtx, xty[..., np.newaxis])[..., 0]
    coef[~ok] = np.nan
    residuals = y - np.einsum("wmi,wi->wm", x, coef)
    return coef, residuals, ok


def _adf_statistic(u: np.ndarray, lags: int) -> np.ndarray:
    """t-statistic of rho in du_t = rho u_{t-1} + sum_j gamma_j du_{t-j}, no constant"""
    du = np.diff(u, axis=1)
    m = du.shape[1] - lags
    y = du[:, lags:]
    regressors = [u[:, lags:-1]] + [du[:, lags - j: lags - j + m] for j in range(1, lags + 1)]
    x = np.stack(regressors, axis=-1)

    coef, resid, ok = _batched_lstsq(x, y)
    dof = m - x.shape[2]
    sigma2 = (resid * resid).sum(axis=1) / dof
    xtx = np.einsum("wmi,wmj->wij", x, x)
    xtx[~ok] = np.eye(x.shape[2])
    inv00 = np.linalg.inv(xtx)[:, 0, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        stat = np.where(ok & (sigma2 > 0), coef[:, 0] / np.sqrt(sigma2 * inv00), np.nan)
    return stat


def _engle_granger_rows(a: np.ndarray, b: np.ndarray, lags: int, table) -> List[CointegrationResult]:
    rows, n = a.shape
    spread_b = b.max(axis=1) - b.min(axis=1)
    design = np.stack([np.ones_like(b), b - b.mean(axis=1, keepdims=True)], axis=-1)
    _, residuals, ok = _batched_lstsq(design, a)
    ok &= spread_b > 0
    residuals[~ok] = 0.0
    # residuals at rounding level relative to the series mean an exact linear relation
    perfect = np.sqrt((residuals * residuals).mean(axis=1)) <= 1e-9 * np.maximum(np.abs(a).mean(axis=1), 1.0)
    stat = _adf_statistic(residuals, lags)
    nobs = n - 1 - lags
    crit5 = critical_value(table, "5%", nobs)

    results = []
    for i in range(rows):
        if not ok[i]:
            results.append(FLAGGED_COINTEGRATION)
        elif perfect[i]:
            results.append(CointegrationResult(True, 0.0, PERFECT_FIT_STATISTIC))
        elif np.isnan(stat[i]):
            results.append(FLAGGED_COINTEGRATION)
        else:
            p_value = float(mackinnonp(stat[i], regression="c", N=2))
            results.append(CointegrationResult(bool(stat[i] < crit5), p_value, float(stat[i])))
    return results


def engle_granger(ask_series, bid_series, config: QuantConfig = QuantConfig(),
                  critical_values: Optional[Dict[str, Tuple[float, ...]]] = None) -> CointegrationResult:
    """Two-step Engle-Granger test of ask_series = c + alpha * bid_series + u.

    The residuals go through a Dickey-Fuller regression without constant
    and with `config.adf_lags` augmentation lags. Windows shorter than
    `config.coint_min_window` and a constant bid series come back flagged.
    """
    a = np.asarray(ask_series, dtype=np.float64)
    b = np.asarray(bid_series, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"series must be 1-d and equal length, got {a.shape} and {b.shape}")
    if len(a) < max(config.coint_min_window, config.adf_lags + 4):
        return FLAGGED_COINTEGRATION
    table = critical_values or ADF_CRITICAL_VALUES
    return _engle_granger_rows(a[np.newaxis, :], b[np.newaxis, :], config.adf_lags, table)[0]


def rolling_cointegration(ask: np.ndarray, bid: np.ndarray, config: QuantConfig = QuantConfig(),
                          critical_values: Optional[Dict[str, Tuple[float, ...]]] = None) -> np.ndarray:
    """blocks x 3 Engle-Granger outputs over windows ending at each block.

    Until `coint_window` blocks exist the window is everything seen so far,
    starting once `coint_min_window` blocks are available.
    """
    table = critical_values or ADF_CRITICAL_VALUES
    n = len(ask)
    out = np.full((n, 3), np.nan)
    window, shortest = config.coint_window, max(config.coint_min_window, config.adf_lags + 4)
    for t in range(shortest - 1, min(window - 1, n)):
        out[t] = engle_granger(ask[: t + 1], bid[: t + 1], config, table).as_row()
    if n >= window:
        results = _engle_granger_rows(sliding_window_view(ask, window), sliding_window_view(bid, window),
                                      config.adf_lags, table)
        out[window - 1:] = [r.as_row() for r in results]
    return out


# ---------------------------------------------------------------------------
# imbalance


def order_book_imbalance(snapshot: LobSnapshot, level: int) -> float:
    """(V_bid - V_ask) / (V_bid + V_ask) at a 1-based book level"""
    if not 1 <= level <= snapshot.levels:
        raise ValueError(f"level must be in 1..{snapshot.levels}, got {level}")
    vb, va = snapshot.bid_volumes[level - 1], snapshot.ask_volumes[level - 1]
    return (vb - va) / (vb + va)


def aggregate_imbalance(snapshot: LobSnapshot) -> float:
    vb, va = sum(snapshot.bid_volumes), sum(snapshot.ask_volumes)
    return (vb - va) / (vb + va)


def imbalance_matrix(bid_volumes: np.ndarray, ask_volumes: np.ndarray) -> np.ndarray:
    """blocks x (levels + 1): per-level imbalance, then the imbalance of total depth"""
    per_level = (bid_volumes - ask_volumes) / (bid_volumes + ask_volumes)
    vb, va = bid_volumes.sum(axis=1), ask_volumes.sum(axis=1)
    return np.column_stack([per_level, (vb - va) / (vb + va)])


# ---------------------------------------------------------------------------
# assembly


def quant_feature_names(config: QuantConfig = QuantConfig(), levels: int = 10) -> List[Tuple[str, str]]:
    """(name, family) for every column, in matrix order"""
    lags = range(1, config.max_lag + 1)
    names = [(f"autocorr_mid_lag{k}", "autocorrelation") for k in lags]
    names += [(f"autocorr_logret_lag{k}", "autocorrelation") for k in lags]
    names += [(f"pacf_mid_lag{k}", "partial_autocorrelation") for k in lags]
    names += [(f"pacf_logret_lag{k}", "partial_autocorrelation") for k in lags]
    names += [(n, "cointegration") for n in ("coint_flag", "coint_p_value", "coint_statistic")]
    names += [(f"imbalance_{k}", "imbalance") for k in range(1, levels + 1)] + [("imbalance_total", "imbalance")]
    names += [(f"logistic_{n}", "logistic") for n in LOGISTIC_OUTPUTS]
    return names


def quant_feature_matrix(series: BlockSeries, config: QuantConfig = QuantConfig(),
                         critical_values: Optional[Dict[str, Tuple[float, ...]]] = None) -> np.ndarray:
    mids = series.close
    returns = log_returns(mids)
    ac_mid, pacf_mid = _rolling(mids, config.correlation_window, config.max_lag)
    # returns start at the second block; the first row stays NaN
    ac_ret = np.full((len(mids), config.max_lag), np.nan)
    pacf_ret = np.full((len(mids), config.max_lag), np.nan)
    if len(mids) > 1:
        ac_ret[1:], pacf_ret[1:] = _rolling(returns[1:], config.correlation_window, config.max_lag)

    coint = rolling_cointegration(series.ask_prices[:, 0], series.bid_prices[:, 0], config, critical_values)
    imbalance = imbalance_matrix(series.bid_volumes, series.ask_volumes)
    logistic = logistic_feature(series, config)

    matrix = np.hstack([ac_mid, ac_ret, pacf_mid, pacf_ret, coint, imbalance, logistic])
    logger.debug(f"Quant features: {matrix.shape[0]} blocks x {matrix.shape[1]}")
    return matrix
