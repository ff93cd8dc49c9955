#!/usr/bin/env python3
"""
lobfeat - Adaptive logistic regression on order book depth

Two models run side by side over the block stream, one for the best ask
and one for the best bid. Each predicts, from the volumes of the block's
penultimate snapshot, whether the block's last event moves that side's
best price. A block is first scored with the coefficients learned from the
blocks before it, then both models take one safeguarded Newton step over
the most recent (volumes, label) pairs.
"""

import logging
from collections import deque
from dataclasses import dataclass, replace
from enum import Enum
from typing import Tuple

import numpy as np
from scipy.special import expit

from .config import QuantConfig
from .lob_core import BlockSeries

logger = logging.getLogger(__name__)

LOGISTIC_OUTPUTS = ("p_ask", "p_bid", "coeff_snapshot", "local_ratio", "extended_ratio")


class ModelSide(str, Enum):
    ASK = "ask"
    BID = "bid"


@dataclass(frozen=True)
class LogisticState:
    theta: np.ndarray
    side: ModelSide = ModelSide.ASK
    iteration_count: int = 0
    last_cost: float = float(np.log(2.0))

    @classmethod
    def zeros(cls, n_params: int, side: ModelSide = ModelSide.ASK) -> "LogisticState":
        return cls(theta=np.zeros(n_params), side=side)

    def predict(self, features: np.ndarray) -> np.ndarray:
        return expit(np.asarray(features, dtype=np.float64) @ self.theta)


@dataclass(frozen=True)
class LogisticBatch:
    features: np.ndarray  # m x p, first column the intercept
    labels: np.ndarray  # m, values in {0, 1}

    def __post_init__(self):
        if self.features.ndim != 2 or len(self.features) != len(self.labels):
            raise ValueError(f"batch shapes disagree: {self.features.shape} vs {self.labels.shape}")
        if len(self.labels) == 0:
            raise ValueError("empty batch")


def logistic_cost(theta: np.ndarray, batch: LogisticBatch) -> float:
    """Mean negative log-likelihood; logaddexp keeps it finite for large margins"""
    z = batch.features @ theta
    return float(np.mean(np.logaddexp(0.0, z) - batch.labels * z))


def logistic_gradient(theta: np.ndarray, batch: LogisticBatch) -> np.ndarray:
    h = expit(batch.features @ theta)
    return batch.features.T @ (h - batch.labels) / len(batch.labels)


def logistic_hessian(theta: np.ndarray, batch: LogisticBatch, ridge: float = 1e-6) -> np.ndarray:
    h = expit(batch.features @ theta)
    weighted = batch.features * (h * (1.0 - h))[:, np.newaxis]
    return batch.features.T @ weighted / len(batch.labels) + ridge * np.eye(len(theta))


def logistic_newton_step(state: LogisticState, batch: LogisticBatch, ridge: float = 1e-6,
                         max_halvings: int = 20) -> LogisticState:
    """One Newton update, halving the step until the cost stops rising.

    If no trial step within `max_halvings` halvings lowers the cost, the
    coefficients are kept, so the cost sequence never increases.
    """
    cost = logistic_cost(state.theta, batch)
    gradient = logistic_gradient(state.theta, batch)
    hessian = logistic_hessian(state.theta, batch, ridge)
    direction = np.linalg.solve(hessian, gradient)
    assert np.all(np.isfinite(direction)), "regularized Hessian solve produced non-finite step"

    step = 1.0
    for _ in range(max_halvings + 1):
        candidate = state.theta - step * direction
        candidate_cost = logistic_cost(candidate, batch)
        if candidate_cost <= cost:
            return replace(state, theta=candidate, iteration_count=state.iteration_count + 1,
                           last_cost=candidate_cost)
        step /= 2.0
    return replace(state, iteration_count=state.iteration_count + 1, last_cost=cost)


# ---------------------------------------------------------------------------
# block-stream feature


def depth_features(series: BlockSeries, levels: int = 6) -> np.ndarray:
    """Intercept, ask volumes 1..levels, bid volumes 1..levels of each block's penultimate snapshot"""
    return np.column_stack([
        np.ones(series.n_blocks),
        series.prev_ask_volumes[:, :levels],
        series.prev_bid_volumes[:, :levels],
    ])


def price_change_labels(series: BlockSeries) -> Tuple[np.ndarray, np.ndarray]:
    """1 where the best ask (bid) of the last snapshot differs from the penultimate one"""
    ask = (series.ask_prices[:, 0] != series.prev_best_ask).astype(np.float64)
    bid = (series.bid_prices[:, 0] != series.prev_best_bid).astype(np.float64)
    return ask, bid


def level_weights(ask_theta: np.ndarray, bid_theta: np.ndarray, levels: int = 6) -> np.ndarray:
    """|coefficient| mass per book level, summed over both volumes and both models"""
    magnitude = np.abs(ask_theta[1:]) + np.abs(bid_theta[1:])
    return magnitude[:levels] + magnitude[levels: 2 * levels]


def spatial_ratios(ask_theta: np.ndarray, bid_theta: np.ndarray, levels: int = 6) -> Tuple[float, float]:
    """Level 1 against levels 2-3 (local) and levels 1-3 against 4-6 (extended); NaN on zero mass"""
    w = level_weights(ask_theta, bid_theta, levels)
    near, deep = w[1] + w[2], w[3:6].sum()
    local = w[0] / near if near > 0 else np.nan
    extended = w[:3].sum() / deep if deep > 0 else np.nan
    return float(local), float(extended)


def logistic_feature(series: BlockSeries, config: QuantConfig = QuantConfig()) -> np.ndarray:
    """blocks x 5: p_ask, p_bid, ask coefficient on level-1 ask volume, local ratio, extended ratio.

    Row t uses only coefficients trained on blocks before t, applied to
    block t's penultimate snapshot.
    """
    levels = config.logistic_levels
    x = depth_features(series, levels)
    y_ask, y_bid = price_change_labels(series)
    ask = LogisticState.zeros(x.shape[1], ModelSide.ASK)
    bid = LogisticState.zeros(x.shape[1], ModelSide.BID)
    recent = deque(maxlen=config.logistic_buffer)

    out = np.full((series.n_blocks, len(LOGISTIC_OUTPUTS)), np.nan)
    for t in range(series.n_blocks):
        local, extended = spatial_ratios(ask.theta, bid.theta, levels)
        out[t] = [ask.predict(x[t]), bid.predict(x[t]), ask.theta[1], local, extended]

        recent.append(t)
        rows = np.fromiter(recent, dtype=np.int64)
        ask = logistic_newton_step(ask, LogisticBatch(x[rows], y_ask[rows]),
                                   config.logistic_ridge, config.logistic_max_halvings)
        bid = logistic_newton_step(bid, LogisticBatch(x[rows], y_bid[rows]),
                                   config.logistic_ridge, config.logistic_max_halvings)

    if series.n_blocks:
        logger.debug(f"Logistic models after {series.n_blocks} blocks: "
                     f"ask cost {ask.last_cost:.4f}, bid cost {bid.last_cost:.4f}")
    return out
