#!/usr/bin/env python3
"""
lobfeat - Experimental protocol: labels, normalization, anchored folds and reports

Fold k trains on days 1..k and tests on day k+1. Rankings come from the
first fold's training data unless per-fold re-ranking is switched on.
Every (horizon, fold) pair is an independent task; the report collects
one metrics row per (horizon, fold, method, classifier, d).
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .classify import CLASSIFIERS, Movement, score, train_classifier
from .config import DEFAULT_CONFIG, LobfeatConfig, config_hash
from .errors import LobfeatError, ValidationError
from .extraction import FeatureMatrix, contiguous_groups, pool_indices
from .selection import Dataset, RankingList, rank

logger = logging.getLogger(__name__)

UNLABELED = -1
METRICS = ("accuracy", "precision", "recall", "f1_macro")


# ---------------------------------------------------------------------------
# labels


@dataclass(frozen=True)
class LabelSeries:
    labels: np.ndarray  # Movement values, UNLABELED where flagged
    flags: np.ndarray
    horizon: int
    smoothed: np.ndarray


def smooth_mids(mids, span: int = 9, smoother: str = "ema") -> np.ndarray:
    """EMA with the given span (alpha = 2 / (span + 1)), or a centered moving average"""
    if span < 1:
        raise ValueError(f"span must be >= 1, got {span}")
    series = pd.Series(np.asarray(mids, dtype=np.float64))
    if smoother == "ema":
        return series.ewm(span=span, adjust=False).mean().to_numpy()
    if smoother == "centered":
        return series.rolling(span, center=True).mean().to_numpy()
    raise ValueError(f"Unknown smoother: {smoother}")


def extract_labels(block_mids, horizon: int, gamma: float = 0.002, span: int = 9,
                   smoother: str = "ema") -> LabelSeries:
    """Up / Down / Stationary from the relative change of the smoothed mid `horizon` blocks ahead"""
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    smoothed = smooth_mids(block_mids, span, smoother)
    n = len(smoothed)
    change = np.full(n, np.nan)
    if n > horizon:
        change[:-horizon] = (smoothed[horizon:] - smoothed[:-horizon]) / smoothed[:-horizon]

    labels = np.full(n, int(Movement.STATIONARY), dtype=np.int64)
    labels[change > gamma] = Movement.UP
    labels[change < -gamma] = Movement.DOWN
    flags = ~np.isfinite(change)
    labels[flags] = UNLABELED
    return LabelSeries(labels, flags, horizon, smoothed)


def grouped_labels(mids: np.ndarray, groups: np.ndarray, horizon: int, gamma: float = 0.002,
                   span: int = 9, smoother: str = "ema") -> np.ndarray:
    """Labels computed separately inside each contiguous run (one stock on one day)"""
    labels = np.full(len(mids), UNLABELED, dtype=np.int64)
    for g in np.unique(groups):
        members = np.flatnonzero(groups == g)
        labels[members] = extract_labels(mids[members], horizon, gamma, span, smoother).labels
    return labels


# ---------------------------------------------------------------------------
# folds and normalization


@dataclass(frozen=True)
class FoldSpec:
    fold_index: int  # 1-based
    train_days: Tuple[int, ...]
    test_day: int

    def masks(self, days: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return np.isin(days, self.train_days), days == self.test_day


def anchored_folds(day_ids) -> List[FoldSpec]:
    days = sorted(int(d) for d in np.unique(day_ids))
    if len(days) < 2:
        raise ValidationError(f"anchored cross-validation needs at least two days, got {len(days)}")
    return [FoldSpec(k, tuple(days[:k]), days[k]) for k in range(1, len(days))]


def rolling_zscore(values: np.ndarray, train_idx: np.ndarray, test_idx: np.ndarray,
                   flags: Optional[np.ndarray] = None, floor: float = 1e-12) -> Tuple[np.ndarray, np.ndarray]:
    """Normalize training columns with expanding statistics and test columns with the final ones.

    Statistics skip flagged samples. Each feature is shifted by its first
    usable training value before accumulating, so constant rows come out
    exactly zero.
    """
    train = np.asarray(values[:, train_idx], dtype=np.float64)
    test = np.asarray(values[:, test_idx], dtype=np.float64)
    usable = np.ones(train.shape[1], dtype=bool) if flags is None else ~np.asarray(flags)[train_idx]

    frame = pd.DataFrame(train.T)
    frame.loc[~usable, :] = np.nan
    anchor = frame.bfill().iloc[0].fillna(0.0) if len(frame) else pd.Series(0.0, index=frame.columns)
    shifted = frame - anchor
    mean = shifted.expanding().mean()
    std = shifted.expanding().std(ddof=0).clip(lower=floor)

    train_out = ((pd.DataFrame(train.T) - anchor - mean) / std).fillna(0.0).to_numpy().T
    if len(frame) == 0:
        return train_out, np.zeros_like(test)
    last_mean, last_std = mean.iloc[-1].fillna(0.0), std.iloc[-1].fillna(1.0)
    test_out = ((pd.DataFrame(test.T) - anchor - last_mean) / last_std).to_numpy().T
    return train_out, test_out


# ---------------------------------------------------------------------------
# protocol


@dataclass
class DayData:
    """Features for a run of days plus optional precomputed labels per horizon"""
    matrix: FeatureMatrix
    labels: Dict[int, np.ndarray] = field(default_factory=dict)

    def labels_for(self, horizon: int, config: LobfeatConfig) -> np.ndarray:
        if horizon in self.labels:
            return np.asarray(self.labels[horizon], dtype=np.int64)
        p = config.protocol
        groups = contiguous_groups(self.matrix.days, self.matrix.stocks)
        return grouped_labels(self.matrix.mids, groups, horizon, p.gamma, p.smoothing_span, p.smoother)


def evaluation_grid(n_features: int, feature_counts: Sequence[int], curve_step: int) -> List[int]:
    """Feature counts to evaluate: the fixed slices plus, when curve_step > 0, 1, 1+step, ..."""
    grid = {min(d, n_features) for d in feature_counts if d >= 1}
    if curve_step > 0:
        grid.update(range(1, n_features + 1, curve_step))
    grid.add(n_features)
    return sorted(grid)


@dataclass
class ProtocolReport:
    rows: List[dict] = field(default_factory=list)
    failed_folds: List[dict] = field(default_factory=list)
    rankings: Dict[int, Dict[str, RankingList]] = field(default_factory=dict)
    config_hash: str = ""
    n_folds: int = 0

    def frame(self) -> pd.DataFrame:
        columns = ["horizon", "fold", "method", "classifier", "d"] + list(METRICS)
        return pd.DataFrame(self.rows, columns=columns)

    def summary(self) -> pd.DataFrame:
        """mean and std of every metric across the folds that completed"""
        frame = self.frame()
        if frame.empty:
            return frame
        grouped = frame.groupby(["horizon", "method", "classifier", "d"])[list(METRICS)]
        stats = grouped.agg(["mean", "std"])
        stats.columns = [f"{m}_{s}" for m, s in stats.columns]
        stats["folds"] = grouped.size()
        return stats.fillna({f"{m}_std": 0.0 for m in METRICS}).reset_index()

    def best_rows(self) -> pd.DataFrame:
        """Per (horizon, method, classifier): the d with the highest mean F1"""
        summary = self.summary()
        if summary.empty:
            return summary
        best = summary.sort_values(["f1_macro_mean", "d"], ascending=[False, True], kind="stable")
        return best.groupby(["horizon", "method", "classifier"], sort=True).head(1) \
            .sort_values(["horizon", "method", "classifier"]).reset_index(drop=True)

    def slices(self, feature_counts: Sequence[int]) -> pd.DataFrame:
        summary = self.summary()
        if summary.empty:
            return summary
        return summary[summary["d"].isin(list(feature_counts))].reset_index(drop=True)

    def curves(self) -> pd.DataFrame:
        summary = self.summary()
        if summary.empty:
            return summary
        return summary[["horizon", "method", "classifier", "d", "f1_macro_mean"]]

    def to_dict(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "folds": self.n_folds,
            "failed_folds": self.failed_folds,
            "rows": self.rows,
            "rankings": {str(h): {m: r.to_dict() for m, r in by_method.items()}
                         for h, by_method in self.rankings.items()},
        }


def _rank_on(values: np.ndarray, labels: np.ndarray, flags: np.ndarray, train_mask: np.ndarray,
             feature_ids: np.ndarray, config: LobfeatConfig, methods: Optional[Sequence[str]] = None,
             pool: Optional[str] = None) -> Dict[str, RankingList]:
    train_idx = np.flatnonzero(train_mask)
    normalized, _ = rolling_zscore(values[feature_ids], train_idx, np.zeros(0, dtype=np.int64),
                                   flags, config.protocol.zscore_floor)
    dataset = Dataset(normalized, labels[train_idx], flags[train_idx])
    pool = config.protocol.pool if pool is None else pool
    return {m: rank(dataset, m, config.selection, config.classifier, pool, feature_ids)
            for m in (config.protocol.methods if methods is None else methods)}


def rank_training_days(matrix: FeatureMatrix, labels: np.ndarray, method: str,
                       config: LobfeatConfig = DEFAULT_CONFIG, pool: str = "all",
                       train_days: int = 1) -> RankingList:
    """Rank on the first `train_days` days only (fold 1's training data by default)"""
    days = sorted(int(d) for d in np.unique(matrix.days))
    if not 1 <= train_days <= len(days):
        raise ValidationError(f"train_days must lie in 1..{len(days)}, got {train_days}")
    labels = np.asarray(labels, dtype=np.int64)
    if len(labels) != matrix.n_samples:
        raise ValidationError(f"got {len(labels)} labels for {matrix.n_samples} samples")
    train_mask = np.isin(matrix.days, days[:train_days])
    feature_ids = pool_indices(matrix.manifest, pool) if matrix.manifest else np.arange(matrix.n_features)
    logger.info(f"Ranking {len(feature_ids)} features by {method} on days {days[:train_days]} "
                f"({int(train_mask.sum())} samples)")
    return _rank_on(matrix.values, labels, matrix.flags, train_mask, feature_ids, config, (method,), pool)[method]


def _run_fold(data: DayData, labels: np.ndarray, fold: FoldSpec, horizon: int,
              rankings: Dict[str, RankingList], feature_ids: np.ndarray, config: LobfeatConfig) -> List[dict]:
    matrix = data.matrix
    train_mask, test_mask = fold.masks(matrix.days)
    if config.protocol.rerank_per_fold:
        rankings = _rank_on(matrix.values, labels, matrix.flags, train_mask, feature_ids, config)
    train_idx, test_idx = np.flatnonzero(train_mask), np.flatnonzero(test_mask)
    train, test = rolling_zscore(matrix.values, train_idx, test_idx, matrix.flags, config.protocol.zscore_floor)

    usable = ~matrix.flags & (labels >= 0)
    fit_cols, eval_cols = usable[train_idx], usable[test_idx]
    y_fit, y_eval = labels[train_idx][fit_cols], labels[test_idx][eval_cols]
    if fit_cols.sum() == 0 or eval_cols.sum() == 0:
        raise ValidationError(f"fold {fold.fold_index} has no usable train or test samples")

    rows = []
    grid = evaluation_grid(len(feature_ids), config.protocol.feature_counts, config.protocol.curve_step)
    for method, ranking in rankings.items():
        for name in config.protocol.classifiers:
            for d in grid:
                chosen = ranking.top(d)
                model = train_classifier(name, train[chosen][:, fit_cols], y_fit, config.classifier, config.seed)
                metrics = score(model.predict(test[chosen][:, eval_cols]), y_eval)
                rows.append({"horizon": horizon, "fold": fold.fold_index, "method": method,
                             "classifier": name, "d": d, **metrics})
    logger.info(f"Horizon {horizon} fold {fold.fold_index}: {len(rows)} evaluations")
    return rows


def run_protocol(data: DayData, config: LobfeatConfig = DEFAULT_CONFIG) -> ProtocolReport:
    """Anchored cross-validation over every horizon, sorting method, classifier and d"""
    matrix = data.matrix
    folds = anchored_folds(matrix.days)
    unknown = set(config.protocol.classifiers) - set(CLASSIFIERS)
    if unknown:
        raise ValidationError(f"Unknown classifiers: {sorted(unknown)}")
    feature_ids = pool_indices(matrix.manifest, config.protocol.pool) if matrix.manifest \
        else np.arange(matrix.n_features)

    report = ProtocolReport(config_hash=config_hash(config), n_folds=len(folds))
    labels_by_horizon = {h: data.labels_for(h, config) for h in config.protocol.horizons}
    for h, labels in labels_by_horizon.items():
        report.rankings[h] = _rank_on(matrix.values, labels, matrix.flags, folds[0].masks(matrix.days)[0],
                                      feature_ids, config)
    logger.info(f"Protocol: {len(folds)} folds x {len(labels_by_horizon)} horizons on "
                f"{len(feature_ids)} features ({config.protocol.pool})")

    tasks = [(h, fold) for h in config.protocol.horizons for fold in folds]

    def run(task):
        h, fold = task
        try:
            return task, _run_fold(data, labels_by_horizon[h], fold, h, report.rankings[h], feature_ids, config), None
        except (LobfeatError, ValueError, np.linalg.LinAlgError) as e:
            logger.warning(f"Horizon {h} fold {fold.fold_index} failed: {e}")
            return task, [], str(e)

    with ThreadPoolExecutor(max_workers=max(1, config.protocol.workers)) as pool:
        results = list(pool.map(run, tasks))

    for (h, fold), rows, error in results:
        if error is not None:
            report.failed_folds.append({"horizon": h, "fold": fold.fold_index, "error": error})
        report.rows.extend(rows)
    return report


@dataclass
class RankingEvaluation:
    rows: List[dict]
    failed_folds: List[dict]
    last_model: Optional[object] = None

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=["horizon", "fold", "method", "classifier", "d"] + list(METRICS))


def evaluate_ranking(data: DayData, ranking: RankingList, classifier: str, horizon: int, d: int,
                     config: LobfeatConfig = DEFAULT_CONFIG) -> RankingEvaluation:
    """Anchored cross-validation of one classifier on the top `d` features of a fixed ranking"""
    if classifier not in CLASSIFIERS:
        raise ValidationError(f"Unknown classifier: {classifier}")
    if not 1 <= d <= len(ranking.order):
        raise ValidationError(f"topk must lie in 1..{len(ranking.order)}, got {d}")
    matrix = data.matrix
    chosen = ranking.top(d)
    if chosen.max() >= matrix.n_features:
        raise ValidationError(f"ranking refers to feature {int(chosen.max())}, matrix has {matrix.n_features}")

    labels = data.labels_for(horizon, config)
    usable = ~matrix.flags & (labels >= 0)
    result = RankingEvaluation([], [])
    for fold in anchored_folds(matrix.days):
        train_mask, test_mask = fold.masks(matrix.days)
        train_idx, test_idx = np.flatnonzero(train_mask), np.flatnonzero(test_mask)
        try:
            train, test = rolling_zscore(matrix.values[chosen], train_idx, test_idx, matrix.flags,
                                         config.protocol.zscore_floor)
            fit_cols, eval_cols = usable[train_idx], usable[test_idx]
            if fit_cols.sum() == 0 or eval_cols.sum() == 0:
                raise ValidationError(f"fold {fold.fold_index} has no usable train or test samples")
            model = train_classifier(classifier, train[:, fit_cols], labels[train_idx][fit_cols],
                                     config.classifier, config.seed)
            metrics = score(model.predict(test[:, eval_cols]), labels[test_idx][eval_cols])
        except (LobfeatError, ValueError, np.linalg.LinAlgError) as e:
            logger.warning(f"Fold {fold.fold_index} failed: {e}")
            result.failed_folds.append({"horizon": horizon, "fold": fold.fold_index, "error": str(e)})
            continue
        result.last_model = model
        result.rows.append({"horizon": horizon, "fold": fold.fold_index, "method": ranking.method,
                            "classifier": classifier, "d": d, **metrics})
    logger.info(f"{ranking.method}/{classifier} top {d}, horizon {horizon}: "
                f"{len(result.rows)} folds scored, {len(result.failed_folds)} failed")
    return result
