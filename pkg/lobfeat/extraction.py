#!/usr/bin/env python3
"""
lobfeat - Feature extraction: the full feature matrix and its manifest

Rows are laid out as [order book | technical | quant]; with the default
ten-level book that is 135 + 83 + 55 = 273 features. Samples are blocks.
A sample is flagged when any of its features could not be computed (not
enough history, degenerate window); its missing entries are stored as 0.
"""

import logging
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .config import DEFAULT_CONFIG, LobfeatConfig, load_critical_values
from .errors import ValidationError
from .lob_core import BlockSeries, BookTable, MessageTable
from .lob_features import lob_feature_matrix, lob_feature_names
from .quant import quant_feature_matrix, quant_feature_names
from .technical import BarSeries, technical_feature_matrix, technical_feature_names

logger = logging.getLogger(__name__)

GROUPS = ("lob", "technical", "quant")
POOLS = ("all",) + GROUPS
DEFAULT_GROUP_WIDTHS = {"lob": 135, "technical": 83, "quant": 55}
MS_PER_DAY = 86_400_000


@dataclass(frozen=True)
class FeatureInfo:
    index: int
    name: str
    group: str
    appendix_ref: str  # sub-group or indicator family inside the group

    def to_dict(self) -> dict:
        return asdict(self)


def feature_manifest(config: LobfeatConfig = DEFAULT_CONFIG) -> List[FeatureInfo]:
    named = [("lob", n, ref) for n, ref in lob_feature_names(config.book.levels)]
    named += [("technical", n, ref) for n, ref in technical_feature_names(config.technical)]
    named += [("quant", n, ref) for n, ref in quant_feature_names(config.quant, config.book.levels)]
    return [FeatureInfo(index=i, name=n, group=g, appendix_ref=ref) for i, (g, n, ref) in enumerate(named)]


def pool_indices(manifest: Sequence[FeatureInfo], pool: str = "all") -> np.ndarray:
    if pool not in POOLS:
        raise ValidationError(f"Unknown feature pool: {pool}")
    return np.array([f.index for f in manifest if pool == "all" or f.group == pool], dtype=np.int64)


@dataclass
class FeatureMatrix:
    """Dense features x samples matrix with per-sample bookkeeping"""
    values: np.ndarray  # D x N float64
    flags: np.ndarray  # N bool, True = excluded from training and testing
    mids: np.ndarray  # N mid-price at block end
    days: np.ndarray  # N int32 day ids
    stocks: np.ndarray  # N int16 stock ids
    manifest: List[FeatureInfo] = field(default_factory=list)

    def __post_init__(self):
        d, n = self.values.shape
        if self.manifest and len(self.manifest) != d:
            raise ValidationError(f"manifest lists {len(self.manifest)} features, matrix has {d}")
        for name in ("flags", "mids", "days", "stocks"):
            if len(getattr(self, name)) != n:
                raise ValidationError(f"{name} has {len(getattr(self, name))} entries, matrix has {n} samples")

    @property
    def n_features(self) -> int:
        return self.values.shape[0]

    @property
    def n_samples(self) -> int:
        return self.values.shape[1]

    def group_widths(self) -> Dict[str, int]:
        return {g: sum(1 for f in self.manifest if f.group == g) for g in GROUPS}

    def restrict(self, pool: str) -> "FeatureMatrix":
        """Keep one feature pool; manifest indices are renumbered"""
        rows = pool_indices(self.manifest, pool)
        manifest = [FeatureInfo(i, f.name, f.group, f.appendix_ref)
                    for i, f in enumerate(self.manifest[r] for r in rows)]
        return FeatureMatrix(self.values[rows], self.flags, self.mids, self.days, self.stocks, manifest)


def _assemble(series: BlockSeries, config: LobfeatConfig) -> np.ndarray:
    lob = lob_feature_matrix(series, config.lob.long_window_blocks)
    technical = technical_feature_matrix(BarSeries.from_blocks(series), config.technical)
    quant = quant_feature_matrix(series, config.quant, load_critical_values(config))
    return np.hstack([lob, technical, quant])


def extract_features(events: MessageTable, book: BookTable, config: LobfeatConfig = DEFAULT_CONFIG,
                     stock: int = 0) -> FeatureMatrix:
    """Extract every feature for one stock's stream, one sample per block"""
    if book.levels != config.book.levels:
        raise ValidationError(f"book has {book.levels} levels, config expects {config.book.levels}")
    manifest = feature_manifest(config)
    series = BlockSeries.from_tables(events, book, config.book.block_size)
    b = series.n_blocks
    if b == 0:
        logger.warning("Stream shorter than one block, nothing extracted")
        return FeatureMatrix(np.zeros((len(manifest), 0)), np.zeros(0, dtype=bool), np.zeros(0),
                             np.zeros(0, dtype=np.int32), np.zeros(0, dtype=np.int16), manifest)

    samples = _assemble(series, config)
    if samples.shape[1] != len(manifest):
        raise ValidationError(f"computed {samples.shape[1]} features, manifest lists {len(manifest)}")
    missing = ~np.isfinite(samples)
    flags = missing.any(axis=1)
    samples[missing] = 0.0

    share = flags.mean()
    if share > 0.5:
        logger.warning(f"{share:.0%} of {b} blocks flagged (stream too short for the longest windows?)")
    logger.info(f"Extracted {len(manifest)} features x {b} blocks for stock {stock} "
                f"({int(flags.sum())} flagged)")
    return FeatureMatrix(
        values=np.ascontiguousarray(samples.T),
        flags=flags,
        mids=series.close.copy(),
        days=(series.last_ts // MS_PER_DAY).astype(np.int32),
        stocks=np.full(b, stock, dtype=np.int16),
        manifest=manifest,
    )


def pool_stocks(matrices: Sequence[FeatureMatrix]) -> FeatureMatrix:
    """Merge per-stock matrices into one stream ordered by day, then stock, then time"""
    if not matrices:
        raise ValidationError("no feature matrices to pool")
    manifest = matrices[0].manifest
    for m in matrices[1:]:
        if [f.name for f in m.manifest] != [f.name for f in manifest]:
            raise ValidationError("feature manifests differ between stocks")
    values = np.hstack([m.values for m in matrices])
    days = np.concatenate([m.days for m in matrices])
    stocks = np.concatenate([m.stocks for m in matrices])
    order = np.lexsort((stocks, days))  # stable: keeps block order inside (day, stock)
    return FeatureMatrix(
        values=values[:, order],
        flags=np.concatenate([m.flags for m in matrices])[order],
        mids=np.concatenate([m.mids for m in matrices])[order],
        days=days[order],
        stocks=stocks[order],
        manifest=list(manifest),
    )


def contiguous_groups(days: np.ndarray, stocks: np.ndarray) -> np.ndarray:
    """Run id per sample; a new run starts whenever the (day, stock) pair changes"""
    if len(days) == 0:
        return np.zeros(0, dtype=np.int64)
    change = np.r_[True, (np.diff(days) != 0) | (np.diff(stocks) != 0)]
    return np.cumsum(change) - 1


def summarize(matrix: FeatureMatrix, manifest: Optional[Sequence[FeatureInfo]] = None) -> dict:
    manifest = manifest or matrix.manifest
    return {
        "features": matrix.n_features,
        "samples": matrix.n_samples,
        "flagged": int(matrix.flags.sum()),
        "groups": {g: sum(1 for f in manifest if f.group == g) for g in GROUPS},
        "days": sorted(int(d) for d in np.unique(matrix.days)),
        "stocks": sorted(int(s) for s in np.unique(matrix.stocks)),
    }
