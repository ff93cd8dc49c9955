#!/usr/bin/env python3
"""
lobfeat - First feature group: order book state, spreads, derivatives and intensities

Sub-groups per block (n = book levels, 10 by default):
    u1  raw prices/volumes of the last snapshot, level-major   4n
    u2  per-level spreads and the mid-price                    n + 1
    u3  ask/bid ranges and absolute adjacent-level gaps        2 + 2(n - 1)
    u4  mean ask/bid price and volume                          4
    u5  accumulated price and volume differences               2
    u6  dP/dt and dV/dt between consecutive blocks             4n
    u7  event intensity per kind x side inside the block       6
    u8  1{short intensity > long-window intensity}             6
    u9  d(intensity)/dt between consecutive blocks             6

Values that need history not yet seen are NaN; the extractor turns them
into 0 and flags the sample.
"""

from typing import List, Sequence, Tuple

import numpy as np

from .lob_core import EVENT_KINDS, SIDES, Block, BlockSeries

QUAD = ("ask_price", "ask_volume", "bid_price", "bid_volume")


def lob_layout(levels: int = 10) -> List[Tuple[str, int]]:
    return [
        ("u1", 4 * levels), ("u2", levels + 1), ("u3", 2 * levels), ("u4", 4), ("u5", 2),
        ("u6", 4 * levels), ("u7", 6), ("u8", 6), ("u9", 6),
    ]


def lob_feature_names(levels: int = 10) -> List[Tuple[str, str]]:
    """(name, sub-group) for every column, in matrix order"""
    streams = [f"{kind.value.lower()}_{side.value.lower()}" for kind in EVENT_KINDS for side in SIDES]
    names = [(f"{q}_{k}", "u1") for k in range(1, levels + 1) for q in QUAD]
    names += [(f"spread_{k}", "u2") for k in range(1, levels + 1)] + [("mid_price", "u2")]
    names += [("ask_range", "u3"), ("bid_range", "u3")]
    names += [(f"ask_gap_{i}", "u3") for i in range(1, levels)]
    names += [(f"bid_gap_{i}", "u3") for i in range(1, levels)]
    names += [(n, "u4") for n in ("mean_ask_price", "mean_bid_price", "mean_ask_volume", "mean_bid_volume")]
    names += [("accumulated_price_diff", "u5"), ("accumulated_volume_diff", "u5")]
    names += [(f"d_{q}_{k}_dt", "u6") for k in range(1, levels + 1) for q in QUAD]
    names += [(f"intensity_{s}", "u7") for s in streams]
    names += [(f"intensity_above_long_{s}", "u8") for s in streams]
    names += [(f"d_intensity_{s}_dt", "u9") for s in streams]
    return names


def _basic(ask_p, ask_v, bid_p, bid_v) -> np.ndarray:
    return np.stack([ask_p, ask_v, bid_p, bid_v], axis=-1).reshape(len(ask_p), -1)


def _time_insensitive(ask_p, ask_v, bid_p, bid_v) -> np.ndarray:
    spreads = ask_p - bid_p
    mid = (ask_p[:, :1] + bid_p[:, :1]) / 2.0
    ranges = np.column_stack([ask_p[:, -1] - ask_p[:, 0], bid_p[:, 0] - bid_p[:, -1]])
    gaps = np.hstack([np.abs(np.diff(ask_p, axis=1)), np.abs(np.diff(bid_p, axis=1))])
    means = np.column_stack([ask_p.mean(axis=1), bid_p.mean(axis=1), ask_v.mean(axis=1), bid_v.mean(axis=1)])
    accumulated = np.column_stack([spreads.sum(axis=1), (ask_v - bid_v).sum(axis=1)])
    return np.hstack([spreads, mid, ranges, gaps, means, accumulated])


def positive_intervals(dt: np.ndarray) -> np.ndarray:
    """Replace zero intervals with the smallest positive interval seen so far (NaN before any)"""
    dt = np.asarray(dt, dtype=np.float64)
    running = np.minimum.accumulate(np.where(dt > 0, dt, np.inf)) if len(dt) else dt
    out = np.where(dt > 0, dt, running)
    out[np.isinf(out)] = np.nan
    return out


def _rolling_sum(values: np.ndarray, window: int) -> np.ndarray:
    """Trailing sum over `window` rows; rows without a full window are NaN"""
    out = np.full(values.shape, np.nan)
    if len(values) >= window:
        csum = np.cumsum(np.vstack([np.zeros((1,) + values.shape[1:]), values]), axis=0)
        out[window - 1:] = csum[window:] - csum[:-window]
    return out


def _time_sensitive(series: BlockSeries, long_window: int) -> np.ndarray:
    b = series.n_blocks
    book = _basic(series.ask_prices, series.ask_volumes, series.bid_prices, series.bid_volumes)

    # block-to-block derivatives
    dt = np.full(b, np.nan)
    if b > 1:
        dt[1:] = positive_intervals(np.diff(series.last_ts) / 1000.0)
    derivatives = np.full(book.shape, np.nan)
    derivatives[1:] = np.diff(book, axis=0) / dt[1:, np.newaxis]

    counts = series.event_counts.astype(np.float64)
    span = positive_intervals((series.last_ts - series.first_ts) / 1000.0)
    intensity = counts / span[:, np.newaxis]

    long_counts = _rolling_sum(counts, long_window)
    long_span = np.full(b, np.nan)
    if b >= long_window:
        long_span[long_window - 1:] = positive_intervals(
            (series.last_ts[long_window - 1:] - series.first_ts[: b - long_window + 1]) / 1000.0
        )
    long_intensity = long_counts / long_span[:, np.newaxis]
    above = np.where(np.isnan(long_intensity) | np.isnan(intensity), np.nan,
                     (intensity > long_intensity).astype(np.float64))

    acceleration = np.full(intensity.shape, np.nan)
    acceleration[1:] = np.diff(intensity, axis=0) / dt[1:, np.newaxis]
    return np.hstack([derivatives, intensity, above, acceleration])


def lob_feature_matrix(series: BlockSeries, long_window: int = 50) -> np.ndarray:
    """All first-group features, blocks x (4n + n + 1 + 2n + 6 + 4n + 18)"""
    snapshot = (series.ask_prices, series.ask_volumes, series.bid_prices, series.bid_volumes)
    return np.hstack([_basic(*snapshot), _time_insensitive(*snapshot), _time_sensitive(series, long_window)])


def _last_snapshot(block: Block):
    book = block.snapshots
    return tuple(np.asarray(getattr(book, name)[-1:], dtype=np.float64)
                 for name in ("ask_prices", "ask_volumes", "bid_prices", "bid_volumes"))


def basic_features(block: Block) -> np.ndarray:
    return _basic(*_last_snapshot(block))[0]


def time_insensitive_features(block: Block) -> np.ndarray:
    return _time_insensitive(*_last_snapshot(block))[0]


def time_sensitive_features(block: Block, history: Sequence[Block], long_window: int = 50) -> np.ndarray:
    """u6-u9 for `block` given the blocks preceding it (oldest first)"""
    series = BlockSeries.from_blocks(list(history) + [block])
    return _time_sensitive(series, long_window)[-1]
