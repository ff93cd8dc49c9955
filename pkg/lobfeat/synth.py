#!/usr/bin/env python3
"""
lobfeat - Synthetic limit order book streams and planted-signal feature sets

Streams are random walks of the best bid in integer ticks with a random
spread and random level gaps, so every snapshot satisfies the book
invariants. Planted-signal sets have a few uniform features whose sum
decides the label and Gaussian noise features everywhere else.
"""

import logging
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .classify import Movement
from .extraction import MS_PER_DAY, FeatureInfo, FeatureMatrix
from .lob_core import EVENT_KINDS, MESSAGE_COLUMNS, SIDES, BookTable, MessageTable, Side, book_columns
from .pipeline import DayData

logger = logging.getLogger(__name__)

SESSION_OPEN_MS = 34_200_000  # 09:30


def synthetic_stream(n_events: int = 1000, levels: int = 10, seed: int = 42, day: int = 0,
                     volatility: float = 20.0, base_price: int = 10_000) -> Tuple[MessageTable, BookTable]:
    """One stock-day of events and matching book snapshots"""
    rng = np.random.default_rng(seed)
    floor = 20 * levels + 100

    steps = np.rint(rng.normal(0.0, volatility, n_events)).astype(np.int64)
    best_bid = base_price + np.cumsum(steps)
    best_bid = floor + np.abs(best_bid - floor)  # reflect off the floor
    best_ask = best_bid + rng.integers(1, 4, n_events)

    ask_gaps = np.cumsum(rng.integers(1, 4, (n_events, levels - 1)), axis=1)
    bid_gaps = np.cumsum(rng.integers(1, 4, (n_events, levels - 1)), axis=1)
    zeros = np.zeros((n_events, 1), dtype=np.int64)
    ask_prices = best_ask[:, np.newaxis] + np.hstack([zeros, ask_gaps])
    bid_prices = best_bid[:, np.newaxis] - np.hstack([zeros, bid_gaps])
    ask_volumes = rng.integers(1, 1000, (n_events, levels))
    bid_volumes = rng.integers(1, 1000, (n_events, levels))

    timestamps = day * MS_PER_DAY + SESSION_OPEN_MS + np.cumsum(rng.integers(0, 40, n_events))
    kinds = rng.integers(0, len(EVENT_KINDS), n_events)
    sides = rng.integers(0, len(SIDES), n_events)
    prices = np.where(sides == SIDES.index(Side.ASK), best_ask, best_bid)
    quantities = rng.integers(1, 500, n_events)

    events = MessageTable(timestamps, np.arange(1, n_events + 1) + 1_000_000 * day, prices, quantities,
                          kinds, sides)
    book = BookTable(timestamps, ask_prices, ask_volumes, bid_prices, bid_volumes)
    return events, book


def synthetic_days(n_days: int, events_per_day: int = 2000, levels: int = 10, seed: int = 42,
                   volatility: float = 20.0) -> List[Tuple[MessageTable, BookTable]]:
    return [synthetic_stream(events_per_day, levels, seed + day, day, volatility) for day in range(n_days)]


def write_stream(events: MessageTable, book: BookTable, messages_path: Union[str, Path],
                 book_path: Union[str, Path]):
    """Write a stream in the message and order book CSV layouts the parsers read"""
    messages = pd.DataFrame({
        "timestamp": events.timestamps,
        "id": events.order_ids,
        "price": events.prices,
        "quantity": events.quantities,
        "event": [EVENT_KINDS[k].value for k in events.kinds],
        "side": [SIDES[s].value for s in events.sides],
    }, columns=MESSAGE_COLUMNS)
    messages.to_csv(messages_path, index=False)

    quads = np.stack([book.ask_prices, book.ask_volumes, book.bid_prices, book.bid_volumes], axis=-1)
    rows = np.column_stack([book.timestamps, quads.reshape(len(book), -1)])
    pd.DataFrame(rows, columns=book_columns(book.levels)).to_csv(book_path, index=False)


def write_synthetic_days(out_dir: Union[str, Path], n_days: int, events_per_day: int = 2000,
                         levels: int = 10, seed: int = 42) -> List[Tuple[Path, Path]]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for day, (events, book) in enumerate(synthetic_days(n_days, events_per_day, levels, seed)):
        pair = (out_dir / f"messages_day{day + 1}.csv", out_dir / f"book_day{day + 1}.csv")
        write_stream(events, book, *pair)
        paths.append(pair)
    logger.info(f"Wrote {n_days} synthetic days of {events_per_day} events to {out_dir}")
    return paths


def planted_signal_days(n_days: int = 10, samples_per_day: int = 400, n_features: int = 20,
                        informative: Sequence[int] = (2, 7, 13), noise: float = 0.05,
                        horizons: Sequence[int] = (1, 2, 3), seed: int = 42) -> DayData:
    """Feature set whose labels are a noisy threshold of the sum of the informative rows.

    Informative rows are Uniform(-1, 1), the others standard normal. The
    thresholds split the signal into roughly equal thirds.
    """
    rng = np.random.default_rng(seed)
    n = n_days * samples_per_day
    values = rng.normal(0.0, 1.0, (n_features, n))
    values[list(informative)] = rng.uniform(-1.0, 1.0, (len(informative), n))

    signal = values[list(informative)].sum(axis=0) + rng.normal(0.0, noise, n)
    cut = np.quantile(signal, 2.0 / 3.0) if len(informative) else 0.0
    labels = np.full(n, int(Movement.STATIONARY), dtype=np.int64)
    labels[signal > cut] = Movement.UP
    labels[signal < -cut] = Movement.DOWN

    manifest = [FeatureInfo(i, f"planted_{i}" if i in informative else f"noise_{i}", "quant", "synthetic")
                for i in range(n_features)]
    matrix = FeatureMatrix(
        values=values,
        flags=np.zeros(n, dtype=bool),
        mids=np.full(n, 10_000.0),
        days=np.repeat(np.arange(n_days, dtype=np.int32), samples_per_day),
        stocks=np.zeros(n, dtype=np.int16),
        manifest=manifest,
    )
    return DayData(matrix, {h: labels for h in horizons})
