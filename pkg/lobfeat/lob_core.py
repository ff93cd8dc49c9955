#!/usr/bin/env python3
"""
lobfeat - Message list and order book ingestion

Parses the message CSV and the n-level order book CSV, keeps both as
immutable column tables, cuts the stream into consecutive 10-event blocks
and derives one OHLC bar per block from the block's mid-prices.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from collections.abc import Sequence
from typing import Iterator, List, Tuple, Union

import numpy as np
import pandas as pd

from .errors import ParseError, ValidationError

logger = logging.getLogger(__name__)

MESSAGE_COLUMNS = ["timestamp", "id", "price", "quantity", "event", "side"]
_INTEGER = r"-?\d+"


class EventKind(str, Enum):
    SUBMISSION = "Submission"
    CANCELLATION = "Cancellation"
    EXECUTION = "Execution"


class Side(str, Enum):
    ASK = "Ask"
    BID = "Bid"


EVENT_KINDS = list(EventKind)
SIDES = list(Side)


def book_columns(levels: int) -> List[str]:
    columns = ["timestamp"]
    for k in range(1, levels + 1):
        columns += [f"ask_price_{k}", f"ask_vol_{k}", f"bid_price_{k}", f"bid_vol_{k}"]
    return columns


@dataclass(frozen=True)
class MessageEvent:
    timestamp: int
    order_id: int
    price: int
    quantity: int
    event_kind: EventKind
    side: Side

    def __post_init__(self):
        if self.quantity <= 0:
            raise ValidationError(f"quantity must be positive, got {self.quantity}")
        if self.price <= 0:
            raise ValidationError(f"price must be positive, got {self.price}")


@dataclass(frozen=True)
class LobSnapshot:
    timestamp: int
    ask_prices: Tuple[int, ...]
    ask_volumes: Tuple[int, ...]
    bid_prices: Tuple[int, ...]
    bid_volumes: Tuple[int, ...]

    def __post_init__(self):
        problem = _book_problem(
            np.asarray([self.ask_prices]), np.asarray([self.ask_volumes]),
            np.asarray([self.bid_prices]), np.asarray([self.bid_volumes]),
        )
        if problem is not None:
            raise ValidationError(problem[1])

    @property
    def levels(self) -> int:
        return len(self.ask_prices)


@dataclass(frozen=True)
class OhlcBar:
    open: float
    high: float
    low: float
    close: float
    block_volume: int


def mid_price(snapshot: LobSnapshot) -> float:
    return (snapshot.ask_prices[0] + snapshot.bid_prices[0]) / 2.0


def _book_problem(ask_p, ask_v, bid_p, bid_v):
    """First (row, message) breaking a book invariant, or None"""
    checks = [
        (ask_p[:, 0] <= bid_p[:, 0], "best ask must exceed best bid"),
        ((np.diff(ask_p, axis=1) <= 0).any(axis=1), "ask prices must strictly increase with level"),
        ((np.diff(bid_p, axis=1) >= 0).any(axis=1), "bid prices must strictly decrease with level"),
        ((ask_v <= 0).any(axis=1) | (bid_v <= 0).any(axis=1), "volumes must be positive"),
        ((bid_p <= 0).any(axis=1), "prices must be positive"),
    ]
    first = None
    for bad, message in checks:
        rows = np.flatnonzero(bad)
        if rows.size and (first is None or rows[0] < first[0]):
            first = (int(rows[0]), message)
    return first


class MessageTable(Sequence):
    """Column store of message events; indexing yields MessageEvent"""

    def __init__(self, timestamps, order_ids, prices, quantities, kinds, sides):
        self.timestamps = np.asarray(timestamps, dtype=np.int64)
        self.order_ids = np.asarray(order_ids, dtype=np.int64)
        self.prices = np.asarray(prices, dtype=np.int64)
        self.quantities = np.asarray(quantities, dtype=np.int64)
        self.kinds = np.asarray(kinds, dtype=np.int8)  # index into EVENT_KINDS
        self.sides = np.asarray(sides, dtype=np.int8)  # index into SIDES
        for column in (self.timestamps, self.order_ids, self.prices, self.quantities, self.kinds, self.sides):
            column.setflags(write=False)

    @classmethod
    def empty(cls) -> "MessageTable":
        return cls([], [], [], [], [], [])

    @classmethod
    def from_events(cls, events: Sequence[MessageEvent]) -> "MessageTable":
        return cls(
            [e.timestamp for e in events],
            [e.order_id for e in events],
            [e.price for e in events],
            [e.quantity for e in events],
            [EVENT_KINDS.index(e.event_kind) for e in events],
            [SIDES.index(e.side) for e in events],
        )

    def __len__(self) -> int:
        return len(self.timestamps)

    def __getitem__(self, item: Union[int, slice]):
        if isinstance(item, slice):
            return MessageTable(
                self.timestamps[item], self.order_ids[item], self.prices[item],
                self.quantities[item], self.kinds[item], self.sides[item],
            )
        return MessageEvent(
            timestamp=int(self.timestamps[item]),
            order_id=int(self.order_ids[item]),
            price=int(self.prices[item]),
            quantity=int(self.quantities[item]),
            event_kind=EVENT_KINDS[self.kinds[item]],
            side=SIDES[self.sides[item]],
        )

    def __iter__(self) -> Iterator[MessageEvent]:
        for i in range(len(self)):
            yield self[i]


class BookTable(Sequence):
    """Column store of n-level snapshots; indexing yields LobSnapshot"""

    def __init__(self, timestamps, ask_prices, ask_volumes, bid_prices, bid_volumes):
        self.timestamps = np.asarray(timestamps, dtype=np.int64)
        self.ask_prices = np.asarray(ask_prices, dtype=np.int64)
        self.ask_volumes = np.asarray(ask_volumes, dtype=np.int64)
        self.bid_prices = np.asarray(bid_prices, dtype=np.int64)
        self.bid_volumes = np.asarray(bid_volumes, dtype=np.int64)
        for column in (self.timestamps, self.ask_prices, self.ask_volumes, self.bid_prices, self.bid_volumes):
            column.setflags(write=False)

    @classmethod
    def empty(cls, levels: int = 10) -> "BookTable":
        grid = np.zeros((0, levels), dtype=np.int64)
        return cls([], grid, grid, grid, grid)

    @classmethod
    def from_snapshots(cls, snapshots: Sequence[LobSnapshot]) -> "BookTable":
        return cls(
            [s.timestamp for s in snapshots],
            [s.ask_prices for s in snapshots],
            [s.ask_volumes for s in snapshots],
            [s.bid_prices for s in snapshots],
            [s.bid_volumes for s in snapshots],
        )

    @property
    def levels(self) -> int:
        return self.ask_prices.shape[1]

    def mids(self) -> np.ndarray:
        return (self.ask_prices[:, 0] + self.bid_prices[:, 0]) / 2.0

    def __len__(self) -> int:
        return len(self.timestamps)

    def __getitem__(self, item: Union[int, slice]):
        if isinstance(item, slice):
            return BookTable(
                self.timestamps[item], self.ask_prices[item], self.ask_volumes[item],
                self.bid_prices[item], self.bid_volumes[item],
            )
        return LobSnapshot(
            timestamp=int(self.timestamps[item]),
            ask_prices=tuple(int(p) for p in self.ask_prices[item]),
            ask_volumes=tuple(int(v) for v in self.ask_volumes[item]),
            bid_prices=tuple(int(p) for p in self.bid_prices[item]),
            bid_volumes=tuple(int(v) for v in self.bid_volumes[item]),
        )

    def __iter__(self) -> Iterator[LobSnapshot]:
        for i in range(len(self)):
            yield self[i]


@dataclass(frozen=True)
class Block:
    index: int
    events: MessageTable
    snapshots: BookTable
    bar: OhlcBar


def _read_rows(path: Union[str, Path], expected: List[str]) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except pd.errors.EmptyDataError:
        return pd.DataFrame(columns=expected)
    except pd.errors.ParserError as e:
        raise ParseError(f"malformed CSV in {path}: {e}")
    except OSError as e:
        raise ParseError(f"cannot read {path}: {e}")
    if list(frame.columns) != expected:
        raise ParseError(f"unexpected header {list(frame.columns)[:6]}...", line=1)
    return frame


def _first_bad_line(mask: np.ndarray) -> int:
    # header is line 1, first data row is line 2
    return int(np.flatnonzero(mask)[0]) + 2


def _integer_columns(frame: pd.DataFrame, columns: List[str]) -> np.ndarray:
    ok = np.ones(len(frame), dtype=bool)
    for column in columns:
        ok &= frame[column].astype(str).str.fullmatch(_INTEGER).to_numpy(dtype=bool)
    if not ok.all():
        raise ParseError("expected integer fields", line=_first_bad_line(~ok))
    return frame[columns].astype(np.int64).to_numpy()


def _check_timestamps(timestamps: np.ndarray):
    regress = np.diff(timestamps) < 0
    if regress.any():
        raise ValidationError("timestamp regression", line=int(np.flatnonzero(regress)[0]) + 3)


def parse_message_file(path: Union[str, Path]) -> MessageTable:
    """Read a message CSV (timestamp,id,price,quantity,event,side) in file order"""
    frame = _read_rows(path, MESSAGE_COLUMNS)
    if frame.empty:
        return MessageTable.empty()

    numbers = _integer_columns(frame, ["timestamp", "id", "price", "quantity"])
    kinds = frame["event"].map({k.value: i for i, k in enumerate(EVENT_KINDS)})
    sides = frame["side"].map({s.value: i for i, s in enumerate(SIDES)})
    bad = (kinds.isna() | sides.isna()).to_numpy()
    if bad.any():
        raise ParseError("unknown event kind or side", line=_first_bad_line(bad))

    timestamps, order_ids, prices, quantities = numbers.T
    nonpositive = (quantities <= 0) | (prices <= 0)
    if nonpositive.any():
        raise ValidationError("price and quantity must be positive", line=_first_bad_line(nonpositive))
    _check_timestamps(timestamps)

    logger.info(f"Parsed {len(frame)} message events from {path}")
    return MessageTable(timestamps, order_ids, prices, quantities,
                        kinds.to_numpy(dtype=np.int8), sides.to_numpy(dtype=np.int8))


def parse_book_file(path: Union[str, Path], levels: int = 10) -> BookTable:
    """Read an order book CSV with `levels` ask/bid price+volume quadruples per row"""
    columns = book_columns(levels)
    frame = _read_rows(path, columns)
    if frame.empty:
        return BookTable.empty(levels)

    values = _integer_columns(frame, columns)
    timestamps = values[:, 0]
    quads = values[:, 1:].reshape(len(values), levels, 4)
    ask_p, ask_v, bid_p, bid_v = (quads[:, :, j] for j in range(4))

    problem = _book_problem(ask_p, ask_v, bid_p, bid_v)
    if problem is not None:
        raise ValidationError(problem[1], line=problem[0] + 2)
    _check_timestamps(timestamps)

    logger.info(f"Parsed {len(frame)} book snapshots ({levels} levels) from {path}")
    return BookTable(timestamps, ask_p, ask_v, bid_p, bid_v)


def bars_from_mids(mids: np.ndarray, quantities: np.ndarray) -> Tuple[np.ndarray, ...]:
    """Vectorized OHLC+volume over rows of per-block mids (blocks x block_size)"""
    return (
        mids[:, 0],
        mids.max(axis=1),
        mids.min(axis=1),
        mids[:, -1],
        quantities.sum(axis=1),
    )


def _bar(events: MessageTable, snapshots: BookTable) -> OhlcBar:
    mids = snapshots.mids()[np.newaxis, :]
    quantities = events.quantities[np.newaxis, :]
    o, h, l, c, v = (x[0] for x in bars_from_mids(mids, quantities))
    return OhlcBar(open=float(o), high=float(h), low=float(l), close=float(c), block_volume=int(v))


def derive_bar(block: Block) -> OhlcBar:
    return _bar(block.events, block.snapshots)


def segment_blocks(events: MessageTable, snapshots: BookTable, block_size: int = 10) -> List[Block]:
    """Cut the stream into consecutive non-overlapping blocks; the trailing remainder is dropped"""
    if len(events) != len(snapshots):
        raise ValidationError(f"{len(events)} events but {len(snapshots)} snapshots")
    blocks = []
    for i in range(len(events) // block_size):
        window = slice(i * block_size, (i + 1) * block_size)
        block_events, block_book = events[window], snapshots[window]
        blocks.append(Block(index=i, events=block_events, snapshots=block_book,
                            bar=_bar(block_events, block_book)))
    return blocks


@dataclass(frozen=True)
class BlockSeries:
    """Per-block arrays for the whole stream, one row per block.

    Book columns describe the block's last snapshot; `prev_*` columns the
    snapshot before it (the block's penultimate event), which is what the
    adaptive logistic feature reads.
    """
    first_ts: np.ndarray
    last_ts: np.ndarray
    open: np.ndarray
    high: np.ndarray
    low: np.ndarray
    close: np.ndarray
    volume: np.ndarray
    ask_prices: np.ndarray
    ask_volumes: np.ndarray
    bid_prices: np.ndarray
    bid_volumes: np.ndarray
    prev_ask_volumes: np.ndarray
    prev_bid_volumes: np.ndarray
    prev_best_ask: np.ndarray
    prev_best_bid: np.ndarray
    event_counts: np.ndarray  # blocks x 6, columns kind-major: (sub ask, sub bid, canc ask, ...)

    @property
    def n_blocks(self) -> int:
        return len(self.close)

    @property
    def levels(self) -> int:
        return self.ask_prices.shape[1]

    @classmethod
    def from_tables(cls, events: MessageTable, snapshots: BookTable, block_size: int = 10) -> "BlockSeries":
        if len(events) != len(snapshots):
            raise ValidationError(f"{len(events)} events but {len(snapshots)} snapshots")
        n = (len(events) // block_size) * block_size
        b = n // block_size
        levels = snapshots.levels

        def blocked(column):
            return column[:n].reshape((b, block_size) + column.shape[1:])

        ts = blocked(snapshots.timestamps)
        mids = blocked(snapshots.mids())
        opens, highs, lows, closes, volumes = bars_from_mids(mids, blocked(events.quantities))
        codes = blocked(events.kinds.astype(np.int64) * len(SIDES) + events.sides)
        counts = np.zeros((b, len(EVENT_KINDS) * len(SIDES)), dtype=np.int64)
        for code in range(counts.shape[1]):
            counts[:, code] = (codes == code).sum(axis=1)

        ask_p, ask_v = blocked(snapshots.ask_prices), blocked(snapshots.ask_volumes)
        bid_p, bid_v = blocked(snapshots.bid_prices), blocked(snapshots.bid_volumes)
        return cls(
            first_ts=ts[:, 0].copy(),
            last_ts=ts[:, -1].copy(),
            open=opens, high=highs, low=lows, close=closes,
            volume=volumes.astype(np.float64),
            ask_prices=ask_p[:, -1].astype(np.float64).reshape(b, levels),
            ask_volumes=ask_v[:, -1].astype(np.float64).reshape(b, levels),
            bid_prices=bid_p[:, -1].astype(np.float64).reshape(b, levels),
            bid_volumes=bid_v[:, -1].astype(np.float64).reshape(b, levels),
            prev_ask_volumes=ask_v[:, -2].astype(np.float64).reshape(b, levels),
            prev_bid_volumes=bid_v[:, -2].astype(np.float64).reshape(b, levels),
            prev_best_ask=ask_p[:, -2, 0].astype(np.float64),
            prev_best_bid=bid_p[:, -2, 0].astype(np.float64),
            event_counts=counts,
        )

    @classmethod
    def from_blocks(cls, blocks: Sequence[Block]) -> "BlockSeries":
        if not blocks:
            raise ValidationError("no blocks")
        size = len(blocks[0].events)
        events = MessageTable(*(
            np.concatenate([getattr(blk.events, name) for blk in blocks])
            for name in ("timestamps", "order_ids", "prices", "quantities", "kinds", "sides")
        ))
        book = BookTable(*(
            np.concatenate([getattr(blk.snapshots, name) for blk in blocks])
            for name in ("timestamps", "ask_prices", "ask_volumes", "bid_prices", "bid_volumes")
        ))
        return cls.from_tables(events, book, size)
