#!/usr/bin/env python3
"""
lobfeat - Ingestion and block segmentation tests
"""

import numpy as np
import pytest

from lobfeat.errors import ParseError, ValidationError
from lobfeat.lob_core import (
    BlockSeries,
    BookTable,
    EventKind,
    LobSnapshot,
    MessageEvent,
    MessageTable,
    Side,
    book_columns,
    derive_bar,
    mid_price,
    parse_book_file,
    parse_message_file,
    segment_blocks,
)
from lobfeat.synth import synthetic_stream

MESSAGE_HEADER = "timestamp,id,price,quantity,event,side\n"


def test_book_columns_layout():
    assert book_columns(2) == [
        "timestamp",
        "ask_price_1", "ask_vol_1", "bid_price_1", "bid_vol_1",
        "ask_price_2", "ask_vol_2", "bid_price_2", "bid_vol_2",
    ]


def test_parse_written_stream(csv_pair):
    events = parse_message_file(csv_pair[0])
    book = parse_book_file(csv_pair[1], levels=10)
    assert len(events) == len(book) == 200
    assert book.levels == 10
    first = events[0]
    assert isinstance(first.event_kind, EventKind)
    assert isinstance(first.side, Side)
    assert np.all(np.diff(events.timestamps) >= 0)


def test_parse_reports_line_of_bad_integer(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text(MESSAGE_HEADER + "1,1,100,5,Submission,Ask\n2,2,abc,5,Submission,Bid\n")
    with pytest.raises(ParseError) as info:
        parse_message_file(path)
    assert info.value.line == 3


def test_parse_rejects_unknown_event_kind(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text(MESSAGE_HEADER + "1,1,100,5,Modify,Ask\n")
    with pytest.raises(ParseError) as info:
        parse_message_file(path)
    assert info.value.line == 2


def test_parse_rejects_bad_header(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text("time,id,price,qty,event,side\n1,1,100,5,Submission,Ask\n")
    with pytest.raises(ParseError) as info:
        parse_message_file(path)
    assert info.value.line == 1


def test_parse_missing_file_is_parse_error(tmp_path):
    with pytest.raises(ParseError):
        parse_message_file(tmp_path / "nope.csv")


def test_timestamp_regression(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text(MESSAGE_HEADER + "5,1,100,5,Submission,Ask\n3,2,100,5,Execution,Bid\n")
    with pytest.raises(ValidationError) as info:
        parse_message_file(path)
    assert info.value.line == 3


def test_nonpositive_quantity(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text(MESSAGE_HEADER + "1,1,100,0,Submission,Ask\n")
    with pytest.raises(ValidationError):
        parse_message_file(path)


def test_header_only_file_is_empty(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text(MESSAGE_HEADER)
    assert len(parse_message_file(path)) == 0


def test_crossed_book_rejected(tmp_path):
    path = tmp_path / "b.csv"
    header = ",".join(book_columns(2)) + "\n"
    path.write_text(header + "1,101,5,100,5,102,5,99,5\n2,100,5,100,5,102,5,99,5\n")
    with pytest.raises(ValidationError) as info:
        parse_book_file(path, levels=2)
    assert info.value.line == 3


def test_snapshot_invariants():
    snap = LobSnapshot(1, (101, 102), (5, 6), (100, 99), (7, 8))
    assert mid_price(snap) == 100.5
    with pytest.raises(ValidationError):
        LobSnapshot(1, (101, 101), (5, 6), (100, 99), (7, 8))
    with pytest.raises(ValidationError):
        LobSnapshot(1, (101, 102), (5, 0), (100, 99), (7, 8))


def test_segment_blocks_drops_remainder():
    events, book = synthetic_stream(n_events=25, levels=10, seed=1)
    blocks = segment_blocks(events, book, 10)
    assert [b.index for b in blocks] == [0, 1]
    mids = book.mids()[:10]
    bar = derive_bar(blocks[0])
    assert bar.open == mids[0]
    assert bar.close == mids[-1]
    assert bar.high == mids.max()
    assert bar.low == mids.min()
    assert bar.block_volume == int(events.quantities[:10].sum())


def test_segment_blocks_length_mismatch():
    events, book = synthetic_stream(n_events=20, levels=10, seed=1)
    with pytest.raises(ValidationError):
        segment_blocks(events, book[:19], 10)


def test_block_series_agrees_with_blocks():
    events, book = synthetic_stream(n_events=53, levels=10, seed=2)
    series = BlockSeries.from_tables(events, book, 10)
    blocks = segment_blocks(events, book, 10)
    assert series.n_blocks == len(blocks) == 5
    for i, block in enumerate(blocks):
        bar = block.bar
        assert series.open[i] == bar.open
        assert series.close[i] == bar.close
        assert series.volume[i] == bar.block_volume
        np.testing.assert_array_equal(series.ask_prices[i], block.snapshots.ask_prices[-1])
        np.testing.assert_array_equal(series.prev_bid_volumes[i], block.snapshots.bid_volumes[-2])
    assert np.all(series.event_counts.sum(axis=1) == 10)

    rebuilt = BlockSeries.from_blocks(blocks)
    np.testing.assert_array_equal(rebuilt.event_counts, series.event_counts)


def test_book_table_round_trip_through_snapshots():
    _, book = synthetic_stream(n_events=5, levels=10, seed=4)
    again = BookTable.from_snapshots(list(book))
    np.testing.assert_array_equal(again.bid_prices, book.bid_prices)
    np.testing.assert_array_equal(again.mids(), book.mids())


def test_message_table_from_events():
    events = [
        MessageEvent(1000, 1, 341100, 300, EventKind.SUBMISSION, Side.BID),
        MessageEvent(1005, 2, 341200, 50, EventKind.EXECUTION, Side.ASK),
    ]
    table = MessageTable.from_events(events)
    assert len(table) == 2
    np.testing.assert_array_equal(table.prices, [341100, 341200])
    assert list(table.sides) == [1, 0]
