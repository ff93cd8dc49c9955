"""
lobfeat - Shared test fixtures
"""

import numpy as np
import pytest

from lobfeat.config import LobfeatConfig
from lobfeat.extraction import extract_features
from lobfeat.lob_core import BlockSeries
from lobfeat.synth import planted_signal_days, synthetic_stream, write_stream


@pytest.fixture
def config():
    return LobfeatConfig()


@pytest.fixture(scope="session")
def stream():
    """3000 events / 300 blocks of one synthetic stock-day"""
    return synthetic_stream(n_events=3000, levels=10, seed=7)


@pytest.fixture(scope="session")
def block_series(stream):
    events, book = stream
    return BlockSeries.from_tables(events, book, 10)


@pytest.fixture(scope="session")
def extracted(stream):
    events, book = stream
    return extract_features(events, book, LobfeatConfig())


@pytest.fixture
def csv_pair(tmp_path):
    """Small message/book CSV pair on disk"""
    events, book = synthetic_stream(n_events=200, levels=10, seed=11)
    messages_path, book_path = tmp_path / "messages.csv", tmp_path / "book.csv"
    write_stream(events, book, messages_path, book_path)
    return messages_path, book_path


@pytest.fixture
def planted():
    return planted_signal_days(n_days=3, samples_per_day=300, n_features=8, informative=(1, 4),
                               horizons=(1,), seed=5)


@pytest.fixture
def random_bars():
    """Random-walk OHLC bars with high >= max(open, close) and low <= min(open, close)"""
    from lobfeat.technical import BarSeries

    rng = np.random.default_rng(3)
    close = 100.0 + np.cumsum(rng.normal(0.0, 1.0, 300))
    open_ = np.r_[close[0], close[:-1]]
    high = np.maximum(open_, close) + rng.uniform(0.1, 1.0, 300)
    low = np.minimum(open_, close) - rng.uniform(0.1, 1.0, 300)
    return BarSeries.from_arrays(open_, high, low, close, rng.integers(1, 500, 300))
