#!/usr/bin/env python3
"""
lobfeat - Feature assembly and storage tests
"""

import time

import numpy as np
import pytest

from lobfeat.config import BookConfig, LobfeatConfig
from lobfeat.errors import FormatError, ValidationError
from lobfeat.extraction import (
    DEFAULT_GROUP_WIDTHS,
    MS_PER_DAY,
    FeatureMatrix,
    contiguous_groups,
    extract_features,
    feature_manifest,
    pool_indices,
    pool_stocks,
    summarize,
)
from lobfeat.storage import (
    read_artifact,
    read_features,
    read_labels,
    read_manifest_hash,
    write_artifact,
    write_features,
    write_labels,
)
from lobfeat.synth import synthetic_stream


def test_manifest_layout():
    manifest = feature_manifest()
    assert len(manifest) == 273
    assert [f.index for f in manifest] == list(range(273))
    for group, width in DEFAULT_GROUP_WIDTHS.items():
        assert len(pool_indices(manifest, group)) == width
    assert len(pool_indices(manifest, "all")) == 273
    with pytest.raises(ValidationError):
        pool_indices(manifest, "options")


def test_extracted_matrix(extracted):
    assert extracted.values.shape == (273, 300)
    assert extracted.group_widths() == DEFAULT_GROUP_WIDTHS
    assert np.all(np.isfinite(extracted.values))
    assert extracted.flags[0]
    assert not extracted.flags[-1]
    assert np.all(extracted.days == 0)
    assert np.all(extracted.stocks == 0)


def test_flagged_values_are_zeroed(extracted):
    first = extracted.values[:, 0]
    assert np.any(first == 0.0)


def test_restrict_renumbers(extracted):
    quant = extracted.restrict("quant")
    assert quant.n_features == 55
    assert [f.index for f in quant.manifest] == list(range(55))
    np.testing.assert_array_equal(quant.values, extracted.values[218:])


def test_level_mismatch():
    events, book = synthetic_stream(n_events=50, levels=8, seed=1)
    with pytest.raises(ValidationError):
        extract_features(events, book, LobfeatConfig())
    matrix = extract_features(events, book, LobfeatConfig(book=BookConfig(levels=8)))
    assert matrix.n_features == 273 - 11 * 2 - 2


def test_stream_shorter_than_a_block():
    events, book = synthetic_stream(n_events=7, levels=10, seed=1)
    matrix = extract_features(events, book)
    assert matrix.values.shape == (273, 0)


def _tiny(day: int, stock: int, n: int) -> FeatureMatrix:
    return FeatureMatrix(
        values=np.full((2, n), float(stock)),
        flags=np.zeros(n, dtype=bool),
        mids=np.arange(n, dtype=np.float64),
        days=np.full(n, day, dtype=np.int32),
        stocks=np.full(n, stock, dtype=np.int16),
    )


def test_pool_stocks_orders_by_day_then_stock():
    a = FeatureMatrix(
        values=np.zeros((2, 4)), flags=np.zeros(4, dtype=bool), mids=np.arange(4.0),
        days=np.array([0, 0, 1, 1], dtype=np.int32), stocks=np.zeros(4, dtype=np.int16),
    )
    b = _tiny(0, 1, 2)
    pooled = pool_stocks([a, b])
    np.testing.assert_array_equal(pooled.days, [0, 0, 0, 0, 1, 1])
    np.testing.assert_array_equal(pooled.stocks, [0, 0, 1, 1, 0, 0])
    np.testing.assert_array_equal(pooled.mids, [0.0, 1.0, 0.0, 1.0, 2.0, 3.0])
    np.testing.assert_array_equal(contiguous_groups(pooled.days, pooled.stocks), [0, 0, 1, 1, 2, 2])


def test_day_ids_come_from_timestamps():
    events, book = synthetic_stream(n_events=40, levels=10, seed=1, day=3)
    matrix = extract_features(events, book)
    assert np.all(matrix.days == 3)
    assert events.timestamps[0] // MS_PER_DAY == 3


def test_summary(extracted):
    summary = summarize(extracted)
    assert summary["features"] == 273
    assert summary["samples"] == 300
    assert summary["groups"] == DEFAULT_GROUP_WIDTHS
    assert summary["days"] == [0]


def test_feature_file_round_trip(tmp_path, extracted):
    path = write_features(tmp_path / "features.bin", extracted, "abc123")
    loaded = read_features(path)
    np.testing.assert_array_equal(loaded.values, extracted.values)
    np.testing.assert_array_equal(loaded.flags, extracted.flags)
    np.testing.assert_array_equal(loaded.days, extracted.days)
    assert [f.name for f in loaded.manifest] == [f.name for f in extracted.manifest]
    assert read_manifest_hash(path) == "abc123"


def test_feature_file_rejects_garbage(tmp_path, extracted):
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"NOPE" + bytes(40))
    with pytest.raises(FormatError):
        read_features(bad)

    path = write_features(tmp_path / "features.bin", extracted)
    truncated = tmp_path / "truncated.bin"
    truncated.write_bytes(path.read_bytes()[:1000])
    with pytest.raises(FormatError):
        read_features(truncated)
    with pytest.raises(FormatError):
        read_features(tmp_path / "missing.bin")


def test_artifacts(tmp_path):
    path = write_artifact(tmp_path / "r.json", "ranking", {"order": np.arange(3)}, "h")
    document = read_artifact(path, "ranking")
    assert document["order"] == [0, 1, 2]
    assert document["config_hash"] == "h"
    with pytest.raises(FormatError):
        read_artifact(path, "model")
    (tmp_path / "junk.json").write_text("{not json")
    with pytest.raises(FormatError):
        read_artifact(tmp_path / "junk.json")


def test_labels_file(tmp_path):
    path = write_labels(tmp_path / "labels.csv", np.array([0, 2, 1, -1]))
    np.testing.assert_array_equal(read_labels(path), [0, 2, 1, -1])
    (tmp_path / "other.csv").write_text("y\n1\n")
    with pytest.raises(FormatError):
        read_labels(tmp_path / "other.csv")


def test_short_stream_yields_complete_rows():
    events, book = synthetic_stream(n_events=800, levels=10, seed=3)
    matrix = extract_features(events, book)
    assert matrix.values.shape == (273, 80)
    assert (~matrix.flags).any()
    assert not matrix.flags[-1]


@pytest.mark.slow
def test_extraction_speed():
    events, book = synthetic_stream(n_events=20_000, levels=10, seed=4)
    started = time.perf_counter()
    matrix = extract_features(events, book)
    elapsed = time.perf_counter() - started
    assert matrix.values.shape == (273, 2000)
    assert elapsed < 30.0
