#!/usr/bin/env python3
"""
lobfeat - Labels, normalization and anchored protocol tests
"""

import numpy as np
import pytest

from lobfeat.classify import Movement
from lobfeat.config import LobfeatConfig, ProtocolConfig
from lobfeat.errors import ValidationError
from lobfeat.extraction import FeatureMatrix
from lobfeat.pipeline import (
    UNLABELED,
    DayData,
    anchored_folds,
    evaluate_ranking,
    evaluation_grid,
    extract_labels,
    grouped_labels,
    rank_training_days,
    rolling_zscore,
    run_protocol,
    smooth_mids,
)
from lobfeat.selection import RankingList
from lobfeat.synth import planted_signal_days


def _protocol_config(**overrides) -> LobfeatConfig:
    protocol = dict(horizons=(1,), methods=("lda1", "entropy"), classifiers=("lda",),
                    feature_counts=(2, 8), curve_step=0, workers=1)
    protocol.update(overrides)
    return LobfeatConfig(protocol=ProtocolConfig(**protocol))


def test_ema_smoother_starts_at_first_mid():
    mids = np.array([100.0, 102.0, 101.0])
    smoothed = smooth_mids(mids, span=3)
    assert smoothed[0] == 100.0
    assert smoothed[1] == pytest.approx(0.5 * 102.0 + 0.5 * 100.0)


def test_centered_smoother():
    smoothed = smooth_mids(np.arange(5.0), span=3, smoother="centered")
    assert np.isnan(smoothed[0]) and np.isnan(smoothed[-1])
    np.testing.assert_allclose(smoothed[1:-1], [1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        smooth_mids(np.arange(5.0), smoother="kalman")


def test_labels_follow_direction():
    rising = 100.0 * 1.01 ** np.arange(30)
    series = extract_labels(rising, horizon=2)
    assert np.all(series.labels[:-2] == Movement.UP)
    assert np.all(series.labels[-2:] == UNLABELED)
    assert np.all(series.flags[-2:])

    falling = extract_labels(rising[::-1], horizon=2)
    assert np.all(falling.labels[:-2] == Movement.DOWN)

    flat = extract_labels(np.full(10, 50.0), horizon=1)
    assert np.all(flat.labels[:-1] == Movement.STATIONARY)


def test_label_arguments():
    with pytest.raises(ValueError):
        extract_labels(np.ones(5), horizon=1, gamma=0.0)
    with pytest.raises(ValueError):
        extract_labels(np.ones(5), horizon=0)


def test_grouped_labels_do_not_cross_runs():
    mids = np.r_[np.full(5, 100.0), np.full(5, 200.0)]
    labels = grouped_labels(mids, np.repeat([0, 1], 5), horizon=1)
    assert labels[4] == UNLABELED
    assert labels[9] == UNLABELED
    assert np.all(labels[[0, 1, 2, 3, 5, 6, 7, 8]] == Movement.STATIONARY)


def test_anchored_folds():
    folds = anchored_folds([0, 0, 1, 1, 2])
    assert [(f.fold_index, f.train_days, f.test_day) for f in folds] == [(1, (0,), 1), (2, (0, 1), 2)]
    train, test = folds[1].masks(np.array([0, 0, 1, 1, 2]))
    np.testing.assert_array_equal(train, [True, True, True, True, False])
    np.testing.assert_array_equal(test, [False, False, False, False, True])
    with pytest.raises(ValidationError):
        anchored_folds([4, 4, 4])


def test_rolling_zscore_uses_final_statistics_for_test():
    values = np.array([[1.0, 2.0, 3.0, 2.0], [5.0, 5.0, 5.0, 9.0]])
    train, test = rolling_zscore(values, np.arange(3), np.array([3]))
    assert train[0, 0] == 0.0
    assert train[0, 2] == pytest.approx((2.0 - 1.0) / np.sqrt(2.0 / 3.0))
    assert test[0, 0] == pytest.approx(0.0)
    np.testing.assert_array_equal(train[1], [0.0, 0.0, 0.0])
    assert np.isfinite(test[1, 0])


def test_rolling_zscore_skips_flagged_samples():
    values = np.array([[1.0, 100.0, 3.0, 2.0]])
    flags = np.array([False, True, False, False])
    _, test = rolling_zscore(values, np.arange(3), np.array([3]), flags)
    assert test[0, 0] == pytest.approx(0.0)


def test_evaluation_grid():
    assert evaluation_grid(20, (5, 50), 10) == [1, 5, 11, 20]
    assert evaluation_grid(273, (5, 50, 100, 200, 273), 0) == [5, 50, 100, 200, 273]


def test_protocol_on_planted_signal(planted):
    report = run_protocol(planted, _protocol_config())
    assert report.n_folds == 2
    assert not report.failed_folds
    frame = report.frame()
    # 1 horizon x 2 folds x 2 methods x 1 classifier x 2 feature counts
    assert len(frame) == 8
    assert set(report.rankings[1]) == {"lda1", "entropy"}
    assert set(report.rankings[1]["lda1"].order[:2]) == {1, 4}

    summary = report.summary()
    assert set(summary["folds"]) == {2}
    best = report.best_rows()
    lda1 = best[best["method"] == "lda1"].iloc[0]
    assert lda1["f1_macro_mean"] > 0.7
    assert report.to_dict()["rankings"]["1"]["lda1"]["order"][:2] in ([2, 5], [5, 2])

    assert set(report.slices((8,))["d"]) == {8}
    curves = report.curves()
    assert list(curves.columns) == ["horizon", "method", "classifier", "d", "f1_macro_mean"]
    assert len(curves) == 4


def test_per_fold_reranking(planted):
    report = run_protocol(planted, _protocol_config(rerank_per_fold=True, methods=("lda1",)))
    assert len(report.frame()) == 4
    assert report.frame()["f1_macro"].min() > 0.6


def test_failed_fold_is_recorded(planted):
    planted.matrix.flags[planted.matrix.days == 2] = True
    report = run_protocol(planted, _protocol_config(methods=("entropy",)))
    assert [f["fold"] for f in report.failed_folds] == [2]
    assert set(report.frame()["fold"]) == {1}


def test_unknown_classifier(planted):
    with pytest.raises(ValidationError):
        run_protocol(planted, _protocol_config(classifiers=("svm",)))


def test_evaluate_fixed_ranking(planted):
    ranking = RankingList("manual", [1, 4, 0, 2, 3, 5, 6, 7], [0.0] * 8)
    result = evaluate_ranking(planted, ranking, "rbfn", 1, 2, _protocol_config())
    assert len(result.rows) == 2
    assert result.last_model is not None
    assert result.frame()["f1_macro"].mean() > 0.7
    with pytest.raises(ValidationError):
        evaluate_ranking(planted, ranking, "rbfn", 1, 9, _protocol_config())


def test_labels_derived_from_mids_when_missing():
    data = planted_signal_days(n_days=2, samples_per_day=20, n_features=4, informative=(1,))
    derived = DayData(data.matrix).labels_for(1, LobfeatConfig())
    # constant mids: everything stationary except each day's last sample
    assert (derived == UNLABELED).sum() == 2
    assert np.all(derived[derived != UNLABELED] == Movement.STATIONARY)


def test_labels_do_not_depend_on_later_mids():
    rng = np.random.default_rng(4)
    mids = 10_000.0 + np.cumsum(rng.normal(0.0, 5.0, 400))
    full = extract_labels(mids, horizon=3)
    cut = extract_labels(mids[:250], horizon=3)
    np.testing.assert_array_equal(cut.labels[:247], full.labels[:247])


def test_training_zscore_does_not_depend_on_later_samples():
    rng = np.random.default_rng(5)
    values = rng.normal(size=(4, 300))
    full, _ = rolling_zscore(values, np.arange(300), np.zeros(0, dtype=np.int64))
    cut, _ = rolling_zscore(values[:, :120], np.arange(120), np.zeros(0, dtype=np.int64))
    np.testing.assert_allclose(cut, full[:, :120])


def test_fold_one_ranking_ignores_later_days(planted):
    matrix = planted.matrix
    labels = planted.labels_for(1, LobfeatConfig())
    keep = matrix.days < 2
    truncated = FeatureMatrix(matrix.values[:, keep], matrix.flags[keep], matrix.mids[keep],
                              matrix.days[keep], matrix.stocks[keep], matrix.manifest)
    scrambled = labels.copy()
    scrambled[matrix.days > 0] = np.random.default_rng(6).integers(0, 3, int((matrix.days > 0).sum()))

    reference = rank_training_days(matrix, labels, "lda1")
    assert rank_training_days(truncated, labels[keep], "lda1") == reference
    assert rank_training_days(matrix, scrambled, "lda1") == reference
    assert set(reference.order[:2]) == {1, 4}
    with pytest.raises(ValidationError):
        rank_training_days(matrix, labels, "lda1", train_days=4)


@pytest.mark.slow
def test_ten_day_protocol_recovers_planted_features():
    data = planted_signal_days(n_days=10, samples_per_day=400, n_features=20, informative=(2, 7, 13),
                               horizons=(1,), seed=11)
    config = _protocol_config(methods=("entropy", "lms1", "lms2", "lda1", "lda2"),
                              classifiers=("lda", "rbfn"), feature_counts=(5, 20))
    report = run_protocol(data, config)
    assert report.n_folds == 9
    assert not report.failed_folds
    for method, ranking in report.rankings[1].items():
        assert {2, 7, 13} <= set(ranking.order[:10]), method
    best = report.best_rows()
    assert best["f1_macro_mean"].max() > 0.8
    assert len(report.frame()) == 9 * 5 * 2 * 2
