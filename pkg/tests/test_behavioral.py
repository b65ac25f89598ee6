"""Per-worker cancellation classifiers: training, prediction, metrics."""

import dataclasses

import numpy as np
import pytest

from mcspoison.behavioral import (
    classifier_specs,
    classify,
    evaluate_metrics,
    metrics_csv_row,
    predict_batch,
    predict_cancellation,
    report_from_counts,
    train_behavioral_model,
)
from mcspoison.errors import DimensionError, PipelineError

# ---------------------------------------------------------------------------
# architecture and prediction plumbing


def test_classifier_specs_chain_widths():
    specs = classifier_specs(12, (32, 16))
    assert [(s.input_dim, s.output_dim) for s in specs] == [(12, 32), (32, 16), (16, 1)]
    assert [s.activation for s in specs] == ["leaky_relu", "leaky_relu", "sigmoid"]


def test_untrained_model_predicts_near_half(clean_dataset):
    model = train_behavioral_model(clean_dataset, epochs=0, seed=0)
    probs = predict_batch(model, clean_dataset.features)
    assert probs.shape == (clean_dataset.n_rows,)
    np.testing.assert_allclose(probs, 0.5, atol=0.25)


def test_predict_cancellation_matches_batch(trained_model, split_dataset):
    _, test = split_dataset
    x = test.features[0]
    single = predict_cancellation(trained_model, x)
    assert single == pytest.approx(predict_batch(trained_model, test.features)[0])
    assert 0.0 <= single <= 1.0


def test_predict_cancellation_rejects_batches(trained_model, split_dataset):
    _, test = split_dataset
    with pytest.raises(DimensionError):
        predict_cancellation(trained_model, test.features)


def test_classify_boundary_is_inclusive():
    assert classify(0.5) == 1
    assert classify(np.nextafter(0.5, 0.0)) == 0
    np.testing.assert_array_equal(classify(np.array([0.1, 0.5, 0.9])), [0, 1, 1])


# ---------------------------------------------------------------------------
# training behavior


def test_training_is_deterministic(split_dataset):
    train, _ = split_dataset
    a = train_behavioral_model(train, epochs=20, seed=7)
    b = train_behavioral_model(train, epochs=20, seed=7)
    for wa, wb in zip(a.network.weights, b.network.weights):
        np.testing.assert_array_equal(wa, wb)
    for ba, bb in zip(a.network.biases, b.network.biases):
        np.testing.assert_array_equal(ba, bb)
    assert a.dataset_fingerprint == train.fingerprint()


def test_training_separates_the_classes(trained_model, split_dataset):
    train, _ = split_dataset
    report = evaluate_metrics(trained_model, train)
    assert report.accuracy >= 0.85


def test_training_validates_inputs(raw_worker, clean_dataset):
    with pytest.raises(PipelineError):
        train_behavioral_model(raw_worker, epochs=1)  # not normalized
    single = dataclasses.replace(
        clean_dataset,
        features=clean_dataset.class_rows(0),
        labels=np.zeros(int(clean_dataset.class_counts()[0]), dtype=int),
    )
    with pytest.raises(PipelineError):
        train_behavioral_model(single, epochs=1)
    with pytest.raises(PipelineError):
        train_behavioral_model(clean_dataset, epochs=-1)


# ---------------------------------------------------------------------------
# metrics


def test_report_from_counts_hand_oracle():
    # tp=8 fp=2 tn=7 fn=3 worked out by hand
    r = report_from_counts(tp=8, fp=2, tn=7, fn=3)
    assert r.total == 20
    assert r.accuracy == pytest.approx(15 / 20)
    assert r.precision == pytest.approx(8 / 10)
    assert r.recall == pytest.approx(8 / 11)
    assert r.f1 == pytest.approx(2 * (8 / 10) * (8 / 11) / ((8 / 10) + (8 / 11)))
    assert r.fpr == pytest.approx(2 / 9)
    assert r.fnr == pytest.approx(3 / 11)
    assert r.degenerate == ()


def test_report_flags_zero_denominators_instead_of_nan():
    r = report_from_counts(tp=0, fp=0, tn=5, fn=0)
    assert r.precision == 0.0 and r.recall == 0.0 and r.f1 == 0.0
    assert set(r.degenerate) == {"precision", "recall", "fnr", "f1"}
    assert np.isfinite([r.fpr, r.fnr, r.accuracy, r.f1]).all()


def test_evaluate_counts_cover_the_test_set(trained_model, split_dataset):
    _, test = split_dataset
    r = evaluate_metrics(trained_model, test)
    assert r.total == test.n_rows
    assert r.tp + r.fn == int(test.class_counts()[1])
    assert r.tn + r.fp == int(test.class_counts()[0])


def test_evaluate_rejects_empty_test(trained_model, clean_dataset):
    empty = dataclasses.replace(
        clean_dataset,
        features=clean_dataset.features[:0],
        labels=clean_dataset.labels[:0],
    )
    with pytest.raises(PipelineError):
        evaluate_metrics(trained_model, empty)


def test_metrics_csv_row_carries_run_metadata():
    r = report_from_counts(tp=8, fp=2, tn=7, fn=3)
    row = metrics_csv_row(r, worker_id="w3", attack="none", alpha=0.1, fraction=0.0, seed=4)
    assert row["worker_id"] == "w3"
    assert row["attack"] == "none"
    assert row["alpha"] == 0.1
    assert row["fraction"] == 0.0
    assert row["seed"] == 4
    assert row["fpr"] == pytest.approx(2 / 9)
    assert row["tp"] == 8
