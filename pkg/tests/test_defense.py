"""Autoencoder outlier detection: errors, cutoffs, filtering."""

import csv

import numpy as np
import pytest

from mcspoison.data import WorkerDataset
from mcspoison.defense import (
    AutoencoderModel,
    OutlierReport,
    autoencoder_specs,
    detect_outliers,
    detect_outliers_per_class,
    filter_outliers,
    reconstruct,
    reconstruction_errors,
    report_to_csv,
    train_autoencoder,
)
from mcspoison.errors import DefenseError
from mcspoison.nn import init_network


def zero_autoencoder(n_features=12, bottleneck=6):
    """All-zero weights: the decoder emits sigmoid(0) = 0.5 for every row."""
    enc_specs, dec_specs = autoencoder_specs(n_features, bottleneck)
    rng = np.random.default_rng(0)
    enc, dec = init_network(enc_specs, rng), init_network(dec_specs, rng)
    for net in (enc, dec):
        for w in net.weights:
            w[:] = 0.0
        for b in net.biases:
            b[:] = 0.0
    return AutoencoderModel(
        encoder=enc, decoder=dec, class_label=None, train_error_mean=0.0, train_error_max=0.0
    )


def rows_with_offsets(deltas):
    """Rows at 0.5 everywhere except feature 0, which sits at 0.5 + delta."""
    rows = np.full((len(deltas), 12), 0.5)
    rows[:, 0] += np.asarray(deltas)
    return rows


# ---------------------------------------------------------------------------
# reconstruction errors


def test_zero_model_error_oracle(rng):
    model = zero_autoencoder()
    rows = rng.uniform(size=(9, 12))
    np.testing.assert_allclose(reconstruct(model, rows), 0.5, atol=1e-15)
    np.testing.assert_allclose(
        reconstruction_errors(model, rows), np.mean((rows - 0.5) ** 2, axis=1), atol=1e-15
    )


def test_model_shape_validation():
    enc_specs, dec_specs = autoencoder_specs(12, 6)
    rng = np.random.default_rng(0)
    with pytest.raises(DefenseError, match="bottleneck"):
        AutoencoderModel(
            encoder=init_network(autoencoder_specs(12, 12)[0], rng),
            decoder=init_network(autoencoder_specs(12, 12)[1], rng),
            class_label=None,
            train_error_mean=0.0,
            train_error_max=0.0,
        )
    with pytest.raises(DefenseError):
        AutoencoderModel(
            encoder=init_network(enc_specs, rng),
            decoder=init_network(autoencoder_specs(10, 6)[1], rng),
            class_label=None,
            train_error_mean=0.0,
            train_error_max=0.0,
        )


# ---------------------------------------------------------------------------
# training


def test_training_reduces_reconstruction_error(clean_dataset):
    rows = clean_dataset.class_rows(0)
    untrained = train_autoencoder(rows, epochs=0, seed=3)
    trained = train_autoencoder(rows, epochs=40, seed=3)
    assert (
        reconstruction_errors(trained, rows).mean()
        < reconstruction_errors(untrained, rows).mean()
    )
    errors = reconstruction_errors(trained, rows)
    assert trained.train_error_mean == pytest.approx(float(errors.mean()))
    assert trained.train_error_max == pytest.approx(float(errors.max()))


def test_training_is_deterministic(clean_dataset):
    rows = clean_dataset.class_rows(1)
    a = train_autoencoder(rows, epochs=5, seed=8)
    b = train_autoencoder(rows, epochs=5, seed=8)
    np.testing.assert_array_equal(
        reconstruction_errors(a, rows), reconstruction_errors(b, rows)
    )


def test_training_validates_rows(rng):
    with pytest.raises(DefenseError, match="at least 10"):
        train_autoencoder(rng.uniform(size=(9, 12)))
    with pytest.raises(DefenseError, match="normalized"):
        train_autoencoder(rng.uniform(size=(20, 12)) * 2.0)


# ---------------------------------------------------------------------------
# detection


def test_detect_flags_worst_ceil_fraction():
    model = zero_autoencoder()
    rows = rows_with_offsets(np.linspace(0.05, 0.5, 10))  # errors increase with index
    report = detect_outliers(model, rows, percentile=30.0)
    assert report.flag_count == 3  # ceil(0.3 * 10)
    np.testing.assert_array_equal(report.flagged, [7, 8, 9])
    assert report.cutoff == pytest.approx(report.errors[6])
    # no ties here, so flagged is exactly the rows above the cutoff
    np.testing.assert_array_equal(np.flatnonzero(report.errors > report.cutoff), report.flagged)


def test_detect_breaks_ties_toward_earlier_rows():
    model = zero_autoencoder()
    report = detect_outliers(model, rows_with_offsets([0.1, 0.1, 0.4, 0.4, 0.4]), 40.0)
    assert report.flag_count == 2
    np.testing.assert_array_equal(report.flagged, [2, 3])
    assert report.cutoff == pytest.approx(report.errors[4])


def test_detect_single_row_percentile_floor():
    model = zero_autoencoder()
    report = detect_outliers(model, rows_with_offsets([0.1, 0.2, 0.3, 0.4, 0.45]), 0.5)
    assert report.flag_count == 1  # ceil always flags at least one row
    np.testing.assert_array_equal(report.flagged, [4])


def test_detect_validation(rng):
    model = zero_autoencoder()
    with pytest.raises(DefenseError):
        detect_outliers(model, np.empty((0, 12)), 10.0)
    with pytest.raises(DefenseError):
        detect_outliers(model, rng.uniform(size=(5, 12)), 0.0)
    with pytest.raises(DefenseError):
        detect_outliers(model, rng.uniform(size=(5, 12)), 60.0)


def test_detect_per_class_trains_one_detector_each(clean_dataset):
    reports = detect_outliers_per_class(clean_dataset, percentile=10.0, epochs=3)
    assert set(reports) == {0, 1}
    for label, report in reports.items():
        n = int(clean_dataset.class_counts()[label])
        assert report.flag_count == int(np.ceil(0.10 * n))
        assert report.flagged.max() < n


# ---------------------------------------------------------------------------
# filtering


def test_filter_maps_class_positions_to_dataset_rows(clean_dataset):
    class1 = clean_dataset.class_indices(1)
    report = OutlierReport(
        errors=np.zeros(class1.size), cutoff=0.0, flagged=np.array([0, 5]), percentile=10.0
    )
    out = filter_outliers(clean_dataset, {1: report})
    assert out.n_rows == clean_dataset.n_rows - 2
    n0, n1 = clean_dataset.class_counts()
    assert out.class_counts() == (n0, n1 - 2)
    keep = np.setdiff1d(np.arange(clean_dataset.n_rows), class1[[0, 5]])
    np.testing.assert_array_equal(out.features, clean_dataset.features[keep])
    np.testing.assert_array_equal(out.labels, clean_dataset.labels[keep])


def test_filter_rejects_mismatched_or_emptying_reports():
    ds = WorkerDataset(
        worker_id="w0",
        features=np.full((15, 12), 0.5),
        labels=np.array([0] * 12 + [1] * 3),
        normalized=True,
    )
    bad = OutlierReport(errors=np.zeros(3), cutoff=0.0, flagged=np.array([7]), percentile=10.0)
    with pytest.raises(DefenseError, match="does not match"):
        filter_outliers(ds, {1: bad})
    emptying = OutlierReport(
        errors=np.zeros(3), cutoff=0.0, flagged=np.array([0, 1, 2]), percentile=50.0
    )
    with pytest.raises(DefenseError, match="empty"):
        filter_outliers(ds, {1: emptying})


def test_filter_with_no_reports_is_identity(clean_dataset):
    out = filter_outliers(clean_dataset, {})
    np.testing.assert_array_equal(out.features, clean_dataset.features)
    np.testing.assert_array_equal(out.labels, clean_dataset.labels)


# ---------------------------------------------------------------------------
# reporting


def test_report_csv_round_trips(tmp_path):
    model = zero_autoencoder()
    report = detect_outliers(model, rows_with_offsets(np.linspace(0.05, 0.5, 10)), 30.0)
    path = tmp_path / "outliers.csv"
    report_to_csv(report, path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["row_index", "error", "flagged"]
    assert len(rows) == 11
    flags = [int(r[2]) for r in rows[1:]]
    assert sum(flags) == report.flag_count
    errors = np.array([float(r[1]) for r in rows[1:]])
    np.testing.assert_array_equal(errors, report.errors)
