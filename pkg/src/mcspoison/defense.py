"""Autoencoder outlier detection: the platform's cleaning step before training.

One autoencoder per class learns to compress that class's rows through a
narrow bottleneck; rows it reconstructs badly are flagged as outliers and
dropped. Detection quality is exactly what the poisoning attack tries to
stay under.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .data import WorkerDataset
from .errors import DefenseError
from .nn import (
    AdamState,
    DenseNetwork,
    LayerSpec,
    adam_step,
    backward,
    forward,
    guard_finite,
    init_network,
    minibatch_indices,
    mse_loss,
)

BOTTLENECK_DIM = 6
DEFAULT_AE_EPOCHS = 50
DEFAULT_AE_BATCH = 64
DEFAULT_AE_LR = 1e-2


@dataclass
class AutoencoderModel:
    """Encoder compresses to the bottleneck, decoder reconstructs to [0,1]."""

    encoder: DenseNetwork
    decoder: DenseNetwork
    class_label: int | None
    train_error_mean: float
    train_error_max: float

    def __post_init__(self):
        if self.encoder.input_dim != self.decoder.output_dim:
            raise DefenseError("encoder input and decoder output dims must agree")
        if self.encoder.output_dim >= self.encoder.input_dim:
            raise DefenseError("bottleneck must be narrower than the feature space")


def autoencoder_specs(n_features: int = 12, bottleneck: int = BOTTLENECK_DIM) -> tuple[list[LayerSpec], list[LayerSpec]]:
    encoder = [LayerSpec(n_features, bottleneck, activation="relu")]
    decoder = [LayerSpec(bottleneck, n_features, activation="sigmoid")]
    return encoder, decoder


def reconstruct(model: AutoencoderModel, rows: np.ndarray) -> np.ndarray:
    return forward(model.decoder, forward(model.encoder, rows)[-1])[-1]


def reconstruction_errors(model: AutoencoderModel, rows: np.ndarray) -> np.ndarray:
    """Per-row mean squared reconstruction error, shape (n,)."""
    rows = np.asarray(rows, dtype=float)
    diff = reconstruct(model, rows) - rows
    return np.mean(diff * diff, axis=1)


def train_autoencoder(
    rows: np.ndarray,
    epochs: int = DEFAULT_AE_EPOCHS,
    seed: int = 0,
    bottleneck: int = BOTTLENECK_DIM,
    batch_size: int = DEFAULT_AE_BATCH,
    lr: float = DEFAULT_AE_LR,
    class_label: int | None = None,
) -> AutoencoderModel:
    """Minimize mean squared reconstruction error with mini-batch Adam.

    Deterministic per seed; epochs=0 returns the untrained initialization.
    """
    rows = np.asarray(rows, dtype=float)
    if rows.ndim != 2 or rows.shape[0] < 10:
        raise DefenseError(f"need at least 10 rows to train, got shape {rows.shape}")
    if rows.min() < 0.0 or rows.max() > 1.0:
        raise DefenseError("rows must be normalized to [0,1]")
    enc_specs, dec_specs = autoencoder_specs(rows.shape[1], bottleneck)
    rng = np.random.default_rng(seed)
    encoder = init_network(enc_specs, rng)
    decoder = init_network(dec_specs, rng)
    params = encoder.parameters() + decoder.parameters()
    state = AdamState.for_params(params, lr=lr)

    for epoch in range(epochs):
        for idx in minibatch_indices(rows.shape[0], batch_size, rng):
            batch = rows[idx]
            enc_acts = forward(encoder, batch)
            dec_acts = forward(decoder, enc_acts[-1])
            value, out_grad = mse_loss(dec_acts[-1], batch)
            guard_finite(value, "autoencoder loss", epoch)
            dec_grads, code_grad = backward(decoder, dec_acts, out_grad)
            enc_grads, _ = backward(encoder, enc_acts, code_grad)
            adam_step(params, enc_grads + dec_grads, state)

    model = AutoencoderModel(
        encoder=encoder,
        decoder=decoder,
        class_label=class_label,
        train_error_mean=0.0,
        train_error_max=0.0,
    )
    errors = reconstruction_errors(model, rows)
    model.train_error_mean = float(errors.mean())
    model.train_error_max = float(errors.max())
    return model


@dataclass(frozen=True)
class OutlierReport:
    """Per-row errors with the cutoff and the flagged row positions."""

    errors: np.ndarray
    cutoff: float
    flagged: np.ndarray  # sorted positions into the evaluated rows
    percentile: float

    @property
    def flag_count(self) -> int:
        return int(self.flagged.size)


def detect_outliers(model: AutoencoderModel, rows: np.ndarray, percentile: float) -> OutlierReport:
    """Flag the worst-reconstructed ceil(percentile%) of rows.

    The cutoff is the largest unflagged error, so in the generic no-ties case
    the flagged set is exactly the rows with error above the cutoff. Ties at
    the boundary are flagged in ascending row order until the count is exact.
    """
    rows = np.asarray(rows, dtype=float)
    if rows.ndim != 2 or rows.shape[0] == 0:
        raise DefenseError("nothing to evaluate")
    if not 0.0 < percentile <= 50.0:
        raise DefenseError("percentile must be in (0, 50]")
    errors = reconstruction_errors(model, rows)
    n = errors.size
    k = int(np.ceil(percentile / 100.0 * n))
    order = np.lexsort((np.arange(n), -errors))
    flagged = np.sort(order[:k])
    unflagged = order[k:]
    cutoff = float(errors[unflagged].max()) if unflagged.size else float(errors.min()) - 1.0
    return OutlierReport(errors=errors, cutoff=cutoff, flagged=flagged, percentile=percentile)


def filter_outliers(ds: WorkerDataset, reports: dict[int, OutlierReport]) -> WorkerDataset:
    """Drop every flagged row; report positions are within each class block."""
    drop: list[np.ndarray] = []
    for label, report in reports.items():
        class_rows = ds.class_indices(label)
        if report.flagged.size and report.flagged.max() >= class_rows.size:
            raise DefenseError(f"report for class {label} does not match this dataset")
        if report.flagged.size >= class_rows.size:
            raise DefenseError(f"removal would empty class {label}")
        drop.append(class_rows[report.flagged])
    keep = np.setdiff1d(np.arange(ds.n_rows), np.concatenate(drop) if drop else [])
    out = ds.copy()
    out.features = ds.features[keep].copy()
    out.labels = ds.labels[keep].copy()
    return out


def detect_outliers_per_class(
    ds: WorkerDataset,
    percentile: float,
    epochs: int = DEFAULT_AE_EPOCHS,
    seed: int = 0,
) -> dict[int, OutlierReport]:
    """Train one detector per class on its own rows and flag within each class."""
    reports: dict[int, OutlierReport] = {}
    for label in (0, 1):
        rows = ds.class_rows(label)
        if rows.shape[0] == 0:
            continue
        model = train_autoencoder(rows, epochs=epochs, seed=seed + label, class_label=label)
        reports[label] = detect_outliers(model, rows, percentile)
    return reports


def report_to_csv(report: OutlierReport, path):
    flagged = set(report.flagged.tolist())
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["row_index", "error", "flagged"])
        for i, err in enumerate(report.errors):
            writer.writerow([i, repr(float(err)), int(i in flagged)])
