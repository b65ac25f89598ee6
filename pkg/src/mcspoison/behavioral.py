"""Per-worker cancellation classifiers and their evaluation metrics.

A behavioral model maps a normalized 12-feature context to the probability
that the worker cancels the task. The platform trains one per worker on that
worker's history; the attack works by corrupting that history.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import WorkerDataset
from .errors import DimensionError, PipelineError
from .nn import (
    AdamState,
    DenseNetwork,
    LayerSpec,
    adam_step,
    forward,
    guard_finite,
    init_network,
    minibatch_indices,
    network_loss,
)

# Hidden widths kept small so the whole benchmark suite runs on a laptop CPU.
BEHAVIORAL_HIDDEN = (32, 16)
DEFAULT_EPOCHS = 150
DEFAULT_BATCH = 64
DEFAULT_LR = 1e-3


def classifier_specs(n_features: int = 12, hidden: tuple[int, ...] = BEHAVIORAL_HIDDEN) -> list[LayerSpec]:
    """Leaky-ReLU hidden stack with a single sigmoid output unit."""
    dims = (n_features,) + tuple(hidden)
    specs = [
        LayerSpec(dims[i], dims[i + 1], activation="leaky_relu") for i in range(len(dims) - 1)
    ]
    specs.append(LayerSpec(dims[-1], 1, activation="sigmoid"))
    return specs


@dataclass
class BehavioralModel:
    """Trained cancellation classifier plus enough metadata to audit it."""

    network: DenseNetwork
    epochs: int
    seed: int
    dataset_fingerprint: str

    def copy(self) -> "BehavioralModel":
        return BehavioralModel(
            network=self.network.copy(),
            epochs=self.epochs,
            seed=self.seed,
            dataset_fingerprint=self.dataset_fingerprint,
        )


def train_behavioral_model(
    ds: WorkerDataset,
    epochs: int = DEFAULT_EPOCHS,
    seed: int = 0,
    batch_size: int = DEFAULT_BATCH,
    lr: float = DEFAULT_LR,
    hidden: tuple[int, ...] = BEHAVIORAL_HIDDEN,
) -> BehavioralModel:
    """Minimize BCE on the worker's history with mini-batch Adam.

    Deterministic per seed. epochs=0 returns the untrained initialization,
    which predicts near 0.5 everywhere.
    """
    if not ds.normalized:
        raise PipelineError("behavioral training expects a normalized dataset")
    if ds.has_missing():
        raise PipelineError("behavioral training expects imputed data")
    n0, n1 = ds.class_counts()
    if n0 == 0 or n1 == 0:
        raise PipelineError("both classes must be present to train")
    if epochs < 0:
        raise PipelineError("epochs must be >= 0")

    rng = np.random.default_rng(seed)
    net = init_network(classifier_specs(len(ds.schema), hidden), rng)
    state = AdamState.for_params(net.parameters(), lr=lr)
    X, y = ds.features, ds.labels.astype(float)
    for epoch in range(epochs):
        for idx in minibatch_indices(ds.n_rows, batch_size, rng):
            value, grads, _ = network_loss(net, X[idx], y[idx], loss="bce")
            guard_finite(value, "behavioral loss", epoch)
            adam_step(net.parameters(), grads, state)
    return BehavioralModel(
        network=net, epochs=epochs, seed=seed, dataset_fingerprint=ds.fingerprint()
    )


def predict_batch(model: BehavioralModel, X: np.ndarray) -> np.ndarray:
    """Cancellation probabilities for a (n, 12) batch, shape (n,)."""
    return forward(model.network, X)[-1][:, 0]


def predict_cancellation(model: BehavioralModel, x: np.ndarray) -> float:
    """Cancellation probability for one feature vector in [0,1]^12."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DimensionError(f"expected a single feature vector, got shape {x.shape}")
    return float(predict_batch(model, x[None, :])[0])


def classify(pc):
    """Label 1 iff the cancellation probability reaches 0.5 (inclusive)."""
    pc = np.asarray(pc)
    labels = (pc >= 0.5).astype(int)
    return int(labels) if labels.ndim == 0 else labels


@dataclass(frozen=True)
class MetricsReport:
    """Confusion counts and the derived rates; class 1 = canceled is positive."""

    tp: int
    fp: int
    tn: int
    fn: int
    fpr: float
    fnr: float
    accuracy: float
    precision: float
    recall: float
    f1: float
    degenerate: tuple[str, ...] = ()

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def as_dict(self) -> dict:
        return {
            "tp": self.tp,
            "fp": self.fp,
            "tn": self.tn,
            "fn": self.fn,
            "fpr": self.fpr,
            "fnr": self.fnr,
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "degenerate": ";".join(self.degenerate),
        }


def report_from_counts(tp: int, fp: int, tn: int, fn: int) -> MetricsReport:
    """Derive every rate from the confusion counts.

    Zero-denominator rates come back as 0.0 and are named in ``degenerate``
    instead of going NaN, so reports stay safe to aggregate.
    """
    degenerate: list[str] = []

    def ratio(num: int, den: int, name: str) -> float:
        if den == 0:
            degenerate.append(name)
            return 0.0
        return num / den

    fpr = ratio(fp, fp + tn, "fpr")
    fnr = ratio(fn, fn + tp, "fnr")
    accuracy = ratio(tp + tn, tp + fp + tn + fn, "accuracy")
    precision = ratio(tp, tp + fp, "precision")
    recall = ratio(tp, tp + fn, "recall")
    if precision + recall == 0.0:
        degenerate.append("f1")
        f1 = 0.0
    else:
        f1 = 2.0 * precision * recall / (precision + recall)
    return MetricsReport(
        tp=tp,
        fp=fp,
        tn=tn,
        fn=fn,
        fpr=fpr,
        fnr=fnr,
        accuracy=accuracy,
        precision=precision,
        recall=recall,
        f1=f1,
        degenerate=tuple(degenerate),
    )


def evaluate_metrics(model: BehavioralModel, test: WorkerDataset) -> MetricsReport:
    if test.n_rows == 0:
        raise PipelineError("cannot evaluate on an empty test set")
    predicted = classify(predict_batch(model, test.features))
    actual = test.labels
    tp = int(np.sum((predicted == 1) & (actual == 1)))
    fp = int(np.sum((predicted == 1) & (actual == 0)))
    tn = int(np.sum((predicted == 0) & (actual == 0)))
    fn = int(np.sum((predicted == 0) & (actual == 1)))
    return report_from_counts(tp, fp, tn, fn)


METRICS_CSV_FIELDS = (
    "worker_id",
    "attack",
    "alpha",
    "fraction",
    "seed",
    "tp",
    "fp",
    "tn",
    "fn",
    "fpr",
    "fnr",
    "accuracy",
    "precision",
    "recall",
    "f1",
    "degenerate",
)


def metrics_csv_row(
    report: MetricsReport, worker_id: str, attack: str, alpha: float, fraction: float, seed: int
) -> dict:
    """One flat CSV row keyed by the experiment cell coordinates."""
    row = {
        "worker_id": worker_id,
        "attack": attack,
        "alpha": alpha,
        "fraction": fraction,
        "seed": seed,
    }
    row.update(report.as_dict())
    return row
