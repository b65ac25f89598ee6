"""Poison generation against behavioral classifiers, plus benchmark attacks.

The poisoning GAN trains three networks together. The generator maps noise to
fake feature rows; the discriminator judges whether a row looks like real
target-class data; the classifier is the attacker's stand-in for the victim's
behavioral model. A mixing weight ``alpha`` steers the generator between
fooling the discriminator (stealth) and fooling the classifier (damage):
at alpha=1 the pair behaves as a plain conditional GAN, at alpha=0 the
generator ignores realism entirely.

Generated rows are injected in place of real target-class rows, so dataset
size and class counts never change. The two benchmark attacks (label flipping
and feature manipulation) corrupt class 0 instead.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .data import WorkerDataset
from .errors import AttackError, TrainingError
from .nn import (
    AdamState,
    DenseNetwork,
    LayerSpec,
    adam_step,
    backward,
    bce_loss,
    forward,
    guard_finite,
    init_network,
    network_from_document,
    network_to_document,
)

NOISE_DIM = 100
N_CLASSES = 2
GENERATOR_HIDDEN = (64, 64)
ADVERSARY_HIDDEN = (32, 16)
DEFAULT_TARGET_CLASS = 1  # 1 = canceled


def _add_grads(a: list[np.ndarray], b: list[np.ndarray], wa: float = 1.0, wb: float = 1.0) -> list[np.ndarray]:
    return [wa * ga + wb * gb for ga, gb in zip(a, b)]


def _onehot_rows(n: int, label: int) -> np.ndarray:
    block = np.zeros((n, N_CLASSES))
    block[:, label] = 1.0
    return block


def _with_condition(batch: np.ndarray, label: int) -> np.ndarray:
    return np.hstack([batch, _onehot_rows(batch.shape[0], label)])


def _require_rows(batch: np.ndarray, what: str) -> np.ndarray:
    batch = np.asarray(batch, dtype=float)
    if batch.ndim != 2 or batch.shape[0] == 0:
        raise AttackError(f"{what} must be a non-empty 2-D batch, got shape {batch.shape}")
    return batch


def generator_specs(noise_dim: int = NOISE_DIM, n_features: int = 12, hidden: tuple[int, ...] = GENERATOR_HIDDEN) -> list[LayerSpec]:
    """Noise plus one-hot class condition in, sigmoid feature rows out."""
    dims = (noise_dim + N_CLASSES,) + tuple(hidden)
    specs = [LayerSpec(dims[i], dims[i + 1], activation="leaky_relu") for i in range(len(dims) - 1)]
    specs.append(LayerSpec(dims[-1], n_features, activation="sigmoid"))
    return specs


def discriminator_specs(n_features: int = 12, hidden: tuple[int, ...] = ADVERSARY_HIDDEN) -> list[LayerSpec]:
    """Feature rows plus one-hot class condition in, realness score out."""
    dims = (n_features + N_CLASSES,) + tuple(hidden)
    specs = [LayerSpec(dims[i], dims[i + 1], activation="leaky_relu") for i in range(len(dims) - 1)]
    specs.append(LayerSpec(dims[-1], 1, activation="sigmoid"))
    return specs


def surrogate_classifier_specs(n_features: int = 12, hidden: tuple[int, ...] = ADVERSARY_HIDDEN) -> list[LayerSpec]:
    """Same shape as a behavioral model: features in, cancellation probability out."""
    dims = (n_features,) + tuple(hidden)
    specs = [LayerSpec(dims[i], dims[i + 1], activation="leaky_relu") for i in range(len(dims) - 1)]
    specs.append(LayerSpec(dims[-1], 1, activation="sigmoid"))
    return specs


@dataclass(frozen=True)
class PganHyper:
    """Training knobs.

    The defaults are calibrated jointly: momentum beta1=0.5 keeps the
    adversarial updates from oscillating, and the generator runs an order of
    magnitude slower than its two opponents so they track it instead of
    chasing it. A fast generator collapses to a tight off-manifold cluster;
    the slow one settles into a wide cloud that straddles the boundary, which
    is what actually moves victim error rates.
    """

    epochs: int = 2000
    batch_size: int = 64
    alpha: float = 0.1
    lam: float = 0.8
    lr_generator: float = 2e-4
    lr_discriminator: float = 2e-3
    lr_classifier: float = 1e-3
    beta1: float = 0.5
    seed: int = 0
    noise_dim: int = NOISE_DIM
    target_class: int = DEFAULT_TARGET_CLASS
    generator_hidden: tuple[int, ...] = GENERATOR_HIDDEN
    adversary_hidden: tuple[int, ...] = ADVERSARY_HIDDEN

    def __post_init__(self):
        if self.epochs < 0:
            raise AttackError("epochs must be >= 0")
        if self.batch_size < 2:
            raise AttackError("mini-batch size must be >= 2")
        if not 0.0 <= self.alpha <= 1.0:
            raise AttackError("alpha must be in [0,1]")
        if not 0.0 <= self.lam <= 1.0:
            raise AttackError("lambda weight must be in [0,1]")
        if self.target_class not in (0, 1):
            raise AttackError("target_class must be 0 or 1")
        if self.noise_dim < 1:
            raise AttackError("noise_dim must be >= 1")


@dataclass
class PganModel:
    """The three trained networks plus the settings that produced them."""

    generator: DenseNetwork
    discriminator: DenseNetwork
    classifier: DenseNetwork
    alpha: float
    lam: float
    target_class: int
    noise_dim: int
    seed: int
    epochs: int

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0 or not 0.0 <= self.lam <= 1.0:
            raise AttackError("alpha and lambda must be in [0,1]")
        if self.discriminator.output_dim != 1 or self.classifier.output_dim != 1:
            raise AttackError("discriminator and classifier must have one output")


@dataclass(frozen=True)
class PoisonBatch:
    """Generated rows, all assigned the target-class label."""

    rows: np.ndarray
    label: int
    model_seed: int
    generation_seed: int

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=float)
        if rows.ndim != 2:
            raise AttackError(f"poison rows must be 2-D, got shape {rows.shape}")
        if rows.size and (rows.min() < 0.0 or rows.max() > 1.0):
            raise AttackError("poison rows must lie in [0,1]")
        object.__setattr__(self, "rows", rows)

    def __len__(self) -> int:
        return self.rows.shape[0]


# ---------------------------------------------------------------------------
# The three losses
# ---------------------------------------------------------------------------

def discriminator_loss(
    disc: DenseNetwork,
    real_batch: np.ndarray,
    fake_batch: np.ndarray,
    target_class: int = DEFAULT_TARGET_CLASS,
) -> tuple[float, list[np.ndarray]]:
    """BCE(D(fake), 0) + BCE(D(real), 1); real rows are target-class data."""
    real_batch = _require_rows(real_batch, "real batch")
    fake_batch = _require_rows(fake_batch, "fake batch")
    fake_acts = forward(disc, _with_condition(fake_batch, target_class))
    real_acts = forward(disc, _with_condition(real_batch, target_class))
    fake_value, fake_out = bce_loss(fake_acts[-1], np.zeros_like(fake_acts[-1]))
    real_value, real_out = bce_loss(real_acts[-1], np.ones_like(real_acts[-1]))
    fake_grads, _ = backward(disc, fake_acts, fake_out)
    real_grads, _ = backward(disc, real_acts, real_out)
    return fake_value + real_value, _add_grads(fake_grads, real_grads)


def classifier_loss(
    clf: DenseNetwork,
    fake_batch: np.ndarray,
    real_features: np.ndarray,
    real_labels: np.ndarray,
    lam: float,
    target_class: int = DEFAULT_TARGET_CLASS,
) -> tuple[float, list[np.ndarray]]:
    """lam * BCE(C(fake), target) + (1 - lam) * BCE(C(real), true labels)."""
    if not 0.0 <= lam <= 1.0:
        raise AttackError("lambda weight must be in [0,1]")
    fake_batch = _require_rows(fake_batch, "fake batch")
    real_features = _require_rows(real_features, "real batch")
    real_labels = np.asarray(real_labels, dtype=float).reshape(-1, 1)
    if real_labels.shape[0] != real_features.shape[0]:
        raise AttackError("real labels must match real features")
    fake_acts = forward(clf, fake_batch)
    real_acts = forward(clf, real_features)
    fake_value, fake_out = bce_loss(fake_acts[-1], np.full_like(fake_acts[-1], float(target_class)))
    real_value, real_out = bce_loss(real_acts[-1], real_labels)
    fake_grads, _ = backward(clf, fake_acts, fake_out)
    real_grads, _ = backward(clf, real_acts, real_out)
    value = lam * fake_value + (1.0 - lam) * real_value
    return value, _add_grads(fake_grads, real_grads, lam, 1.0 - lam)


def generator_loss(
    gen: DenseNetwork,
    disc: DenseNetwork,
    clf: DenseNetwork,
    noise_batch: np.ndarray,
    alpha: float,
    target_class: int = DEFAULT_TARGET_CLASS,
) -> tuple[float, list[np.ndarray]]:
    """alpha * BCE(D(G(z)), 1) + (1 - alpha) * BCE(C(G(z)), 1 - target).

    Only the generator's parameter gradients are returned; the loss signal
    flows through D and C but never moves them.
    """
    if not 0.0 <= alpha <= 1.0:
        raise AttackError("alpha must be in [0,1]")
    noise_batch = _require_rows(noise_batch, "noise batch")
    gen_acts = forward(gen, _with_condition(noise_batch, target_class))
    fake = gen_acts[-1]

    disc_acts = forward(disc, _with_condition(fake, target_class))
    disc_value, disc_out = bce_loss(disc_acts[-1], np.ones_like(disc_acts[-1]))
    _, disc_in_grad = backward(disc, disc_acts, disc_out)

    clf_acts = forward(clf, fake)
    clf_value, clf_out = bce_loss(clf_acts[-1], np.full_like(clf_acts[-1], float(1 - target_class)))
    _, clf_in_grad = backward(clf, clf_acts, clf_out)

    n_features = fake.shape[1]
    fake_grad = alpha * disc_in_grad[:, :n_features] + (1.0 - alpha) * clf_in_grad
    gen_grads, _ = backward(gen, gen_acts, fake_grad)
    return alpha * disc_value + (1.0 - alpha) * clf_value, gen_grads


# ---------------------------------------------------------------------------
# Training and generation
# ---------------------------------------------------------------------------

def train_pgan(ds: WorkerDataset, hyper: PganHyper) -> PganModel:
    """Adversarial loop: per iteration one D step, one C step, one G step.

    Deterministic per hyper.seed. epochs=0 returns the untrained
    initialization. Divergence (non-finite or runaway loss) aborts with the
    iteration index.
    """
    if not ds.normalized:
        raise TrainingError("poisoning expects a preprocessed (normalized) dataset")
    if ds.has_missing():
        raise TrainingError("poisoning expects imputed data")
    n0, n1 = ds.class_counts()
    if n0 == 0 or n1 == 0:
        raise TrainingError("both classes must be present")
    target_rows = ds.class_indices(hyper.target_class)
    if target_rows.size < hyper.batch_size or ds.n_rows < hyper.batch_size:
        raise TrainingError(
            f"dataset too small for mini-batch {hyper.batch_size}: "
            f"{target_rows.size} target rows, {ds.n_rows} total"
        )

    n_features = len(ds.schema)
    rng = np.random.default_rng(hyper.seed)
    gen = init_network(generator_specs(hyper.noise_dim, n_features, hyper.generator_hidden), rng)
    disc = init_network(discriminator_specs(n_features, hyper.adversary_hidden), rng)
    clf = init_network(surrogate_classifier_specs(n_features, hyper.adversary_hidden), rng)
    gen_state = AdamState.for_params(gen.parameters(), lr=hyper.lr_generator, beta1=hyper.beta1)
    disc_state = AdamState.for_params(disc.parameters(), lr=hyper.lr_discriminator, beta1=hyper.beta1)
    clf_state = AdamState.for_params(clf.parameters(), lr=hyper.lr_classifier, beta1=hyper.beta1)

    X, y = ds.features, ds.labels
    m = hyper.batch_size
    for iteration in range(hyper.epochs):
        noise = rng.normal(size=(m, hyper.noise_dim))
        fake = forward(gen, _with_condition(noise, hyper.target_class))[-1]

        real_target = X[rng.choice(target_rows, size=m, replace=False)]
        d_value, d_grads = discriminator_loss(disc, real_target, fake, hyper.target_class)
        guard_finite(d_value, "discriminator loss", iteration)
        adam_step(disc.parameters(), d_grads, disc_state)

        mixed = rng.choice(ds.n_rows, size=m, replace=False)
        c_value, c_grads = classifier_loss(
            clf, fake, X[mixed], y[mixed], hyper.lam, hyper.target_class
        )
        guard_finite(c_value, "classifier loss", iteration)
        adam_step(clf.parameters(), c_grads, clf_state)

        g_value, g_grads = generator_loss(
            gen, disc, clf, noise, hyper.alpha, hyper.target_class
        )
        guard_finite(g_value, "generator loss", iteration)
        adam_step(gen.parameters(), g_grads, gen_state)

    return PganModel(
        generator=gen,
        discriminator=disc,
        classifier=clf,
        alpha=hyper.alpha,
        lam=hyper.lam,
        target_class=hyper.target_class,
        noise_dim=hyper.noise_dim,
        seed=hyper.seed,
        epochs=hyper.epochs,
    )


def generate_poison(model: PganModel, n: int, seed: int = 0) -> PoisonBatch:
    """Draw n rows from the trained generator; n=0 gives an empty batch."""
    if n < 0:
        raise AttackError("n must be >= 0")
    rng = np.random.default_rng(seed)
    noise = rng.normal(size=(n, model.noise_dim))
    if n == 0:
        rows = np.empty((0, model.generator.output_dim))
    else:
        rows = forward(model.generator, _with_condition(noise, model.target_class))[-1]
    return PoisonBatch(rows=rows, label=model.target_class, model_seed=model.seed, generation_seed=seed)


def poison_target_indices(
    ds: WorkerDataset, fraction: float, seed: int = 0, target_class: int = DEFAULT_TARGET_CLASS
) -> np.ndarray:
    """The seeded row indices inject_poison will overwrite, sorted ascending."""
    if not 0.0 <= fraction <= 1.0:
        raise AttackError("fraction must be in [0,1]")
    target_rows = ds.class_indices(target_class)
    count = int(np.floor(fraction * target_rows.size))
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(target_rows, size=count, replace=False))


def inject_poison(
    ds: WorkerDataset, batch: PoisonBatch, fraction: float, seed: int = 0
) -> WorkerDataset:
    """Replace floor(fraction * target-class rows) rows with generated ones.

    Row count and class counts are preserved exactly; only feature values at
    the seeded target positions change. Use poison_target_indices with the
    same seed to learn which rows were replaced.
    """
    chosen = poison_target_indices(ds, fraction, seed, batch.label)
    if len(batch) < chosen.size:
        raise AttackError(
            f"poison batch has {len(batch)} rows, injection needs {chosen.size}"
        )
    if batch.rows.shape[1] != len(ds.schema) and chosen.size:
        raise AttackError("poison rows do not match the dataset's feature count")
    out = ds.copy()
    out.features[chosen] = batch.rows[: chosen.size]
    return out


# ---------------------------------------------------------------------------
# Benchmark attacks
# ---------------------------------------------------------------------------

def class0_attack_indices(ds: WorkerDataset, fraction: float, seed: int = 0) -> np.ndarray:
    """Seeded class-0 rows the benchmark attacks corrupt, sorted ascending."""
    if not 0.0 <= fraction <= 1.0:
        raise AttackError("fraction must be in [0,1]")
    rows = ds.class_indices(0)
    count = int(np.floor(fraction * rows.size))
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(rows, size=count, replace=False))


def label_flip_attack(ds: WorkerDataset, fraction: float, seed: int = 0) -> WorkerDataset:
    """Relabel a seeded fraction of class-0 rows as 1; features untouched."""
    chosen = class0_attack_indices(ds, fraction, seed)
    out = ds.copy()
    out.labels[chosen] = 1
    return out


def feature_manipulation_attack(
    ds: WorkerDataset,
    fraction: float,
    pull: float = 0.6,
    jitter: float = 0.05,
    seed: int = 0,
) -> WorkerDataset:
    """Drag seeded class-0 rows toward the class-1 centroid; labels unchanged.

    Each selected row becomes clip(x + pull*(centroid1 - x) + noise, 0, 1)
    with gaussian noise of scale ``jitter``.
    """
    if not 0.0 <= pull <= 1.0:
        raise AttackError("pull must be in [0,1]")
    if jitter < 0.0:
        raise AttackError("jitter must be >= 0")
    ones = ds.class_rows(1)
    if ones.shape[0] == 0:
        raise AttackError("feature manipulation needs class-1 rows for a centroid")
    chosen = class0_attack_indices(ds, fraction, seed)
    centroid = ones.mean(axis=0)
    rng = np.random.default_rng(seed)
    out = ds.copy()
    rows = out.features[chosen]
    noise = rng.normal(0.0, jitter, size=rows.shape) if jitter > 0.0 else 0.0
    out.features[chosen] = np.clip(rows + pull * (centroid - rows) + noise, 0.0, 1.0)
    return out


# ---------------------------------------------------------------------------
# Stealth analysis
# ---------------------------------------------------------------------------

def centroid_deviation_fraction(
    poison, target_rows: np.ndarray, percentile_threshold: float = 5.0
) -> float:
    """Fraction of poison rows falling outside the target class's core.

    Target rows and poison are projected together onto the top two principal
    directions; the cutoff is the (100 - threshold)th percentile of target-row
    distances to the target centroid, so by construction about threshold% of
    the target rows themselves sit beyond it.
    """
    rows = poison.rows if isinstance(poison, PoisonBatch) else np.asarray(poison, dtype=float)
    target_rows = np.asarray(target_rows, dtype=float)
    if rows.ndim != 2 or rows.shape[0] == 0:
        raise AttackError("poison rows must be a non-empty 2-D batch")
    if target_rows.ndim != 2 or target_rows.shape[0] < 3:
        raise AttackError("need at least 3 target rows for the projection")
    if not 0.0 < percentile_threshold <= 50.0:
        raise AttackError("percentile threshold must be in (0, 50]")

    stacked = np.vstack([target_rows, rows])
    centered = stacked - stacked.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    plane = centered @ vt[:2].T
    target_plane = plane[: target_rows.shape[0]]
    poison_plane = plane[target_rows.shape[0] :]

    centroid = target_plane.mean(axis=0)
    target_dist = np.linalg.norm(target_plane - centroid, axis=1)
    cutoff = np.percentile(target_dist, 100.0 - percentile_threshold)
    poison_dist = np.linalg.norm(poison_plane - centroid, axis=1)
    return float(np.mean(poison_dist > cutoff))


# ---------------------------------------------------------------------------
# Checkpointing
# ---------------------------------------------------------------------------

def pgan_to_document(model: PganModel) -> dict:
    return {
        "alpha": model.alpha,
        "lambda": model.lam,
        "target_class": model.target_class,
        "noise_dim": model.noise_dim,
        "seed": model.seed,
        "epochs": model.epochs,
        "generator": network_to_document(model.generator),
        "discriminator": network_to_document(model.discriminator),
        "classifier": network_to_document(model.classifier),
    }


def pgan_from_document(doc: dict) -> PganModel:
    return PganModel(
        generator=network_from_document(doc["generator"]),
        discriminator=network_from_document(doc["discriminator"]),
        classifier=network_from_document(doc["classifier"]),
        alpha=doc["alpha"],
        lam=doc["lambda"],
        target_class=doc["target_class"],
        noise_dim=doc["noise_dim"],
        seed=doc["seed"],
        epochs=doc["epochs"],
    )


def save_pgan(model: PganModel, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(pgan_to_document(model), fh)


def load_pgan(path) -> PganModel:
    with open(path, "r", encoding="utf-8") as fh:
        return pgan_from_document(json.load(fh))
