"""Worker datasets: CSV ingestion, preprocessing chain, synthetic generation.

A worker's behavioral history is a 12-feature table with a binary label
(1 = the worker canceled the task). Preprocessing always runs in the order
impute -> balance -> normalize; ``preprocess`` wraps the chain.

Missing cells are NaN in memory and empty cells on disk, never magic numbers.
"""

from __future__ import annotations

import csv
import hashlib
import json
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, IngestionError, PipelineError

WORKER_CATEGORY = "worker-related"
TASK_CATEGORY = "task-related"


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    category: str
    unit: str = ""


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered feature descriptors; the default mirrors the ride-hailing table."""

    features: tuple[FeatureSpec, ...]

    def __post_init__(self):
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise ConfigError("duplicate feature names in schema")

    @property
    def names(self) -> list[str]:
        return [f.name for f in self.features]

    def __len__(self) -> int:
        return len(self.features)


DEFAULT_SCHEMA = FeatureSchema(
    features=(
        FeatureSpec("assigned_tasks", WORKER_CATEGORY, "count/day"),
        FeatureSpec("completed_tasks", WORKER_CATEGORY, "count/day"),
        FeatureSpec("worker_rating", WORKER_CATEGORY, "stars"),
        FeatureSpec("car_rating", WORKER_CATEGORY, "stars"),
        FeatureSpec("start_time", TASK_CATEGORY, "hour"),
        FeatureSpec("requestor_rating", TASK_CATEGORY, "stars"),
        FeatureSpec("price_adjustment_fee", TASK_CATEGORY, "currency"),
        FeatureSpec("precipitation", TASK_CATEGORY, "inch"),
        FeatureSpec("max_temp", TASK_CATEGORY, "celsius"),
        FeatureSpec("min_temp", TASK_CATEGORY, "celsius"),
        FeatureSpec("wind_speed", TASK_CATEGORY, "mph"),
        FeatureSpec("wind_gust", TASK_CATEGORY, "mph"),
    )
)

N_FEATURES = len(DEFAULT_SCHEMA)


@dataclass(frozen=True)
class MinMaxScaler:
    """Per-feature affine map to [0,1]; constant features map to 0."""

    mins: np.ndarray
    maxs: np.ndarray

    @property
    def ranges(self) -> np.ndarray:
        r = self.maxs - self.mins
        return np.where(r > 0.0, r, 1.0)

    def transform(self, values: np.ndarray) -> np.ndarray:
        return (values - self.mins) / self.ranges

    def inverse(self, values: np.ndarray) -> np.ndarray:
        return values * self.ranges + self.mins

    def to_dict(self) -> dict:
        return {"mins": self.mins.tolist(), "maxs": self.maxs.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "MinMaxScaler":
        return cls(mins=np.asarray(d["mins"], dtype=float), maxs=np.asarray(d["maxs"], dtype=float))


@dataclass
class WorkerDataset:
    """One worker's labeled behavioral records. NaN marks a missing cell."""

    worker_id: str
    features: np.ndarray  # (n_rows, n_features), float, NaN = missing
    labels: np.ndarray  # (n_rows,), values in {0, 1}
    schema: FeatureSchema = DEFAULT_SCHEMA
    normalized: bool = False
    scaler: MinMaxScaler | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels, dtype=int)
        if self.features.ndim != 2 or self.features.shape[1] != len(self.schema):
            raise IngestionError(
                f"features must be (n, {len(self.schema)}), got {self.features.shape}"
            )
        if self.labels.shape != (self.features.shape[0],):
            raise IngestionError("labels length must match feature rows")
        if not np.isin(self.labels, (0, 1)).all():
            raise IngestionError("labels must be 0 or 1")

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    def class_indices(self, label: int) -> np.ndarray:
        return np.flatnonzero(self.labels == label)

    def class_rows(self, label: int) -> np.ndarray:
        return self.features[self.labels == label]

    def class_counts(self) -> tuple[int, int]:
        return int(np.sum(self.labels == 0)), int(np.sum(self.labels == 1))

    def missing_mask(self) -> np.ndarray:
        return np.isnan(self.features)

    def has_missing(self) -> bool:
        return bool(np.isnan(self.features).any())

    def copy(self) -> "WorkerDataset":
        return WorkerDataset(
            worker_id=self.worker_id,
            features=self.features.copy(),
            labels=self.labels.copy(),
            schema=self.schema,
            normalized=self.normalized,
            scaler=self.scaler,
        )

    def fingerprint(self) -> str:
        """Content hash tying trained models to the exact data variant."""
        h = hashlib.sha256()
        h.update(self.worker_id.encode("utf-8"))
        h.update(np.ascontiguousarray(self.features).tobytes())
        h.update(np.ascontiguousarray(self.labels).tobytes())
        return h.hexdigest()


# ---------------------------------------------------------------------------
# CSV ingestion and export
# ---------------------------------------------------------------------------

def load_csv(path, schema: FeatureSchema = DEFAULT_SCHEMA) -> list[WorkerDataset]:
    """Load a multi-worker CSV into one dataset per worker id.

    Expected header: ``worker_id,label,<schema names>``. Empty cells become
    NaN. Worker order follows first appearance in the file.
    """
    expected = ["worker_id", "label"] + schema.names
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestionError(f"{path}: empty file") from None
        if header != expected:
            raise IngestionError(
                f"{path}: header {header!r} does not match expected {expected!r}"
            )
        per_worker: dict[str, tuple[list[list[float]], list[int]]] = {}
        order: list[str] = []
        for row_no, row in enumerate(reader, start=2):
            if len(row) != len(expected):
                raise IngestionError(f"{path} row {row_no}: expected {len(expected)} cells")
            worker_id = row[0]
            try:
                label_value = float(row[1])
            except ValueError:
                raise IngestionError(
                    f"{path} row {row_no}, column 'label': non-numeric cell {row[1]!r}"
                ) from None
            if label_value not in (0.0, 1.0):
                raise IngestionError(
                    f"{path} row {row_no}, column 'label': label must be 0 or 1, got {row[1]!r}"
                )
            values: list[float] = []
            for name, cell in zip(schema.names, row[2:]):
                if cell == "":
                    values.append(np.nan)
                    continue
                try:
                    values.append(float(cell))
                except ValueError:
                    raise IngestionError(
                        f"{path} row {row_no}, column {name!r}: non-numeric cell {cell!r}"
                    ) from None
            if worker_id not in per_worker:
                per_worker[worker_id] = ([], [])
                order.append(worker_id)
            per_worker[worker_id][0].append(values)
            per_worker[worker_id][1].append(int(label_value))
    return [
        WorkerDataset(
            worker_id=wid,
            features=np.asarray(per_worker[wid][0], dtype=float),
            labels=np.asarray(per_worker[wid][1], dtype=int),
            schema=schema,
        )
        for wid in order
    ]


def save_csv(datasets: list[WorkerDataset], path):
    """Inverse of :func:`load_csv`; floats use repr so round-trips are exact."""
    if not datasets:
        raise IngestionError("nothing to save")
    schema = datasets[0].schema
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["worker_id", "label"] + schema.names)
        for ds in datasets:
            for row, label in zip(ds.features, ds.labels):
                cells = ["" if np.isnan(v) else repr(float(v)) for v in row]
                writer.writerow([ds.worker_id, int(label)] + cells)


def sidecar_document(schema: FeatureSchema, scaler: MinMaxScaler | None = None) -> dict:
    doc = {
        "schema": [
            {"name": f.name, "category": f.category, "unit": f.unit}
            for f in schema.features
        ]
    }
    if scaler is not None:
        doc["scaler"] = scaler.to_dict()
    return doc


def save_sidecar(path, schema: FeatureSchema, scaler: MinMaxScaler | None = None):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(sidecar_document(schema, scaler), fh, indent=2, sort_keys=True)


def load_sidecar(path) -> tuple[FeatureSchema, MinMaxScaler | None]:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    schema = FeatureSchema(
        features=tuple(
            FeatureSpec(d["name"], d["category"], d.get("unit", "")) for d in doc["schema"]
        )
    )
    scaler = MinMaxScaler.from_dict(doc["scaler"]) if "scaler" in doc else None
    return schema, scaler


# ---------------------------------------------------------------------------
# Preprocessing chain: impute -> balance -> normalize
# ---------------------------------------------------------------------------

def impute_pca(ds: WorkerDataset, components: int = 6, iterations: int = 1) -> WorkerDataset:
    """Fill missing cells from a low-rank reconstruction of the feature table.

    Missing cells start at their column means; each pass centers the table,
    projects it onto the top-``components`` principal directions, and replaces
    the missing cells (only) with the reconstruction. One pass is the default;
    extra ``iterations`` refine the fill toward the low-rank fixpoint, which
    matters when the data is genuinely low-rank. Observed cells never change.
    """
    if ds.normalized:
        raise PipelineError("impute before normalization, not after")
    if not 1 <= components < len(ds.schema):
        raise PipelineError(f"components must be in [1, {len(ds.schema) - 1}]")
    mask = ds.missing_mask()
    if not mask.any():
        return ds.copy()
    if mask.all(axis=0).any():
        bad = [ds.schema.names[j] for j in np.flatnonzero(mask.all(axis=0))]
        raise PipelineError(f"cannot impute all-missing column(s): {bad}")

    filled = ds.features.copy()
    col_means = np.nanmean(ds.features, axis=0)
    filled[mask] = np.take(col_means, np.nonzero(mask)[1])
    for _ in range(max(1, iterations)):
        mu = filled.mean(axis=0)
        centered = filled - mu
        _, _, vt = np.linalg.svd(centered, full_matrices=False)
        vk = vt[:components]
        reconstructed = centered @ vk.T @ vk + mu
        delta = np.abs(reconstructed[mask] - filled[mask]).max()
        filled[mask] = reconstructed[mask]
        if delta < 1e-12:
            break
    out = ds.copy()
    out.features = filled
    return out


def smote_balance(ds: WorkerDataset, k_neighbors: int = 5, seed: int = 0) -> WorkerDataset:
    """Equalize class counts by interpolating new minority rows.

    Each synthetic row is x + u * (neighbor - x) for a random minority row x,
    one of its k nearest minority neighbors, and u ~ U[0,1], so synthesis never
    leaves the minority class's convex hull.
    """
    if ds.has_missing():
        raise PipelineError("balance after imputation: dataset still has missing cells")
    n0, n1 = ds.class_counts()
    if n0 == 0 or n1 == 0:
        raise PipelineError("both classes must be present to balance")
    if n0 == n1:
        return ds.copy()
    minority = 0 if n0 < n1 else 1
    n_min, n_maj = min(n0, n1), max(n0, n1)
    if n_min < 2:
        raise PipelineError("minority class needs at least 2 rows for interpolation")

    rows = ds.class_rows(minority)
    k = min(k_neighbors, n_min - 1)
    diffs = rows[:, None, :] - rows[None, :, :]
    dists = np.sqrt((diffs * diffs).sum(axis=2))
    np.fill_diagonal(dists, np.inf)
    neighbor_ids = np.argsort(dists, axis=1, kind="stable")[:, :k]

    rng = np.random.default_rng(seed)
    need = n_maj - n_min
    base = rng.integers(0, n_min, size=need)
    pick = rng.integers(0, k, size=need)
    gaps = rng.random(size=need)
    chosen = neighbor_ids[base, pick]
    synthetic = rows[base] + gaps[:, None] * (rows[chosen] - rows[base])

    out = ds.copy()
    out.features = np.vstack([ds.features, synthetic])
    out.labels = np.concatenate([ds.labels, np.full(need, minority, dtype=int)])
    return out


def minmax_normalize(ds: WorkerDataset) -> WorkerDataset:
    """Scale every feature to [0,1] and remember the scaler for inversion."""
    if ds.has_missing():
        raise PipelineError("normalize after imputation: dataset still has missing cells")
    scaler = MinMaxScaler(mins=ds.features.min(axis=0), maxs=ds.features.max(axis=0))
    out = ds.copy()
    out.features = scaler.transform(ds.features)
    out.normalized = True
    out.scaler = scaler
    return out


def preprocess(ds: WorkerDataset, components: int = 6, k_neighbors: int = 5, seed: int = 0) -> WorkerDataset:
    """The full chain in its fixed order: impute, balance, normalize."""
    return minmax_normalize(smote_balance(impute_pca(ds, components=components), k_neighbors=k_neighbors, seed=seed))


def train_test_split(ds: WorkerDataset, test_fraction: float, seed: int = 0) -> tuple[WorkerDataset, WorkerDataset]:
    """Stratified split; every class appears in both halves or the split fails."""
    if not 0.0 < test_fraction < 1.0:
        raise PipelineError(f"test_fraction must be in (0,1), got {test_fraction}")
    rng = np.random.default_rng(seed)
    test_idx: list[np.ndarray] = []
    train_idx: list[np.ndarray] = []
    for label in (0, 1):
        idx = ds.class_indices(label)
        if idx.size == 0:
            continue
        n_test = int(round(idx.size * test_fraction))
        if n_test == 0 or n_test == idx.size:
            raise PipelineError(
                f"test_fraction {test_fraction} leaves class {label} empty on one side"
            )
        perm = rng.permutation(idx)
        test_idx.append(perm[:n_test])
        train_idx.append(perm[n_test:])
    test_sel = np.sort(np.concatenate(test_idx))
    train_sel = np.sort(np.concatenate(train_idx))

    def subset(sel: np.ndarray) -> WorkerDataset:
        return WorkerDataset(
            worker_id=ds.worker_id,
            features=ds.features[sel].copy(),
            labels=ds.labels[sel].copy(),
            schema=ds.schema,
            normalized=ds.normalized,
            scaler=ds.scaler,
        )

    return subset(train_sel), subset(test_sel)


# ---------------------------------------------------------------------------
# Synthetic worker data (stand-in for the proprietary ride-hailing records)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FeatureGenParams:
    """Gaussian parameters for one feature, one mean per class."""

    name: str
    class0_mean: float
    class1_mean: float
    spread: float


DEFAULT_FEATURE_PARAMS = (
    FeatureGenParams("assigned_tasks", 12.0, 16.0, 4.0),
    FeatureGenParams("completed_tasks", 11.0, 10.0, 3.5),
    FeatureGenParams("worker_rating", 4.7, 4.4, 0.25),
    FeatureGenParams("car_rating", 4.6, 4.4, 0.3),
    FeatureGenParams("start_time", 13.0, 19.0, 5.0),
    FeatureGenParams("requestor_rating", 4.6, 4.2, 0.4),
    FeatureGenParams("price_adjustment_fee", 1.5, 0.8, 1.0),
    FeatureGenParams("precipitation", 0.05, 0.35, 0.25),
    FeatureGenParams("max_temp", 27.0, 33.0, 6.0),
    FeatureGenParams("min_temp", 16.0, 21.0, 5.0),
    FeatureGenParams("wind_speed", 8.0, 14.0, 5.0),
    FeatureGenParams("wind_gust", 12.0, 22.0, 8.0),
)


@dataclass(frozen=True)
class SyntheticWorkerConfig:
    seed: int
    worker_id: str = "w0"
    rows_per_class: tuple[int, int] = (160, 100)
    features: tuple[FeatureGenParams, ...] = DEFAULT_FEATURE_PARAMS
    separation: float = 1.0
    missing_rate: float = 0.04

    def __post_init__(self):
        if self.separation < 0.0:
            raise ConfigError("separation must be >= 0")
        if not 0.0 <= self.missing_rate <= 0.3:
            raise ConfigError("missing_rate must be in [0, 0.3]")
        if min(self.rows_per_class) < 1:
            raise ConfigError("each class needs at least one row")
        if len({f.name for f in self.features}) != len(self.features):
            raise ConfigError("duplicate feature names in config")

    def schema(self) -> FeatureSchema:
        by_name = {f.name: f for f in DEFAULT_SCHEMA.features}
        return FeatureSchema(
            features=tuple(
                by_name.get(p.name, FeatureSpec(p.name, TASK_CATEGORY)) for p in self.features
            )
        )


def _feature_stream(seed: int, label: int, name: str) -> np.random.Generator:
    # Streams keyed by feature name, not column position, so permuting the
    # config's feature list permutes the generated columns identically.
    return np.random.default_rng([seed, label, zlib.crc32(name.encode("utf-8"))])


def class_means(cfg: SyntheticWorkerConfig) -> tuple[np.ndarray, np.ndarray]:
    """Effective per-class means after applying the separation scale."""
    c0 = np.array([p.class0_mean for p in cfg.features])
    c1 = np.array([p.class1_mean for p in cfg.features])
    mid = 0.5 * (c0 + c1)
    half = 0.5 * cfg.separation * (c1 - c0)
    return mid - half, mid + half


def generate_synthetic_worker(cfg: SyntheticWorkerConfig) -> WorkerDataset:
    """Deterministic class-conditional Gaussian records with optional missingness."""
    means0, means1 = class_means(cfg)
    blocks = []
    labels = []
    for label, n_rows, means in ((0, cfg.rows_per_class[0], means0), (1, cfg.rows_per_class[1], means1)):
        cols = []
        for j, params in enumerate(cfg.features):
            rng = _feature_stream(cfg.seed, label, params.name)
            col = rng.normal(means[j], params.spread, size=n_rows)
            if cfg.missing_rate > 0.0:
                col[rng.random(n_rows) < cfg.missing_rate] = np.nan
            cols.append(col)
        blocks.append(np.column_stack(cols))
        labels.append(np.full(n_rows, label, dtype=int))
    return WorkerDataset(
        worker_id=cfg.worker_id,
        features=np.vstack(blocks),
        labels=np.concatenate(labels),
        schema=cfg.schema(),
    )
