"""Declarative, seeded experiment sweeps with CSV/SVG reporting.

Four experiment kinds cover the study surface: how attack strength varies
with the realism weight alpha, how model damage grows with poison fraction,
how detectable each attack is next to the benchmarks, and what a poisoning
campaign does to worker income. Every sweep cell derives all randomness from
(master seed, cell coordinates), so identical configs reproduce byte-identical
raw CSVs, with or without a process pool.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from importlib import metadata

import numpy as np

from .attack import (
    PganHyper,
    centroid_deviation_fraction,
    class0_attack_indices,
    feature_manipulation_attack,
    generate_poison,
    inject_poison,
    label_flip_attack,
    poison_target_indices,
    train_pgan,
)
from .behavioral import evaluate_metrics, predict_batch, train_behavioral_model
from .data import (
    WORKER_CATEGORY,
    SyntheticWorkerConfig,
    WorkerDataset,
    generate_synthetic_worker,
    load_csv,
    preprocess,
    train_test_split,
)
from .defense import detect_outliers, train_autoencoder
from .errors import ConfigError
from .selection import (
    EconomyParams,
    GroupQoSWeights,
    Task,
    Worker,
    simulate_campaign,
)
from .svgplot import line_chart_svg

log = logging.getLogger("mcspoison")

KINDS = ("alpha-sweep", "poison-sweep", "benchmark", "campaign")
ATTACK_KINDS = ("pgan", "label-flip", "feature-manipulation")

CONFIG_DEFAULTS: dict = {
    "kind": None,
    "seeds": [0, 1, 2, 3, 4],
    "output_dir": "results",
    # population
    "workers": 8,
    "csv_path": None,
    "rows_per_class": [160, 100],
    "separation": 1.0,
    "missing_rate": 0.04,
    "test_fraction": 0.2,
    # attack
    "alpha": 0.1,
    "lam": 0.8,
    "alpha_grid": [0.0, 0.25, 0.5, 0.75, 1.0],
    "alpha_sweep_fraction": 0.8,
    "fraction_grid": [0.0, 0.2, 0.4, 0.6, 0.8],
    "attacks": list(ATTACK_KINDS),
    "pgan_epochs": 2000,
    "pgan_batch": 64,
    # defense
    "detector_percentiles": [5.0, 10.0],
    "ae_epochs": 50,
    # victim models
    "behavioral_epochs": 150,
    # campaign economy
    "victim_fraction": 0.2,
    "tasks": 100,
    "group_size": 4,
    "gamma": 0.5,
    "base_payment": 10.0,
    "adjustment_fee": 2.0,
    "group_weights": [0.2, 0.55, 0.25],
    "speed": 5.0,
    "world_size": 100.0,
    "deadline_range": [8.0, 30.0],
    "reputation_range": [0.4, 0.95],
    # how far sampled profiles and contexts lean away from cancel-like
    # situations, in units of the class mean gap; campaigns run on tasks
    # workers would plausibly take, not borderline ones
    "completable_lean": 0.5,
}


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    seeds: tuple[int, ...]
    output_dir: str
    workers: int
    csv_path: str | None
    rows_per_class: tuple[int, int]
    separation: float
    missing_rate: float
    test_fraction: float
    alpha: float
    lam: float
    alpha_grid: tuple[float, ...]
    alpha_sweep_fraction: float
    fraction_grid: tuple[float, ...]
    attacks: tuple[str, ...]
    pgan_epochs: int
    pgan_batch: int
    detector_percentiles: tuple[float, ...]
    ae_epochs: int
    behavioral_epochs: int
    victim_fraction: float
    tasks: int
    group_size: int
    gamma: float
    base_payment: float
    adjustment_fee: float
    group_weights: tuple[float, float, float]
    speed: float
    world_size: float
    deadline_range: tuple[float, float]
    reputation_range: tuple[float, float]
    completable_lean: float


def resolve_config(doc: dict, kind: str | None = None) -> ExperimentConfig:
    """Merge a (possibly partial) config document over the defaults."""
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a JSON object")
    unknown = sorted(set(doc) - set(CONFIG_DEFAULTS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    merged = dict(CONFIG_DEFAULTS)
    merged.update(doc)
    if kind is not None:
        merged["kind"] = kind
    if merged["kind"] not in KINDS + ("gen-data",):
        raise ConfigError(f"kind must be one of {KINDS}, got {merged['kind']!r}")
    if not merged["seeds"]:
        raise ConfigError("seeds must be non-empty")
    if not merged["alpha_grid"] or not merged["fraction_grid"]:
        raise ConfigError("grids must be non-empty")
    for name in ("alpha_grid", "fraction_grid"):
        for v in merged[name]:
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} values must be in [0,1], got {v}")
    if not 0.0 <= merged["victim_fraction"] <= 1.0:
        raise ConfigError("victim_fraction must be in [0,1]")
    for attack in merged["attacks"]:
        if attack not in ATTACK_KINDS:
            raise ConfigError(f"unknown attack kind {attack!r}")
    if merged["workers"] < 1:
        raise ConfigError("workers must be >= 1")
    return ExperimentConfig(
        kind=merged["kind"],
        seeds=tuple(int(s) for s in merged["seeds"]),
        output_dir=str(merged["output_dir"]),
        workers=int(merged["workers"]),
        csv_path=merged["csv_path"],
        rows_per_class=tuple(int(v) for v in merged["rows_per_class"]),
        separation=float(merged["separation"]),
        missing_rate=float(merged["missing_rate"]),
        test_fraction=float(merged["test_fraction"]),
        alpha=float(merged["alpha"]),
        lam=float(merged["lam"]),
        alpha_grid=tuple(float(v) for v in merged["alpha_grid"]),
        alpha_sweep_fraction=float(merged["alpha_sweep_fraction"]),
        fraction_grid=tuple(float(v) for v in merged["fraction_grid"]),
        attacks=tuple(merged["attacks"]),
        pgan_epochs=int(merged["pgan_epochs"]),
        pgan_batch=int(merged["pgan_batch"]),
        detector_percentiles=tuple(float(v) for v in merged["detector_percentiles"]),
        ae_epochs=int(merged["ae_epochs"]),
        behavioral_epochs=int(merged["behavioral_epochs"]),
        victim_fraction=float(merged["victim_fraction"]),
        tasks=int(merged["tasks"]),
        group_size=int(merged["group_size"]),
        gamma=float(merged["gamma"]),
        base_payment=float(merged["base_payment"]),
        adjustment_fee=float(merged["adjustment_fee"]),
        group_weights=tuple(float(v) for v in merged["group_weights"]),
        speed=float(merged["speed"]),
        world_size=float(merged["world_size"]),
        deadline_range=tuple(float(v) for v in merged["deadline_range"]),
        reputation_range=tuple(float(v) for v in merged["reputation_range"]),
        completable_lean=float(merged["completable_lean"]),
    )


def load_config(path, kind: str | None = None) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return resolve_config(doc, kind=kind)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    """Resolved config as plain JSON-ready types, echoed into every manifest."""
    out = {}
    for key in CONFIG_DEFAULTS:
        value = getattr(cfg, key)
        out[key] = list(value) if isinstance(value, tuple) else value
    return out


def config_fingerprint(cfg: ExperimentConfig) -> str:
    text = json.dumps(config_to_dict(cfg), sort_keys=True)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def derive_seed(*parts) -> int:
    """Stable child seed from a master seed plus coordinate tags."""
    text = "/".join(str(p) for p in parts)
    return zlib.crc32(text.encode("utf-8"))


# ---------------------------------------------------------------------------
# Per-worker data preparation
# ---------------------------------------------------------------------------

@dataclass
class PreparedWorker:
    worker_id: str
    raw: WorkerDataset
    train: WorkerDataset
    test: WorkerDataset


def _raw_worker(cfg: ExperimentConfig, seed: int, index: int) -> WorkerDataset:
    if cfg.csv_path is not None:
        datasets = load_csv(cfg.csv_path)
        if index >= len(datasets):
            raise ConfigError(
                f"worker index {index} out of range for {cfg.csv_path} "
                f"({len(datasets)} workers)"
            )
        return datasets[index]
    synth = SyntheticWorkerConfig(
        seed=derive_seed(seed, "data", index),
        worker_id=f"w{index}",
        rows_per_class=cfg.rows_per_class,
        separation=cfg.separation,
        missing_rate=cfg.missing_rate,
    )
    return generate_synthetic_worker(synth)


def population_size(cfg: ExperimentConfig) -> int:
    if cfg.csv_path is not None:
        return len(load_csv(cfg.csv_path))
    return cfg.workers


def prepare_worker(cfg: ExperimentConfig, seed: int, index: int) -> PreparedWorker:
    raw = _raw_worker(cfg, seed, index)
    pre = preprocess(raw, seed=derive_seed(seed, "smote", raw.worker_id))
    train, test = train_test_split(
        pre, cfg.test_fraction, derive_seed(seed, "split", raw.worker_id)
    )
    return PreparedWorker(worker_id=raw.worker_id, raw=raw, train=train, test=test)


def _hyper(cfg: ExperimentConfig, alpha: float, seed: int) -> PganHyper:
    return PganHyper(
        epochs=cfg.pgan_epochs,
        batch_size=cfg.pgan_batch,
        alpha=alpha,
        lam=cfg.lam,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# Sweep cells. Each cell derives every random stream from (seed, tags) so
# cells are independent, order-free, and reproducible in any process.
# ---------------------------------------------------------------------------

def _metric_values(report) -> dict:
    return {
        "fpr": report.fpr,
        "fnr": report.fnr,
        "accuracy": report.accuracy,
        "precision": report.precision,
        "recall": report.recall,
        "f1": report.f1,
    }


def alpha_sweep_cell(cfg: ExperimentConfig, index: int, alpha: float, seed: int) -> list[dict]:
    pw = prepare_worker(cfg, seed, index)
    wid = pw.worker_id
    model = train_pgan(pw.train, _hyper(cfg, alpha, derive_seed(seed, "pgan", wid, alpha)))
    n_target = int(np.sum(pw.train.labels == 1))
    need = int(np.floor(cfg.alpha_sweep_fraction * n_target))
    batch = generate_poison(model, need, derive_seed(seed, "gen", wid))
    poisoned = inject_poison(
        pw.train, batch, cfg.alpha_sweep_fraction, derive_seed(seed, "inject", wid)
    )
    victim = train_behavioral_model(
        poisoned, cfg.behavioral_epochs, derive_seed(seed, "model", wid)
    )
    report = evaluate_metrics(victim, pw.test)
    if need > 0:
        deviation = centroid_deviation_fraction(
            batch, pw.train.class_rows(1), cfg.detector_percentiles[0]
        )
    else:
        deviation = 0.0
    row = {"worker_id": wid, "seed": seed, "alpha": alpha, "fraction": cfg.alpha_sweep_fraction}
    row.update(_metric_values(report))
    row["deviation"] = deviation
    return [row]


def poison_sweep_cell(cfg: ExperimentConfig, index: int, seed: int) -> list[dict]:
    pw = prepare_worker(cfg, seed, index)
    wid = pw.worker_id
    model = train_pgan(pw.train, _hyper(cfg, cfg.alpha, derive_seed(seed, "pgan", wid)))
    n_target = int(np.sum(pw.train.labels == 1))
    max_need = int(np.floor(max(cfg.fraction_grid) * n_target))
    batch = generate_poison(model, max_need, derive_seed(seed, "gen", wid))
    class0_test = pw.test.class_rows(0)
    rows = []
    for fraction in cfg.fraction_grid:
        poisoned = inject_poison(pw.train, batch, fraction, derive_seed(seed, "inject", wid))
        victim = train_behavioral_model(
            poisoned, cfg.behavioral_epochs, derive_seed(seed, "model", wid)
        )
        report = evaluate_metrics(victim, pw.test)
        mean_pc = float(np.mean(predict_batch(victim, class0_test))) if class0_test.size else 0.0
        row = {"worker_id": wid, "seed": seed, "alpha": cfg.alpha, "fraction": fraction}
        row.update(_metric_values(report))
        row["mean_pc_class0"] = mean_pc
        rows.append(row)
    return rows


def _attacked_variant(
    cfg: ExperimentConfig, pw: PreparedWorker, attack: str, fraction: float, seed: int, batch
) -> tuple[WorkerDataset, np.ndarray]:
    """Apply one attack at one fraction; returns the dataset and poisoned row ids."""
    wid = pw.worker_id
    if attack == "pgan":
        inject_seed = derive_seed(seed, "inject", wid)
        ds = inject_poison(pw.train, batch, fraction, inject_seed)
        idx = poison_target_indices(pw.train, fraction, inject_seed)
    elif attack == "label-flip":
        flip_seed = derive_seed(seed, "flip", wid)
        ds = label_flip_attack(pw.train, fraction, flip_seed)
        idx = class0_attack_indices(pw.train, fraction, flip_seed)
    elif attack == "feature-manipulation":
        manip_seed = derive_seed(seed, "manip", wid)
        ds = feature_manipulation_attack(pw.train, fraction, seed=manip_seed)
        idx = class0_attack_indices(pw.train, fraction, manip_seed)
    else:
        raise ConfigError(f"unknown attack kind {attack!r}")
    return ds, idx


def benchmark_cell(cfg: ExperimentConfig, index: int, seed: int) -> list[dict]:
    pw = prepare_worker(cfg, seed, index)
    wid = pw.worker_id
    needs_pgan = "pgan" in cfg.attacks
    batch = None
    if needs_pgan:
        model = train_pgan(pw.train, _hyper(cfg, cfg.alpha, derive_seed(seed, "pgan", wid)))
        n_target = int(np.sum(pw.train.labels == 1))
        max_need = int(np.floor(max(cfg.fraction_grid) * n_target))
        batch = generate_poison(model, max_need, derive_seed(seed, "gen", wid))

    rows = []
    for fraction in cfg.fraction_grid:
        for attack in cfg.attacks:
            ds, idx = _attacked_variant(cfg, pw, attack, fraction, seed, batch)
            poisoned_ids = set(idx.tolist())

            flagged_at: dict[float, int] = {}
            detectors = {}
            for label in (0, 1):
                class_rows = ds.class_rows(label)
                detectors[label] = train_autoencoder(
                    class_rows,
                    epochs=cfg.ae_epochs,
                    seed=derive_seed(seed, "ae", wid, label),
                    class_label=label,
                )
            for pct in cfg.detector_percentiles:
                caught = 0
                for label in (0, 1):
                    class_ids = ds.class_indices(label)
                    report = detect_outliers(detectors[label], ds.class_rows(label), pct)
                    flagged_global = class_ids[report.flagged]
                    caught += len(poisoned_ids.intersection(flagged_global.tolist()))
                flagged_at[pct] = caught

            victim = train_behavioral_model(
                ds, cfg.behavioral_epochs, derive_seed(seed, "model", wid)
            )
            metrics = evaluate_metrics(victim, pw.test)
            row = {
                "worker_id": wid,
                "seed": seed,
                "attack": attack,
                "fraction": fraction,
                "n_poison": len(poisoned_ids),
            }
            for pct in cfg.detector_percentiles:
                row[f"flagged_{pct:g}"] = flagged_at[pct]
            row.update(_metric_values(metrics))
            rows.append(row)
    return rows


def _campaign_attacked_train(
    cfg: ExperimentConfig, pw: PreparedWorker, attack: str, fraction: float, seed: int
) -> WorkerDataset:
    if fraction == 0.0:
        return pw.train
    if attack == "pgan":
        wid = pw.worker_id
        model = train_pgan(pw.train, _hyper(cfg, cfg.alpha, derive_seed(seed, "pgan", wid)))
        n_target = int(np.sum(pw.train.labels == 1))
        need = int(np.floor(fraction * n_target))
        batch = generate_poison(model, need, derive_seed(seed, "gen", wid))
        return inject_poison(pw.train, batch, fraction, derive_seed(seed, "inject", wid))
    ds, _ = _attacked_variant(cfg, pw, attack, fraction, seed, None)
    return ds


def campaign_cell(cfg: ExperimentConfig, attack: str, fraction: float, seed: int) -> list[dict]:
    n = population_size(cfg)
    prepared = [prepare_worker(cfg, seed, i) for i in range(n)]

    schema = prepared[0].raw.schema
    categories = [f.category for f in schema.features]
    n_worker_feats = sum(1 for c in categories if c == WORKER_CATEGORY)
    if any(c == WORKER_CATEGORY for c in categories[n_worker_feats:]):
        raise ConfigError("campaign needs worker-related features listed before task-related ones")

    victim_count = int(round(cfg.victim_fraction * n))
    victim_rng = np.random.default_rng(derive_seed(seed, "victims"))
    victim_indices = set(
        victim_rng.choice(n, size=victim_count, replace=False).tolist()
    ) if victim_count else set()

    # task contexts mimic completable (class 0) situations: pooled raw stats,
    # leaned away from the cancel-class direction so sampled situations are
    # ones a worker would plausibly accept
    pooled = np.vstack([pw.raw.class_rows(0) for pw in prepared])
    pooled_cancel = np.vstack([pw.raw.class_rows(1) for pw in prepared])
    lean = cfg.completable_lean * (
        np.nanmean(pooled_cancel, axis=0) - np.nanmean(pooled, axis=0)
    )
    task_cols = slice(n_worker_feats, len(schema))
    ctx_mean = np.nanmean(pooled[:, task_cols], axis=0) - lean[task_cols]
    ctx_std = np.nanstd(pooled[:, task_cols], axis=0)

    workers = []
    for i, pw in enumerate(prepared):
        train = (
            _campaign_attacked_train(cfg, pw, attack, fraction, seed)
            if i in victim_indices
            else pw.train
        )
        model = train_behavioral_model(
            train, cfg.behavioral_epochs, derive_seed(seed, "model", pw.worker_id)
        )
        world_rng = np.random.default_rng(derive_seed(seed, "world", pw.worker_id))
        location = tuple(world_rng.uniform(0.0, cfg.world_size, size=2))
        rep_lo, rep_hi = cfg.reputation_range
        reputation = float(world_rng.uniform(rep_lo, rep_hi))
        # an individual draw, not the mean: a fleet of mean-profile workers
        # would all sit at the exact center of the honest cloud
        own_rows = pw.raw.class_rows(0)[:, :n_worker_feats]
        profile = world_rng.normal(
            np.nanmean(own_rows, axis=0) - lean[:n_worker_feats],
            np.nanstd(own_rows, axis=0),
        )
        workers.append(
            Worker(
                id=pw.worker_id,
                reputation=reputation,
                location=location,
                profile=profile,
                model=model,
                scaler=pw.train.scaler,
                speed=cfg.speed,
                victim=i in victim_indices,
            )
        )

    tasks = []
    for t in range(cfg.tasks):
        task_rng = np.random.default_rng(derive_seed(seed, "task", t))
        location = tuple(task_rng.uniform(0.0, cfg.world_size, size=2))
        deadline = float(task_rng.uniform(*cfg.deadline_range))
        context = task_rng.normal(ctx_mean, ctx_std)
        tasks.append(
            Task(
                id=f"t{t}",
                start_time=float(t),
                deadline=deadline,
                location=location,
                group_size=cfg.group_size,
                context=context,
            )
        )

    params = EconomyParams(
        gamma=cfg.gamma,
        base_payment=cfg.base_payment,
        adjustment_fee=cfg.adjustment_fee,
        weights=GroupQoSWeights(*cfg.group_weights),
    )
    result = simulate_campaign(workers, tasks, params, seed=derive_seed(seed, "campaign"))

    rows = []
    for worker in workers:
        selected = sum(1 for r in result.rounds if worker.id in r.selected)
        rows.append(
            {
                "attack": attack,
                "fraction": fraction,
                "seed": seed,
                "worker_id": worker.id,
                "victim": int(worker.victim),
                "total_payment": result.total_payment_by_worker[worker.id],
                "times_selected": selected,
                "assigned": worker.assigned,
                "completed": worker.completed,
                "final_reputation": worker.reputation,
                "mean_qos_g": result.mean_qos_g,
            }
        )
    return rows


# ---------------------------------------------------------------------------
# Sweep assembly
# ---------------------------------------------------------------------------

def _cell_list(cfg: ExperimentConfig) -> list[tuple]:
    n = population_size(cfg)
    if cfg.kind == "alpha-sweep":
        return [(i, a, s) for s in cfg.seeds for a in cfg.alpha_grid for i in range(n)]
    if cfg.kind == "poison-sweep":
        return [(i, s) for s in cfg.seeds for i in range(n)]
    if cfg.kind == "benchmark":
        return [(i, s) for s in cfg.seeds for i in range(n)]
    if cfg.kind == "campaign":
        return [
            (attack, fraction, s)
            for s in cfg.seeds
            for attack in cfg.attacks
            for fraction in cfg.fraction_grid
        ]
    raise ConfigError(f"unknown kind {cfg.kind!r}")


_CELL_FUNCS = {
    "alpha-sweep": alpha_sweep_cell,
    "poison-sweep": poison_sweep_cell,
    "benchmark": benchmark_cell,
    "campaign": campaign_cell,
}

RAW_FIELDS = {
    "alpha-sweep": (
        "worker_id", "seed", "alpha", "fraction",
        "fpr", "fnr", "accuracy", "precision", "recall", "f1", "deviation",
    ),
    "poison-sweep": (
        "worker_id", "seed", "alpha", "fraction",
        "fpr", "fnr", "accuracy", "precision", "recall", "f1", "mean_pc_class0",
    ),
    "campaign": (
        "attack", "fraction", "seed", "worker_id", "victim", "total_payment",
        "times_selected", "assigned", "completed", "final_reputation", "mean_qos_g",
    ),
}

SORT_KEYS = {
    "alpha-sweep": ("alpha", "seed", "worker_id"),
    "poison-sweep": ("fraction", "seed", "worker_id"),
    "benchmark": ("attack", "fraction", "seed", "worker_id"),
    "campaign": ("attack", "fraction", "seed", "worker_id"),
}


def _benchmark_fields(cfg: ExperimentConfig) -> tuple[str, ...]:
    flag_cols = tuple(f"flagged_{p:g}" for p in cfg.detector_percentiles)
    return (
        ("worker_id", "seed", "attack", "fraction", "n_poison")
        + flag_cols
        + ("fpr", "fnr", "accuracy", "precision", "recall", "f1")
    )


def raw_fields(cfg: ExperimentConfig) -> tuple[str, ...]:
    if cfg.kind == "benchmark":
        return _benchmark_fields(cfg)
    return RAW_FIELDS[cfg.kind]


@dataclass
class RunReport:
    """Everything one experiment run produced, ready for emit_report."""

    kind: str
    config: dict
    fingerprint: str
    raw_fields: tuple[str, ...]
    raw_rows: list[dict]
    aggregated_fields: tuple[str, ...]
    aggregated_rows: list[dict]
    errors: list[dict]


def _execute_cell(args):
    cfg, coords = args
    try:
        rows = _CELL_FUNCS[cfg.kind](cfg, *coords)
        return coords, rows, None
    except Exception as exc:  # a failed cell must not sink the sweep
        return coords, [], f"{type(exc).__name__}: {exc}"


def _mean_std(values: list[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=float)
    return float(arr.mean()), float(arr.std())


def _group_rows(rows: list[dict], keys: tuple[str, ...]) -> dict[tuple, list[dict]]:
    grouped: dict[tuple, list[dict]] = {}
    for row in rows:
        grouped.setdefault(tuple(row[k] for k in keys), []).append(row)
    return grouped


def _aggregate_generic(
    rows: list[dict], group_keys: tuple[str, ...], metrics: tuple[str, ...]
) -> tuple[tuple[str, ...], list[dict]]:
    """Mean/std per cell, plus per-seed and per-worker breakdowns.

    The 'over' column says which unit the statistics run over; 'held' pins the
    coordinate a breakdown slice holds fixed.
    """
    fields = group_keys + ("over", "held", "n") + tuple(
        f"{m}_{stat}" for m in metrics for stat in ("mean", "std")
    )
    out: list[dict] = []

    def emit(slice_keys: tuple[str, ...], over: str, held_key: str | None):
        for combo, members in sorted(
            _group_rows(rows, slice_keys).items(), key=lambda kv: tuple(map(str, kv[0]))
        ):
            record = dict(zip(slice_keys, combo))
            row_out = {k: record[k] for k in group_keys}
            row_out["over"] = over
            row_out["held"] = f"{held_key}={record[held_key]}" if held_key else ""
            row_out["n"] = len(members)
            for m in metrics:
                mean, std = _mean_std([r[m] for r in members])
                row_out[f"{m}_mean"] = mean
                row_out[f"{m}_std"] = std
            out.append(row_out)

    emit(group_keys, "workers+seeds", None)
    emit(group_keys + ("seed",), "workers", "seed")
    emit(group_keys + ("worker_id",), "seeds", "worker_id")
    return fields, out


def _aggregate_campaign(rows: list[dict]) -> tuple[tuple[str, ...], list[dict]]:
    """Per (attack, fraction): victim/non-victim payment totals over seeds."""
    fields = (
        "attack", "fraction", "over", "held", "n",
        "victim_payment_mean", "victim_payment_std",
        "nonvictim_payment_mean", "nonvictim_payment_std",
        "mean_qos_g_mean", "mean_qos_g_std",
    )
    per_seed: dict[tuple, dict] = {}
    for (attack, fraction, seed), members in _group_rows(
        rows, ("attack", "fraction", "seed")
    ).items():
        victim_total = sum(r["total_payment"] for r in members if r["victim"])
        nonvictim_total = sum(r["total_payment"] for r in members if not r["victim"])
        per_seed[(attack, fraction, seed)] = {
            "victim_payment": victim_total,
            "nonvictim_payment": nonvictim_total,
            "mean_qos_g": members[0]["mean_qos_g"],
        }
    out: list[dict] = []
    grouped: dict[tuple, list[dict]] = {}
    for (attack, fraction, _seed), summary in sorted(
        per_seed.items(), key=lambda kv: tuple(map(str, kv[0]))
    ):
        grouped.setdefault((attack, fraction), []).append(summary)
    for (attack, fraction), summaries in sorted(
        grouped.items(), key=lambda kv: tuple(map(str, kv[0]))
    ):
        row = {"attack": attack, "fraction": fraction, "over": "seeds", "held": "", "n": len(summaries)}
        for m in ("victim_payment", "nonvictim_payment", "mean_qos_g"):
            mean, std = _mean_std([s[m] for s in summaries])
            row[f"{m}_mean"] = mean
            row[f"{m}_std"] = std
        out.append(row)
    return fields, out


def _aggregate(cfg: ExperimentConfig, rows: list[dict]) -> tuple[tuple[str, ...], list[dict]]:
    if cfg.kind == "alpha-sweep":
        return _aggregate_generic(rows, ("alpha",), ("fpr", "fnr", "f1", "deviation"))
    if cfg.kind == "poison-sweep":
        return _aggregate_generic(
            rows, ("fraction",), ("fpr", "fnr", "accuracy", "precision", "recall", "f1", "mean_pc_class0")
        )
    if cfg.kind == "benchmark":
        flag_cols = tuple(f"flagged_{p:g}" for p in cfg.detector_percentiles)
        return _aggregate_generic(rows, ("attack", "fraction"), flag_cols + ("fpr", "fnr", "n_poison"))
    return _aggregate_campaign(rows)


def run_experiment(cfg: ExperimentConfig, jobs: int = 1) -> RunReport:
    cells = _cell_list(cfg)
    log.info("running %s: %d cells, jobs=%d", cfg.kind, len(cells), jobs)
    args = [(cfg, coords) for coords in cells]
    if jobs <= 1:
        results = [_execute_cell(a) for a in args]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_execute_cell, args))

    results.sort(key=lambda item: tuple(map(str, item[0])))
    rows: list[dict] = []
    errors: list[dict] = []
    for coords, cell_rows, error in results:
        if error is not None:
            log.warning("cell %s failed: %s", coords, error)
            errors.append({"cell": str(coords), "error": error})
        rows.extend(cell_rows)
    rows.sort(key=lambda r: tuple(str(r[k]) for k in SORT_KEYS[cfg.kind]))

    agg_fields, agg_rows = _aggregate(cfg, rows)
    return RunReport(
        kind=cfg.kind,
        config=config_to_dict(cfg),
        fingerprint=config_fingerprint(cfg),
        raw_fields=raw_fields(cfg),
        raw_rows=rows,
        aggregated_fields=agg_fields,
        aggregated_rows=agg_rows,
        errors=errors,
    )


def run_alpha_sweep(cfg: ExperimentConfig, jobs: int = 1) -> RunReport:
    if cfg.kind != "alpha-sweep":
        raise ConfigError(f"config kind is {cfg.kind!r}, expected 'alpha-sweep'")
    return run_experiment(cfg, jobs)


def run_poison_sweep(cfg: ExperimentConfig, jobs: int = 1) -> RunReport:
    if cfg.kind != "poison-sweep":
        raise ConfigError(f"config kind is {cfg.kind!r}, expected 'poison-sweep'")
    return run_experiment(cfg, jobs)


def run_benchmark_comparison(cfg: ExperimentConfig, jobs: int = 1) -> RunReport:
    if cfg.kind != "benchmark":
        raise ConfigError(f"config kind is {cfg.kind!r}, expected 'benchmark'")
    return run_experiment(cfg, jobs)


def run_campaign(cfg: ExperimentConfig, jobs: int = 1) -> RunReport:
    if cfg.kind != "campaign":
        raise ConfigError(f"config kind is {cfg.kind!r}, expected 'campaign'")
    return run_experiment(cfg, jobs)


# ---------------------------------------------------------------------------
# Report emission
# ---------------------------------------------------------------------------

def _cell_str(value) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (np.floating,)):
        return repr(float(value))
    if isinstance(value, (np.integer,)):
        return str(int(value))
    return str(value)


def _write_csv(path, fields: tuple[str, ...], rows: list[dict]) -> bytes:
    lines = [",".join(fields)]
    for row in rows:
        lines.append(",".join(_cell_str(row.get(f, "")) for f in fields))
    blob = ("\n".join(lines) + "\n").encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(blob)
    return blob


def _primary_aggregate(report: RunReport) -> list[dict]:
    if report.kind == "campaign":
        return report.aggregated_rows
    return [r for r in report.aggregated_rows if r.get("over") == "workers+seeds"]


def _series_by(rows: list[dict], split_key: str, x_key: str, y_key: str) -> dict:
    series: dict[str, list[tuple[float, float]]] = {}
    for row in rows:
        series.setdefault(str(row[split_key]), []).append((float(row[x_key]), float(row[y_key])))
    for pts in series.values():
        pts.sort(key=lambda p: p[0])
    return series


def _figures(report: RunReport) -> dict[str, str]:
    rows = _primary_aggregate(report)
    figs: dict[str, str] = {}
    if not rows:
        return figs
    if report.kind == "alpha-sweep":
        xs = lambda key: [(float(r["alpha"]), float(r[key])) for r in rows]
        figs["fpr_vs_alpha.svg"] = line_chart_svg(
            "False positive rate vs alpha", "alpha", "FPR", {"FPR": xs("fpr_mean")}
        )
        figs["f1_vs_alpha.svg"] = line_chart_svg(
            "F1 score vs alpha", "alpha", "F1", {"F1": xs("f1_mean")}
        )
        figs["deviation_vs_alpha.svg"] = line_chart_svg(
            "Poison deviation fraction vs alpha", "alpha", "fraction beyond cutoff",
            {"deviation": xs("deviation_mean")},
        )
    elif report.kind == "poison-sweep":
        xs = lambda key: [(float(r["fraction"]), float(r[key])) for r in rows]
        figs["error_rates.svg"] = line_chart_svg(
            "Error rates vs poison fraction", "poison fraction", "rate",
            {"FPR": xs("fpr_mean"), "FNR": xs("fnr_mean")},
        )
        figs["performance.svg"] = line_chart_svg(
            "Model performance vs poison fraction", "poison fraction", "score",
            {
                "accuracy": xs("accuracy_mean"),
                "precision": xs("precision_mean"),
                "recall": xs("recall_mean"),
                "F1": xs("f1_mean"),
            },
        )
        figs["cancellation_probability.svg"] = line_chart_svg(
            "Mean predicted cancellation on completable contexts", "poison fraction",
            "mean PC", {"mean PC": xs("mean_pc_class0_mean")},
        )
    elif report.kind == "benchmark":
        flag_cols = [f for f in report.aggregated_fields if f.startswith("flagged_") and f.endswith("_mean")]
        for col in flag_cols:
            pct = col[len("flagged_"):-len("_mean")]
            figs[f"detected_{pct}.svg"] = line_chart_svg(
                f"Poison rows flagged at {pct}%", "poison fraction", "rows flagged",
                _series_by(rows, "attack", "fraction", col),
            )
        figs["fpr_benchmarks.svg"] = line_chart_svg(
            "FPR by attack", "poison fraction", "FPR",
            _series_by(rows, "attack", "fraction", "fpr_mean"),
        )
        figs["fnr_benchmarks.svg"] = line_chart_svg(
            "FNR by attack", "poison fraction", "FNR",
            _series_by(rows, "attack", "fraction", "fnr_mean"),
        )
    elif report.kind == "campaign":
        figs["victim_payment.svg"] = line_chart_svg(
            "Victim total payment", "poison fraction", "payment",
            _series_by(rows, "attack", "fraction", "victim_payment_mean"),
        )
        figs["qos_g.svg"] = line_chart_svg(
            "Mean group QoS", "poison fraction", "QoS_g",
            _series_by(rows, "attack", "fraction", "mean_qos_g_mean"),
        )
    return figs


def _package_version() -> str:
    try:
        return metadata.version("mcspoison")
    except metadata.PackageNotFoundError:
        return "0.0.0-dev"


def emit_report(report: RunReport, out_dir) -> dict:
    """Write raw CSV, aggregated CSV, SVG figures, and a hashing manifest.

    Re-running with the same report produces byte-identical files; nothing
    written here depends on wall-clock time or absolute paths.
    """
    os.makedirs(out_dir, exist_ok=True)
    hashes: dict[str, str] = {}

    blob = _write_csv(os.path.join(out_dir, "raw.csv"), report.raw_fields, report.raw_rows)
    hashes["raw.csv"] = hashlib.sha256(blob).hexdigest()
    blob = _write_csv(
        os.path.join(out_dir, "aggregated.csv"), report.aggregated_fields, report.aggregated_rows
    )
    hashes["aggregated.csv"] = hashlib.sha256(blob).hexdigest()

    for name, svg_text in sorted(_figures(report).items()):
        data = svg_text.encode("utf-8")
        with open(os.path.join(out_dir, name), "wb") as fh:
            fh.write(data)
        hashes[name] = hashlib.sha256(data).hexdigest()

    manifest = {
        "kind": report.kind,
        "config": report.config,
        "config_fingerprint": report.fingerprint,
        "package_version": _package_version(),
        "seeds": report.config["seeds"],
        "raw_row_count": len(report.raw_rows),
        "errors": report.errors,
        "files": hashes,
    }
    text = json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        fh.write(text)
    return manifest


def generate_population_csv(cfg: ExperimentConfig, out_dir) -> dict:
    """The gen-data verb: synthesize the worker population to CSV + sidecar."""
    from .data import save_csv, save_sidecar

    os.makedirs(out_dir, exist_ok=True)
    seed = cfg.seeds[0]
    datasets = [_raw_worker(cfg, seed, i) for i in range(population_size(cfg))]
    csv_path = os.path.join(out_dir, "workers.csv")
    save_csv(datasets, csv_path)
    save_sidecar(os.path.join(out_dir, "schema.json"), datasets[0].schema)
    hashes = {}
    for name in ("workers.csv", "schema.json"):
        with open(os.path.join(out_dir, name), "rb") as fh:
            hashes[name] = hashlib.sha256(fh.read()).hexdigest()
    manifest = {
        "kind": "gen-data",
        "config": config_to_dict(cfg),
        "package_version": _package_version(),
        "files": hashes,
    }
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        fh.write(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest
