"""Worker-selection economy: QoS scoring, greedy grouping, reputation, payment.

Per task, every worker gets an individual score QoS_i = latency * reputation *
completion confidence; the platform greedily takes the top GroupSize workers,
simulates completions, pays the completers relative to the group score, and
folds completion outcomes back into reputations. Poisoned behavioral models
depress the confidence factor, which is how an attack turns into lost income.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np

from .behavioral import BehavioralModel, predict_cancellation
from .data import MinMaxScaler
from .errors import SelectionError

DEFAULT_SPEED = 5.0
WORLD_SIZE = 100.0  # workers and tasks live on a [0, WORLD_SIZE]^2 plane


@dataclass(frozen=True)
class GroupQoSWeights:
    """Weights for (min reputation, dispersion-penalized latency, min confidence)."""

    w1: float = 1.0 / 3.0
    w2: float = 1.0 / 3.0
    w3: float = 1.0 / 3.0

    def __post_init__(self):
        if min(self.w1, self.w2, self.w3) < 0.0:
            raise SelectionError("group weights must be >= 0")
        if abs(self.w1 + self.w2 + self.w3 - 1.0) > 1e-9:
            raise SelectionError("group weights must sum to 1")


@dataclass(frozen=True)
class EconomyParams:
    gamma: float = 0.5  # reputation memory weight
    base_payment: float = 10.0
    adjustment_fee: float = 2.0
    weights: GroupQoSWeights = field(default_factory=GroupQoSWeights)
    floor_payment_at_zero: bool = True

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise SelectionError("gamma must be in [0,1]")
        if self.base_payment < 0.0 or self.adjustment_fee < 0.0:
            raise SelectionError("payments must be >= 0")


@dataclass
class Worker:
    """Platform-side worker state; profile holds the 4 worker-related features."""

    id: str
    reputation: float
    location: tuple[float, float]
    profile: np.ndarray  # raw (unnormalized) worker-related feature values
    model: BehavioralModel | None = None
    scaler: MinMaxScaler | None = None
    speed: float = DEFAULT_SPEED
    assigned: int = 0
    completed: int = 0
    victim: bool = False

    def __post_init__(self):
        self.profile = np.asarray(self.profile, dtype=float)
        if not 0.0 <= self.reputation <= 1.0:
            raise SelectionError(f"reputation must be in [0,1], got {self.reputation}")
        if self.completed > self.assigned:
            raise SelectionError("completed tasks cannot exceed assigned tasks")
        if self.speed <= 0.0:
            raise SelectionError("speed must be positive")


@dataclass(frozen=True)
class Task:
    """One sensing task; context holds the 8 task-related features."""

    id: str
    start_time: float
    deadline: float  # time units from start; the latency log base
    location: tuple[float, float]
    group_size: int
    context: np.ndarray  # raw (unnormalized) task-related feature values

    def __post_init__(self):
        if self.deadline <= 1.0:
            raise SelectionError("deadline must exceed 1 time unit")
        if self.group_size < 1:
            raise SelectionError("group size must be >= 1")
        object.__setattr__(self, "context", np.asarray(self.context, dtype=float))


@dataclass(frozen=True)
class WorkerScore:
    worker_id: str
    tau: float
    reputation: float
    conf: float
    qos: float


@dataclass(frozen=True)
class PaymentRecord:
    task_id: str
    worker_id: str
    base_payment: float
    adjustment_fee: float
    qos_i: float
    qos_g: float
    amount: float


@dataclass(frozen=True)
class RoundResult:
    """Everything one task round produced; workers themselves mutate in place."""

    task_id: str
    scores: tuple[WorkerScore, ...]  # all candidates, ranked
    selected: tuple[str, ...]
    completions: dict[str, bool]
    payments: tuple[PaymentRecord, ...]
    qos_g: float


def travel_time(worker: Worker, task: Task) -> float:
    """Euclidean travel time, floored at 1 so the latency log stays defined."""
    dx = worker.location[0] - task.location[0]
    dy = worker.location[1] - task.location[1]
    return max(1.0, float(np.hypot(dx, dy)) / worker.speed)


def latency_score(worker: Worker, task: Task) -> float:
    """tau = 1 - clamp(log_deadline(travel time), 0, 1); 1 is instant arrival."""
    tt = travel_time(worker, task)
    log_ratio = np.log(tt) / np.log(task.deadline)
    return 1.0 - float(np.clip(log_ratio, 0.0, 1.0))


def assemble_context(worker: Worker, task: Task) -> np.ndarray:
    """Raw 12-feature vector: worker profile first, task context after."""
    return np.concatenate([worker.profile, task.context])


def completion_confidence(worker: Worker, task: Task) -> float:
    """conf = 1 - predicted cancellation probability for this worker and task."""
    if worker.model is None:
        raise SelectionError(f"worker {worker.id} has no behavioral model")
    if worker.scaler is None:
        raise SelectionError(f"worker {worker.id} has no feature scaler")
    x = worker.scaler.transform(assemble_context(worker, task))
    return 1.0 - predict_cancellation(worker.model, x)


def worker_qos(tau: float, reputation: float, conf: float) -> float:
    for name, value in (("tau", tau), ("reputation", reputation), ("conf", conf)):
        if not 0.0 <= value <= 1.0:
            raise SelectionError(f"{name} must be in [0,1], got {value}")
    return tau * reputation * conf


def score_worker(worker: Worker, task: Task) -> WorkerScore:
    tau = latency_score(worker, task)
    conf = completion_confidence(worker, task)
    return WorkerScore(
        worker_id=worker.id,
        tau=tau,
        reputation=worker.reputation,
        conf=conf,
        qos=worker_qos(tau, worker.reputation, conf),
    )


def rank_workers(workers: list[Worker], task: Task) -> list[WorkerScore]:
    """All candidates by QoS descending, ties broken by worker id ascending."""
    scores = [score_worker(w, task) for w in workers]
    return sorted(scores, key=lambda s: (-s.qos, s.worker_id))


def greedy_select(workers: list[Worker], task: Task) -> list[Worker]:
    """Top group_size workers by individual QoS."""
    if len(workers) < task.group_size:
        raise SelectionError(
            f"task {task.id} needs {task.group_size} workers, only {len(workers)} available"
        )
    if len({w.id for w in workers}) != len(workers):
        raise SelectionError("worker ids must be unique")
    ranked = rank_workers(workers, task)
    by_id = {w.id: w for w in workers}
    return [by_id[s.worker_id] for s in ranked[: task.group_size]]


def reputation_update(worker: Worker, gamma: float) -> float:
    """r <- gamma * r + (1 - gamma) * (completed / assigned); skipped when idle."""
    if not 0.0 <= gamma <= 1.0:
        raise SelectionError("gamma must be in [0,1]")
    if worker.assigned == 0:
        return worker.reputation
    omega = worker.completed / worker.assigned
    return gamma * worker.reputation + (1.0 - gamma) * omega


def group_qos(scores: list[WorkerScore], weights: GroupQoSWeights) -> float:
    """Weighted sum of min reputation, dispersion-penalized mean latency, min conf."""
    if not scores:
        raise SelectionError("group must be non-empty")
    taus = np.array([s.tau for s in scores])
    r_g = min(s.reputation for s in scores)
    conf_g = min(s.conf for s in scores)
    tau_g = float(taus.mean() * np.exp(-taus.std()))
    return weights.w1 * r_g + weights.w2 * tau_g + weights.w3 * conf_g


def compute_payment(
    task_id: str, worker_id: str, qos_i: float, qos_g: float, params: EconomyParams
) -> PaymentRecord:
    """Payment = fee + ((QoS_g - QoS_i) / QoS_g) * base; low scorers earn more."""
    if qos_g <= 0.0:
        raise SelectionError("group QoS must be positive to compute payments")
    amount = params.adjustment_fee + ((qos_g - qos_i) / qos_g) * params.base_payment
    if params.floor_payment_at_zero:
        amount = max(0.0, amount)
    return PaymentRecord(
        task_id=task_id,
        worker_id=worker_id,
        base_payment=params.base_payment,
        adjustment_fee=params.adjustment_fee,
        qos_i=qos_i,
        qos_g=qos_g,
        amount=amount,
    )


def _completion_stream(seed: int, task_id: str, worker_id: str) -> np.random.Generator:
    # Keyed by ids, not loop position, so paired clean/poisoned campaigns see
    # identical completion luck and differ only through confidence shifts.
    return np.random.default_rng(
        [seed, zlib.crc32(task_id.encode("utf-8")), zlib.crc32(worker_id.encode("utf-8"))]
    )


def run_task_round(workers: list[Worker], task: Task, params: EconomyParams, seed: int = 0) -> RoundResult:
    """Select, simulate completions, pay completers, update reputations.

    Selected workers' assigned/completed counts and reputations are updated in
    place; the returned record is immutable.
    """
    ranked = rank_workers(workers, task)
    if len(workers) < task.group_size:
        raise SelectionError(
            f"task {task.id} needs {task.group_size} workers, only {len(workers)} available"
        )
    selected_scores = ranked[: task.group_size]
    by_id = {w.id: w for w in workers}
    qos_g = group_qos(selected_scores, params.weights)

    completions: dict[str, bool] = {}
    payments: list[PaymentRecord] = []
    for score in selected_scores:
        worker = by_id[score.worker_id]
        draw = _completion_stream(seed, task.id, worker.id).random()
        done = bool(draw < score.conf)
        completions[worker.id] = done
        worker.assigned += 1
        if done:
            worker.completed += 1
            payments.append(compute_payment(task.id, worker.id, score.qos, qos_g, params))
        worker.reputation = reputation_update(worker, params.gamma)

    return RoundResult(
        task_id=task.id,
        scores=tuple(ranked),
        selected=tuple(s.worker_id for s in selected_scores),
        completions=completions,
        payments=tuple(payments),
        qos_g=qos_g,
    )


@dataclass(frozen=True)
class CampaignResult:
    rounds: tuple[RoundResult, ...]
    total_payment_by_worker: dict[str, float]
    mean_qos_g: float


def simulate_campaign(
    workers: list[Worker], tasks: list[Task], params: EconomyParams, seed: int = 0
) -> CampaignResult:
    """Sequential fold over tasks; reputation state carries between rounds."""
    rounds = [run_task_round(workers, task, params, seed) for task in tasks]
    totals = {w.id: 0.0 for w in workers}
    for rnd in rounds:
        for record in rnd.payments:
            totals[record.worker_id] += record.amount
    mean_qos = float(np.mean([r.qos_g for r in rounds])) if rounds else 0.0
    return CampaignResult(
        rounds=tuple(rounds), total_payment_by_worker=totals, mean_qos_g=mean_qos
    )


LEDGER_FIELDS = (
    "task_id",
    "worker_id",
    "tau",
    "reputation",
    "conf",
    "qos_i",
    "selected",
    "completed",
    "payment",
    "qos_g",
)


def campaign_ledger_rows(result: CampaignResult) -> list[dict]:
    """One flat row per (task, candidate worker) for CSV export."""
    rows = []
    for rnd in result.rounds:
        paid = {p.worker_id: p.amount for p in rnd.payments}
        for score in rnd.scores:
            selected = score.worker_id in rnd.selected
            rows.append(
                {
                    "task_id": rnd.task_id,
                    "worker_id": score.worker_id,
                    "tau": score.tau,
                    "reputation": score.reputation,
                    "conf": score.conf,
                    "qos_i": score.qos,
                    "selected": int(selected),
                    "completed": int(rnd.completions.get(score.worker_id, False)),
                    "payment": paid.get(score.worker_id, 0.0),
                    "qos_g": rnd.qos_g if selected else "",
                }
            )
    return rows
