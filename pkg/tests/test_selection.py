"""Selection economy: latency, QoS, greedy grouping, reputation, payments."""

import itertools

import numpy as np
import pytest

from mcspoison.errors import SelectionError
from mcspoison.selection import (
    LEDGER_FIELDS,
    EconomyParams,
    GroupQoSWeights,
    Task,
    Worker,
    WorkerScore,
    assemble_context,
    campaign_ledger_rows,
    completion_confidence,
    compute_payment,
    greedy_select,
    group_qos,
    latency_score,
    rank_workers,
    reputation_update,
    run_task_round,
    simulate_campaign,
    travel_time,
    worker_qos,
)


@pytest.fixture(scope="module")
def world(clean_dataset, trained_model):
    """Factories for workers and tasks whose raw features come from real rows."""
    raw = clean_dataset.scaler.inverse(clean_dataset.features)

    def make_worker(wid, row=0, loc=(0.0, 0.0), rep=0.8, speed=5.0):
        return Worker(
            id=wid,
            reputation=rep,
            location=loc,
            profile=raw[row, :4],
            model=trained_model,
            scaler=clean_dataset.scaler,
            speed=speed,
        )

    def make_task(tid, loc=(0.0, 0.0), deadline=16.0, group_size=2, row=1):
        return Task(
            id=tid,
            start_time=0.0,
            deadline=deadline,
            location=loc,
            group_size=group_size,
            context=raw[row, 4:],
        )

    return make_worker, make_task


# ---------------------------------------------------------------------------
# latency


def test_latency_boundaries(world):
    make_worker, make_task = world
    task = make_task("t", loc=(0.0, 0.0), deadline=16.0)
    at_task = make_worker("a", loc=(0.0, 0.0))
    assert latency_score(at_task, task) == 1.0  # floored travel time of 1
    at_deadline = make_worker("b", loc=(80.0, 0.0))  # tt = 80/5 = deadline
    assert latency_score(at_deadline, task) == 0.0
    halfway = make_worker("c", loc=(20.0, 0.0))  # tt = 4 = sqrt(16)
    assert latency_score(halfway, task) == pytest.approx(0.5, abs=1e-9)


def test_latency_clamps_beyond_deadline(world):
    make_worker, make_task = world
    task = make_task("t", deadline=4.0)
    far = make_worker("a", loc=(90.0, 90.0))  # tt about 25 >> deadline
    assert latency_score(far, task) == 0.0


def test_travel_time_floor(world):
    make_worker, make_task = world
    task = make_task("t", loc=(0.0, 0.0))
    near = make_worker("a", loc=(2.0, 0.0))  # 2/5 < 1
    assert travel_time(near, task) == 1.0


# ---------------------------------------------------------------------------
# individual scores


def test_worker_qos_is_the_triple_product():
    assert worker_qos(0.5, 0.8, 0.9) == pytest.approx(0.36)
    with pytest.raises(SelectionError):
        worker_qos(1.5, 0.8, 0.9)
    with pytest.raises(SelectionError):
        worker_qos(0.5, -0.1, 0.9)


def test_confidence_complements_cancellation(world, trained_model, clean_dataset):
    make_worker, make_task = world
    worker, task = make_worker("a"), make_task("t")
    conf = completion_confidence(worker, task)
    assert 0.0 < conf < 1.0
    from mcspoison.behavioral import predict_cancellation

    x = clean_dataset.scaler.transform(assemble_context(worker, task))
    assert conf == pytest.approx(1.0 - predict_cancellation(trained_model, x))


def test_confidence_requires_model_and_scaler(world):
    make_worker, make_task = world
    worker = make_worker("a")
    worker.model = None
    with pytest.raises(SelectionError, match="model"):
        completion_confidence(worker, make_task("t"))
    worker = make_worker("b")
    worker.scaler = None
    with pytest.raises(SelectionError, match="scaler"):
        completion_confidence(worker, make_task("t"))


def test_assemble_context_orders_profile_then_task(world):
    make_worker, make_task = world
    worker, task = make_worker("a"), make_task("t")
    x = assemble_context(worker, task)
    assert x.shape == (12,)
    np.testing.assert_array_equal(x[:4], worker.profile)
    np.testing.assert_array_equal(x[4:], task.context)


def test_rank_breaks_ties_by_worker_id(world):
    make_worker, make_task = world
    task = make_task("t")
    twins = [make_worker("zz", row=3), make_worker("aa", row=3)]
    ranked = rank_workers(twins, task)
    assert ranked[0].qos == ranked[1].qos
    assert [s.worker_id for s in ranked] == ["aa", "zz"]


# ---------------------------------------------------------------------------
# greedy selection against exhaustive search


def test_greedy_matches_brute_force_on_seeded_cases(world):
    make_worker, make_task = world
    rng = np.random.default_rng(2024)
    for case in range(100):
        n = int(rng.integers(4, 13))
        k = int(rng.integers(1, n))
        workers = [
            make_worker(
                f"w{i:02d}",
                row=int(rng.integers(0, 80)),
                loc=tuple(rng.uniform(0.0, 100.0, size=2)),
                rep=float(rng.uniform(0.05, 1.0)),
            )
            for i in range(n)
        ]
        # deadlines long enough that no latency clamps to zero, so scores
        # stay continuous and the best group is unique
        task = make_task(
            f"t{case}",
            loc=tuple(rng.uniform(0.0, 100.0, size=2)),
            deadline=float(rng.uniform(40.0, 80.0)),
            group_size=k,
            row=int(rng.integers(0, 80)),
        )
        qos = {s.worker_id: s.qos for s in rank_workers(workers, task)}
        best = max(
            itertools.combinations(sorted(qos), k),
            key=lambda combo: sum(qos[w] for w in combo),
        )
        chosen = {w.id for w in greedy_select(workers, task)}
        assert chosen == set(best), f"case {case}"


def test_greedy_validates_pool(world):
    make_worker, make_task = world
    task = make_task("t", group_size=3)
    with pytest.raises(SelectionError, match="needs 3"):
        greedy_select([make_worker("a"), make_worker("b")], task)
    dupes = [make_worker("a"), make_worker("a"), make_worker("b")]
    with pytest.raises(SelectionError, match="unique"):
        greedy_select(dupes, task)


# ---------------------------------------------------------------------------
# reputation


def test_reputation_update_boundaries_and_convexity(world):
    make_worker, _ = world
    worker = make_worker("a", rep=0.4)
    worker.assigned, worker.completed = 10, 9
    assert reputation_update(worker, gamma=1.0) == 0.4
    assert reputation_update(worker, gamma=0.0) == pytest.approx(0.9)
    blended = reputation_update(worker, gamma=0.25)
    assert blended == pytest.approx(0.25 * 0.4 + 0.75 * 0.9)
    assert 0.4 <= blended <= 0.9
    with pytest.raises(SelectionError):
        reputation_update(worker, gamma=1.5)


def test_reputation_unchanged_when_never_assigned(world):
    make_worker, _ = world
    idle = make_worker("a", rep=0.37)
    assert reputation_update(idle, gamma=0.5) == 0.37


# ---------------------------------------------------------------------------
# group QoS


def score_stub(tau, rep, conf):
    return WorkerScore(worker_id="s", tau=tau, reputation=rep, conf=conf, qos=tau * rep * conf)


def test_group_latency_dispersion_oracle():
    # taus {1.0, 0.5}: mean 0.75, std 0.25, so the latency term is 0.75*e^-0.25
    scores = [score_stub(1.0, 0.9, 0.9), score_stub(0.5, 0.9, 0.9)]
    value = group_qos(scores, GroupQoSWeights(0.0, 1.0, 0.0))
    assert value == pytest.approx(0.75 * np.exp(-0.25), abs=1e-9)


def test_group_qos_full_formula():
    scores = [score_stub(1.0, 0.8, 0.9), score_stub(0.5, 0.6, 0.7)]
    weights = GroupQoSWeights(0.2, 0.3, 0.5)
    expected = 0.2 * 0.6 + 0.3 * (0.75 * np.exp(-0.25)) + 0.5 * 0.7
    assert group_qos(scores, weights) == pytest.approx(expected, abs=1e-12)


def test_group_qos_single_worker_has_no_dispersion_penalty():
    scores = [score_stub(0.8, 0.5, 0.6)]
    assert group_qos(scores, GroupQoSWeights()) == pytest.approx((0.5 + 0.8 + 0.6) / 3.0)


def test_group_qos_rejects_empty():
    with pytest.raises(SelectionError):
        group_qos([], GroupQoSWeights())


def test_group_weights_validation():
    GroupQoSWeights(0.0, 1.0, 0.0)  # zero components are fine
    with pytest.raises(SelectionError):
        GroupQoSWeights(0.5, 0.6, 0.2)
    with pytest.raises(SelectionError):
        GroupQoSWeights(-0.1, 0.6, 0.5)


# ---------------------------------------------------------------------------
# payment


def test_payment_identities():
    params = EconomyParams(base_payment=10.0, adjustment_fee=2.0)
    scoring_at_group = compute_payment("t", "w", qos_i=0.6, qos_g=0.6, params=params)
    assert scoring_at_group.amount == pytest.approx(2.0)
    zero_scorer = compute_payment("t", "w", qos_i=0.0, qos_g=0.6, params=params)
    assert zero_scorer.amount == pytest.approx(12.0)


def test_payment_floor_and_override():
    params = EconomyParams(base_payment=10.0, adjustment_fee=2.0)
    star = compute_payment("t", "w", qos_i=0.9, qos_g=0.5, params=params)
    assert star.amount == 0.0  # fee + (-0.8)*10 would be negative
    raw = EconomyParams(base_payment=10.0, adjustment_fee=2.0, floor_payment_at_zero=False)
    assert compute_payment("t", "w", 0.9, 0.5, raw).amount == pytest.approx(-6.0)


def test_payment_requires_positive_group_qos():
    with pytest.raises(SelectionError):
        compute_payment("t", "w", 0.5, 0.0, EconomyParams())


# ---------------------------------------------------------------------------
# rounds and campaigns


def test_round_updates_counts_payments_and_reputation(world):
    make_worker, make_task = world
    workers = [make_worker("a", rep=0.8), make_worker("b", row=2, rep=0.6)]
    task = make_task("t1", group_size=2)
    result = run_task_round(workers, task, EconomyParams(), seed=7)
    assert set(result.selected) == {"a", "b"}
    for worker in workers:
        assert worker.assigned == 1
        done = result.completions[worker.id]
        assert worker.completed == int(done)
        start = {"a": 0.8, "b": 0.6}[worker.id]
        assert worker.reputation == pytest.approx(0.5 * start + 0.5 * int(done))
    paid = {p.worker_id for p in result.payments}
    assert paid == {w for w, done in result.completions.items() if done}
    for p in result.payments:
        assert p.qos_g == result.qos_g
        assert p.amount >= 0.0


def test_completion_draws_are_keyed_by_ids_not_order(world):
    make_worker, make_task = world
    task = make_task("t1", group_size=2)

    def fresh(order):
        workers = [make_worker(w, rep=0.8) if w == "a" else make_worker(w, row=2, rep=0.6) for w in order]
        return run_task_round(workers, task, EconomyParams(), seed=7)

    one, two = fresh(["a", "b"]), fresh(["b", "a"])
    assert one.completions == two.completions
    assert one.selected == two.selected
    assert [p.amount for p in one.payments] == [p.amount for p in two.payments]


def test_round_requires_enough_workers(world):
    make_worker, make_task = world
    with pytest.raises(SelectionError):
        run_task_round([make_worker("a")], make_task("t", group_size=2), EconomyParams())


def test_campaign_accumulates_payments_and_carries_state(world):
    make_worker, make_task = world
    workers = [make_worker("a"), make_worker("b", row=2), make_worker("c", row=3, loc=(40.0, 0.0))]
    tasks = [make_task(f"t{i}", group_size=2) for i in range(6)]
    result = simulate_campaign(workers, tasks, EconomyParams(), seed=3)
    assert len(result.rounds) == 6
    totals = {w.id: 0.0 for w in workers}
    for rnd in result.rounds:
        for p in rnd.payments:
            totals[p.worker_id] += p.amount
    assert result.total_payment_by_worker == pytest.approx(totals)
    assert result.mean_qos_g == pytest.approx(np.mean([r.qos_g for r in result.rounds]))
    assert sum(w.assigned for w in workers) == 12


def test_ledger_rows_cover_every_candidate(world):
    make_worker, make_task = world
    workers = [make_worker("a"), make_worker("b", row=2), make_worker("c", row=3)]
    tasks = [make_task(f"t{i}", group_size=2) for i in range(2)]
    result = simulate_campaign(workers, tasks, EconomyParams(), seed=1)
    rows = campaign_ledger_rows(result)
    assert len(rows) == 6  # 2 tasks x 3 candidates
    assert all(tuple(r.keys()) == LEDGER_FIELDS for r in rows)
    for row in rows:
        if not row["selected"]:
            assert row["qos_g"] == "" and row["payment"] == 0.0
        if row["completed"]:
            assert row["selected"] == 1


# ---------------------------------------------------------------------------
# validation of the core records


def test_worker_and_task_validation(world):
    make_worker, _ = world
    with pytest.raises(SelectionError):
        make_worker("a", rep=1.5)
    with pytest.raises(SelectionError):
        make_worker("a", speed=0.0)
    with pytest.raises(SelectionError):
        Task(id="t", start_time=0.0, deadline=1.0, location=(0, 0), group_size=1, context=np.zeros(8))
    with pytest.raises(SelectionError):
        Task(id="t", start_time=0.0, deadline=5.0, location=(0, 0), group_size=0, context=np.zeros(8))
    worker = make_worker("a")
    worker.completed = 5
    with pytest.raises(SelectionError):
        Worker(
            id="b",
            reputation=0.5,
            location=(0, 0),
            profile=np.zeros(4),
            assigned=1,
            completed=2,
        )
