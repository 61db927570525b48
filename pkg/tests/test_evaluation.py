import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dfaopt import problems as P
from dfaopt.evaluation import (
    InstanceRow,
    aggregate,
    edit_distance,
    heuristic_satisfaction,
    optimality_gap,
    precedence_satisfied,
)
from dfaopt.oracles import evaluate_schedule


def test_gap_examples():
    assert optimality_gap(90, 100, "max") == pytest.approx(10.0)
    assert optimality_gap(110, 100, "min") == pytest.approx(10.0)
    assert optimality_gap(100, 100, "max") == 0.0
    assert optimality_gap(0, 0) == 0.0
    assert math.isnan(optimality_gap(-1, 0))


def test_gap_clamps_float_noise_and_flags_real_violations():
    assert optimality_gap(100 + 1e-12, 100, "max") == 0.0
    with pytest.raises(AssertionError):
        optimality_gap(101, 100, "max")


def test_oracle_against_itself_is_zero():
    u = P.gen_knapsack_universe(10, 50, seed=0)
    c1, _ = P.knapsack_rewards(u, P.RewardSpec())
    from dfaopt.oracles import solve_knapsack

    for inst in P.sample_knapsack_instances(u, 20, (3, 8), 2, seed=1):
        v = solve_knapsack(inst, c1).objective
        assert optimality_gap(v, v, "max") == 0.0


def test_heuristic_exact_match():
    inst = P.KnapsackInstance((1, 3, 5, 7), (2, 2, 2, 2), 100.0, 50, "")
    rule_out = P.heuristic_solution(inst, "alt_1_1")
    assert rule_out == [1, 5]
    assert heuristic_satisfaction([5, 1], inst, "alt_1_1")
    assert not heuristic_satisfaction([1, 5, 7], inst, "alt_1_1")
    assert not heuristic_satisfaction([], inst, "alt_1_1")


def sched(groups, proc=None, release=None):
    n = len(groups)
    return P.SchedulingInstance(tuple(range(n)), tuple(proc or [1] * n), tuple(release or [0] * n), tuple(groups))


def test_precedence_examples():
    dag = P.PrecedenceDag(((1, 2),))
    inst = sched([1, 1, 2, 2])
    assert precedence_satisfied(inst, [0, 1, 2, 3], dag)
    assert not precedence_satisfied(inst, [0, 2, 1, 3], dag)
    assert precedence_satisfied(sched([1, 3, 3]), [1, 0, 2], P.PrecedenceDag(((4, 5),)))


def test_precedence_touching_intervals_are_allowed():
    # group 2 starts exactly when group 1 completes
    inst = sched([1, 2], proc=[5, 3], release=[0, 5])
    assert precedence_satisfied(inst, [0, 1], P.PrecedenceDag(((1, 2),)))


def test_precedence_agrees_with_schedule_evaluation():
    rng = np.random.default_rng(3)
    dag = P.precedence_dag_preset("A")
    for _ in range(200):
        n = int(rng.integers(2, 7))
        inst = sched(list(rng.integers(1, 6, n)), list(rng.integers(1, 9, n)), list(rng.integers(0, 10, n)))
        order = list(rng.permutation(n))
        assert precedence_satisfied(inst, order, dag) == evaluate_schedule(inst, order, dag).precedence_ok


def brute_edit(a, b):
    # shortest edit script by breadth-first search over strings
    a, b = tuple(a), tuple(b)
    alphabet = set(a) | set(b)
    frontier, seen, d = {a}, {a}, 0
    while b not in frontier:
        nxt = set()
        for s in frontier:
            for i in range(len(s) + 1):
                for c in alphabet:
                    nxt.add(s[:i] + (c,) + s[i:])
                    if i < len(s):
                        nxt.add(s[:i] + (c,) + s[i + 1 :])
                if i < len(s):
                    nxt.add(s[:i] + s[i + 1 :])
        frontier = nxt - seen
        seen |= frontier
        d += 1
    return d


def test_edit_distance_examples():
    assert edit_distance([1, 2, 3], [1, 2, 3]) == 0
    assert edit_distance([1, 2, 3], [1, 3, 2]) == 2
    assert edit_distance([], [1, 2]) == 2


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 2), max_size=4), st.lists(st.integers(0, 2), max_size=4))
def test_edit_distance_matches_search(a, b):
    assert edit_distance(a, b) == brute_edit(a, b)


@settings(max_examples=200, deadline=None)
@given(*(st.lists(st.integers(0, 3), max_size=6) for _ in range(3)))
def test_edit_distance_is_a_metric(a, b, c):
    assert edit_distance(a, b) == edit_distance(b, a)
    assert (edit_distance(a, b) == 0) == (a == b)
    assert edit_distance(a, c) <= edit_distance(a, b) + edit_distance(b, c)


def rows(gaps, prec=None):
    prec = prec or [None] * len(gaps)
    return [InstanceRow(i, g, True, 0, p) for i, (g, p) in enumerate(zip(gaps, prec))]


def test_aggregate_mean():
    r = aggregate(rows([10.0, 0.0, 20.0]))
    assert r.gap_mean == pytest.approx(10.0)
    assert r.pct_optimal == pytest.approx(100 / 3)
    assert r.pct_optimal <= 100 - r.pct_gap_positive + 1e-9


def test_aggregate_all_precedence_violations():
    r = aggregate(rows([5.0, 1.0], [False, False]))
    assert r.n_gap == 0 and math.isnan(r.gap_mean)
    assert r.pct_precedence == 0.0


def test_aggregate_gap_only_over_precedence_ok():
    r = aggregate(rows([5.0, 1.0, 0.0], [False, True, True]))
    assert r.n_gap == 2 and r.gap_mean == pytest.approx(0.5)
    assert r.pct_precedence == pytest.approx(200 / 3)


def test_aggregate_counts_undefined_gaps():
    r = aggregate(rows([math.nan, 4.0]))
    assert r.n_gap_undefined == 1 and r.gap_mean == 4.0


def test_aggregate_empty_raises():
    with pytest.raises(ValueError):
        aggregate([])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.one_of(st.just(0.0), st.floats(0.001, 100)), min_size=1, max_size=30))
def test_percentages_are_consistent(gaps):
    r = aggregate(rows(gaps))
    for v in (r.feasibility_pct, r.pct_optimal, r.pct_gap_positive):
        assert 0 <= v <= 100
    assert r.pct_optimal <= 100 - r.pct_gap_positive + 1e-9
