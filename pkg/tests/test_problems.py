import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dfaopt.dfa import is_feasible_sequence
from dfaopt.problems import (
    KnapsackInstance,
    KnapsackUniverse,
    MatchingUniverse,
    RewardSpec,
    SortingPermutation,
    dumps_record,
    encode_knapsack,
    encode_matching,
    encode_scheduling,
    gen_knapsack_instance,
    gen_knapsack_universe,
    gen_matching_instance,
    gen_matching_universe,
    gen_scheduling_instance,
    gen_scheduling_universe,
    heuristic_solution,
    instance_from_record,
    instance_to_record,
    knapsack_capacity,
    linear_reward,
    matching_rewards,
    precedence_dag_preset,
    quadratic_reward,
    sample_knapsack_instances,
    sorting_permutation,
)


def unit_instance(n, cap):
    return KnapsackInstance(tuple(range(n)), (1,) * n, float(cap), 1)


def test_knapsack_universe_degenerate_and_deterministic():
    u = gen_knapsack_universe(3, 1, seed=7)
    assert u.weights == (1, 1, 1)
    assert gen_knapsack_universe(20, 1000, seed=5) == gen_knapsack_universe(20, 1000, seed=5)
    big = gen_knapsack_universe(100, 10_000, seed=0)
    assert all(1 <= w <= 10_000 for w in big.weights)


def test_capacity_formula():
    assert knapsack_capacity([60, 40], 50) == pytest.approx(50 / 101 * 100, rel=1e-15)
    assert knapsack_capacity([60, 40], 50) == pytest.approx(49.5050, abs=1e-4)
    assert knapsack_capacity([60, 40], 100) < 100
    with pytest.raises(ValueError):
        knapsack_capacity([1], 0)
    with pytest.raises(ValueError):
        knapsack_capacity([1], 101)


def test_five_capacities_per_subset_share_elements():
    u = gen_knapsack_universe(20, 100, seed=1)
    insts = sample_knapsack_instances(u, 4, range(5, 16), 5, seed=2)
    assert len(insts) == 20
    for k in range(4):
        group = insts[5 * k : 5 * k + 5]
        assert len({i.elements for i in group}) == 1
        assert len({i.p for i in group}) == 5
        for i in group:
            assert i.capacity == pytest.approx(i.p / 101 * sum(i.weights), rel=1e-12)


def test_linear_rewards():
    u = KnapsackUniverse(3, 10, (4, 1, 10), (0, 0, 0))
    assert linear_reward(u, "inverse_proportional")[0] == 0.25
    assert linear_reward(u, "logarithmic")[1] == 0.0
    assert linear_reward(u, "logarithmic")[2] == pytest.approx(2.302585093, abs=1e-9)


def test_quadratic_reward_paper_constants():
    c2 = quadratic_reward(np.array([0.25, 0.5, 0.5]), [0, 0, 1], 0.0015, 0.0003, 0.0009)
    assert c2[0, 1] == pytest.approx(0.001425, abs=1e-15)
    assert c2[0, 2] == pytest.approx(-0.000675, abs=1e-15)
    assert c2[1, 1] == 0.0
    assert np.array_equal(c2, c2.T)
    with pytest.raises(ValueError):
        quadratic_reward(np.ones(2), [0, 0], 0.0, 1.0, 1.0)


@pytest.mark.parametrize(
    "rule,n,cap,groups,expected",
    [
        ("alt_1_1", 5, 2, None, [0, 2]),
        ("alt_2_1", 6, 3, None, [0, 1, 3]),
        ("cluster_group", 3, 2, [0, 0, 1], [0, 1]),
    ],
)
def test_heuristic_rules(rule, n, cap, groups, expected):
    assert heuristic_solution(unit_instance(n, cap), rule, groups) == expected


def test_cluster_group_tie_goes_to_lowest_group():
    assert heuristic_solution(unit_instance(4, 4), "cluster_group", [1, 0, 1, 0]) == [1, 3]


def test_heuristic_stops_at_first_mandated_misfit():
    inst = KnapsackInstance((0, 1, 2, 3, 4), (1, 1, 5, 1, 1), 3.0, 1)
    assert heuristic_solution(inst, "alt_1_1") == [0]


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["alt_1_1", "alt_2_1", "cluster_group"]))
def test_heuristic_solutions_are_feasible(seed, rule):
    u = gen_knapsack_universe(20, 50, seed=seed)
    inst = sample_knapsack_instances(u, 1, range(5, 16), 1, seed=seed)[0]
    sol = heuristic_solution(inst, rule, u.groups)
    assert is_feasible_sequence(inst.rule(), sol)


def test_matching_instance_generation():
    u = gen_matching_universe(10, 10, 3, seed=0)
    full = gen_matching_instance(u, 1.0, seed=1)
    assert len(full.edges) == 100
    assert gen_matching_instance(u, 0.4, seed=3) == gen_matching_instance(u, 0.4, seed=3)
    with pytest.raises(ValueError):
        gen_matching_instance(u, 0.0, seed=1)


def test_matching_rewards():
    u = MatchingUniverse(2, 2, (0, 0), (0, 2))
    c1, c2 = matching_rewards(u, RewardSpec("matching_diversity_quadratic", seed=3))
    # edge 0 = (0,0): d=0; edge 1 = (0,1): d=2
    assert 8 <= c1[0] <= 10
    assert 1 <= c1[1] <= 2
    assert np.array_equal(c2, c2.T)
    assert np.all(np.diag(c2) == 0)
    # same-group edges 0 and 2 = (1,0): all four endpoints in group 0
    assert c2[0, 2] == -6.0
    # edges 1=(0,1) groups (0,2) and 3=(1,1) groups (0,2): unrelated pattern
    assert c2[1, 3] == 0.0
    # edge 0 groups (0,0), edge 1 groups (0,2): exactly one of edge 1's endpoints matches
    assert c2[0, 1] == 6.0


def test_matching_rewards_frozen_per_universe():
    u = gen_matching_universe(4, 4, 3, seed=2)
    spec = RewardSpec("matching_group_linear", seed=11)
    assert np.array_equal(matching_rewards(u, spec)[0], matching_rewards(u, spec)[0])


def test_matching_rewards_missing_range():
    u = MatchingUniverse(1, 1, (0,), (2,))
    with pytest.raises(ValueError):
        matching_rewards(u, RewardSpec("matching_group_linear", ranges={0: (1, 2)}))


def test_scheduling_universe():
    u = gen_scheduling_universe(50, sigma=0.0, seed=0)
    assert all(p == 1000 * (2 * g - 1) for p, g in zip(u.processing, u.groups))
    paper = gen_scheduling_universe(100, seed=1)
    assert all(1 <= p <= 10_000 for p in paper.processing)


def test_truncated_normal_group_mean():
    rng = np.random.default_rng(0)
    from dfaopt.problems import _truncated_normal

    draws = [_truncated_normal(rng, 1000.0, 400.0, 1.0, 10_000.0) for _ in range(10_000)]
    # truncation at 2.5 sigma below shifts the mean by ~+7
    assert abs(np.mean(draws) - 1000) < 20


def test_scheduling_instance_release_times():
    u = gen_scheduling_universe(30, seed=0)
    inst = gen_scheduling_instance(u, range(6), 0.9, seed=4)
    assert inst == gen_scheduling_instance(u, range(6), 0.9, seed=4)
    assert all(0 <= r <= math.floor(0.9 * sum(inst.processing)) for r in inst.release)
    tiny = gen_scheduling_instance(u, range(6), 1e-9, seed=4)
    assert tiny.release == (0,) * 6


def test_dag_presets():
    a, b, c = (precedence_dag_preset(x) for x in "ABC")
    assert all(a.in_degree(v) <= 1 for v in a.nodes)
    assert [b.in_degree(v) for v in b.nodes].count(2) == 1
    assert max(b.in_degree(v) for v in b.nodes) == 2
    assert [c.in_degree(v) for v in c.nodes].count(4) == 1
    for d in (a, b, c):
        assert d.is_acyclic()
        # SPT (group 1 first) must violate at least one edge
        assert any(g > h for g, h in d.edges)
    with pytest.raises(ValueError):
        precedence_dag_preset("Z")


def test_sorting_permutation():
    pairs = [((7, 2), (7,))] * 9 + [((7, 2), (2,))]
    perm = sorting_permutation(pairs, 10)
    r = perm.rank()
    assert r[7] < r[2]
    # absent ids get frequency 0, then ascending id
    assert perm.order[2:] == (0, 1, 3, 4, 5, 6, 8, 9)
    eq = sorting_permutation([((0, 1, 2), (0, 1, 2))], 3)
    assert eq.order == (0, 1, 2)
    with pytest.raises(ValueError):
        sorting_permutation([], 3)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.sets(st.integers(0, 9), min_size=1), st.sets(st.integers(0, 9))), min_size=1, max_size=20))
def test_sorting_permutation_is_bijection_and_idempotent(raw):
    pairs = [(tuple(e), tuple(s & e)) for e, s in raw]
    perm = sorting_permutation(pairs, 10)
    assert sorted(perm.order) == list(range(10))
    ids = [5, 1, 9, 3]
    once = perm.apply(ids)
    assert perm.apply(once) == once


def test_encode_knapsack_with_permutation():
    inst = KnapsackInstance((0, 1), (3, 4), 5.0, 50)
    perm = SortingPermutation((1, 0), (0.9, 0.1))
    enc = encode_knapsack(inst, [1], universe_size=2, K=10, perm=perm)
    assert enc.categorical[:, 0].tolist() == [1, 0, 2]
    assert enc.target == [1] and enc.terminated
    assert encode_knapsack(inst, [], 2, 10, perm).target == []
    with pytest.raises(ValueError):
        encode_knapsack(inst, [5], 2, 10)


def test_encode_scheduling_keeps_instance_order():
    u = gen_scheduling_universe(30, seed=0)
    inst = gen_scheduling_instance(u, [9, 3, 5], seed=1)
    enc = encode_scheduling(inst, [5, 9, 3])
    assert enc.categorical[:, 0].tolist() == [9, 3, 5]
    assert not enc.terminated


def test_encode_matching_columns():
    u = gen_matching_universe(3, 3, seed=0)
    inst = gen_matching_instance(u, 1.0, seed=0)
    enc = encode_matching(inst, [0, 4])
    assert enc.categorical.shape == (9, 3)


def test_record_round_trip_and_determinism():
    u = gen_scheduling_universe(30, seed=0)
    inst = gen_scheduling_instance(u, range(6), seed=1)
    rec = instance_to_record(inst, [0, 1, 2, 3, 4, 5], {"source": "oracle"})
    assert instance_from_record(rec) == inst
    again = instance_to_record(gen_scheduling_instance(gen_scheduling_universe(30, seed=0), range(6), seed=1), [0, 1, 2, 3, 4, 5], {"source": "oracle"})
    assert dumps_record(rec) == dumps_record(again)
    k = gen_knapsack_instance(gen_knapsack_universe(5, 10, seed=0), [0, 3], 17)
    assert instance_from_record(instance_to_record(k)) == k
    m = gen_matching_instance(gen_matching_universe(3, 3, seed=0), 0.5, seed=2)
    assert instance_from_record(instance_to_record(m)) == m
