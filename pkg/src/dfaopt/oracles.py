"""Exact desk-scale solvers and non-learned baselines.

Knapsack and matching maximize; scheduling minimizes total completion time.
Ties among optima go to the lexicographically smallest solution so that
datasets built from these solvers are deterministic.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .dfa import REJECT, SizeGuardError, TransitionRule
from .problems import (
    KnapsackInstance,
    MatchingInstance,
    PrecedenceDag,
    SchedulingInstance,
    SortingPermutation,
    knapsack_objective,
    matching_objective,
)

TIE_TOL = 1e-12


def _close(a: float, b: float) -> bool:
    return abs(a - b) <= TIE_TOL * max(1.0, abs(a), abs(b))


def _better(val: float, cand: tuple, best_val: float, best: Optional[tuple]) -> bool:
    if best is None:
        return True
    return (val > best_val and not _close(val, best_val)) or (_close(val, best_val) and cand < best)


@dataclass(frozen=True)
class Solution:
    labels: tuple
    objective: float


# ---------------------------------------------------------------------------
# knapsack


def solve_knapsack(instance: KnapsackInstance, c1: np.ndarray, c2: Optional[np.ndarray] = None, max_quadratic: int = 20) -> Solution:
    if c2 is None:
        return _knapsack_dp(instance, c1)
    if len(instance.elements) > max_quadratic:
        raise SizeGuardError(f"quadratic knapsack limited to {max_quadratic} elements")
    return _knapsack_quadratic(instance, c1, c2)


def _knapsack_dp(instance: KnapsackInstance, c1: np.ndarray) -> Solution:
    items = sorted(instance.elements)
    w = dict(zip(instance.elements, instance.weights))
    if any(int(w[j]) != w[j] for j in items):
        raise ValueError("capacity DP needs integer weights")
    cap = math.floor(instance.capacity + 1e-9)
    n = len(items)
    # suffix[i][c]: best value from items[i:] within capacity c
    suffix = np.zeros((n + 1, cap + 1))
    for i in range(n - 1, -1, -1):
        j = items[i]
        row = suffix[i + 1].copy()
        wj = int(w[j])
        if wj <= cap:
            take = suffix[i + 1][: cap + 1 - wj] + c1[j]
            row[wj:] = np.maximum(row[wj:], take)
        suffix[i] = row
    best = float(suffix[0][cap])
    # stop as soon as the optimum is reached, else take the smallest id that keeps it reachable
    chosen, c, target, i = [], cap, best, 0
    while i < n and not _close(target, 0.0):
        picked = next(
            k for k in range(i, n)
            if int(w[items[k]]) <= c and _close(target, c1[items[k]] + suffix[k + 1][c - int(w[items[k]])])
        )
        j = items[picked]
        chosen.append(j)
        target -= c1[j]
        c -= int(w[j])
        i = picked + 1
    return Solution(tuple(chosen), knapsack_objective(chosen, c1))


def _knapsack_quadratic(instance: KnapsackInstance, c1: np.ndarray, c2: np.ndarray) -> Solution:
    """Depth-first search with an optimistic bound.

    The bound adds, for every undecided item, its positive marginal gain
    against the current selection, plus all positive pairwise mass among the
    undecided items.
    """
    items = sorted(instance.elements)
    w = dict(zip(instance.elements, instance.weights))
    cap = instance.capacity + 1e-9
    n = len(items)
    lin = np.array([c1[j] for j in items])
    pair = np.array([[c2[a, b] + c2[b, a] for b in items] for a in items])
    np.fill_diagonal(pair, 0.0)
    pos_pair = np.maximum(pair, 0.0)
    # tail_pair[i]: positive pairwise mass among items[i:]
    tail_pair = np.zeros(n + 1)
    for i in range(n - 1, -1, -1):
        tail_pair[i] = tail_pair[i + 1] + pos_pair[i, i + 1 :].sum()

    best_val = -math.inf
    best_set: Optional[tuple] = None
    sel: list = []
    # gain[k]: marginal value of adding item k to the current selection
    gain = lin.copy()

    def dfs(i: int, value: float, used: float) -> None:
        nonlocal best_val, best_set
        cand = tuple(items[k] for k in sel)
        if _better(value, cand, best_val, best_set):
            best_val, best_set = value, cand
        if i == n:
            return
        bound = value + np.maximum(gain[i:], 0.0).sum() + tail_pair[i]
        if bound < best_val and not _close(bound, best_val):
            return
        for k in range(i, n):
            wk = w[items[k]]
            if used + wk > cap:
                continue
            sel.append(k)
            g = gain[k]
            gain[:] += pair[k]
            dfs(k + 1, value + g, used + wk)
            gain[:] -= pair[k]
            sel.pop()

    dfs(0, 0.0, 0.0)
    return Solution(best_set, knapsack_objective(best_set, c1, c2))


# ---------------------------------------------------------------------------
# matching


def solve_matching(instance: MatchingInstance, c1: np.ndarray, c2: Optional[np.ndarray] = None, max_enumerate: int = 12, force_enumerate: bool = False) -> Solution:
    if c2 is None and not force_enumerate:
        return _matching_assignment(instance, c1)
    if len(instance.edges) > max_enumerate:
        raise SizeGuardError(f"matching enumeration limited to {max_enumerate} edges")
    return _matching_enumerate(instance, c1, c2)


def _matching_assignment(instance: MatchingInstance, c1: np.ndarray) -> Solution:
    if not instance.edges:
        return Solution((), 0.0)
    lefts = sorted({u for u, _ in instance.endpoints})
    rights = sorted({v for _, v in instance.endpoints})
    li = {u: i for i, u in enumerate(lefts)}
    ri = {v: i for i, v in enumerate(rights)}
    gain = np.zeros((len(lefts), len(rights)))
    edge_at = {}
    for e, (u, v) in zip(instance.edges, instance.endpoints):
        # absent pairs and non-positive edges are never worth selecting
        gain[li[u], ri[v]] = max(c1[e], 0.0)
        edge_at[(li[u], ri[v])] = e
    rows, cols = linear_sum_assignment(gain, maximize=True)
    chosen = sorted(edge_at[(r, c)] for r, c in zip(rows, cols) if (r, c) in edge_at and c1[edge_at[(r, c)]] > 0)
    return Solution(tuple(chosen), matching_objective(chosen, c1))


def enumerate_matchings(instance: MatchingInstance) -> list:
    """Every matching of the instance, as sorted edge tuples."""
    edges = list(zip(instance.edges, instance.endpoints))
    edges.sort()
    out = []

    def dfs(i: int, used_l: frozenset, used_r: frozenset, cur: tuple) -> None:
        out.append(cur)
        for k in range(i, len(edges)):
            e, (u, v) = edges[k]
            if u in used_l or v in used_r:
                continue
            dfs(k + 1, used_l | {u}, used_r | {v}, cur + (e,))

    dfs(0, frozenset(), frozenset(), ())
    return out


def _matching_enumerate(instance: MatchingInstance, c1: np.ndarray, c2: Optional[np.ndarray]) -> Solution:
    best_val, best_set = -math.inf, None
    for m in enumerate_matchings(instance):
        val = matching_objective(m, c1, c2)
        if _better(val, m, best_val, best_set):
            best_val, best_set = val, m
    return Solution(best_set, best_val)


# ---------------------------------------------------------------------------
# scheduling


@dataclass(frozen=True)
class ScheduleEvaluation:
    start: tuple
    completion: tuple
    objective: int
    precedence_ok: bool


def evaluate_schedule(instance: SchedulingInstance, order: Sequence[int], dag: Optional[PrecedenceDag] = None) -> ScheduleEvaluation:
    """Start/completion times of ``order`` on one machine, without idle insertion beyond release times."""
    if sorted(order) != sorted(instance.jobs):
        raise ValueError("order must be a permutation of the instance jobs")
    p = dict(zip(instance.jobs, instance.processing))
    r = dict(zip(instance.jobs, instance.release))
    g = dict(zip(instance.jobs, instance.groups))
    t = 0
    start, comp = [], []
    for j in order:
        s = max(r[j], t)
        t = s + p[j]
        start.append(s)
        comp.append(t)
    ok = True
    if dag is not None:
        s_of = dict(zip(order, start))
        c_of = dict(zip(order, comp))
        for a, b in dag.edges:
            ga = [j for j in order if g[j] == a]
            gb = [j for j in order if g[j] == b]
            if ga and gb and max(c_of[j] for j in ga) > min(s_of[j] for j in gb):
                ok = False
                break
    return ScheduleEvaluation(tuple(start), tuple(comp), int(sum(comp)), ok)


def solve_schedule(instance: SchedulingInstance, dag: Optional[PrecedenceDag] = None, max_jobs: int = 10) -> Solution:
    """Branch and bound over job orders, in ascending id order.

    Appending a job is refused while any job of a predecessor group is
    still unscheduled. The bound is the larger of two relaxations of the
    remaining jobs: SPT from max(now, earliest release), and each job's
    own release plus processing time.
    """
    jobs = sorted(instance.jobs)
    if len(jobs) > max_jobs:
        raise SizeGuardError(f"scheduling search limited to {max_jobs} jobs")
    p = dict(zip(instance.jobs, instance.processing))
    r = dict(zip(instance.jobs, instance.release))
    g = dict(zip(instance.jobs, instance.groups))
    preds = {}
    if dag is not None:
        for a, b in dag.edges:
            preds.setdefault(b, set()).add(a)

    best_val = math.inf
    best_order: tuple = ()
    order: list = []

    def lower_bound(t: int, rem: list) -> int:
        t0 = max(t, min(r[j] for j in rem))
        acc, spt = t0, 0
        for q in sorted(p[j] for j in rem):
            acc += q
            spt += acc
        own = sum(max(r[j], t) + p[j] for j in rem)
        return max(spt, own)

    def dfs(rem: list, t: int, total: int) -> None:
        nonlocal best_val, best_order
        if not rem:
            if total < best_val:
                best_val, best_order = total, tuple(order)
            return
        if total + lower_bound(t, rem) >= best_val:
            return
        rem_groups = {g[j] for j in rem}
        for idx, j in enumerate(rem):
            if preds.get(g[j], set()) & rem_groups:
                continue
            finish = max(r[j], t) + p[j]
            order.append(j)
            dfs(rem[:idx] + rem[idx + 1 :], finish, total + finish)
            order.pop()

    dfs(jobs, 0, 0)
    if best_val == math.inf:
        raise ValueError("no precedence-feasible order exists")
    return Solution(best_order, float(best_val))


# ---------------------------------------------------------------------------
# baselines


def _greedy_fill(rule: TransitionRule, priority: Sequence[int]) -> list:
    state = rule.initial()
    seq = []
    for j in priority:
        if j in rule.mask(state):
            state = rule.step(state, j)
            seq.append(j)
    return seq


def baseline_solution(
    instance,
    kind: str,
    rewards: Optional[np.ndarray] = None,
    permutation: Optional[SortingPermutation] = None,
    seed: Optional[int] = None,
) -> list:
    """Random, omniscient-greedy or sorting-rule construction.

    Knapsack and matching walk a priority list and keep every label the
    mask still admits. For scheduling only ``random`` applies and returns a
    random job order.
    """
    rule = instance.rule()
    ids = sorted(instance.elements)
    if kind == "random":
        rng = np.random.default_rng(seed)
        priority = [ids[i] for i in rng.permutation(len(ids))]
        if isinstance(instance, SchedulingInstance):
            return priority
        return _greedy_fill(rule, priority)
    if isinstance(instance, SchedulingInstance):
        raise ValueError(f"baseline {kind!r} is not defined for scheduling")
    if kind == "omniscient_greedy":
        if rewards is None:
            raise ValueError("omniscient_greedy needs the linear rewards")
        if isinstance(instance, KnapsackInstance):
            w = dict(zip(instance.elements, instance.weights))
            priority = sorted(ids, key=lambda j: (-rewards[j] / w[j], j))
        else:
            priority = sorted(ids, key=lambda e: (-rewards[e], e))
        return _greedy_fill(rule, priority)
    if kind == "sorting_rule":
        if permutation is None:
            raise ValueError("sorting_rule needs a sorting permutation")
        return _greedy_fill(rule, permutation.apply(ids))
    raise ValueError(f"unknown baseline {kind!r}")


def replay_ok(instance, seq: Sequence[int]) -> bool:
    rule = instance.rule()
    state = rule.initial()
    for s in seq:
        state = rule.step(state, s)
        if state is REJECT:
            return False
    return rule.accepting(state)
