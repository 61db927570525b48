"""Transition rules over abstract states, feasibility masks and DFA sampling.

A rule encodes the known feasible set of one problem instance implicitly:
only the states along the path currently being built are materialized.
Transitions into the sink are reported as the ``REJECT`` sentinel.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

Label = int


class _Reject:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "REJECT"

    def __bool__(self) -> bool:
        return False


REJECT = _Reject()


class EmptyFeasibleSet(ValueError):
    pass


class SizeGuardError(ValueError):
    pass


@dataclass(frozen=True)
class KnapsackState:
    selected: frozenset
    remaining: int


@dataclass(frozen=True)
class MatchingState:
    remaining: frozenset
    selected: frozenset = frozenset()


@dataclass(frozen=True)
class PermutationState:
    remaining: frozenset


class TransitionRule:
    """Base class for per-instance transition rules.

    Subclasses implement ``initial``, ``_successor`` and ``accepting``.
    ``labels`` lists the instance's alphabet in a fixed order. ``op_count``
    accumulates the elementary set operations done by ``step`` so cost
    contracts can be checked without timing.
    """

    labels: tuple

    def __init__(self) -> None:
        self.op_count = 0

    def initial(self):
        raise NotImplementedError

    def accepting(self, state) -> bool:
        raise NotImplementedError

    def _successor(self, state, label):
        raise NotImplementedError

    def step(self, state, label):
        if state is REJECT:
            return REJECT
        return self._successor(state, label)

    def mask(self, state) -> frozenset:
        if state is REJECT:
            return frozenset()
        return frozenset(s for s in self.labels if self._admissible(state, s))

    def _admissible(self, state, label) -> bool:
        raise NotImplementedError


class KnapsackRule(TransitionRule):
    """Select distinct items while the total weight stays within capacity.

    Weights must be integers; the capacity is floored, which is exact for
    integer weights (sum(w) <= B iff sum(w) <= floor(B)).
    """

    def __init__(self, weights: dict, capacity: float) -> None:
        super().__init__()
        for j, w in weights.items():
            if int(w) != w or w < 0:
                raise ValueError(f"weight of {j} must be a non-negative integer, got {w}")
        self.weights = {int(j): int(w) for j, w in weights.items()}
        self.labels = tuple(sorted(self.weights))
        self.capacity = float(capacity)
        self._units = math.floor(capacity + 1e-9)

    def initial(self) -> KnapsackState:
        return KnapsackState(frozenset(), self._units)

    def accepting(self, state) -> bool:
        return state is not REJECT

    def _admissible(self, state: KnapsackState, label) -> bool:
        w = self.weights.get(label)
        return w is not None and label not in state.selected and w <= state.remaining

    def _successor(self, state: KnapsackState, label):
        self.op_count += 1
        if not self._admissible(state, label):
            return REJECT
        return KnapsackState(state.selected | {label}, state.remaining - self.weights[label])


class MatchingRule(TransitionRule):
    """Pick edges of a bipartite graph so that no two share an endpoint."""

    def __init__(self, edges: dict) -> None:
        # edges: edge id -> (left node, right node)
        super().__init__()
        self.edges = {int(e): (lr[0], lr[1]) for e, lr in edges.items()}
        self.labels = tuple(sorted(self.edges))

    def neighborhood(self, label) -> frozenset:
        u, v = self.edges[label]
        return frozenset(e for e, (a, b) in self.edges.items() if a == u or b == v)

    def initial(self) -> MatchingState:
        return MatchingState(frozenset(self.labels))

    def accepting(self, state) -> bool:
        return state is not REJECT

    def _admissible(self, state: MatchingState, label) -> bool:
        return label in state.remaining

    def _successor(self, state: MatchingState, label):
        if label not in state.remaining:
            self.op_count += 1
            return REJECT
        u, v = self.edges[label]
        keep = []
        for e in state.remaining:
            self.op_count += 1
            a, b = self.edges[e]
            if a != u and b != v:
                keep.append(e)
        return MatchingState(frozenset(keep), state.selected | {label})


class PermutationRule(TransitionRule):
    """Order every label exactly once; only the empty remainder accepts."""

    def __init__(self, labels: Iterable) -> None:
        super().__init__()
        self.labels = tuple(sorted(int(j) for j in labels))

    def initial(self) -> PermutationState:
        return PermutationState(frozenset(self.labels))

    def accepting(self, state) -> bool:
        return state is not REJECT and not state.remaining

    def _admissible(self, state: PermutationState, label) -> bool:
        return label in state.remaining

    def _successor(self, state: PermutationState, label):
        self.op_count += 1
        if label not in state.remaining:
            return REJECT
        return PermutationState(state.remaining - {label})


def mask_of(rule: TransitionRule, state) -> frozenset:
    return rule.mask(state)


def step(rule: TransitionRule, state, label):
    return rule.step(state, label)


def replay(rule: TransitionRule, seq: Sequence[Label]):
    state = rule.initial()
    for label in seq:
        state = rule.step(state, label)
        if state is REJECT:
            return REJECT
    return state


def is_feasible_sequence(rule: TransitionRule, seq: Sequence[Label]) -> bool:
    state = replay(rule, seq)
    return state is not REJECT and rule.accepting(state)


def sample_solution(
    rule: TransitionRule,
    rng_seed: int | np.random.Generator = 0,
    p_term: float = 0.5,
) -> list:
    """Random walk over the rule: uniform over the mask, Bernoulli(p_term) stop.

    At an accepting state the walk stops when the mask is empty or when the
    termination draw succeeds.
    """
    if not 0.0 < p_term <= 1.0:
        raise ValueError("p_term must lie in (0, 1]")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    state = rule.initial()
    seq: list = []
    while True:
        mask = sorted(rule.mask(state))
        if rule.accepting(state):
            if not mask or rng.random() < p_term:
                return seq
        elif not mask:
            raise EmptyFeasibleSet("no admissible label at a non-accepting state")
        v = mask[int(rng.integers(len(mask)))]
        seq.append(v)
        state = rule.step(state, v)


def enumerate_feasible(rule: TransitionRule, max_len: int | None = None, max_alphabet: int = 12) -> set:
    """All accepted sequences of length <= max_len, by exhaustive DFS."""
    if len(rule.labels) > max_alphabet:
        raise SizeGuardError(f"alphabet of {len(rule.labels)} exceeds guard {max_alphabet}")
    if max_len is None:
        max_len = len(rule.labels)
    out: set = set()

    def dfs(state, prefix: tuple) -> None:
        if rule.accepting(state):
            out.add(prefix)
        if len(prefix) == max_len:
            return
        for s in sorted(rule.mask(state)):
            dfs(rule.step(state, s), prefix + (s,))

    dfs(rule.initial(), ())
    return out
