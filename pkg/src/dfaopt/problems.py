"""Universes, instances, reward specifications and sequence encodings.

Three applications share one vocabulary convention: labels are universe ids
(knapsack elements, bipartite edges, jobs). Hidden features (groups) live on
the universe and are only read by generators, rewards and oracles.
"""
from __future__ import annotations

import hashlib
import itertools
import json
import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .dfa import KnapsackRule, MatchingRule, PermutationRule

P_MAX = 100

# fixed constants (knapsack quadratic rewards, matching rewards, scheduling groups)
Q1, Q2, Q3 = 0.0015, 0.0003, 0.0009
MATCHING_RANGES = {0: (8.0, 10.0), 1: (4.0, 6.0), 2: (1.0, 2.0)}
MATCHING_GAMMA = 6.0
SCHEDULING_MEANS = (1000.0, 3000.0, 5000.0, 7000.0, 9000.0)
SCHEDULING_SIGMA = 400.0
SCHEDULING_K = 10_000
TAU = 0.9

HEURISTIC_RULES = ("alt_1_1", "alt_2_1", "cluster_group")


def derive_seed(seed: int, *keys) -> int:
    """Stable per-item seed, independent of Python's hash randomization."""
    h = hashlib.sha256(repr((int(seed),) + tuple(keys)).encode()).digest()
    return int.from_bytes(h[:8], "little")


# ---------------------------------------------------------------------------
# knapsack


@dataclass(frozen=True)
class KnapsackUniverse:
    n: int
    K: int
    weights: tuple
    groups: tuple
    group_count: int = 3
    seed: int = 0

    @property
    def ref(self) -> str:
        return f"knapsack-n{self.n}-K{self.K}-g{self.group_count}-s{self.seed}"


@dataclass(frozen=True)
class KnapsackInstance:
    elements: tuple
    weights: tuple
    capacity: float
    p: int
    universe_ref: str = ""

    def rule(self) -> KnapsackRule:
        return KnapsackRule(dict(zip(self.elements, self.weights)), self.capacity)


def gen_knapsack_universe(n: int, K: int, group_count: int = 3, seed: int = 0) -> KnapsackUniverse:
    if n < 1 or K < 1:
        raise ValueError("need n >= 1 and K >= 1")
    rng = np.random.default_rng(seed)
    weights = rng.integers(1, K + 1, size=n)
    groups = rng.integers(0, group_count, size=n)
    return KnapsackUniverse(n, K, tuple(int(w) for w in weights), tuple(int(g) for g in groups), group_count, seed)


def knapsack_capacity(weights: Sequence[int], p: int) -> float:
    if not 1 <= p <= P_MAX:
        raise ValueError(f"p must lie in 1..{P_MAX}, got {p}")
    return p / (P_MAX + 1) * float(sum(weights))


def gen_knapsack_instance(universe: KnapsackUniverse, subset: Sequence[int], p: int) -> KnapsackInstance:
    if not subset:
        raise ValueError("subset must be non-empty")
    elements = tuple(sorted(int(j) for j in subset))
    weights = tuple(universe.weights[j] for j in elements)
    return KnapsackInstance(elements, weights, knapsack_capacity(weights, p), int(p), universe.ref)


def sample_knapsack_instances(
    universe: KnapsackUniverse, n_subsets: int, sizes: Sequence[int], p_per_subset: int, seed: int
) -> list:
    """Draw subsets, then several capacities per subset (shared elements)."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n_subsets):
        k = int(rng.choice(sizes))
        subset = rng.choice(universe.n, size=k, replace=False)
        ps = rng.choice(np.arange(1, P_MAX + 1), size=p_per_subset, replace=False)
        for p in ps:
            out.append(gen_knapsack_instance(universe, subset.tolist(), int(p)))
    return out


# ---------------------------------------------------------------------------
# rewards


@dataclass
class RewardSpec:
    kind: str = "inverse_proportional"
    linear: str = "inverse_proportional"
    q1: float = Q1
    q2: float = Q2
    q3: float = Q3
    ranges: dict = field(default_factory=lambda: dict(MATCHING_RANGES))
    gamma: float = MATCHING_GAMMA
    rule: Optional[str] = None
    seed: int = 0

    KINDS = (
        "inverse_proportional",
        "logarithmic",
        "quadratic_group",
        "matching_group_linear",
        "matching_diversity_quadratic",
        "heuristic",
    )

    def __post_init__(self) -> None:
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown reward kind {self.kind!r}")
        if self.kind == "heuristic" and self.rule not in HEURISTIC_RULES:
            raise ValueError(f"heuristic reward needs a rule in {HEURISTIC_RULES}")
        self.ranges = {int(d): (float(a), float(b)) for d, (a, b) in self.ranges.items()}

    @property
    def is_quadratic(self) -> bool:
        return self.kind in ("quadratic_group", "matching_diversity_quadratic")

    @property
    def is_heuristic(self) -> bool:
        return self.kind == "heuristic"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ranges"] = {str(k): list(v) for k, v in self.ranges.items()}
        return d


def linear_reward(universe: KnapsackUniverse, kind: str) -> np.ndarray:
    w = np.asarray(universe.weights, dtype=np.float64)
    if kind == "inverse_proportional":
        return 1.0 / w
    if kind == "logarithmic":
        # ln(1) = 0: unit-weight items carry no reward
        return np.log(w)
    raise ValueError(f"unknown linear reward kind {kind!r}")


def quadratic_reward(c1: np.ndarray, groups: Sequence[int], q1: float = Q1, q2: float = Q2, q3: float = Q3) -> np.ndarray:
    if min(q1, q2, q3) <= 0:
        raise ValueError("q1, q2, q3 must be positive")
    c1 = np.asarray(c1, dtype=np.float64)
    g = np.asarray(groups)
    pair_sum = c1[:, None] + c1[None, :]
    same = g[:, None] == g[None, :]
    c2 = np.where(same, q1 * pair_sum + q2, -q3 * pair_sum)
    np.fill_diagonal(c2, 0.0)
    return c2


def knapsack_rewards(universe: KnapsackUniverse, spec: RewardSpec) -> tuple:
    if spec.kind in ("inverse_proportional", "logarithmic"):
        return linear_reward(universe, spec.kind), None
    if spec.kind == "quadratic_group":
        c1 = linear_reward(universe, spec.linear)
        return c1, quadratic_reward(c1, universe.groups, spec.q1, spec.q2, spec.q3)
    raise ValueError(f"reward kind {spec.kind!r} does not apply to knapsack")


def knapsack_objective(selected: Sequence[int], c1: np.ndarray, c2: Optional[np.ndarray] = None) -> float:
    sel = sorted(set(int(j) for j in selected))
    value = float(sum(c1[j] for j in sel))
    if c2 is not None:
        # ordered pairs j != k, as in the quadratic objective
        for j, k in itertools.permutations(sel, 2):
            value += float(c2[j, k])
    return value


# ---------------------------------------------------------------------------
# heuristic knapsack rules


def heuristic_solution(instance: KnapsackInstance, rule: str, groups: Optional[Sequence[int]] = None) -> list:
    """Rule-based selection, in ascending universe id order.

    Selection stops at the first mandated element that no longer fits.
    ``cluster_group`` needs the universe group labels.
    """
    order = sorted(instance.elements)
    w = dict(zip(instance.elements, instance.weights))
    if rule == "alt_1_1":
        mandated = order[0::2]
    elif rule == "alt_2_1":
        mandated = [j for i, j in enumerate(order) if i % 3 != 2]
    elif rule == "cluster_group":
        if groups is None:
            raise ValueError("cluster_group needs group labels")
        counts = Counter(groups[j] for j in order)
        top = max(counts.values())
        modal = min(g for g, c in counts.items() if c == top)
        mandated = [j for j in order if groups[j] == modal]
    else:
        raise ValueError(f"unknown heuristic rule {rule!r}")
    remaining = math.floor(instance.capacity + 1e-9)
    chosen = []
    for j in mandated:
        if w[j] > remaining:
            break
        chosen.append(j)
        remaining -= w[j]
    return chosen


# ---------------------------------------------------------------------------
# matching


@dataclass(frozen=True)
class MatchingUniverse:
    n_left: int
    n_right: int
    left_groups: tuple
    right_groups: tuple
    group_count: int = 3
    seed: int = 0

    @property
    def n_edges(self) -> int:
        return self.n_left * self.n_right

    def endpoints(self, edge: int) -> tuple:
        return divmod(int(edge), self.n_right)

    def edge_id(self, left: int, right: int) -> int:
        return left * self.n_right + right

    def edge_groups(self, edge: int) -> tuple:
        u, v = self.endpoints(edge)
        return self.left_groups[u], self.right_groups[v]

    @property
    def ref(self) -> str:
        return f"matching-{self.n_left}x{self.n_right}-g{self.group_count}-s{self.seed}"


@dataclass(frozen=True)
class MatchingInstance:
    edges: tuple
    endpoints: tuple
    left_groups: tuple
    right_groups: tuple
    universe_ref: str = ""

    @property
    def elements(self) -> tuple:
        return self.edges

    def rule(self) -> MatchingRule:
        return MatchingRule(dict(zip(self.edges, self.endpoints)))


def gen_matching_universe(n_left: int, n_right: int, group_count: int = 3, seed: int = 0) -> MatchingUniverse:
    rng = np.random.default_rng(seed)
    lg = rng.integers(0, group_count, size=n_left)
    rg = rng.integers(0, group_count, size=n_right)
    return MatchingUniverse(n_left, n_right, tuple(int(g) for g in lg), tuple(int(g) for g in rg), group_count, seed)


def gen_matching_instance(universe: MatchingUniverse, edge_prob: float, seed: int) -> MatchingInstance:
    if not 0.0 < edge_prob <= 1.0:
        raise ValueError("edge_prob must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    keep = rng.random(universe.n_edges) < edge_prob
    edges = tuple(int(e) for e in np.flatnonzero(keep))
    return _matching_instance(universe, edges)


def _matching_instance(universe: MatchingUniverse, edges: Sequence[int]) -> MatchingInstance:
    edges = tuple(sorted(int(e) for e in edges))
    ends = tuple(universe.endpoints(e) for e in edges)
    return MatchingInstance(
        edges,
        ends,
        tuple(universe.left_groups[u] for u, _ in ends),
        tuple(universe.right_groups[v] for _, v in ends),
        universe.ref,
    )


def matching_rewards(universe: MatchingUniverse, spec: RewardSpec) -> tuple:
    """Per-edge linear rewards (frozen per universe) and pairwise rewards.

    For edges e=(j,k), f=(l,m) the pairwise reward is -gamma when all four
    endpoint groups agree, +gamma when g_l == g_m and exactly one of g_j, g_k
    equals g_l (checked in both orientations so the matrix is symmetric),
    and 0 otherwise.
    """
    rng = np.random.default_rng(spec.seed)
    nE = universe.n_edges
    c1 = np.empty(nE)
    for e in range(nE):
        gj, gk = universe.edge_groups(e)
        d = abs(gj - gk)
        if d not in spec.ranges:
            raise ValueError(f"no reward range for group distance {d}")
        a, b = spec.ranges[d]
        c1[e] = rng.uniform(a, b)
    if spec.kind == "matching_group_linear":
        return c1, None
    if spec.kind != "matching_diversity_quadratic":
        raise ValueError(f"reward kind {spec.kind!r} does not apply to matching")
    groups = [universe.edge_groups(e) for e in range(nE)]
    c2 = np.zeros((nE, nE))
    for e in range(nE):
        for f in range(e + 1, nE):
            c2[e, f] = c2[f, e] = _diversity_reward(groups[e], groups[f], spec.gamma)
    return c1, c2


def _diversity_reward(ge: tuple, gf: tuple, gamma: float) -> float:
    gj, gk = ge
    gl, gm = gf
    if gj == gk == gl == gm:
        return -gamma

    def one_differs(a, b, ref_a, ref_b):
        return ref_a == ref_b and ((a == ref_a) != (b == ref_a))

    if one_differs(gj, gk, gl, gm) or one_differs(gl, gm, gj, gk):
        return gamma
    return 0.0


def matching_objective(selected: Sequence[int], c1: np.ndarray, c2: Optional[np.ndarray] = None) -> float:
    sel = sorted(set(int(e) for e in selected))
    value = float(sum(c1[e] for e in sel))
    if c2 is not None:
        # unordered pairs {e, f}
        for e, f in itertools.combinations(sel, 2):
            value += float(c2[e, f])
    return value


# ---------------------------------------------------------------------------
# scheduling


@dataclass(frozen=True)
class SchedulingUniverse:
    n: int
    processing: tuple
    groups: tuple
    means: tuple = SCHEDULING_MEANS
    sigma: float = SCHEDULING_SIGMA
    K: int = SCHEDULING_K
    seed: int = 0

    @property
    def ref(self) -> str:
        return f"scheduling-n{self.n}-K{self.K}-s{self.seed}"


@dataclass(frozen=True)
class SchedulingInstance:
    jobs: tuple
    processing: tuple
    release: tuple
    groups: tuple
    tau: float = TAU
    universe_ref: str = ""

    @property
    def elements(self) -> tuple:
        return self.jobs

    def rule(self) -> PermutationRule:
        return PermutationRule(self.jobs)


def _truncated_normal(rng: np.random.Generator, mean: float, sigma: float, lo: float, hi: float) -> float:
    if sigma == 0:
        return min(max(mean, lo), hi)
    while True:
        x = rng.normal(mean, sigma)
        if lo <= x <= hi:
            return x


def gen_scheduling_universe(
    n: int,
    group_means: Sequence[float] = SCHEDULING_MEANS,
    sigma: float = SCHEDULING_SIGMA,
    K: int = SCHEDULING_K,
    seed: int = 0,
) -> SchedulingUniverse:
    """Jobs get uniform group labels 1..G; times ~ TN(mean_g, sigma; [1, K]), rounded."""
    if any(not 0 < m <= K for m in group_means):
        raise ValueError("group means must lie in (0, K]")
    rng = np.random.default_rng(seed)
    groups = rng.integers(1, len(group_means) + 1, size=n)
    proc = []
    for g in groups:
        x = _truncated_normal(rng, group_means[g - 1], sigma, 1.0, float(K))
        proc.append(int(min(max(round(x), 1), K)))
    return SchedulingUniverse(n, tuple(proc), tuple(int(g) for g in groups), tuple(group_means), sigma, K, seed)


def gen_scheduling_instance(universe: SchedulingUniverse, subset: Sequence[int], tau: float = TAU, seed: int = 0) -> SchedulingInstance:
    if tau <= 0:
        raise ValueError("tau must be positive")
    rng = np.random.default_rng(seed)
    jobs = tuple(int(j) for j in subset)
    proc = tuple(universe.processing[j] for j in jobs)
    hi = math.floor(tau * sum(proc))
    release = tuple(int(r) for r in rng.integers(0, hi + 1, size=len(jobs)))
    return SchedulingInstance(jobs, proc, release, tuple(universe.groups[j] for j in jobs), tau, universe.ref)


# ---------------------------------------------------------------------------
# precedence DAGs over groups 1..5
#
# Every preset puts a longer group before a shorter one, so the SPT order
# (groups 1, 2, 3, 4, 5) always breaks at least one edge.

DAG_PRESETS = {
    "A": ((4, 2), (4, 5), (2, 1), (5, 3)),
    "B": ((4, 2), (4, 5), (2, 1), (5, 3), (3, 1)),
    "C": ((2, 1), (3, 1), (4, 1), (5, 1)),
}


@dataclass(frozen=True)
class PrecedenceDag:
    edges: tuple
    nodes: tuple = (1, 2, 3, 4, 5)
    name: str = ""

    def in_degree(self, node: int) -> int:
        return sum(1 for _, h in self.edges if h == node)

    def out_degree(self, node: int) -> int:
        return sum(1 for g, _ in self.edges if g == node)

    def is_acyclic(self) -> bool:
        indeg = {v: self.in_degree(v) for v in self.nodes}
        frontier = [v for v, d in indeg.items() if d == 0]
        seen = 0
        while frontier:
            v = frontier.pop()
            seen += 1
            for g, h in self.edges:
                if g == v:
                    indeg[h] -= 1
                    if indeg[h] == 0:
                        frontier.append(h)
        return seen == len(self.nodes)

    def to_list(self) -> list:
        return [list(e) for e in self.edges]


def precedence_dag_preset(preset: Optional[str]) -> PrecedenceDag:
    if preset is None or preset == "none":
        return PrecedenceDag((), name="none")
    if preset not in DAG_PRESETS:
        raise ValueError(f"unknown DAG preset {preset!r}")
    return PrecedenceDag(DAG_PRESETS[preset], name=preset)


# ---------------------------------------------------------------------------
# sorting permutation


@dataclass(frozen=True)
class SortingPermutation:
    order: tuple
    frequency: tuple

    def rank(self) -> dict:
        return {j: i for i, j in enumerate(self.order)}

    def apply(self, ids: Sequence[int]) -> list:
        r = self.rank()
        return sorted(ids, key=lambda j: r[j])

    def to_dict(self) -> dict:
        return {"order": list(self.order), "frequency": list(self.frequency)}

    @classmethod
    def from_dict(cls, d: dict) -> "SortingPermutation":
        return cls(tuple(d["order"]), tuple(d["frequency"]))

    @classmethod
    def identity(cls, n: int) -> "SortingPermutation":
        return cls(tuple(range(n)), tuple([0.0] * n))


def sorting_permutation(pairs: Sequence[tuple], universe_size: int) -> SortingPermutation:
    """Order ids by inclusion frequency conditional on presence, descending.

    ``pairs`` holds (instance element ids, solution ids). Ids that never
    appear in an instance get frequency 0; ties go to the smaller id.
    """
    if not pairs:
        raise ValueError("empty training set")
    present = np.zeros(universe_size)
    chosen = np.zeros(universe_size)
    for elements, solution in pairs:
        for j in elements:
            present[j] += 1
        for j in set(solution):
            chosen[j] += 1
    freq = np.divide(chosen, present, out=np.zeros(universe_size), where=present > 0)
    order = sorted(range(universe_size), key=lambda j: (-freq[j], j))
    return SortingPermutation(tuple(order), tuple(float(f) for f in freq))


# ---------------------------------------------------------------------------
# encodings


@dataclass
class EncodedPair:
    """Encoder rows (categorical ids, scaled continuous values) and target labels.

    ``target`` holds universe ids; EOS is appended by the model layer when
    ``terminated`` is true.
    """

    categorical: np.ndarray
    continuous: np.ndarray
    target: list
    terminated: bool


def encode_knapsack(instance: KnapsackInstance, solution: Sequence[int], universe_size: int, K: int, perm: Optional[SortingPermutation] = None) -> EncodedPair:
    _check_solution(instance.elements, solution)
    ids = list(instance.elements) if perm is None else perm.apply(instance.elements)
    w = dict(zip(instance.elements, instance.weights))
    cap_token = universe_size
    cat = np.array([[j] for j in ids] + [[cap_token]], dtype=np.int64)
    cont = np.array([[w[j] / K, 0.0] for j in ids] + [[0.0, instance.capacity / K]])
    target = list(solution) if perm is None else perm.apply(solution)
    return EncodedPair(cat, cont, target, True)


def encode_matching(instance: MatchingInstance, solution: Sequence[int], perm: Optional[SortingPermutation] = None) -> EncodedPair:
    _check_solution(instance.edges, solution)
    ids = list(instance.edges) if perm is None else perm.apply(instance.edges)
    g = {e: (lg, rg) for e, lg, rg in zip(instance.edges, instance.left_groups, instance.right_groups)}
    cat = np.array([[e, g[e][0], g[e][1]] for e in ids], dtype=np.int64)
    cont = np.zeros((len(ids), 0))
    target = list(solution) if perm is None else perm.apply(solution)
    return EncodedPair(cat, cont, target, True)


def encode_scheduling(instance: SchedulingInstance, order: Sequence[int], K: int = SCHEDULING_K) -> EncodedPair:
    _check_solution(instance.jobs, order)
    cat = np.array([[j, g] for j, g in zip(instance.jobs, instance.groups)], dtype=np.int64)
    cont = np.array([[p / K, r / K] for p, r in zip(instance.processing, instance.release)])
    return EncodedPair(cat, cont, list(order), False)


def _check_solution(elements: Sequence[int], solution: Sequence[int]) -> None:
    missing = set(solution) - set(elements)
    if missing:
        raise ValueError(f"solution uses ids absent from the instance: {sorted(missing)}")


# ---------------------------------------------------------------------------
# serialization


def instance_to_record(instance, solution=None, provenance: Optional[dict] = None) -> dict:
    if isinstance(instance, KnapsackInstance):
        rec = {
            "problem": "knapsack",
            "universe_ref": instance.universe_ref,
            "elements": list(instance.elements),
            "weights": list(instance.weights),
            "B": instance.capacity,
            "p": instance.p,
        }
    elif isinstance(instance, MatchingInstance):
        rec = {
            "problem": "matching",
            "universe_ref": instance.universe_ref,
            "elements": list(instance.edges),
            "endpoints": [list(x) for x in instance.endpoints],
            "groups": [list(x) for x in zip(instance.left_groups, instance.right_groups)],
        }
    elif isinstance(instance, SchedulingInstance):
        rec = {
            "problem": "scheduling",
            "universe_ref": instance.universe_ref,
            "elements": list(instance.jobs),
            "p": list(instance.processing),
            "r": list(instance.release),
            "groups": list(instance.groups),
            "tau": instance.tau,
        }
    else:
        raise TypeError(f"unsupported instance type {type(instance).__name__}")
    rec["solution"] = None if solution is None else [int(x) for x in solution]
    rec["provenance"] = provenance or {}
    return rec


def instance_from_record(rec: dict):
    kind = rec["problem"]
    if kind == "knapsack":
        return KnapsackInstance(tuple(rec["elements"]), tuple(rec["weights"]), float(rec["B"]), int(rec["p"]), rec["universe_ref"])
    if kind == "matching":
        lg, rg = zip(*rec["groups"]) if rec["groups"] else ((), ())
        return MatchingInstance(
            tuple(rec["elements"]), tuple(tuple(x) for x in rec["endpoints"]), tuple(lg), tuple(rg), rec["universe_ref"]
        )
    if kind == "scheduling":
        return SchedulingInstance(
            tuple(rec["elements"]), tuple(rec["p"]), tuple(rec["r"]), tuple(rec["groups"]), float(rec["tau"]), rec["universe_ref"]
        )
    raise ValueError(f"unknown problem {kind!r}")


def universe_to_dict(universe) -> dict:
    d = asdict(universe)
    d["kind"] = type(universe).__name__
    d["ref"] = universe.ref
    return d


def universe_from_dict(d: dict):
    d = dict(d)
    kind = d.pop("kind")
    d.pop("ref", None)
    cls = {"KnapsackUniverse": KnapsackUniverse, "MatchingUniverse": MatchingUniverse, "SchedulingUniverse": SchedulingUniverse}[kind]
    return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})


def dumps_record(rec: dict) -> str:
    return json.dumps(rec, sort_keys=True, separators=(",", ":"))
