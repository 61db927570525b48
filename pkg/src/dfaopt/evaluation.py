"""Optimality gaps, rule and precedence satisfaction, edit distance, and report aggregation."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from .oracles import evaluate_schedule
from .problems import KnapsackInstance, PrecedenceDag, SchedulingInstance, heuristic_solution

GAP_TOL = 1e-9


def optimality_gap(generated: float, optimal: float, sense: str = "max") -> float:
    """Percent gap to the optimum; NaN when the optimum is 0 and the generated value is not."""
    if sense not in ("max", "min"):
        raise ValueError(f"sense must be 'max' or 'min', not {sense!r}")
    if optimal == 0:
        return 0.0 if abs(generated) <= GAP_TOL else math.nan
    diff = optimal - generated if sense == "max" else generated - optimal
    gap = 100.0 * diff / abs(optimal)
    if gap < -GAP_TOL * 100:
        raise AssertionError(f"generated objective {generated} beats the optimum {optimal}")
    # objective ties within float noise count as optimal
    return 0.0 if gap <= GAP_TOL * 100 else gap


def heuristic_satisfaction(solution: Sequence[int], instance: KnapsackInstance, rule: str, groups: Optional[Sequence[int]] = None) -> bool:
    return set(solution) == set(heuristic_solution(instance, rule, groups))


def precedence_satisfied(instance: SchedulingInstance, order: Sequence[int], dag: Optional[PrecedenceDag]) -> bool:
    if dag is None:
        return True
    ev = evaluate_schedule(instance, order)
    group = dict(zip(instance.jobs, instance.groups))
    for a, b in dag.edges:
        done_a = [c for j, c in zip(order, ev.completion) if group[j] == a]
        start_b = [s for j, s in zip(order, ev.start) if group[j] == b]
        if done_a and start_b and max(done_a) > min(start_b):
            return False
    return True


def edit_distance(a: Sequence, b: Sequence) -> int:
    """Levenshtein distance with unit costs."""
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, 1):
        cur = [i]
        for j, y in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y)))
        prev = cur
    return prev[-1]


@dataclass
class InstanceRow:
    instance_id: int
    gap_pct: float
    feasible: bool
    edit_distance: int
    precedence_ok: Optional[bool] = None
    heuristic_ok: Optional[bool] = None

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class MetricsReport:
    n: int
    feasibility_pct: float
    gap_mean: float
    gap_median: float
    gap_q1: float
    gap_q3: float
    gap_max: float
    n_gap: int
    n_gap_undefined: int
    pct_optimal: float
    pct_gap_positive: float
    pct_heuristic: float
    n_heuristic: int
    pct_precedence: float
    n_precedence: int
    edit_distance_mean: float

    def metric_rows(self) -> list:
        """(metric, value, n) triples; undefined statistics are NaN with n = 0."""
        gap_n = self.n_gap
        return [
            ("feasibility_pct", self.feasibility_pct, self.n),
            ("gap_mean", self.gap_mean, gap_n),
            ("gap_median", self.gap_median, gap_n),
            ("gap_q1", self.gap_q1, gap_n),
            ("gap_q3", self.gap_q3, gap_n),
            ("gap_max", self.gap_max, gap_n),
            ("gap_undefined_count", float(self.n_gap_undefined), self.n),
            ("pct_optimal", self.pct_optimal, 0 if math.isnan(self.pct_optimal) else self.n),
            ("pct_gap_positive", self.pct_gap_positive, 0 if math.isnan(self.pct_gap_positive) else self.n),
            ("pct_heuristic", self.pct_heuristic, self.n_heuristic),
            ("pct_precedence", self.pct_precedence, self.n_precedence),
            ("edit_distance_mean", self.edit_distance_mean, self.n),
        ]


def aggregate(rows: Sequence[InstanceRow]) -> MetricsReport:
    """Summary statistics. When rows carry ``precedence_ok``, gap statistics use only rows that satisfy it."""
    if not rows:
        raise ValueError("cannot aggregate an empty set of rows")
    n = len(rows)
    included = [r for r in rows if r.precedence_ok is not False]
    gaps = np.array([r.gap_pct for r in included if not math.isnan(r.gap_pct)])
    undefined = sum(1 for r in included if math.isnan(r.gap_pct))
    stat = (lambda f: float(f(gaps))) if len(gaps) else (lambda f: math.nan)
    # rule-imitation rows carry no objective, so optimality shares are undefined
    has_objective = any(r.heuristic_ok is None for r in rows)
    share = (lambda k: 100.0 * k / n) if has_objective else (lambda k: math.nan)
    heur = [r.heuristic_ok for r in rows if r.heuristic_ok is not None]
    prec = [r.precedence_ok for r in rows if r.precedence_ok is not None]
    return MetricsReport(
        n=n,
        feasibility_pct=100.0 * sum(r.feasible for r in rows) / n,
        gap_mean=stat(np.mean),
        gap_median=stat(np.median),
        gap_q1=stat(lambda g: np.percentile(g, 25)),
        gap_q3=stat(lambda g: np.percentile(g, 75)),
        gap_max=stat(np.max),
        n_gap=len(gaps),
        n_gap_undefined=undefined,
        pct_optimal=share(int(np.sum(gaps == 0.0))),
        pct_gap_positive=share(int(np.sum(gaps > 0.0))),
        pct_heuristic=100.0 * sum(heur) / len(heur) if heur else math.nan,
        n_heuristic=len(heur),
        pct_precedence=100.0 * sum(prec) / len(prec) if prec else math.nan,
        n_precedence=len(prec),
        edit_distance_mean=float(np.mean([r.edit_distance for r in rows])),
    )
