"""Datasets from generators and oracles, experiment variations, and end-to-end runs."""
from __future__ import annotations

import csv
import json
import logging
import math
import subprocess
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import problems as P
from .dfa import is_feasible_sequence
from .evaluation import InstanceRow, aggregate, edit_distance, heuristic_satisfaction, optimality_gap, precedence_satisfied
from .neural import (
    OPTIMIZER_NAME,
    ModelConfig,
    TrainConfig,
    TrainingDiverged,
    build_model,
    fit,
    greedy_decode_batch,
    layout_for,
    load_checkpoint,
    make_example,
    save_checkpoint,
)
from .oracles import baseline_solution, evaluate_schedule, solve_knapsack, solve_matching, solve_schedule

log = logging.getLogger(__name__)

PROBLEMS = ("knapsack", "matching", "scheduling")
VARIATIONS = ("full", "subsample_10pct", "corrupt_5pct", "no_cr_training")
SPLITS = (0.8, 0.1, 0.1)
CORRUPT_FRACTION = 0.05
SUBSAMPLE_FRACTION = 0.1
EVAL_CAP = 1000
METRIC_HEADER = ("problem", "variation", "model", "metric", "value", "n")
INSTANCE_HEADER = ("instance_id", "gap_pct", "feasible", "edit_distance", "precedence_ok")


# ---------------------------------------------------------------------------
# experiment specification


@dataclass
class Seeds:
    universe: int = 0
    instances: int = 1
    split: int = 2
    corruption: int = 3
    subsample: int = 4
    model: int = 5
    train: int = 6
    baseline: int = 7


@dataclass
class ExperimentSpec:
    problem: str = "knapsack"
    variation: str = "full"
    reward: dict = field(default_factory=dict)
    dag: Optional[str] = None
    universe: dict = field(default_factory=dict)
    n_instances: int = 1000
    instance_sizes: tuple = ()
    edge_prob: float = 0.4
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    seeds: Seeds = field(default_factory=Seeds)
    baselines: tuple = ()
    eval_cap: int = EVAL_CAP
    out_dir: str = "runs"

    def __post_init__(self) -> None:
        if self.problem not in PROBLEMS:
            raise ValueError(f"problem must be one of {PROBLEMS}")
        if self.variation not in VARIATIONS:
            raise ValueError(f"variation must be one of {VARIATIONS}")
        if isinstance(self.model, dict):
            self.model = ModelConfig(**self.model)
        if isinstance(self.train, dict):
            self.train = TrainConfig(**self.train)
        if isinstance(self.seeds, dict):
            self.seeds = Seeds(**self.seeds)
        self.instance_sizes = tuple(self.instance_sizes) or DEFAULT_SIZES[self.problem]
        self.universe = {**DEFAULT_UNIVERSE[self.problem], **self.universe}
        self.baselines = tuple(self.baselines)
        if self.problem == "scheduling" and self.reward:
            raise ValueError("scheduling has no reward specification")

    @property
    def reward_spec(self) -> Optional[P.RewardSpec]:
        if self.problem == "scheduling":
            return None
        default = {"knapsack": "inverse_proportional", "matching": "matching_group_linear"}[self.problem]
        return P.RewardSpec(**{"kind": default, **self.reward})

    @property
    def sense(self) -> str:
        return "min" if self.problem == "scheduling" else "max"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["instance_sizes"] = list(self.instance_sizes)
        d["baselines"] = list(self.baselines)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "ExperimentSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def cell_name(self) -> str:
        return f"{self.problem}_{self.variation}_{self.model.model_kind}"


DEFAULT_UNIVERSE = {
    "knapsack": {"n": 20, "K": 1000, "group_count": 3},
    "matching": {"n_left": 6, "n_right": 6, "group_count": 3},
    "scheduling": {"n": 30},
}
DEFAULT_SIZES = {"knapsack": tuple(range(5, 16)), "matching": (), "scheduling": (6, 7, 8)}


# ---------------------------------------------------------------------------
# datasets


@dataclass
class Entry:
    id: int
    instance: object
    target: list
    provenance: str
    split: str


@dataclass
class Dataset:
    problem: str
    universe: object
    entries: list
    permutation: Optional[P.SortingPermutation]
    sense: str
    reward: Optional[dict] = None
    dag: Optional[str] = None

    def split(self, name: str) -> list:
        return [e for e in self.entries if e.split == name]


def make_universe(spec: ExperimentSpec):
    u, s = spec.universe, spec.seeds.universe
    if spec.problem == "knapsack":
        return P.gen_knapsack_universe(u["n"], u["K"], u.get("group_count", 3), seed=s)
    if spec.problem == "matching":
        return P.gen_matching_universe(u["n_left"], u["n_right"], u.get("group_count", 3), seed=s)
    return P.gen_scheduling_universe(u["n"], seed=s)


def make_instances(spec: ExperimentSpec, universe) -> list:
    n, seed = spec.n_instances, spec.seeds.instances
    if spec.problem == "knapsack":
        per = 5
        insts = P.sample_knapsack_instances(universe, math.ceil(n / per), spec.instance_sizes, per, seed=seed)
        return insts[:n]
    if spec.problem == "matching":
        out, k = [], 0
        while len(out) < n:
            inst = P.gen_matching_instance(universe, spec.edge_prob, P.derive_seed(seed, "matching", k))
            k += 1
            # an instance without edges has nothing to learn from
            if inst.edges:
                out.append(inst)
        return out
    rng = np.random.default_rng(seed)
    out = []
    for k in range(n):
        size = int(rng.choice(spec.instance_sizes))
        subset = sorted(int(j) for j in rng.choice(universe.n, size=size, replace=False))
        out.append(P.gen_scheduling_instance(universe, subset, seed=P.derive_seed(seed, "scheduling", k)))
    return out


class OracleError(RuntimeError):
    pass


def rewards_for(problem: str, universe, reward: Optional[P.RewardSpec]) -> tuple:
    if reward is None or reward.is_heuristic:
        return None, None
    if problem == "knapsack":
        return P.knapsack_rewards(universe, reward)
    return P.matching_rewards(universe, reward)


def solve_target(problem: str, inst, universe, reward, c1, c2, dag) -> list:
    if problem == "knapsack":
        if reward.is_heuristic:
            return P.heuristic_solution(inst, reward.rule, universe.groups)
        return list(solve_knapsack(inst, c1, c2).labels)
    if problem == "matching":
        return list(solve_matching(inst, c1, c2).labels)
    return list(solve_schedule(inst, dag).labels)


def compute_permutation(problem: str, universe, entries: Sequence[Entry]) -> Optional[P.SortingPermutation]:
    # scheduling targets are orders, so ids are never re-sorted
    if problem == "scheduling":
        return None
    size = universe.n if problem == "knapsack" else universe.n_edges
    return P.sorting_permutation([(e.instance.elements, e.target) for e in entries], size)


def build_dataset(spec: ExperimentSpec) -> Dataset:
    universe = make_universe(spec)
    reward = spec.reward_spec
    c1, c2 = rewards_for(spec.problem, universe, reward)
    dag = P.precedence_dag_preset(spec.dag)
    insts = make_instances(spec, universe)
    provenance = "heuristic" if reward is not None and reward.is_heuristic else "oracle"
    entries = []
    for i, inst in enumerate(insts):
        try:
            target = solve_target(spec.problem, inst, universe, reward, c1, c2, dag)
        except Exception as exc:
            raise OracleError(f"oracle failed on instance {i}: {exc}") from exc
        if not is_feasible_sequence(inst.rule(), target):
            raise OracleError(f"target of instance {i} does not replay")
        entries.append(Entry(i, inst, target, provenance, ""))
    order = np.random.default_rng(spec.seeds.split).permutation(len(entries))
    n_train = int(SPLITS[0] * len(entries))
    n_val = int(SPLITS[1] * len(entries))
    for rank, k in enumerate(order):
        entries[k].split = "train" if rank < n_train else "val" if rank < n_train + n_val else "test"
    perm = compute_permutation(spec.problem, universe, [e for e in entries if e.split == "train"])
    return Dataset(
        spec.problem,
        universe,
        entries,
        perm,
        spec.sense,
        None if reward is None else reward.to_dict(),
        spec.dag,
    )


def random_target(entry: Entry, seed: int) -> list:
    return baseline_solution(entry.instance, "random", seed=seed)


def corrupt_dataset(ds: Dataset, fraction: float, seed: int) -> Dataset:
    """Replace ⌈fraction·N_train⌉ uniformly chosen training targets with Random-baseline solutions."""
    if not 0 <= fraction < 1:
        raise ValueError("fraction must lie in [0, 1)")
    train = [i for i, e in enumerate(ds.entries) if e.split == "train"]
    k = math.ceil(fraction * len(train))
    rng = np.random.default_rng(seed)
    chosen = set(int(i) for i in rng.choice(train, size=k, replace=False)) if k else set()
    entries = []
    for i, e in enumerate(ds.entries):
        if i in chosen:
            e = replace(e, target=random_target(e, P.derive_seed(seed, "corrupt", e.id)), provenance="corrupted")
        entries.append(e)
    out = replace(ds, entries=entries)
    out.permutation = compute_permutation(ds.problem, ds.universe, out.split("train"))
    return out


def subsample_dataset(ds: Dataset, fraction: float, seed: int) -> Dataset:
    """Keep ⌊fraction·N_train⌋ uniformly chosen training pairs; validation and test are untouched."""
    train = [i for i, e in enumerate(ds.entries) if e.split == "train"]
    keep = set(int(i) for i in np.random.default_rng(seed).choice(train, size=int(fraction * len(train)), replace=False))
    entries = [e for i, e in enumerate(ds.entries) if e.split != "train" or i in keep]
    out = replace(ds, entries=entries)
    out.permutation = compute_permutation(ds.problem, ds.universe, out.split("train"))
    return out


def apply_variation(ds: Dataset, spec: ExperimentSpec) -> tuple:
    """(dataset, model config) for the experiment's variation."""
    cfg = spec.model
    if spec.variation == "subsample_10pct":
        ds = subsample_dataset(ds, SUBSAMPLE_FRACTION, spec.seeds.subsample)
    elif spec.variation == "corrupt_5pct":
        ds = corrupt_dataset(ds, CORRUPT_FRACTION, spec.seeds.corruption)
    elif spec.variation == "no_cr_training":
        cfg = replace(cfg, mask_in_training=False)
    return ds, cfg


def entry_record(e: Entry) -> dict:
    rec = P.instance_to_record(e.instance, e.target, {"source": e.provenance})
    rec["id"], rec["split"] = e.id, e.split
    return rec


def save_dataset(ds: Dataset, directory) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    with open(d / "dataset.jsonl", "w") as f:
        for e in ds.entries:
            f.write(P.dumps_record(entry_record(e)) + "\n")
    meta = {
        "problem": ds.problem,
        "universe": P.universe_to_dict(ds.universe),
        "permutation": None if ds.permutation is None else ds.permutation.to_dict(),
        "sense": ds.sense,
        "reward": ds.reward,
        "dag": ds.dag,
    }
    (d / "dataset.json").write_text(json.dumps(meta, sort_keys=True, indent=1))
    return d


def load_dataset(directory) -> Dataset:
    d = Path(directory)
    meta = json.loads((d / "dataset.json").read_text())
    entries = []
    for line in (d / "dataset.jsonl").read_text().splitlines():
        rec = json.loads(line)
        entries.append(Entry(rec["id"], P.instance_from_record(rec), rec["solution"], rec["provenance"]["source"], rec["split"]))
    perm = meta["permutation"] and P.SortingPermutation.from_dict(meta["permutation"])
    return Dataset(meta["problem"], P.universe_from_dict(meta["universe"]), entries, perm, meta["sense"], meta["reward"], meta["dag"])


# ---------------------------------------------------------------------------
# encoding, training, decoding


def encode_entry(ds: Dataset, inst, target: Sequence[int]) -> P.EncodedPair:
    if ds.problem == "knapsack":
        return P.encode_knapsack(inst, target, ds.universe.n, ds.universe.K, ds.permutation)
    if ds.problem == "matching":
        return P.encode_matching(inst, target, ds.permutation)
    return P.encode_scheduling(inst, target)


def examples_for(ds: Dataset, entries: Sequence[Entry], vocab) -> list:
    return [make_example(encode_entry(ds, e.instance, e.target), e.instance.rule(), vocab) for e in entries]


def train_model(ds: Dataset, cfg: ModelConfig, train_cfg: TrainConfig, model_seed: int) -> tuple:
    vocab, schema = layout_for(ds.universe)
    model = build_model(cfg, vocab, schema, seed=model_seed)
    result = fit(model, examples_for(ds, ds.split("train"), vocab), examples_for(ds, ds.split("val"), vocab), train_cfg)
    return model, result


def decode_entries(model, ds: Dataset, entries: Sequence[Entry]) -> list:
    encs = [encode_entry(ds, e.instance, []) for e in entries]
    return greedy_decode_batch(model, encs, [e.instance.rule() for e in entries])


def eval_entries(ds: Dataset, entries: Sequence[Entry], outputs: Sequence[Sequence[int]]) -> list:
    reward = None if ds.reward is None else P.RewardSpec(**ds.reward)
    c1, c2 = rewards_for(ds.problem, ds.universe, reward)
    dag = P.precedence_dag_preset(ds.dag)
    rows = []
    for e, out in zip(entries, outputs):
        feasible = is_feasible_sequence(e.instance.rule(), out)
        prec = heur = None
        gap = math.nan
        if ds.problem == "scheduling":
            prec = feasible and precedence_satisfied(e.instance, out, dag)
            # a precedence-violating order may undercut the constrained optimum
            if prec:
                gap = optimality_gap(evaluate_schedule(e.instance, out).objective, evaluate_schedule(e.instance, e.target).objective, "min")
            ref, got = list(e.target), list(out)
        else:
            if reward is not None and reward.is_heuristic:
                heur = feasible and heuristic_satisfaction(out, e.instance, reward.rule, getattr(ds.universe, "groups", None))
            elif feasible:
                objective = P.knapsack_objective if ds.problem == "knapsack" else P.matching_objective
                gap = optimality_gap(objective(out, c1, c2), objective(e.target, c1, c2), "max")
            # set-valued outputs are compared in the shared sorted order
            perm = ds.permutation
            ref = perm.apply(e.target) if perm else sorted(e.target)
            got = perm.apply(out) if perm else sorted(out)
        rows.append(InstanceRow(e.id, gap, feasible, edit_distance(got, ref), prec, heur))
    return rows


def baseline_outputs(ds: Dataset, entries: Sequence[Entry], kind: str, seed: int) -> list:
    reward = None if ds.reward is None else P.RewardSpec(**ds.reward)
    c1, _ = rewards_for(ds.problem, ds.universe, reward)
    return [baseline_solution(e.instance, kind, c1, ds.permutation, P.derive_seed(seed, kind, e.id)) for e in entries]


# ---------------------------------------------------------------------------
# reports


def git_describe() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"], capture_output=True, text=True, timeout=10, cwd=Path(__file__).parent)
        return out.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def fmt(value: float) -> str:
    return "nan" if value is None or (isinstance(value, float) and math.isnan(value)) else repr(float(value))


def metric_lines(problem: str, variation: str, model: str, report) -> list:
    return [(problem, variation, model, m, fmt(v), int(n)) for m, v, n in report.metric_rows()]


def write_metrics(path, lines: Sequence[tuple]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(METRIC_HEADER)
        w.writerows(lines)


def write_instances(path, rows: Sequence[InstanceRow]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(INSTANCE_HEADER)
        for r in rows:
            prec = "" if r.precedence_ok is None else int(r.precedence_ok)
            w.writerow((r.instance_id, fmt(r.gap_pct), int(r.feasible), r.edit_distance, prec))


@dataclass
class RunResult:
    spec: ExperimentSpec
    status: str
    reports: dict
    rows: dict
    out_dir: Path
    train: Optional[object] = None
    dataset_sizes: dict = field(default_factory=dict)


def run_experiment(spec: ExperimentSpec, dataset: Optional[Dataset] = None) -> RunResult:
    """Build (or reuse) the dataset, apply the variation, train, decode the test split and write artifacts."""
    t0 = time.monotonic()
    out = Path(spec.out_dir) / spec.cell_name()
    out.mkdir(parents=True, exist_ok=True)
    base = dataset if dataset is not None else build_dataset(spec)
    ds, cfg = apply_variation(base, spec)
    test = ds.split("test")[: spec.eval_cap]
    sizes = {s: len(ds.split(s)) for s in ("train", "val", "test")} | {"evaluated": len(test)}

    reports, rows = {}, {}
    status, train_result = "ok", None
    name = cfg.model_kind
    try:
        model, train_result = train_model(ds, cfg, spec.train, spec.seeds.model)
        save_checkpoint(
            out / "model.sqfs",
            model,
            {"optimizer": OPTIMIZER_NAME, "permutation": None if ds.permutation is None else ds.permutation.to_dict()},
        )
        rows[name] = eval_entries(ds, test, decode_entries(model, ds, test))
    except TrainingDiverged as exc:
        log.error("training diverged in %s: %s", spec.cell_name(), exc)
        status = f"failed: {exc}"
    for kind in spec.baselines:
        rows[kind] = eval_entries(ds, test, baseline_outputs(ds, test, kind, spec.seeds.baseline))

    lines = []
    for model_name, r in rows.items():
        reports[model_name] = aggregate(r)
        lines += metric_lines(spec.problem, spec.variation, model_name, reports[model_name])
    if name not in rows:
        lines.append((spec.problem, spec.variation, name, "failed", "1.0", 0))
    write_metrics(out / "metrics.csv", lines)
    if name in rows:
        write_instances(out / "instances.csv", rows[name])
    meta = {
        "spec": spec.to_dict(),
        "effective_model": asdict(cfg),
        "status": status,
        "seeds": asdict(spec.seeds),
        "git": git_describe(),
        "optimizer": OPTIMIZER_NAME,
        "edit_distance": "levenshtein",
        "optimality": "objective-value equality",
        "dataset_sizes": sizes,
        "train": None if train_result is None else asdict(train_result),
        "wall_seconds": time.monotonic() - t0,
    }
    (out / "run.json").write_text(json.dumps(meta, indent=1, sort_keys=True, default=str))
    return RunResult(spec, status, reports, rows, out, train_result, sizes)


def run_grid(base: ExperimentSpec, problems: Sequence[str] = PROBLEMS, variations: Sequence[str] = VARIATIONS, overrides: Optional[dict] = None) -> list:
    """Every (problem, variation) cell; each problem's dataset is built once and shared by its cells."""
    results = []
    for problem in problems:
        per_problem = (overrides or {}).get(problem, {})
        d = base.to_dict()
        for k, v in per_problem.items():
            d[k] = {**d[k], **v} if isinstance(v, dict) and isinstance(d.get(k), dict) else v
        first = ExperimentSpec.from_dict({**d, "problem": problem, "variation": "full"})
        ds = build_dataset(first)
        for variation in variations:
            spec = replace(first, variation=variation)
            results.append(run_experiment(spec, ds))
    return results


def combine_reports(paths: Sequence, dest) -> int:
    """Concatenate metrics CSVs under one header; returns the number of data rows."""
    n = 0
    with open(dest, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(METRIC_HEADER)
        for p in paths:
            with open(p, newline="") as g:
                r = csv.reader(g)
                if tuple(next(r)) != METRIC_HEADER:
                    raise ValueError(f"{p} is not a metrics CSV")
                for row in r:
                    w.writerow(row)
                    n += 1
    return n


def load_model(path):
    return load_checkpoint(path)
