"""Desk-scale experiment presets shared by scripts/ and the acceptance suite."""
from __future__ import annotations

from dataclasses import replace

from .neural import ModelConfig, TrainConfig
from .pipeline import ExperimentSpec

DESK_INSTANCES = 6250  # 1250 knapsack subsets x 5 capacities; 5000 training pairs after the 80/10/10 split
DESK_SECONDS = 840.0  # stays inside a 15 minute budget including data and evaluation


def linear_knapsack(out_dir: str = "runs", seconds: float = DESK_SECONDS, model_kind: str = "transformer") -> ExperimentSpec:
    return ExperimentSpec(
        problem="knapsack",
        reward={"kind": "inverse_proportional"},
        n_instances=DESK_INSTANCES,
        model=ModelConfig(model_kind=model_kind),
        train=TrainConfig(max_seconds=seconds),
        baselines=("random", "omniscient_greedy", "sorting_rule"),
        out_dir=out_dir,
    )


def heuristic_knapsack(rule: str = "alt_1_1", out_dir: str = "runs", seconds: float = DESK_SECONDS, model_kind: str = "transformer") -> ExperimentSpec:
    return ExperimentSpec(
        problem="knapsack",
        reward={"kind": "heuristic", "rule": rule},
        n_instances=DESK_INSTANCES,
        model=ModelConfig(model_kind=model_kind),
        train=TrainConfig(max_seconds=seconds),
        baselines=("random",),
        out_dir=out_dir,
    )


def precedence_scheduling(dag: str = "A", length: int = 6, out_dir: str = "runs", seconds: float = DESK_SECONDS, model_kind: str = "transformer") -> ExperimentSpec:
    return ExperimentSpec(
        problem="scheduling",
        dag=dag,
        instance_sizes=(length,),
        n_instances=DESK_INSTANCES,
        # job order in the input carries no meaning
        model=ModelConfig(model_kind=model_kind, use_positional_encoding=False),
        train=TrainConfig(max_seconds=seconds),
        baselines=("random",),
        out_dir=out_dir,
    )


def with_model(spec: ExperimentSpec, model_kind: str) -> ExperimentSpec:
    return replace(spec, model=replace(spec.model, model_kind=model_kind))


def grid_base(out_dir: str = "runs/grid", n_instances: int = 1000, epochs: int = 40, seconds: float = 300.0) -> ExperimentSpec:
    """Smaller cells for the full 3 problems x 4 variations sweep."""
    return ExperimentSpec(
        problem="knapsack",
        n_instances=n_instances,
        train=TrainConfig(max_epochs=epochs, max_seconds=seconds),
        baselines=("random",),
        out_dir=out_dir,
    )


GRID_OVERRIDES = {
    "scheduling": {"dag": "A", "instance_sizes": [6], "model": {"use_positional_encoding": False}},
}
