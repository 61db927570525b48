"""Command line: gen, solve, dataset, train, decode, eval, report, run."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, fields
from pathlib import Path

import torch

from . import pipeline as PL
from . import problems as P
from .evaluation import aggregate
from .neural import OPTIMIZER_NAME, load_checkpoint, save_checkpoint


def load_spec(args) -> PL.ExperimentSpec:
    d = json.loads(Path(args.config).read_text()) if args.config else {}
    if args.seed is not None:
        d["seeds"] = {f.name: P.derive_seed(args.seed, f.name) for f in fields(PL.Seeds)}
    if args.out_dir:
        d["out_dir"] = args.out_dir
    for key in ("problem", "variation"):
        if getattr(args, key, None):
            d[key] = getattr(args, key)
    return PL.ExperimentSpec.from_dict(d)


def out_path(args, spec, name: str) -> Path:
    p = Path(args.out_dir or spec.out_dir)
    p.mkdir(parents=True, exist_ok=True)
    return p / name


def write_run_json(path: Path, command: str, spec, **extra) -> None:
    meta = {"command": command, "spec": spec.to_dict(), "seeds": asdict(spec.seeds), "git": PL.git_describe(), **extra}
    path.write_text(json.dumps(meta, indent=1, sort_keys=True, default=str))


def cmd_gen(args) -> None:
    spec = load_spec(args)
    universe = PL.make_universe(spec)
    insts = PL.make_instances(spec, universe)
    dest = out_path(args, spec, "instances.jsonl")
    with open(dest, "w") as f:
        for inst in insts:
            f.write(P.dumps_record(P.instance_to_record(inst)) + "\n")
    out_path(args, spec, "universe.json").write_text(json.dumps(P.universe_to_dict(universe), sort_keys=True))
    write_run_json(out_path(args, spec, "run.json"), "gen", spec, n=len(insts))
    print(f"{len(insts)} instances -> {dest}")


def cmd_solve(args) -> None:
    spec = load_spec(args)
    universe = P.universe_from_dict(json.loads(Path(args.universe).read_text()))
    reward = spec.reward_spec
    c1, c2 = PL.rewards_for(spec.problem, universe, reward)
    dag = P.precedence_dag_preset(spec.dag)
    dest = out_path(args, spec, "solved.jsonl")
    n = 0
    with open(args.instances) as src, open(dest, "w") as f:
        for line in src:
            inst = P.instance_from_record(json.loads(line))
            target = PL.solve_target(spec.problem, inst, universe, reward, c1, c2, dag)
            source = "heuristic" if reward is not None and reward.is_heuristic else "oracle"
            f.write(P.dumps_record(P.instance_to_record(inst, target, {"source": source})) + "\n")
            n += 1
    write_run_json(out_path(args, spec, "run.json"), "solve", spec, n=n)
    print(f"{n} solved -> {dest}")


def cmd_dataset(args) -> None:
    spec = load_spec(args)
    ds = PL.build_dataset(spec)
    if args.subsample is not None:
        ds = PL.subsample_dataset(ds, args.subsample, spec.seeds.subsample)
    if args.corrupt is not None:
        ds = PL.corrupt_dataset(ds, args.corrupt, spec.seeds.corruption)
    d = PL.save_dataset(ds, out_path(args, spec, "dataset"))
    write_run_json(out_path(args, spec, "run.json"), "dataset", spec, n=len(ds.entries))
    print(f"{len(ds.entries)} entries -> {d}")


def cmd_train(args) -> None:
    spec = load_spec(args)
    ds, cfg = PL.apply_variation(PL.load_dataset(args.dataset), spec)
    model, result = PL.train_model(ds, cfg, spec.train, spec.seeds.model)
    dest = out_path(args, spec, "model.sqfs")
    perm = None if ds.permutation is None else ds.permutation.to_dict()
    save_checkpoint(dest, model, {"optimizer": OPTIMIZER_NAME, "permutation": perm})
    write_run_json(out_path(args, spec, "run.json"), "train", spec, train=asdict(result), optimizer=OPTIMIZER_NAME)
    print(f"trained {result.epochs} epochs ({result.stop_reason}), best val loss {result.best_val_loss:.4f} -> {dest}")


def cmd_decode(args) -> None:
    spec = load_spec(args)
    model, meta = load_checkpoint(args.checkpoint)
    ds = PL.load_dataset(args.dataset)
    # decode in the order the model was trained on
    ds.permutation = meta.get("permutation") and P.SortingPermutation.from_dict(meta["permutation"])
    entries = ds.split(args.split)[: spec.eval_cap]
    outputs = PL.decode_entries(model, ds, entries)
    dest = out_path(args, spec, "decoded.jsonl")
    with open(dest, "w") as f:
        for e, seq in zip(entries, outputs):
            f.write(json.dumps({"id": e.id, "sequence": seq}) + "\n")
    write_run_json(out_path(args, spec, "run.json"), "decode", spec, checkpoint=str(args.checkpoint), n=len(outputs))
    print(f"{len(outputs)} decodes -> {dest}")


def cmd_eval(args) -> None:
    spec = load_spec(args)
    ds = PL.load_dataset(args.dataset)
    decoded = [json.loads(line) for line in Path(args.decoded).read_text().splitlines()]
    by_id = {e.id: e for e in ds.entries}
    entries = [by_id[d["id"]] for d in decoded]
    rows = PL.eval_entries(ds, entries, [d["sequence"] for d in decoded])
    report = aggregate(rows)
    PL.write_metrics(out_path(args, spec, "metrics.csv"), PL.metric_lines(ds.problem, spec.variation, args.model, report))
    PL.write_instances(out_path(args, spec, "instances.csv"), rows)
    write_run_json(out_path(args, spec, "run.json"), "eval", spec, edit_distance="levenshtein", n=len(rows))
    for metric, value, n in report.metric_rows():
        print(f"{metric:22s} {PL.fmt(value):>22s}  n={n}")


def cmd_report(args) -> None:
    spec = load_spec(args)
    paths = sorted(p for pattern in args.inputs for p in Path(".").glob(pattern)) if args.inputs else sorted(Path(spec.out_dir).rglob("metrics.csv"))
    dest = Path(args.output) if args.output else out_path(args, spec, "report.csv")
    paths = [p for p in paths if p.resolve() != dest.resolve()]
    n = PL.combine_reports(paths, dest)
    print(f"{n} rows from {len(paths)} files -> {dest}")


def cmd_run(args) -> None:
    spec = load_spec(args)
    if args.grid:
        results = PL.run_grid(spec)
    else:
        results = [PL.run_experiment(spec)]
    for r in results:
        parts = [f"{k}: feasible {v.feasibility_pct:.1f}% gap {PL.fmt(v.gap_mean)}" for k, v in r.reports.items()]
        print(f"{r.spec.cell_name():40s} {r.status:6s} " + " | ".join(parts))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment JSON mirroring ExperimentSpec")
    common.add_argument("--seed", type=int, help="derive every stage seed from this one value")
    common.add_argument("--out-dir", dest="out_dir")
    common.add_argument("--threads", type=int, default=1, help="torch intra-op threads")
    common.add_argument("--problem", choices=PL.PROBLEMS)
    common.add_argument("--variation", choices=PL.VARIATIONS)
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="dfaopt", description="Constraint-masked sequence models for combinatorial optimization.")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("gen", parents=[common], help="generate a universe and instances").set_defaults(func=cmd_gen)

    p = sub.add_parser("solve", parents=[common], help="attach oracle or heuristic targets")
    p.add_argument("--instances", required=True)
    p.add_argument("--universe", required=True)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("dataset", parents=[common], help="build, split, subsample or corrupt a dataset")
    p.add_argument("--subsample", type=float)
    p.add_argument("--corrupt", type=float)
    p.set_defaults(func=cmd_dataset)

    p = sub.add_parser("train", parents=[common], help="train a model on a dataset directory")
    p.add_argument("--dataset", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("decode", parents=[common], help="greedy masked decoding of a split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("eval", parents=[common], help="metrics for decoded sequences")
    p.add_argument("--dataset", required=True)
    p.add_argument("--decoded", required=True)
    p.add_argument("--model", default="transformer", help="label for the model column")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", parents=[common], help="merge metrics CSVs")
    p.add_argument("inputs", nargs="*", help="glob patterns; default: every metrics.csv under the output directory")
    p.add_argument("--output")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("run", parents=[common], help="end-to-end experiment cell, or the whole grid")
    p.add_argument("--grid", action="store_true", help="all problems x all variations")
    p.set_defaults(func=cmd_run)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(asctime)s %(name)s %(message)s")
    torch.set_num_threads(max(1, args.threads))
    args.func(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
