"""Helpers shared by the experiment scripts."""
import argparse
import logging

import torch

from dfaopt.pipeline import fmt


def parser(description: str) -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(description=description)
    ap.add_argument("--out-dir", default="runs")
    ap.add_argument("--seconds", type=float, default=840.0, help="wall-clock training cap per model")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def setup(args) -> None:
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(asctime)s %(message)s")
    torch.set_num_threads(1)


def show(result) -> None:
    for name, rep in result.reports.items():
        print(f"[{result.spec.cell_name()}] {name}")
        for metric, value, n in rep.metric_rows():
            print(f"  {metric:22s} {fmt(value):>22s}  n={n}")
    if result.train is not None:
        t = result.train
        print(f"  trained {t.epochs} epochs in {t.seconds:.0f}s, stopped by {t.stop_reason}")
