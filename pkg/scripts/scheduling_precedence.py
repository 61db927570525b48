"""Scheduling with hidden group precedence: does the learned order respect the DAG?"""
from _common import parser, setup, show

from dfaopt import presets
from dfaopt.pipeline import run_experiment

if __name__ == "__main__":
    ap = parser(__doc__)
    ap.add_argument("--dag", default="A", choices=("A", "B", "C"))
    ap.add_argument("--length", type=int, default=6)
    args = ap.parse_args()
    setup(args)
    show(run_experiment(presets.precedence_scheduling(args.dag, args.length, args.out_dir, args.seconds)))
