"""Heuristic knapsack: imitate a rule-based selection with a transformer and an LSTM under one budget."""
from _common import parser, setup, show

from dfaopt import presets
from dfaopt.pipeline import build_dataset, run_experiment

if __name__ == "__main__":
    ap = parser(__doc__)
    ap.add_argument("--rule", default="alt_1_1", choices=("alt_1_1", "alt_2_1", "cluster_group"))
    args = ap.parse_args()
    setup(args)
    spec = presets.heuristic_knapsack(args.rule, args.out_dir, args.seconds)
    ds = build_dataset(spec)
    for kind in ("transformer", "lstm"):
        show(run_experiment(presets.with_model(spec, kind), ds))
