"""Linear knapsack with inverse-proportional rewards: learn oracle solutions, compare with baselines."""
from _common import parser, setup, show

from dfaopt import presets
from dfaopt.pipeline import run_experiment

if __name__ == "__main__":
    ap = parser(__doc__)
    ap.add_argument("--model", default="transformer", choices=("transformer", "lstm"))
    args = ap.parse_args()
    setup(args)
    show(run_experiment(presets.linear_knapsack(args.out_dir, args.seconds, args.model)))
