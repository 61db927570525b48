"""All problems x all variations at reduced size, merged into one report CSV."""
from pathlib import Path

from _common import parser, setup, show

from dfaopt import presets
from dfaopt.pipeline import combine_reports, run_grid

if __name__ == "__main__":
    ap = parser(__doc__)
    ap.add_argument("--instances", type=int, default=1000)
    ap.add_argument("--epochs", type=int, default=40)
    args = ap.parse_args()
    setup(args)
    base = presets.grid_base(args.out_dir, args.instances, args.epochs, args.seconds)
    results = run_grid(base, overrides=presets.GRID_OVERRIDES)
    for r in results:
        show(r)
    n = combine_reports([r.out_dir / "metrics.csv" for r in results], Path(args.out_dir) / "report.csv")
    print(f"{n} report rows -> {Path(args.out_dir) / 'report.csv'}")
