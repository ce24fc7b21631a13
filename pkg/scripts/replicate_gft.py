"""Default roster on historical GFT + CDC ILINet files, scored against the raw GFT national estimate.

    python3 scripts/replicate_gft.py GFT_CSV CDC_CSV [--seed 0] [--out report.csv]

Neither file ships with the repository. GFT is the Google Flu Trends US export
(``Date,United States,...``); CDC is the ILINet national CSV.
"""

import argparse
import time

from apm.evaluation import write_report_csv
from apm.experiments import replicate


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("gft_csv")
    ap.add_argument("cdc_csv")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", help="write the per-year report CSV here")
    args = ap.parse_args()

    t0 = time.perf_counter()
    r = replicate(args.gft_csv, args.cdc_csv, seed=args.seed)
    print(f"{'period':>10} {'n':>4} {'market x100':>12} {'gft x100':>9} {'p':>10}")
    for row in r.report.rows:
        print(f"{row.label:>10} {row.n:>4} {row.mae_a_x100:>12.3f} {row.mae_b_x100:>9.3f} {row.p_value:>10.2e}")
    verdict = "meets" if r.ratio <= 0.75 and r.p_value < 0.05 else "misses"
    print(f"MAE ratio {r.ratio:.3f}, p={r.p_value:.2e}: {verdict} the 0.75 / p<0.05 bar "
          f"({time.perf_counter() - t0:.0f} s)")
    if args.out:
        write_report_csv(r.report, args.out)


if __name__ == "__main__":
    main()
