"""Quality-switch scenario: does budget move from the formerly best source to the newly best one?

    python3 scripts/run_adaptation.py [--data-seed 11] [--market-seed 0]
"""

import argparse

from apm.experiments import run_adaptation


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--data-seed", type=int, default=11)
    ap.add_argument("--market-seed", type=int, default=0)
    args = ap.parse_args()

    r = run_adaptation(args.data_seed, args.market_seed)
    print(f"crossover week: {r.crossover_week}")
    for week in (100, 110, 120, 140, 160, 200):
        print(f"  week {week:3d}  budget a={r.budgets_a[week - 1]:10.4g}  b={r.budgets_b[week - 1]:10.4g}")
    print(f"weeks 150-200: market MAE {r.market_mae:.3e}, best single agent {r.best_agent} "
          f"{r.best_agent_mae:.3e} (ratio {r.mae_ratio:.3f})")


if __name__ == "__main__":
    main()
