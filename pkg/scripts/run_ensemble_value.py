"""Market vs equal-weight average of the same sources on drifting synthetic streams.

    python3 scripts/run_ensemble_value.py [--seeds 1 2 3 4 5]
"""

import argparse

from apm.experiments import run_ensemble_value


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[1, 2, 3, 4, 5])
    args = ap.parse_args()

    wins = 0
    print(f"{'seed':>4} {'market x1e3':>12} {'uniform x1e3':>13}  deactivated")
    for seed in args.seeds:
        r = run_ensemble_value(seed)
        wins += r.market_wins
        print(f"{seed:>4} {r.market_mae * 1e3:>12.4f} {r.uniform_mae * 1e3:>13.4f}  {','.join(r.deactivated) or '-'}")
    print(f"market at least as good on {wins}/{len(args.seeds)} seeds")


if __name__ == "__main__":
    main()
