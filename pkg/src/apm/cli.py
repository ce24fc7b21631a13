"""Command-line entry point: ``apm {ingest,run,eval,synth}``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import ingest
from .config import ConfigError, RunConfig, load_config, named_periods
from .evaluation import EvalError, build_report, write_error_series, write_report_csv
from .learners import LearnerError
from .market import Backtest, format_real
from .synth import SynthSpec, adaptation_spec, drifting_spec, generate

log = logging.getLogger("apm")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class DataError(Exception):
    pass


# --- prediction streams ---------------------------------------------------------

def write_predictions(path: Path, weeks, columns: dict[str, list[float]], append: bool = False) -> None:
    new = not append or not path.exists()
    with path.open("w" if new else "a", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if new:
            w.writerow(["week_start", *columns])
        for i, week in enumerate(weeks):
            w.writerow([week.isoformat(), *(_cell(v[i]) for v in columns.values())])


def _cell(v) -> str:
    return "" if v is None or v != v else repr(float(v))


def read_predictions(path: Path, column: str = "prediction"):
    import datetime as dt
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or column not in reader.fieldnames:
            raise DataError(f"{path}: no column {column!r}")
        weeks, values = [], []
        for row in reader:
            weeks.append(dt.date.fromisoformat(row["week_start"]))
            cell = row[column]
            values.append(float(cell) if cell else np.nan)
    return weeks, np.array(values)


# --- subcommands ----------------------------------------------------------------

def cmd_ingest(args, cfg: RunConfig) -> int:
    gft_path = Path(args.gft) if args.gft else cfg.gft_csv
    cdc_path = Path(args.cdc) if args.cdc else cfg.cdc_csv
    gp_path = Path(args.gp) if args.gp else cfg.gp_csv
    missing = [n for n, p in (("gft_csv", gft_path), ("cdc_csv", cdc_path)) if p is None]
    if missing:
        raise ConfigError([f"data.{n} is required for ingest" for n in missing])
    for p in (gft_path, cdc_path, gp_path):
        if p is not None and not p.exists():
            raise ingest.SchemaError(f"input file not found: {p}")
    lag = cfg.lag_weeks if args.lag is None else args.lag
    gft = ingest.parse_gft_csv(gft_path)
    if gp_path is not None:
        gft = ingest.merge_frames(gft, ingest.parse_gft_csv(gp_path))
    cdc = ingest.parse_cdc_csv(cdc_path)
    frame = ingest.align(gft, cdc, ingest.AlignmentSpec(lag_weeks=lag))
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    ingest.write_canonical(frame, out / "dataset.csv")
    summary = ingest.summarize(frame) | {"lag_weeks": lag}
    (out / "ingest_summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"{summary['weeks']} weeks ({summary['first_week']}..{summary['last_week']}), "
          f"{summary['columns']} feature columns -> {out / 'dataset.csv'}")
    return EXIT_OK


def cmd_run(args, cfg: RunConfig) -> int:
    dataset = Path(args.dataset) if args.dataset else cfg.dataset_path()
    if not dataset.exists():
        raise ingest.SchemaError(f"dataset not found: {dataset}")
    frame = ingest.read_canonical(dataset)
    if frame.target is None:
        raise ingest.SchemaError(f"{dataset}: no target values")
    try:
        agents = cfg.roster(frame.names)
    except ValueError as e:
        raise ConfigError([str(e)]) from None
    try:
        bt = Backtest(frame, agents, cfg.market, seed=cfg.master_seed)
    except ValueError as e:
        raise ConfigError([str(e)]) from None

    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    ckpt = out / "checkpoint.json"
    resume = args.resume and ckpt.exists()
    if resume:
        bt.load_state_dict(json.loads(ckpt.read_text()))
        log.info("resuming at week %d", bt.next_week)
    stop = None if args.max_weeks is None else bt.next_week + args.max_weeks

    ids = [a.id for a in bt.agents]
    weeks, market, own = [], [], {i: [] for i in ids}
    with (out / "ledger.jsonl").open("a" if resume else "w", encoding="utf-8") as ledger:
        for outcome in bt.run(stop):
            ledger.write(outcome.to_json() + "\n")
            weeks.append(outcome.week)
            market.append(outcome.market_prediction)
            first = {s.agent: s.prediction for s in outcome.rounds[0].stakes} if outcome.rounds else {}
            for i in ids:
                own[i].append(first.get(i))
    write_predictions(out / "predictions.csv", weeks, {"prediction": market}, append=resume)
    write_predictions(out / "agent_predictions.csv", weeks, own, append=resume)
    ckpt.write_text(json.dumps(bt.state_dict(), sort_keys=True) + "\n")
    budgets = ", ".join(f"{a.id}={format_real(a.budget)}" for a in bt.agents)
    print(f"ran {len(weeks)} weekly markets (next week {bt.next_week}/{len(frame)}); budgets: {budgets}")
    return EXIT_OK


def cmd_eval(args, cfg: RunConfig) -> int:
    out = cfg.output_dir
    truth_path = Path(args.truth) if args.truth else cfg.dataset_path()
    a_path = Path(args.a) if args.a else out / "predictions.csv"
    b_path = Path(args.b) if args.b else out / "agent_predictions.csv"
    b_col = args.b_column or ("prediction" if args.b else cfg.baseline)
    for p in (truth_path, a_path, b_path):
        if not p.exists():
            raise ingest.SchemaError(f"input file not found: {p}")
    truth = ingest.read_canonical(truth_path)
    wa, pa = read_predictions(a_path, args.a_column)
    wb, pb = read_predictions(b_path, b_col)
    index = {w: i for i, w in enumerate(truth.weeks)}
    if wa != wb:
        raise EvalError(f"stream weeks differ: a covers {wa[0]}..{wa[-1]} ({len(wa)}), "
                        f"b covers {wb[0]}..{wb[-1]} ({len(wb)})")
    outside = [w for w in wa if w not in index]
    if outside:
        raise EvalError(f"{len(outside)} prediction week(s) outside truth range "
                        f"{truth.weeks[0]}..{truth.weeks[-1]}, first {outside[0]}")
    y = np.array([truth.target[index[w]] for w in wa])
    ok = ~(np.isnan(pa) | np.isnan(pb))
    if not ok.all():
        log.warning("dropping %d week(s) where a stream has no prediction", int((~ok).sum()))
    weeks = [w for w, keep in zip(wa, ok) if keep]
    periods = named_periods(args.periods, weeks) if args.periods else cfg.period_specs(weeks)
    report = build_report(weeks, pa[ok], pb[ok], y[ok], periods)
    out.mkdir(parents=True, exist_ok=True)
    write_report_csv(report, out / "report.csv")
    write_error_series(weeks, report.abs_error_a, out / "errors_a.csv")
    write_error_series(weeks, report.abs_error_b, out / "errors_b.csv")
    print(f"{'period':>10} {'n':>4} {'mae_a x100':>11} {'mae_b x100':>11} {'p':>10}")
    for r in report.rows:
        print(f"{r.label:>10} {r.n:>4} {r.mae_a_x100:>11.3f} {r.mae_b_x100:>11.3f} {r.p_value:>10.2e}")
    return EXIT_OK


def cmd_synth(args, cfg: RunConfig) -> int:
    seed = args.seed if args.seed is not None else cfg.master_seed
    scenario = args.scenario or (cfg.synth or {}).get("scenario")
    if scenario == "adaptation":
        spec = adaptation_spec(seed)
    elif scenario == "drifting":
        spec = drifting_spec(seed)
    elif scenario is not None:
        raise ConfigError([f"unknown synth scenario {scenario!r}"])
    elif cfg.synth:
        spec = SynthSpec(**{**cfg.synth, **({"seed": args.seed} if args.seed is not None else {})})
    else:
        raise ConfigError(["synth needs --scenario or a 'synth' config section"])
    if args.weeks is not None:
        spec.weeks = args.weeks
    frame = generate(spec)
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    ingest.write_canonical(frame, out / "dataset.csv")
    print(f"{len(frame)} synthetic weeks, sources {frame.names} -> {out / 'dataset.csv'}")
    return EXIT_OK


# --- main -----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="apm", description="Artificial prediction market backtests for ILI nowcasting.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration")
    common.add_argument("--out", help="output directory (overrides output_dir)")
    common.add_argument("--seed", type=int, help="master seed (overrides master_seed)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="raw GFT + CDC CSVs -> canonical dataset")
    p.add_argument("--gft")
    p.add_argument("--cdc")
    p.add_argument("--gp")
    p.add_argument("--lag", type=int, help="CDC lag in weeks (overrides alignment.lag_weeks)")

    p = sub.add_parser("run", parents=[common], help="run the weekly market over a dataset")
    p.add_argument("--dataset")
    p.add_argument("--resume", action="store_true", help="continue from the checkpoint in the output directory")
    p.add_argument("--max-weeks", type=int, help="stop after this many markets")

    p = sub.add_parser("eval", parents=[common], help="MAE and paired t-test report for two streams")
    p.add_argument("--truth", help="canonical dataset holding the target")
    p.add_argument("--a", help="prediction CSV for stream a (default: run predictions)")
    p.add_argument("--a-column", default="prediction")
    p.add_argument("--b", help="prediction CSV for stream b (default: agent predictions)")
    p.add_argument("--b-column", help="column of --b to use (default: eval.baseline agent)")
    p.add_argument("--periods", choices=["calendar_year", "flu_season", "all"])

    p = sub.add_parser("synth", parents=[common], help="write a synthetic canonical dataset")
    p.add_argument("--scenario", choices=["adaptation", "drifting"])
    p.add_argument("--weeks", type=int)
    return parser


COMMANDS = {"ingest": cmd_ingest, "run": cmd_run, "eval": cmd_eval, "synth": cmd_synth}


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("APM_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.out:
            cfg.output_dir = Path(args.out)
        if args.seed is not None:
            cfg.master_seed = args.seed
        if args.command == "ingest" and args.lag is not None and args.lag < 0:
            raise ConfigError(["--lag must be nonnegative"])
        return COMMANDS[args.command](args, cfg)
    except ConfigError as e:
        for line in e.errors:
            print(f"config error: {line}", file=sys.stderr)
        return EXIT_CONFIG
    except (ingest.IngestError, EvalError, DataError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (ArithmeticError, LearnerError, np.linalg.LinAlgError) as e:
        print(f"numerical error: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
