"""Synthetic and historical experiments shared by scripts/ and the acceptance suite."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import ingest
from .config import GFT_SCALE, GFT_US_COLUMN, RunConfig
from .evaluation import EvalReport, build_report, calendar_years, mae
from .learners import LearnerSpec
from .market import AgentSpec, Backtest, MarketConfig, MarketOutcome
from .synth import adaptation_spec, drifting_spec, generate


def passthrough_agents(frame: ingest.TimeSeriesFrame) -> list[AgentSpec]:
    return [AgentSpec(c, LearnerSpec("passthrough", column=c)) for c in frame.names]


def backtest(frame, agents, config: MarketConfig | None = None, seed: int = 0) -> list[MarketOutcome]:
    return list(Backtest(frame, agents, config or MarketConfig(), seed=seed).run())


# --- adaptation -----------------------------------------------------------------

@dataclass
class AdaptationResult:
    crossover_week: int | None   # 1-based week at which b's budget first exceeds a's after the switch
    market_mae: float            # weeks window[0]..window[1], 1-based inclusive
    best_agent: str
    best_agent_mae: float
    budgets_a: list[float]
    budgets_b: list[float]

    @property
    def mae_ratio(self) -> float:
        return self.market_mae / self.best_agent_mae


def run_adaptation(data_seed: int = 11, market_seed: int = 0, switch: int = 100,
                   window: tuple[int, int] = (150, 200)) -> AdaptationResult:
    """Source a is best before the switch, b after; everyone else is mediocre throughout."""
    frame = generate(adaptation_spec(data_seed, switch=switch))
    outs = backtest(frame, passthrough_agents(frame), seed=market_seed)
    ba = [o.budget_after.get("a", 0.0) for o in outs]
    bb = [o.budget_after.get("b", 0.0) for o in outs]
    cross = next((i + 1 for i in range(switch, len(outs)) if bb[i] > ba[i]), None)
    lo, hi = window[0] - 1, window[1]
    y = frame.target[lo:hi]
    market = mae([o.market_prediction for o in outs[lo:hi]], y)
    single = {c: mae(np.clip(frame.columns[c][lo:hi], 0.0, 1.0), y) for c in frame.names}
    best = min(single, key=single.get)
    return AdaptationResult(cross, market, best, single[best], ba, bb)


# --- ensemble value -------------------------------------------------------------

@dataclass
class EnsembleResult:
    seed: int
    market_mae: float
    uniform_mae: float
    deactivated: list[str] = field(default_factory=list)

    @property
    def market_wins(self) -> bool:
        return self.market_mae <= self.uniform_mae


def run_ensemble_value(seed: int) -> EnsembleResult:
    """Market against the equal-weight average of the same sources on drifting streams."""
    frame = generate(drifting_spec(seed))
    outs = backtest(frame, passthrough_agents(frame), seed=seed)
    uniform = np.mean([np.clip(frame.columns[c], 0.0, 1.0) for c in frame.names], axis=0)
    dead = [f.split(":", 1)[1] for o in outs for f in o.flags if f.startswith("deactivated:")]
    return EnsembleResult(seed, mae([o.market_prediction for o in outs], frame.target),
                          mae(uniform, frame.target), dead)


# --- historical replication -----------------------------------------------------

@dataclass
class ReplicationResult:
    report: EvalReport
    total_label: str
    market_mae: float
    baseline_mae: float
    p_value: float

    @property
    def ratio(self) -> float:
        return self.market_mae / self.baseline_mae


def replicate(gft_csv: str | Path, cdc_csv: str | Path, seed: int = 0, lag_weeks: int = 2,
              first_year: int = 2004, last_year: int = 2015) -> ReplicationResult:
    """Default roster on real GFT + CDC data, scored against the raw GFT national estimate."""
    frame = ingest.align(ingest.parse_gft_csv(gft_csv), ingest.parse_cdc_csv(cdc_csv),
                         ingest.AlignmentSpec(lag_weeks=lag_weeks))
    cfg = RunConfig(master_seed=seed)
    roster = cfg.roster(frame.names)
    outs = backtest(frame, roster, cfg.market, seed)
    pred = np.array([o.market_prediction for o in outs])
    base = np.clip(GFT_SCALE * frame.columns[GFT_US_COLUMN], 0.0, 1.0)
    keep = np.array([first_year <= w.year <= last_year for w in frame.weeks])
    weeks = [w for w, k in zip(frame.weeks, keep) if k]
    label = f"{first_year}-{last_year}"
    report = build_report(weeks, pred[keep], base[keep], frame.target[keep],
                          calendar_years(first_year, last_year), label)
    total = report.row(label)
    return ReplicationResult(report, label, total.mae_a, total.mae_b, total.p_value)
