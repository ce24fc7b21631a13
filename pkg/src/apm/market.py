"""The continuous artificial prediction market.

Each week every warm agent stakes part of its budget on its learner's
prediction; the stake-weighted mean of all predictions is the market
prediction. Once the target is revealed, the pot is redistributed in
proportion to stake times a Gaussian accuracy score.
"""

from __future__ import annotations

import datetime as dt
import json
import logging
import math
import zlib
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

import numpy as np

from . import strategy as st
from .ingest import TimeSeriesFrame
from .learners import ColdStart, FittedModel, LearnerError, LearnerSpec, fit

log = logging.getLogger(__name__)


class ClearingError(Exception):
    """No positive investment to clear."""


@dataclass
class MarketConfig:
    rounds: int = 2
    min_rpt: list[float] = field(default_factory=lambda: [0.90, 0.0001])
    max_rpt: list[float] = field(default_factory=lambda: [0.90, 0.01])
    initial_budget: float = 100.0
    payoff_bandwidth: float = 0.01
    budget_floor: float = 1e-9  # relative to initial_budget
    strategy: st.StrategyConfig = field(default_factory=st.StrategyConfig)

    def __post_init__(self):
        self.min_rpt = [float(v) for v in self.min_rpt]
        self.max_rpt = [float(v) for v in self.max_rpt]
        if isinstance(self.strategy, Mapping):
            self.strategy = st.StrategyConfig(**self.strategy)
        errors = self.problems()
        if errors:
            raise ValueError("; ".join(errors))

    def problems(self) -> list[str]:
        errors = []
        if self.rounds < 1:
            errors.append("rounds must be >= 1")
        if len(self.min_rpt) != self.rounds or len(self.max_rpt) != self.rounds:
            errors.append("min_rpt and max_rpt need one entry per round")
        for r, (lo, hi) in enumerate(zip(self.min_rpt, self.max_rpt), 1):
            if not 0 <= lo <= hi <= 1:
                errors.append(f"round {r}: need 0 <= min_rpt <= max_rpt <= 1, got {lo}, {hi}")
        if not self.initial_budget > 0:
            errors.append("initial_budget must be positive")
        if not self.payoff_bandwidth > 0:
            errors.append("payoff_bandwidth must be positive")
        return errors


@dataclass
class AgentState:
    id: str
    learner: LearnerSpec
    budget: float
    q_table: st.QTable
    rng: np.random.Generator
    learner_seed: int = 0
    active: bool = True
    model: FittedModel | None = None
    budget_history: list[float] = field(default_factory=list)
    # (state, action, reward) of the last traded week, awaiting its successor state
    pending: list[tuple[st.QState, st.Action, float]] = field(default_factory=list)

    @property
    def warm(self) -> bool:
        return self.active and self.model is not None


@dataclass(frozen=True)
class Stake:
    agent: str
    prediction: float
    investment: float


@dataclass
class RoundLedger:
    round: int
    stakes: list[Stake]
    price: float


@dataclass
class WeekTrades:
    rounds: list[RoundLedger] = field(default_factory=list)
    decisions: dict[str, list[tuple[st.QState, st.Action]]] = field(default_factory=dict)
    flags: list[str] = field(default_factory=list)

    def stakes(self) -> Iterator[Stake]:
        for r in self.rounds:
            yield from r.stakes

    def invested(self) -> dict[str, float]:
        out: dict[str, float] = {}
        for s in self.stakes():
            out[s.agent] = out.get(s.agent, 0.0) + s.investment
        return out


@dataclass
class MarketOutcome:
    week: dt.date
    rounds: list[RoundLedger]
    market_prediction: float
    target: float
    payoffs: dict[str, float]
    budget_after: dict[str, float]
    flags: list[str] = field(default_factory=list)

    def to_json(self) -> str:
        return dumps_json({
            "week": self.week.isoformat(),
            "rounds": [
                {
                    "round": r.round,
                    "price": r.price,
                    "stakes": [
                        {"agent": s.agent, "prediction": s.prediction, "investment": s.investment}
                        for s in r.stakes
                    ],
                }
                for r in self.rounds
            ],
            "market_prediction": self.market_prediction,
            "target": self.target,
            "payoffs": self.payoffs,
            "budget_after": self.budget_after,
            "flags": self.flags,
        })


def format_real(x: float) -> str:
    return format(x, ".12g")


def dumps_json(obj) -> str:
    """Compact JSON with reals at 12 significant digits and insertion key order."""
    if isinstance(obj, bool) or obj is None:
        return {True: "true", False: "false", None: "null"}[obj]
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        if not math.isfinite(obj):
            return "null"
        return format_real(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, Mapping):
        return "{" + ",".join(f"{dumps_json(str(k))}:{dumps_json(v)}" for k, v in obj.items()) + "}"
    return "[" + ",".join(dumps_json(v) for v in obj) + "]"


# --- mechanism ------------------------------------------------------------------

def clear(predictions: Sequence[float], investments: Sequence[float]) -> float:
    """Investment-weighted mean prediction."""
    p = np.asarray(predictions, dtype=float)
    v = np.asarray(investments, dtype=float)
    if p.shape != v.shape or p.size == 0:
        raise ClearingError("need one investment per prediction")
    if np.any(v < 0):
        raise ClearingError("negative investment")
    total = v.sum()
    if not total > 0:
        raise ClearingError("all investments are zero")
    price = float(np.dot(v, p) / total)
    staked = p[v > 0]
    return min(float(staked.max()), max(float(staked.min()), price))


def _clear_stakes(stakes: Sequence[Stake]) -> float:
    return clear([s.prediction for s in stakes], [s.investment for s in stakes])


def scores(predictions: np.ndarray, target: float, bandwidth: float) -> np.ndarray:
    return np.exp(-((predictions - target) ** 2) / (2.0 * bandwidth ** 2))


@dataclass
class Settlement:
    payoffs: dict[str, float]
    budgets: dict[str, float]
    refunded: bool = False


def settle(trades: WeekTrades, target: float, config: MarketConfig,
           budgets: Mapping[str, float]) -> Settlement:
    """Redistribute the week's pot in proportion to stake x accuracy score.

    ``budgets`` are the pre-trade budgets of every staking agent.
    """
    if not 0.0 <= target <= 1.0:
        raise ValueError(f"target {target} outside [0, 1]")
    stakes = list(trades.stakes())
    invested = trades.invested()
    if not stakes:
        return Settlement({}, {a: budgets[a] for a in invested})
    agents = list(invested)
    pos = {a: i for i, a in enumerate(agents)}
    p = np.array([s.prediction for s in stakes])
    v = np.array([s.investment for s in stakes])
    owner = np.array([pos[s.agent] for s in stakes])
    pot = float(v.sum())
    sigma = config.payoff_bandwidth
    denom = float((v * scores(p, target, sigma)).sum())
    refunded = not (denom > 0 and math.isfinite(denom))
    if refunded:
        payoff = np.array([invested[a] for a in agents])
    else:
        # Shares relative to the best-scoring stake, so subnormal scores keep full precision.
        # (p - y)^2 - (p_m - y)^2 is factored to avoid cancellation.
        best = p[v > 0][np.argmin(np.abs(p[v > 0] - target))]
        weighted = v * np.exp(-(p - best) * (p + best - 2.0 * target) / (2.0 * sigma ** 2))
        per_agent = np.bincount(owner, weights=weighted, minlength=len(agents))
        payoff = pot * per_agent / per_agent.sum()
    payoffs = {a: float(payoff[i]) for i, a in enumerate(agents)}
    after = {a: max(0.0, budgets[a] - invested[a] + payoffs[a]) for a in agents}
    return Settlement(payoffs, after, refunded)


def _stake_fraction(config: MarketConfig, r: int, action: st.Action | None) -> float:
    lo, hi = config.min_rpt[r], config.max_rpt[r]
    conf = 1.0 if action is None else st.CONFIDENCE[action]
    return lo + (hi - lo) * conf


def run_week(agents: Sequence[AgentState], features: Mapping[str, float] | None,
             config: MarketConfig, own: Mapping[str, float] | None = None) -> tuple[float, WeekTrades]:
    """Run every round of one week's market.

    Round-1 predictions come from each warm agent's model applied to
    ``features`` (or from ``own`` when given). In later rounds agents observe
    the price cleared over all stakes so far and revise per their Q-table.
    Raises :class:`ClearingError` when no agent stakes anything.
    """
    trades = WeekTrades()
    current: dict[str, float] = {}
    remaining: dict[str, float] = {}
    for agent in agents:
        if not agent.warm:
            continue
        if own is not None:
            if agent.id not in own:
                continue
            p = own[agent.id]
        else:
            try:
                p = agent.model.predict(features)
            except LearnerError as e:
                trades.flags.append(f"abstain:{agent.id}:{e}")
                continue
        current[agent.id] = min(1.0, max(0.0, float(p)))
        remaining[agent.id] = agent.budget

    if not current:
        raise ClearingError("no warm agent")

    all_stakes: list[Stake] = []
    price = math.nan
    by_id = {a.id: a for a in agents}
    for r in range(config.rounds):
        stakes = []
        for aid in current:
            agent = by_id[aid]
            action = None
            if r > 0:
                state = st.observe(r + 1, current[aid], price, config.payoff_bandwidth,
                                   agent.budget_history)
                action = st.choose_action(state, agent.q_table, agent.rng)
                trades.decisions.setdefault(aid, []).append((state, action))
                current[aid] = min(1.0, max(0.0, st.apply_action(action, current[aid], price)))
            amount = remaining[aid] * _stake_fraction(config, r, action)
            if amount > 0:
                remaining[aid] -= amount
                stakes.append(Stake(aid, current[aid], amount))
        all_stakes.extend(stakes)
        if not all_stakes:
            raise ClearingError("no positive investment")
        price = _clear_stakes(all_stakes)
        trades.rounds.append(RoundLedger(r + 1, stakes, price))
    return price, trades


# --- backtest -------------------------------------------------------------------

@dataclass
class AgentSpec:
    id: str
    learner: LearnerSpec


def _agent_key(agent_id: str) -> int:
    return zlib.crc32(agent_id.encode("utf-8"))


class Backtest:
    """Sequential weekly market over a canonical frame."""

    def __init__(self, frame: TimeSeriesFrame, agents: Sequence[AgentSpec],
                 config: MarketConfig | None = None, seed: int = 0):
        if frame.target is None:
            raise ValueError("backtest frame needs a target")
        ids = [a.id for a in agents]
        if len(set(ids)) != len(ids):
            raise ValueError("agent ids must be unique")
        if not agents:
            raise ValueError("need at least one agent")
        self.frame = frame
        self.config = config or MarketConfig()
        self.seed = seed
        self.next_week = 0
        self.last_target: float | None = None
        self.agents: list[AgentState] = []
        for spec in sorted(agents, key=lambda a: a.id):
            missing = [c for c in spec.learner.inputs if c not in frame.columns]
            if missing:
                raise ValueError(f"agent {spec.id}: frame lacks column(s) {missing}")
            key = _agent_key(spec.id)
            self.agents.append(AgentState(
                id=spec.id,
                learner=spec.learner,
                budget=self.config.initial_budget,
                q_table=st.QTable.from_config(self.config.strategy),
                rng=np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(key, 0))),
                learner_seed=int(np.random.SeedSequence(seed, spawn_key=(key, 1)).generate_state(1)[0]),
            ))

    def _refit(self, t: int) -> None:
        history = self.frame.head(t)
        for agent in self.agents:
            agent.model = None
            if not agent.active:
                continue
            try:
                agent.model = fit(agent.learner, history, seed=agent.learner_seed)
            except ColdStart:
                pass
            except LearnerError as e:
                log.warning("agent %s: %s", agent.id, e)

    def step(self) -> MarketOutcome:
        t = self.next_week
        if t >= len(self.frame):
            raise IndexError("backtest finished")
        self._refit(t)
        features = self.frame.row(t)
        target = float(self.frame.target[t])
        cfg = self.config
        flags: list[str] = []
        payoffs: dict[str, float] = {}
        try:
            prediction, trades = run_week(self.agents, features, cfg)
        except ClearingError:
            prediction = self.last_target if self.last_target is not None else 0.0
            trades = WeekTrades(flags=["fallback"])
        flags.extend(trades.flags)

        if trades.rounds:
            by_id = {a.id: a for a in self.agents}
            invested = trades.invested()
            result = settle(trades, target, cfg, {a: by_id[a].budget for a in invested})
            if result.refunded:
                flags.append("refund")
            payoffs = result.payoffs
            self._learn(trades, payoffs, invested)
            floor = cfg.budget_floor * cfg.initial_budget
            for aid, budget in result.budgets.items():
                agent = by_id[aid]
                agent.budget = budget
                agent.budget_history = (agent.budget_history + [budget])[-(st.TREND_WINDOW + 1):]
                if budget < floor:
                    agent.active = False
                    flags.append(f"deactivated:{aid}")
        for agent in self.agents:
            agent.q_table.decay()

        self.last_target = target
        self.next_week = t + 1
        return MarketOutcome(
            week=self.frame.weeks[t],
            rounds=trades.rounds,
            market_prediction=float(prediction),
            target=target,
            payoffs=payoffs,
            budget_after={a.id: a.budget for a in self.agents
                          if a.active or f"deactivated:{a.id}" in flags},
            flags=flags,
        )

    def _learn(self, trades: WeekTrades, payoffs, invested) -> None:
        for agent in self.agents:
            decisions = trades.decisions.get(agent.id)
            if not decisions:
                continue
            for state, action, reward in agent.pending:
                st.update(agent.q_table, state, action, reward, decisions[0][0])
            reward = st.week_reward(payoffs[agent.id], invested[agent.id])
            agent.pending = [(s, a, reward) for s, a in decisions]

    def run(self, stop: int | None = None) -> Iterator[MarketOutcome]:
        stop = len(self.frame) if stop is None else min(stop, len(self.frame))
        while self.next_week < stop:
            yield self.step()

    # checkpoint -----------------------------------------------------------------

    def state_dict(self) -> dict:
        return {
            "next_week": self.next_week,
            "last_target": self.last_target,
            "seed": self.seed,
            "agents": {
                a.id: {
                    "budget": a.budget,
                    "active": a.active,
                    "budget_history": a.budget_history,
                    "q_table": a.q_table.to_dict(),
                    "rng": a.rng.bit_generator.state,
                    "pending": [[s.key(), act.name, r] for s, act, r in a.pending],
                }
                for a in self.agents
            },
        }

    def load_state_dict(self, state: dict) -> None:
        if state["seed"] != self.seed:
            raise ValueError("checkpoint was written with a different seed")
        if set(state["agents"]) != {a.id for a in self.agents}:
            raise ValueError("checkpoint agents do not match the configured roster")
        self.next_week = int(state["next_week"])
        self.last_target = state["last_target"]
        for a in self.agents:
            s = state["agents"][a.id]
            a.budget = float(s["budget"])
            a.active = bool(s["active"])
            a.budget_history = [float(b) for b in s["budget_history"]]
            a.q_table = st.QTable.from_dict(s["q_table"])
            a.rng.bit_generator.state = s["rng"]
            a.pending = [(st.QState.from_key(k), st.Action[n], float(r)) for k, n, r in s["pending"]]
