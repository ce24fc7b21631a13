"""Tabular Q-learning for revising a prediction after seeing the interim price."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import NamedTuple

import numpy as np

log = logging.getLogger(__name__)

DEVIATION_CUTS = (-2.0, -0.5, 0.5, 2.0)
TREND_WINDOW = 4
TREND_TOLERANCE = 0.01


class Action(IntEnum):
    PRESERVE = 0
    AVERAGE = 1
    FOLLOW = 2


ACTIONS = tuple(Action)

# fraction of the [min_rpt, max_rpt] range staked with each action
CONFIDENCE = {Action.PRESERVE: 1.0, Action.AVERAGE: 0.5, Action.FOLLOW: 0.0}


class Trend(IntEnum):
    FALLING = 0
    FLAT = 1
    RISING = 2


class QState(NamedTuple):
    round: int
    deviation_bin: int
    budget_trend_bin: int

    def key(self) -> str:
        return f"{self.round}:{self.deviation_bin}:{self.budget_trend_bin}"

    @classmethod
    def from_key(cls, key: str) -> "QState":
        r, d, t = (int(v) for v in key.split(":"))
        return cls(r, d, t)


def deviation_bin(interim: float, own: float, sigma: float) -> int:
    d = (interim - own) / sigma
    if d < DEVIATION_CUTS[0]:
        return 0
    if d < DEVIATION_CUTS[1]:
        return 1
    if d <= DEVIATION_CUTS[2]:
        return 2
    if d <= DEVIATION_CUTS[3]:
        return 3
    return 4


def budget_trend(history) -> Trend:
    """Trend of post-settlement budgets over the last four settlements."""
    history = list(history)[-(TREND_WINDOW + 1):]
    if len(history) < 2 or history[0] <= 0:
        return Trend.FLAT
    change = (history[-1] - history[0]) / history[0]
    if change > TREND_TOLERANCE:
        return Trend.RISING
    if change < -TREND_TOLERANCE:
        return Trend.FALLING
    return Trend.FLAT


def observe(round_: int, own: float, interim: float, sigma: float, budgets) -> QState:
    return QState(round_, deviation_bin(interim, own, sigma), int(budget_trend(budgets)))


@dataclass
class StrategyConfig:
    alpha: float = 0.1
    gamma: float = 0.9
    epsilon: float = 0.2
    epsilon_decay: float = 0.995

    def __post_init__(self):
        if not 0 <= self.alpha <= 1:
            raise ValueError("alpha must lie in [0, 1]")
        if not 0 <= self.gamma < 1:
            raise ValueError("gamma must lie in [0, 1)")
        if not 0 <= self.epsilon <= 1:
            raise ValueError("epsilon must lie in [0, 1]")
        if not 0 <= self.epsilon_decay <= 1:
            raise ValueError("epsilon_decay must lie in [0, 1]")


@dataclass
class QTable:
    alpha: float = 0.1
    gamma: float = 0.9
    epsilon: float = 0.2
    epsilon_decay: float = 0.995
    values: dict[tuple[QState, Action], float] = field(default_factory=dict)

    @classmethod
    def from_config(cls, cfg: StrategyConfig) -> "QTable":
        return cls(cfg.alpha, cfg.gamma, cfg.epsilon, cfg.epsilon_decay)

    def q(self, state: QState, action: Action) -> float:
        return self.values.get((state, action), 0.0)

    def best_value(self, state: QState) -> float:
        return max(self.q(state, a) for a in ACTIONS)

    def decay(self) -> None:
        self.epsilon *= self.epsilon_decay

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "gamma": self.gamma,
            "epsilon": self.epsilon,
            "epsilon_decay": self.epsilon_decay,
            "values": {f"{s.key()}:{a.name}": v for (s, a), v in self.values.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QTable":
        values = {}
        for key, v in d["values"].items():
            skey, name = key.rsplit(":", 1)
            values[(QState.from_key(skey), Action[name])] = float(v)
        return cls(d["alpha"], d["gamma"], d["epsilon"], d["epsilon_decay"], values)


def choose_action(state: QState, table: QTable, rng: np.random.Generator) -> Action:
    """Epsilon-greedy; greedy ties resolve to the earliest action."""
    if rng.random() < table.epsilon:
        return ACTIONS[int(rng.integers(len(ACTIONS)))]
    best = ACTIONS[0]
    for a in ACTIONS[1:]:
        if table.q(state, a) > table.q(state, best):
            best = a
    return best


def apply_action(action: Action, own: float, interim: float) -> float:
    if action is Action.PRESERVE:
        return own
    if action is Action.AVERAGE:
        return (own + interim) / 2
    return interim


def week_reward(payoff: float, stake: float) -> float:
    """Relative net profit of one week, clamped to [-1, 1]."""
    if stake <= 0:
        return 0.0
    return min(1.0, max(-1.0, (payoff - stake) / stake))


def update(table: QTable, state: QState, action: Action, reward: float,
           next_state: QState | None = None) -> QTable:
    """One-step Q-learning update, in place. ``next_state=None`` is terminal."""
    if not math.isfinite(reward):
        log.warning("skipping Q update with non-finite reward %r", reward)
        return table
    future = 0.0 if next_state is None else table.best_value(next_state)
    old = table.q(state, action)
    table.values[(state, action)] = old + table.alpha * (reward + table.gamma * future - old)
    return table
