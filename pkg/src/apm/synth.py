"""Synthetic multi-source ILI streams and a brute-force market oracle."""

from __future__ import annotations

import datetime as dt
import decimal
import math
from decimal import Decimal
from dataclasses import dataclass, field

import numpy as np

from .ingest import WEEK, TimeSeriesFrame


@dataclass
class SourceSpec:
    name: str
    bias: float = 0.0
    noise_sd: float = 0.0
    lag: int = 0
    regime_switches: list[tuple[int, float]] = field(default_factory=list)

    def __post_init__(self):
        self.regime_switches = sorted((int(w), float(sd)) for w, sd in self.regime_switches)
        if self.noise_sd < 0 or any(sd < 0 for _, sd in self.regime_switches):
            raise ValueError(f"source {self.name}: noise_sd must be >= 0")
        if self.lag < 0:
            raise ValueError(f"source {self.name}: lag must be >= 0")

    def noise_at(self, week: int) -> float:
        sd = self.noise_sd
        for start, new_sd in self.regime_switches:
            if week >= start:
                sd = new_sd
        return sd


@dataclass
class SynthSpec:
    weeks: int
    baseline: float = 0.02
    amplitude: float = 0.01
    period: float = 52.0
    phase: float = 0.0
    noise_sd: float = 0.0
    sources: list[SourceSpec] = field(default_factory=list)
    seed: int = 0
    start: dt.date = dt.date(2004, 1, 4)

    def __post_init__(self):
        if self.weeks < 1:
            raise ValueError("weeks must be >= 1")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be >= 0")
        self.sources = [s if isinstance(s, SourceSpec) else SourceSpec(**s) for s in self.sources]
        if isinstance(self.start, str):
            self.start = dt.date.fromisoformat(self.start)


def generate(spec: SynthSpec) -> TimeSeriesFrame:
    """Seasonal target plus lagged, biased, noisy copies of it (one column per source)."""
    rng = np.random.default_rng(spec.seed)
    t = np.arange(spec.weeks)
    target = spec.baseline + spec.amplitude * np.sin(2 * np.pi * t / spec.period + spec.phase)
    target = np.clip(target + spec.noise_sd * rng.standard_normal(spec.weeks), 0.0, 1.0)
    cols = {}
    for src in spec.sources:
        z = rng.standard_normal(spec.weeks)
        sd = np.array([src.noise_at(w) for w in t])
        lagged = target[np.maximum(t - src.lag, 0)]
        cols[src.name] = lagged + src.bias + sd * z
    weeks = [spec.start + i * WEEK for i in range(spec.weeks)]
    return TimeSeriesFrame(weeks, cols, target)


# --- scenarios ------------------------------------------------------------------

def adaptation_spec(seed: int = 11, weeks: int = 200, switch: int = 100) -> SynthSpec:
    """Source ``a`` is accurate before ``switch`` and noisy after; ``b`` the reverse.

    ``a`` degrades sharply (a sudden misleading signal) while ``b`` was only
    moderately noisy, so ``b`` keeps a budget well above the floor while ``a`` leads.
    """
    return SynthSpec(
        weeks=weeks, baseline=0.025, amplitude=0.015, period=52.0, noise_sd=0.0005, seed=seed,
        sources=[
            SourceSpec("a", noise_sd=0.001, regime_switches=[(switch, 0.01)]),
            SourceSpec("b", noise_sd=0.005, regime_switches=[(switch, 0.001)]),
            SourceSpec("c", bias=0.004, noise_sd=0.006),
            SourceSpec("d", bias=-0.003, noise_sd=0.01),
        ],
    )


DRIFT_LEVELS = (0.001, 0.002, 0.01)


def drifting_spec(seed: int, weeks: int = 300, n_sources: int = 5, regime_weeks: int = 60) -> SynthSpec:
    """Sources whose noise level is redrawn from good/fair/broken every ``regime_weeks`` weeks."""
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1,)))
    sources = []
    for j in range(n_sources):
        levels = rng.choice(DRIFT_LEVELS, size=weeks // regime_weeks + 1)
        switches = [(k * regime_weeks, float(levels[k])) for k in range(1, len(levels))]
        sources.append(SourceSpec(
            f"s{j}", bias=float(rng.uniform(-0.002, 0.002)), noise_sd=float(levels[0]),
            regime_switches=switches,
        ))
    return SynthSpec(weeks=weeks, baseline=0.025, amplitude=0.015, period=52.0,
                     noise_sd=0.0005, sources=sources, seed=seed)


# --- oracle ---------------------------------------------------------------------

def oracle_clear_and_settle(ledgers, target, config):
    """Recompute a week's price and payoffs by direct summation in 60-digit decimal arithmetic.

    ``ledgers`` is a list of rounds, each a list of ``(agent, prediction,
    investment)`` triples. Written without the engine's helpers on purpose.
    Stakes are refunded when every double-precision score underflows to zero.
    """
    with decimal.localcontext() as ctx:
        ctx.prec = 60
        num = Decimal(0)
        den = Decimal(0)
        for rnd in ledgers:
            for _, p, v in rnd:
                num += Decimal(p) * Decimal(v)
                den += Decimal(v)
        if den <= 0:
            raise ZeroDivisionError("no investment to clear")
        price = num / den

        sigma = config.payoff_bandwidth
        two_var = 2 * Decimal(sigma) * Decimal(sigma)
        staked = {}
        scored = {}
        underflow = True
        for rnd in ledgers:
            for agent, p, v in rnd:
                staked[agent] = staked.get(agent, Decimal(0)) + Decimal(v)
                err = Decimal(p) - Decimal(target)
                scored[agent] = scored.get(agent, Decimal(0)) + Decimal(v) * (-(err * err) / two_var).exp()
                if v * math.exp(-(p - target) ** 2 / (2.0 * sigma * sigma)) > 0.0:
                    underflow = False
        if underflow:
            return float(price), {a: float(x) for a, x in staked.items()}
        total = sum(scored.values(), Decimal(0))
        return float(price), {a: float(den * x / total) for a, x in scored.items()}
