"""Run configuration: one YAML file drives ingest, run, eval and synth."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from . import strategy as st
from .evaluation import PeriodSpec, calendar_years, flu_seasons
from .learners import KINDS, LearnerSpec
from .market import AgentSpec, MarketConfig
from .synth import SynthSpec


class ConfigError(Exception):
    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))


GFT_US_COLUMN = "United States"
GFT_SCALE = 1e-5  # GFT publishes ILI visits per 100,000 physician visits
GP_COLUMN = "GP"

TOP_KEYS = {"data", "alignment", "market", "strategy", "learners", "periods", "eval",
            "master_seed", "output_dir", "synth"}


@dataclass
class LearnerEntry:
    id: str
    kind: str
    features: list[str] = field(default_factory=lambda: ["*"])
    hyperparameters: dict[str, float] = field(default_factory=dict)
    standardize: bool | None = None
    column: str | None = None

    def agent(self, columns: list[str]) -> AgentSpec:
        import fnmatch
        mask = [c for c in columns if any(fnmatch.fnmatchcase(c, p) for p in self.features)]
        if self.kind in ("persistence", "passthrough"):
            mask = []
        spec = LearnerSpec(self.kind, dict(self.hyperparameters), mask, self.standardize, self.column)
        return AgentSpec(self.id, spec)


@dataclass
class RunConfig:
    gft_csv: Path | None = None
    cdc_csv: Path | None = None
    gp_csv: Path | None = None
    dataset: Path | None = None
    lag_weeks: int = 2
    market: MarketConfig = field(default_factory=MarketConfig)
    learners: list[LearnerEntry] | None = None
    periods: list[PeriodSpec] | str = "calendar_year"
    baseline: str = "gft_us"
    master_seed: int = 0
    output_dir: Path = Path("out")
    synth: dict[str, Any] | None = None

    def dataset_path(self) -> Path:
        return self.dataset or self.output_dir / "dataset.csv"

    def roster(self, columns: list[str]) -> list[AgentSpec]:
        entries = self.learners if self.learners is not None else default_roster(columns)
        return [e.agent(columns) for e in entries]

    def period_specs(self, weeks) -> list[PeriodSpec]:
        if isinstance(self.periods, list):
            return self.periods
        return named_periods(self.periods, weeks)


def named_periods(name: str, weeks) -> list[PeriodSpec]:
    if name == "calendar_year":
        return calendar_years(weeks[0].year, weeks[-1].year)
    if name == "flu_season":
        return flu_seasons()
    if name == "all":
        return []
    raise ValueError(f"unknown period set {name!r}")


def default_roster(columns: list[str]) -> list[LearnerEntry]:
    """One agent per learner family over every feature, plus passthrough agents."""
    roster = [LearnerEntry(k, k) for k in ("ols", "ridge", "knn", "cart", "bagged_tree", "mean")]
    if "cdc_ili" in columns:
        roster.append(LearnerEntry("persistence", "persistence", column="cdc_ili"))
    if GFT_US_COLUMN in columns:
        roster.append(LearnerEntry("gft_us", "passthrough", column=GFT_US_COLUMN,
                                   hyperparameters={"scale": GFT_SCALE}))
    if GP_COLUMN in columns:
        roster.append(LearnerEntry("gp", "passthrough", column=GP_COLUMN,
                                   hyperparameters={"scale": 0.01}))
    return roster


def _section(raw: dict, key: str, errors: list[str]) -> dict:
    value = raw.get(key) or {}
    if not isinstance(value, dict):
        errors.append(f"{key}: expected a mapping")
        return {}
    return value


def parse_config(raw: dict | None, base: Path = Path(".")) -> RunConfig:
    """Validate a raw config mapping, collecting every problem before raising."""
    raw = raw or {}
    errors: list[str] = []
    if not isinstance(raw, dict):
        raise ConfigError(["config root must be a mapping"])
    for key in sorted(set(raw) - TOP_KEYS):
        errors.append(f"unknown top-level key {key!r}")
    cfg = RunConfig()

    def path(v):
        p = Path(v)
        return p if p.is_absolute() else base / p

    data = _section(raw, "data", errors)
    for key in sorted(set(data) - {"gft_csv", "cdc_csv", "gp_csv", "dataset"}):
        errors.append(f"data: unknown key {key!r}")
    for key in ("gft_csv", "cdc_csv", "gp_csv", "dataset"):
        if data.get(key) is not None:
            setattr(cfg, key, path(data[key]))

    align = _section(raw, "alignment", errors)
    for key in sorted(set(align) - {"lag_weeks"}):
        errors.append(f"alignment: unknown key {key!r}")
    lag = align.get("lag_weeks", 2)
    if not isinstance(lag, int) or lag < 0:
        errors.append("alignment.lag_weeks must be a nonnegative integer")
    else:
        cfg.lag_weeks = lag

    strat = _section(raw, "strategy", errors)
    strategy_fields = {f.name for f in dataclasses.fields(st.StrategyConfig)}
    for key in sorted(set(strat) - strategy_fields):
        errors.append(f"strategy: unknown key {key!r}")
    market = _section(raw, "market", errors)
    market_fields = {f.name for f in dataclasses.fields(MarketConfig)} - {"strategy"}
    for key in sorted(set(market) - market_fields):
        errors.append(f"market: unknown key {key!r}")
    try:
        strategy_cfg = st.StrategyConfig(**{k: v for k, v in strat.items() if k in strategy_fields})
    except (TypeError, ValueError) as e:
        errors.append(f"strategy: {e}")
        strategy_cfg = st.StrategyConfig()
    margs = {k: v for k, v in market.items() if k in market_fields}
    if "rounds" in margs and ("min_rpt" not in margs or "max_rpt" not in margs):
        errors.append("market: min_rpt and max_rpt must be given when rounds is set")
    else:
        try:
            cfg.market = MarketConfig(**margs, strategy=strategy_cfg)
        except (TypeError, ValueError) as e:
            errors.append(f"market: {e}")

    learners = raw.get("learners")
    if learners is not None:
        if not isinstance(learners, list) or not learners:
            errors.append("learners: expected a nonempty list")
        else:
            entries, seen = [], set()
            for i, item in enumerate(learners):
                where = f"learners[{i}]"
                if not isinstance(item, dict):
                    errors.append(f"{where}: expected a mapping")
                    continue
                extra = set(item) - {f.name for f in dataclasses.fields(LearnerEntry)}
                if extra:
                    errors.append(f"{where}: unknown key(s) {sorted(extra)}")
                    continue
                if "id" not in item or "kind" not in item:
                    errors.append(f"{where}: 'id' and 'kind' are required")
                    continue
                if item["id"] in seen:
                    errors.append(f"{where}: duplicate id {item['id']!r}")
                seen.add(item["id"])
                entry = LearnerEntry(**item)
                if isinstance(entry.features, str):
                    entry.features = [entry.features]
                if entry.kind not in KINDS:
                    errors.append(f"{where}: unknown kind {entry.kind!r}")
                    continue
                try:
                    LearnerSpec(entry.kind, dict(entry.hyperparameters), ["_"], entry.standardize,
                                entry.column)
                except ValueError as e:
                    errors.append(f"{where}: {e}")
                entries.append(entry)
            cfg.learners = entries

    periods = raw.get("periods", "calendar_year")
    if isinstance(periods, str):
        if periods not in ("calendar_year", "flu_season", "all"):
            errors.append(f"periods: unknown period set {periods!r}")
        cfg.periods = periods
    elif isinstance(periods, list):
        specs = []
        for i, p in enumerate(periods):
            try:
                specs.append(PeriodSpec(**p))
            except (TypeError, ValueError) as e:
                errors.append(f"periods[{i}]: {e}")
        cfg.periods = specs
    else:
        errors.append("periods: expected a name or a list")

    ev = _section(raw, "eval", errors)
    for key in sorted(set(ev) - {"baseline"}):
        errors.append(f"eval: unknown key {key!r}")
    cfg.baseline = ev.get("baseline", cfg.baseline)

    seed = raw.get("master_seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        errors.append("master_seed must be an integer")
    else:
        cfg.master_seed = seed
    if raw.get("output_dir") is not None:
        cfg.output_dir = path(raw["output_dir"])

    synth = raw.get("synth")
    if synth is not None:
        if not isinstance(synth, dict):
            errors.append("synth: expected a mapping")
        elif "scenario" not in synth:
            try:
                SynthSpec(**synth)
            except (TypeError, ValueError) as e:
                errors.append(f"synth: {e}")
        cfg.synth = synth

    if errors:
        raise ConfigError(errors)
    return cfg


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return parse_config({})
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise ConfigError([f"cannot read config {path}: {e}"]) from None
    except yaml.YAMLError as e:
        raise ConfigError([f"invalid YAML in {path}: {e}"]) from None
    return parse_config(raw, path.parent)
