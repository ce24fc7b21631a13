"""Continuous artificial prediction market for weekly ILI nowcasting."""

from .evaluation import EvalReport, PeriodSpec, build_report, mae, paired_t_test
from .ingest import AlignmentSpec, TimeSeriesFrame, align, parse_cdc_csv, parse_gft_csv
from .learners import LearnerSpec, fit, predict
from .market import AgentSpec, AgentState, Backtest, MarketConfig, MarketOutcome, clear, run_week, settle
from .strategy import Action, QState, QTable, apply_action, choose_action, update
from .synth import SourceSpec, SynthSpec, generate, oracle_clear_and_settle

__version__ = "0.1.0"
