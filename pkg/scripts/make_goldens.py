"""Write the golden fixtures under tests/golden from a verified run.

Run once after a reviewed change to the seeded code paths; commit the output.
"""

import json
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "tests"))

from apm import cli  # noqa: E402
from apm.ingest import write_canonical  # noqa: E402
from apm.learners import LearnerSpec, fit, predict  # noqa: E402
from apm.strategy import QState, QTable, choose_action  # noqa: E402
from apm.synth import SourceSpec, SynthSpec, generate  # noqa: E402

GOLDEN = ROOT / "tests" / "golden"


def main():
    from test_learners import fixture20

    spec = LearnerSpec("bagged_tree", feature_mask=["x0", "x1", "x2"])
    value = predict(fit(spec, fixture20(), seed=7), [0.5, 0.5, 0.5])
    (GOLDEN / "bagged_tree.json").write_text(json.dumps({"prediction": value}, indent=2) + "\n")

    table = QTable(epsilon=1.0)
    rng = np.random.default_rng(1234)
    actions = [choose_action(QState(2, 2, 1), table, rng).name for _ in range(20)]
    (GOLDEN / "actions_eps1_seed1234.json").write_text(json.dumps(actions, indent=2) + "\n")

    write_canonical(generate(synth_seed42()), GOLDEN / "synth_seed42.csv")

    from conftest import raw_pair_text
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        gft, cdc = raw_pair_text()
        (tmp / "gft.csv").write_text(gft)
        (tmp / "cdc.csv").write_text(cdc)
        assert cli.main(["ingest", "--gft", str(tmp / "gft.csv"), "--cdc", str(tmp / "cdc.csv"),
                         "--out", str(tmp / "ingest")]) == 0
        shutil.copy(tmp / "ingest" / "dataset.csv", GOLDEN / "ingest_raw_pair.csv")
        assert cli.main(["run", "--dataset", str(GOLDEN / "synth_seed42.csv"), "--seed", "7",
                         "--out", str(tmp / "run")]) == 0
        shutil.copy(tmp / "run" / "predictions.csv", GOLDEN / "run_synth42_seed7_predictions.csv")


def synth_seed42():
    return SynthSpec(
        weeks=10, baseline=0.02, amplitude=0.01, period=52, noise_sd=0.001, seed=42,
        sources=[SourceSpec("s0", bias=0.001, noise_sd=0.002, lag=1),
                 SourceSpec("s1", noise_sd=0.004, regime_switches=[(5, 0.0)])],
    )


if __name__ == "__main__":
    main()
