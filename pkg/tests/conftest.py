import datetime as dt
import sys
from pathlib import Path

import pytest

GOLDEN = Path(__file__).parent / "golden"
SCRIPTS = Path(__file__).parents[1] / "scripts"
sys.path.insert(0, str(SCRIPTS))

CDC_HEADER = ("REGION TYPE,REGION,YEAR,WEEK,% WEIGHTED ILI,%UNWEIGHTED ILI,AGE 0-4,AGE 25-49,"
              "AGE 25-64,AGE 5-24,AGE 50-64,AGE 65,ILITOTAL,NUM. OF PROVIDERS,TOTAL PATIENTS")


def cdc_row(year, week, ili, age=(10, 20, 30, 5), providers=1000, patients=50000):
    a04, a524, a2564, a65 = age
    return (f"National,X,{year},{week},{ili},{ili},{a04},X,{a2564},{a524},X,{a65},"
            f"{a04 + a524 + a2564 + a65},{providers},{patients}")


@pytest.fixture
def write(tmp_path):
    def _write(name, text):
        p = tmp_path / name
        p.write_text(text)
        return p
    return _write


def raw_pair_text():
    """Ten weeks of GFT and CDC data starting 2004-01-04 (MMWR 2004-W01), with preambles."""
    gft = ["Google Flu Trends - United States", "", "Date,United States,Alabama"]
    cdc = ["PERCENTAGE OF VISITS FOR INFLUENZA-LIKE-ILLNESS REPORTED BY SENTINEL PROVIDERS", CDC_HEADER]
    start = dt.date(2004, 1, 4)
    for i in range(10):
        week = start + dt.timedelta(weeks=i)
        gft.append(f"{week},{1500 + 100 * i},{1200 + 50 * i}")
        cdc.append(cdc_row(2004, i + 1, round(1.5 + 0.1 * i, 3)))
    return "\n".join(gft) + "\n", "\n".join(cdc) + "\n"


@pytest.fixture
def raw_pair(write):
    gft, cdc = raw_pair_text()
    return write("gft.csv", gft), write("cdc.csv", cdc)


def pytest_terminal_summary(terminalreporter):
    """One line per acceptance criterion, from the ``criterion`` property each acceptance test records."""
    lines = []
    for outcome in ("passed", "failed", "skipped"):
        for rep in terminalreporter.stats.get(outcome, []):
            props = dict(getattr(rep, "user_properties", []))
            if "criterion" not in props or (rep.when != "call" and outcome != "skipped"):
                continue
            detail = " ".join(f"{k}={v}" for k, v in props.items() if k != "criterion")
            lines.append((rep.nodeid, f"{outcome.upper()[:4]:4} {props['criterion']}: {detail}"))
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
