from __future__ import annotations

import sys
from pathlib import Path

import pytest

from occnet import ingest
from occnet.ingest import IndividualRecord

TOY_CODES = ("01", "02", "03", "04", "05", "06")
# Worked example: household -> (weight, occupations held)
TOY_HOUSEHOLDS = {
    "H1": (100.0, ("01", "02", "03")),
    "H2": (200.0, ("01", "02", "04", "05")),
    "H3": (300.0, ("05", "06")),
    "H4": (400.0, ("01", "02", "03", "04", "05", "06")),
}


def record(**kw) -> IndividualRecord:
    base = dict(
        household_id="H1",
        person_id="P1",
        hh_weight=1.0,
        state="S1",
        urban=False,
        social_group="FC",
        is_female=False,
        age=40,
        education_years=5,
        is_working=True,
        occupation="61",
        assets=1.0,
        mpce=1000.0,
    )
    base.update(kw)
    return IndividualRecord(**base)


def toy_records() -> list[IndividualRecord]:
    """One working person per (household, occupation) cell of the worked example table."""
    out = []
    for hh, (w, occs) in TOY_HOUSEHOLDS.items():
        for k, occ in enumerate(occs):
            out.append(
                record(
                    household_id=hh,
                    person_id=f"{hh}-{k}",
                    hh_weight=w,
                    occupation=occ,
                    age=60 - 5 * k,
                    education_years=2 + k,
                    mpce=500.0 + 100 * k,
                )
            )
    return out


@pytest.fixture
def toy_csv(tmp_path) -> Path:
    path = tmp_path / "toy.csv"
    ingest.write_survey(toy_records(), path)
    return path


@pytest.fixture(scope="session")
def occnet_cmd() -> list[str]:
    return [sys.executable, "-m", "occnet.cli"]


# one line per acceptance criterion, echoed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
