"""Survey CSV ingestion, household grouping and the rare-occupation filter."""

from __future__ import annotations

import csv
import logging
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping

from . import nco

log = logging.getLogger(__name__)

CANONICAL_COLUMNS = (
    "hh_id",
    "person_id",
    "hh_weight",
    "state",
    "urban",
    "social_group",
    "sex",
    "age",
    "edu_years",
    "working",
    "occ2",
    "assets",
    "mpce",
)

MAX_AGE = 120
MAX_EDUCATION = 30

_TRUE = {"1", "true", "t", "yes", "y"}
_FALSE = {"0", "false", "f", "no", "n"}
# IHDS convention: 1 = male, 2 = female
_FEMALE = {"f", "female", "2"}
_MALE = {"m", "male", "1"}


class SurveyFormatError(ValueError):
    """The input file cannot be read as a survey extract at all."""


class RowError(ValueError):
    """A single row violates a record invariant."""


class HouseholdConflictError(ValueError):
    def __init__(self, household_ids: list[str]):
        self.household_ids = household_ids
        shown = ", ".join(household_ids[:20])
        more = f" (+{len(household_ids) - 20} more)" if len(household_ids) > 20 else ""
        super().__init__(f"conflicting household-level fields in households: {shown}{more}")


@dataclass(frozen=True, slots=True)
class IndividualRecord:
    household_id: str
    person_id: str
    hh_weight: float
    state: str
    urban: bool
    social_group: str
    is_female: bool
    age: int
    education_years: int
    is_working: bool
    occupation: str | None
    assets: float
    mpce: float | None


@dataclass(frozen=True)
class Household:
    household_id: str
    weight: float
    members: tuple[IndividualRecord, ...]
    occupation_set: frozenset[str]

    @property
    def state(self) -> str:
        return self.members[0].state

    @property
    def urban(self) -> bool:
        return self.members[0].urban

    @property
    def social_group(self) -> str:
        return self.members[0].social_group

    @property
    def assets(self) -> float:
        return self.members[0].assets


@dataclass
class LoadReport:
    total_rows: int = 0
    rejected: list[tuple[int, str]] = field(default_factory=list)

    @property
    def accepted(self) -> int:
        return self.total_rows - len(self.rejected)


def _bool(value: str, name: str) -> bool:
    v = value.strip().lower()
    if v in _TRUE:
        return True
    if v in _FALSE:
        return False
    raise RowError(f"{name}: not a boolean: {value!r}")


def _float(value: str, name: str) -> float:
    try:
        x = float(value)
    except ValueError:
        raise RowError(f"{name}: unparseable number {value!r}") from None
    if not math.isfinite(x):
        raise RowError(f"{name}: non-finite value {value!r}")
    return x


def _int(value: str, name: str) -> int:
    x = _float(value, name)
    if x != int(x):
        raise RowError(f"{name}: not an integer: {value!r}")
    return int(x)


def parse_row(row: Mapping[str, str]) -> IndividualRecord:
    """Build one record from a row keyed by canonical column names."""
    hh_id = row["hh_id"].strip()
    person_id = row["person_id"].strip()
    if not hh_id or not person_id:
        raise RowError("hh_id/person_id: empty identifier")

    weight = _float(row["hh_weight"], "hh_weight")
    if weight <= 0:
        raise RowError(f"hh_weight > 0 violated: {weight!r}")

    sex = row["sex"].strip().lower()
    if sex in _FEMALE:
        is_female = True
    elif sex in _MALE:
        is_female = False
    else:
        raise RowError(f"sex: unrecognized value {row['sex']!r}")

    age = _int(row["age"], "age")
    if not 0 <= age <= MAX_AGE:
        raise RowError(f"0 <= age <= {MAX_AGE} violated: {age}")
    edu = _int(row["edu_years"], "edu_years")
    if not 0 <= edu <= MAX_EDUCATION:
        raise RowError(f"0 <= edu_years <= {MAX_EDUCATION} violated: {edu}")

    occ_raw = row["occ2"].strip()
    occupation = nco.normalize_code(occ_raw) if occ_raw else None
    if occupation is not None and not nco.is_valid_code(occupation):
        raise RowError(f"occ2: {occ_raw!r} is not an NCO-1968 group code")

    mpce_raw = row["mpce"].strip()
    mpce = _float(mpce_raw, "mpce") if mpce_raw else None
    if mpce is not None and mpce < 0:
        raise RowError(f"mpce >= 0 violated: {mpce!r}")

    return IndividualRecord(
        household_id=hh_id,
        person_id=person_id,
        hh_weight=weight,
        state=row["state"].strip(),
        urban=_bool(row["urban"], "urban"),
        social_group=row["social_group"].strip(),
        is_female=is_female,
        age=age,
        education_years=edu,
        is_working=_bool(row["working"], "working"),
        occupation=occupation,
        assets=_float(row["assets"], "assets"),
        mpce=mpce,
    )


def load_survey(
    path: str | Path,
    schema: Mapping[str, str] | None = None,
    strict: bool = False,
) -> tuple[list[IndividualRecord], LoadReport]:
    """Read a survey extract into validated records.

    ``schema`` maps canonical column names to the header names used in the
    file; unmapped fields are looked up under their canonical name. Rows
    that fail validation are skipped and listed in the report, unless
    ``strict`` is set, in which case the first bad row raises ``RowError``.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"survey file not found: {path}")
    mapping = {name: name for name in CANONICAL_COLUMNS}
    if schema:
        unknown = set(schema) - set(CANONICAL_COLUMNS)
        if unknown:
            raise SurveyFormatError(f"unknown schema fields: {sorted(unknown)}")
        mapping.update(schema)

    records: list[IndividualRecord] = []
    report = LoadReport()
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SurveyFormatError(f"{path}: empty file, no header") from None
        index = {name: i for i, name in enumerate(header)}
        missing = [col for col in mapping.values() if col not in index]
        if missing:
            raise SurveyFormatError(f"{path}: missing mapped columns {missing}")
        positions = {canon: index[col] for canon, col in mapping.items()}

        for row in reader:
            if not row:
                continue
            report.total_rows += 1
            line = reader.line_num
            try:
                if len(row) != len(header):
                    raise RowError(f"expected {len(header)} cells, found {len(row)}")
                records.append(parse_row({c: row[i] for c, i in positions.items()}))
            except RowError as exc:
                if strict:
                    raise RowError(f"{path}:{line}: {exc}") from None
                report.rejected.append((line, str(exc)))

    log.info("loaded %s: %d accepted, %d rejected", path, report.accepted, len(report.rejected))
    return records, report


def _fmt_float(x: float) -> str:
    return repr(float(x))


def record_to_row(rec: IndividualRecord) -> list[str]:
    return [
        rec.household_id,
        rec.person_id,
        _fmt_float(rec.hh_weight),
        rec.state,
        "1" if rec.urban else "0",
        rec.social_group,
        "F" if rec.is_female else "M",
        str(rec.age),
        str(rec.education_years),
        "1" if rec.is_working else "0",
        rec.occupation or "",
        _fmt_float(rec.assets),
        "" if rec.mpce is None else _fmt_float(rec.mpce),
    ]


def write_survey(records: Iterable[IndividualRecord], path: str | Path) -> None:
    """Write records in the canonical input layout (readable by ``load_survey``)."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CANONICAL_COLUMNS)
        for rec in records:
            writer.writerow(record_to_row(rec))


_HOUSEHOLD_FIELDS = ("hh_weight", "state", "urban", "social_group", "assets")


def group_households(records: Iterable[IndividualRecord]) -> list[Household]:
    """Group records by household id (sorted), members sorted by person id.

    Only working members contribute to a household's occupation set.
    """
    by_id: dict[str, list[IndividualRecord]] = defaultdict(list)
    for rec in records:
        by_id[rec.household_id].append(rec)

    conflicts = []
    households = []
    for hh_id in sorted(by_id):
        members = sorted(by_id[hh_id], key=lambda r: r.person_id)
        first = members[0]
        if any(getattr(m, f) != getattr(first, f) for m in members[1:] for f in _HOUSEHOLD_FIELDS):
            conflicts.append(hh_id)
            continue
        occs = frozenset(m.occupation for m in members if m.is_working and m.occupation is not None)
        households.append(Household(hh_id, first.hh_weight, tuple(members), occs))
    if conflicts:
        raise HouseholdConflictError(conflicts)
    return households


def occupation_household_counts(households: Iterable[Household]) -> Counter:
    """Unweighted number of distinct households holding each occupation."""
    counts: Counter = Counter()
    for hh in households:
        counts.update(hh.occupation_set)
    return counts


def filter_rare_occupations(
    households: list[Household], min_households: int = 10
) -> tuple[list[Household], set[str]]:
    """Drop codes held by fewer than ``min_households`` distinct households.

    Households keep all their members; only the occupation sets shrink, so a
    household may end up with an empty set (it then drops out of the
    incidence matrix but is still available for reporting).
    """
    if min_households < 1:
        raise ValueError("min_households must be >= 1")
    counts = occupation_household_counts(households)
    dropped = {code for code, n in counts.items() if n < min_households}
    if not dropped:
        return list(households), dropped
    out = [
        replace(hh, occupation_set=hh.occupation_set - dropped) if hh.occupation_set & dropped else hh
        for hh in households
    ]
    if not any(hh.occupation_set for hh in out):
        log.warning("rare-occupation filter (min %d) removed every occupation", min_households)
    return out, dropped


def ingest_report(report: LoadReport, households: list[Household], dropped: set[str], min_households: int) -> str:
    """Plain-text diagnostics for the ingest stage."""
    working_missing = sum(
        1 for hh in households for m in hh.members if m.is_working and m.occupation is None
    )
    lines = [
        "[ingest]",
        f"rows_total = {report.total_rows}",
        f"rows_accepted = {report.accepted}",
        f"rows_rejected = {len(report.rejected)}",
        f"households = {len(households)}",
        f"working_without_occupation = {working_missing}",
        f"min_households = {min_households}",
        f"dropped_occupations = {' '.join(sorted(dropped)) if dropped else '(none)'}",
    ]
    for line, msg in report.rejected:
        lines.append(f"rejected row {line}: {msg}")
    return "\n".join(lines) + "\n"
