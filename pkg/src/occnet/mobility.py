"""Origin (traditional) occupations and per-individual mobility variables."""

from __future__ import annotations

import csv
import math
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, fields
from typing import Iterable, Literal, Mapping

import pandas as pd

from .ingest import Household, IndividualRecord
from .netgraph import DistanceMatrix

OriginRule = Literal["edu-then-age", "age-then-edu"]
EDMode = Literal["signed", "absolute"]

# Exclusion causes, checked in this order so each person gets exactly one.
CAUSES = (
    "no_origin",
    "not_working",
    "missing_occupation",
    "origin_member",
    "origin_not_in_network",
    "occupation_not_in_network",
    "disconnected",
    "missing_mpce",
)


@dataclass(frozen=True)
class OriginAssignment:
    household_id: str
    origin_occupation: str
    origin_person: str
    origin_education: int


@dataclass(frozen=True)
class MobilityRecord:
    person_id: str
    household_id: str
    d_ij: float
    ed_ij: float
    edu_years: int
    origin_edu: int
    female: bool
    urban: bool
    age: int
    assets: float
    social_group: str
    state: str
    origin_occ: str
    occupation: str
    hh_weight: float


MOBILITY_COLUMNS = tuple(f.name for f in fields(MobilityRecord))


def _origin_key(m: IndividualRecord, rule: str):
    if rule == "edu-then-age":
        return (m.education_years, -m.age, m.person_id)
    if rule == "age-then-edu":
        return (-m.age, m.education_years, m.person_id)
    raise ValueError(f"unknown origin rule {rule!r}")


def identify_traditional(h: Household, rule: str = "edu-then-age") -> OriginAssignment | None:
    """Pick the household's traditional occupation holder.

    Default order: least education, then greatest age, then smallest person id.
    Returns None when no working member reports an occupation.
    """
    eligible = [m for m in h.members if m.is_working and m.occupation is not None]
    if not eligible:
        return None
    origin = min(eligible, key=lambda m: _origin_key(m, rule))
    return OriginAssignment(h.household_id, origin.occupation, origin.person_id, origin.education_years)


def social_distance(own_occ: str, origin_occ: str, D: DistanceMatrix, dij_scale: float = 1.0) -> float:
    idx = D.index()
    missing = [c for c in (own_occ, origin_occ) if c not in idx]
    if missing:
        raise KeyError(f"occupation(s) not in network: {missing}")
    return float(D.d[idx[own_occ], idx[origin_occ]]) * dij_scale


def occupation_mpce(
    records: Iterable[IndividualRecord], occupations: Iterable[str] | None = None
) -> dict[str, float]:
    """Survey-weighted mean MPCE of working individuals in each occupation.

    This equals the fitted value of a weighted regression of MPCE on a full
    set of occupation dummies.
    """
    num: dict[str, float] = defaultdict(float)
    den: dict[str, float] = defaultdict(float)
    for r in records:
        if r.is_working and r.occupation is not None and r.mpce is not None:
            num[r.occupation] += r.hh_weight * r.mpce
            den[r.occupation] += r.hh_weight
    wanted = sorted(den) if occupations is None else list(occupations)
    missing = [c for c in wanted if den.get(c, 0.0) <= 0]
    if missing:
        raise ValueError(f"no MPCE data for occupation(s): {missing}")
    return {c: num[c] / den[c] for c in wanted}


def economic_distance(own_occ: str, origin_occ: str, mpce_map: Mapping[str, float], mode: str = "signed") -> float:
    missing = [c for c in (own_occ, origin_occ) if c not in mpce_map]
    if missing:
        raise KeyError(f"no predicted MPCE for {missing}")
    diff = mpce_map[own_occ] - mpce_map[origin_occ]
    if mode == "signed":
        return diff
    if mode == "absolute":
        return abs(diff)
    raise ValueError(f"unknown ED mode {mode!r}")


def assign_origins(households: Iterable[Household], rule: str = "edu-then-age") -> dict[str, OriginAssignment]:
    out = {}
    for hh in households:
        o = identify_traditional(hh, rule)
        if o is not None:
            out[hh.household_id] = o
    return out


def build_mobility_table(
    households: Iterable[Household],
    origins: Mapping[str, OriginAssignment],
    D: DistanceMatrix | Mapping[str, DistanceMatrix],
    mpce_map: Mapping[str, float],
    dij_scale: float = 1.0,
    ed_mode: str = "signed",
    include_origin: bool = False,
    group_by: str | None = None,
) -> tuple[list[MobilityRecord], Counter]:
    """Assemble the regression sample, one row per eligible non-origin worker.

    ``D`` may be a mapping from a household-level grouping value (see
    ``group_by``) to the distance matrix of that group's own network.
    Returns the rows and a counter of exclusions by cause.
    """
    excluded: Counter = Counter({c: 0 for c in CAUSES})
    rows: list[MobilityRecord] = []
    per_group = isinstance(D, Mapping)
    for hh in households:
        origin = origins.get(hh.household_id)
        if origin is None:
            excluded["no_origin"] += len(hh.members)
            continue
        if per_group:
            key = getattr(hh, group_by) if group_by else None
            dist = D.get(key)
        else:
            dist = D
        idx = dist.index() if dist is not None else {}
        for m in hh.members:
            if not m.is_working:
                cause = "not_working"
            elif m.occupation is None:
                cause = "missing_occupation"
            elif m.person_id == origin.origin_person and not include_origin:
                cause = "origin_member"
            elif origin.origin_occupation not in idx:
                cause = "origin_not_in_network"
            elif m.occupation not in idx:
                cause = "occupation_not_in_network"
            else:
                d = float(dist.d[idx[m.occupation], idx[origin.origin_occupation]])
                if not math.isfinite(d):
                    cause = "disconnected"
                elif m.occupation not in mpce_map or origin.origin_occupation not in mpce_map:
                    cause = "missing_mpce"
                else:
                    rows.append(
                        MobilityRecord(
                            person_id=m.person_id,
                            household_id=hh.household_id,
                            d_ij=d * dij_scale,
                            ed_ij=economic_distance(m.occupation, origin.origin_occupation, mpce_map, ed_mode),
                            edu_years=m.education_years,
                            origin_edu=origin.origin_education,
                            female=m.is_female,
                            urban=m.urban,
                            age=m.age,
                            assets=m.assets,
                            social_group=m.social_group,
                            state=m.state,
                            origin_occ=origin.origin_occupation,
                            occupation=m.occupation,
                            hh_weight=m.hh_weight,
                        )
                    )
                    continue
            excluded[cause] += 1
    rows.sort(key=lambda r: (r.household_id, r.person_id))
    return rows, excluded


def to_frame(rows: Iterable[MobilityRecord]) -> pd.DataFrame:
    df = pd.DataFrame([asdict(r) for r in rows], columns=list(MOBILITY_COLUMNS))
    return df.astype({"female": bool, "urban": bool})


_DTYPES = {
    "person_id": str,
    "household_id": str,
    "social_group": str,
    "state": str,
    "origin_occ": str,
    "occupation": str,
}


def write_mobility(rows: Iterable[MobilityRecord], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MOBILITY_COLUMNS)
        for r in rows:
            w.writerow([
                r.person_id, r.household_id, repr(r.d_ij), repr(r.ed_ij), r.edu_years, r.origin_edu,
                int(r.female), int(r.urban), r.age, repr(r.assets), r.social_group, r.state,
                r.origin_occ, r.occupation, repr(r.hh_weight),
            ])


def read_mobility(path) -> pd.DataFrame:
    df = pd.read_csv(path, dtype=_DTYPES, keep_default_na=False)
    for col in ("female", "urban"):
        df[col] = df[col].astype(int).astype(bool)
    for col in ("d_ij", "ed_ij", "assets", "hh_weight"):
        df[col] = df[col].astype(float)
    return df


def exclusion_report(excluded: Counter, n_rows: int, n_households_no_origin: int | None = None) -> str:
    lines = ["[mobility]", f"records = {n_rows}"]
    lines += [f"excluded_{c} = {excluded.get(c, 0)}" for c in CAUSES]
    if n_households_no_origin is not None:
        lines.append(f"households_without_origin = {n_households_no_origin}")
    return "\n".join(lines) + "\n"
