"""Synthetic survey extracts with planted stratification and planted coefficients.

Occupations are split into blocks. Each household has an anchor member (its
oldest, least educated worker, hence its traditional occupation) drawn from
one block; every further member slot lands in the anchor's block with
probability ``within_tie_prob``, in another block with ``cross_tie_prob``,
and is otherwise a non-working member.

Social distances are whatever the occupational network built from these
households says they are, so education is generated *given* each person's
distance: ``E = c + (kappa / beta) * d_centered + u`` with
``Var(u) = kappa (1 - kappa) Var(d) / beta^2``. The linear projection of
``d`` on ``E`` then has slope exactly ``beta`` and the residual has standard
deviation ``noise_sd``. Occupation-level MPCE means are then chosen so that
the interaction coefficient of the economic-distance model equals
``planted_gamma_interaction`` on the noiseless means; individual MPCE noise
perturbs it.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd

from . import ingest, mobility, netgraph, nco, project, regress
from .ingest import IndividualRecord
from .netgraph import Edge, OccupationGraph

log = logging.getLogger(__name__)

SOCIAL_GROUPS = ("BRAH", "FC", "OBC", "SC", "ST", "MUS", "OTH")
SOCIAL_GROUP_PROBS = (0.08, 0.17, 0.33, 0.18, 0.08, 0.12, 0.04)


@dataclass(frozen=True)
class SynthConfig:
    n_households: int = 2000
    n_occupations: int = 32
    n_blocks: int = 4
    within_tie_prob: float = 0.7
    cross_tie_prob: float = 0.1
    members_per_household: tuple[int, int] = (2, 5)
    planted_beta_education: float = 3.0
    planted_gamma_interaction: float = 5.0
    noise_sd: float = 14.0
    seed: int = 42
    # within-origin standard deviation of the scaled social distance
    distance_sd: float = 20.0
    mean_education: float = 12.0
    education_sd: float = 4.0  # only used when planted_beta_education == 0
    locality: float = 1.5
    n_states: int = 4
    mpce_noise_sd: float = 300.0
    min_households: int = 10

    def validate(self) -> None:
        if self.n_households < 0:
            raise ValueError("n_households must be >= 0")
        if not 1 <= self.n_blocks <= self.n_occupations <= len(nco.nco_table()):
            raise ValueError("need 1 <= n_blocks <= n_occupations <= number of NCO codes")
        if not 0 < self.within_tie_prob <= 1 or not 0 <= self.cross_tie_prob < 1:
            raise ValueError("tie probabilities out of range")
        if self.within_tie_prob <= self.cross_tie_prob:
            raise ValueError("within_tie_prob must exceed cross_tie_prob")
        if self.within_tie_prob + self.cross_tie_prob > 1:
            raise ValueError("within_tie_prob + cross_tie_prob must not exceed 1")
        if self.cross_tie_prob > 0 and self.n_blocks < 2:
            raise ValueError("cross-block ties need at least two blocks")
        lo, hi = self.members_per_household
        if not 1 <= lo <= hi:
            raise ValueError("members_per_household must satisfy 1 <= lo <= hi")
        if self.noise_sd <= 0 or self.distance_sd <= 0:
            raise ValueError("noise_sd and distance_sd must be positive")
        if self.planted_beta_education != 0 and self.noise_sd >= self.distance_sd:
            raise ValueError("noise_sd must be below distance_sd for a nonzero planted slope")


@dataclass
class GroundTruth:
    blocks: dict[str, int]
    params: dict[str, float | int | str] = field(default_factory=dict)

    def write(self, path: str | Path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["kind", "key", "value"])
            for code in sorted(self.blocks):
                w.writerow(["block", code, self.blocks[code]])
            for key in sorted(self.params):
                v = self.params[key]
                w.writerow(["param", key, repr(v) if isinstance(v, float) else v])

    @classmethod
    def read(cls, path: str | Path) -> "GroundTruth":
        blocks: dict[str, int] = {}
        params: dict[str, float | int | str] = {}
        with Path(path).open(newline="", encoding="utf-8") as fh:
            for r in csv.DictReader(fh):
                if r["kind"] == "block":
                    blocks[r["key"]] = int(r["value"])
                else:
                    params[r["key"]] = _parse_scalar(r["value"])
        return cls(blocks, params)


def _parse_scalar(text: str):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def occupation_codes(n: int) -> list[str]:
    """``n`` NCO codes spread evenly over the classification."""
    codes = sorted(nco.nco_table())
    picks = np.unique(np.round(np.linspace(0, len(codes) - 1, n)).astype(int))
    return [codes[i] for i in picks]


@dataclass
class _Member:
    person_id: str
    is_female: bool
    age: int
    occupation: str | None
    education: int = 0
    mpce: float = 0.0


def _draw_households(cfg: SynthConfig, rng: np.random.Generator, codes: list[str], block_of: np.ndarray):
    n_occ = len(codes)
    blocks = [np.flatnonzero(block_of == b) for b in range(cfg.n_blocks)]
    households = []
    for h in range(cfg.n_households):
        hh_id = f"H{h + 1:06d}"
        b = int(rng.integers(cfg.n_blocks))
        members_in_block = blocks[b]
        anchor_pos = int(rng.integers(len(members_in_block)))
        anchor_occ = int(members_in_block[anchor_pos])
        # nearer occupations within the block are likelier housemates
        offsets = np.abs(np.arange(len(members_in_block)) - anchor_pos)
        local_w = np.exp(-offsets / cfg.locality) if cfg.locality > 0 else np.ones(len(offsets))
        local_w /= local_w.sum()
        others = np.flatnonzero(block_of != b)

        anchor_age = int(rng.integers(45, 76))
        members = [_Member(f"{hh_id}-01", bool(rng.random() < 0.3), anchor_age, codes[anchor_occ])]
        n_slots = int(rng.integers(cfg.members_per_household[0], cfg.members_per_household[1] + 1))
        for s in range(1, n_slots):
            u = rng.random()
            if u < cfg.within_tie_prob:
                occ = codes[int(members_in_block[rng.choice(len(members_in_block), p=local_w)])]
            elif u < cfg.within_tie_prob + cfg.cross_tie_prob and others.size:
                occ = codes[int(others[rng.integers(others.size)])]
            else:
                occ = None
            age = int(rng.integers(18, anchor_age))
            members.append(_Member(f"{hh_id}-{s + 1:02d}", bool(rng.random() < 0.5), age, occ))

        group = SOCIAL_GROUPS[int(rng.choice(len(SOCIAL_GROUPS), p=SOCIAL_GROUP_PROBS))]
        households.append({
            "hh_id": hh_id,
            "weight": round(float(rng.uniform(50.0, 500.0)), 3),
            "state": f"S{int(rng.integers(cfg.n_states)) + 1:02d}",
            "urban": bool(rng.random() < 0.3),
            "group": group,
            "assets": round(float(rng.normal(10.0, 3.0)), 3),
            "block": b,
            "members": members,
        })
    assert n_occ == len(block_of)
    return households


def _to_records(households) -> list[IndividualRecord]:
    out = []
    for hh in households:
        for m in hh["members"]:
            out.append(IndividualRecord(
                household_id=hh["hh_id"],
                person_id=m.person_id,
                hh_weight=hh["weight"],
                state=hh["state"],
                urban=hh["urban"],
                social_group=hh["group"],
                is_female=m.is_female,
                age=m.age,
                education_years=m.education,
                is_working=m.occupation is not None,
                occupation=m.occupation,
                assets=hh["assets"],
                mpce=round(m.mpce, 2),
            ))
    return out


def network_graph(records, min_households: int = 10, h_mode: str = "weighted", length_rule: str = "reciprocal"):
    """Occupation graph the default pipeline would build from ``records``."""
    hhs = ingest.group_households(records)
    hhs, _ = ingest.filter_rare_occupations(hhs, min_households)
    surviving = {c for hh in hhs for c in hh.occupation_set}
    inc = project.build_incidence(hhs, surviving)
    return netgraph.to_graph(project.strength_matrix(inc, h_mode), length_rule)


def network_distances(records, min_households: int = 10, h_mode: str = "weighted", length_rule: str = "reciprocal"):
    return netgraph.geodesic_all_pairs(network_graph(records, min_households, h_mode, length_rule))


def generate(config: SynthConfig | None = None) -> tuple[list[IndividualRecord], GroundTruth]:
    cfg = config or SynthConfig()
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    codes = occupation_codes(cfg.n_occupations)
    block_of = (np.arange(len(codes)) * cfg.n_blocks) // len(codes)
    truth = GroundTruth(
        {c: int(b) for c, b in zip(codes, block_of)},
        {
            "planted_beta_education": float(cfg.planted_beta_education),
            "planted_gamma_interaction": float(cfg.planted_gamma_interaction),
            "seed": cfg.seed,
            "n_households": cfg.n_households,
            "min_households": cfg.min_households,
            "length_rule": "reciprocal",
            "h_mode": "weighted",
            "origin_rule": "edu-then-age",
            "ed_mode": "signed",
        },
    )
    if cfg.n_households == 0:
        truth.params["dij_scale"] = 1.0
        return [], truth

    households = _draw_households(cfg, rng, codes, block_of)
    try:
        D = network_distances(_to_records(households), cfg.min_households)
    except ValueError:
        # every occupation is rarer than the filter threshold
        log.warning("synthetic network is empty; education drawn without planted slope")
        D = netgraph.DistanceMatrix((), np.zeros((0, 0)))
    dist_idx = D.index()

    # raw distance of every non-anchor worker to the anchor's occupation
    slots = []  # (household position, member position, raw distance)
    for hi, hh in enumerate(households):
        anchor = hh["members"][0].occupation
        for mi, m in enumerate(hh["members"][1:], start=1):
            if m.occupation is None:
                continue
            a, o = dist_idx.get(anchor), dist_idx.get(m.occupation)
            d = D.d[o, a] if a is not None and o is not None else math.inf
            slots.append((hi, mi, float(d)))

    finite = [(hi, mi, d) for hi, mi, d in slots if math.isfinite(d)]
    d_raw = np.array([d for _, _, d in finite])
    origin_of = np.array([households[hi]["members"][0].occupation for hi, _, _ in finite])
    centered = d_raw - pd.Series(d_raw).groupby(origin_of).transform("mean").to_numpy()
    within_sd = float(np.sqrt(np.mean(centered**2))) if centered.size else 0.0
    scale = cfg.distance_sd / within_sd if within_sd > 0 else 1.0
    truth.params["dij_scale"] = scale
    centered = centered * scale

    beta = cfg.planted_beta_education
    if beta != 0:
        kappa = 1.0 - (cfg.noise_sd / cfg.distance_sd) ** 2
        u_sd = math.sqrt(kappa * (1.0 - kappa)) * cfg.distance_sd / abs(beta)
        edu_cont = cfg.mean_education + (kappa / beta) * centered + rng.normal(0.0, u_sd, centered.size)
        free_sd = math.sqrt(kappa) * cfg.distance_sd / abs(beta)
        truth.params["kappa"] = kappa
    else:
        edu_cont = cfg.mean_education + rng.normal(0.0, cfg.education_sd, centered.size)
        free_sd = cfg.education_sd
    for (hi, mi, _), e in zip(finite, edu_cont):
        households[hi]["members"][mi].education = int(np.clip(round(e), 0, ingest.MAX_EDUCATION))

    finite_keys = {(hi, mi) for hi, mi, _ in finite}
    for hi, hh in enumerate(households):
        for mi, m in enumerate(hh["members"][1:], start=1):
            if (hi, mi) not in finite_keys:
                e = cfg.mean_education + rng.normal(0.0, free_sd)
                m.education = int(np.clip(round(e), 0, ingest.MAX_EDUCATION))
        anchor = hh["members"][0]
        floor = min((m.education for m in hh["members"][1:] if m.occupation is not None), default=ingest.MAX_EDUCATION)
        anchor.education = min(int(rng.integers(0, 4)), floor)

    _plant_mpce(cfg, rng, households, codes, D, scale, truth)
    return _to_records(households), truth


def _plant_mpce(cfg, rng, households, codes, D, scale, truth) -> None:
    """Choose occupation MPCE means so the interaction coefficient hits its target."""
    block_of = {c: b for c, b in truth.blocks.items()}
    base = np.array([1500.0 + 1000.0 * block_of[c] + rng.normal(0.0, 200.0) for c in codes])
    col = {c: j for j, c in enumerate(codes)}

    records = _to_records(households)
    hhs = ingest.group_households(records)
    origins = mobility.assign_origins(hhs)
    # placeholder MPCE: only the design matrix is needed here
    placeholder = {c: float(j) for j, c in enumerate(codes)}
    rows, _ = mobility.build_mobility_table(hhs, origins, D, placeholder, dij_scale=scale)
    m = base
    if len(rows) > 0:
        table = mobility.to_frame(rows)
        spec = regress.family_b_specs()[2]
        dm = regress.design_matrix(table, spec)
        if "d_ij*edu_years" in dm.labels and dm.X.shape[0] > dm.X.shape[1]:
            k = dm.labels.index("d_ij*edu_years")
            Q, R = np.linalg.qr(dm.X)
            ek = np.zeros(R.shape[0])
            ek[k] = 1.0
            ell = Q @ np.linalg.solve(R.T, ek)  # coef_k = ell . y
            sub = table.iloc[dm.rows]
            a = np.zeros(len(codes))
            np.add.at(a, [col[c] for c in sub["occupation"]], ell)
            np.add.at(a, [col[c] for c in sub["origin_occ"]], -ell)
            if a @ a > 0:
                m = base + (cfg.planted_gamma_interaction - a @ base) / (a @ a) * a
    # ED only sees differences, so a common shift keeps every draw positive
    m = m - m.min() + 500.0 + 6.0 * cfg.mpce_noise_sd
    truth.params["mpce_floor"] = float(m.min())

    for hh in households:
        anchor_mean = m[col[hh["members"][0].occupation]]
        for mem in hh["members"]:
            mean = m[col[mem.occupation]] if mem.occupation is not None else anchor_mean
            mem.mpce = max(0.0, mean + rng.normal(0.0, cfg.mpce_noise_sd))


def write_synth(records, truth: GroundTruth, out_csv: str | Path, truth_csv: str | Path | None = None) -> Path:
    out_csv = Path(out_csv)
    ingest.write_survey(records, out_csv)
    truth_path = Path(truth_csv) if truth_csv else out_csv.with_name(out_csv.stem + "_truth.csv")
    truth.write(truth_path)
    return truth_path


def within_block_rate(records, blocks: dict[str, int]) -> float:
    """Share of non-origin member slots whose occupation sits in the origin's block."""
    hhs = ingest.group_households(records)
    hits = total = 0
    for hh in hhs:
        origin = mobility.identify_traditional(hh)
        if origin is None:
            continue
        b = blocks[origin.origin_occupation]
        for m in hh.members:
            if m.person_id == origin.origin_person:
                continue
            total += 1
            hits += int(m.occupation is not None and blocks.get(m.occupation) == b)
    return hits / total if total else float("nan")


def planted_partition_graph(
    n_blocks: int = 4,
    block_size: int = 8,
    p_in: float = 0.3,
    p_out: float = 0.02,
    w_in: float = 1.0,
    w_out: float = 0.05,
    seed: int = 0,
) -> tuple[OccupationGraph, list[int]]:
    """Weighted planted-partition graph; returns the graph and block labels."""
    rng = np.random.default_rng(seed)
    n = n_blocks * block_size
    labels = [i // block_size for i in range(n)]
    nodes = tuple(f"n{i:03d}" for i in range(n))
    edges = []
    for i in range(n):
        for j in range(i + 1, n):
            same = labels[i] == labels[j]
            if rng.random() < (p_in if same else p_out):
                w = w_in if same else w_out
                edges.append(Edge(i, j, w, 1.0 / w))
    return OccupationGraph(nodes, tuple(edges), "reciprocal"), labels


def config_from_dict(values: dict) -> SynthConfig:
    known = {f for f in asdict(SynthConfig())}
    unknown = set(values) - known
    if unknown:
        raise ValueError(f"unknown synth options: {sorted(unknown)}")
    return replace(SynthConfig(), **values)
