"""Household x occupation incidence and its weighted one-mode projection.

The occupation-by-occupation co-membership mass is

    U[i, j] = sum_k A[k, i] * A[k, j] * W[k]

and the chi-square style strength compares it with its expectation under
independence, ``(U[i, j] - h_i h_j / h) / (h_i h_j / h)`` with ``h_i = U[i, i]``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Literal, Sequence

import numpy as np
import scipy.sparse as sp

from .ingest import Household

HMode = Literal["weighted", "count"]


@dataclass(frozen=True)
class IncidenceMatrix:
    households: tuple[str, ...]
    occupations: tuple[str, ...]
    entries: sp.csr_matrix  # h x c, 0/1
    weights: np.ndarray  # length h, positive

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape


@dataclass(frozen=True)
class StrengthMatrix:
    occupations: tuple[str, ...]
    U: np.ndarray
    V: np.ndarray
    total_weight: float

    def index(self) -> dict[str, int]:
        return {code: i for i, code in enumerate(self.occupations)}


def build_incidence(households: Iterable[Household], surviving_codes: Iterable[str]) -> IncidenceMatrix:
    """Binary affiliation of households to surviving occupation codes.

    Households whose occupation set has no surviving code are left out.
    Occupations are ordered by code, households by input order.
    """
    codes = tuple(sorted(set(surviving_codes)))
    if not codes:
        raise ValueError("no surviving occupation codes")
    col = {c: j for j, c in enumerate(codes)}

    hh_ids, weights, rows, cols = [], [], [], []
    for hh in households:
        present = sorted(col[c] for c in hh.occupation_set if c in col)
        if not present:
            continue
        k = len(hh_ids)
        hh_ids.append(hh.household_id)
        weights.append(hh.weight)
        rows.extend([k] * len(present))
        cols.extend(present)

    data = np.ones(len(rows), dtype=np.int8)
    A = sp.csr_matrix((data, (rows, cols)), shape=(len(hh_ids), len(codes)))
    # unused codes would give an all-zero column
    used = np.asarray(A.sum(axis=0)).ravel() > 0
    if not used.all():
        keep = np.flatnonzero(used)
        A = A[:, keep].tocsr()
        codes = tuple(codes[j] for j in keep)
    return IncidenceMatrix(tuple(hh_ids), codes, A, np.asarray(weights, dtype=float))


def project_unimodal(m: IncidenceMatrix) -> np.ndarray:
    """Weighted co-membership matrix ``U = A^T diag(W) A`` (dense, c x c)."""
    A = m.entries.astype(float)
    WA = sp.diags(m.weights) @ A
    U = (A.T @ WA).toarray()
    # exact symmetry regardless of summation order
    return np.triu(U) + np.triu(U, 1).T


def total_weight(m: IncidenceMatrix, h_mode: HMode = "weighted") -> float:
    if h_mode == "weighted":
        return float(m.weights.sum())
    if h_mode == "count":
        return float(m.shape[0])
    raise ValueError(f"unknown h_mode {h_mode!r}")


def normalize_chi_square(U: np.ndarray, total_weight: float, occupations: Sequence[str] | None = None) -> np.ndarray:
    """Observed-minus-expected over expected, with expectations from the diagonal."""
    if total_weight <= 0:
        raise ValueError("total_weight must be positive")
    h = np.diag(U).astype(float)
    if np.any(h <= 0):
        bad = int(np.flatnonzero(h <= 0)[0])
        name = occupations[bad] if occupations is not None else str(bad)
        raise ValueError(f"zero diagonal in co-membership matrix for occupation {name}")
    expected = np.outer(h, h) / total_weight
    V = (U - expected) / expected
    return np.triu(V) + np.triu(V, 1).T


def strength_matrix(m: IncidenceMatrix, h_mode: HMode = "weighted") -> StrengthMatrix:
    U = project_unimodal(m)
    h = total_weight(m, h_mode)
    return StrengthMatrix(m.occupations, U, normalize_chi_square(U, h, m.occupations), h)


def write_edges(s: StrengthMatrix, path: str | Path) -> None:
    """Long-format export of the upper triangle (diagonal included).

    Diagonal rows carry ``h_i`` so the file alone reconstructs the matrices.
    """
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["occ_i", "occ_j", "U_ij", "V_ij"])
        n = len(s.occupations)
        for i in range(n):
            for j in range(i, n):
                w.writerow([s.occupations[i], s.occupations[j], repr(float(s.U[i, j])), repr(float(s.V[i, j]))])


def read_edges(path: str | Path) -> StrengthMatrix:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    codes = sorted({r["occ_i"] for r in rows} | {r["occ_j"] for r in rows})
    idx = {c: i for i, c in enumerate(codes)}
    n = len(codes)
    U = np.zeros((n, n))
    V = np.zeros((n, n))
    for r in rows:
        i, j = idx[r["occ_i"]], idx[r["occ_j"]]
        U[i, j] = U[j, i] = float(r["U_ij"])
        V[i, j] = V[j, i] = float(r["V_ij"])
    h_i = np.diag(U)
    # V_ii = (h - h_i) / h_i
    h = float(np.median(h_i * (np.diag(V) + 1.0))) if n else 0.0
    return StrengthMatrix(tuple(codes), U, V, h)


def write_matrix(s: StrengthMatrix, path: str | Path, which: str = "V") -> None:
    M = s.V if which == "V" else s.U
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["occ", *s.occupations])
        for code, row in zip(s.occupations, M):
            w.writerow([code, *(repr(float(x)) for x in row)])


def read_matrix(path: str | Path) -> tuple[tuple[str, ...], np.ndarray]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    codes = tuple(rows[0][1:])
    M = np.array([[float(x) for x in r[1:]] for r in rows[1:]])
    return codes, M
