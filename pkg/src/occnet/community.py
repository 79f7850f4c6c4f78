"""Multi-level modularity optimization (Louvain) on strength-weighted graphs."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import nco
from .netgraph import OccupationGraph

GAIN_TOL = 1e-9


@dataclass(frozen=True)
class CommunityPartition:
    assignment: dict[str, int]
    modularity: float
    levels: list[dict[str, int]] = field(default_factory=list)
    level_modularity: list[float] = field(default_factory=list)
    resolution: float = 1.0
    seed: int = 0

    @property
    def n_communities(self) -> int:
        return len(set(self.assignment.values()))

    def sizes(self) -> list[int]:
        counts = np.bincount(list(self.assignment.values()), minlength=self.n_communities)
        return [int(c) for c in counts]


def _modularity_matrix(W: np.ndarray, labels: np.ndarray, resolution: float = 1.0) -> float:
    two_m = W.sum()
    if two_m <= 0:
        return 0.0
    k = W.sum(axis=1)
    q = 0.0
    for c in np.unique(labels):
        members = labels == c
        sigma_in = W[np.ix_(members, members)].sum()
        sigma_tot = k[members].sum()
        q += sigma_in / two_m - resolution * (sigma_tot / two_m) ** 2
    return float(q)


def modularity(g: OccupationGraph, assignment: Mapping[str, int], resolution: float = 1.0) -> float:
    """Weighted modularity with edge strengths as weights (0 for an edgeless graph)."""
    missing = [n for n in g.nodes if n not in assignment]
    if missing:
        raise KeyError(f"nodes missing from assignment: {missing}")
    labels = np.array([assignment[n] for n in g.nodes])
    return _modularity_matrix(g.adjacency("strength"), labels, resolution)


def _local_moves(W: np.ndarray, rng: np.random.Generator, resolution: float) -> np.ndarray:
    """One level of greedy node moves; returns dense community labels."""
    n = W.shape[0]
    two_m = W.sum()
    labels = np.arange(n)
    if two_m <= 0:
        return labels
    k = W.sum(axis=1)
    self_w = np.diag(W).copy()
    tot = k.copy()  # total degree per community id
    scale = resolution / two_m

    improved = True
    sweeps = 0
    while improved and sweeps < 1000:
        improved = False
        sweeps += 1
        for i in rng.permutation(n):
            own = labels[i]
            # weight from i to each community, excluding i's self-loop
            links = np.bincount(labels, weights=W[i], minlength=n)
            links[own] -= self_w[i]
            tot[own] -= k[i]
            gains = links - scale * tot * k[i]
            candidates = np.unique(labels[W[i] > 0])
            best, best_gain = own, gains[own]
            for c in candidates:  # ascending id, strict improvement keeps the lowest on ties
                if gains[c] > best_gain + GAIN_TOL * max(k[i], 1e-300):
                    best, best_gain = c, gains[c]
            tot[best] += k[i]
            if best != own:
                labels[i] = best
                improved = True
    _, dense = np.unique(labels, return_inverse=True)
    return dense


def _aggregate(W: np.ndarray, labels: np.ndarray) -> np.ndarray:
    K = labels.max() + 1
    P = np.zeros((W.shape[0], K))
    P[np.arange(W.shape[0]), labels] = 1.0
    return P.T @ W @ P


def louvain(g: OccupationGraph, seed: int = 0, resolution: float = 1.0) -> CommunityPartition:
    """Louvain community detection, deterministic for a given seed.

    Each pass runs local moves in a seeded random node order, then collapses
    communities into super-nodes. Passes stop once modularity no longer
    improves by more than ``GAIN_TOL``.
    """
    n = len(g.nodes)
    if n == 0:
        return CommunityPartition({}, 0.0, resolution=resolution, seed=seed)
    rng = np.random.default_rng(seed)
    W = g.adjacency("strength")
    node_labels = np.arange(n)
    q = _modularity_matrix(W, node_labels, resolution)
    levels: list[dict[str, int]] = []
    level_q: list[float] = []

    current = W
    while True:
        labels = _local_moves(current, rng, resolution)
        candidate = labels[node_labels]
        q_new = _modularity_matrix(W, candidate, resolution)
        if q_new - q <= GAIN_TOL or labels.max() + 1 == current.shape[0]:
            break
        node_labels, q = candidate, q_new
        levels.append({code: int(c) for code, c in zip(g.nodes, node_labels)})
        level_q.append(q)
        current = _aggregate(current, labels)

    final = _canonical_labels(node_labels)
    assignment = {code: int(c) for code, c in zip(g.nodes, final)}
    return CommunityPartition(assignment, _modularity_matrix(W, final, resolution), levels, level_q, resolution, seed)


def _canonical_labels(labels: np.ndarray) -> np.ndarray:
    """Renumber communities 0..K-1 in order of first appearance."""
    mapping: dict[int, int] = {}
    out = np.empty_like(labels)
    for i, c in enumerate(labels):
        out[i] = mapping.setdefault(int(c), len(mapping))
    return out


def adjusted_rand_index(a: Sequence, b: Sequence) -> float:
    """Chance-corrected pair agreement between two labelings of the same items."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError("labelings differ in length")
    n = a.size
    if n < 2:
        return 1.0
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1))
    np.add.at(table, (ai, bi), 1)

    def pairs(x):
        return (x * (x - 1) / 2.0).sum()

    index = pairs(table)
    sum_a = pairs(table.sum(axis=1))
    sum_b = pairs(table.sum(axis=0))
    expected = sum_a * sum_b / (n * (n - 1) / 2.0)
    max_index = (sum_a + sum_b) / 2.0
    if max_index == expected:
        return 1.0
    return float((index - expected) / (max_index - expected))


def write_communities(p: CommunityPartition, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["occ2", "community_id", "occupation_title"])
        for code in sorted(p.assignment):
            w.writerow([code, p.assignment[code], nco.title(code)])


def read_communities(path: str | Path) -> dict[str, int]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return {r["occ2"]: int(r["community_id"]) for r in csv.DictReader(fh)}


def summary(p: CommunityPartition) -> str:
    lines = [
        "[communities]",
        f"communities = {p.n_communities}",
        f"modularity = {p.modularity:.6f}",
        f"resolution = {p.resolution!r}",
        f"seed = {p.seed}",
        f"sizes = {' '.join(str(s) for s in p.sizes())}",
        f"pass_modularity = {' '.join(f'{q:.6f}' for q in p.level_modularity)}",
    ]
    return "\n".join(lines) + "\n"
