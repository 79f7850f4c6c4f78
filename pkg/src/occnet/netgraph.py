"""Occupational graph from chi-square strengths, and geodesic social distances."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Sequence

import networkx as nx
import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from .project import StrengthMatrix

LengthRule = Literal["reciprocal", "neglog", "unit"]
LENGTH_RULES = ("reciprocal", "neglog", "unit")


@dataclass(frozen=True)
class Edge:
    i: int
    j: int
    strength: float
    length: float


@dataclass(frozen=True)
class OccupationGraph:
    nodes: tuple[str, ...]
    edges: tuple[Edge, ...]
    length_rule: str = "reciprocal"

    def strengths(self) -> np.ndarray:
        return np.array([e.strength for e in self.edges], dtype=float)

    def adjacency(self, attr: str = "strength") -> np.ndarray:
        n = len(self.nodes)
        W = np.zeros((n, n))
        for e in self.edges:
            W[e.i, e.j] = W[e.j, e.i] = getattr(e, attr)
        return W


@dataclass(frozen=True)
class DistanceMatrix:
    nodes: tuple[str, ...]
    d: np.ndarray

    def index(self) -> dict[str, int]:
        return {code: i for i, code in enumerate(self.nodes)}

    def get(self, a: str, b: str) -> float:
        idx = self.index()
        return float(self.d[idx[a], idx[b]])


def edge_length(strength: float, rule: str) -> float:
    if rule == "reciprocal":
        return 1.0 / strength
    if rule == "neglog":
        # V/(V+1) lies in (0, 1) for V > 0
        return -math.log(strength / (strength + 1.0))
    if rule == "unit":
        return 1.0
    raise ValueError(f"unknown length rule {rule!r}")


def to_graph(s: StrengthMatrix, length_rule: str = "reciprocal") -> OccupationGraph:
    """One undirected edge per pair with positive strength.

    Pairs at or below independence (V <= 0) carry no tie.
    """
    if length_rule not in LENGTH_RULES:
        raise ValueError(f"unknown length rule {length_rule!r}")
    V = s.V
    n = len(s.occupations)
    edges = []
    for i in range(n):
        for j in range(i + 1, n):
            v = float(V[i, j])
            if v > 0:
                edges.append(Edge(i, j, v, edge_length(v, length_rule)))
    return OccupationGraph(tuple(s.occupations), tuple(edges), length_rule)


def from_edges(nodes: Sequence[str], edges: Sequence[tuple[str, str, float]], length_rule: str = "reciprocal") -> OccupationGraph:
    idx = {c: k for k, c in enumerate(nodes)}
    out = []
    for a, b, v in edges:
        i, j = sorted((idx[a], idx[b]))
        out.append(Edge(i, j, float(v), edge_length(float(v), length_rule)))
    out.sort(key=lambda e: (e.i, e.j))
    return OccupationGraph(tuple(nodes), tuple(out), length_rule)


def geodesic_all_pairs(g: OccupationGraph) -> DistanceMatrix:
    """All-pairs shortest path lengths; +inf between components."""
    n = len(g.nodes)
    if n == 0:
        return DistanceMatrix((), np.zeros((0, 0)))
    rows = [e.i for e in g.edges] + [e.j for e in g.edges]
    cols = [e.j for e in g.edges] + [e.i for e in g.edges]
    data = [e.length for e in g.edges] * 2
    graph = csr_matrix((data, (rows, cols)), shape=(n, n))
    d = dijkstra(graph, directed=False)
    d = np.minimum(d, d.T)
    np.fill_diagonal(d, 0.0)
    return DistanceMatrix(g.nodes, d)


def strength_quantile(g: OccupationGraph, q: float) -> float:
    """q-quantile of edge strengths, linear interpolation between order statistics."""
    if not 0.0 <= q <= 1.0:
        raise ValueError("q must lie in [0, 1]")
    s = g.strengths()
    if s.size == 0:
        raise ValueError("graph has no edges")
    return float(np.quantile(s, q, method="linear"))


def write_distances(D: DistanceMatrix, path: str | Path) -> None:
    """Long format, one row per unordered pair plus the diagonal; 'inf' when disconnected."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["occ_i", "occ_j", "distance"])
        n = len(D.nodes)
        for i in range(n):
            for j in range(i, n):
                w.writerow([D.nodes[i], D.nodes[j], repr(float(D.d[i, j]))])


def read_distances(path: str | Path) -> DistanceMatrix:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    codes = sorted({r["occ_i"] for r in rows} | {r["occ_j"] for r in rows})
    idx = {c: k for k, c in enumerate(codes)}
    d = np.full((len(codes), len(codes)), np.inf)
    for r in rows:
        i, j = idx[r["occ_i"]], idx[r["occ_j"]]
        d[i, j] = d[j, i] = float(r["distance"])
    return DistanceMatrix(tuple(codes), d)


def write_distance_matrix(D: DistanceMatrix, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["occ", *D.nodes])
        for code, row in zip(D.nodes, D.d):
            w.writerow([code, *(repr(float(x)) for x in row)])


def write_edge_list(g: OccupationGraph, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["occ_i", "occ_j", "strength", "length"])
        for e in g.edges:
            w.writerow([g.nodes[e.i], g.nodes[e.j], repr(e.strength), repr(e.length)])


def to_networkx(g: OccupationGraph) -> nx.Graph:
    G = nx.Graph(length_rule=g.length_rule)
    G.add_nodes_from(g.nodes)
    for e in g.edges:
        G.add_edge(g.nodes[e.i], g.nodes[e.j], strength=e.strength, length=e.length)
    return G


def write_graphml(g: OccupationGraph, path: str | Path) -> None:
    nx.write_graphml(to_networkx(g), str(path))
