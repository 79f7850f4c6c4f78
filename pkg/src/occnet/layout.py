"""Fruchterman-Reingold placement and SVG rendering of the occupational network."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping
from xml.sax.saxutils import escape

import numpy as np

from . import nco
from .netgraph import OccupationGraph

PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
)
MIN_STROKE = 0.5
MAX_STROKE = 6.0


@dataclass(frozen=True)
class LayoutResult:
    positions: dict[str, tuple[float, float]]
    frame: tuple[float, float]
    iterations: int
    seed: int


def fruchterman_reingold(
    g: OccupationGraph,
    frame: tuple[float, float] = (1000.0, 1000.0),
    iterations: int = 500,
    seed: int = 0,
    C: float = 1.0,
) -> LayoutResult:
    """Classic force-directed placement.

    Repulsion k^2/d between every pair, attraction d^2/k along edges scaled by
    the edge strength relative to the mean strength, displacement capped by a
    temperature falling linearly from W/10 to 0. The layout is re-centred on
    the frame every step and clamped to it.
    """
    W, H = map(float, frame)
    if W <= 0 or H <= 0:
        raise ValueError("frame dimensions must be positive")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    n = len(g.nodes)
    center = np.array([W / 2.0, H / 2.0])
    if n == 0:
        return LayoutResult({}, (W, H), iterations, seed)
    rng = np.random.default_rng(seed)
    pos = rng.uniform([0.0, 0.0], [W, H], size=(n, 2)) if n > 1 else center[None, :].copy()
    k = C * np.sqrt(W * H / n)

    ei = np.array([e.i for e in g.edges], dtype=int)
    ej = np.array([e.j for e in g.edges], dtype=int)
    s = g.strengths()
    weight = s / s.mean() if s.size else s

    t0 = W / 10.0
    for it in range(iterations):
        t = t0 * (1.0 - it / iterations)
        delta = pos[:, None, :] - pos[None, :, :]
        dist = np.linalg.norm(delta, axis=-1)
        np.fill_diagonal(dist, 1.0)
        dist = np.maximum(dist, 1e-9)
        rep = (k * k / dist**2)[:, :, None] * delta
        rep[np.arange(n), np.arange(n)] = 0.0
        disp = rep.sum(axis=1)
        if ei.size:
            d = pos[ei] - pos[ej]
            dl = np.maximum(np.linalg.norm(d, axis=1), 1e-9)
            att = ((dl * weight / k)[:, None]) * d  # (d^2/k) * unit vector
            np.add.at(disp, ei, -att)
            np.add.at(disp, ej, att)
        length = np.maximum(np.linalg.norm(disp, axis=1), 1e-12)
        pos += disp / length[:, None] * np.minimum(length, t)[:, None]
        pos += center - pos.mean(axis=0)
        np.clip(pos, [0.0, 0.0], [W, H], out=pos)

    positions = {code: (float(x), float(y)) for code, (x, y) in zip(g.nodes, pos)}
    return LayoutResult(positions, (W, H), iterations, seed)


def stroke_width(strength: float, lo: float, hi: float) -> float:
    if hi <= lo:
        return (MIN_STROKE + MAX_STROKE) / 2.0
    return MIN_STROKE + (MAX_STROKE - MIN_STROKE) * (strength - lo) / (hi - lo)


def render_svg(
    g: OccupationGraph,
    layout: LayoutResult,
    partition: Mapping[str, int] | None = None,
    strength_threshold: float = float("-inf"),
    node_radius: float = 12.0,
) -> str:
    """SVG 1.1 document: community-coloured nodes, edges above the threshold."""
    missing = [n for n in g.nodes if n not in layout.positions]
    if missing:
        raise KeyError(f"layout lacks positions for {missing}")
    W, H = layout.frame
    pad = 2 * node_radius
    drawn = [e for e in g.edges if e.strength > strength_threshold]
    if drawn:
        lo = min(e.strength for e in drawn)
        hi = max(e.strength for e in drawn)

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{W + 2 * pad:.0f}" height="{H + 2 * pad:.0f}" '
        f'viewBox="{-pad:.2f} {-pad:.2f} {W + 2 * pad:.2f} {H + 2 * pad:.2f}">',
        '<g id="edges" stroke="#555555" stroke-opacity="0.6">',
    ]
    for e in drawn:
        a, b = g.nodes[e.i], g.nodes[e.j]
        (x1, y1), (x2, y2) = layout.positions[a], layout.positions[b]
        out.append(
            f'<line id="edge-{escape(a)}-{escape(b)}" x1="{x1:.3f}" y1="{y1:.3f}" x2="{x2:.3f}" y2="{y2:.3f}" '
            f'stroke-width="{stroke_width(e.strength, lo, hi):.3f}"/>'
        )
    out.append("</g>")
    out.append('<g id="nodes" font-family="sans-serif" font-size="10" text-anchor="middle">')
    for code in g.nodes:
        x, y = layout.positions[code]
        community = partition.get(code, -1) if partition else 0
        fill = PALETTE[community % len(PALETTE)] if community >= 0 else "#cccccc"
        label = escape(code)
        out.append(
            f'<g id="node-{label}"><title>{label} {escape(nco.title(code))}</title>'
            f'<circle cx="{x:.3f}" cy="{y:.3f}" r="{node_radius:.1f}" fill="{fill}" stroke="#222222"/>'
            f'<text x="{x:.3f}" y="{y + 3.5:.3f}">{label}</text></g>'
        )
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_positions(layout: LayoutResult, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["occ2", "x", "y"])
        for code in sorted(layout.positions):
            x, y = layout.positions[code]
            w.writerow([code, repr(x), repr(y)])


def read_positions(path: str | Path, frame: tuple[float, float], iterations: int = 0, seed: int = 0) -> LayoutResult:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        pos = {r["occ2"]: (float(r["x"]), float(r["y"])) for r in csv.DictReader(fh)}
    return LayoutResult(pos, frame, iterations, seed)
