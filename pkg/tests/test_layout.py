import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from occnet import layout
from occnet.layout import fruchterman_reingold, render_svg
from occnet.netgraph import from_edges

SVG = "{http://www.w3.org/2000/svg}"


def reference_fr(nodes, edges, frame, iterations, start):
    """Per-node loop version of the documented update rule."""
    W, H = frame
    n = len(nodes)
    pos = [list(p) for p in start]
    k = math.sqrt(W * H / n)
    mean_s = sum(s for _, _, s in edges) / len(edges) if edges else 1.0
    for it in range(iterations):
        t = (W / 10) * (1 - it / iterations)
        disp = [[0.0, 0.0] for _ in range(n)]
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                dx, dy = pos[i][0] - pos[j][0], pos[i][1] - pos[j][1]
                d = max(math.hypot(dx, dy), 1e-9)
                f = k * k / d
                disp[i][0] += dx / d * f
                disp[i][1] += dy / d * f
        for i, j, s in edges:
            dx, dy = pos[i][0] - pos[j][0], pos[i][1] - pos[j][1]
            d = max(math.hypot(dx, dy), 1e-9)
            f = d * d / k * (s / mean_s)
            disp[i][0] -= dx / d * f
            disp[i][1] -= dy / d * f
            disp[j][0] += dx / d * f
            disp[j][1] += dy / d * f
        for i in range(n):
            L = max(math.hypot(*disp[i]), 1e-12)
            step = min(L, t)
            pos[i][0] += disp[i][0] / L * step
            pos[i][1] += disp[i][1] / L * step
        cx = sum(p[0] for p in pos) / n
        cy = sum(p[1] for p in pos) / n
        for p in pos:
            p[0] = min(max(p[0] + W / 2 - cx, 0.0), W)
            p[1] = min(max(p[1] + H / 2 - cy, 0.0), H)
    return pos


def test_single_node_centered():
    r = fruchterman_reingold(from_edges(["a"], []), frame=(800, 600), seed=4)
    assert r.positions["a"] == (400.0, 300.0)


@pytest.mark.parametrize("seed", range(5))
def test_two_nodes(seed):
    frame = (1000.0, 1000.0)
    r = fruchterman_reingold(from_edges(["a", "b"], [("a", "b", 1.0)]), frame=frame, seed=seed)
    k = math.sqrt(frame[0] * frame[1] / 2)
    (ax, ay), (bx, by) = r.positions["a"], r.positions["b"]
    sep = math.hypot(ax - bx, ay - by)
    assert 0.5 * k <= sep <= 2 * k
    assert abs((ax + bx) / 2 - 500) <= 1e-6 and abs((ay + by) / 2 - 500) <= 1e-6


def test_path_symmetry():
    r = fruchterman_reingold(from_edges(list("abc"), [("a", "b", 1.0), ("b", "c", 1.0)]), iterations=500, seed=1)
    p = {n: np.array(v) for n, v in r.positions.items()}
    dab, dbc = np.linalg.norm(p["a"] - p["b"]), np.linalg.norm(p["b"] - p["c"])
    assert abs(dab - dbc) <= 0.05 * max(dab, dbc)


@settings(max_examples=15, deadline=None)
@given(st.integers(2, 7), st.integers(0, 50), st.integers(1, 40))
def test_matches_reference_loop(n, seed, iterations):
    nodes = [f"{i:02d}" for i in range(n)]
    edges = [(nodes[i], nodes[(i + 1) % n], 1.0 + i) for i in range(n - 1)]
    g = from_edges(nodes, edges)
    frame = (300.0, 200.0)
    r = fruchterman_reingold(g, frame=frame, iterations=iterations, seed=seed)
    start = np.random.default_rng(seed).uniform([0, 0], frame, size=(n, 2))
    ref = reference_fr(nodes, [(e.i, e.j, e.strength) for e in g.edges], frame, iterations, start)
    np.testing.assert_allclose([r.positions[c] for c in nodes], ref, atol=1e-6)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 15), st.integers(0, 10**6), st.floats(10, 2000), st.floats(10, 2000))
def test_positions_inside_frame_and_deterministic(n, seed, W, H):
    nodes = [f"{i:02d}" for i in range(n)]
    g = from_edges(nodes, [(nodes[i], nodes[i + 1], 1.0) for i in range(n - 1)])
    a = fruchterman_reingold(g, frame=(W, H), iterations=60, seed=seed)
    b = fruchterman_reingold(g, frame=(W, H), iterations=60, seed=seed)
    assert a == b
    for x, y in a.positions.values():
        assert 0 <= x <= W and 0 <= y <= H


def _quartile_graph():
    return from_edges(list("abcde"), [("a", "b", 1.0), ("b", "c", 2.0), ("c", "d", 3.0), ("d", "e", 4.0)])


def _parse(svg):
    root = ET.fromstring(svg.encode("utf-8"))
    lines = root.findall(f".//{SVG}line")
    ids = [el.get("id") for el in root.iter() if el.get("id", "").startswith("node-")]
    return root, lines, ids


def test_svg_threshold_one_edge():
    g = _quartile_graph()
    r = fruchterman_reingold(g, iterations=50)
    _, lines, ids = _parse(render_svg(g, r, {n: 0 for n in g.nodes}, 3.25))
    assert [ln.get("id") for ln in lines] == ["edge-d-e"]
    assert sorted(ids) == [f"node-{n}" for n in "abcde"]


def test_svg_all_edges_and_monotone_stroke():
    g = _quartile_graph()
    r = fruchterman_reingold(g, iterations=50)
    _, lines, _ = _parse(render_svg(g, r, None, 0.5))
    widths = [float(ln.get("stroke-width")) for ln in lines]
    assert len(lines) == 4
    assert widths == sorted(widths) and widths[0] == layout.MIN_STROKE and widths[-1] == layout.MAX_STROKE


def test_svg_nodes_only():
    g = _quartile_graph()
    r = fruchterman_reingold(g, iterations=10)
    root, lines, ids = _parse(render_svg(g, r, None, 10.0))
    assert lines == [] and len(ids) == 5 and root.tag == f"{SVG}svg"


def test_svg_byte_identical_and_colours():
    g = _quartile_graph()
    part = {"a": 0, "b": 0, "c": 1, "d": 1, "e": 2}
    svg1 = render_svg(g, fruchterman_reingold(g, seed=9), part, 1.5)
    svg2 = render_svg(g, fruchterman_reingold(g, seed=9), part, 1.5)
    assert svg1 == svg2
    root, _, _ = _parse(svg1)
    fills = {el.get("id"): el.find(f"{SVG}circle").get("fill") for el in root.iter() if el.get("id", "").startswith("node-")}
    assert fills["node-a"] == fills["node-b"] != fills["node-c"] == fills["node-d"] != fills["node-e"]


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 10), st.floats(0, 10), st.floats(0.01, 5), st.floats(0.01, 5))
def test_stroke_monotone(a, b, lo, span):
    hi = lo + span
    a, b = sorted((min(max(a, lo), hi), min(max(b, lo), hi)))
    assert layout.stroke_width(a, lo, hi) <= layout.stroke_width(b, lo, hi) + 1e-12


def test_positions_round_trip(tmp_path):
    g = _quartile_graph()
    r = fruchterman_reingold(g, iterations=20)
    layout.write_positions(r, tmp_path / "p.csv")
    assert layout.read_positions(tmp_path / "p.csv", r.frame).positions == r.positions
