"""File-based pipeline stages with a shared run manifest.

Every stage reads its inputs from files, writes its outputs into the output
directory and records options, input digests and a short report section in
``manifest.json``. ``report.txt`` is regenerated from the manifest after each
stage, so running the stages one by one gives the same tree as ``pipeline``.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import re
import shutil
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__, community, ingest, layout, mobility, netgraph, project, regress

log = logging.getLogger(__name__)

MANIFEST = "manifest.json"
REPORT = "report.txt"
FAILED = "FAILED"
EDGES = "edges.csv"
DISTANCES = "distances.csv"
COMMUNITIES = "communities.csv"
POSITIONS = "layout.csv"
SVG = "network.svg"
MOBILITY = "mobility.csv"
TABLE_TXT = "regression.txt"
TABLE_CSV = "regression.csv"
GROUPS_DIR = "groups"

STAGE_ORDER = ("network", "distances", "communities", "layout", "mobility", "regress")
GROUPABLE = ("social_group", "state", "urban")


class StageError(Exception):
    """Input or usage problem inside a stage (maps to exit code 2)."""

    def __init__(self, stage: str, message: str):
        self.stage = stage
        super().__init__(f"[{stage}] {message}")


@dataclass
class RunOptions:
    min_households: int = 10
    h_mode: str = "weighted"
    length_rule: str = "reciprocal"
    seed: int = 0
    resolution: float = 1.0
    iterations: int = 500
    frame: tuple[float, float] = (1000.0, 1000.0)
    edge_quantile: float = 0.75
    origin_rule: str = "edu-then-age"
    ed_mode: str = "signed"
    dij_scale: float = 1.0
    include_origin: bool = False
    weighted: bool = False
    cluster: str | None = None
    group_by: str | None = None
    strict: bool = False
    deterministic: bool = False
    force: bool = False
    columns: dict[str, str] = field(default_factory=dict)
    reference_levels: dict[str, str] = field(default_factory=dict)
    model_a: list[list[str]] | None = None
    model_b: list[list[str]] | None = None


def file_digest(path: Path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _slug(value: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]", "_", str(value)) or "_"


# -- manifest -----------------------------------------------------------------


def read_manifest(out: Path) -> dict:
    path = out / MANIFEST
    if path.is_file():
        return json.loads(path.read_text(encoding="utf-8"))
    return {"tool": "occnet", "version": __version__, "stages": {}}


def _manifest_digest(manifest: dict) -> str:
    core = {
        name: {k: v for k, v in entry.items() if k in ("options", "inputs")}
        for name, entry in manifest["stages"].items()
    }
    return hashlib.sha256(json.dumps(core, sort_keys=True).encode()).hexdigest()


def _write_manifest(out: Path, manifest: dict) -> None:
    manifest["version"] = __version__
    manifest["digest"] = _manifest_digest(manifest)
    seeds = sorted({e["options"]["seed"] for e in manifest["stages"].values() if "seed" in e["options"]})
    manifest["seeds"] = seeds
    text = json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    (out / MANIFEST).write_text(text, encoding="utf-8")
    sections = [manifest["stages"][s]["report"] for s in STAGE_ORDER if s in manifest["stages"]]
    (out / REPORT).write_text("\n".join(sections), encoding="utf-8")


def _run_stage(
    stage: str,
    out: Path,
    opts: RunOptions,
    options: dict,
    inputs: dict[str, Path],
    body: Callable[[], tuple[list[Path], str]],
) -> bool:
    """Run ``body`` unless an identical earlier run is recorded; returns True if executed."""
    out.mkdir(parents=True, exist_ok=True)
    for name, path in inputs.items():
        if not Path(path).is_file():
            raise StageError(stage, f"missing input {name}: {path}")
    entry = {
        "options": options,
        "inputs": {Path(p).name if name == "survey" else name: file_digest(Path(p)) for name, p in sorted(inputs.items())},
    }
    manifest = read_manifest(out)
    prev = manifest["stages"].get(stage)
    if (
        not opts.force
        and prev
        and prev.get("options") == entry["options"]
        and prev.get("inputs") == entry["inputs"]
        and all((out / rel).is_file() and file_digest(out / rel) == dg for rel, dg in prev.get("outputs", {}).items())
    ):
        log.info("%s: inputs unchanged, reusing outputs", stage)
        return False
    marker = out / FAILED
    try:
        outputs, report = body()
    except Exception as exc:
        marker.write_text(f"stage: {stage}\nerror: {exc}\n", encoding="utf-8")
        raise
    if marker.is_file():
        marker.unlink()
    entry["outputs"] = {str(p.relative_to(out)): file_digest(p) for p in sorted(outputs)}
    entry["report"] = report
    if not opts.deterministic:
        entry["finished_at"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
    manifest = read_manifest(out)
    manifest["stages"][stage] = entry
    _write_manifest(out, manifest)
    return True


# -- helpers ------------------------------------------------------------------


def _load(stage: str, survey: Path, opts: RunOptions):
    try:
        records, load_report = ingest.load_survey(survey, opts.columns or None, strict=opts.strict)
        households = ingest.group_households(records)
    except FileNotFoundError as exc:
        raise StageError(stage, str(exc)) from None
    except (ingest.SurveyFormatError, ingest.RowError, ingest.HouseholdConflictError) as exc:
        raise StageError(stage, str(exc)) from None
    return records, load_report, households


def _group_values(households, group_by: str | None) -> list[str]:
    if not group_by:
        return []
    if group_by not in GROUPABLE:
        raise StageError("network", f"--group-by must be one of {GROUPABLE}")
    values = sorted({str(getattr(hh, group_by)) for hh in households})
    return values if len(values) > 1 else []


def network_dirs(out: Path) -> list[Path]:
    dirs = [out]
    gdir = out / GROUPS_DIR
    if gdir.is_dir():
        dirs += sorted(p for p in gdir.iterdir() if (p / EDGES).is_file())
    return dirs


def _build_strengths(households, opts: RunOptions):
    filtered, dropped = ingest.filter_rare_occupations(households, opts.min_households)
    surviving = {c for hh in filtered for c in hh.occupation_set}
    if not surviving:
        raise StageError("network", "no occupation survives the rare-occupation filter")
    inc = project.build_incidence(filtered, surviving)
    return project.strength_matrix(inc, opts.h_mode), dropped, inc


# -- stages -------------------------------------------------------------------


def stage_network(survey: Path, out: Path, opts: RunOptions) -> bool:
    options = {
        "min_households": opts.min_households, "h_mode": opts.h_mode, "group_by": opts.group_by,
        "columns": dict(sorted(opts.columns.items())), "strict": opts.strict,
    }

    def body():
        records, load_report, households = _load("network", survey, opts)
        s, dropped, inc = _build_strengths(households, opts)
        project.write_edges(s, out / EDGES)
        outputs = [out / EDGES]
        lines = [
            ingest.ingest_report(load_report, households, dropped, opts.min_households),
            "[network]",
            f"occupations = {len(s.occupations)}",
            f"households_in_incidence = {inc.shape[0]}",
            f"total_weight = {s.total_weight!r}",
            f"h_mode = {opts.h_mode}",
        ]
        groups = _group_values(households, opts.group_by)
        if not groups and (out / GROUPS_DIR).is_dir():
            shutil.rmtree(out / GROUPS_DIR)
        for g in groups:
            members = [hh for hh in households if str(getattr(hh, opts.group_by)) == g]
            gdir = out / GROUPS_DIR / _slug(g)
            gdir.mkdir(parents=True, exist_ok=True)
            gs, gdropped, ginc = _build_strengths(members, opts)
            project.write_edges(gs, gdir / EDGES)
            outputs.append(gdir / EDGES)
            lines.append(f"group {opts.group_by}={g}: households = {len(members)}, occupations = {len(gs.occupations)}, "
                         f"dropped = {' '.join(sorted(gdropped)) or '(none)'}")
        return outputs, "\n".join(lines) + "\n"

    return _run_stage("network", out, opts, options, {"survey": survey}, body)


def stage_distances(out: Path, opts: RunOptions) -> bool:
    options = {"length_rule": opts.length_rule}
    dirs = network_dirs(out)
    inputs = {str((d / EDGES).relative_to(out)): d / EDGES for d in dirs}
    if not (out / EDGES).is_file():
        raise StageError("distances", f"missing prerequisite {out / EDGES} (run 'network' first)")

    def body():
        outputs, lines = [], ["[distances]", f"length_rule = {opts.length_rule}"]
        for d in dirs:
            g = netgraph.to_graph(project.read_edges(d / EDGES), opts.length_rule)
            D = netgraph.geodesic_all_pairs(g)
            netgraph.write_distances(D, d / DISTANCES)
            outputs.append(d / DISTANCES)
            n = len(D.nodes)
            off = D.d[~np.eye(n, dtype=bool)] if n else np.array([])
            disconnected = int(np.isinf(off).sum() // 2)
            finite = off[np.isfinite(off)]
            tag = "all" if d == out else d.name
            lines.append(
                f"{tag}: nodes = {n}, edges = {len(g.edges)}, disconnected_pairs = {disconnected}, "
                f"max_finite = {float(finite.max()) if finite.size else math.nan:.6g}"
            )
        return outputs, "\n".join(lines) + "\n"

    return _run_stage("distances", out, opts, options, inputs, body)


def stage_communities(out: Path, opts: RunOptions) -> bool:
    options = {"seed": opts.seed, "resolution": opts.resolution}
    dirs = network_dirs(out)
    if not (out / EDGES).is_file():
        raise StageError("communities", f"missing prerequisite {out / EDGES} (run 'network' first)")
    inputs = {str((d / EDGES).relative_to(out)): d / EDGES for d in dirs}

    def body():
        outputs, sections = [], []
        for d in dirs:
            g = netgraph.to_graph(project.read_edges(d / EDGES), "unit")
            p = community.louvain(g, seed=opts.seed, resolution=opts.resolution)
            community.write_communities(p, d / COMMUNITIES)
            outputs.append(d / COMMUNITIES)
            text = community.summary(p)
            if d != out:
                text = text.replace("[communities]", f"[communities {d.name}]")
            sections.append(text)
        return outputs, "".join(sections)

    return _run_stage("communities", out, opts, options, inputs, body)


def stage_layout(out: Path, opts: RunOptions) -> bool:
    options = {
        "seed": opts.seed, "iterations": opts.iterations, "frame": list(opts.frame),
        "edge_quantile": opts.edge_quantile,
    }
    dirs = network_dirs(out)
    inputs = {}
    for d in dirs:
        for name in (EDGES, COMMUNITIES):
            if not (d / name).is_file():
                raise StageError("layout", f"missing prerequisite {d / name}")
            inputs[str((d / name).relative_to(out))] = d / name

    def body():
        outputs, lines = [], ["[layout]", f"iterations = {opts.iterations}", f"edge_quantile = {opts.edge_quantile!r}"]
        for d in dirs:
            g = netgraph.to_graph(project.read_edges(d / EDGES), "unit")
            parts = community.read_communities(d / COMMUNITIES)
            lay = layout.fruchterman_reingold(g, opts.frame, opts.iterations, opts.seed)
            threshold = netgraph.strength_quantile(g, opts.edge_quantile) if g.edges else math.inf
            (d / SVG).write_text(layout.render_svg(g, lay, parts, threshold), encoding="utf-8")
            layout.write_positions(lay, d / POSITIONS)
            outputs += [d / POSITIONS, d / SVG]
            drawn = sum(1 for e in g.edges if e.strength > threshold)
            tag = "all" if d == out else d.name
            lines.append(f"{tag}: strength_threshold = {threshold!r}, edges_drawn = {drawn} of {len(g.edges)}")
        return outputs, "\n".join(lines) + "\n"

    return _run_stage("layout", out, opts, options, inputs, body)


def stage_mobility(survey: Path, out: Path, opts: RunOptions) -> bool:
    options = {
        "origin_rule": opts.origin_rule, "ed_mode": opts.ed_mode, "dij_scale": opts.dij_scale,
        "include_origin": opts.include_origin, "group_by": opts.group_by,
        "columns": dict(sorted(opts.columns.items())), "strict": opts.strict,
    }
    if not (out / DISTANCES).is_file():
        raise StageError("mobility", f"missing prerequisite {out / DISTANCES} (run 'network' and 'distances' first)")
    dist_files = {str((d / DISTANCES).relative_to(out)): d / DISTANCES for d in network_dirs(out) if (d / DISTANCES).is_file()}

    def body():
        records, _, households = _load("mobility", survey, opts)
        groups = _group_values(households, opts.group_by)
        if groups:
            D = {}
            for g in groups:
                path = out / GROUPS_DIR / _slug(g) / DISTANCES
                if not path.is_file():
                    raise StageError("mobility", f"missing prerequisite {path}")
                key = g if opts.group_by != "urban" else g == "True"
                D[key] = netgraph.read_distances(path)
            nodes = sorted({c for dm in D.values() for c in dm.nodes})
        else:
            D = netgraph.read_distances(out / DISTANCES)
            nodes = list(D.nodes)
        try:
            mpce_map = mobility.occupation_mpce(records, nodes)
        except ValueError as exc:
            raise StageError("mobility", str(exc)) from None
        origins = mobility.assign_origins(households, opts.origin_rule)
        rows, excluded = mobility.build_mobility_table(
            households, origins, D, mpce_map, opts.dij_scale, opts.ed_mode, opts.include_origin,
            group_by=opts.group_by if groups else None,
        )
        mobility.write_mobility(rows, out / MOBILITY)
        no_origin = sum(1 for hh in households if hh.household_id not in origins)
        report = mobility.exclusion_report(excluded, len(rows), no_origin)
        report = report.rstrip("\n") + f"\norigin_rule = {opts.origin_rule}\ned_mode = {opts.ed_mode}\ndij_scale = {opts.dij_scale!r}\n"
        return [out / MOBILITY], report

    return _run_stage("mobility", out, opts, options, dict(survey=survey, **dist_files), body)


def _specs_from(terms_per_column: list[list[str]] | None, dependent: str, refs):
    if not terms_per_column:
        return None
    return [
        regress.ModelSpec(dependent, tuple(terms), regress.FIXED_EFFECTS, refs, name=f"({k})")
        for k, terms in enumerate(terms_per_column, start=1)
    ]


def stage_regress(out: Path, opts: RunOptions) -> bool:
    options = {
        "weighted": opts.weighted, "cluster": opts.cluster,
        "reference_levels": dict(sorted(opts.reference_levels.items())),
        "model_a": opts.model_a, "model_b": opts.model_b,
    }
    if not (out / MOBILITY).is_file():
        raise StageError("regress", f"missing prerequisite {out / MOBILITY} (run 'mobility' first)")

    def body():
        table = mobility.read_mobility(out / MOBILITY)
        if table.empty:
            raise StageError("regress", "mobility table has no rows")
        refs = opts.reference_levels
        cluster = {"household": "household_id", None: None}.get(opts.cluster, opts.cluster)
        try:
            a = regress.model_family_a(table, refs, opts.weighted, cluster, _specs_from(opts.model_a, "d_ij", refs))
            b = regress.model_family_b(table, refs, opts.weighted, cluster, _specs_from(opts.model_b, "ed_ij", refs))
        except (ValueError, KeyError) as exc:
            raise StageError("regress", str(exc)) from None
        ta, ca = regress.regression_table(a, regress.LAYOUT_A)
        tb, cb = regress.regression_table(b, regress.LAYOUT_B)
        (out / TABLE_TXT).write_text(ta + "\n" + tb, encoding="utf-8")
        csv_lines = ["model," + ca.splitlines()[0]]
        csv_lines += ["A," + line for line in ca.splitlines()[1:]]
        csv_lines += ["B," + line for line in cb.splitlines()]
        (out / TABLE_CSV).write_text("\n".join(csv_lines) + "\n", encoding="utf-8")
        lines = ["[regress]", f"observations = {len(table)}", f"weighted = {opts.weighted}", f"cluster = {opts.cluster}"]
        for fam, results in (("A", a), ("B", b)):
            for r in results:
                dropped = " ".join(r.dropped) if r.dropped else "(none)"
                lines.append(f"{fam}{r.name}: n = {r.n}, r2 = {r.r2:.6f}, dropped_collinear = {dropped}")
        return [out / TABLE_TXT, out / TABLE_CSV], "\n".join(lines) + "\n"

    return _run_stage("regress", out, opts, options, {"mobility.csv": out / MOBILITY}, body)


def run_pipeline(survey: Path, out: Path, opts: RunOptions) -> Path:
    survey = Path(survey)
    out = Path(out)
    if not survey.is_file():
        raise StageError("network", f"survey file not found: {survey}")
    stage_network(survey, out, opts)
    stage_distances(out, opts)
    stage_communities(out, opts)
    stage_layout(out, opts)
    stage_mobility(survey, out, opts)
    stage_regress(out, opts)
    return out
