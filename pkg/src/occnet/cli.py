"""Command-line front end: ``occnet <stage> ...`` or ``occnet pipeline ...``.

Exit codes: 0 success, 1 internal error, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import configparser
import logging
import sys
from dataclasses import fields
from pathlib import Path

from . import __version__, ingest, pipeline, synth
from .pipeline import RunOptions, StageError

log = logging.getLogger("occnet")

# CLI flag -> canonical survey column
COLUMN_FLAGS = {
    "col_hhid": "hh_id",
    "col_pid": "person_id",
    "col_weight": "hh_weight",
    "col_state": "state",
    "col_urban": "urban",
    "col_group": "social_group",
    "col_sex": "sex",
    "col_age": "age",
    "col_edu": "edu_years",
    "col_working": "working",
    "col_occ": "occ2",
    "col_assets": "assets",
    "col_mpce": "mpce",
}

_OPTION_TYPES = {f.name: f.type for f in fields(RunOptions)}


class UsageError(Exception):
    pass


def _parse_bool(text: str) -> bool:
    v = text.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {text!r}")


def read_config(path: str | Path) -> dict:
    """INI-style ``key = value`` file.

    Keys outside any section (or in ``[options]``) set run options, ``[columns]``
    maps canonical column names to file headers, ``[reference_levels]`` sets
    omitted categories, and ``[model_a]``/``[model_b]`` give one comma-separated
    term list per column, keyed 1, 2, ...
    """
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"config file not found: {path}")
    text = path.read_text(encoding="utf-8")
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string("[options]\n" + text)
    except configparser.Error as exc:
        raise UsageError(f"{path}: {exc}") from None

    conf: dict = {}
    for key, value in parser["options"].items():
        key = key.replace("-", "_")
        if key not in _OPTION_TYPES or key in ("columns", "reference_levels", "model_a", "model_b"):
            raise UsageError(f"{path}: unknown option {key!r}")
        conf[key] = value
    if parser.has_section("columns"):
        cols = dict(parser["columns"])
        bad = set(cols) - set(ingest.CANONICAL_COLUMNS)
        if bad:
            raise UsageError(f"{path}: unknown canonical columns {sorted(bad)}")
        conf["columns"] = cols
    if parser.has_section("reference_levels"):
        conf["reference_levels"] = dict(parser["reference_levels"])
    for model in ("model_a", "model_b"):
        if parser.has_section(model):
            items = sorted(parser[model].items(), key=lambda kv: int(kv[0]))
            conf[model] = [[t.strip() for t in v.split(",") if t.strip()] for _, v in items]
    return conf


def _coerce(key: str, value):
    if not isinstance(value, str):
        return value
    if key in ("min_households", "seed", "iterations"):
        return int(value)
    if key in ("resolution", "edge_quantile", "dij_scale"):
        return float(value)
    if key in ("include_origin", "weighted", "strict", "deterministic", "force"):
        return _parse_bool(value)
    if key == "frame":
        w, h = value.replace("x", " ").split()
        return (float(w), float(h))
    return value


def build_options(args: argparse.Namespace) -> RunOptions:
    values: dict = {}
    if getattr(args, "config", None):
        values.update(read_config(args.config))
    for f in fields(RunOptions):
        v = getattr(args, f.name, None)
        if v is not None and v is not False:
            values[f.name] = v
    cols = dict(values.get("columns", {}))
    for flag, canon in COLUMN_FLAGS.items():
        v = getattr(args, flag, None)
        if v:
            cols[canon] = v
    values["columns"] = cols
    refs = dict(values.get("reference_levels", {}))
    for item in getattr(args, "ref", None) or []:
        if "=" not in item:
            raise UsageError(f"--ref expects column=level, got {item!r}")
        k, v = item.split("=", 1)
        refs[k] = v
    values["reference_levels"] = refs
    try:
        values = {k: _coerce(k, v) for k, v in values.items()}
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if isinstance(values.get("frame"), list):
        values["frame"] = tuple(values["frame"])
    return RunOptions(**values)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", "-o", required=True, type=Path, help="output directory")
    p.add_argument("--config", help="INI-style key=value config file")
    p.add_argument("--deterministic", action="store_true", default=None, help="omit timestamps from the manifest")
    p.add_argument("--force", action="store_true", default=None, help="rerun even if inputs are unchanged")
    p.add_argument("--seed", type=int, help="random seed for communities and layout")
    p.add_argument("-v", "--verbose", action="store_true")


def _add_survey(p: argparse.ArgumentParser) -> None:
    p.add_argument("input", type=Path, help="survey CSV")
    p.add_argument("--strict", action="store_true", default=None, help="fail on the first invalid row")
    g = p.add_argument_group("column mapping")
    for flag in COLUMN_FLAGS:
        g.add_argument("--" + flag.replace("_", "-"), dest=flag, metavar="NAME")


def _add_network(p):
    p.add_argument("--min-households", type=int)
    p.add_argument("--h-mode", choices=("weighted", "count"))
    p.add_argument("--group-by", choices=pipeline.GROUPABLE)


def _add_distances(p):
    p.add_argument("--length-rule", choices=("reciprocal", "neglog", "unit"))


def _add_communities(p):
    p.add_argument("--resolution", type=float)


def _add_layout(p):
    p.add_argument("--iterations", type=int)
    p.add_argument("--frame", type=float, nargs=2, metavar=("W", "H"))
    p.add_argument("--edge-quantile", type=float)


def _add_mobility(p):
    p.add_argument("--origin-rule", choices=("edu-then-age", "age-then-edu"))
    p.add_argument("--ed-mode", choices=("signed", "absolute"))
    p.add_argument("--dij-scale", type=float)
    p.add_argument("--include-origin", action="store_true", default=None)


def _add_regress(p):
    p.add_argument("--weighted", action="store_true", default=None, help="survey-weighted least squares")
    p.add_argument("--cluster", help="cluster standard errors by 'household' or a mobility column")
    p.add_argument("--ref", action="append", metavar="COL=LEVEL", help="reference level of a categorical")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="occnet", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"occnet {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate a survey CSV and write its canonical form")
    _add_common(p)
    _add_survey(p)
    p.add_argument("--min-households", type=int)

    p = sub.add_parser("network", help="incidence projection and chi-square strengths")
    _add_common(p)
    _add_survey(p)
    _add_network(p)

    p = sub.add_parser("distances", help="all-pairs geodesic distances")
    _add_common(p)
    _add_distances(p)
    p.add_argument("--matrix", action="store_true", help="also write square matrix and GraphML")

    p = sub.add_parser("communities", help="Louvain communities")
    _add_common(p)
    _add_communities(p)

    p = sub.add_parser("layout", help="force-directed layout and SVG")
    _add_common(p)
    _add_communities(p)
    _add_layout(p)

    p = sub.add_parser("mobility", help="origin occupations and mobility table")
    _add_common(p)
    _add_survey(p)
    _add_mobility(p)
    p.add_argument("--group-by", choices=pipeline.GROUPABLE)

    p = sub.add_parser("regress", help="model families A and B")
    _add_common(p)
    _add_regress(p)

    p = sub.add_parser("pipeline", help="run every stage")
    _add_common(p)
    _add_survey(p)
    _add_network(p)
    _add_distances(p)
    _add_communities(p)
    _add_layout(p)
    _add_mobility(p)
    _add_regress(p)

    p = sub.add_parser("synth", help="generate a synthetic survey with planted structure")
    p.add_argument("--out", "-o", required=True, type=Path, help="output CSV path")
    p.add_argument("--truth", type=Path, help="ground-truth sidecar path (default: <out>_truth.csv)")
    p.add_argument("--households", type=int, dest="n_households")
    p.add_argument("--occupations", type=int, dest="n_occupations")
    p.add_argument("--blocks", type=int, dest="n_blocks")
    p.add_argument("--within", type=float, dest="within_tie_prob")
    p.add_argument("--cross", type=float, dest="cross_tie_prob")
    p.add_argument("--members", type=int, nargs=2, dest="members_per_household", metavar=("MIN", "MAX"))
    p.add_argument("--beta", type=float, dest="planted_beta_education")
    p.add_argument("--gamma", type=float, dest="planted_gamma_interaction")
    p.add_argument("--noise-sd", type=float, dest="noise_sd")
    p.add_argument("--seed", type=int)
    p.add_argument("-v", "--verbose", action="store_true")
    return parser


def _cmd_ingest(args, opts: RunOptions) -> None:
    records, report = ingest.load_survey(args.input, opts.columns or None, strict=opts.strict)
    households = ingest.group_households(records)
    _, dropped = ingest.filter_rare_occupations(households, opts.min_households)
    args.out.mkdir(parents=True, exist_ok=True)
    ingest.write_survey(records, args.out / "canonical.csv")
    text = ingest.ingest_report(report, households, dropped, opts.min_households)
    (args.out / "ingest_report.txt").write_text(text, encoding="utf-8")
    sys.stdout.write(text)


def _cmd_distances_extra(out: Path, opts: RunOptions) -> None:
    from . import netgraph, project

    for d in pipeline.network_dirs(out):
        g = netgraph.to_graph(project.read_edges(d / pipeline.EDGES), opts.length_rule)
        netgraph.write_distance_matrix(netgraph.geodesic_all_pairs(g), d / "distance_matrix.csv")
        netgraph.write_graphml(g, d / "network.graphml")
        netgraph.write_edge_list(g, d / "graph_edges.csv")


def _cmd_synth(args) -> None:
    values = {
        k: getattr(args, k)
        for k in ("n_households", "n_occupations", "n_blocks", "within_tie_prob", "cross_tie_prob",
                  "planted_beta_education", "planted_gamma_interaction", "noise_sd", "seed")
        if getattr(args, k) is not None
    }
    if args.members_per_household:
        values["members_per_household"] = tuple(args.members_per_household)
    try:
        cfg = synth.config_from_dict(values)
        records, truth = synth.generate(cfg)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    args.out.parent.mkdir(parents=True, exist_ok=True)
    truth_path = synth.write_synth(records, truth, args.out, args.truth)
    print(f"wrote {len(records)} records to {args.out} and ground truth to {truth_path}")


def run(argv: list[str] | None = None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "synth":
            _cmd_synth(args)
            return 0
        opts = build_options(args)
        out: Path = args.out
        cmd = args.command
        if cmd == "ingest":
            _cmd_ingest(args, opts)
        elif cmd == "network":
            pipeline.stage_network(args.input, out, opts)
        elif cmd == "distances":
            pipeline.stage_distances(out, opts)
            if args.matrix:
                _cmd_distances_extra(out, opts)
        elif cmd == "communities":
            pipeline.stage_communities(out, opts)
        elif cmd == "layout":
            pipeline.stage_layout(out, opts)
        elif cmd == "mobility":
            pipeline.stage_mobility(args.input, out, opts)
        elif cmd == "regress":
            pipeline.stage_regress(out, opts)
        elif cmd == "pipeline":
            pipeline.run_pipeline(args.input, out, opts)
        if cmd != "ingest" and (out / pipeline.REPORT).is_file():
            log.info("report: %s", out / pipeline.REPORT)
        return 0
    except (UsageError, StageError, FileNotFoundError, ValueError, KeyError) as exc:
        # ingest errors subclass ValueError
        print(f"occnet: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"occnet: internal error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
