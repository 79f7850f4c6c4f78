import csv
import json
import subprocess
from pathlib import Path

import pytest

from occnet import ingest, synth
from occnet.cli import read_config, run
from occnet.synth import SynthConfig

OUTPUT_FILES = {
    "edges.csv", "distances.csv", "communities.csv", "layout.csv", "network.svg",
    "mobility.csv", "regression.txt", "regression.csv", "report.txt",
}
STAGES = ["network", "distances", "communities", "layout", "mobility", "regress"]


@pytest.fixture(scope="module")
def synth_survey(tmp_path_factory):
    d = tmp_path_factory.mktemp("synth")
    records, truth = synth.generate(SynthConfig(n_households=600, seed=11))
    synth.write_synth(records, truth, d / "s.csv")
    return d / "s.csv", truth


def tree(root: Path, skip=()):
    return {
        str(p.relative_to(root)): p.read_bytes()
        for p in sorted(root.rglob("*"))
        if p.is_file() and p.name not in skip
    }


def test_network_on_toy(toy_csv, tmp_path):
    assert run(["network", str(toy_csv), "--out", str(tmp_path), "--min-households", "1"]) == 0
    with open(tmp_path / "edges.csv", newline="") as fh:
        rows = {(r["occ_i"], r["occ_j"]): r for r in csv.DictReader(fh)}
    r = rows[("01", "02")]
    assert float(r["U_ij"]) == 700 and f"{float(r['V_ij']):.6f}" == "0.428571"
    assert f"{float(rows[('05', '06')]['V_ij']):.6f}" == "0.111111"


def test_communities_twice_identical(toy_csv, tmp_path):
    outs = []
    for k in range(2):
        out = tmp_path / f"r{k}"
        assert run(["network", str(toy_csv), "--out", str(out), "--min-households", "1"]) == 0
        assert run(["communities", "--out", str(out), "--seed", "7", "--deterministic"]) == 0
        outs.append((out / "communities.csv").read_bytes())
    assert outs[0] == outs[1]


def test_missing_input_exit_2(tmp_path, occnet_cmd):
    missing = tmp_path / "nowhere" / "survey.csv"
    proc = subprocess.run(occnet_cmd + ["pipeline", str(missing), "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert proc.returncode == 2
    assert str(missing) in proc.stderr


def test_regress_without_mobility(tmp_path, occnet_cmd):
    proc = subprocess.run(occnet_cmd + ["regress", "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 2
    assert "mobility.csv" in proc.stderr


def test_usage_error_exit_2(tmp_path):
    assert run(["network"]) == 2
    assert run(["bogus"]) == 2


def test_pipeline_outputs(synth_survey, tmp_path):
    survey, truth = synth_survey
    out = tmp_path / "run"
    code = run(["pipeline", str(survey), "--out", str(out), "--deterministic", "--seed", "42",
                "--dij-scale", repr(truth.params["dij_scale"])])
    assert code == 0
    files = {p.name for p in out.iterdir()}
    assert files == OUTPUT_FILES | {"manifest.json"}
    m = json.loads((out / "manifest.json").read_text())
    assert set(m["stages"]) == set(STAGES)
    assert m["seeds"] == [42]
    assert m["stages"]["network"]["options"]["h_mode"] == "weighted"
    assert m["stages"]["distances"]["options"]["length_rule"] == "reciprocal"
    assert m["stages"]["mobility"]["options"]["origin_rule"] == "edu-then-age"
    assert m["stages"]["mobility"]["options"]["ed_mode"] == "signed"
    assert "finished_at" not in json.dumps(m)
    assert "Note: *p<0.1; **p<0.05; ***p<0.01" in (out / "regression.txt").read_text()
    assert not (out / "FAILED").exists()


def test_stagewise_equals_pipeline(synth_survey, tmp_path):
    survey, _ = synth_survey
    common = ["--deterministic", "--seed", "3"]
    assert run(["pipeline", str(survey), "--out", str(tmp_path / "p")] + common) == 0
    for stage in STAGES:
        extra = [str(survey)] if stage in ("network", "mobility") else []
        assert run([stage, *extra, "--out", str(tmp_path / "s")] + common) == 0
    assert tree(tmp_path / "p") == tree(tmp_path / "s")


def test_single_valued_group_by(tmp_path):
    records, _ = synth.generate(SynthConfig(n_households=500, seed=4))
    path = tmp_path / "urban.csv"
    ingest.write_survey(records, path)  # synth draws urban per household; force one value
    recs, _ = ingest.load_survey(path)
    from dataclasses import replace

    ingest.write_survey([replace(r, urban=True) for r in recs], path)
    assert run(["pipeline", str(path), "--out", str(tmp_path / "plain"), "--deterministic"]) == 0
    assert run(["pipeline", str(path), "--out", str(tmp_path / "grp"), "--deterministic", "--group-by", "urban"]) == 0
    assert not (tmp_path / "grp" / "groups").exists()
    assert tree(tmp_path / "plain", skip={"manifest.json"}) == tree(tmp_path / "grp", skip={"manifest.json"})


def test_group_by_social_group(synth_survey, tmp_path):
    survey, _ = synth_survey
    out = tmp_path / "g"
    assert run(["pipeline", str(survey), "--out", str(out), "--deterministic", "--group-by", "social_group",
                "--min-households", "3"]) == 0
    groups = sorted(p.name for p in (out / "groups").iterdir())
    assert "BRAH" in groups and len(groups) == 7
    for g in groups:
        assert (out / "groups" / g / "edges.csv").is_file()
        assert (out / "groups" / g / "distances.csv").is_file()


def test_cache_and_manifest_digest(synth_survey, tmp_path):
    survey, _ = synth_survey
    out = tmp_path / "c"
    assert run(["pipeline", str(survey), "--out", str(out), "--deterministic"]) == 0
    d1 = json.loads((out / "manifest.json").read_text())["digest"]
    before = tree(out)
    assert run(["pipeline", str(survey), "--out", str(out), "--deterministic"]) == 0
    assert tree(out) == before
    assert run(["pipeline", str(survey), "--out", str(out), "--deterministic", "--length-rule", "unit"]) == 0
    d2 = json.loads((out / "manifest.json").read_text())["digest"]
    assert d2 != d1
    assert run(["pipeline", str(survey), "--out", str(out), "--deterministic"]) == 0
    assert json.loads((out / "manifest.json").read_text())["digest"] == d1
    assert tree(out) == before


def test_failed_marker(tmp_path, toy_csv):
    out = tmp_path / "f"
    # every code is rarer than the default threshold
    assert run(["network", str(toy_csv), "--out", str(out)]) == 2
    assert "network" in (out / "FAILED").read_text()
    assert run(["network", str(toy_csv), "--out", str(out), "--min-households", "1"]) == 0
    assert not (out / "FAILED").exists()


def test_config_file(synth_survey, tmp_path):
    survey, _ = synth_survey
    cfg = tmp_path / "run.ini"
    cfg.write_text(
        "seed = 9\nlength_rule = neglog\n\n[reference_levels]\nsocial_group = SC\n\n"
        "[model_a]\n1 = edu_years\n2 = edu_years, C(social_group)\n",
        encoding="utf-8",
    )
    conf = read_config(cfg)
    assert conf["seed"] == "9" and conf["model_a"] == [["edu_years"], ["edu_years", "C(social_group)"]]
    out = tmp_path / "o"
    # command line wins over the file
    assert run(["pipeline", str(survey), "--out", str(out), "--config", str(cfg), "--seed", "5", "--deterministic"]) == 0
    m = json.loads((out / "manifest.json").read_text())
    assert m["stages"]["communities"]["options"]["seed"] == 5
    assert m["stages"]["distances"]["options"]["length_rule"] == "neglog"
    rows = (out / "regression.csv").read_text().splitlines()
    assert rows[0].startswith("model,term,(1),(2)") and not rows[0].startswith("model,term,(1),(2),(3)")
    assert not any(r.startswith("A,SC,") for r in rows)


def test_bad_config(tmp_path):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("nonsense_key = 1\n")
    assert run(["communities", "--out", str(tmp_path), "--config", str(cfg)]) == 2


def test_column_mapping_flags(tmp_path, toy_csv):
    text = toy_csv.read_text().replace("occ2", "OCC_CODE", 1)
    alt = tmp_path / "alt.csv"
    alt.write_text(text)
    assert run(["network", str(alt), "--out", str(tmp_path / "o"), "--min-households", "1", "--col-occ", "OCC_CODE"]) == 0
    assert run(["network", str(alt), "--out", str(tmp_path / "o2"), "--min-households", "1"]) == 2


def test_synth_and_ingest_commands(tmp_path, capsys):
    out = tmp_path / "x.csv"
    assert run(["synth", "--out", str(out), "--households", "50", "--seed", "1"]) == 0
    truth = synth.GroundTruth.read(tmp_path / "x_truth.csv")
    assert "dij_scale" in truth.params
    assert run(["ingest", str(out), "--out", str(tmp_path / "ing")]) == 0
    assert "rows_rejected = 0" in (tmp_path / "ing" / "ingest_report.txt").read_text()
    assert (tmp_path / "ing" / "canonical.csv").read_bytes() == out.read_bytes()
    assert run(["synth", "--out", str(out), "--within", "0.1", "--cross", "0.2"]) == 2


def test_distances_matrix_exports(toy_csv, tmp_path):
    assert run(["network", str(toy_csv), "--out", str(tmp_path), "--min-households", "1"]) == 0
    assert run(["distances", "--out", str(tmp_path), "--matrix"]) == 0
    for name in ("distance_matrix.csv", "network.graphml", "graph_edges.csv"):
        assert (tmp_path / name).is_file()
