import csv

import pytest

from occnet import ingest, synth
from occnet.synth import SynthConfig


@pytest.fixture(scope="module")
def default_run():
    return synth.generate(SynthConfig())


def test_round_trip_zero_rejections(tmp_path, default_run):
    records, truth = default_run
    truth_path = synth.write_synth(records, truth, tmp_path / "s.csv")
    loaded, rep = ingest.load_survey(tmp_path / "s.csv")
    assert rep.rejected == [] and loaded == records
    back = synth.GroundTruth.read(truth_path)
    assert back.blocks == truth.blocks
    assert back.params["dij_scale"] == truth.params["dij_scale"]
    assert back.params["planted_beta_education"] == 3.0


def test_empty_output_has_header(tmp_path):
    records, truth = synth.generate(SynthConfig(n_households=0))
    synth.write_synth(records, truth, tmp_path / "e.csv")
    with open(tmp_path / "e.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows == [list(ingest.CANONICAL_COLUMNS)]


def test_deterministic_per_seed():
    a = synth.generate(SynthConfig(n_households=300, seed=5))
    b = synth.generate(SynthConfig(n_households=300, seed=5))
    c = synth.generate(SynthConfig(n_households=300, seed=6))
    assert a[0] == b[0] and a[1] == b[1] and a[0] != c[0]


def test_default_shape(default_run):
    records, truth = default_run
    hhs = ingest.group_households(records)
    assert len(hhs) == 2000
    assert len(truth.blocks) == 32 and sorted(set(truth.blocks.values())) == [0, 1, 2, 3]
    assert all(2 <= len(h.members) <= 5 for h in hhs)
    assert all(sum(1 for b in truth.blocks.values() if b == k) == 8 for k in range(4))


@pytest.mark.parametrize("seed", [42, 1, 2])
def test_within_block_rate(seed):
    cfg = SynthConfig(seed=seed)
    records, truth = synth.generate(cfg)
    rate = synth.within_block_rate(records, truth.blocks)
    assert abs(rate - cfg.within_tie_prob) <= 0.02


def test_cross_zero_is_block_diagonal():
    records, truth = synth.generate(SynthConfig(cross_tie_prob=0.0, n_households=800, seed=2))
    g = synth.network_graph(records)
    for e in g.edges:
        assert truth.blocks[g.nodes[e.i]] == truth.blocks[g.nodes[e.j]]


@pytest.mark.parametrize(
    "bad",
    [
        dict(within_tie_prob=0.1, cross_tie_prob=0.2),
        dict(within_tie_prob=0.0, cross_tie_prob=0.0),
        dict(n_households=-1),
        dict(members_per_household=(0, 3)),
        dict(n_blocks=40, n_occupations=32),
        dict(noise_sd=25.0),
    ],
)
def test_infeasible_configs(bad):
    with pytest.raises(ValueError):
        synth.generate(SynthConfig(**bad))


def test_config_from_dict():
    assert synth.config_from_dict({"seed": 3}).seed == 3
    with pytest.raises(ValueError):
        synth.config_from_dict({"bogus": 1})


def test_planted_partition_graph_shape():
    g, labels = synth.planted_partition_graph(seed=0)
    assert len(g.nodes) == 32 and labels.count(0) == 8
    for e in g.edges:
        assert e.strength == (1.0 if labels[e.i] == labels[e.j] else 0.05)
