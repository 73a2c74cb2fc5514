import textwrap

import pytest

from gnnplus.config import (PRESET_DIR, DataSpec, list_presets, load_run_spec, parse_run_spec,
                            resolve_config)
from gnnplus.errors import ConfigError, DatasetError, SchemaError
from gnnplus.graph import generate_regression_task, save_dataset
from gnnplus.model import build_model

MINIMAL = """
[model]
backbone = gin
num_layers = 3
hidden_dim = 8
readout = sum
use_norm = yes
dropout = 0.1

[train]
epochs = 2
warmup_epochs = 1
seed = 4

[data]
generator = regression
num_graphs = 20
"""


def spec(text, **kw):
    return parse_run_spec(textwrap.dedent(text), **kw)


def test_minimal_parse():
    s = spec(MINIMAL)
    assert s.model.backbone == "gin" and s.model.readout == "sum"
    assert s.model.flags.use_norm and s.model.flags.dropout_rate == 0.1
    assert not s.model.flags.use_residual
    assert s.model.seed == s.train.seed == 4
    assert s.data.generator == "regression" and s.data.params == {"num_graphs": 20}
    assert s.data.load().task == "graph_regression"


@pytest.mark.parametrize("extra,section", [("colour = red", "model"),
                                            ("momentum = 0.9", "train"),
                                            ("nodes_per_graph = 5", "data")])
def test_unknown_or_misplaced_key(extra, section):
    text = MINIMAL.replace(f"[{section}]", f"[{section}]\n{extra}")
    with pytest.raises(ConfigError):
        spec(text)


def test_unknown_section_and_missing_model():
    with pytest.raises(ConfigError, match="unknown section"):
        spec(MINIMAL + "\n[optim]\nlr = 1\n")
    with pytest.raises(ConfigError, match=r"\[model\]"):
        spec("[train]\nepochs = 1\nwarmup_epochs = 0\n")


def test_bad_values():
    with pytest.raises(ConfigError, match="use_norm"):
        spec(MINIMAL.replace("use_norm = yes", "use_norm = maybe"))
    with pytest.raises(ConfigError):
        spec(MINIMAL.replace("num_layers = 3", "num_layers = 1"))
    with pytest.raises(ConfigError):
        spec(MINIMAL.replace("warmup_epochs = 1", "warmup_epochs = 9"))


def test_generator_rules():
    with pytest.raises(ConfigError, match="both"):
        spec(MINIMAL.replace("generator = regression", "generator = regression\npath = x.jsonl"))
    with pytest.raises(ConfigError, match="needs"):
        spec(MINIMAL.replace("generator = regression", "generator = sbm"))
    with pytest.raises(ConfigError, match="unknown generator"):
        spec(MINIMAL.replace("generator = regression", "generator = grid"))
    with pytest.raises(ConfigError, match="without a generator"):
        spec(MINIMAL.replace("generator = regression\n", ""))


def test_schema_only_spec_cannot_load():
    s = spec("""
        [model]
        backbone = gcn
        [data]
        task = graph_classification
        node_feat_kind = categorical
        node_feat_dim_or_vocab = 5, 3
        num_outputs = 4
    """)
    assert s.data.meta.node_feat_dim_or_vocab == (5, 3)
    assert s.data.resolve_meta().num_outputs == 4
    with pytest.raises(DatasetError):
        s.data.load()


def test_relative_path_and_schema_check(tmp_path):
    ds = generate_regression_task(10, rng=0)
    (tmp_path / "sub").mkdir()
    save_dataset(ds, tmp_path / "sub" / "d.jsonl")
    cfg = tmp_path / "run.cfg"
    cfg.write_text("[model]\nbackbone = gcn\n[data]\npath = sub/d.jsonl\n")
    s = load_run_spec(cfg)
    assert s.data.path == tmp_path / "sub" / "d.jsonl"
    assert len(s.data.load()) == 10
    assert s.out_dir.name == "run" and s.source == cfg
    wrong = DataSpec(path=s.data.path, meta=ds.meta.__class__("graph_regression", "continuous", 2))
    with pytest.raises(SchemaError):
        wrong.load()


def test_missing_config_names_path(tmp_path):
    with pytest.raises(FileNotFoundError, match="nope.cfg"):
        load_run_spec(tmp_path / "nope.cfg")


def test_with_seed_and_flags():
    s = spec(MINIMAL).with_seed(11).with_flags(use_residual=True)
    assert s.model.seed == s.train.seed == 11 and s.model.flags.use_residual


def test_preset_lookup_by_name():
    assert resolve_config("sbm-gcn-plus") == PRESET_DIR / "sbm-gcn-plus.cfg"
    assert resolve_config("zinc-gin-plus.cfg") == PRESET_DIR / "zinc-gin-plus.cfg"
    assert "triangles-gcn-plus" in list_presets()


@pytest.mark.parametrize("name", list_presets())
def test_every_preset_parses_and_builds(name):
    s = load_run_spec(name)
    model = build_model(s.model, s.data.resolve_meta())
    assert model.num_parameters() > 0
