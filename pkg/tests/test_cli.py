import csv
import hashlib
import json

from gnnplus import tensor as T
from gnnplus.cli import main

RUN = """
[model]
backbone = {backbone}
num_layers = 3
hidden_dim = 8
readout = mean
use_norm = true
use_residual = true
use_pe = {pe}
pe_steps = 3
dropout = {dropout}

[train]
learning_rate = 0.005
epochs = 3
warmup_epochs = 1
batch_size = 8

[data]
generator = regression
num_graphs = 20
min_nodes = 4
max_nodes = 8
"""


def write_cfg(tmp_path, name="run.cfg", backbone="gcn", pe="true", dropout=0.1):
    p = tmp_path / name
    p.write_text(RUN.format(backbone=backbone, pe=pe, dropout=dropout))
    return p


def sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


# ---------------------------------------------------------------------------
# gen-data

def test_gen_data_sbm_line_count(tmp_path, capsys):
    out = tmp_path / "sbm.jsonl"
    assert main(["gen-data", "--kind", "sbm", "--num-graphs", "100", "--nodes", "40",
                 "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 101
    printed = capsys.readouterr().out
    assert "# graphs" in printed and "Avg. # nodes" in printed and "Avg. # edges" in printed


def test_gen_data_regression_header(tmp_path):
    out = tmp_path / "r.jsonl"
    assert main(["gen-data", "--kind", "regression", "--num-graphs", "5", "--out", str(out)]) == 0
    assert json.loads(out.read_text().splitlines()[0])["task"] == "graph_regression"


def test_gen_data_byte_identical(tmp_path):
    a, b, c = tmp_path / "a.jsonl", tmp_path / "b.jsonl", tmp_path / "c.jsonl"
    for path, seed in ((a, "3"), (b, "3"), (c, "4")):
        main(["gen-data", "--kind", "sbm", "--num-graphs", "10", "--seed", seed, "--out", str(path)])
    assert sha(a) == sha(b) != sha(c)


def test_gen_data_invalid_params(tmp_path, capsys):
    code = main(["gen-data", "--kind", "sbm", "--p-intra", "0.1", "--p-inter", "0.5",
                 "--out", str(tmp_path / "x.jsonl")])
    assert code != 0
    assert "error" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# train / eval

def test_train_outputs_and_eval_consistency(tmp_path, capsys):
    cfg = write_cfg(tmp_path)
    out = tmp_path / "run"
    assert main(["train", "--config", str(cfg), "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert set(summary) >= {"test_metric", "val_metric", "epoch_of_best", "wall_seconds"}
    rows = list(csv.reader((out / "log.csv").open()))
    assert rows[0] == ["epoch", "lr", "train_loss", "val_metric", "test_metric"]
    assert len(rows) == 4
    capsys.readouterr()
    args = ["eval", "--checkpoint", str(out / "checkpoint.bin"), "--config", str(cfg)]
    assert main(args) == 0
    first = capsys.readouterr().out
    assert json.loads(first)["mae"] == summary["test_metric"]
    assert main(args) == 0
    assert capsys.readouterr().out == first


def test_train_missing_dataset_names_path(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("[model]\nbackbone = gcn\n[data]\npath = missing_data.jsonl\n")
    assert main(["train", "--config", str(cfg), "--out", str(tmp_path / "o")]) != 0
    assert "missing_data.jsonl" in capsys.readouterr().err


def test_train_missing_config(tmp_path, capsys):
    assert main(["train", "--config", str(tmp_path / "none.cfg")]) != 0
    assert "none.cfg" in capsys.readouterr().err


def test_eval_unknown_split(tmp_path, capsys):
    cfg = write_cfg(tmp_path, pe="false")
    main(["train", "--config", str(cfg), "--out", str(tmp_path / "r")])
    code = main(["eval", "--checkpoint", str(tmp_path / "r" / "checkpoint.bin"),
                 "--config", str(cfg), "--split", "holdout"])
    assert code != 0 and "holdout" in capsys.readouterr().err


def test_eval_schema_mismatch(tmp_path, capsys):
    cfg = write_cfg(tmp_path, pe="false")
    main(["train", "--config", str(cfg), "--out", str(tmp_path / "r")])
    data = tmp_path / "sbm.jsonl"
    main(["gen-data", "--kind", "sbm", "--num-graphs", "10", "--out", str(data)])
    code = main(["eval", "--checkpoint", str(tmp_path / "r" / "checkpoint.bin"),
                 "--data", str(data)])
    assert code != 0 and "schema" in capsys.readouterr().err


def test_seed_override_changes_run(tmp_path):
    cfg = write_cfg(tmp_path)
    main(["train", "--config", str(cfg), "--out", str(tmp_path / "a")])
    main(["train", "--config", str(cfg), "--out", str(tmp_path / "b"), "--seed", "9",
          "--threads", "1"])
    assert sha(tmp_path / "a" / "log.csv") != sha(tmp_path / "b" / "log.csv")


# ---------------------------------------------------------------------------
# ablate

def test_ablate_seven_rows_and_base_equals_train(tmp_path, capsys):
    cfg = write_cfg(tmp_path)
    assert main(["ablate", "--config", str(cfg), "--out", str(tmp_path / "ab")]) == 0
    rows = list(csv.DictReader((tmp_path / "ab" / "ablation.csv").open()))
    assert [r["variant"] for r in rows] == ["base", "(-) Edge", "(-) Norm", "(-) Dropout",
                                            "(-) RC", "(-) FFN", "(-) PE"]
    status = {r["variant"]: r["status"] for r in rows}
    assert status["(-) Edge"] == status["(-) FFN"] == "not active"
    assert status["(-) RC"] == status["(-) PE"] == status["(-) Dropout"] == "run"
    text = (tmp_path / "ab" / "ablation.txt").read_text().splitlines()
    assert len(text) == 8
    main(["train", "--config", str(cfg), "--out", str(tmp_path / "t")])
    summary = json.loads((tmp_path / "t" / "summary.json").read_text())
    assert float(rows[0]["test_metric"]) == summary["test_metric"]
    assert float(rows[0]["val_metric"]) == summary["val_metric"]


def test_ablate_all_flags_off_rows_not_active(tmp_path):
    cfg = tmp_path / "off.cfg"
    cfg.write_text(RUN.format(backbone="gin", pe="false", dropout=0.0)
                   .replace("use_norm = true", "use_norm = false")
                   .replace("use_residual = true", "use_residual = false"))
    assert main(["ablate", "--config", str(cfg), "--out", str(tmp_path / "ab")]) == 0
    rows = list(csv.DictReader((tmp_path / "ab" / "ablation.csv").open()))
    assert len(rows) == 7
    assert all(r["status"] == "not active" for r in rows[1:])
    assert all(r["test_metric"] == rows[0]["test_metric"] for r in rows)


# ---------------------------------------------------------------------------
# gradcheck

def test_gradcheck_negative_control(monkeypatch, capsys):
    def broken(ctx, g, inputs, needs):
        return (g * (inputs[0].data > 0) * 1.5,)

    monkeypatch.setitem(T.BACKWARD_RULES, "relu", broken)
    assert main(["gradcheck", "--backbones", "gcn"]) != 0
    err = capsys.readouterr().err
    assert "failing ops" in err and "relu" in err

