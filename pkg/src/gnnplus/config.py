"""Run specifications read from flat ``key = value`` files.

A run file has three sections::

    [model]
    backbone = gcn
    num_layers = 12
    ...
    [train]
    learning_rate = 0.001
    ...
    [data]
    path = zinc.jsonl          ; or generator = sbm plus its parameters

Every key is checked against the schema below and unknown keys are rejected.
Relative paths are resolved against the directory of the run file. A name
that is not an existing file is looked up among the bundled presets, so
``sbm-gcn-plus`` works from any directory.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import ConfigError, DatasetError, SchemaError
from .graph import (
    Dataset,
    DatasetMeta,
    generate_regression_task,
    generate_sbm_node_task,
    load_dataset,
)
from .layers import TechniqueFlags
from .model import ModelConfig
from .training import TrainConfig


def _bool(raw: str) -> bool:
    v = raw.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _opt_str(raw: str):
    v = raw.strip()
    return None if v.lower() in ("", "none", "null") else v


def _opt_float(raw: str):
    v = _opt_str(raw)
    return None if v is None else float(v)


def _int_list(raw: str):
    parts = [p for p in raw.replace(" ", "").split(",") if p]
    if not parts:
        raise ValueError("empty list")
    vals = tuple(int(p) for p in parts)
    return vals[0] if len(vals) == 1 else vals


MODEL_KEYS = {
    "backbone": str, "num_layers": int, "hidden_dim": int, "readout": str,
    "pe_steps": int, "use_edge_features": _bool, "use_norm": _bool, "dropout": float,
    "use_residual": _bool, "use_ffn": _bool, "use_pe": _bool,
}
TRAIN_KEYS = {
    "learning_rate": float, "epochs": int, "warmup_epochs": int, "weight_decay": float,
    "batch_size": int, "seed": int, "eval_metric": _opt_str, "selection": _opt_str,
    "grad_clip": _opt_float, "out_dir": str,
}
SCHEMA_KEYS = {
    "task": str, "node_feat_kind": str, "node_feat_dim_or_vocab": _int_list,
    "edge_feat_kind": str, "edge_feat_dim_or_vocab": _int_list, "num_outputs": int,
}
GENERATOR_KEYS = {
    "sbm": {"num_graphs": int, "nodes_per_graph": int, "num_blocks": int,
            "p_intra": float, "p_inter": float, "feature_noise": float, "data_seed": int},
    "regression": {"num_graphs": int, "min_nodes": int, "max_nodes": int,
                   "edge_prob": float, "data_seed": int},
}
DATA_KEYS = {"path": str, "generator": str, **SCHEMA_KEYS,
             **{k: t for keys in GENERATOR_KEYS.values() for k, t in keys.items()}}
SECTIONS = {"model": MODEL_KEYS, "train": TRAIN_KEYS, "data": DATA_KEYS}


@dataclass(frozen=True)
class DataSpec:
    """Where the graphs come from: a JSON Lines file, a generator, or neither.

    A spec with neither carries only the feature schema; such runs can build
    a model but not train it.
    """

    path: Path | None = None
    generator: str | None = None
    params: dict = field(default_factory=dict)
    meta: DatasetMeta | None = None

    def load(self) -> Dataset:
        if self.path is not None:
            ds = load_dataset(self.path)
        elif self.generator == "sbm":
            p = self.params
            ds = generate_sbm_node_task(p["num_graphs"], p["nodes_per_graph"], p["num_blocks"],
                                        p["p_intra"], p["p_inter"], p["feature_noise"],
                                        rng=p.get("data_seed", 0))
        elif self.generator == "regression":
            p = self.params
            ds = generate_regression_task(p["num_graphs"],
                                          (p.get("min_nodes", 6), p.get("max_nodes", 14)),
                                          rng=p.get("data_seed", 0),
                                          edge_prob=p.get("edge_prob", 0.3))
        else:
            raise DatasetError("run file names no dataset: set [data] path or generator")
        if self.meta is not None and self.meta != ds.meta:
            raise SchemaError(f"dataset schema {ds.meta.to_json()} does not match the "
                              f"run file schema {self.meta.to_json()}")
        return ds

    def resolve_meta(self) -> DatasetMeta:
        """The schema without reading graphs when the run file states it."""
        if self.meta is not None:
            return self.meta
        return self.load().meta


@dataclass(frozen=True)
class RunSpec:
    model: ModelConfig
    train: TrainConfig
    data: DataSpec
    out_dir: Path
    source: Path | None = None

    def with_seed(self, seed: int) -> "RunSpec":
        return replace(self, model=replace(self.model, seed=seed),
                       train=replace(self.train, seed=seed))

    def with_flags(self, **changes) -> "RunSpec":
        flags = replace(self.model.flags, **changes)
        return replace(self, model=replace(self.model, flags=flags))


def _section(cp: configparser.ConfigParser, name: str, where: str) -> dict:
    if not cp.has_section(name):
        return {}
    schema = SECTIONS[name]
    out = {}
    for key, raw in cp.items(name):
        if key not in schema:
            raise ConfigError(f"{where}: unknown key {key!r} in [{name}]")
        try:
            out[key] = schema[key](raw)
        except ValueError as exc:
            raise ConfigError(f"{where}: bad value for {name}.{key}: {exc}") from None
    return out


def parse_run_spec(text: str, base_dir: Path | str = ".", where: str = "<config>",
                   default_out: str | None = None) -> RunSpec:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"),
                                   default_section="__unused__")
    cp.optionxform = str
    try:
        cp.read_string(text, source=where)
    except configparser.Error as exc:
        raise ConfigError(f"{where}: {exc}") from None
    for name in cp.sections():
        if name not in SECTIONS:
            raise ConfigError(f"{where}: unknown section [{name}]")
    if not cp.has_section("model"):
        raise ConfigError(f"{where}: missing [model] section")
    base_dir = Path(base_dir)
    m, t, d = (_section(cp, s, where) for s in ("model", "train", "data"))

    out_dir = t.pop("out_dir", None) or default_out or "runs"
    flags = TechniqueFlags(
        use_edge_features=m.pop("use_edge_features", False), use_norm=m.pop("use_norm", False),
        dropout_rate=m.pop("dropout", 0.0), use_residual=m.pop("use_residual", False),
        use_ffn=m.pop("use_ffn", False), use_pe=m.pop("use_pe", False))
    train_cfg = TrainConfig(**t)
    model_cfg = ModelConfig(flags=flags, seed=train_cfg.seed, **m)

    schema = {k: d.pop(k) for k in list(d) if k in SCHEMA_KEYS}
    meta = None
    if schema:
        if "task" not in schema or "node_feat_kind" not in schema:
            raise ConfigError(f"{where}: [data] schema needs at least task and node_feat_kind")
        meta = DatasetMeta(schema["task"], schema["node_feat_kind"],
                           schema.get("node_feat_dim_or_vocab", 0),
                           schema.get("edge_feat_kind", "none"),
                           schema.get("edge_feat_dim_or_vocab", 0),
                           schema.get("num_outputs", 1))
    path = d.pop("path", None)
    generator = d.pop("generator", None)
    if path is not None and generator is not None:
        raise ConfigError(f"{where}: [data] sets both path and generator")
    if generator is not None:
        if generator not in GENERATOR_KEYS:
            raise ConfigError(f"{where}: unknown generator {generator!r}")
        stray = set(d) - set(GENERATOR_KEYS[generator])
        if stray:
            raise ConfigError(f"{where}: keys {sorted(stray)} do not apply to "
                              f"generator {generator!r}")
        required = set(GENERATOR_KEYS[generator]) - {"data_seed", "min_nodes", "max_nodes",
                                                     "edge_prob"}
        missing = required - set(d)
        if missing:
            raise ConfigError(f"{where}: generator {generator!r} needs {sorted(missing)}")
    elif d:
        raise ConfigError(f"{where}: generator parameters {sorted(d)} given without a generator")
    data = DataSpec(path=None if path is None else base_dir / path, generator=generator,
                    params=d, meta=meta)
    return RunSpec(model_cfg, train_cfg, data, Path(out_dir), None)


PRESET_DIR = Path(__file__).parent / "presets"


def list_presets() -> list[str]:
    return sorted(p.stem for p in PRESET_DIR.glob("*.cfg"))


def resolve_config(name) -> Path:
    """A path as given, or else the bundled preset of that name."""
    path = Path(name)
    if path.exists():
        return path
    stem = path.name[:-4] if path.name.endswith(".cfg") else path.name
    if path.parent == Path("") and (PRESET_DIR / f"{stem}.cfg").exists():
        return PRESET_DIR / f"{stem}.cfg"
    return path


def load_run_spec(path) -> RunSpec:
    path = resolve_config(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise FileNotFoundError(f"config file not found: {path}") from None
    spec = parse_run_spec(text, path.parent, str(path), default_out=str(Path("runs") / path.stem))
    return replace(spec, source=path)
