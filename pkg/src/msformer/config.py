"""Run configuration records and their flat text format.

A run spec is an INI file with ``[data]``, ``[model]``, ``[train]`` and
``[output]`` sections. Values are JSON where they parse as JSON and bare
strings otherwise. Command-line overrides use dotted keys (``model.c1=4``).
Unknown sections or keys are rejected.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

from .errors import ConfigError

MIXERS = ("LA", "RPE")
RPE_MODES = ("literal", "continuous", "off")


def parse_layout(value) -> tuple[tuple[str, int], ...]:
    """``"LA,LA,RPE:2,RPE"`` (or a list of such items) -> ((kind, count), ...)."""
    if isinstance(value, str):
        items = [s.strip() for s in value.split(",") if s.strip()]
    else:
        items = list(value)
    out = []
    for item in items:
        if isinstance(item, (list, tuple)):
            kind, count = item
        else:
            kind, _, count = str(item).partition(":")
            count = count or 1
        kind = str(kind).upper()
        if kind not in MIXERS:
            raise ConfigError(f"model.stage_layout: unknown mixer {kind!r} (expected LA or RPE)")
        try:
            count = int(count)
        except ValueError as exc:
            raise ConfigError(f"model.stage_layout: block count {count!r} is not an integer") from exc
        if count < 1:
            raise ConfigError(f"model.stage_layout: block count must be >= 1, got {count}")
        out.append((kind, count))
    return tuple(out)


def format_layout(layout) -> str:
    return ",".join(k if n == 1 else f"{k}:{n}" for k, n in layout)


def _int_tuple(value) -> tuple[int, ...]:
    if isinstance(value, str):
        value = [v for v in value.replace("[", "").replace("]", "").split(",") if v.strip()]
    return tuple(int(v) for v in value)


@dataclass
class ModelConfig:
    window_len: int = 28
    input_dim: int | None = None
    embed_dim: int = 128
    heads: int = 4
    lambda_schedule: tuple[int, ...] = (4, 4, 2, 1)
    stage_layout: tuple[tuple[str, int], ...] = (("LA", 1), ("LA", 1), ("RPE", 2), ("RPE", 1))
    mlp_ratio: float = 2.0
    pool_kernel: int = 3
    c1: int = 8
    c2: int | None = None
    log_range: int = 128
    rpe_mode: str = "literal"
    rul_cap: float = 125.0
    dropout: float = 0.0

    def __post_init__(self):
        self.lambda_schedule = _int_tuple(self.lambda_schedule)
        self.stage_layout = parse_layout(self.stage_layout)
        if self.c2 is None:
            self.c2 = 2 * self.c1
        self.validate()

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.heads

    @property
    def mlp_hidden(self) -> int:
        return math.ceil(self.mlp_ratio * self.embed_dim)

    def validate(self) -> None:
        L = self.window_len
        if L < 1:
            raise ConfigError("model.window_len: must be >= 1")
        if len(self.lambda_schedule) != 4 or len(self.stage_layout) != 4:
            raise ConfigError("model: exactly 4 stages required (lambda_schedule and stage_layout)")
        for s, lam in enumerate(self.lambda_schedule, 1):
            if lam < 1 or L % lam:
                raise ConfigError(f"model.lambda_schedule: stage {s} factor {lam} does not divide window_len {L}")
        if self.lambda_schedule[-1] != 1:
            raise ConfigError("model.lambda_schedule: final stage factor must be 1")
        if self.embed_dim < 1 or self.heads < 1 or self.embed_dim % self.heads:
            raise ConfigError(f"model.heads: embed_dim {self.embed_dim} not divisible by heads {self.heads}")
        if not (0 < self.c1 < self.c2 <= self.log_range):
            raise ConfigError(f"model.c1/c2: need 0 < c1 < c2 <= log_range, got {self.c1}, {self.c2}, {self.log_range}")
        if self.rpe_mode not in RPE_MODES:
            raise ConfigError(f"model.rpe_mode: expected one of {RPE_MODES}, got {self.rpe_mode!r}")
        if self.pool_kernel < 1 or self.pool_kernel % 2 == 0:
            raise ConfigError(f"model.pool_kernel: must be odd and >= 1, got {self.pool_kernel}")
        if self.mlp_ratio <= 0:
            raise ConfigError("model.mlp_ratio: must be > 0")
        if self.input_dim is not None and self.input_dim < 1:
            raise ConfigError("model.input_dim: must be >= 1")
        if self.rul_cap <= 0:
            raise ConfigError("model.rul_cap: must be > 0")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("model.dropout: must be in [0, 1)")


@dataclass
class TrainConfig:
    epochs: int = 300
    batch_size: int = 128
    lr: float = 1e-3
    seed: int = 0
    eval_every: int = 0
    checkpoint_dir: str | None = None
    keep_best: bool = False
    score_reduction: str = "sum"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.epochs < 1:
            raise ConfigError(f"train.epochs: must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError("train.batch_size: must be >= 1")
        if not self.lr > 0:
            raise ConfigError(f"train.lr: must be > 0, got {self.lr}")
        if self.eval_every < 0:
            raise ConfigError("train.eval_every: must be >= 0")
        if self.score_reduction not in ("sum", "mean"):
            raise ConfigError("train.score_reduction: expected 'sum' or 'mean'")


@dataclass
class DataConfig:
    kind: str = "synthetic"
    path: str = ""
    subset: str = "FD001"
    test_path: str = ""
    test_rul_path: str = ""
    rul_cap: float = 125.0
    condition_norm: bool = False
    n_units: int = 40
    n_test_units: int = 20
    n_features: int = 8
    noise: float = 0.1
    data_seed: int = 0

    def __post_init__(self):
        if self.kind not in ("cmapss", "csv", "synthetic"):
            raise ConfigError(f"data.kind: expected cmapss|csv|synthetic, got {self.kind!r}")
        if self.kind == "cmapss" and self.subset not in ("FD001", "FD002", "FD003", "FD004"):
            raise ConfigError(f"data.subset: unknown C-MAPSS subset {self.subset!r}")
        if self.kind in ("cmapss", "csv") and not self.path:
            raise ConfigError(f"data.path: required for kind={self.kind}")
        if self.rul_cap <= 0:
            raise ConfigError("data.rul_cap: must be > 0")
        if self.n_units < 1 or self.n_test_units < 1 or self.n_features < 1:
            raise ConfigError("data: n_units, n_test_units and n_features must be >= 1")


@dataclass
class RunSpec:
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    out: str = "runs"

    def __post_init__(self):
        # the data section owns the label cap; the model carries it for output scaling
        self.model.rul_cap = float(self.data.rul_cap)

    def fingerprint(self) -> str:
        payload = json.dumps(
            {"model": _plain(self.model), "train": _plain(self.train)}, sort_keys=True, default=str
        )
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


_SECTIONS = {"data": DataConfig, "model": ModelConfig, "train": TrainConfig}


def _plain(cfg) -> dict[str, Any]:
    d = dataclasses.asdict(cfg)
    if isinstance(cfg, ModelConfig):
        d["stage_layout"] = format_layout(cfg.stage_layout)
        d["lambda_schedule"] = list(cfg.lambda_schedule)
    return d


def _decode(raw: str):
    s = raw.strip()
    if s.lower() in ("none", "null", ""):
        return None
    if s.lower() in ("true", "false"):
        return s.lower() == "true"
    try:
        return json.loads(s)
    except json.JSONDecodeError:
        return s


def _encode(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, str):
        return value
    return json.dumps(value)


def _build(cls, values: dict[str, Any], section: str):
    known = {f.name: f for f in fields(cls)}
    for key in values:
        if key not in known:
            raise ConfigError(f"{section}.{key}: unknown key")
    try:
        return cls(**{k: v for k, v in values.items() if v is not None or known[k].default is None})
    except TypeError as exc:
        raise ConfigError(f"{section}: {exc}") from exc
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{section}: {exc}") from exc


def apply_overrides(raw: dict[str, dict[str, Any]], overrides) -> None:
    for item in overrides or ():
        key, sep, value = item.partition("=")
        section, dot, name = key.strip().partition(".")
        if not sep or not dot or not name:
            raise ConfigError(f"override {item!r}: expected section.key=value")
        if section not in (*_SECTIONS, "output"):
            raise ConfigError(f"override {item!r}: unknown section {section!r}")
        raw.setdefault(section, {})[name] = _decode(value)


def spec_from_raw(raw: dict[str, dict[str, Any]]) -> RunSpec:
    for section in raw:
        if section not in (*_SECTIONS, "output"):
            raise ConfigError(f"[{section}]: unknown section")
    out_section = dict(raw.get("output", {}))
    out_dir = out_section.pop("dir", "runs")
    if out_section:
        raise ConfigError(f"output.{next(iter(out_section))}: unknown key")
    parts = {name: _build(cls, raw.get(name, {}), name) for name, cls in _SECTIONS.items()}
    if "rul_cap" in raw.get("model", {}) and raw["model"]["rul_cap"] != parts["data"].rul_cap:
        raise ConfigError("model.rul_cap: set the label cap via data.rul_cap")
    return RunSpec(data=parts["data"], model=parts["model"], train=parts["train"], out=str(out_dir))


def read_raw(path) -> dict[str, dict[str, Any]]:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return {s: {k: _decode(v) for k, v in parser.items(s)} for s in parser.sections()}


def load_spec(path=None, overrides=()) -> RunSpec:
    raw = read_raw(path) if path else {}
    apply_overrides(raw, overrides)
    return spec_from_raw(raw)


def dump_spec(spec: RunSpec) -> str:
    lines = []
    for name in _SECTIONS:
        cfg = getattr(spec, name)
        lines.append(f"[{name}]")
        for key, value in _plain(cfg).items():
            if name == "model" and key == "rul_cap":
                continue
            lines.append(f"{key} = {_encode(value)}")
        lines.append("")
    lines += ["[output]", f"dir = {spec.out}", ""]
    return "\n".join(lines)


def save_spec(spec: RunSpec, path) -> Path:
    p = Path(path)
    p.write_text(dump_spec(spec))
    return p
