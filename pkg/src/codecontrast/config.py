"""Flat ``key = value`` run configuration.

One setting per line, ``#`` starts a comment, blank lines are ignored.
Every key must be known; missing keys keep their defaults.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .encoder import ModelConfig
from .errors import ConfigError
from .pairgen import DEFAULT_NODE_TYPES, AsstConfig, PairConfig
from .training import TrainConfig


@dataclass
class RunConfig:
    # training
    lam: float = 0.2
    iterations: int = 4
    negative_size: int = 7
    top_k: int = 50
    batch_size: int = 8
    anchors_per_step: int = 4
    lr_dual: float = 1e-3
    lr_disc: float = 1e-3
    lr_adv: float | None = 2e-4
    weight_decay: float = 0.01
    warmup_steps: int = 500
    disc_steps: int = 50
    dual_steps: int = 50
    disc_init: str = "theta"
    seed: int = 0
    # pair construction
    node_types: tuple = tuple(sorted(DEFAULT_NODE_TYPES))
    l_min: int = 20
    sentinel: bool = False
    max_tries: int = 8
    span_len: int = 10
    line_cnt: int = 2
    draws: int = 1
    min_doc_tokens: int = 3
    # encoder
    vocab_size: int = 4096
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    d_ff: int = 128
    max_len: int = 128
    init_scale: float = 0.05

    def train_config(self) -> TrainConfig:
        names = {f.name for f in fields(TrainConfig)}
        return TrainConfig(**{k: getattr(self, k) for k in names})

    def asst_config(self) -> AsstConfig:
        return AsstConfig(frozenset(self.node_types), self.l_min, self.seed, self.sentinel, max_tries=self.max_tries)

    def pair_config(self) -> PairConfig:
        return PairConfig(self.asst_config(), self.span_len, self.line_cnt, self.draws, self.min_doc_tokens)

    def model_overrides(self) -> dict:
        names = {f.name for f in fields(ModelConfig)} - {"vocab_size"}
        return {k: getattr(self, k) for k in sorted(names)}

    def validate(self) -> "RunConfig":
        try:
            self.train_config()
            self.asst_config()
            ModelConfig(vocab_size=self.vocab_size, **self.model_overrides())
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return self

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                v = "none"
            elif isinstance(v, tuple):
                v = ",".join(v)
            elif isinstance(v, bool):
                v = "true" if v else "false"
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _convert(kind, raw: str, key: str, lineno: int):
    if kind == "float | None":
        if raw.lower() == "none":
            return None
        kind = float
    try:
        if kind in (bool, "bool"):
            low = raw.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(raw)
        if kind in (int, "int"):
            return int(raw)
        if kind in (float, "float"):
            return float(raw)
        if kind in (tuple, "tuple"):
            items = tuple(x.strip() for x in raw.split(",") if x.strip())
            if not items:
                raise ValueError(raw)
            return items
        return raw
    except ValueError:
        raise ConfigError(f"line {lineno}: {key} expects {getattr(kind, '__name__', kind)}, got {raw!r}") from None


def parse_config(text: str, **overrides) -> RunConfig:
    types = {f.name: f.type for f in fields(RunConfig)}
    values: dict = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in types:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _convert(types[key], raw, key, lineno)
    values.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig(**values).validate()


def load_config(path=None, **overrides) -> RunConfig:
    text = Path(path).read_text() if path is not None else ""
    return parse_config(text, **overrides)
