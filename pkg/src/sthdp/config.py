"""Run configuration: one flat ``key = value`` namespace over every tunable.

The same format is used for input files, ``--set`` overrides and the
resolved snapshot written next to every output, so a snapshot can be fed
back in as ``--config`` to repeat a run.
"""
from __future__ import annotations

import dataclasses
import types
import typing
from dataclasses import dataclass, field, fields
from pathlib import Path

from .corpus import DiscretizationConfig
from .gibbs import SamplerConfig
from .sampler import ModelPriors
from .synthgrid import GridGroundTruth

RESOLVED_NAME = "config.resolved"


class ConfigError(ValueError):
    pass


@dataclass
class SynthConfig:
    docs_per_phase: int = 50
    words_per_doc: int = 40
    traj_len: int = 8
    doc_span: float | None = None
    jitter: float = 0.0

    def truth(self) -> GridGroundTruth:
        return GridGroundTruth(**dataclasses.asdict(self))


@dataclass
class RunConfig:
    discretization: DiscretizationConfig = field(default_factory=DiscretizationConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    priors: ModelPriors = field(default_factory=ModelPriors)
    synth: SynthConfig = field(default_factory=SynthConfig)
    window: float = 60.0
    time_unit: float = 1.0  # seconds per model time unit; priors apply to the rescaled axis
    holdout_fraction: float = 0.0  # 0 disables the held-out split
    holdout_seed: int = 0
    support_floor: int = 10
    time_weights: str = "topic"
    resolution: int = 200
    top_n: int = 10

    def __post_init__(self):
        if self.window <= 0:
            raise ConfigError("window must be > 0")
        if self.time_unit <= 0:
            raise ConfigError("time_unit must be > 0")
        if not 0 <= self.holdout_fraction < 1:
            raise ConfigError("holdout_fraction must lie in [0, 1)")
        if self.time_weights not in ("topic", "global"):
            raise ConfigError("time_weights must be 'topic' or 'global'")
        if self.resolution < 2:
            raise ConfigError("resolution must be >= 2")
        if self.top_n < 1:
            raise ConfigError("top_n must be >= 1")

    @property
    def seed(self) -> int:
        return self.sampler.seed


# --- flat key table ---------------------------------------------------------------

_SECTIONS = {"discretization": DiscretizationConfig, "sampler": SamplerConfig,
             "priors": ModelPriors, "synth": SynthConfig}


def _key_table():
    """key -> (section or None, field type)."""
    hints = {}
    for sec, cls in _SECTIONS.items():
        for f, tp in typing.get_type_hints(cls).items():
            if f in hints:
                raise RuntimeError(f"duplicate config key {f}")
            hints[f] = (sec, tp)
    for f, tp in typing.get_type_hints(RunConfig).items():
        if f not in _SECTIONS:
            hints[f] = (None, tp)
    return hints


KEYS = _key_table()


def _parse_value(key, text, tp):
    text = text.strip()
    optional = False
    if isinstance(tp, types.UnionType) or typing.get_origin(tp) is typing.Union:
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        optional = len(args) < len(typing.get_args(tp))
        tp = args[0]
    if optional and text.lower() == "none":
        return None
    try:
        if tp is bool:
            low = text.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(text)
        if tp is int:
            return int(text)
        if tp is float:
            return float(text)
        return text
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r} as {tp.__name__}") from None


def _format_value(v, tp=None):
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float) or (tp is not None and float in (tp, *typing.get_args(tp))):
        return repr(float(v))
    return str(v)


def parse_lines(lines, source="<config>") -> dict:
    """``key = value`` lines (``#`` comments, blanks ignored) -> {key: raw string}."""
    out = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}: line {lineno}: expected 'key = value'")
        k, v = (s.strip() for s in line.split("=", 1))
        if k not in KEYS:
            raise ConfigError(f"{source}: line {lineno}: unknown key {k!r}")
        out[k] = v
    return out


def build(values: dict | None = None) -> RunConfig:
    """RunConfig from {key: raw string or typed value}; unspecified keys keep defaults."""
    per_section = {s: {} for s in _SECTIONS}
    top = {}
    for k, v in (values or {}).items():
        if k not in KEYS:
            raise ConfigError(f"unknown key {k!r}")
        sec, tp = KEYS[k]
        val = _parse_value(k, v, tp) if isinstance(v, str) else v
        (per_section[sec] if sec else top)[k] = val
    try:
        parts = {s: cls(**per_section[s]) for s, cls in _SECTIONS.items()}
        return RunConfig(**parts, **top)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None


def load(path=None, overrides=(), seed: int | None = None) -> RunConfig:
    """File values, then ``--set key=value`` overrides, then ``--seed``."""
    values = {}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        values.update(parse_lines(text.splitlines(), str(path)))
    values.update(parse_lines(overrides, "--set"))
    if seed is not None:
        values["seed"] = str(seed)
    return build(values)


def flatten(cfg: RunConfig) -> dict:
    out = {}
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if f.name in _SECTIONS:
            out.update(dataclasses.asdict(v))
        else:
            out[f.name] = v
    return out


def dumps(cfg: RunConfig) -> str:
    lines = []
    flat = flatten(cfg)
    for sec in list(_SECTIONS) + [None]:
        keys = [k for k, (s, _) in KEYS.items() if s == sec]
        lines.append(f"# {sec or 'run'}")
        lines.extend(f"{k} = {_format_value(flat[k], KEYS[k][1])}" for k in keys)
    return "\n".join(lines) + "\n"


def write_resolved(cfg: RunConfig, out_dir) -> Path:
    path = Path(out_dir) / RESOLVED_NAME
    path.write_text(dumps(cfg), encoding="utf-8")
    return path
