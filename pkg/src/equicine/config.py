"""Run configuration files.

A run config is INI-style text with four sections::

    [run]    seed, variant
    [data]   dataset sizes, frame geometry, coils, acceleration, noise
    [model]  unrolled-network settings
    [train]  optimiser and schedule

Every key has a default; unknown sections or keys are errors. All random
streams derive from ``[run] seed`` through labelled sub-seeds, so variants
trained from one config see identical data.
"""

from __future__ import annotations

import configparser
import zlib
from dataclasses import dataclass, field, fields

import numpy as np

from .train import TrainConfig
from .unroll import UnrollConfig, VARIANTS

__all__ = ["DataConfig", "RunConfig", "ConfigError", "parse_config", "serialize_config",
           "load_config", "sub_seed"]


class ConfigError(ValueError):
    pass


@dataclass
class DataConfig:
    n_train: int = 50
    n_val: int = 10
    n_test: int = 10
    T: int = 8
    H: int = 64
    W: int = 64
    n_coils: int = 4
    R: float = 8.0
    noise_sigma: float = 0.0

    def __post_init__(self):
        if min(self.n_train, self.n_val, self.n_test) < 0:
            raise ConfigError("sample counts must be non-negative")
        if self.H != self.W:
            raise ConfigError("frames must be square (H == W) for rotation equivariance")


@dataclass
class RunConfig:
    seed: int = 0
    variant: str = "dun-sre"
    data: DataConfig = field(default_factory=DataConfig)
    model: UnrollConfig = field(default_factory=lambda: UnrollConfig(K=5))
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"[run] variant: unknown variant {self.variant!r}")


def sub_seed(seed: int, label: str) -> int:
    """Independent 32-bit seed for a labelled random stream."""
    tag = zlib.crc32(label.encode("utf-8"))
    return int(np.random.SeedSequence([int(seed), tag]).generate_state(1)[0])


def _fmt(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(_fmt(x) for x in v)
    return str(v)


def _conv(key: str, text: str, default):
    text = text.strip()
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return low in ("true", "1", "yes")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            return tuple(None if x.strip().lower() == "none" else float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise ConfigError(f"key {key!r}: cannot read {text!r} as {type(default).__name__}") from None
    return text


def _section(cls, name, items: dict):
    proto = cls()
    known = {f.name: getattr(proto, f.name) for f in fields(cls)}
    kwargs = {}
    for key, text in items.items():
        if key not in known:
            raise ConfigError(f"[{name}] unknown key {key!r}")
        kwargs[key] = _conv(f"{name}.{key}", text, known[key])
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"[{name}] {exc}") from None


_SECTIONS = {"data": DataConfig, "model": UnrollConfig, "train": TrainConfig}


def parse_config(text: str) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, default_section="__none__")
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    unknown = set(cp.sections()) - set(_SECTIONS) - {"run"}
    if unknown:
        raise ConfigError(f"unknown section(s): {sorted(unknown)}")
    parts = {}
    for name, cls in _SECTIONS.items():
        items = dict(cp.items(name)) if cp.has_section(name) else {}
        if name == "model" and "K" not in items:
            items["K"] = "5"     # desk-scale default; the library default is 10
        parts[name] = _section(cls, name, items)
    run = dict(cp.items("run")) if cp.has_section("run") else {}
    for key in run:
        if key not in ("seed", "variant"):
            raise ConfigError(f"[run] unknown key {key!r}")
    seed = _conv("run.seed", run.get("seed", "0"), 0)
    variant = run.get("variant", "dun-sre").strip()
    return RunConfig(seed=seed, variant=variant, **parts)


def serialize_config(cfg: RunConfig) -> str:
    lines = ["[run]", f"seed = {cfg.seed}", f"variant = {cfg.variant}", ""]
    for name in _SECTIONS:
        obj = getattr(cfg, name)
        lines.append(f"[{name}]")
        for f in fields(obj):
            lines.append(f"{f.name} = {_fmt(getattr(obj, f.name))}")
        lines.append("")
    return "\n".join(lines)


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    try:
        return parse_config(text)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None
