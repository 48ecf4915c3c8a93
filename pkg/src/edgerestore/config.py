"""Run configuration loaded from plain ``key=value`` text files."""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

from edgerestore.errors import DataError


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    # dataset
    n_train: int = 128
    n_test: int = 16
    image_size: int = 256
    noise_level: float = 1.0
    # generator
    base_width: int = 8
    iterations: int = 2000
    batch_size: int = 8
    learning_rate: float = 3e-4
    # conversion
    calib_images: int = 16
    # fine-tune
    ft_iterations: int = 1500
    ft_batch_size: int = 8
    ft_learning_rate: float = 1e-3
    ft_crop: int = 64
    val_fraction: float = 0.2
    # inference / bench
    overlap: int = 0
    jobs: int = 1
    bench_images: int = 2
    bench_repetitions: int = 10
    bench_warmup: int = 3

    def with_overrides(self, **overrides) -> "RunConfig":
        known = {f.name for f in fields(self)}
        bad = set(overrides) - known
        if bad:
            raise DataError(f"unknown config keys: {sorted(bad)}")
        return replace(self, **{k: _coerce(self, k, v) for k, v in overrides.items() if v is not None})

    def to_text(self) -> str:
        return "".join(f"{f.name}={getattr(self, f.name)}\n" for f in fields(self))


def _coerce(cfg: RunConfig, key: str, value):
    kind = type(getattr(cfg, key))
    try:
        return kind(value) if kind is not int else int(str(value), 0)
    except ValueError as exc:
        raise DataError(f"config key {key!r}: cannot parse {value!r} as {kind.__name__}") from exc


def parse_config_text(text: str) -> dict:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"config line {lineno}: expected key=value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = value
    return values


def load_config(path=None, **overrides) -> RunConfig:
    cfg = RunConfig()
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise DataError(f"config file not found: {p}")
        cfg = cfg.with_overrides(**parse_config_text(p.read_text()))
    return cfg.with_overrides(**overrides)
