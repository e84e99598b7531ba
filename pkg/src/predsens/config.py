"""Run configuration: a JSON file, overridden by command-line flags."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

from .data import ADULT, TableFormat
from .errors import ConfigError
from .model import DEFAULT_HIDDEN


@dataclass
class RunConfig:
    train: str | None = None
    test: str | None = None
    model: str | None = None
    input: str | None = None
    records: str | None = None
    schema: str | None = None
    out_dir: str = "out"

    # table format; None keeps the Adult defaults
    columns: list[str] | None = None
    header: bool | None = None
    label_column: str | None = None
    missing_marker: str | None = None
    continuous: list[str] | None = None

    protected: str = "sex"
    privileged: str = "Male"
    label_positive: str = ">50K"

    hidden: list[int] = field(default_factory=lambda: list(DEFAULT_HIDDEN))
    epochs: int = 20
    batch_size: int = 128
    learning_rate: float = 0.05
    seed: int | None = None

    threshold: float = math.inf
    grid: list[float] | str | None = None  # None or "deciles": observed deciles plus infinity
    aggregation: str = "l2"
    space: str = "probability"

    probe_radius: float | None = None
    probe_n: int = 100
    probe_rows: int = 100

    @classmethod
    def from_file(cls, path) -> RunConfig:
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"config {path} must hold a JSON object")
        return cls().merged({k.replace("-", "_"): v for k, v in raw.items()}, strict=True)

    def merged(self, overrides: dict, strict: bool = False) -> RunConfig:
        known = {f.name for f in fields(self)}
        unknown = set(overrides) - known
        if unknown and strict:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values.update({k: v for k, v in overrides.items() if k in known and v is not None})
        cfg = RunConfig(**values)
        cfg.threshold = float(cfg.threshold)
        if cfg.grid == "deciles":
            cfg.grid = None
        if cfg.grid is not None:
            cfg.grid = [float(t) for t in cfg.grid]
        return cfg

    def table_format(self) -> TableFormat:
        kw = {}
        if self.columns is not None:
            kw["columns"] = tuple(self.columns)
            kw["continuous"] = None
        if self.header:
            kw["columns"] = None
            kw["header"] = True
            kw["continuous"] = None
        if self.label_column is not None:
            kw["label_column"] = self.label_column
        if self.missing_marker is not None:
            kw["missing_marker"] = self.missing_marker
        if self.continuous is not None:
            kw["continuous"] = tuple(self.continuous)
        return TableFormat(**{**ADULT.__dict__, **kw})

    def require(self, *names: str) -> None:
        for name in names:
            value = getattr(self, name)
            if value is None:
                raise ConfigError(f"missing required setting {name!r} (flag --{name.replace('_', '-')})")
            if name in ("train", "test", "model", "records", "schema") and not Path(value).exists():
                raise ConfigError(f"{name} path does not exist: {value}")
        if self.threshold < 0 or math.isnan(self.threshold):
            raise ConfigError(f"threshold must be >= 0, got {self.threshold}")
