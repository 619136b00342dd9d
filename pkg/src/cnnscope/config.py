"""Run configuration: a TOML-like key/value file plus flag overrides.

Config files are plain `key = value` lines; values are parsed as Python
literals where possible (numbers, booleans, lists, quoted strings) and fall
back to bare strings.  Lines starting with '#' are comments.
"""

from __future__ import annotations

import ast
from dataclasses import dataclass, field, fields, replace

from .network import NetworkSpec, default_spec

ALL_VIEWS = ("weight_grid", "image_grid", "distribution_grid", "trajectory")
PRUNE_MODES = ("off", "auto", "interactive")


@dataclass
class RunConfig:
    dataset: str = "synthetic"  # "synthetic" or "mnist"
    mnist_dir: str = ""
    train_limit: int = 0  # 0 = all samples
    test_limit: int = 0
    synthetic_train: int = 2000
    synthetic_test: int = 500
    lr: float = 0.001
    batch_size: int = 50
    epochs: int = 1
    seed: int = 0
    layers: tuple[int, ...] = (0,)  # instrumented conv layers
    views: tuple[str, ...] = ALL_VIEWS
    traj_dims: tuple[int, int, int] = (0, 1, 2)
    traj_layer: int = 0
    pcc_threshold: float = 0.97
    prune_mode: str = "off"
    prune_interval: int = 600
    snapshot_interval: int = 500
    out_dir: str = "runs/out"
    listen: str = ""  # "host:port"; empty disables streaming
    queue_groups: int = 8
    snapshot_format: str = "vtp"  # view files alongside snapshots: "vtp", "csv" or "both"
    network: NetworkSpec = field(default_factory=default_spec)

    def validate(self) -> "RunConfig":
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be at least 1")
        if len(set(self.traj_dims)) != 3:
            raise ValueError("traj_dims must be three distinct indices")
        if self.prune_interval < 1 or self.snapshot_interval < 1:
            raise ValueError("intervals must be positive")
        if self.prune_mode not in PRUNE_MODES:
            raise ValueError(f"prune_mode must be one of {PRUNE_MODES}")
        if self.dataset not in ("synthetic", "mnist"):
            raise ValueError("dataset must be 'synthetic' or 'mnist'")
        unknown = set(self.views) - set(ALL_VIEWS)
        if unknown:
            raise ValueError(f"unknown views: {sorted(unknown)}")
        return self


_TUPLE_FIELDS = {"layers", "views", "traj_dims"}


def _coerce(name: str, value):
    if name in _TUPLE_FIELDS:
        if isinstance(value, str):
            value = [v.strip() for v in value.split(",") if v.strip()]
        return tuple(int(v) if name != "views" else str(v) for v in value)
    return value


def parse_config_file(path: str) -> dict:
    """Parse `key = value` lines into a dict of python values."""
    out: dict = {}
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, _, raw = line.partition("=")
            key, raw = key.strip(), raw.strip()
            try:
                value = ast.literal_eval(raw)
            except (ValueError, SyntaxError):
                value = raw
            out[key] = value
    return out


def build_config(file_values: dict | None = None, overrides: dict | None = None) -> RunConfig:
    """Layer config-file values then explicit overrides over the defaults."""
    cfg = RunConfig()
    known = {f.name for f in fields(RunConfig)}
    for source in (file_values or {}), (overrides or {}):
        updates = {}
        for key, value in source.items():
            if value is None:
                continue
            if key not in known:
                raise ValueError(f"unknown config key {key!r}")
            updates[key] = _coerce(key, value)
        cfg = replace(cfg, **updates)
    return cfg.validate()
