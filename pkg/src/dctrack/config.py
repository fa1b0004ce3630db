"""Runtime configuration, loadable from a plain key-value file.

File format: one ``key = value`` per line, ``#`` starts a comment. Unknown
keys are rejected so typos fail loudly.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from .errors import ParseError

FEATURE_MODES = ("selective", "all", "simple")
SOLVER_MODES = ("partitioned", "global")
LOSS_NORMS = ("k", "n")


@dataclass
class Config:
    # scene bounds in pixels (1.0 means coordinates are already normalized)
    scene_width: float = 1.0
    scene_height: float = 1.0
    # appearance
    hist_bins: int = 8
    kl_eps: float = 1e-6
    kl_cap: float = 10.0
    g1_neutral: float = 0.5
    appearance_history: int = 10  # stored instances per track; 0 = unlimited
    # motion coherence
    g2_radius: float = 0.1
    g2_cap: float = 20.0
    # lifecycle
    occlusion_horizon: int = 15
    # Kalman noise (normalized units)
    kalman_q: float = 1e-4
    kalman_r: float = 1e-4
    init_pos_var: float = 1e-4
    init_vel_var: float = 1e-2
    kalman_warmup: int = 25
    # correlation clustering
    cc_trials: int = 5
    cc_seed: int = 0
    # cost construction / solving
    feature_mode: str = "selective"
    solver: str = "partitioned"
    # training
    lambda_reg: float = 0.01
    loss_norm: str = "k"

    def __post_init__(self):
        if self.feature_mode not in FEATURE_MODES:
            raise ValueError(f"feature_mode must be one of {FEATURE_MODES}")
        if self.solver not in SOLVER_MODES:
            raise ValueError(f"solver must be one of {SOLVER_MODES}")
        if self.loss_norm not in LOSS_NORMS:
            raise ValueError(f"loss_norm must be one of {LOSS_NORMS}")
        if self.scene_width <= 0 or self.scene_height <= 0:
            raise ValueError("scene bounds must be positive")


def _coerce(field: dataclasses.Field, raw: str):
    if field.type in ("int", int):
        return int(raw)
    if field.type in ("float", float):
        return float(raw)
    return raw


def read_config(path) -> Config:
    fields = {f.name: f for f in dataclasses.fields(Config)}
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ParseError(path, line_no, "expected 'key = value'")
            key, _, raw = stripped.partition("=")
            key = key.strip()
            raw = raw.strip()
            if key not in fields:
                raise ParseError(path, line_no, f"unknown config key {key!r}")
            try:
                values[key] = _coerce(fields[key], raw)
            except ValueError:
                raise ParseError(path, line_no, f"bad value for {key!r}: {raw!r}")
    try:
        return Config(**values)
    except ValueError as exc:
        raise ParseError(path, 0, str(exc))


def write_config(path, cfg: Config) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for f in dataclasses.fields(Config):
            fh.write(f"{f.name} = {getattr(cfg, f.name)}\n")
