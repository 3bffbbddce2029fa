"""Flat key=value run configuration.

One pair per line, '#' starts a comment, unknown keys are rejected and
every violated invariant names its key. Defaults encode the smallness
regime of the certified bounds (g_max = rossby_gate = 1/4, window budget
log(5/4)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    n: int = 0                          # required
    omega: float = -1.0                 # required
    nu: float = -1.0                    # required
    t_end: float = -1.0                 # required
    ic: str = ""                        # required
    box_length: float = 2.0 * math.pi
    amplitude: float = 1.0
    dt: float = 0.0                     # 0 -> automatic CFL step
    dt_max: float = 0.1
    cfl_safety: float = 0.5
    g_max: float = 0.25
    rossby_gate: float = 0.25
    grad_u_budget: float = math.log(5.0 / 4.0)
    det_min: float = 0.5
    tracers_per_axis: int = 8
    pair_count: int = 100
    pair_gap_min: float = 0.0           # 0 -> L/16
    pair_gap_max: float = 0.0           # 0 -> L/2
    slab_enable: int = 1
    slab_z1_frac: float = 0.25
    slab_z2_frac: float = 0.75
    slab_half_width_frac: float = 0.03125
    slab_points_per_axis: int = 6
    diag_every: int = 10
    checkpoint_every: int = 0           # steps; 0 -> final checkpoint only
    seed: int = 0
    evolve_v: int = 1
    resolve_warn_ratio: float = 1e-6

    def validate(self) -> None:
        for key in ("n", "omega", "nu", "t_end", "ic"):
            val = getattr(self, key)
            if (isinstance(val, str) and not val) or (
                not isinstance(val, str) and val < 0
            ) or (key == "n" and val == 0):
                raise ConfigError(f"missing required key '{key}'")
        if self.n < 8 or self.n % 2 != 0:
            raise ConfigError("n must be even and at least 8")
        for key in ("box_length", "t_end"):
            if getattr(self, key) <= 0:
                raise ConfigError(f"{key} must be positive")
        for key in (
            "omega", "nu", "amplitude", "dt", "dt_max", "g_max", "rossby_gate",
            "grad_u_budget", "det_min", "pair_gap_min", "pair_gap_max",
            "slab_half_width_frac", "resolve_warn_ratio", "cfl_safety",
        ):
            if getattr(self, key) < 0:
                raise ConfigError(f"{key} must be nonnegative")
        for key in ("tracers_per_axis", "slab_points_per_axis"):
            if getattr(self, key) < 2:
                raise ConfigError(f"{key} must be at least 2")
        for key in ("pair_count", "diag_every", "checkpoint_every", "seed",
                    "slab_enable", "evolve_v"):
            if getattr(self, key) < 0:
                raise ConfigError(f"{key} must be nonnegative")
        if self.diag_every == 0:
            raise ConfigError("diag_every must be positive")

    # derived values ------------------------------------------------------
    def pair_gap_range(self) -> tuple[float, float]:
        L = self.box_length
        lo = self.pair_gap_min if self.pair_gap_min > 0 else L / 16.0
        hi = self.pair_gap_max if self.pair_gap_max > 0 else L / 2.0
        return (lo, hi)

    def slab_spec(self):
        if not self.slab_enable:
            return None
        L = self.box_length
        return (
            self.slab_z1_frac * L,
            self.slab_z2_frac * L,
            self.slab_half_width_frac * L,
            self.slab_points_per_axis,
        )


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}
_INT_KEYS = {
    f.name for f in fields(RunConfig) if f.type in ("int", int)
}


def parse_config(text: str) -> RunConfig:
    """Parse the flat key=value grammar into a validated RunConfig."""
    cfg = RunConfig()
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got '{raw.strip()}'")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key not in _FIELD_TYPES:
            raise ConfigError(f"line {lineno}: unknown key '{key}'")
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate key '{key}'")
        seen.add(key)
        if key == "ic":
            setattr(cfg, key, val)
            continue
        try:
            num = int(val) if key in _INT_KEYS else float(val)
        except ValueError:
            raise ConfigError(
                f"line {lineno}: malformed number for key '{key}': '{val}'"
            ) from None
        if not np.isfinite(num):
            raise ConfigError(f"line {lineno}: non-finite value for key '{key}'")
        setattr(cfg, key, num)
    cfg.validate()
    return cfg


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())
