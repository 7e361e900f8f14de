"""Flat key=value run configuration with command-line overrides.

Every sampling / guidance constant lives here so a single text file plus a
seed reproduces a run byte-for-byte.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

from .sampler import GuidanceSchedule, NoiseSchedule, make_schedule
from .transport import SinkhornConfig


@dataclass
class RunConfig:
    # inputs (paths; empty string = not supplied)
    map: str = ""
    reference: str = ""
    template: str = ""
    outdir: str = "out"

    # prior registry
    prior: str = "chain-two-mode"
    prior_hinge_deg: float = 72.0
    prior_tau: float = 1.0
    prior_minor_weight: float = 0.05

    # noise schedule
    sigma_min: float = 0.004
    sigma_max: float = 160.0
    rho: float = 7.0
    n_steps: int = 200
    step_scale: float = 1.0
    churn: float = 0.0
    churn_floor: float = 0.05
    noise_scale: float = 1.0

    # guidance stages: preset kind, or "custom" using the t_* fields
    schedule_kind: str = "synthetic"
    t_warm: int = 125
    t_global: int = 25
    t_local: int = 25
    t_relax: int = 25
    lambda_global_start: float = 0.25
    lambda_global_end: float = 0.05
    lambda_local: float = 0.5

    # forward model / transport
    resolution: float = 2.0
    blur_sigma: float = 0.0
    epsilon: float = 1.0
    reach: float = 10.0
    sinkhorn_max_iters: int = 500
    sinkhorn_tol: float = 1e-6
    k_points: int = 0          # 0 = derive from atom count and voxel size

    # registration protocol
    register: bool = False
    dock_rotations: int = 576
    dock_per_sample: bool = False

    # run shape
    n_samples: int = 25
    n_replicates: int = 3
    seed: int = 0

    def noise_schedule(self) -> NoiseSchedule:
        return NoiseSchedule(sigma_min=self.sigma_min, sigma_max=self.sigma_max,
                             rho=self.rho, n_steps=self.n_steps,
                             step_scale=self.step_scale, churn=self.churn,
                             churn_floor=self.churn_floor,
                             noise_scale=self.noise_scale)

    def guidance_schedule(self) -> GuidanceSchedule:
        if self.schedule_kind == "custom":
            gs = GuidanceSchedule(self.t_warm, self.t_global, self.t_local,
                                  self.t_relax,
                                  lambda_global_start=self.lambda_global_start,
                                  lambda_global_end=self.lambda_global_end,
                                  lambda_local=self.lambda_local)
        else:
            base = make_schedule(self.schedule_kind, self.n_steps)
            gs = GuidanceSchedule(base.t_warm, base.t_global, base.t_local,
                                  base.t_relax,
                                  lambda_global_start=self.lambda_global_start,
                                  lambda_global_end=self.lambda_global_end,
                                  lambda_local=self.lambda_local)
        if gs.n_steps != self.n_steps:
            raise ConfigError(f"guidance stages sum to {gs.n_steps}, "
                              f"n_steps = {self.n_steps}")
        return gs

    def sinkhorn_config(self) -> SinkhornConfig:
        reach = self.reach if self.reach > 0 else None
        return SinkhornConfig(epsilon=self.epsilon, reach=reach,
                              max_iters=self.sinkhorn_max_iters,
                              tol=self.sinkhorn_tol)


class ConfigError(ValueError):
    pass


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, text: str):
    typ = _FIELD_TYPES[key]
    text = text.strip()
    if typ == "bool":
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {text!r}")
    try:
        if typ == "int":
            return int(text)
        if typ == "float":
            return float(text)
    except ValueError:
        raise ConfigError(f"{key}: expected {typ}, got {text!r}") from None
    return text


def apply_setting(cfg: RunConfig, key: str, value: str) -> None:
    if key not in _FIELD_TYPES:
        raise ConfigError(f"unknown config key {key!r}")
    setattr(cfg, key, _coerce(key, value))


def load_config(path: str | None = None, overrides=()) -> RunConfig:
    """Parse `key = value` lines (# comments allowed), then apply overrides."""
    cfg = RunConfig()
    if path is not None:
        with open(path) as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected key=value, "
                                      f"got {raw.rstrip()!r}")
                key, value = line.split("=", 1)
                apply_setting(cfg, key.strip(), value)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, value = item.split("=", 1)
        apply_setting(cfg, key.strip(), value)
    return cfg


def config_text(cfg: RunConfig) -> str:
    """Canonical key=value dump, suitable for re-loading."""
    lines = [f"{f.name} = {getattr(cfg, f.name)}" for f in fields(RunConfig)]
    return "\n".join(lines) + "\n"
