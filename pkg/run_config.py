"""
run_config.py - Run configuration for the reconstruction pipeline

A RunConfig holds the full parameter schedule across runs r = 1..R. It loads
from a flat JSON object (the presets under presets/), takes command-line
overrides on top, and rejects unknown keys.

Usage:
    from run_config import load_config
    config = load_config("presets/square.json", overrides={"runs": 2})
    config.operator_for(3)   # "cweno" under the default p1+cweno schedule

Dependencies:
    - (stdlib only: json, dataclasses)
"""
import json
import os
from dataclasses import asdict, dataclass, field, fields

from errors import ConfigError

OPERATOR_SCHEDULES = ("p1+cweno", "p1", "cweno")
EXPORT_KINDS = ("csv", "vtk", "obj", "db")
EXACT_SHAPES = ("circle", "sphere", "square", "cube-spheres", "cube-spheres-aligned")


@dataclass
class RunConfig:
    input: str = None
    input_format: str = None
    outdir: str = "out"
    runs: int = 3
    cs: float = 1.0
    domain_halfwidth: float = 1.2
    dimension: int = None
    min_level: int = 2
    operator_schedule: str = "p1+cweno"
    p_schedule: list = field(default_factory=lambda: [1, 2])
    mu_schedule: list = field(default_factory=lambda: [0.05, 1.0])
    dt_factor: float = 1.5
    stop_tol: float = 1e-4
    stop_window: int = 10
    min_iterations: int = 10
    max_iterations: int = 100
    reinit_every: int = 1
    cavity: bool = False
    cavity_distance_factor: float = 4.0
    cavity_gradient_threshold: float = 0.9
    degenerate_D: float = 1e-3
    degenerate_alpha: float = 1.0
    sample_fraction: float = 0.10
    cweno_d0: float = 0.75
    newton_max_iter: int = 20
    newton_tol: float = 1e-10
    projection_tol: float = 1e-8
    seed_clamp: float = 2.0
    reinit_keep_tol: float = 0.02
    distance_references: int = 4
    seed: int = 0
    workers: int = 1
    exports: list = field(default_factory=lambda: ["csv", "vtk", "obj"])
    exact: str = None
    session: str = None

    # ------------------------------------------------------------------
    def validate(self):
        if not self.input:
            raise ConfigError("no input point cloud given")
        if int(self.runs) < 1:
            raise ConfigError(f"runs must be >= 1, got {self.runs}")
        if not float(self.cs) > 0:
            raise ConfigError(f"C_S must be positive, got {self.cs}")
        if not float(self.domain_halfwidth) > 1.0:
            raise ConfigError(f"domain half-width M must exceed 1, got {self.domain_halfwidth}")
        if self.dimension is not None and self.dimension not in (2, 3):
            raise ConfigError(f"dimension must be 2 or 3, got {self.dimension}")
        if self.operator_schedule not in OPERATOR_SCHEDULES:
            raise ConfigError(f"operator_schedule must be one of {OPERATOR_SCHEDULES}, got '{self.operator_schedule}'")
        if len(self.p_schedule) != 2 or len(self.mu_schedule) != 2:
            raise ConfigError("p_schedule and mu_schedule take two values: [first run(s), later/last run]")
        if min(self.p_schedule) < 1 or min(self.mu_schedule) < 0:
            raise ConfigError("p must be >= 1 and mu >= 0")
        if not self.dt_factor > 0:
            raise ConfigError(f"dt_factor must be positive, got {self.dt_factor}")
        if self.min_iterations < 1 or self.max_iterations < self.min_iterations:
            raise ConfigError("need 1 <= min_iterations <= max_iterations")
        if self.stop_window < 1 or self.reinit_every < 1 or self.workers < 1:
            raise ConfigError("stop_window, reinit_every and workers must be >= 1")
        if self.distance_references < 1:
            raise ConfigError(f"distance_references must be >= 1, got {self.distance_references}")
        if self.reinit_keep_tol < 0:
            raise ConfigError(f"reinit_keep_tol must be >= 0, got {self.reinit_keep_tol}")
        if self.min_level < 0:
            raise ConfigError(f"min_level must be >= 0, got {self.min_level}")
        unknown = [e for e in self.exports if e not in EXPORT_KINDS]
        if unknown:
            raise ConfigError(f"unknown export kinds {unknown}, expected a subset of {EXPORT_KINDS}")
        if self.exact is not None and self.exact not in EXACT_SHAPES:
            raise ConfigError(f"unknown exact shape '{self.exact}', expected one of {EXACT_SHAPES}")
        if not 0.0 < self.sample_fraction <= 1.0:
            raise ConfigError(f"sample_fraction must lie in (0, 1], got {self.sample_fraction}")
        return self

    # ------------------------------------------------------------------
    # schedules
    # ------------------------------------------------------------------
    def operator_for(self, r):
        if self.operator_schedule == "p1+cweno":
            return "cweno" if r == self.runs else "p1"
        return self.operator_schedule

    def p_for(self, r):
        return self.p_schedule[0] if r == 1 else self.p_schedule[1]

    def mu_for(self, r):
        return self.mu_schedule[0] if r < self.runs else self.mu_schedule[1]

    def to_dict(self):
        return asdict(self)


_KEYS = {f.name for f in fields(RunConfig)}


def from_dict(data, base_dir=None):
    unknown = sorted(set(data) - _KEYS)
    if unknown:
        raise ConfigError(f"unknown configuration keys: {unknown}")
    config = RunConfig(**data)
    # paths in a preset are relative to the preset file
    if base_dir:
        if config.input and not os.path.isabs(config.input):
            config.input = os.path.normpath(os.path.join(base_dir, config.input))
        if "outdir" in data and not os.path.isabs(config.outdir):
            config.outdir = os.path.normpath(os.path.join(base_dir, config.outdir))
    return config


def load_config(path=None, overrides=None):
    """JSON preset (optional) + overrides; None-valued overrides are ignored."""
    data = {}
    base_dir = None
    if path:
        try:
            with open(path, "r") as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON ({e})") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: configuration must be a flat JSON object")
        base_dir = os.path.dirname(os.path.abspath(path))
    config = from_dict(data, base_dir)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in _KEYS:
            raise ConfigError(f"unknown configuration key '{key}'")
        setattr(config, key, value)
    return config.validate()
