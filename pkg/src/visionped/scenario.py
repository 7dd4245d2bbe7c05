"""Corridor scenarios, run configuration and deterministic seeding.

Configs are YAML files with a ``schema_version`` field::

    schema_version: 1
    model: vision_nonlocal      # no_direction_control | vision_nonlocal
                                # | vision_local | social_force
    scenario: {width: 50, height: 20, counts: [40, 40], spacing: 1.68, ...}
    vision: {speed_c: 1.5, sigma_b: 0.6, radius_R: 1.68, lambda: 0.0, ...}
    weights: {h_factor: 3.0, alpha_shape: 4.0}
    step: {dt: 0.00042, integrator: euler}
    repulsion: null             # or {k_n: 1.0, gamma_n: 0.01, ...}
    social_force: null          # or {k_n: 100, gamma_n: 1.0, ...}
    run: {t_end: 45, snapshot_every: 1.0, density_grid_dx: 0.5, ...}
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import yaml

from .dynamics import Domain, ExitSegment, Mode, RepulsionParams, State, StepConfig
from .errors import ConfigError, Overfull
from .interaction import VisionParams
from .meshfree import WeightParams
from .socialforce import SocialForceParams

SCHEMA_VERSION = 1
MODELS = tuple(m.value for m in Mode) + ("social_force",)


@dataclass(frozen=True)
class Scenario:
    width: float = 50.0
    height: float = 20.0
    exit_width: float = 10.0
    goals: tuple = ((50.0, 10.0), (0.0, 10.0))
    counts: tuple = (40, 40)
    seeding: str = "lattice"
    seed: int = 0
    spacing: float = 1.68
    band_height: float = 13.44  # read off the initial-distribution figure
    initial_rho: float | None = None  # default 1 / spacing**2

    def __post_init__(self):
        object.__setattr__(self, "goals", tuple(tuple(float(v) for v in g) for g in self.goals))
        object.__setattr__(self, "counts", tuple(int(k) for k in self.counts))
        if len(self.counts) != 2 or len(self.goals) != 2:
            raise ConfigError("the corridor scenario has exactly two groups")
        if min(self.counts) < 0 or sum(self.counts) == 0:
            raise ConfigError("group counts must be >= 0 with at least one particle")
        if self.seeding not in ("lattice", "random"):
            raise ConfigError(f"seeding must be 'lattice' or 'random', got {self.seeding!r}")
        if not (self.spacing > 0 and self.width > 0 and self.height > 0):
            raise ConfigError("spacing and domain size must be > 0")
        if not 0 < self.exit_width <= self.height:
            raise ConfigError("exit width must lie in (0, height]")
        for k, (gx, gy) in enumerate(self.goals):
            side_x = self.width if k == 0 else 0.0
            behind = gx >= self.width if k == 0 else gx <= 0.0
            if not (behind and abs(gy - self.height / 2) <= self.exit_width / 2):
                raise ConfigError(f"goal {k} must lie on or behind its exit at x = {side_x}")

    @property
    def rho0(self) -> float:
        return self.initial_rho if self.initial_rho is not None else 1.0 / self.spacing ** 2

    def domain(self) -> Domain:
        lo = self.height / 2 - self.exit_width / 2
        hi = self.height / 2 + self.exit_width / 2
        return Domain(self.width, self.height, self.goals,
                      (ExitSegment("right", lo, hi), ExitSegment("left", lo, hi)))

    def band(self):
        """Rows, columns and the rectangle (x0, x1, y0, y1) of the left band."""
        rows = max(1, int(math.floor(self.band_height / self.spacing + 1e-9)))
        cols = [int(math.ceil(k / rows)) for k in self.counts]
        ncol = max(cols)
        y0 = self.height / 2 - rows * self.spacing / 2
        return rows, ncol, (0.0, ncol * self.spacing, y0, y0 + rows * self.spacing)


def seed_particles(sc: Scenario) -> State:
    """Initial state: group 0 in a band at the left wall heading for goal 0,
    group 1 mirrored at the right wall. Directions point at each goal."""
    rows, ncol, (x0, x1, y0, y1) = sc.band()
    if rows * sc.spacing > sc.height + 1e-9 or 2 * ncol * sc.spacing > sc.width + 1e-9:
        raise Overfull(f"{sc.counts} particles do not fit at spacing {sc.spacing}")
    rng = np.random.default_rng(sc.seed)
    pos = []
    group = []
    for g, count in enumerate(sc.counts):
        if sc.seeding == "lattice":
            k = np.arange(count)
            col, row = k // rows, k % rows
            x = (col + 0.5) * sc.spacing
            y = y0 + (row + 0.5) * sc.spacing
        else:
            x = rng.uniform(x0, x1, count)
            y = rng.uniform(y0, y1, count)
        if g == 1:
            x = sc.width - x
        pos.append(np.column_stack([x, y]))
        group.append(np.full(count, g))
    pos = np.vstack(pos)
    group = np.concatenate(group)
    goals = np.asarray(sc.goals)
    d = goals[group] - pos
    dirs = d / np.linalg.norm(d, axis=1)[:, None]
    n = len(pos)
    return State(pos, dirs, np.full(n, sc.rho0), group, np.ones(n, bool))


@dataclass(frozen=True)
class RunSettings:
    t_end: float = 45.0
    snapshot_every: float = 1.0
    density_grid_dx: float = 0.5
    output_dir: str = "out"
    single_snapshot_file: bool = False
    stop_when_empty: bool = True
    psi_cache_dir: str | None = None
    threads: int = 1


@dataclass(frozen=True)
class RunConfig:
    model: str = Mode.VISION_NONLOCAL.value
    scenario: Scenario = field(default_factory=Scenario)
    vision: VisionParams = field(default_factory=VisionParams)
    h_factor: float = 3.0
    alpha_shape: float = 4.0
    dt: float = 0.00042
    integrator: str = "euler"
    repulsion: RepulsionParams | None = None
    social_force: SocialForceParams | None = None
    run: RunSettings = field(default_factory=RunSettings)

    def __post_init__(self):
        if self.model not in MODELS:
            raise ConfigError(f"model must be one of {MODELS}, got {self.model!r}")
        if self.model == Mode.VISION_LOCAL.value and not self.vision.lam > 0:
            raise ConfigError("vision_local needs lambda > 0")
        if self.model == "social_force" and self.social_force is None:
            raise ConfigError("social_force model needs a social_force block")
        if self.run.t_end <= 0 or self.run.snapshot_every <= 0 or self.run.density_grid_dx <= 0:
            raise ConfigError("t_end, snapshot_every and density_grid_dx must be > 0")
        self.weights  # validates h and alpha
        self.step_config().validate_cfl(self.vision.speed_c, self.scenario.spacing)

    @property
    def weights(self) -> WeightParams:
        return WeightParams(self.h_factor * self.scenario.spacing, self.alpha_shape)

    def step_config(self) -> StepConfig:
        mode = Mode.VISION_NONLOCAL if self.model == "social_force" else Mode(self.model)
        return StepConfig(self.dt, mode, self.repulsion, self.integrator)

    def with_overrides(self, seed=None, out_dir=None, threads=None) -> "RunConfig":
        cfg = self
        if seed is not None:
            cfg = replace(cfg, scenario=replace(cfg.scenario, seed=int(seed)))
        if out_dir is not None:
            cfg = replace(cfg, run=replace(cfg.run, output_dir=str(out_dir)))
        if threads is not None:
            cfg = replace(cfg, run=replace(cfg.run, threads=int(threads)))
        return cfg

    # --- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        vision = asdict(self.vision)
        vision["lambda"] = vision.pop("lam")
        sc = asdict(self.scenario)
        sc["goals"] = [list(g) for g in self.scenario.goals]
        sc["counts"] = list(self.scenario.counts)
        return {
            "schema_version": SCHEMA_VERSION,
            "model": self.model,
            "scenario": sc,
            "vision": vision,
            "weights": {"h_factor": self.h_factor, "alpha_shape": self.alpha_shape},
            "step": {"dt": self.dt, "integrator": self.integrator},
            "repulsion": None if self.repulsion is None else asdict(self.repulsion),
            "social_force": None if self.social_force is None else asdict(self.social_force),
            "run": asdict(self.run),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        version = d.pop("schema_version", None)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")
        known = {"model", "scenario", "vision", "weights", "step", "repulsion", "social_force", "run"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            vision = dict(d.get("vision") or {})
            if "lambda" in vision:
                vision["lam"] = vision.pop("lambda")
            weights = d.get("weights") or {}
            stepd = d.get("step") or {}
            rep = d.get("repulsion")
            sf = d.get("social_force")
            return cls(
                model=d.get("model", Mode.VISION_NONLOCAL.value),
                scenario=_build(Scenario, d.get("scenario") or {}),
                vision=_build(VisionParams, vision),
                h_factor=float(weights.get("h_factor", 3.0)),
                alpha_shape=float(weights.get("alpha_shape", 4.0)),
                dt=float(stepd.get("dt", 0.00042)),
                integrator=stepd.get("integrator", "euler"),
                repulsion=None if rep is None else _build(RepulsionParams, rep),
                social_force=None if sf is None else _build(SocialForceParams, sf),
                run=_build(RunSettings, d.get("run") or {}),
            )
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def dump(self, path) -> None:
        Path(path).write_text(yaml.safe_dump(self.to_dict(), sort_keys=False))

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            data = yaml.safe_load(Path(path).read_text())
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: config must be a mapping")
        return cls.from_dict(data)

    def content_hash(self) -> str:
        """sha1 of the config minus where and how it runs (output dir, cache, threads)."""
        d = self.to_dict()
        for key in ("output_dir", "psi_cache_dir", "threads"):
            d["run"].pop(key)
        blob = yaml.safe_dump(d, sort_keys=True)
        return hashlib.sha1(blob.encode()).hexdigest()


def _build(klass, d: dict):
    names = {f.name for f in fields(klass)}
    unknown = set(d) - names
    if unknown:
        raise ConfigError(f"unknown {klass.__name__} keys: {sorted(unknown)}")
    return klass(**d)
