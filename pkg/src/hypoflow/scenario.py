"""Scenario files: named profiles, grid/model builders and strict JSON IO.

A scenario is a flat JSON object.  Unknown keys are rejected, round
trips are lossless, and the sha256 of the canonical serialisation is
embedded in every artifact a run produces.
"""

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .errors import ConfigError
from .grid import Grid, PhaseField
from .model import KineticModel, maxwellian_background

TEMPERATURE_PROFILES = ("constant", "sinusoidal", "two_bump")
FORCE_PROFILES = ("zero", "sinusoidal", "potential_gradient", "weak_decay")
PERTURBATION_PROFILES = ("density_mode", "random")


@dataclass
class ScenarioConfig:
    """Everything needed to reproduce one run."""

    name: str = "default"
    collision: str = "bgk"                 # fp | bgk
    n_x: int = 128
    n_v: int = 128
    length_x: float = 2.0 * np.pi          # torus length, or box width (wall mode)
    v_max: float = 6.0
    window: float = 1.0                    # certificate window T
    windows: int = 8                       # windows evolved for rate fitting
    slab_cells: int = 32                   # time cells of the certificate slab
    wall_x: bool = False
    transport_order: int = 1
    cfl_fraction: float = 0.9
    temperature_profile: str = "sinusoidal"
    temperature_base: float = 1.0
    temperature_amplitude: float = 0.5
    temperature_modes: int = 1
    force_profile: str = "zero"
    force_amplitude: float = 0.0
    force_modes: int = 1
    force_decay_exponent: float = 0.5      # weak_decay: G ~ -x (1+x^2)^{-(1+d)/2}
    force_wall_margin: float = 0.1         # weak_decay cutoff width, fraction of box
    perturbation_profile: str = "density_mode"
    perturbation_modes: int = 1
    perturbation_amplitude: float = 1.0
    seed: int = 0
    moment_exponent_k: float = 2.0
    moment_exponent_ell: float = 1.0

    def __post_init__(self):
        if self.collision not in ("fp", "bgk"):
            raise ConfigError(f"collision must be fp or bgk, got {self.collision!r}")
        if self.temperature_profile not in TEMPERATURE_PROFILES:
            raise ConfigError(f"unknown temperature profile {self.temperature_profile!r}")
        if self.force_profile not in FORCE_PROFILES:
            raise ConfigError(f"unknown force profile {self.force_profile!r}")
        if self.perturbation_profile not in PERTURBATION_PROFILES:
            raise ConfigError(f"unknown perturbation {self.perturbation_profile!r}")
        if self.force_profile == "weak_decay" and not self.wall_x:
            raise ConfigError("weak_decay force requires wall_x mode")
        if self.transport_order not in (1, 2):
            raise ConfigError("transport_order must be 1 or 2")
        for key in ("n_x", "n_v", "windows", "slab_cells"):
            if getattr(self, key) <= 0:
                raise ConfigError(f"{key} must be positive")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown scenario keys: {sorted(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def canonical_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def config_hash(self):
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:16]


def load_scenario(path):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read scenario {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("scenario file must hold a JSON object")
    return ScenarioConfig.from_dict(data)


def save_scenario(path, config):
    with open(path, "w") as fh:
        fh.write(config.canonical_json())


def build_grid(config, refine=0):
    """Grid from a scenario; refine halves all mesh widths there and back."""
    factor = 2**refine
    n_x = config.n_x * factor
    n_v = config.n_v * factor
    dx = config.length_x / n_x
    dt_limit = config.cfl_fraction * dx / config.v_max
    x0 = -0.5 * config.length_x if config.wall_x else 0.0
    x_sample = x0 + (np.arange(n_x) + 0.5) * dx
    g_max = float(np.abs(force_profile(config, x_sample)).max())
    if g_max > 0.0:
        dt_limit = min(dt_limit, config.cfl_fraction * (2.0 * config.v_max / n_v) / g_max)
    n_steps = max(1, int(np.ceil(config.window / dt_limit)))
    dt = config.window / n_steps
    return Grid(
        n_x=n_x,
        length_x=config.length_x,
        n_v=n_v,
        v_max=config.v_max,
        dt=dt,
        window=config.window,
        wall_x=config.wall_x,
    )


def temperature_profile(config, x):
    length = config.length_x
    if config.temperature_profile == "constant":
        return np.full_like(x, config.temperature_base)
    if config.temperature_profile == "sinusoidal":
        return config.temperature_base + config.temperature_amplitude * np.sin(
            2.0 * np.pi * config.temperature_modes * x / length
        )
    centers = (
        np.array([-0.25, 0.25]) * length
        if config.wall_x
        else np.array([0.25, 0.75]) * length
    )
    width = length / 10.0
    bumps = sum(np.exp(-((x - c) ** 2) / (2.0 * width**2)) for c in centers)
    return config.temperature_base + config.temperature_amplitude * bumps


def force_profile(config, x):
    length = config.length_x
    if config.force_profile == "zero":
        return np.zeros_like(x)
    if config.force_profile == "sinusoidal":
        return config.force_amplitude * np.sin(
            2.0 * np.pi * config.force_modes * x / length
        )
    if config.force_profile == "potential_gradient":
        # G = -d/dx of amplitude * cos(2 pi k x / L), analytic
        k = 2.0 * np.pi * config.force_modes / length
        return config.force_amplitude * k * np.sin(k * x)
    # weak_decay: inward pull with algebraic tail, cut off near the walls
    d = config.force_decay_exponent
    g = -x * (1.0 + x**2) ** (-(1.0 + d) / 2.0)
    margin = config.force_wall_margin * length / 2.0
    half = length / 2.0
    s = np.clip((half - np.abs(x)) / margin, 0.0, 1.0)
    cutoff = s**3 * (10.0 - 15.0 * s + 6.0 * s * s)
    return config.force_amplitude * g * cutoff


def build_model(config, grid=None, refine=0):
    if grid is None:
        grid = build_grid(config, refine)
    x = grid.x
    temp = temperature_profile(config, x)
    background = maxwellian_background(grid, temp)
    force = np.repeat(force_profile(config, x)[:, None], grid.n_v, axis=1)
    return KineticModel(
        kind=config.collision,
        background=background,
        force=force,
        grid=grid,
        transport_order=config.transport_order,
    )


def build_perturbation(config, state, grid):
    """Zero-mass initial perturbation shaped by the scenario."""
    fs = state.f_stat.values
    if config.perturbation_profile == "density_mode":
        phase = 2.0 * np.pi * config.perturbation_modes * grid.x / config.length_x
        if grid.wall_x:
            # wall mode has no periodicity; use a centred odd profile
            profile = np.sin(np.pi * config.perturbation_modes * grid.x / (config.length_x / 2.0))
        else:
            profile = np.sin(phase + 0.7)
        values = fs * profile[:, None]
    else:
        rng = np.random.default_rng(config.seed)
        values = fs * rng.normal(size=fs.shape)
    values = config.perturbation_amplitude * values
    # exact zero mass: subtract the stationary state scaled by the excess
    excess = values.sum() * grid.cell_measure
    values = values - excess * fs
    return PhaseField(values, grid)


DEFAULT_SCENARIO = ScenarioConfig()

WEAK_SCENARIO = ScenarioConfig(
    name="weak_confinement",
    collision="bgk",
    n_x=256,
    n_v=48,
    length_x=80.0,
    v_max=6.0,
    window=4.0,
    windows=20,
    slab_cells=32,
    wall_x=True,
    temperature_profile="constant",
    temperature_amplitude=0.0,
    force_profile="weak_decay",
    force_amplitude=1.0,
    force_decay_exponent=0.5,
    perturbation_profile="density_mode",
)

NAMED_SCENARIOS = {
    "default": DEFAULT_SCENARIO,
    "weak": WEAK_SCENARIO,
}
