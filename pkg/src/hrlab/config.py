"""Experiment configuration: a sectioned key-value text format.

Sections: [parameters], [grid], [forcing], [solver], [initial],
[experiment], [output].  Unknown sections or keys are rejected with the
offending name; every seed is explicit (no wall-clock seeding), so a config
pins its outputs byte for byte.
"""

import configparser
from dataclasses import dataclass, field

from .grid import Grid, StateField, random_smooth_state
from .model import ForcingSpec, HrParameters
from .solver import ProcessConfig

import numpy as np


class ConfigError(ValueError):
    """Invalid experiment configuration."""


def _floats(text):
    return tuple(float(tok) for tok in text.split())


def _ints(text):
    return tuple(int(tok) for tok in text.split())


def _bool(text):
    t = text.strip().lower()
    if t in ("true", "yes", "on", "1"):
        return True
    if t in ("false", "no", "off", "0"):
        return False
    raise ValueError("not a boolean: %r" % text)


# key -> (coercion, default); every listed key is optional with its default
_SCHEMA = {
    "parameters": {
        "d1": (float, 0.05), "d2": (float, 0.05), "d3": (float, 0.05),
        "a": (float, 3.0), "b": (float, 1.0),
        "alpha": (float, 1.0), "beta": (float, 5.0),
        "q": (float, 0.02), "r": (float, 0.005),
        "c": (float, -1.6), "J": (float, 3.25),
    },
    "grid": {
        "lengths": (_floats, (1.0,)),
        "resolution": (_ints, (128,)),
    },
    "forcing": {
        "kind": (str, "zero"),
        "amplitudes": (_floats, (0.0, 0.0, 0.0)),
        "frequency": (float, 1.0),
        "phase": (float, 0.0),
        "seed": (int, 0),
    },
    "solver": {
        "dt": (float, 1e-3),
        "scheme": (str, "imex-euler"),
        "diffusion_method": (str, "tridiagonal-direct"),
        "max_steps": (int, 10_000_000),
        "blowup_threshold": (float, 1e12),
        "rescue_substeps": (_bool, True),
    },
    "initial": {
        "kind": (str, "zero"),            # zero | constant | random-smooth
        "u0": (float, 0.0), "v0": (float, 0.0), "w0": (float, 0.0),
        "norm_sq": (float, 1.0),
        "seed": (int, 0),
    },
    "experiment": {
        "tau": (float, 0.0),
        "horizon": (float, 10.0),
        "stride": (int, 1),
        "snapshot_stride": (int, 0),
        "seed": (int, 0),
        "n_runs": (int, 4),
        "members": (int, 16),
        "ball_k1_multiples": (_floats, (1.0,)),
        "taus": (_floats, (0.0,)),
        "horizons": (_floats, (5.0, 10.0, 20.0, 40.0, 80.0)),
        "tol_attr": (float, 1e-4),
        "T_Mstar": (float, 1.0),
        "pair_count": (int, 8),
        "pair_distance": (float, 1e-3),
        "t_offsets_short": (_floats, (0.01, 0.1)),
        "t_offsets_long": (_floats, (0.0, 1.0, 2.5, 5.0)),
        "radius_cap": (float, 100.0),
        "rho_samples": (int, 64),
        "B_norm_sq": (float, 0.0),
        "ode_dt_ratio": (int, 10),
        "checks": (str, "energy gronwall lipschitz"),
        "corrupt_sample": (int, -1),
        "norm_sq_range": (_floats, (0.01, 300.0)),
        "fiber_delta": (_floats, (1.0, 5.0)),
    },
    "output": {
        "directory": (str, "out"),
    },
}


@dataclass
class ExperimentConfig:
    params: HrParameters
    grid: Grid
    forcing: ForcingSpec
    solver: ProcessConfig
    initial: dict
    experiment: dict
    output_dir: str
    resolved: dict = field(default_factory=dict)


def parse_config(path, seed_override=None):
    """Parse and validate an experiment configuration file."""
    cp = configparser.ConfigParser(interpolation=None, strict=True)
    cp.optionxform = str
    read = cp.read(path)
    if not read:
        raise ConfigError("cannot read config file %r" % str(path))
    resolved = {}
    for section in cp.sections():
        if section not in _SCHEMA:
            raise ConfigError("unknown config section [%s]" % section)
    for section, keys in _SCHEMA.items():
        resolved[section] = {}
        present = dict(cp.items(section)) if cp.has_section(section) else {}
        for key in present:
            if key not in keys:
                raise ConfigError("unknown key %r in section [%s]"
                                  % (key, section))
        for key, (coerce, default) in keys.items():
            if key in present:
                try:
                    value = coerce(present[key])
                except (TypeError, ValueError) as exc:
                    raise ConfigError("bad value for %s.%s: %s"
                                      % (section, key, exc)) from exc
            else:
                value = default
            resolved[section][key] = value

    if seed_override is not None:
        resolved["forcing"]["seed"] = int(seed_override)
        resolved["initial"]["seed"] = int(seed_override)
        resolved["experiment"]["seed"] = int(seed_override)

    try:
        params = HrParameters(**resolved["parameters"])
        grid = Grid(resolved["grid"]["lengths"], resolved["grid"]["resolution"])
        forcing = ForcingSpec(kind=resolved["forcing"]["kind"],
                              amplitudes=resolved["forcing"]["amplitudes"],
                              frequency=resolved["forcing"]["frequency"],
                              phase=resolved["forcing"]["phase"],
                              seed=resolved["forcing"]["seed"])
        solver = ProcessConfig(**resolved["solver"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    initial = resolved["initial"]
    if initial["kind"] not in ("zero", "constant", "random-smooth"):
        raise ConfigError("unknown initial kind %r" % initial["kind"])

    cfg = ExperimentConfig(params=params, grid=grid, forcing=forcing,
                           solver=solver, initial=initial,
                           experiment=resolved["experiment"],
                           output_dir=resolved["output"]["directory"],
                           resolved=resolved)
    return cfg


def build_initial(cfg):
    """Construct the configured initial StateField."""
    kind = cfg.initial["kind"]
    if kind == "zero":
        return StateField.zeros(cfg.grid)
    if kind == "constant":
        return StateField.constant(cfg.grid, cfg.initial["u0"],
                                   cfg.initial["v0"], cfg.initial["w0"])
    rng = np.random.default_rng(cfg.initial["seed"])
    return random_smooth_state(cfg.grid, rng, norm_sq=cfg.initial["norm_sq"])


def resolved_json_safe(resolved):
    """Resolved config as plain JSON-serializable types."""
    out = {}
    for section, keys in resolved.items():
        out[section] = {}
        for key, value in keys.items():
            if isinstance(value, tuple):
                value = list(value)
            out[section][key] = value
    return out
