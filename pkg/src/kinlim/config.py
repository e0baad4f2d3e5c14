"""Experiment configuration: flat key = value sections, versioned schema.

The format is INI-style text, diff-friendly and language-agnostic; parse and
serialize round-trip losslessly, and the config hash tags every output file.
"""

from __future__ import annotations

import configparser
import hashlib
import io
from dataclasses import dataclass, field

from .errors import ConfigurationError

SCHEMA_VERSION = 1

EXPERIMENT_KINDS = (
    "relax",
    "bg-limit",
    "wc-limit",
    "grazing-scan",
    "chaos-scan",
    "series-check",
)

# positive floats: value must lie in (0, hi]; dt = 0 means "derive automatically"
_FLOAT_RANGES = {
    "epsilon": 1.0,
    "lam": 1e6,
    "box_side": 1e6,
    "beta": 1e9,
    "beam_speed": 1e3,
    "amplitude": 1e3,
    "cutoff": 1e3,
    "duration_mft": 1e4,
    "grid_vmax": 1e3,
    "hist_vmax": 1e3,
    "time_horizon": 1e4,
}
# integers: inclusive [lo, hi]; n_particles = 0 means "derive from the regime"
_INT_RANGES = {
    "grid_m": (3, 129),
    "bins": (1, 64),
    "samples": (1, 10**9),
    "replicas": (1, 10**7),
    "sphere_nodes": (2, 64),
}


@dataclass
class ExperimentConfig:
    """Parsed experiment description; unknown keys are rejected at parse time."""

    kind: str
    seed: int = 0
    replicas: int = 1
    # regime
    epsilon: float = 0.1
    epsilon_list: tuple[float, ...] = ()
    lam: float = 1.0
    box_side: float = 1.0
    n_ladder: tuple[int, ...] = ()
    # initial law
    law_type: str = "maxwellian"
    beta: float = 1.0
    u_mean: tuple[float, float, float] = (0.0, 0.0, 0.0)
    beam_speed: float = 1.0
    beam_axis: tuple[float, float, float] = (1.0, 0.0, 0.0)
    # potential
    potential: str = "bump"
    amplitude: float = 1.0
    cutoff: float = 1.0
    # numerics
    dt: float = 0.0
    duration_mft: float = 10.0
    grid_m: int = 17
    grid_vmax: float = 4.0
    bins: int = 8
    hist_vmax: float = 3.0
    samples: int = 10000
    n_particles: int = 0
    sphere_nodes: int = 6
    time_horizon: float = 0.5
    # output
    out_dir: str = "out"
    plots: bool = True

    def validate(self) -> None:
        if self.kind not in EXPERIMENT_KINDS:
            raise ConfigurationError(
                f"[experiment] kind must be one of {EXPERIMENT_KINDS}, got {self.kind!r}"
            )
        if self.seed < 0:
            raise ConfigurationError("[experiment] seed must be nonnegative")
        for attr, hi in _FLOAT_RANGES.items():
            val = getattr(self, attr)
            if not (0 < val <= hi):
                raise ConfigurationError(f"{attr} = {val} outside its valid range (0, {hi}]")
        for attr, (lo, hi) in _INT_RANGES.items():
            val = getattr(self, attr)
            if not (lo <= val <= hi):
                raise ConfigurationError(f"{attr} = {val} outside its valid range [{lo}, {hi}]")
        if self.dt < 0 or self.n_particles < 0:
            raise ConfigurationError("dt and n_particles must be nonnegative")
        if self.law_type not in ("maxwellian", "two-beam"):
            raise ConfigurationError(f"unknown initial law {self.law_type!r}")
        if self.potential not in ("bump", "gaussian"):
            raise ConfigurationError(f"unknown potential {self.potential!r}")
        for e in self.epsilon_list:
            if not (0 < e < 1):
                raise ConfigurationError(f"epsilon_list entry {e} outside (0, 1)")
        for n in self.n_ladder:
            if n < 2:
                raise ConfigurationError(f"n_ladder entry {n} too small")


_SECTIONS = {
    "experiment": ("kind", "seed", "replicas"),
    "regime": ("epsilon", "epsilon_list", "lambda", "box_side", "n_ladder"),
    "initial_law": ("type", "beta", "u_mean", "beam_speed", "beam_axis"),
    "potential": ("potential", "amplitude", "cutoff"),
    "numerics": (
        "dt",
        "duration_mft",
        "grid_m",
        "grid_vmax",
        "bins",
        "hist_vmax",
        "samples",
        "n_particles",
        "sphere_nodes",
        "time_horizon",
    ),
    "output": ("dir", "plots"),
}

_KEYMAP = {
    ("regime", "lambda"): "lam",
    ("initial_law", "type"): "law_type",
    ("potential", "potential"): "potential",
    ("output", "dir"): "out_dir",
}


def _parse_tuple(text: str, cast):
    text = text.strip()
    if not text:
        return ()
    return tuple(cast(tok) for tok in text.replace(",", " ").split())


def parse_config(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(f"config parse error: {exc}") from exc
    version = cp.get("experiment", "schema_version", fallback=str(SCHEMA_VERSION))
    if int(version) != SCHEMA_VERSION:
        raise ConfigurationError(f"unsupported schema_version {version}")

    cfg = ExperimentConfig(kind=cp.get("experiment", "kind", fallback=""))
    for section in cp.sections():
        if section not in _SECTIONS:
            raise ConfigurationError(f"unknown section [{section}]")
        for key, raw in cp.items(section):
            if key == "schema_version":
                continue
            if key not in _SECTIONS[section]:
                raise ConfigurationError(f"unknown key {key!r} in section [{section}]")
            attr = _KEYMAP.get((section, key), key)
            current = getattr(cfg, attr)
            try:
                if isinstance(current, bool):
                    value = raw.strip().lower() in ("1", "true", "yes", "on")
                elif isinstance(current, int):
                    value = int(raw)
                elif isinstance(current, float):
                    value = float(raw)
                elif isinstance(current, tuple):
                    cast = int if attr == "n_ladder" else float
                    value = _parse_tuple(raw, cast)
                else:
                    value = raw.strip()
            except ValueError as exc:
                raise ConfigurationError(
                    f"bad value for [{section}] {key} = {raw!r}: {exc}"
                ) from exc
            setattr(cfg, attr, value)
    cfg.validate()
    return cfg


def load_config(path) -> ExperimentConfig:
    with open(path, "r") as fh:
        return parse_config(fh.read())


def serialize_config(cfg: ExperimentConfig) -> str:
    cp = configparser.ConfigParser()
    inv = {v: k for k, v in _KEYMAP.items()}
    for section, keys in _SECTIONS.items():
        cp.add_section(section)
        if section == "experiment":
            cp.set(section, "schema_version", str(SCHEMA_VERSION))
        for key in keys:
            attr = _KEYMAP.get((section, key), key)
            val = getattr(cfg, attr)
            if isinstance(val, tuple):
                text = ", ".join(repr(x) if isinstance(x, float) else str(x) for x in val)
            elif isinstance(val, bool):
                text = "true" if val else "false"
            elif isinstance(val, float):
                text = repr(val)
            else:
                text = str(val)
            cp.set(section, key, text)
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(serialize_config(cfg).encode()).hexdigest()[:16]
