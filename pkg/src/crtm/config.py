"""Experiment configuration: an INI-style file parsed with :mod:`configparser`.

Example::

    [experiment]
    command = evolve

    [model]
    V = 20
    L = 10
    epsilon = 0.05
    rate = constant
    k = 1.0

    [mesh]
    n_y = 100
    n_theta = 100

    [solver]
    dt = 0.001
    t_end = 4.0
    snapshot_times = 0.5, 4.0

Unknown sections or keys are rejected so that typos do not silently fall back
to defaults.
"""

from __future__ import annotations

import configparser
import hashlib
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

from .kernel import PROFILES, KernelSpec, constant_kernel

COMMANDS = ("evolve", "converge", "mc-compare", "asymptotic")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


# ---------------------------------------------------------------------------
# rate registry


def _rate_constant(p: dict, epsilon: float) -> KernelSpec:
    if p["k_top"] is not None or p["k_bottom"] is not None:
        raise ConfigError("model.k_top/k_bottom require rate = constant-with-distinct-boundary-rates")
    return constant_kernel(p["k"], epsilon, shape=PROFILES[p["profile"]])


def _rate_distinct(p: dict, epsilon: float) -> KernelSpec:
    k_top = p["k"] if p["k_top"] is None else p["k_top"]
    k_bot = p["k"] if p["k_bottom"] is None else p["k_bottom"]
    return constant_kernel(p["k"], epsilon, k_top=k_top, k_bottom=k_bot,
                           shape=PROFILES[p["profile"]])


RATE_REGISTRY = {
    "constant": _rate_constant,
    "constant-with-distinct-boundary-rates": _rate_distinct,
}


# ---------------------------------------------------------------------------
# schema


@dataclass
class ExperimentConfig:
    command: str = "evolve"
    # model
    V: float = 20.0
    L: float = 10.0
    epsilon: float = 0.05
    rate: str = "constant"
    k: float = 1.0
    k_top: float | None = None
    k_bottom: float | None = None
    profile: str = "triangular"
    # mesh
    n_y: int = 100
    n_theta: int = 100
    # solver
    dt: float = 1e-3
    t_end: float = 4.0
    steady_tol: float = 1e-10
    snapshot_times: tuple = ()
    stride: int = 10
    steady_method: str = "direct"
    entropy: bool = False
    # monte carlo
    n_cell: int = 1_000_000
    seed: int = 0
    workers: int = 1
    block_size: int = 1 << 16
    bootstrap_reps: int = 32
    # grid refinement
    ny_list: tuple = (8, 16, 32, 64, 128)
    ntheta_list: tuple = (8, 16, 32, 64, 128)
    pairs: str = "table"
    reference_n: int = 256
    # epsilon ladder
    epsilons: tuple = (0.2, 0.1, 0.05, 0.025)
    # output
    out: str = "out"
    source_text: str = field(default="", repr=False)

    def kernel_spec(self, epsilon: float | None = None) -> KernelSpec:
        eps = self.epsilon if epsilon is None else epsilon
        p = {"k": self.k, "k_top": self.k_top, "k_bottom": self.k_bottom, "profile": self.profile}
        return RATE_REGISTRY[self.rate](p, eps)

    def canonical(self) -> str:
        """Stable text form of every setting that can change results
        (the output directory and the worker count cannot)."""
        skip = {"out", "source_text", "workers"}
        return "\n".join(f"{f.name}={getattr(self, f.name)!r}" for f in fields(self)
                         if f.name not in skip)

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]

    def provenance(self) -> str:
        from . import __version__
        return f"crtm {__version__} config_sha256={self.digest()} command={self.command}"


# section -> key -> (attribute, parser)
def _float(s):
    return float(s)


def _int(s):
    v = float(s)
    if v != int(v):
        raise ValueError(f"{s!r} is not an integer")
    return int(v)


def _floats(s):
    return tuple(float(x) for x in s.replace(",", " ").split())


def _ints(s):
    return tuple(_int(x) for x in s.replace(",", " ").split())


def _bool(s):
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"{s!r} is not a boolean")


def _str(s):
    return s.strip()


SCHEMA = {
    "experiment": {"command": ("command", _str), "out": ("out", _str)},
    "model": {"v": ("V", _float), "l": ("L", _float), "epsilon": ("epsilon", _float),
              "rate": ("rate", _str), "k": ("k", _float), "k_top": ("k_top", _float),
              "k_bottom": ("k_bottom", _float), "profile": ("profile", _str)},
    "mesh": {"n_y": ("n_y", _int), "n_theta": ("n_theta", _int)},
    "solver": {"dt": ("dt", _float), "t_end": ("t_end", _float),
               "steady_tol": ("steady_tol", _float), "snapshot_times": ("snapshot_times", _floats),
               "stride": ("stride", _int), "steady_method": ("steady_method", _str),
               "entropy": ("entropy", _bool)},
    "mc": {"n_cell": ("n_cell", _int), "seed": ("seed", _int), "workers": ("workers", _int),
           "block_size": ("block_size", _int), "bootstrap_reps": ("bootstrap_reps", _int)},
    "converge": {"ny_list": ("ny_list", _ints), "ntheta_list": ("ntheta_list", _ints),
                 "pairs": ("pairs", _str), "reference_n": ("reference_n", _int)},
    "asymptotic": {"epsilons": ("epsilons", _floats)},
}


def _positive(cfg, name):
    v = getattr(cfg, name)
    if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
        raise ConfigError(f"{name} must be positive and finite, got {v!r}")


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    if cfg.command not in COMMANDS:
        raise ConfigError(f"experiment.command must be one of {COMMANDS}, got {cfg.command!r}")
    for name in ("V", "L", "epsilon", "k", "dt", "steady_tol"):
        _positive(cfg, name)
    for name in ("k_top", "k_bottom"):
        if getattr(cfg, name) is not None:
            _positive(cfg, name)
    if not (cfg.t_end >= 0 and math.isfinite(cfg.t_end)):
        raise ConfigError(f"t_end must be >= 0, got {cfg.t_end!r}")
    if not cfg.epsilon < math.pi:
        raise ConfigError(f"epsilon must be below pi, got {cfg.epsilon!r}")
    if cfg.rate not in RATE_REGISTRY:
        raise ConfigError(f"model.rate must be one of {sorted(RATE_REGISTRY)}, got {cfg.rate!r}")
    if cfg.profile not in PROFILES:
        raise ConfigError(f"model.profile must be one of {sorted(PROFILES)}, got {cfg.profile!r}")
    for name in ("n_y", "n_theta", "reference_n"):
        if getattr(cfg, name) < 2:
            raise ConfigError(f"{name} must be >= 2, got {getattr(cfg, name)}")
    for name in ("n_cell", "workers", "block_size", "stride", "bootstrap_reps"):
        if getattr(cfg, name) < 1:
            raise ConfigError(f"{name} must be >= 1, got {getattr(cfg, name)}")
    if not 0 <= cfg.seed < 2**64:
        raise ConfigError(f"seed must be an unsigned 64-bit integer, got {cfg.seed}")
    if cfg.steady_method not in ("direct", "evolve"):
        raise ConfigError(f"solver.steady_method must be direct or evolve, got {cfg.steady_method!r}")
    if cfg.pairs not in ("table", "diagonal"):
        raise ConfigError(f"converge.pairs must be table or diagonal, got {cfg.pairs!r}")
    if any(t < 0 or t > cfg.t_end for t in cfg.snapshot_times):
        raise ConfigError("solver.snapshot_times must lie in [0, t_end]")
    if any(not 0 < e < math.pi for e in cfg.epsilons):
        raise ConfigError("asymptotic.epsilons must lie in (0, pi)")
    if list(cfg.epsilons) != sorted(cfg.epsilons, reverse=True):
        raise ConfigError("asymptotic.epsilons must be in descending order")
    if cfg.pairs == "diagonal" and len(cfg.ny_list) != len(cfg.ntheta_list):
        raise ConfigError("converge.ny_list and ntheta_list must have equal length for diagonal pairs")
    if min(cfg.ny_list + cfg.ntheta_list, default=2) < 2:
        raise ConfigError("converge grid sizes must be >= 2")
    try:
        cfg.kernel_spec()
    except ValueError as exc:
        raise ConfigError(f"model: {exc}") from exc
    return cfg


def parse_config(text: str, overrides: dict | None = None) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unreadable config: {exc}") from exc
    values = {}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key {section}.{key}")
            attr, conv = SCHEMA[section][key]
            try:
                values[attr] = conv(raw)
            except ValueError as exc:
                raise ConfigError(f"{section}.{key}: {exc}") from exc
    for attr, value in (overrides or {}).items():
        if value is not None:
            values[attr] = value
    return validate(ExperimentConfig(source_text=text, **values))


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, overrides)
