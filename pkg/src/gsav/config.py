"""Run configuration: TOML files with dotted sections plus ``key=value`` overrides.

A minimal config::

    [model]
    key = "cahn-hilliard"
    eps2 = 0.005

    [scheme]
    kind = "first-bdf2"
    g = "tanh:1e4"

    [grid]
    n = 128

    [time]
    dt = 1e-5
    T = 0.1

    [initial]
    kind = "spinodal"
    seed = 42

Missing sections fall back to the defaults of :class:`RunConfig`.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ConfigError
from .gfunc import parse_g
from .grid import Grid, SpectralContext
from .models import DEFAULT_DOMAINS, ModelSpec, default_sqrt_c, make_model
from .schemes import SchemeKind, parse_scheme

DEFAULTS = {
    "model": {"key": "allen-cahn"},
    "scheme": {"kind": "first-bdf2", "g": "sqrt", "eps1": 0.0, "eps2": 0.0},
    "grid": {"n": 128, "dealias": False},
    "time": {"dt": 1e-3, "T": 0.1},
    "initial": {"kind": "spinodal", "seed": 0},
    "output": {"dir": "run", "snapshot_every": 0, "diag_every": 1},
}


@dataclass(frozen=True)
class Adaptive:
    tol: float = 1e-3
    rho: float = 0.9
    dt_min: float = 1e-8
    dt_max: float = 1e-1

    def __post_init__(self):
        if not self.tol > 0:
            raise ConfigError("adaptive tol must be positive")
        if not 0 < self.rho <= 1:
            raise ConfigError("adaptive rho must lie in (0, 1]")
        if not 0 < self.dt_min <= self.dt_max:
            raise ConfigError("need 0 < dt_min <= dt_max")


@dataclass
class RunConfig:
    """Validated view of a raw config mapping (kept in ``raw`` for the manifest)."""

    raw: dict = field(default_factory=dict)

    def __post_init__(self):
        self.raw = merge(copy.deepcopy(DEFAULTS), self.raw)
        self.model  # noqa: B018  (validates eagerly)
        self.kind
        self.g_list
        self.grid
        if not self.T >= 0:
            raise ConfigError("time.T must be non-negative")
        if self.adaptive is None and not self.dt > 0:
            raise ConfigError("time.dt must be positive")
        if self.adaptive is not None and self.kind.order == "bdf2":
            raise ConfigError("adaptive stepping needs a variable-step scheme (bdf1 or cn)")
        out = self.raw["output"]
        if int(out["diag_every"]) < 1 or int(out["snapshot_every"]) < 0:
            raise ConfigError("output cadences must be >= 1 (snapshot_every = 0 disables snapshots)")

    def section(self, name) -> dict:
        return self.raw.get(name, {})

    @property
    def model(self) -> ModelSpec:
        params = {k: v for k, v in self.section("model").items() if k != "key"}
        return make_model(self.section("model")["key"], **params)

    @property
    def kind(self) -> SchemeKind:
        s = self.section("scheme")
        return parse_scheme(str(s["kind"]), float(s.get("eps1", 0.0)), float(s.get("eps2", 0.0)))

    @property
    def g_list(self) -> tuple:
        spec = self.section("scheme")["g"]
        specs = spec if isinstance(spec, list) else [spec]
        c = default_sqrt_c(self.model)
        gs = tuple(parse_g(str(s), c) for s in specs)
        m = len(self.model.potentials)
        if len(gs) == 1 and m > 1:
            gs = gs * m
        if len(gs) != m:
            raise ConfigError(f"scheme.g lists {len(gs)} transforms for {m} potentials")
        return gs

    @property
    def grid(self) -> Grid:
        g = self.section("grid")
        n = int(g["n"])
        lo, hi = g.get("domain", DEFAULT_DOMAINS.get(self.section("model")["key"], (-math.pi, math.pi)))
        try:
            return Grid.square(n, float(lo), float(hi))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def context(self) -> SpectralContext:
        return SpectralContext(self.grid, dealias=bool(self.section("grid").get("dealias", False)))

    @property
    def dt(self) -> float:
        return float(self.section("time")["dt"])

    @property
    def T(self) -> float:
        return float(self.section("time")["T"])

    @property
    def adaptive(self) -> Adaptive | None:
        a = self.section("time").get("adaptive")
        if not a or not a.get("enabled", True):
            return None
        return Adaptive(**{k: float(v) for k, v in a.items() if k != "enabled"})

    @property
    def seed(self) -> int:
        seed = int(self.section("initial")["seed"])
        if not 0 <= seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        return seed

    def with_overrides(self, overrides: dict) -> "RunConfig":
        raw = copy.deepcopy(self.raw)
        for key, value in overrides.items():
            set_dotted(raw, key, value)
        return RunConfig(raw)


def merge(base: dict, extra: dict) -> dict:
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(base.get(k), dict):
            merge(base[k], v)
        else:
            base[k] = v
    return base


def set_dotted(raw: dict, key: str, value) -> None:
    parts = key.split(".")
    node = raw
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot set {key}: {p} is not a section")
    node[parts[-1]] = value


def parse_value(text: str):
    """Interpret an override value with TOML rules, falling back to a bare string."""
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def parse_overrides(items) -> dict:
    out = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"override {item!r} is not key=value")
        out[key.strip()] = parse_value(value.strip())
    return out


def load_raw(path) -> dict:
    try:
        with open(Path(path), "rb") as fh:
            return tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def load(path, overrides: dict | None = None) -> RunConfig:
    cfg = RunConfig(load_raw(path))
    return cfg.with_overrides(overrides) if overrides else cfg
