"""Energy functionals: linear operator, mobility and nonlinear potentials.

Every model is a gradient flow ``φ_t = -𝒢 μ`` with ``μ = 𝓛φ + Σ F_i'(φ)``.
Fields handed to the potentials are stacked arrays of shape
``(n_components, nx, ny)``; the public helpers also accept a single 2-D field.

Scalings follow the experiments each model comes from, so they are not
uniform: the double-well models carry ``1/(4ε²)`` on ``F`` and a bare
``½|∇φ|²``, while the logarithmic Cahn-Hilliard and MBE models put ``ε²`` on
the quadratic part and leave ``F`` unscaled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as P

from . import grid as gr
from .errors import OutOfDomain, UnsupportedModel

FH_MARGIN = 1e-9


def _stack(fields) -> tuple[np.ndarray, bool]:
    a = np.asarray(fields, dtype=float)
    if a.ndim == 2:
        return a[None], True
    return a, False


@dataclass(frozen=True)
class DoubleWell:
    """``F = (φ² - 1)² / (4ε²)``."""

    eps2: float = 1.0
    n_components = 1

    def density(self, ctx, phi):
        p = phi[0]
        w = p * p - 1.0
        return w * w / (4.0 * self.eps2)

    def derivative(self, ctx, phi):
        p = phi[0]
        return ((p * p - 1.0) * p / self.eps2)[None]


@dataclass(frozen=True)
class Polynomial:
    """``F = Σ_k c_k φ^k``; used to split a double well or as a null potential."""

    coeffs: tuple = ()
    n_components = 1

    def density(self, ctx, phi):
        if not self.coeffs:
            return np.zeros_like(phi[0])
        return P.polyval(phi[0], self.coeffs)

    def derivative(self, ctx, phi):
        if len(self.coeffs) < 2:
            return np.zeros_like(phi)
        return P.polyval(phi[0], P.polyder(self.coeffs))[None]


@dataclass(frozen=True)
class FloryHuggins:
    """``F = -θ/2 φ² + (1+φ)ln(1+φ) + (1-φ)ln(1-φ)`` on ``|φ| < 1``."""

    theta: float = 3.0
    n_components = 1

    def _check(self, p):
        bad = np.abs(p) > 1.0 - FH_MARGIN
        if np.any(bad):
            idx = tuple(int(i) for i in np.argwhere(bad)[0])
            raise OutOfDomain(
                f"Flory-Huggins field leaves (-1, 1) at index {idx}: {p[idx]!r}", idx
            )

    def density(self, ctx, phi):
        p = phi[0]
        self._check(p)
        return -0.5 * self.theta * p * p + (1.0 + p) * np.log1p(p) + (1.0 - p) * np.log1p(-p)

    def derivative(self, ctx, phi):
        p = phi[0]
        self._check(p)
        return (np.log1p(p) - np.log1p(-p) - self.theta * p)[None]


@dataclass(frozen=True)
class MbeLog:
    """``F = -½ ln(1 + |∇φ|²)``, the no-slope-selection MBE potential."""

    n_components = 1

    def density(self, ctx, phi):
        return -0.5 * np.log1p(gr.gradient_squared(ctx, phi[0]))

    def derivative(self, ctx, phi):
        px, py = gr.gradient(ctx, phi[0])
        q = 1.0 / (1.0 + px * px + py * py)
        return gr.divergence(ctx, px * q, py * q)[None]


@dataclass(frozen=True)
class BcpW:
    """Two-field block-copolymer potential ``W(u, v)``."""

    alpha: float = 0.1
    beta: float = -0.75
    gamma: float = 0.0
    n_components = 2

    def density(self, ctx, phi):
        u, v = phi[0], phi[1]
        wu = u * u - 1.0
        wv = v * v - 1.0
        return (
            0.25 * wu * wu
            + 0.25 * wv * wv
            + self.alpha * u * v
            + self.beta * u * v * v
            + self.gamma * u * u * v
        )

    def derivative(self, ctx, phi):
        u, v = phi[0], phi[1]
        du = u * (u * u - 1.0) + self.alpha * v + self.beta * v * v + 2.0 * self.gamma * u * v
        dv = v * (v * v - 1.0) + self.alpha * u + 2.0 * self.beta * u * v + self.gamma * u * u
        return np.stack([du, dv])


Potential = DoubleWell | Polynomial | FloryHuggins | MbeLog | BcpW


@dataclass(frozen=True)
class ModelSpec:
    """Linear operator, mobility and potentials of one gradient flow.

    The Fourier symbol of ``𝓛`` for component ``c`` is
    ``grad2[c]|k|² + grad4[c]|k|⁴ + nonlocal_[c]/|k|²`` (the last term is
    dropped at ``k = 0``).  ``mobility`` is ``"L2"`` (``𝒢 = M``) or ``"H-1"``
    (``𝒢 = -MΔ``).
    """

    key: str
    potentials: tuple
    n_components: int = 1
    grad2: tuple = (1.0,)
    grad4: tuple = (0.0,)
    nonlocal_: tuple = (0.0,)
    mobility: str = "L2"
    M: tuple = (1.0,)
    params: tuple = field(default=(), compare=False)

    def __post_init__(self):
        if not self.potentials:
            raise ValueError("a model needs at least one potential")
        if self.mobility not in ("L2", "H-1"):
            raise ValueError(f"unknown mobility {self.mobility!r}")
        for name in ("grad2", "grad4", "nonlocal_", "M"):
            vals = getattr(self, name)
            if len(vals) != self.n_components:
                raise ValueError(f"{name} needs one entry per component")
            if any(v < 0 for v in vals):
                raise ValueError(f"{name} entries must be non-negative")
        for p in self.potentials:
            if p.n_components != self.n_components:
                raise ValueError(f"{type(p).__name__} acts on {p.n_components} component(s)")

    @property
    def conserves_mass(self) -> bool:
        return self.mobility == "H-1"

    def linear_symbol(self, ctx: gr.SpectralContext) -> np.ndarray:
        key = ("L", self)
        if key not in ctx._cache:
            k2 = ctx.k2
            inv = np.zeros_like(k2)
            inv[k2 > 0] = 1.0 / k2[k2 > 0]
            ctx._cache[key] = np.stack(
                [
                    self.grad2[c] * k2 + self.grad4[c] * k2 * k2 + self.nonlocal_[c] * inv
                    for c in range(self.n_components)
                ]
            )
        return ctx._cache[key]

    def mobility_symbol(self, ctx: gr.SpectralContext) -> np.ndarray:
        key = ("G", self)
        if key not in ctx._cache:
            base = ctx.k2 if self.mobility == "H-1" else np.ones_like(ctx.k2)
            ctx._cache[key] = np.stack([m * base for m in self.M])
        return ctx._cache[key]

    def param(self, name, default=None):
        return dict(self.params).get(name, default)


def allen_cahn(eps2: float = 1.0, M: float = 1.0) -> ModelSpec:
    return ModelSpec(
        "allen-cahn", (DoubleWell(eps2),), mobility="L2", M=(M,),
        params=(("eps2", eps2), ("M", M)),
    )


def cahn_hilliard(eps2: float = 0.005, M: float = 1.0) -> ModelSpec:
    return ModelSpec(
        "cahn-hilliard", (DoubleWell(eps2),), mobility="H-1", M=(M,),
        params=(("eps2", eps2), ("M", M)),
    )


def cahn_hilliard_log(theta: float = 3.0, eps2: float = 0.002, M: float = 1.0) -> ModelSpec:
    return ModelSpec(
        "cahn-hilliard-log", (FloryHuggins(theta),), grad2=(eps2,), mobility="H-1",
        M=(M,), params=(("theta", theta), ("eps2", eps2), ("M", M)),
    )


def mbe(eps: float = 0.03, M: float = 1.0) -> ModelSpec:
    return ModelSpec(
        "mbe", (MbeLog(),), grad2=(0.0,), grad4=(eps * eps,), mobility="L2", M=(M,),
        params=(("eps", eps), ("M", M)),
    )


def bcp(
    eps_u: float = 0.075,
    eps_v: float = 0.05,
    sigma: float = 10.0,
    alpha: float = 0.1,
    beta: float = -0.75,
    gamma: float = 0.0,
    M_u: float = 1.0,
    M_v: float = 1.0,
) -> ModelSpec:
    return ModelSpec(
        "bcp",
        (BcpW(alpha, beta, gamma),),
        n_components=2,
        grad2=(eps_u * eps_u, eps_v * eps_v),
        grad4=(0.0, 0.0),
        nonlocal_=(0.0, sigma),
        mobility="H-1",
        M=(M_u, M_v),
        params=(
            ("eps_u", eps_u), ("eps_v", eps_v), ("sigma", sigma), ("alpha", alpha),
            ("beta", beta), ("gamma", gamma), ("M_u", M_u), ("M_v", M_v),
        ),
    )


MODEL_FACTORIES = {
    "allen-cahn": allen_cahn,
    "cahn-hilliard": cahn_hilliard,
    "cahn-hilliard-log": cahn_hilliard_log,
    "mbe": mbe,
    "bcp": bcp,
}

DEFAULT_DOMAINS = {
    "mbe": (0.0, 2.0 * math.pi),
    "bcp": (-1.0, 1.0),
}


def make_model(key: str, **params) -> ModelSpec:
    """Build a model from its config key and parameter sub-keys.

    ``eps`` is accepted in place of ``eps2`` for the models parameterised by
    ``ε²``.
    """
    try:
        factory = MODEL_FACTORIES[key]
    except KeyError:
        raise UnsupportedModel(f"unknown model {key!r}; choose from {sorted(MODEL_FACTORIES)}")
    if "eps" in params and key in ("allen-cahn", "cahn-hilliard", "cahn-hilliard-log"):
        params["eps2"] = float(params.pop("eps")) ** 2
    try:
        return factory(**{k: float(v) for k, v in params.items()})
    except TypeError as exc:
        raise UnsupportedModel(f"bad parameters for {key}: {exc}") from exc


def default_sqrt_c(model: ModelSpec) -> float:
    """A shift making ``∫F + C`` positive for typical initial data of ``model``."""
    return {"bcp": 10.0, "cahn-hilliard-log": 100.0, "mbe": 1.0e4}.get(model.key, 1.0)


def bulk_energy(ctx: gr.SpectralContext, p, fields) -> float:
    phi, _ = _stack(fields)
    return gr.integrate(ctx, p.density(ctx, phi))


def potential_derivative(ctx: gr.SpectralContext, p, fields) -> np.ndarray:
    phi, single = _stack(fields)
    d = ctx.filter_nonlinear(p.derivative(ctx, phi))
    return d[0] if single else d


def quadratic_energy(ctx: gr.SpectralContext, m: ModelSpec, fields) -> float:
    """``½(𝓛φ, φ)`` summed over components."""
    phi, _ = _stack(fields)
    ph = ctx.forward(phi)
    return 0.5 * ctx.inner_hat(m.linear_symbol(ctx) * ph, ph)


def quadratic_energy_hat(ctx: gr.SpectralContext, m: ModelSpec, phi_hat) -> float:
    """``½(𝓛φ, φ)`` from stacked spectra, avoiding a transform."""
    return 0.5 * ctx.inner_hat(m.linear_symbol(ctx) * phi_hat, phi_hat)


def original_energy(ctx: gr.SpectralContext, m: ModelSpec, fields) -> float:
    phi, _ = _stack(fields)
    return quadratic_energy(ctx, m, phi) + sum(bulk_energy(ctx, p, phi) for p in m.potentials)
