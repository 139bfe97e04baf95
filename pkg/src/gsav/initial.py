"""Deterministic initial data and the manufactured Allen-Cahn solution.

Random fields come from ``numpy.random.Philox`` (a counter-based generator
keyed by the 64-bit seed), so a given seed reproduces the same samples on
every platform numpy supports.
"""

from __future__ import annotations

import math

import numpy as np

from . import grid as gr
from .errors import ConfigError, UnsupportedModel
from .models import DoubleWell, ModelSpec, potential_derivative

INITIAL_KINDS = ("spinodal", "bcp", "mbe", "manufactured")


def rng_for(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def make_initial(kind: str, grid: gr.Grid, seed: int, mean: float = 0.03, amp: float = 0.001) -> np.ndarray:
    """Stacked initial fields ``(n_components, nx, ny)``.

    ``spinodal``
        ``mean + amp·u`` with ``u`` uniform on [-1, 1] shifted to zero mean.
    ``bcp``
        Two fields uniform on [-1, 1], each shifted to zero mean (and scaled
        back into [-1, 1] if the shift pushed a sample out).
    ``mbe``
        Uniform on [-0.001, 0.001].
    ``manufactured``
        The exact solution of :class:`ManufacturedAC` at ``t = 0``.
    """
    rng = rng_for(seed)
    shape = grid.shape
    if kind == "spinodal":
        u = rng.uniform(-1.0, 1.0, shape)
        return (mean + amp * (u - u.mean()))[None]
    if kind == "bcp":
        out = []
        for _ in range(2):
            u = rng.uniform(-1.0, 1.0, shape)
            u -= u.mean()
            peak = np.abs(u).max()
            if peak > 1.0:
                u /= peak
            out.append(u)
        return np.stack(out)
    if kind == "mbe":
        return rng.uniform(-0.001, 0.001, shape)[None]
    if kind == "manufactured":
        return ManufacturedAC.exact_on(grid, 0.0)[None]
    raise ConfigError(f"unknown initial kind {kind!r}; choose from {INITIAL_KINDS}")


class ManufacturedAC:
    """``φ = (A sin2x cos2y + 0.48)(1 - sin²t / 2)`` with ``A = 1/4`` and its forcing.

    The forcing ``f = φ_t + M(𝓛φ + F'(φ))`` is evaluated with the model's own
    spectral operator and potential, so the discrete forced problem has the
    sampled exact field as its solution.  The spatial profile and its ``𝓛``
    image are cached; each call costs one pointwise ``F'`` evaluation.
    """

    def __init__(self, ctx: gr.SpectralContext, model: ModelSpec, amplitude: float = 0.25):
        if model.mobility != "L2" or model.n_components != 1:
            raise UnsupportedModel("the manufactured solution is set up for Allen-Cahn type (L2) flows")
        self.ctx = ctx
        self.model = model
        self.M = model.M[0]
        self.profile = self.profile_on(ctx.grid, amplitude)
        self.profile_hat = ctx.forward(self.profile)
        self.L_profile = ctx.inverse(model.linear_symbol(ctx)[0] * self.profile_hat)
        self.L_profile_hat = model.linear_symbol(ctx)[0] * self.profile_hat
        # A double well has a cubic F', so the forcing spectrum needs no transform.
        self._cubic = None
        if all(isinstance(p, DoubleWell) for p in model.potentials) and not ctx.dealias:
            k = sum(1.0 / p.eps2 for p in model.potentials)
            self._cubic = (k, ctx.forward(self.profile**3))

    @staticmethod
    def profile_on(grid: gr.Grid, amplitude: float = 0.25) -> np.ndarray:
        X, Y = grid.coords()
        return amplitude * np.sin(2 * X) * np.cos(2 * Y) + 0.48

    @staticmethod
    def time_factor(t: float) -> float:
        return 1.0 - 0.5 * math.sin(t) ** 2

    @staticmethod
    def time_rate(t: float) -> float:
        return -math.sin(t) * math.cos(t)

    @classmethod
    def exact_on(cls, grid: gr.Grid, t: float, amplitude: float = 0.25) -> np.ndarray:
        return cls.profile_on(grid, amplitude) * cls.time_factor(t)

    def exact(self, t: float) -> np.ndarray:
        return self.profile * self.time_factor(t)

    def chemical_potential(self, t: float) -> np.ndarray:
        tau = self.time_factor(t)
        phi = self.profile * tau
        dF = sum(potential_derivative(self.ctx, p, phi) for p in self.model.potentials)
        return self.L_profile * tau + dF

    def __call__(self, t: float) -> np.ndarray:
        return self.profile * self.time_rate(t) + self.M * self.chemical_potential(t)

    def hat(self, t: float) -> np.ndarray:
        """rfft spectrum of the forcing, shaped ``(1, nx, ny//2+1)``."""
        if self._cubic is None:
            return self.ctx.forward(self(t))[None]
        k, cube_hat = self._cubic
        tau = self.time_factor(t)
        mu = self.L_profile_hat * tau + k * (tau**3 * cube_hat - tau * self.profile_hat)
        return (self.profile_hat * self.time_rate(t) + self.M * mu)[None]


def manufactured_forcing(ctx: gr.SpectralContext, model: ModelSpec, t: float) -> np.ndarray:
    return ManufacturedAC(ctx, model)(t)
