"""Per-step observables, discrete energies and monotonicity audits."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import grid as gr
from .errors import InsufficientSamples, MissingHistory
from .models import ModelSpec, bulk_energy, quadratic_energy_hat
from .schemes import SchemeKind, SchemeState, as_g_list


@dataclass
class DiagRecord:
    step: int
    t: float
    dt: float
    E_original: float
    E_modified: float
    mass: tuple
    xi: tuple
    r: tuple
    newton_iters: int

    def __post_init__(self):
        vals = [self.t, self.dt, self.E_original, self.E_modified, *self.mass, *self.xi, *self.r]
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite diagnostics at step {self.step}")

    def row(self) -> list:
        return [
            self.step, self.t, self.dt, self.E_original, self.E_modified,
            *self.mass, *self.xi, *self.r, self.newton_iters,
        ]


def needs_history(kind: SchemeKind) -> bool:
    """Whether ``kind``'s discrete energy involves the previous level."""
    return kind.order == "bdf2" or (kind.stabilized and (kind.eps1 > 0 or kind.eps2 > 0))


def _hats(ctx, state):
    ph = state.phi_hat if state.phi_hat is not None else ctx.forward(state.phi)
    pph = None
    if state.phi_prev is not None:
        pph = state.phi_prev_hat if state.phi_prev_hat is not None else ctx.forward(state.phi_prev)
    return ph, pph


def modified_energy(
    state: SchemeState, model: ModelSpec, g_list, kind: SchemeKind, ctx: gr.SpectralContext
) -> float:
    """Discrete energy that ``kind`` is guaranteed not to increase.

    One-level form ``½(𝓛φ,φ) + Σ G⁻¹(r)``; BDF2 form
    ``¼[(𝓛φ,φ) + (𝓛φ†,φ†)] + Σ(3/2 G⁻¹(rᵏ) - ½ G⁻¹(rᵏ⁻¹))`` with
    ``φ† = 2φᵏ - φᵏ⁻¹``.  The third approach uses ``∫F`` of the fields
    instead of ``G⁻¹(r)``; the stabilised CN adds ``ε₁/2‖d‖² + ε₂/2(𝓛d,d)``
    with ``d`` the last difference quotient.
    """
    gs = as_g_list(g_list, model)
    phi = state.phi
    if needs_history(kind) and not state.has_history:
        raise MissingHistory(f"{kind.label} energy needs two time levels")
    ph, pph = _hats(ctx, state)
    if kind.order == "bdf2":
        quad = 0.5 * (
            quadratic_energy_hat(ctx, model, ph) + quadratic_energy_hat(ctx, model, 2.0 * ph - pph)
        )
        if kind.approach == "third":
            bulk = sum(
                1.5 * bulk_energy(ctx, p, phi) - 0.5 * bulk_energy(ctx, p, state.phi_prev)
                for p in model.potentials
            )
        else:
            bulk = sum(
                1.5 * g.inverse(r) - 0.5 * g.inverse(rp)
                for g, r, rp in zip(gs, state.r, state.r_prev)
            )
        return quad + bulk
    quad = quadratic_energy_hat(ctx, model, ph)
    if kind.approach == "third":
        bulk = sum(bulk_energy(ctx, p, phi) for p in model.potentials)
    else:
        bulk = sum(g.inverse(r) for g, r in zip(gs, state.r))
    extra = 0.0
    if needs_history(kind):
        dh = (ph - pph) / state.dt
        extra = 0.5 * kind.eps1 * ctx.inner_hat(dh, dh) + kind.eps2 * quadratic_energy_hat(ctx, model, dh)
    return quad + bulk + extra


def masses(ctx: gr.SpectralContext, phi: np.ndarray) -> tuple:
    return tuple(gr.integrate(ctx, c) for c in phi)


def record(
    state: SchemeState, model: ModelSpec, g_list, kind: SchemeKind, ctx: gr.SpectralContext
) -> DiagRecord:
    """Diagnostics row; before history exists the one-level energy is used."""
    ekind = kind if (state.has_history or not needs_history(kind)) else kind.startup
    m = len(model.potentials)
    xi = state.xi_last if state.xi_last is not None else np.ones(m)
    return DiagRecord(
        step=state.step,
        t=state.t,
        dt=state.dt or 0.0,
        E_original=quadratic_energy_hat(ctx, model, _hats(ctx, state)[0])
        + sum(bulk_energy(ctx, p, state.phi) for p in model.potentials),
        E_modified=modified_energy(state, model, g_list, ekind, ctx),
        mass=masses(ctx, state.phi),
        xi=tuple(float(x) for x in xi),
        r=tuple(float(x) for x in state.r),
        newton_iters=state.newton_iters,
    )


def audit_monotone(series, rel_tol: float = 1e-9) -> list[int]:
    """Indices ``i`` where ``series[i+1]`` exceeds ``series[i]`` beyond ``rel_tol·|series[i]|``."""
    s = [float(v) for v in series]
    if len(s) < 2:
        raise ValueError("audit_monotone needs at least two values")
    return [i for i in range(len(s) - 1) if s[i + 1] > s[i] + rel_tol * abs(s[i])]


def fit_log_decay(times, energies, window: tuple[float, float] | None = None) -> tuple[float, float]:
    """Least-squares ``E ≈ a·log(t) + b`` over samples with ``t`` in ``window``."""
    t = np.asarray(times, dtype=float)
    e = np.asarray(energies, dtype=float)
    if t.shape != e.shape:
        raise ValueError("times and energies differ in length")
    mask = t > 0
    if window is not None:
        lo, hi = window
        if not 0 < lo < hi:
            raise ValueError(f"bad window {window}")
        mask &= (t >= lo) & (t <= hi)
    if np.count_nonzero(mask) < 10:
        raise InsufficientSamples(f"need >= 10 samples in window, got {np.count_nonzero(mask)}")
    A = np.column_stack([np.log(t[mask]), np.ones(np.count_nonzero(mask))])
    (a, b), *_ = np.linalg.lstsq(A, e[mask], rcond=None)
    return float(a), float(b)
