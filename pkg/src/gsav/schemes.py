"""G-SAV time steppers.

Three families are implemented, each with BDF1, BDF2 and Crank-Nicolson
(``cn``) stencils where they make sense:

``first``
    ``r`` implicit.  The update splits as ``φ = φ₁ + Σ ξ_i φ_{i,2}`` (two
    constant-coefficient solves per potential) and the scalars ``ξ_i`` solve
    a small nonlinear system by Newton from ``ξ = 1``.
``second``
    ``r`` explicit; one solve per step, ``G^{-1}(r)`` updated afterwards.
    The ``cn`` stencil carries the optional ``ε₁/ε₂`` stabilisation.
``third``
    Lagrange-multiplier form: the scalar equation is written on ``∫F(φ)``
    itself, so the original energy is the dissipated quantity.

All steppers work on stacked fields ``(n_components, nx, ny)`` and keep
spectra cached on the state.  Two-level stencils take their first step with
the BDF1 scheme of the same family.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import grid as gr
from .errors import (
    ConfigError,
    DenominatorNearZero,
    GRangeError,
    MissingHistory,
)
from .models import ModelSpec, bulk_energy, potential_derivative
from .newton import NewtonConfig, solve_scalar, solve_system

DENOM_FLOOR = 1e-14
EPS = float(np.finfo(float).eps)
DEGENERATE_COEF = 1e-13

APPROACHES = ("first", "second", "third")
ORDERS = ("bdf1", "bdf2", "cn")


@dataclass(frozen=True)
class SchemeKind:
    approach: str = "first"
    order: str = "bdf2"
    eps1: float = 0.0
    eps2: float = 0.0
    stabilized: bool = False

    def __post_init__(self):
        if self.approach not in APPROACHES:
            raise ConfigError(f"unknown approach {self.approach!r}")
        if self.order not in ORDERS:
            raise ConfigError(f"unknown order {self.order!r}")
        if self.approach == "third" and self.order == "cn":
            raise ConfigError("the third approach is defined for BDF stencils only")
        if self.eps1 < 0 or self.eps2 < 0:
            raise ConfigError("stabilisation constants must be non-negative")
        if self.stabilized and (self.approach, self.order) != ("second", "cn"):
            raise ConfigError("stabilisation is attached to the second-approach CN scheme")
        if not self.stabilized and (self.eps1 or self.eps2):
            raise ConfigError("eps1/eps2 only apply to stabilized-cn")

    @property
    def two_level(self) -> bool:
        return self.order != "bdf1"

    @property
    def startup(self) -> "SchemeKind":
        return SchemeKind(self.approach, "bdf1")

    @property
    def label(self) -> str:
        if self.stabilized:
            return "stabilized-cn"
        return f"{self.approach}-{self.order}"


def parse_scheme(text: str, eps1: float = 0.0, eps2: float = 0.0) -> SchemeKind:
    """Parse ``first-bdf2``, ``second-cn``, ``third-bdf2``, ``mc-cn``, ``stabilized-cn`` ..."""
    t = text.strip().lower()
    if t == "mc-cn":
        return SchemeKind("first", "cn")
    if t == "stabilized-cn":
        return SchemeKind("second", "cn", eps1, eps2, stabilized=True)
    approach, _, order = t.partition("-")
    return SchemeKind(approach, order)


@dataclass
class SchemeState:
    """Current and previous fields plus auxiliary scalars.

    ``dt`` is the size of the step that produced ``phi`` (``None`` at start).
    """

    phi: np.ndarray
    r: np.ndarray
    t: float = 0.0
    phi_prev: np.ndarray | None = None
    r_prev: np.ndarray | None = None
    dt: float | None = None
    xi_last: np.ndarray | None = None
    step: int = 0
    newton_iters: int = 0
    phi_hat: np.ndarray | None = field(default=None, repr=False)
    phi_prev_hat: np.ndarray | None = field(default=None, repr=False)

    @property
    def has_history(self) -> bool:
        return self.phi_prev is not None


def as_g_list(gs, model: ModelSpec) -> tuple:
    if not isinstance(gs, (list, tuple)):
        gs = (gs,) * len(model.potentials)
    if len(gs) != len(model.potentials):
        raise ConfigError(f"need one G per potential ({len(model.potentials)}), got {len(gs)}")
    return tuple(gs)


def init_state(ctx: gr.SpectralContext, model: ModelSpec, gs, phi0, t0: float = 0.0) -> SchemeState:
    """Wrap initial fields and set ``r_i = G_i(∫F_i(φ⁰))``."""
    gs = as_g_list(gs, model)
    phi = np.array(phi0, dtype=float)
    if phi.ndim == 2:
        phi = phi[None]
    if phi.shape[0] != model.n_components:
        raise ConfigError(f"model needs {model.n_components} component(s), got {phi.shape[0]}")
    ctx.check(phi)
    r = np.array([g.forward(bulk_energy(ctx, p, phi)) for p, g in zip(model.potentials, gs)])
    return SchemeState(phi=phi, r=r, t=t0, phi_hat=ctx.forward(phi))


def _hats(ctx, state):
    if state.phi_hat is None:
        state.phi_hat = ctx.forward(state.phi)
    if state.phi_prev is not None and state.phi_prev_hat is None:
        state.phi_prev_hat = ctx.forward(state.phi_prev)
    return state.phi_hat, state.phi_prev_hat


def _extrapolate(order, state, dt, x, x_prev):
    if order == "bdf1":
        return x
    if order == "bdf2":
        return 2.0 * x - x_prev
    w = dt / (2.0 * state.dt)
    return x + w * (x - x_prev)


def _check_history(order, state, dt):
    if order == "bdf1":
        return
    if not state.has_history:
        raise MissingHistory(f"{order} needs two time levels")
    if order == "bdf2" and abs(state.dt - dt) > 1e-12 * dt:
        raise ConfigError("BDF2 steppers need a constant step size")


class _Linear:
    """Constant-coefficient part of one step, in Fourier space.

    Symbol arrays depend only on (order, δt, δt_prev, ε₁, ε₂) and are cached
    on the context, so fixed-step runs build them once.
    """

    CACHE_LIMIT = 16

    def __init__(self, ctx, model, order, dt, state, eps1=0.0, eps2=0.0, forcing_hat=None):
        ph, pph = _hats(ctx, state)
        dt_prev = state.dt if order == "cn" else None
        c = self._coefficients(ctx, model, order, dt, dt_prev, eps1, eps2)
        self.inv_denom, self.mob_over_denom = c["inv"], c["mob"]
        if order == "bdf1":
            rhs = ph / dt
        elif order == "bdf2":
            rhs = (4.0 * ph - pph) / (2.0 * dt)
        else:
            rhs = ph * c["now"] + c["hist"] * (ph - pph)
        if forcing_hat is not None:
            rhs = rhs + forcing_hat
        self.phi1_hat = rhs * self.inv_denom

    @classmethod
    def _coefficients(cls, ctx, model, order, dt, dt_prev, eps1, eps2):
        store = ctx._cache.setdefault("linear-steps", {})
        key = (model, order, dt, dt_prev, eps1, eps2)
        if key in store:
            return store[key]
        A = model.mobility_symbol(ctx)
        L = model.linear_symbol(ctx)
        out = {}
        if order == "bdf1":
            denom = 1.0 / dt + A * L
        elif order == "bdf2":
            denom = 1.5 / dt + A * L
        else:
            S = eps1 + eps2 * L
            AS = A * S / (dt * dt)
            denom = 1.0 / dt + 0.5 * A * L + AS
            out["now"] = 1.0 / dt - 0.5 * A * L + AS
            out["hist"] = A * S / (dt * dt_prev)
        out["inv"] = 1.0 / denom
        out["mob"] = A / denom
        if len(store) >= cls.CACHE_LIMIT:
            store.clear()
        store[key] = out
        return out

    def response(self, deriv_hat):
        """Solution of ``denom * φ₂ = -𝒢 F'``."""
        return -self.mob_over_denom * deriv_hat


def _forcing_hat(ctx, forcing, t):
    if forcing is None:
        return None
    if hasattr(forcing, "hat"):
        return forcing.hat(t)
    f = np.asarray(forcing(t), dtype=float)
    if f.ndim == 2:
        f = f[None]
    return ctx.forward(f)


def _rms(ctx, fh):
    return math.sqrt(max(ctx.inner_hat(fh, fh), 0.0) / ctx.grid.area)


def _finish(state, ctx, dt, phi_hat, r, xi, iters):
    return SchemeState(
        phi=ctx.inverse(phi_hat),
        r=np.asarray(r, dtype=float),
        t=state.t + dt,
        phi_prev=state.phi,
        r_prev=state.r,
        dt=dt,
        xi_last=np.asarray(xi, dtype=float),
        step=state.step + 1,
        newton_iters=iters,
        phi_hat=phi_hat,
        phi_prev_hat=state.phi_hat,
    )


def _solve_xi(residual, jacobian, active, m, newton, polish=False):
    """Newton on the active subset of ξ (others pinned to 1)."""
    xi = np.ones(m)
    if not active:
        return xi, 0
    idx = np.array(active)

    def full(z):
        x = np.ones(m)
        x[idx] = z
        return x

    def res(z):
        return residual(full(z))[idx]

    def jac(z):
        return jacobian(full(z))[np.ix_(idx, idx)]

    if len(active) == 1:
        root = solve_scalar(lambda z: res([z])[0], lambda z: jac([z])[0, 0], 1.0, newton)
        z = np.array([root.x])
    else:
        root = solve_system(res, jac, np.ones(len(active)), newton)
        z = np.asarray(root.x, dtype=float)
    xi[idx] = _polish(res, jac, z) if polish else z
    return xi, root.iterations


def _polish(res, jac, z):
    """One extra Newton update, kept only if it does not raise the residual.

    ``|H| <= tol`` pins ξ only to ``tol / |H'|``, and ``H'`` is O(δt) for the
    third approach, so a final step recovers the digits the stopping test leaves.
    """
    f = res(z)
    if not np.any(f):
        return z
    try:
        zn = z - np.linalg.solve(np.atleast_2d(jac(z)), f)
        fn = res(zn)
    except (ValueError, ArithmeticError, np.linalg.LinAlgError):
        return z
    if np.all(np.isfinite(fn)) and np.max(np.abs(fn)) <= np.max(np.abs(f)):
        return zn
    return z


def _first(state, model, gs, ctx, order, dt, forcing, newton):
    _check_history(order, state, dt)
    pots = model.potentials
    m = len(pots)
    phe = _extrapolate(order, state, dt, state.phi, state.phi_prev)
    derivs = [potential_derivative(ctx, p, phe) for p in pots]
    gvals = [g.forward(bulk_energy(ctx, p, phe)) for p, g in zip(pots, gs)]
    t_force = state.t + (0.5 * dt if order == "cn" else dt)
    lin = _Linear(ctx, model, order, dt, state, forcing_hat=_forcing_hat(ctx, forcing, t_force))
    dh = [ctx.forward(d) for d in derivs]
    p1h = lin.phi1_hat
    p2h = [lin.response(d) for d in dh]
    ph, pph = _hats(ctx, state)

    q = [g.inverse(ri) for g, ri in zip(gs, state.r)]
    if order == "bdf2":
        c0 = c1 = 3.0
        base = 4.0 * ph - pph
        hist = [4.0 * qi - g.inverse(rp) for qi, g, rp in zip(q, gs, state.r_prev)]
    else:
        c0 = c1 = 1.0
        base = ph
        hist = list(q)
    # CN: ξ scales r^{n+1/2} = (r^{n+1} + r^n)/2.
    if order == "cn":
        rmap = [lambda x, g=g, rn=rn: 2.0 * x * g - rn for g, rn in zip(gvals, state.r)]
        drmap = [2.0 * g for g in gvals]
    else:
        rmap = [lambda x, g=g: x * g for g in gvals]
        drmap = list(gvals)

    a = np.array([ctx.inner_hat(d, c1 * p1h - base) for d in dh])
    B = np.array([[ctx.inner_hat(d, p) for p in p2h] for d in dh])
    active = []
    for i in range(m):
        if abs(gvals[i]) <= DENOM_FLOOR:
            if _rms(ctx, dh[i]) <= DEGENERATE_COEF:
                continue
            raise DenominatorNearZero(
                f"G(∫F_{i}) = {gvals[i]:.3e} vanishes while F_{i}' does not"
            )
        active.append(i)
    scale = np.array(
        [1.0 + abs(hist[i]) + abs(a[i]) + c1 * np.abs(B[i]).sum() + abs(c0 * q[i]) for i in range(m)]
    )

    def residual(xi):
        lin_part = a + c1 * (B @ xi)
        out = np.empty(m)
        for i in range(m):
            out[i] = c0 * gs[i].inverse(rmap[i](xi[i])) - hist[i] - xi[i] * lin_part[i]
        return out / scale

    def jacobian(xi):
        lin_part = a + c1 * (B @ xi)
        J = -c1 * xi[:, None] * B
        for i in range(m):
            J[i, i] += c0 * gs[i].inverse_derivative(rmap[i](xi[i])) * drmap[i] - lin_part[i]
        return J / scale[:, None]

    # G⁻¹ amplifies the rounding of r by |(G⁻¹)'(r)|·|r| (C·ε for the exponential
    # map), which can exceed the requested tolerance; never ask for less than that.
    floor = 0.0
    for i in active:
        r1 = rmap[i](1.0)
        try:
            amp = abs(gs[i].inverse_derivative(r1) * r1) * c0
        except (ValueError, ArithmeticError):
            continue
        floor = max(floor, 8.0 * EPS * (amp + scale[i]) / scale[i])
    if floor > newton.tol:
        newton = replace(newton, tol=floor)
    xi, iters = _solve_xi(residual, jacobian, active, m, newton)
    phi_hat = p1h + sum(x * p for x, p in zip(xi, p2h))
    r = [rmap[i](xi[i]) for i in range(m)]
    return _finish(state, ctx, dt, phi_hat, r, xi, iters)


def _second(state, model, gs, ctx, order, dt, forcing, eps1=0.0, eps2=0.0):
    _check_history(order, state, dt)
    pots = model.potentials
    phe = _extrapolate(order, state, dt, state.phi, state.phi_prev)
    derivs = [potential_derivative(ctx, p, phe) for p in pots]
    gvals = [g.forward(bulk_energy(ctx, p, phe)) for p, g in zip(pots, gs)]
    r_ex = state.r if order == "bdf1" else _extrapolate(order, state, dt, state.r, state.r_prev)
    dh = [ctx.forward(d) for d in derivs]
    eta = np.empty(len(pots))
    for i, g in enumerate(gvals):
        if abs(g) <= DENOM_FLOOR:
            if _rms(ctx, dh[i]) <= DEGENERATE_COEF:
                eta[i] = 1.0
                continue
            raise DenominatorNearZero(f"G(∫F_{i}) = {g:.3e} vanishes while F_{i}' does not")
        eta[i] = r_ex[i] / g
    t_force = state.t + (0.5 * dt if order == "cn" else dt)
    lin = _Linear(ctx, model, order, dt, state, eps1, eps2, _forcing_hat(ctx, forcing, t_force))
    phi_hat = lin.phi1_hat + sum(e * lin.response(d) for e, d in zip(eta, dh))
    ph, pph = _hats(ctx, state)
    r = np.empty(len(pots))
    for i, g in enumerate(gs):
        qn = g.inverse(state.r[i])
        if order == "bdf2":
            incr = ctx.inner_hat(dh[i], 3.0 * phi_hat - 4.0 * ph + pph)
            qnew = (4.0 * qn - g.inverse(state.r_prev[i]) + eta[i] * incr) / 3.0
        else:
            qnew = qn + eta[i] * ctx.inner_hat(dh[i], phi_hat - ph)
        r[i] = g.forward(qnew)
        g.inverse(r[i])  # surfaces a saturated tanh / non-positive exp
    return _finish(state, ctx, dt, phi_hat, r, eta, 0)


def _third(state, model, gs, ctx, order, dt, forcing, newton):
    if order == "cn":
        raise ConfigError("the third approach has no CN stencil")
    _check_history(order, state, dt)
    pots = model.potentials
    m = len(pots)
    phe = _extrapolate(order, state, dt, state.phi, state.phi_prev)
    derivs = [potential_derivative(ctx, p, phe) for p in pots]
    gvals = [g.forward(bulk_energy(ctx, p, phe)) for p, g in zip(pots, gs)]
    lin = _Linear(ctx, model, order, dt, state, forcing_hat=_forcing_hat(ctx, forcing, state.t + dt))
    dh = [ctx.forward(d) for d in derivs]
    p1h = lin.phi1_hat
    p2h = [lin.response(d) for d in dh]
    p1 = ctx.inverse(p1h)
    p2 = [ctx.inverse(p) for p in p2h]
    ph, pph = _hats(ctx, state)

    bulk_n = [bulk_energy(ctx, p, state.phi) for p in pots]
    if order == "bdf2":
        c0 = c1 = 3.0
        base = 4.0 * ph - pph
        hist = [4.0 * bn - bulk_energy(ctx, p, state.phi_prev) for bn, p in zip(bulk_n, pots)]
    else:
        c0 = c1 = 1.0
        base = ph
        hist = list(bulk_n)
    a = np.array([ctx.inner_hat(d, c1 * p1h - base) for d in dh])
    B = np.array([[ctx.inner_hat(d, p) for p in p2h] for d in dh])
    active = [i for i in range(m) if _rms(ctx, dh[i]) > DEGENERATE_COEF]
    scale = np.array(
        [1.0 + abs(hist[i]) + abs(a[i]) + c1 * np.abs(B[i]).sum() + abs(c0 * bulk_n[i]) for i in range(m)]
    )

    def field_at(xi):
        return p1 + sum(x * p for x, p in zip(xi, p2))

    def residual(xi):
        phi = field_at(xi)
        lin_part = a + c1 * (B @ xi)
        out = np.array([c0 * bulk_energy(ctx, pots[i], phi) for i in range(m)])
        return (out - np.array(hist) - xi * lin_part) / scale

    def jacobian(xi):
        phi = field_at(xi)
        lin_part = a + c1 * (B @ xi)
        J = -c1 * xi[:, None] * B
        for i in range(m):
            d_new = potential_derivative(ctx, pots[i], phi)
            for k in range(m):
                J[i, k] += c0 * gr.inner(ctx, d_new, p2[k])
            J[i, i] -= lin_part[i]
        return J / scale[:, None]

    xi, iters = _solve_xi(residual, jacobian, active, m, newton, polish=True)
    phi_hat = p1h + sum(x * p for x, p in zip(xi, p2h))
    r = [x * g for x, g in zip(xi, gvals)]
    return _finish(state, ctx, dt, phi_hat, r, xi, iters)


def step(
    state: SchemeState,
    model: ModelSpec,
    gs,
    ctx: gr.SpectralContext,
    kind: SchemeKind,
    dt: float,
    forcing=None,
    newton: NewtonConfig | None = None,
) -> SchemeState:
    """Advance one step with ``kind``; falls back to BDF1 when history is missing."""
    gs = as_g_list(gs, model)
    newton = newton or NewtonConfig()
    if kind.two_level and not state.has_history:
        kind = kind.startup
    if kind.approach == "first":
        return _first(state, model, gs, ctx, kind.order, dt, forcing, newton)
    if kind.approach == "second":
        return _second(state, model, gs, ctx, kind.order, dt, forcing, kind.eps1, kind.eps2)
    return _third(state, model, gs, ctx, kind.order, dt, forcing, newton)


def step_first(state, model, g, ctx, dt, order="bdf1", forcing=None, newton=None):
    return _first(state, model, as_g_list(g, model), ctx, order, dt, forcing, newton or NewtonConfig())


def step_first_multi_potential(state, model, g_list, ctx, dt, forcing=None, newton=None):
    """BDF2 step with one auxiliary variable per potential (m×m ξ system)."""
    return _first(
        state, model, as_g_list(g_list, model), ctx, "bdf2", dt, forcing, newton or NewtonConfig()
    )


def step_second(state, model, g, ctx, dt, order="bdf1", forcing=None):
    return _second(state, model, as_g_list(g, model), ctx, order, dt, forcing)


def step_third_bdf2(state, model, g, ctx, dt, forcing=None, newton=None):
    return _third(state, model, as_g_list(g, model), ctx, "bdf2", dt, forcing, newton or NewtonConfig())


def step_multicomponent_cn(state, model, g, ctx, dt, forcing=None, newton=None):
    """Crank-Nicolson first-approach step sharing one ``r`` across components.

    Without a previous level the step is the BDF1 startup step.
    """
    if model.n_components < 2:
        raise ConfigError("multi-component CN needs at least two components")
    order = "cn" if state.has_history else "bdf1"
    return _first(state, model, as_g_list(g, model), ctx, order, dt, forcing, newton or NewtonConfig())


def step_stabilized_cn(state, model, g, eps1, eps2, ctx, dt, forcing=None):
    if eps1 < 0 or eps2 < 0:
        raise ConfigError("stabilisation constants must be non-negative")
    return _second(state, model, as_g_list(g, model), ctx, "cn", dt, forcing, eps1, eps2)


def step_classic_sav(state, model, C, ctx, dt, forcing=None):
    """Linear SAV (``r = sqrt(∫F + C)``, ``r_t = (F', φ_t) / (2 sqrt(∫F + C))``), BDF1.

    Kept separate from the G-SAV engine on purpose: it is the baseline the
    square-root G-SAV scheme is compared against.
    """
    if len(model.potentials) != 1:
        raise ConfigError("classic SAV baseline handles a single potential")
    pot = model.potentials[0]
    phi = state.phi
    fp = potential_derivative(ctx, pot, phi)
    b = fp / math.sqrt(bulk_energy(ctx, pot, phi) + C)
    A = model.mobility_symbol(ctx)
    symbol = A * model.linear_symbol(ctx)
    src = phi / dt
    if forcing is not None:
        src = src + np.asarray(forcing(state.t + dt)).reshape(phi.shape)
    u = np.stack([gr.solve_diagonal(ctx, 1.0 / dt, symbol[c], src[c]) for c in range(len(phi))])
    bh = ctx.forward(b)
    w = ctx.inverse(-A * bh / (1.0 / dt + symbol))
    # r' - r = ½ (b, φ' - φ) with φ' = u + r' w
    num = state.r[0] + 0.5 * gr.inner(ctx, b, u - phi)
    r_new = num / (1.0 - 0.5 * gr.inner(ctx, b, w))
    new_phi = u + r_new * w
    return SchemeState(
        phi=new_phi, r=np.array([r_new]), t=state.t + dt, phi_prev=phi, r_prev=state.r,
        dt=dt, xi_last=np.array([r_new / math.sqrt(bulk_energy(ctx, pot, phi) + C)]),
        step=state.step + 1,
    )
