"""Damped Newton solvers for the ξ equations.

Residuals may raise ``ValueError``/``ArithmeticError`` when a trial point
leaves the domain of ``G^{-1}``; such points are treated like non-finite
residuals and trigger step halving.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import Diverged, JacobianSingular

MAX_HALVINGS = 8


@dataclass(frozen=True)
class NewtonConfig:
    tol: float = 1e-12
    max_iter: int = 50
    bracket: float = 1.0

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass
class Root:
    """Converged Newton iterate plus bookkeeping."""

    x: float | np.ndarray
    iterations: int
    residual: float
    history: list = field(default_factory=list)


def _eval(fun, x):
    try:
        val = fun(x)
    except (ValueError, ArithmeticError):
        return math.nan
    return val


def _bisect(residual, lo, hi, flo, tol, max_iter):
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        fm = _eval(residual, mid)
        if not math.isfinite(fm):
            return None
        if abs(fm) <= tol:
            return mid, fm
        if (fm < 0) == (flo < 0):
            lo, flo = mid, fm
        else:
            hi = mid
        if hi - lo <= 4 * np.spacing(max(abs(lo), abs(hi))):
            return mid, fm
    return None


def solve_scalar(residual, derivative, x0: float, cfg: NewtonConfig = NewtonConfig()) -> Root:
    """Find a root of ``residual`` near ``x0``.

    Newton steps are halved (at most eight times) while the residual grows.
    If Newton stagnates, bisection is tried on ``[x0 - w, x0 + w]`` when the
    residual changes sign there (``w = cfg.bracket``).
    """
    x = float(x0)
    f = _eval(residual, x)
    if not math.isfinite(f):
        raise Diverged(f"residual not finite at x0={x0}", x, f, 0)
    history = [abs(f)]
    best_x, best_f = x, f
    if abs(f) <= cfg.tol:
        return Root(x, 0, f, history)
    for it in range(1, cfg.max_iter + 1):
        d = _eval(derivative, x)
        if not math.isfinite(d) or d == 0.0:
            break
        step = -f / d
        lam = 1.0
        xn = x + step
        fn = _eval(residual, xn)
        for _ in range(MAX_HALVINGS):
            if math.isfinite(fn) and abs(fn) <= abs(f):
                break
            lam *= 0.5
            xn = x + lam * step
            fn = _eval(residual, xn)
        if not math.isfinite(fn) or abs(fn) > abs(f):
            break
        x, f = xn, fn
        history.append(abs(f))
        if abs(f) < abs(best_f):
            best_x, best_f = x, f
        if abs(f) <= cfg.tol:
            return Root(x, it, f, history)
        if abs(lam * step) <= 4 * np.spacing(abs(x)):
            break
    # Bisection fallback.
    lo, hi = float(x0) - cfg.bracket, float(x0) + cfg.bracket
    flo, fhi = _eval(residual, lo), _eval(residual, hi)
    if math.isfinite(flo) and math.isfinite(fhi) and (flo < 0) != (fhi < 0):
        out = _bisect(residual, lo, hi, flo, cfg.tol, 200)
        if out is not None and abs(out[1]) <= cfg.tol:
            return Root(out[0], len(history) - 1, out[1], history)
    raise Diverged(
        f"Newton failed: best residual {abs(best_f):.3e} at x={best_x!r}",
        best_x, best_f, len(history) - 1,
    )


def solve_system(residual, jacobian, x0, cfg: NewtonConfig = NewtonConfig()) -> Root:
    """Damped Newton for a small dense system; convergence in the ∞-norm."""
    x = np.array(x0, dtype=float)
    m = x.size
    if m > 8:
        raise ValueError("solve_system is meant for m <= 8")

    def norm(v):
        return float(np.max(np.abs(v))) if np.all(np.isfinite(v)) else math.nan

    def ev(fun, y):
        try:
            return np.asarray(fun(y), dtype=float)
        except (ValueError, ArithmeticError):
            return np.full(m, np.nan)

    f = ev(residual, x)
    fnorm = norm(f)
    if not math.isfinite(fnorm):
        raise Diverged("residual not finite at x0", x, fnorm, 0)
    history = [fnorm]
    if fnorm <= cfg.tol:
        return Root(x, 0, fnorm, history)
    for it in range(1, cfg.max_iter + 1):
        try:
            J = np.asarray(jacobian(x), dtype=float).reshape(m, m)
        except (ValueError, ArithmeticError) as exc:
            raise JacobianSingular(f"Jacobian evaluation failed: {exc}") from exc
        if not np.all(np.isfinite(J)):
            raise JacobianSingular("Jacobian has non-finite entries")
        try:
            step = -np.linalg.solve(J, f)
        except np.linalg.LinAlgError as exc:
            raise JacobianSingular(str(exc)) from exc
        if np.linalg.cond(J) > 1e14:
            raise JacobianSingular(f"Jacobian condition number {np.linalg.cond(J):.2e}")
        lam = 1.0
        xn = x + step
        fn = ev(residual, xn)
        for _ in range(MAX_HALVINGS):
            if math.isfinite(norm(fn)) and norm(fn) <= fnorm:
                break
            lam *= 0.5
            xn = x + lam * step
            fn = ev(residual, xn)
        if not math.isfinite(norm(fn)) or norm(fn) > fnorm:
            break
        x, f, fnorm = xn, fn, norm(fn)
        history.append(fnorm)
        if fnorm <= cfg.tol:
            return Root(x, it, fnorm, history)
        if np.max(np.abs(lam * step)) <= 2 * np.max(np.spacing(np.abs(x))):
            break
    raise Diverged(f"Newton system failed: residual {fnorm:.3e}", x, fnorm, len(history) - 1)
