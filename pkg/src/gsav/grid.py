"""Uniform periodic grids and Fourier-diagonal linear algebra.

Fields are plain ``numpy`` arrays whose last two axes are ``(nx, ny)``; axis
0 of a single field runs along ``x``.  Leading axes (components) broadcast
through every operator here.  Transforms use the real FFT along the last axis,
so spectra have shape ``(..., nx, ny // 2 + 1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GridMismatch, NonZeroMean, SingularMode


def _is_pow2(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class Grid:
    """Uniform ``nx x ny`` grid on the periodic rectangle ``[a,b) x [c,d)``."""

    nx: int
    ny: int
    a: float = -math.pi
    b: float = math.pi
    c: float = -math.pi
    d: float = math.pi

    def __post_init__(self):
        for name in ("nx", "ny"):
            n = getattr(self, name)
            if not isinstance(n, (int, np.integer)) or n < 4 or not _is_pow2(int(n)):
                raise ValueError(f"{name} must be a power of two >= 4, got {n!r}")
        if not (self.b > self.a and self.d > self.c):
            raise ValueError("domain must have positive extent in both directions")

    @classmethod
    def square(cls, n: int, lo: float = -math.pi, hi: float = math.pi) -> "Grid":
        return cls(n, n, lo, hi, lo, hi)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def hx(self) -> float:
        return (self.b - self.a) / self.nx

    @property
    def hy(self) -> float:
        return (self.d - self.c) / self.ny

    @property
    def area(self) -> float:
        return (self.b - self.a) * (self.d - self.c)

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(X, Y)`` sample coordinates with ``indexing='ij'``."""
        x = self.a + self.hx * np.arange(self.nx)
        y = self.c + self.hy * np.arange(self.ny)
        return np.meshgrid(x, y, indexing="ij")


@dataclass
class SpectralContext:
    """Cached wavenumbers and transform helpers for one grid.

    A context is owned by a single stepping loop.  ``dealias`` switches on the
    2/3 rule for nonlinear terms (models call :meth:`filter_nonlinear`).
    """

    grid: Grid
    dealias: bool = False
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        g = self.grid
        kx = 2.0 * np.pi / (g.b - g.a) * np.fft.fftfreq(g.nx, 1.0 / g.nx)
        ky = 2.0 * np.pi / (g.d - g.c) * np.fft.rfftfreq(g.ny, 1.0 / g.ny)
        self.kx = kx[:, None]
        self.ky = ky[None, :]
        self.k2 = self.kx**2 + self.ky**2
        # Odd derivatives drop the Nyquist mode so they stay real and skew.
        kxd = kx.copy()
        kxd[g.nx // 2] = 0.0
        kyd = ky.copy()
        kyd[-1] = 0.0
        self.ikx = 1j * kxd[:, None]
        self.iky = 1j * kyd[None, :]
        self.npts = g.nx * g.ny
        self.weight = g.hx * g.hy
        # rfft Parseval weights: interior columns stand for a conjugate pair.
        w = np.full(ky.shape, 2.0)
        w[0] = 1.0
        w[-1] = 1.0
        self.parseval = w[None, :]
        kmax_x = np.abs(kx).max()
        kmax_y = np.abs(ky).max()
        self.dealias_mask = (np.abs(self.kx) <= 2.0 / 3.0 * kmax_x) & (
            np.abs(self.ky) <= 2.0 / 3.0 * kmax_y
        )

    @property
    def spectral_shape(self) -> tuple[int, int]:
        return (self.grid.nx, self.grid.ny // 2 + 1)

    def check(self, f: np.ndarray) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if f.shape[-2:] != self.grid.shape:
            raise GridMismatch(
                f"field shape {f.shape[-2:]} does not match grid {self.grid.shape}"
            )
        return f

    def forward(self, f: np.ndarray) -> np.ndarray:
        return np.fft.rfft2(self.check(f))

    def inverse(self, fh: np.ndarray) -> np.ndarray:
        return np.fft.irfft2(fh, s=self.grid.shape)

    def filter_nonlinear(self, f: np.ndarray) -> np.ndarray:
        if not self.dealias:
            return f
        return self.inverse(self.forward(f) * self.dealias_mask)

    def inner_hat(self, fh: np.ndarray, gh: np.ndarray) -> float:
        """L2 inner product from rfft spectra (summed over component axes)."""
        s = np.sum(self.parseval * (fh.real * gh.real + fh.imag * gh.imag))
        return float(s) * self.weight / self.npts


def laplacian(ctx: SpectralContext, f: np.ndarray) -> np.ndarray:
    return ctx.inverse(-ctx.k2 * ctx.forward(f))


def gradient(ctx: SpectralContext, f: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    fh = ctx.forward(f)
    return ctx.inverse(ctx.ikx * fh), ctx.inverse(ctx.iky * fh)


def divergence(ctx: SpectralContext, vx: np.ndarray, vy: np.ndarray) -> np.ndarray:
    return ctx.inverse(ctx.ikx * ctx.forward(vx) + ctx.iky * ctx.forward(vy))


def gradient_squared(ctx: SpectralContext, f: np.ndarray) -> np.ndarray:
    fx, fy = gradient(ctx, f)
    return fx * fx + fy * fy


def inverse_neg_laplacian_zero_mean(ctx: SpectralContext, f: np.ndarray) -> np.ndarray:
    """Solve ``-Δw = f`` for zero-mean ``w``; ``f`` must itself have zero mean."""
    f = ctx.check(f)
    scale = float(np.max(np.abs(f))) if f.size else 0.0
    mean = float(np.mean(f))
    if abs(mean) > 1e-10 * scale:
        raise NonZeroMean(f"field mean {mean:.3e} is not below 1e-10*|f|_inf")
    k2 = ctx.k2.copy()
    k2[0, 0] = 1.0
    wh = ctx.forward(f) / k2
    wh[..., 0, 0] = 0.0
    return ctx.inverse(wh)


def solve_diagonal(ctx: SpectralContext, a: float, symbol, rhs: np.ndarray) -> np.ndarray:
    """Return ``phi`` with ``(a + S) phi = rhs`` where ``S`` is a Fourier multiplier.

    ``symbol`` is an array broadcastable to ``ctx.spectral_shape`` (for
    instance ``ctx.k2`` for ``-Δ`` or ``M * ctx.k2**2`` for a Cahn-Hilliard
    operator).
    """
    denom = a + np.broadcast_to(np.asarray(symbol, dtype=float), ctx.spectral_shape)
    if np.any(denom <= 0.0):
        raise SingularMode("a + symbol(k) <= 0 for some wavenumber")
    return ctx.inverse(ctx.forward(rhs) / denom)


def integrate(ctx: SpectralContext, f: np.ndarray) -> float:
    f = ctx.check(f)
    return float(np.sum(f)) * ctx.weight


def inner(ctx: SpectralContext, f: np.ndarray, g: np.ndarray) -> float:
    f = ctx.check(f)
    g = ctx.check(g)
    return float(np.sum(f * g)) * ctx.weight
