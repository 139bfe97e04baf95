"""Invertible scalar transforms ``G`` for the auxiliary variable ``r = G(∫F)``.

Four families are supported::

    SqrtShift(C)   G(x) = sqrt(x + C)
    Power(p)       G(x) = x**p,  p in {3, 1/3}  (real signed roots)
    TanhScaled(C)  G(x) = tanh(x / C)
    ExpScaled(C)   G(x) = exp(x / C)

Each exposes ``forward``, ``inverse`` and ``inverse_derivative``; the module
level functions of the same names dispatch on the instance.  Config strings
such as ``"tanh:1e4"`` or ``"pow:1/3"`` are parsed by :func:`parse_g`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import ConfigError, DomainError, GRangeError, SingularDerivative

DEFAULT_C = 1.0e4
_TANH_MARGIN = 1e-12


def _cbrt(x: float) -> float:
    return float(np.cbrt(x))


@dataclass(frozen=True)
class SqrtShift:
    C: float = 1.0

    def __post_init__(self):
        if not self.C > 0:
            raise ValueError("SqrtShift needs C > 0")

    def forward(self, x: float) -> float:
        if x + self.C <= 0.0:
            raise DomainError(f"SqrtShift(C={self.C}) undefined at x={x} <= -C")
        return math.sqrt(x + self.C)

    def inverse(self, r: float) -> float:
        if r < 0.0:
            raise GRangeError(f"SqrtShift inverse needs r >= 0, got {r}")
        return r * r - self.C

    def inverse_derivative(self, r: float) -> float:
        if r < 0.0:
            raise GRangeError(f"SqrtShift inverse needs r >= 0, got {r}")
        return 2.0 * r

    def spec(self) -> str:
        return f"sqrt:{self.C:g}"


@dataclass(frozen=True)
class Power:
    p: float = 3.0

    def __post_init__(self):
        if self.p != 3.0 and self.p != 1.0 / 3.0:
            raise ValueError(f"Power supports p in {{3, 1/3}}, got {self.p}")

    @property
    def cube(self) -> bool:
        return self.p == 3.0

    def forward(self, x: float) -> float:
        return x * x * x if self.cube else _cbrt(x)

    def inverse(self, r: float) -> float:
        return _cbrt(r) if self.cube else r * r * r

    def inverse_derivative(self, r: float) -> float:
        if self.cube:
            if r == 0.0:
                raise SingularDerivative("d/dr r**(1/3) is unbounded at r = 0")
            return 1.0 / (3.0 * abs(r) ** (2.0 / 3.0))
        return 3.0 * r * r

    def spec(self) -> str:
        return "pow:3" if self.cube else "pow:1/3"


@dataclass(frozen=True)
class TanhScaled:
    C: float = DEFAULT_C

    def __post_init__(self):
        if not self.C > 0:
            raise ValueError("TanhScaled needs C > 0")

    def forward(self, x: float) -> float:
        return math.tanh(x / self.C)

    def _check(self, r: float) -> None:
        if not abs(r) < 1.0 - _TANH_MARGIN:
            raise GRangeError(
                f"tanh auxiliary variable r={r!r} is within 1e-12 of +-1; increase C"
            )

    def inverse(self, r: float) -> float:
        self._check(r)
        return self.C * math.atanh(r)

    def inverse_derivative(self, r: float) -> float:
        self._check(r)
        return self.C / (1.0 - r * r)

    def spec(self) -> str:
        return f"tanh:{self.C:g}"


@dataclass(frozen=True)
class ExpScaled:
    C: float = DEFAULT_C

    def __post_init__(self):
        if not self.C > 0:
            raise ValueError("ExpScaled needs C > 0")

    def forward(self, x: float) -> float:
        try:
            return math.exp(x / self.C)
        except OverflowError:
            raise GRangeError(f"exp(x/C) overflows at x={x}; increase C") from None

    def inverse(self, r: float) -> float:
        if not r > 0.0:
            raise GRangeError(f"exp auxiliary variable must be positive, got {r}")
        return self.C * math.log(r)

    def inverse_derivative(self, r: float) -> float:
        if not r > 0.0:
            raise GRangeError(f"exp auxiliary variable must be positive, got {r}")
        return self.C / r

    def spec(self) -> str:
        return f"exp:{self.C:g}"


GFunction = SqrtShift | Power | TanhScaled | ExpScaled


def forward(g: GFunction, x: float) -> float:
    return g.forward(x)


def inverse(g: GFunction, r: float) -> float:
    return g.inverse(r)


def inverse_derivative(g: GFunction, r: float) -> float:
    return g.inverse_derivative(r)


def parse_g(text: str, default_sqrt_c: float = 1.0) -> GFunction:
    """Parse ``"sqrt:C"``, ``"pow:3"``, ``"pow:1/3"``, ``"tanh:C"`` or ``"exp:C"``.

    The constant may be omitted for ``tanh``/``exp`` (default ``1e4``) and for
    ``sqrt`` (``default_sqrt_c``, which callers pick per model).
    """
    name, _, arg = text.strip().partition(":")
    name = name.lower()
    try:
        if name == "pow":
            p = Fraction(arg or "3")
            if p not in (Fraction(3), Fraction(1, 3)):
                raise ConfigError(f"pow exponent must be 3 or 1/3, got {arg}")
            return Power(3.0 if p == 3 else 1.0 / 3.0)
        if name == "sqrt":
            return SqrtShift(float(arg) if arg else default_sqrt_c)
        if name == "tanh":
            return TanhScaled(float(arg) if arg else DEFAULT_C)
        if name == "exp":
            return ExpScaled(float(arg) if arg else DEFAULT_C)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad G spec {text!r}: {exc}") from exc
    raise ConfigError(f"unknown G family {name!r} in {text!r}")
