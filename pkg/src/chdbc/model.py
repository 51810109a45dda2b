"""Polynomial nonlinearities, potentials and model parameters."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.polynomial import Polynomial

DOUBLE_WELL = (0.0, -1.0, 0.0, 1.0)  # y^3 - y


class Nonlinearity:
    """A polynomial ``f`` with its derivative and the antiderivative ``F(y) = int_0^y f``."""

    def __init__(self, coeffs: Sequence[float]):
        c = np.trim_zeros(np.asarray(coeffs, dtype=float), "b")
        if c.size == 0:
            c = np.zeros(1)
        self.coeffs = tuple(float(x) for x in c)
        self.poly = Polynomial(c)
        self.dpoly = self.poly.deriv()
        self.d2poly = self.dpoly.deriv()
        self.potential = self.poly.integ(lbnd=0.0)

    def __call__(self, y):
        return self.poly(y)

    def prime(self, y):
        return self.dpoly(y)

    def antiderivative(self, y):
        return self.potential(y)

    def shifted(self, shift: float) -> "Nonlinearity":
        """``y -> f(y + shift)``; the potential keeps the ``F(0) = 0`` normalization
        of the *unshifted* map, i.e. ``F_hat(y) = F(y + shift)``."""
        out = Nonlinearity.__new__(Nonlinearity)
        p = self.poly(Polynomial([shift, 1.0]))
        out.coeffs = tuple(float(x) for x in p.coef)
        out.poly = p
        out.dpoly = p.deriv()
        out.d2poly = out.dpoly.deriv()
        out.potential = self.potential(Polynomial([shift, 1.0]))
        return out

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @property
    def leading(self) -> float:
        return self.coeffs[-1]


def _real_critical_points(p: Polynomial) -> np.ndarray:
    if p.degree() < 1:
        return np.zeros(0)
    r = p.deriv().roots()
    return np.real(r[np.abs(np.imag(r)) < 1e-9])


def global_min(p: Polynomial) -> float:
    """Minimum over the real line of an even-degree polynomial with positive lead."""
    pts = _real_critical_points(p)
    vals = p(np.concatenate([pts, [0.0]]))
    return float(np.min(vals))


@dataclass(frozen=True)
class AssumptionReport:
    name: str
    ok: bool
    c0: float
    c1: float
    message: str

    def __str__(self):
        status = "ok" if self.ok else "FAIL"
        return f"{self.name}: {status} (c0={self.c0:.6g}, c1={self.c1:.6g}) {self.message}".rstrip()


def check_nonlinearity(nl: Nonlinearity, name: str = "f") -> AssumptionReport:
    """Dissipativity check for one polynomial: odd degree, positive leading coefficient.

    Returns the sharpest constants with ``f' >= -c0`` and ``F >= -c1``.
    """
    deg = nl.degree
    if deg % 2 == 0 or nl.leading <= 0.0:
        why = "even degree" if deg % 2 == 0 else "nonpositive leading coefficient"
        return AssumptionReport(name, False, float("nan"), float("nan"),
                                f"{why}: liminf f'(s) > 0 fails as |s| -> inf")
    c0 = max(0.0, -global_min(nl.dpoly)) if nl.dpoly.degree() >= 2 else max(0.0, -float(nl.dpoly.coef[0]))
    c1 = max(0.0, -global_min(nl.potential))
    return AssumptionReport(name, True, c0, c1, "")


@dataclass(frozen=True)
class ModelParams:
    epsilon: float = 1.0
    sigma: float = 1.0
    alpha: float = 1.0
    f_coeffs: tuple = DOUBLE_WELL
    g_coeffs: tuple = DOUBLE_WELL
    f: Nonlinearity = field(init=False, repr=False, compare=False)
    g: Nonlinearity = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        for name in ("epsilon", "sigma", "alpha"):
            val = getattr(self, name)
            if not (np.isfinite(val) and val > 0):
                raise ValueError(f"{name} must be positive, got {val}")
        object.__setattr__(self, "f_coeffs", tuple(float(c) for c in self.f_coeffs))
        object.__setattr__(self, "g_coeffs", tuple(float(c) for c in self.g_coeffs))
        object.__setattr__(self, "f", Nonlinearity(self.f_coeffs))
        object.__setattr__(self, "g", Nonlinearity(self.g_coeffs))

    def digest_string(self) -> str:
        """Canonical text used for the snapshot parameter digest."""
        fc = ",".join(repr(c) for c in self.f_coeffs)
        gc = ",".join(repr(c) for c in self.g_coeffs)
        return f"eps={self.epsilon!r};sigma={self.sigma!r};alpha={self.alpha!r};f={fc};g={gc}"


def validate_assumptions(params: ModelParams) -> list[AssumptionReport]:
    return [check_nonlinearity(params.f, "f"), check_nonlinearity(params.g, "g")]
