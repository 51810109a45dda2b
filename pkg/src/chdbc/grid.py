"""Periodic slab geometry, quadrature and basic norms.

The domain is ``[0, Lx) x [0, Ly]``: periodic in x with ``nx`` cells (no
duplicated seam column) and ``ny`` nodes in y including both walls.  The
boundary consists of the two lines ``y = 0`` and ``y = Ly``.

Field conventions used across the package (plain numpy arrays):

* interior field: shape ``(nx, ny)``, entry ``[i, j]`` sits at ``(i*dx, j*dy)``
* boundary field: shape ``(2, nx)``, row 0 is ``y = 0``, row 1 is ``y = Ly``
* flux field:     shape ``(2, nx, ny)``, components ``(qx, qy)``; ``qy``
  vanishes on the wall rows ``j = 0`` and ``j = ny - 1``
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class GridSpec:
    Lx: float
    Ly: float
    nx: int
    ny: int
    _weights: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (self.Lx > 0 and self.Ly > 0):
            raise ValueError(f"slab lengths must be positive, got Lx={self.Lx}, Ly={self.Ly}")
        if self.nx < 4 or self.nx % 2:
            raise ValueError(f"nx must be even and >= 4, got {self.nx}")
        if self.ny < 3:
            raise ValueError(f"ny must be >= 3, got {self.ny}")
        wy = np.full(self.ny, self.dy)
        wy[0] = wy[-1] = 0.5 * self.dy
        w = np.outer(np.full(self.nx, self.dx), wy)
        w.setflags(write=False)
        object.__setattr__(self, "_weights", w)

    @property
    def dx(self) -> float:
        return self.Lx / self.nx

    @property
    def dy(self) -> float:
        return self.Ly / (self.ny - 1)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def area(self) -> float:
        return self.Lx * self.Ly

    @property
    def boundary_length(self) -> float:
        return 2.0 * self.Lx

    @property
    def weights(self) -> np.ndarray:
        """Quadrature weights: uniform in x, trapezoid in y."""
        return self._weights

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        """Meshgrid ``(X, Y)`` of node coordinates, each of shape ``(nx, ny)``."""
        x = np.arange(self.nx) * self.dx
        y = np.arange(self.ny) * self.dy
        return np.meshgrid(x, y, indexing="ij")

    def x(self) -> np.ndarray:
        return np.arange(self.nx) * self.dx

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)

    def zeros_boundary(self) -> np.ndarray:
        return np.zeros((2, self.nx))

    def zeros_flux(self) -> np.ndarray:
        return np.zeros((2,) + self.shape)

    # -- shape checks -------------------------------------------------
    def check_interior(self, u: np.ndarray, name: str = "field") -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape != self.shape:
            raise ValueError(f"{name} has shape {u.shape}, grid expects {self.shape}")
        return u

    def check_boundary(self, b: np.ndarray, name: str = "boundary field") -> np.ndarray:
        b = np.asarray(b, dtype=float)
        if b.shape != (2, self.nx):
            raise ValueError(f"{name} has shape {b.shape}, grid expects {(2, self.nx)}")
        return b

    def check_flux(self, q: np.ndarray, name: str = "flux") -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if q.shape != (2,) + self.shape:
            raise ValueError(f"{name} has shape {q.shape}, grid expects {(2,) + self.shape}")
        return q

    # -- quadrature ---------------------------------------------------
    def integral(self, u: np.ndarray) -> float:
        return float(np.sum(self._weights * self.check_interior(u)))

    def mean(self, u: np.ndarray) -> float:
        """Average of ``u`` over the slab."""
        return self.integral(u) / self.area

    def inner_l2(self, u: np.ndarray, w: np.ndarray) -> float:
        u = self.check_interior(u)
        w = self.check_interior(w, "second field")
        return float(np.sum(self._weights * u * w))

    def norm_l2(self, u: np.ndarray) -> float:
        return float(np.sqrt(self.inner_l2(u, u)))

    def inner_flux(self, p: np.ndarray, q: np.ndarray) -> float:
        p = self.check_flux(p)
        q = self.check_flux(q, "second flux")
        return float(np.sum(self._weights * (p[0] * q[0] + p[1] * q[1])))

    def norm_flux(self, q: np.ndarray) -> float:
        return float(np.sqrt(self.inner_flux(q, q)))

    def boundary_integral(self, b: np.ndarray) -> float:
        """Integral over both boundary lines (periodic trapezoid rule)."""
        return float(self.dx * np.sum(self.check_boundary(b)))

    def inner_gamma(self, b1: np.ndarray, b2: np.ndarray) -> float:
        b1 = self.check_boundary(b1)
        b2 = self.check_boundary(b2, "second boundary field")
        return float(self.dx * np.sum(b1 * b2))

    def norm_gamma(self, b: np.ndarray) -> float:
        return float(np.sqrt(self.inner_gamma(b, b)))


def trace(u: np.ndarray) -> np.ndarray:
    """Restriction of an interior field to the two wall rows."""
    return np.stack([u[:, 0], u[:, -1]])


def grad_sq(grid: GridSpec, u: np.ndarray) -> float:
    """Discrete ``||grad u||^2`` with compact (staggered) differences.

    This is the quadratic form of the Neumann stiffness matrix, so
    ``grad_sq(u) == (u, A u)`` for the ghost-closed Laplacian ``A``.
    """
    u = grid.check_interior(u)
    ex = (np.roll(u, -1, axis=0) - u) / grid.dx
    ey = np.diff(u, axis=1) / grid.dy
    return float(np.sum(grid.weights * ex * ex) + grid.dx * grid.dy * np.sum(ey * ey))


def surface_grad_sq(grid: GridSpec, b: np.ndarray) -> float:
    """Discrete ``||grad_Gamma b||^2`` summed over both boundary lines."""
    b = grid.check_boundary(b)
    e = (np.roll(b, -1, axis=1) - b) / grid.dx
    return float(grid.dx * np.sum(e * e))


def pair_h1_norm(grid: GridSpec, chi: np.ndarray, xi: np.ndarray, trace_tol: float | None = 1e-8) -> float:
    """Graph norm of the pair ``(chi, xi)`` in H^1(Omega) x H^1(Gamma).

    ``trace_tol`` bounds the allowed mismatch between ``xi`` and the trace of
    ``chi``; pass ``None`` to skip the check.
    """
    chi = grid.check_interior(chi)
    xi = grid.check_boundary(xi)
    if trace_tol is not None:
        gap = np.max(np.abs(trace(chi) - xi))
        scale = max(1.0, float(np.max(np.abs(xi))))
        if gap > trace_tol * scale:
            raise ValueError(f"xi differs from trace(chi) by {gap:.3e}")
    total = (grid.inner_l2(chi, chi) + grad_sq(grid, chi)
             + grid.inner_gamma(xi, xi) + surface_grad_sq(grid, xi))
    return float(np.sqrt(total))
