"""Finite-difference operators on the periodic slab.

Two Laplacian closures are provided.  The *Neumann* closure mirrors the
field across the wall (ghost node), which makes ``A = -Laplacian`` the
quadrature-weighted stiffness operator: ``(A u, w) = (grad u, grad w)``
and ``mean(A u) == 0``.  The *trace* closure pins the wall rows to a given
boundary field and uses one-sided second differences there.  Together with
the second-order one-sided normal derivative they satisfy the discrete
Green identity

    (A_neumann u, w) = (A_trace u, w) + (d_nu u, w|_Gamma)_Gamma

for every pair of fields, which is what ties the bulk and boundary parts of
the phase equation together.

Gradient and divergence use centred differences with one-sided first-order
rows at the walls; with the trapezoid weights this pair is summation-by-parts
(``(div q, u) = -(q, grad u)`` whenever ``qy`` vanishes on the walls).
Being collocated, ``grad`` annihilates the odd-even patterns
``(-1)^i`` and ``(-1)^j`` (and their product) besides constants, so the
projection of ``theta + chi`` onto those modes is an extra discrete
invariant; see :func:`odd_even_modes`.
"""
from __future__ import annotations

import numpy as np

from .grid import GridSpec, grad_sq, trace

__all__ = [
    "NeumannLaplacian", "apply_A", "curl2d", "div", "dx_central",
    "grad", "laplace_beltrami", "normal_derivative", "trace",
    "neumann_y_matrix", "x_symbols", "odd_even_modes", "remove_odd_even",
]

_WALL_TOL = 1e-12
_MEAN_FLOOR = 1e-13  # absolute slack for sources that are themselves at rounding level


def dx_central(grid: GridSpec, u: np.ndarray) -> np.ndarray:
    return (np.roll(u, -1, axis=0) - np.roll(u, 1, axis=0)) / (2.0 * grid.dx)


def _dy_sbp(grid: GridSpec, u: np.ndarray) -> np.ndarray:
    out = np.empty_like(u)
    out[:, 1:-1] = (u[:, 2:] - u[:, :-2]) / (2.0 * grid.dy)
    out[:, 0] = (u[:, 1] - u[:, 0]) / grid.dy
    out[:, -1] = (u[:, -1] - u[:, -2]) / grid.dy
    return out


def _dxx(grid: GridSpec, u: np.ndarray, axis: int = 0) -> np.ndarray:
    return (np.roll(u, -1, axis=axis) - 2.0 * u + np.roll(u, 1, axis=axis)) / grid.dx**2


def _check_wall(grid: GridSpec, q: np.ndarray) -> np.ndarray:
    q = grid.check_flux(q)
    scale = max(1.0, float(np.max(np.abs(q))))
    wall = max(float(np.max(np.abs(q[1, :, 0]))), float(np.max(np.abs(q[1, :, -1]))))
    if wall > _WALL_TOL * scale:
        raise ValueError(f"flux violates q.nu = 0 on the walls (max |qy| = {wall:.3e})")
    return q


def grad(grid: GridSpec, u: np.ndarray) -> np.ndarray:
    """Gradient as a flux field; the normal component is dropped on the walls."""
    u = grid.check_interior(u)
    q = np.empty((2,) + u.shape)
    q[0] = dx_central(grid, u)
    q[1] = _dy_sbp(grid, u)
    q[1, :, 0] = 0.0
    q[1, :, -1] = 0.0
    return q


def div(grid: GridSpec, q: np.ndarray) -> np.ndarray:
    q = _check_wall(grid, q)
    return dx_central(grid, q[0]) + _dy_sbp(grid, q[1])


def curl2d(grid: GridSpec, q: np.ndarray) -> np.ndarray:
    """Scalar curl ``d_x qy - d_y qx`` on interior rows; zero on the wall rows.

    Centred differences in both directions commute, so ``curl2d(grad u)``
    vanishes up to rounding.
    """
    q = _check_wall(grid, q)
    out = np.zeros(grid.shape)
    out[:, 1:-1] = (dx_central(grid, q[1])[:, 1:-1]
                    - (q[0][:, 2:] - q[0][:, :-2]) / (2.0 * grid.dy))
    return out


def apply_A(grid: GridSpec, u: np.ndarray, wall: np.ndarray | None = None) -> np.ndarray:
    """``-Laplacian u``.

    Without ``wall`` the homogeneous Neumann ghost closure is used.  With
    ``wall`` the wall rows of ``u`` are replaced by the boundary field and
    closed with one-sided second differences.
    """
    u = grid.check_interior(u)
    dy2 = grid.dy**2
    if wall is None:
        uyy = np.empty_like(u)
        uyy[:, 1:-1] = u[:, 2:] - 2.0 * u[:, 1:-1] + u[:, :-2]
        uyy[:, 0] = 2.0 * (u[:, 1] - u[:, 0])
        uyy[:, -1] = 2.0 * (u[:, -2] - u[:, -1])
        return -(_dxx(grid, u) + uyy / dy2)
    wall = grid.check_boundary(wall, "wall")
    u = u.copy()
    u[:, 0] = wall[0]
    u[:, -1] = wall[1]
    uyy = np.empty_like(u)
    uyy[:, 1:-1] = u[:, 2:] - 2.0 * u[:, 1:-1] + u[:, :-2]
    uyy[:, 0] = u[:, 0] - 2.0 * u[:, 1] + u[:, 2]
    uyy[:, -1] = u[:, -1] - 2.0 * u[:, -2] + u[:, -3]
    return -(_dxx(grid, u) + uyy / dy2)


def laplace_beltrami(grid: GridSpec, b: np.ndarray) -> np.ndarray:
    """Periodic second difference along each boundary line."""
    b = grid.check_boundary(b)
    return _dxx(grid, b, axis=1)


def normal_derivative(grid: GridSpec, u: np.ndarray) -> np.ndarray:
    """Outward normal derivative, one-sided second order (outward is -y at the bottom)."""
    u = grid.check_interior(u)
    h2 = 2.0 * grid.dy
    bottom = (3.0 * u[:, 0] - 4.0 * u[:, 1] + u[:, 2]) / h2
    top = (3.0 * u[:, -1] - 4.0 * u[:, -2] + u[:, -3]) / h2
    return np.stack([bottom, top])


def x_symbols(grid: GridSpec) -> np.ndarray:
    """Eigenvalues of the periodic ``-d_xx`` stencil for the rfft wavenumbers."""
    k = np.arange(grid.nx // 2 + 1)
    return (2.0 * np.sin(np.pi * k / grid.nx) / grid.dx) ** 2


def odd_even_modes(grid: GridSpec) -> np.ndarray:
    """Non-constant kernel of :func:`grad`, shape ``(3, nx, ny)``.

    The patterns ``(-1)^i``, ``(-1)^j`` and ``(-1)^(i+j)`` are mutually
    orthogonal and orthogonal to constants in the quadrature inner product.
    """
    i = np.arange(grid.nx)[:, None]
    j = np.arange(grid.ny)[None, :]
    sx = np.broadcast_to((-1.0) ** i, grid.shape)
    sy = np.broadcast_to((-1.0) ** j, grid.shape)
    return np.stack([sx, sy, sx * sy])


def remove_odd_even(grid: GridSpec, u: np.ndarray) -> np.ndarray:
    """Orthogonal projection of ``u`` off :func:`odd_even_modes` (mean untouched)."""
    u = np.array(grid.check_interior(u), dtype=float)
    for m in odd_even_modes(grid):
        u -= grid.inner_l2(u, m) / grid.inner_l2(m, m) * m
    return u


def neumann_y_matrix(grid: GridSpec) -> np.ndarray:
    """Dense ``-d_yy`` with the ghost Neumann closure, shape ``(ny, ny)``."""
    n = grid.ny
    T = np.zeros((n, n))
    idx = np.arange(1, n - 1)
    T[idx, idx] = 2.0
    T[idx, idx - 1] = -1.0
    T[idx, idx + 1] = -1.0
    T[0, 0], T[0, 1] = 2.0, -2.0
    T[-1, -1], T[-1, -2] = 2.0, -2.0
    return T / grid.dy**2


class NeumannLaplacian:
    """Neumann ``A = -Laplacian`` and its inverse ``A0^{-1}`` on zero-mean fields.

    The inverse diagonalises the periodic x-direction with a real FFT and
    solves one ``ny x ny`` system per wavenumber.  The constant mode of the
    ``k = 0`` block is fixed by a bordering row that imposes zero weighted
    mean in y.  All per-wavenumber inverses are formed once at construction.
    """

    def __init__(self, grid: GridSpec):
        self.grid = grid
        self.symbols = x_symbols(grid)
        T = neumann_y_matrix(grid)
        ny = grid.ny
        eye = np.eye(ny)
        mats = self.symbols[1:, None, None] * eye + T
        self._inv = np.linalg.inv(mats)
        wy = grid.weights[0] / grid.dx
        border = np.zeros((ny + 1, ny + 1))
        border[:ny, :ny] = T
        border[:ny, ny] = wy
        border[ny, :ny] = wy
        self._inv0 = np.linalg.inv(border)[:ny, :ny]

    def apply(self, u: np.ndarray) -> np.ndarray:
        return apply_A(self.grid, u)

    def solve(self, rhs: np.ndarray, tol: float = 1e-10) -> np.ndarray:
        """Zero-mean ``w`` with ``A w = rhs``; ``rhs`` must have zero mean."""
        g = self.grid
        rhs = g.check_interior(rhs, "rhs")
        m = g.mean(rhs)
        norm = g.norm_l2(rhs)
        if abs(m) * np.sqrt(g.area) > tol * norm and abs(m) > _MEAN_FLOOR:
            raise ValueError(f"A0^-1 needs a zero-mean source, got mean {m:.3e}")
        r = np.fft.rfft(rhs, axis=0)
        out = np.empty_like(r)
        out[0] = self._inv0 @ r[0]
        out[1:] = np.einsum("kij,kj->ki", self._inv, r[1:])
        w = np.fft.irfft(out, n=g.nx, axis=0)
        return w - g.mean(w)

    def vstar_norm(self, u: np.ndarray) -> float:
        """Dual norm ``sqrt(||grad A0^{-1}(u - <u>)||^2 + <u>^2)``."""
        g = self.grid
        m = g.mean(u)
        u0 = u - m
        w = self.solve(u0)
        return float(np.sqrt(grad_sq(g, w) + m * m))

    def inv_half_sq(self, u: np.ndarray) -> float:
        """``||A0^{-1/2} u||^2 = (u, A0^{-1} u)`` for zero-mean ``u``."""
        return self.grid.inner_l2(u, self.solve(u))
