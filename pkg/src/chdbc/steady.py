"""Stationary states under the mean constraint, the functional Upsilon and decay fits.

The discrete stationary problem is the fixed-point condition of the time
integrator: with ``v = 0`` and ``q = 0`` the chemical potential must be a
constant ``mu_inf``.  In nodal form

    A chi + (2/dy) 1_Gamma (-Lap_Gamma xi + g(xi)) + f(chi) = mu_inf,   <chi> = m

which, after multiplying by the quadrature weights, is exactly the
constrained critical-point equation of the discrete ``Upsilon``.  Summing it
against the weights gives ``mu_inf = <f(chi)> + |Omega|^{-1} int_Gamma g(xi)``
identically.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import GridSpec, grad_sq, surface_grad_sq, trace
from .model import ModelParams, Nonlinearity
from .operators import apply_A, laplace_beltrami, neumann_y_matrix, normal_derivative

log = logging.getLogger(__name__)

_MEAN_TOL = 1e-10


class SteadyStateError(RuntimeError):
    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class DecayFitError(ValueError):
    pass


@dataclass(frozen=True)
class Equilibrium:
    chi_inf: np.ndarray
    xi_inf: np.ndarray
    theta_inf: float
    mu_inf: float
    residual_norm: float
    iterations: int = 0


def _check_zero_mean(grid: GridSpec, u: np.ndarray) -> None:
    m = grid.mean(u)
    if abs(m) > _MEAN_TOL * max(1.0, float(np.max(np.abs(u)))):
        raise ValueError(f"expected a zero-mean field, got mean {m:.3e}")


def upsilon(grid: GridSpec, params: ModelParams, u: np.ndarray, v: np.ndarray, shift: float) -> float:
    """``1/2 ||grad u||^2 + 1/2 ||grad_G v||^2 + int F(u + shift) + int_G G(v + shift)``."""
    u = grid.check_interior(u)
    v = grid.check_boundary(v)
    _check_zero_mean(grid, u)
    return (0.5 * grad_sq(grid, u) + 0.5 * surface_grad_sq(grid, v)
            + grid.integral(params.f.antiderivative(u + shift))
            + grid.boundary_integral(params.g.antiderivative(v + shift)))


def gradient_M(grid: GridSpec, params: ModelParams, u: np.ndarray, v: np.ndarray,
               shift: float) -> tuple[np.ndarray, np.ndarray]:
    """Strong form of the derivative of Upsilon.

    Returns ``(P0(-Lap u + f_hat(u)), -Lap_G v + d_nu u + g_hat(v))`` with the
    wall rows of ``u`` pinned to ``v``.  For zero-mean directions ``w`` with
    ``w_G = w|_Gamma``,  ``(m_int, w) + (m_bdy, w_G)_Gamma`` equals the
    directional derivative of :func:`upsilon` exactly.
    """
    u = grid.check_interior(u).copy()
    v = grid.check_boundary(v)
    u[:, 0] = v[0]
    u[:, -1] = v[1]
    r = apply_A(grid, u, wall=v) + params.f(u + shift)
    r -= grid.mean(r)
    b = -laplace_beltrami(grid, v) + normal_derivative(grid, u) + params.g(v + shift)
    return r, b


def weak_gradient(grid: GridSpec, params: ModelParams, u: np.ndarray, v: np.ndarray,
                  shift: float) -> np.ndarray:
    """Riesz representative of ``dUpsilon`` on zero-mean nodal directions.

    Folds the boundary part onto the wall rows with the lumped mass ratio
    ``2/dy``; it vanishes exactly at discrete constrained critical points.
    """
    m_int, m_bdy = gradient_M(grid, params, u, v, shift)
    r = m_int.copy()
    r[:, 0] += 2.0 / grid.dy * m_bdy[0]
    r[:, -1] += 2.0 / grid.dy * m_bdy[1]
    return r - grid.mean(r)


# -- Newton ------------------------------------------------------------------

class _StationarySystem:
    def __init__(self, grid: GridSpec, params: ModelParams):
        self.grid = grid
        self.params = params
        nx, ny = grid.shape
        ex = np.ones(nx)
        kx = sp.diags([-ex[:-1], 2 * ex, -ex[:-1]], [-1, 0, 1], shape=(nx, nx), format="lil")
        kx[0, -1] = -1.0
        kx[-1, 0] = -1.0
        kx = kx.tocsr() / grid.dx**2
        wall = np.zeros(ny)
        wall[[0, -1]] = 2.0 / grid.dy
        self.wall = wall
        self.L = (sp.kron(kx, sp.diags(1.0 + wall)) + sp.kron(sp.identity(nx), sp.csr_matrix(neumann_y_matrix(grid)))).tocsr()
        self.wvec = (grid.weights / grid.area).ravel()

    def residual(self, chi: np.ndarray, mu: float, m: float) -> tuple[np.ndarray, float]:
        g, p = self.grid, self.params
        xi = trace(chi)
        r = apply_A(g, chi) + p.f(chi) - mu
        extra = 2.0 / g.dy * (-laplace_beltrami(g, xi) + p.g(xi))
        r[:, 0] += extra[0]
        r[:, -1] += extra[1]
        return r, g.mean(chi) - m

    def norm(self, r: np.ndarray, c: float) -> float:
        """Interior L2 + boundary H_Gamma + |mean defect|.

        On the wall rows ``(dy/2) r`` equals the boundary equation
        ``-Lap_G xi + d_nu chi + g(xi)`` plus ``dy/2`` times the bulk
        residual there, which is what gets measured in ``H_Gamma``.
        """
        g = self.grid
        inner = g.dx * g.dy * float(np.sum(r[:, 1:-1] ** 2))
        bdy = g.dx * float(np.sum((0.5 * g.dy * r[:, [0, -1]]) ** 2))
        return math.sqrt(inner + bdy) + abs(c)

    def jacobian(self, chi: np.ndarray) -> sp.csr_matrix:
        p = self.params
        d = p.f.prime(chi)
        xi = trace(chi)
        d[:, 0] += self.wall[0] * p.g.prime(xi[0])
        d[:, -1] += self.wall[-1] * p.g.prime(xi[1])
        J = self.L + sp.diags(d.ravel())
        n = J.shape[0]
        col = sp.csr_matrix(-np.ones((n, 1)))
        row = sp.csr_matrix(self.wvec[None, :])
        return sp.bmat([[J, col], [row, None]], format="csc")


def _gradient_flow(sys: _StationarySystem, chi: np.ndarray, m: float, steps: int, tau: float) -> np.ndarray:
    """Mass-projected semi-implicit descent on Upsilon, used when Newton stalls."""
    g, p = sys.grid, sys.params
    op = (sp.identity(sys.L.shape[0]) + tau * sys.L).tocsc()
    lu = spla.splu(op)
    for _ in range(steps):
        xi = trace(chi)
        nl = p.f(chi)
        gx = p.g(xi)
        nl[:, 0] += 2.0 / g.dy * gx[0]
        nl[:, -1] += 2.0 / g.dy * gx[1]
        nl -= g.mean(nl)
        chi = lu.solve((chi - tau * nl).ravel()).reshape(g.shape)
        chi += m - g.mean(chi)
    return chi


def solve_stationary(grid: GridSpec, params: ModelParams, seed_chi: np.ndarray, constraint_mean: float,
                     seed_xi: np.ndarray | None = None, theta_inf: float = 0.0, tol: float = 1e-10,
                     max_iter: int = 60, max_halvings: int = 30, fallback_rounds: int = 3) -> Equilibrium:
    """Damped Newton for ``(chi_inf, mu_inf)`` with the mean as a bordered constraint.

    Armijo backtracking (factor 1/2, at most ``max_halvings``) on the joint
    residual norm.  If a line search fails the iterate is pushed along a
    mass-preserving gradient flow of Upsilon and Newton is restarted, at most
    ``fallback_rounds`` times.
    """
    sys_ = _StationarySystem(grid, params)
    chi = np.array(grid.check_interior(seed_chi, "seed"), dtype=float)
    if seed_xi is not None:
        seed_xi = grid.check_boundary(seed_xi, "seed boundary")
        chi[:, 0] = seed_xi[0]
        chi[:, -1] = seed_xi[1]
    m = float(constraint_mean)
    chi += m - grid.mean(chi)
    xi = trace(chi)
    mu = grid.mean(params.f(chi)) + grid.boundary_integral(params.g(xi)) / grid.area
    r, c = sys_.residual(chi, mu, m)
    res = sys_.norm(r, c)
    rounds = 0
    it = 0
    while res > tol:
        if it >= max_iter:
            raise SteadyStateError(f"Newton did not converge in {max_iter} iterations (residual {res:.3e})", res)
        it += 1
        J = sys_.jacobian(chi)
        rhs = -np.concatenate([r.ravel(), [c]])
        try:
            delta = spla.spsolve(J, rhs)
        except RuntimeError as exc:  # singular factorization
            raise SteadyStateError(f"singular Jacobian at iteration {it}", res) from exc
        if not np.all(np.isfinite(delta)):
            raise SteadyStateError(f"singular Jacobian at iteration {it}", res)
        dchi = delta[:-1].reshape(grid.shape)
        dmu = float(delta[-1])
        lam = 1.0
        for _ in range(max_halvings + 1):
            chi_new = chi + lam * dchi
            mu_new = mu + lam * dmu
            r_new, c_new = sys_.residual(chi_new, mu_new, m)
            res_new = sys_.norm(r_new, c_new)
            if res_new <= (1.0 - 1e-4 * lam) * res or res_new <= tol:
                break
            lam *= 0.5
        else:
            if rounds >= fallback_rounds:
                raise SteadyStateError(f"line search failed at iteration {it} (residual {res:.3e})", res)
            rounds += 1
            log.info("Newton stalled at residual %.3e; gradient-flow restart %d", res, rounds)
            chi = _gradient_flow(sys_, chi, m, steps=200, tau=0.1)
            xi = trace(chi)
            mu = grid.mean(params.f(chi)) + grid.boundary_integral(params.g(xi)) / grid.area
            r, c = sys_.residual(chi, mu, m)
            res = sys_.norm(r, c)
            continue
        chi, mu, r, c, res = chi_new, mu_new, r_new, c_new, res_new
        log.debug("newton it=%d residual=%.3e step=%.3g", it, res, lam)
    return Equilibrium(chi, trace(chi), float(theta_inf), float(mu), float(res), it)


def mu_inf_identity(grid: GridSpec, params: ModelParams, eq: Equilibrium) -> float:
    """``<f(chi)> + |Omega|^{-1} int_Gamma g(xi)``, to be compared with ``eq.mu_inf``."""
    return grid.mean(params.f(eq.chi_inf)) + grid.boundary_integral(params.g(eq.xi_inf)) / grid.area


# -- decay fits --------------------------------------------------------------

@dataclass(frozen=True)
class DecayFit:
    model: str           # "algebraic" or "exponential"
    rate: float          # algebraic exponent p in (1+t)^-p, or exponential rate
    rho: float | None    # implied exponent with p = rho/(1 - 2 rho), algebraic only
    r2: float
    r2_algebraic: float
    r2_exponential: float
    monotone: bool
    n_points: int
    t_start: float
    t_stop: float

    def report(self) -> str:
        lines = [f"model: {self.model}",
                 f"window: t in [{self.t_start:.6g}, {self.t_stop:.6g}] ({self.n_points} points)",
                 f"R^2 algebraic: {self.r2_algebraic:.6f}",
                 f"R^2 exponential: {self.r2_exponential:.6f}",
                 f"monotone tail: {'yes' if self.monotone else 'no'}"]
        if self.model == "algebraic":
            lines.insert(1, f"exponent: {self.rate:.6g}")
            lines.insert(2, f"implied rho: {self.rho:.6g}")
        else:
            lines.insert(1, f"rate: {self.rate:.6g}")
        return "\n".join(lines)


def _linfit(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 0.0
    return float(slope), float(intercept), r2


def fit_decay(t: Sequence[float], dist: Sequence[float], t_min: float | None = None,
              floor: float = 1e-9, min_points: int = 5) -> DecayFit:
    """Fit ``log dist`` against ``log(1+t)`` and against ``t``; keep the better model.

    Only samples with ``t >= t_min`` and ``dist > floor`` enter the window.
    """
    t = np.asarray(t, dtype=float)
    d = np.asarray(dist, dtype=float)
    keep = d > floor
    if t_min is not None:
        keep &= t >= t_min
    t, d = t[keep], d[keep]
    if t.size < min_points:
        raise DecayFitError(f"decay window too short ({t.size} points above the noise floor {floor:g})")
    y = np.log(d)
    if np.ptp(y) < 1e-8:
        raise DecayFitError("distances are flat; nothing to fit (noise floor)")
    sa, _, r2a = _linfit(np.log1p(t), y)
    se, _, r2e = _linfit(t, y)
    monotone = bool(np.all(np.diff(d) <= 1e-12 * d[:-1]))
    if r2a > r2e:
        p = -sa
        rho = p / (1.0 + 2.0 * p) if p > 0 else None
        return DecayFit("algebraic", p, rho, r2a, r2a, r2e, monotone, t.size, float(t[0]), float(t[-1]))
    return DecayFit("exponential", -se, None, r2e, r2a, r2e, monotone, t.size, float(t[0]), float(t[-1]))
