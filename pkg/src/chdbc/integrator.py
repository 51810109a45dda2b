"""IMEX time stepping for the coupled temperature / flux / phase system.

One step advances ``(theta, q, chi, xi, v)`` with ``v = chi_t`` in three
stages:

1. flux      ``sigma (q* - q)/dt + q* = -grad theta``  (pointwise)
2. phase     ``eps (v* - v)/dt + v* = -A mu*`` with ``chi* = chi + dt v*`` and
             ``mu* = A_trace chi* + alpha v* + f(chi) - theta
                     + (2/dy) 1_Gamma [xi_t* - Lap_Gamma xi* + d_nu chi* + g(xi)]``
3. heat      ``theta* = theta - dt div q* - (chi* - chi)``

The bracket in stage 2 is the dynamic boundary condition entering through
the weak form of the chemical potential: tested against nodal pairs
``(phi, phi|_Gamma)`` with lumped boundary mass, the boundary equation shows
up on the wall rows scaled by ``boundary mass / bulk mass = 2/dy``.  Using
the discrete Green identity the linear part collapses to
``mu* = L chi* + M v* + N`` with ``L = A + (2/dy) 1_Gamma (-Lap_Gamma)``,
``M = alpha + (2/dy) 1_Gamma`` and explicit ``N``; every operator is
x-translation invariant, so stage 2 is one ``ny x ny`` solve per rfft
wavenumber.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .grid import GridSpec, trace
from .model import ModelParams
from .operators import apply_A, div, grad, laplace_beltrami, neumann_y_matrix, x_symbols

log = logging.getLogger(__name__)


class IntegrationError(RuntimeError):
    """Numerical failure during time stepping (blow-up or a singular solve)."""

    def __init__(self, message: str, step: int | None = None, t: float | None = None):
        super().__init__(message)
        self.step = step
        self.t = t


@dataclass(frozen=True)
class SystemState:
    theta: np.ndarray
    q: np.ndarray
    chi: np.ndarray
    xi: np.ndarray
    v: np.ndarray
    t: float = 0.0
    n: int = 0

    def copy(self) -> "SystemState":
        return SystemState(self.theta.copy(), self.q.copy(), self.chi.copy(), self.xi.copy(),
                           self.v.copy(), self.t, self.n)

    def __sub__(self, other: "SystemState") -> "SystemState":
        return SystemState(self.theta - other.theta, self.q - other.q, self.chi - other.chi,
                           self.xi - other.xi, self.v - other.v, self.t, self.n)


def make_state(grid: GridSpec, theta, chi, v=None, q=None, t: float = 0.0, n: int = 0) -> SystemState:
    """Build a state from interior data; ``xi`` is taken as the trace of ``chi``."""
    chi = np.array(grid.check_interior(chi, "chi"), dtype=float)
    theta = np.broadcast_to(np.asarray(theta, dtype=float), grid.shape).copy()
    v = grid.zeros() if v is None else np.broadcast_to(np.asarray(v, dtype=float), grid.shape).copy()
    q = grid.zeros_flux() if q is None else np.array(grid.check_flux(q), dtype=float)
    if np.any(q[1, :, 0] != 0) or np.any(q[1, :, -1] != 0):
        raise ValueError("initial flux must satisfy qy = 0 on the walls")
    return SystemState(theta, q, chi, trace(chi), v, float(t), int(n))


@dataclass(frozen=True)
class StepperConfig:
    dt: float
    t_end: float
    cadence: int = 1
    linear_tol: float = 1e-10

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not (self.t_end >= 0 and math.isfinite(self.t_end)):
            raise ValueError(f"t_end must be nonnegative, got {self.t_end}")
        if self.cadence < 1:
            raise ValueError(f"cadence must be >= 1, got {self.cadence}")


def stability_ceiling(params: ModelParams, state_range: tuple[float, float] = (-1.5, 1.5),
                      safety: float = 0.5) -> float:
    """Heuristic time-step ceiling from the explicit treatment of ``f``.

    ``safety / max(max |f'| over state_range, 1)``.  Not a theorem; the
    stiff linear parts are implicit and do not restrict ``dt``.
    """
    lo, hi = state_range
    fp = params.f.dpoly
    pts = [lo, hi]
    if fp.degree() >= 1:
        crit = fp.deriv().roots()
        crit = np.real(crit[np.abs(np.imag(crit)) < 1e-12])
        pts.extend(float(c) for c in crit if lo <= c <= hi)
    peak = float(np.max(np.abs(fp(np.asarray(pts)))))
    return safety / max(peak, 1.0)


class Stepper:
    """Precomputed phase-stage solver for fixed grid, parameters and ``dt``."""

    def __init__(self, grid: GridSpec, params: ModelParams, dt: float, linear_tol: float = 1e-10):
        if not dt > 0:
            raise ValueError(f"dt must be positive, got {dt}")
        self.grid = grid
        self.params = params
        self.dt = float(dt)
        ny = grid.ny
        s = x_symbols(grid)
        T = neumann_y_matrix(grid)
        eye = np.eye(ny)
        wall = np.zeros(ny)
        wall[[0, -1]] = 2.0 / grid.dy
        A = s[:, None, None] * eye + T
        L = A + s[:, None, None] * np.diag(wall)
        M = params.alpha * eye + np.diag(wall)
        S = (params.epsilon / dt + 1.0) * eye + A @ (dt * L + M)
        try:
            self._Sinv = np.linalg.inv(S)
        except np.linalg.LinAlgError as exc:
            raise IntegrationError(f"singular phase system for dt={dt}") from exc
        err = np.max(np.abs(S @ self._Sinv - eye))
        if not np.isfinite(err) or err > linear_tol:
            raise IntegrationError(f"phase system ill-conditioned (|S S^-1 - I| = {err:.2e}) for dt={dt}")
        self._wall_scale = 2.0 / grid.dy

    def _solve_phase(self, rhs: np.ndarray) -> np.ndarray:
        r = np.fft.rfft(rhs, axis=0)
        out = np.einsum("kij,kj->ki", self._Sinv, r)
        return np.fft.irfft(out, n=self.grid.nx, axis=0)

    def step(self, s: SystemState) -> SystemState:
        # blow-up is detected explicitly below
        with np.errstate(over="ignore", invalid="ignore"):
            return self._step(s)

    def _step(self, s: SystemState) -> SystemState:
        g, p, dt = self.grid, self.params, self.dt
        # (1) Cattaneo flux, pointwise implicit
        a = p.sigma / dt
        q = (a * s.q - grad(g, s.theta)) / (a + 1.0)
        # (2) phase: linear in v*, nonlinearity and temperature lagged
        xi = s.xi
        lc = apply_A(g, s.chi)
        lc[:, 0] -= self._wall_scale * laplace_beltrami(g, xi)[0]
        lc[:, -1] -= self._wall_scale * laplace_beltrami(g, xi)[1]
        expl = p.f(s.chi) - s.theta
        gx = p.g(xi)
        expl[:, 0] += self._wall_scale * gx[0]
        expl[:, -1] += self._wall_scale * gx[1]
        rhs = (p.epsilon / dt) * s.v - apply_A(g, lc + expl)
        v = self._solve_phase(rhs)
        # mean(A .) = 0 makes the mean recursion exact; strip solver rounding
        c = p.epsilon / dt
        v += c / (c + 1.0) * g.mean(s.v) - g.mean(v)
        chi = s.chi + dt * v
        # (3) heat balance from the new flux and phase increment
        theta = s.theta - dt * div(g, q) - (chi - s.chi)
        n = s.n + 1
        out = SystemState(theta, q, chi, trace(chi), v, n * dt, n)
        if not (np.all(np.isfinite(chi)) and np.all(np.isfinite(theta)) and np.all(np.isfinite(q))):
            raise IntegrationError(f"non-finite state at step {n} (t={out.t:.6g})", step=n, t=out.t)
        return out


Observer = Callable[[SystemState], None]


def run(s0: SystemState, params: ModelParams, cfg: StepperConfig,
        grid: GridSpec, observers: Sequence[Observer] = (),
        emit_initial: bool = True, stepper: Stepper | None = None) -> SystemState:
    """Advance ``s0`` to ``cfg.t_end`` calling observers every ``cfg.cadence`` steps.

    Time is ``n * dt`` with ``n`` the global step index carried by the state.
    Observers see states whose global step index is a multiple of the
    cadence, plus the final state.  ``emit_initial=False`` suppresses the
    call for ``s0`` (used when resuming from a snapshot).
    """
    stepper = stepper or Stepper(grid, params, cfg.dt, cfg.linear_tol)
    nsteps = int(round(cfg.t_end / cfg.dt)) - s0.n
    if nsteps < 0:
        raise ValueError(f"t_end={cfg.t_end} is before the state time {s0.t}")
    s = s0
    if emit_initial:
        for obs in observers:
            obs(s)
    for k in range(nsteps):
        try:
            s = stepper.step(s)
        except IntegrationError as exc:
            log.error("integration failed at step %s (t=%s): %s", exc.step, exc.t, exc)
            raise
        if s.n % cfg.cadence == 0 or k == nsteps - 1:
            for obs in observers:
                obs(s)
    return s
