"""Runtime observables: conserved totals, energies, Lyapunov functionals.

Functionals are evaluated in the shifted ("tilde") variables

    theta~ = theta - <theta>,  chi~ = chi - <chi>,  xi~ = xi - <chi>,
    v~ = v - Q1,               Q1 = <chi_1> (1 + dt/eps)^(-n)

where ``Q1`` is the exact mean of ``v`` produced by the integrator after
``n`` steps.  ``||A0^{-1/2} u||^2`` is computed as ``(u, A0^{-1} u)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields, astuple
from typing import Iterable, Sequence

import numpy as np

from .grid import GridSpec, grad_sq, pair_h1_norm, surface_grad_sq, trace
from .integrator import SystemState
from .model import ModelParams
from .operators import NeumannLaplacian, apply_A, curl2d, grad

CSV_COLUMNS = (
    "t", "conserved_total", "mean_chi", "mean_v", "x_norm", "energy_Y", "lyap_E",
    "func_G", "lyap_H", "dissipation_D", "curl_norm", "trace_residual",
)


@dataclass(frozen=True)
class DiagnosticsConfig:
    kappa1: float = 1e-3
    kappa2: float = 1e-2
    mean_theta0: float = 0.0
    mean_chi0: float = 0.0
    mean_chi1: float = 0.0
    dt: float = 1e-3
    epsilon: float = 1.0

    def __post_init__(self):
        if not (self.kappa1 > 0 and self.kappa2 > 0):
            raise ValueError("kappa1 and kappa2 must be positive")

    @property
    def mean_limit(self) -> float:
        """Limit of ``<chi>``: ``<chi_0> + eps <chi_1>``."""
        return self.mean_chi0 + self.epsilon * self.mean_chi1

    def q1(self, n: int) -> float:
        """Mean of ``v`` after ``n`` implicit steps, ``<chi_1> (1 + dt/eps)^-n``."""
        return self.mean_chi1 * math.exp(-n * math.log1p(self.dt / self.epsilon))

    @classmethod
    def from_state(cls, grid: GridSpec, s0: SystemState, dt: float, epsilon: float,
                   kappa1: float = 1e-3, kappa2: float = 1e-2) -> "DiagnosticsConfig":
        return cls(kappa1, kappa2, grid.mean(s0.theta), grid.mean(s0.chi), grid.mean(s0.v), dt, epsilon)


def state_norm(grid: GridSpec, s: SystemState, lap: NeumannLaplacian | None = None) -> float:
    """Phase-space norm ``sqrt(|theta|^2 + |q|^2 + |(chi, xi)|_H1^2 + |v|_V*^2)``.

    Applied to a difference of states it is the distance used for
    convergence to equilibrium.
    """
    lap = lap or NeumannLaplacian(grid)
    return float(np.sqrt(grid.inner_l2(s.theta, s.theta) + grid.inner_flux(s.q, s.q)
                         + pair_h1_norm(grid, s.chi, s.xi) ** 2 + lap.vstar_norm(s.v) ** 2))


@dataclass(frozen=True)
class SmallnessReport:
    c_poincare: float
    c_omega: float
    checks: tuple
    ok: bool

    def lines(self) -> list[str]:
        return [f"{'PASS' if ok else 'FAIL'} {name}: {lhs:.4g} <= {rhs:.4g}" for name, lhs, rhs, ok in self.checks]


def smallness_check(grid: GridSpec, kappa1: float, kappa2: float) -> SmallnessReport:
    """Check the multiplier smallness constraints with grid Poincare constants.

    ``C_P = lambda_1^{-1/2}`` with ``lambda_1`` the smallest nonzero
    eigenvalue of the discrete Neumann Laplacian; ``C_Omega = max(1, C_P)``
    bounds ``|(q, grad A0^{-1} u)| <= C_Omega ||q|| ||u||`` together with
    ``||A0^{-1/2} div q|| <= ||q||``.
    """
    from .operators import neumann_y_matrix, x_symbols

    sx = x_symbols(grid)[1]
    ty = np.sort(np.linalg.eigvals(neumann_y_matrix(grid)).real)[1]
    lam1 = min(sx, ty)
    cp = 1.0 / math.sqrt(lam1)
    co = max(1.0, cp)
    checks = (
        ("kappa1 <= 1/4", kappa1, 0.25),
        ("kappa2 C_Omega <= 1/2", kappa2 * co, 0.5),
        ("kappa1 + kappa2 C_Omega / 2 <= 1/2", kappa1 + kappa2 * co / 2, 0.5),
        ("kappa2 C_Omega (C_Omega + 3) / 2 <= 1/2", kappa2 * co * (co + 3) / 2, 0.5),
        ("kappa1 C_P^2 / 2 <= kappa2 / 4", kappa1 * cp * cp / 2, kappa2 / 4),
    )
    checks = tuple((n, float(a), float(b), bool(a <= b)) for n, a, b in checks)
    return SmallnessReport(cp, co, checks, all(c[3] for c in checks))


@dataclass(frozen=True)
class Tilde:
    theta: np.ndarray
    chi: np.ndarray
    xi: np.ndarray
    v: np.ndarray
    q1: float


@dataclass(frozen=True)
class DiagnosticRecord:
    t: float
    conserved_total: float
    mean_chi: float
    mean_v: float
    x_norm: float
    energy_Y: float
    lyap_E: float
    func_G: float
    lyap_H: float
    dissipation_D: float
    curl_norm: float
    trace_residual: float

    def as_row(self) -> tuple:
        return astuple(self)


class Diagnostics:
    def __init__(self, grid: GridSpec, params: ModelParams, cfg: DiagnosticsConfig,
                 lap: NeumannLaplacian | None = None):
        self.grid = grid
        self.params = params
        self.cfg = cfg
        self.lap = lap or NeumannLaplacian(grid)
        self.f_hat = params.f.shifted(cfg.mean_limit)
        self.g_hat = params.g.shifted(cfg.mean_limit)

    # -- pieces ----------------------------------------------------------
    def tilde_split(self, s: SystemState) -> Tilde:
        g = self.grid
        m_chi = g.mean(s.chi)
        q1 = self.cfg.q1(s.n)
        return Tilde(s.theta - g.mean(s.theta), s.chi - m_chi, s.xi - m_chi, s.v - q1, q1)

    def x_norm(self, s: SystemState) -> float:
        return state_norm(self.grid, s, self.lap)

    def _flux_cross(self, q: np.ndarray, theta_t: np.ndarray) -> float:
        """``int q . grad A0^{-1} theta~``."""
        return self.grid.inner_flux(q, grad(self.grid, self.lap.solve(theta_t)))

    def chemical_residual(self, tl: Tilde) -> np.ndarray:
        """``P0(-Lap chi~ + f_hat(chi~))`` with the wall rows pinned to ``xi~``."""
        r = apply_A(self.grid, tl.chi, wall=tl.xi) + self.f_hat(tl.chi)
        return r - self.grid.mean(r)

    # -- functionals -----------------------------------------------------
    def energy_Y(self, s: SystemState, tl: Tilde | None = None) -> float:
        g, lap, p = self.grid, self.lap, self.params
        k1, k2 = self.cfg.kappa1, self.cfg.kappa2
        tl = tl or self.tilde_split(s)
        a0_chi = lap.solve(tl.chi)
        return (0.5 * g.inner_l2(tl.theta, tl.theta)
                + 0.5 * g.inner_flux(s.q, s.q)
                + 0.5 * lap.inv_half_sq(tl.v)
                + 0.5 * grad_sq(g, tl.chi)
                + g.integral(p.f.antiderivative(s.chi))
                + 0.5 * surface_grad_sq(g, tl.xi)
                + 0.5 * k1 * g.inner_gamma(tl.xi, tl.xi)
                + g.boundary_integral(p.g.antiderivative(s.xi))
                + k1 * g.inner_l2(tl.v, a0_chi)
                + 0.5 * k1 * g.inner_l2(tl.chi, a0_chi)
                + 0.5 * k1 * p.alpha * g.inner_l2(tl.chi, tl.chi)
                + k2 * self._flux_cross(s.q, tl.theta))

    def upsilon_part(self, tl: Tilde) -> float:
        g = self.grid
        return (0.5 * grad_sq(g, tl.chi) + 0.5 * surface_grad_sq(g, tl.xi)
                + g.integral(self.f_hat.antiderivative(tl.chi))
                + g.boundary_integral(self.g_hat.antiderivative(tl.xi)))

    def lyapunov_E(self, s: SystemState, tl: Tilde | None = None) -> float:
        g = self.grid
        tl = tl or self.tilde_split(s)
        return (self.upsilon_part(tl)
                + 0.5 * (g.inner_l2(tl.theta, tl.theta) + g.inner_flux(s.q, s.q)
                         + self.lap.vstar_norm(tl.v) ** 2)
                + self.cfg.kappa1 * self._flux_cross(s.q, tl.theta))

    def func_G(self, s: SystemState, tl: Tilde | None = None) -> float:
        tl = tl or self.tilde_split(s)
        lap = self.lap
        return self.grid.inner_l2(lap.solve(tl.v), lap.solve(self.chemical_residual(tl)))

    def lyap_H(self, s: SystemState) -> float:
        tl = self.tilde_split(s)
        return self.lyapunov_E(s, tl) + self.cfg.kappa2 * self.func_G(s, tl)

    def dissipation_D(self, s: SystemState, tl: Tilde | None = None) -> float:
        g, p = self.grid, self.params
        k1, k2 = self.cfg.kappa1, self.cfg.kappa2
        tl = tl or self.tilde_split(s)
        xi_t = trace(tl.v)
        r = self.chemical_residual(tl)
        return (0.5 * g.inner_flux(s.q, s.q)
                + 0.25 * self.lap.vstar_norm(tl.v) ** 2
                + 0.5 * p.alpha * g.inner_l2(tl.v, tl.v)
                + 0.5 * g.inner_gamma(xi_t, xi_t)
                + 0.25 * k1 * g.inner_l2(tl.theta, tl.theta)
                + 0.5 * k2 * self.lap.inv_half_sq(r)
                + math.exp(-2.0 * s.t))

    def record(self, s: SystemState) -> DiagnosticRecord:
        g = self.grid
        tl = self.tilde_split(s)
        e = self.lyapunov_E(s, tl)
        gg = self.func_G(s, tl)
        return DiagnosticRecord(
            t=s.t,
            conserved_total=g.integral(s.theta + s.chi),
            mean_chi=g.mean(s.chi),
            mean_v=g.mean(s.v),
            x_norm=self.x_norm(s),
            energy_Y=self.energy_Y(s, tl),
            lyap_E=e,
            func_G=gg,
            lyap_H=e + self.cfg.kappa2 * gg,
            dissipation_D=self.dissipation_D(s, tl),
            curl_norm=g.norm_l2(curl2d(g, s.q)),
            trace_residual=float(np.max(np.abs(s.xi - trace(s.chi)))),
        )


# -- stream checks ---------------------------------------------------------

def mean_trajectory_error(records: Sequence[DiagnosticRecord], cfg: DiagnosticsConfig,
                          discrete: bool = False) -> tuple[float, float]:
    """Largest deviation of ``<chi>``, ``<v>`` from their closed forms.

    The continuous forms are ``<chi_0> + eps <chi_1> (1 - e^{-t/eps})`` and
    ``<chi_1> e^{-t/eps}``; ``discrete=True`` replaces ``e^{-t/eps}`` by the
    implicit-Euler factor ``(1 + dt/eps)^{-n}``.
    """
    err_chi = err_v = 0.0
    eps = cfg.epsilon
    for r in records:
        if discrete:
            decay = cfg.q1(int(round(r.t / cfg.dt))) / cfg.mean_chi1 if cfg.mean_chi1 else 0.0
        else:
            decay = math.exp(-r.t / eps)
        mv = cfg.mean_chi1 * decay
        mc = cfg.mean_chi0 + eps * cfg.mean_chi1 * (1.0 - decay)
        err_chi = max(err_chi, abs(r.mean_chi - mc))
        err_v = max(err_v, abs(r.mean_v - mv))
    return err_chi, err_v


def estimate_c0(t: np.ndarray, H: np.ndarray) -> float:
    """Start-of-run estimate ``max(1, 10 |H_1 - H_0| / dt_0)`` of the source constant."""
    return max(1.0, 10.0 * abs(H[1] - H[0]) / (t[1] - t[0]))


def lyapunov_excess(t: Sequence[float], H: Sequence[float], c0: float | None = None) -> np.ndarray:
    """Per-interval excess ``H_{n+1} - H_n - C0 e^{-2 t_n} (t_{n+1} - t_n)``."""
    t = np.asarray(t, dtype=float)
    H = np.asarray(H, dtype=float)
    if c0 is None:
        c0 = estimate_c0(t, H)
    return np.diff(H) - c0 * np.exp(-2.0 * t[:-1]) * np.diff(t)
