"""Initial data for the built-in scenarios.

Random perturbations come from ``numpy.random.Generator(PCG64(seed))``
(PCG-XSL-RR 128/64), drawn as standard normals in C order over the
``(nx, ny)`` grid, so a seed reproduces the same field on every platform
numpy supports.  The draw is projected off the odd-even grid modes (which
the collocated gradient cannot see) and off its mean.
"""
from __future__ import annotations

import numpy as np

from .config import ScenarioSpec
from .grid import GridSpec
from .integrator import SystemState, make_state
from .operators import remove_odd_even


def random_perturbation(grid: GridSpec, amplitude: float, seed: int) -> np.ndarray:
    rng = np.random.Generator(np.random.PCG64(seed))
    z = amplitude * rng.standard_normal(grid.shape)
    z = remove_odd_even(grid, z)
    return z - grid.mean(z)


def curl_flux(grid: GridSpec, strength: float) -> np.ndarray:
    """A smooth flux with nonzero curl and ``qy = 0`` on the walls."""
    x, y = grid.coords()
    kx = 2 * np.pi / grid.Lx
    ky = np.pi / grid.Ly
    q = grid.zeros_flux()
    q[0] = strength * np.cos(kx * x) * np.cos(ky * y)
    q[1] = strength * np.sin(kx * x) * np.sin(ky * y)
    q[1][:, [0, -1]] = 0.0
    return q


def build_initial_state(grid: GridSpec, sc: ScenarioSpec) -> SystemState:
    if sc.name == "constant-equilibrium":
        return make_state(grid, sc.get("theta"), np.full(grid.shape, sc.get("value")))

    chi = random_perturbation(grid, sc.get("amplitude"), sc.get("seed")) + sc.get("mean")
    q = curl_flux(grid, sc.get("curl")) if sc.get("curl") else None
    if sc.name == "spinodal":
        layer = sc.get("layer")
        if layer:
            _, y = grid.coords()
            chi = chi + layer * np.cos(np.pi * y / grid.Ly)
        return make_state(grid, sc.get("theta"), chi, q=q)
    if sc.name == "mean-ode":
        return make_state(grid, sc.get("theta"), chi, v=sc.get("chi1_mean"), q=q)
    raise ValueError(f"unknown scenario {sc.name!r}")
