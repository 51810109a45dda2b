"""Invariant checks over a diagnostics stream (the ``verify`` subcommand)."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .diagnostics import DiagnosticRecord, DiagnosticsConfig, estimate_c0, lyapunov_excess
from .storage import RunMeta, records_to_array

CONSERVATION_TOL = 1e-12
CURL_TOL = 1e-10
MEAN_REL_TOL = 1e-12
MEAN_ABS_TOL = 1e-13
TRACE_TOL = 1e-10


@dataclass(frozen=True)
class CheckResult:
    name: str
    ok: bool
    measured: float
    threshold: float
    detail: str = ""

    def line(self) -> str:
        tag = "PASS" if self.ok else "FAIL"
        extra = f" ({self.detail})" if self.detail else ""
        return f"{tag} {self.name}: measured {self.measured:.3e} threshold {self.threshold:.3e}{extra}"


def _steps(t: np.ndarray, dt: float) -> np.ndarray:
    return np.rint(t / dt).astype(np.int64)


def check_stream(records: Sequence[DiagnosticRecord], meta: RunMeta,
                 h_slack: float | None = None) -> list[CheckResult]:
    """Run every stream invariant; one result per check.

    Tolerances: conserved total relative to ``max(|total_0|, |Omega|)``;
    curl norm relative to its initial value; means within
    ``1e-12 * scale + 1e-13`` of their discrete closed forms where ``scale``
    is the magnitude of the closed form's data.  The Lyapunov check counts
    increments above ``C0 e^{-2t} dt + h_slack``; the default slack is
    rounding level, ``1e-12 * max(1, max |H|)``.
    """
    a = records_to_array(records)
    if a.shape[0] < 2:
        return [CheckResult("stream length", False, float(a.shape[0]), 2.0, "need at least two records")]
    col = {name: a[:, k] for k, name in enumerate(records[0].__dataclass_fields__)}
    t = col["t"]
    out: list[CheckResult] = []

    finite = bool(np.all(np.isfinite(a)))
    out.append(CheckResult("finite values", finite, float(np.sum(~np.isfinite(a))), 0.0))
    dtv = np.diff(t)
    out.append(CheckResult("monotone time", bool(np.all(dtv > 0)), float(np.min(dtv)), 0.0))

    ct = col["conserved_total"]
    scale = max(abs(ct[0]), meta.area)
    drift = float(np.max(np.abs(ct - ct[0]))) / scale
    out.append(CheckResult("conservation", drift <= CONSERVATION_TOL, drift, CONSERVATION_TOL))

    n = _steps(t, meta.dt)
    c = col["curl_norm"]
    if c[0] > 0:
        pred = c[0] * np.exp(-n * math.log1p(meta.dt / meta.sigma))
        err = float(np.max(np.abs(c - pred) / np.maximum(pred, 1e-300)))
        out.append(CheckResult("curl recursion", err <= CURL_TOL, err, CURL_TOL))
    else:
        err = float(np.max(np.abs(c)))
        out.append(CheckResult("curl recursion", err <= CURL_TOL, err, CURL_TOL, "zero initial curl, absolute"))

    cfg = DiagnosticsConfig(meta.kappa1, meta.kappa2, meta.mean_theta0, meta.mean_chi0, meta.mean_chi1,
                            meta.dt, meta.epsilon)
    q1 = np.array([cfg.q1(int(k)) for k in n])
    mv_err = np.abs(col["mean_v"] - q1)
    mv_tol = MEAN_REL_TOL * np.abs(q1) + MEAN_ABS_TOL
    ratio = float(np.max(mv_err / mv_tol))
    out.append(CheckResult("mean v closed form", ratio <= 1.0, float(np.max(mv_err)),
                           float(np.max(mv_tol)), f"max error/tolerance {ratio:.3g}"))
    decay = q1 / meta.mean_chi1 if meta.mean_chi1 else np.zeros_like(q1)
    mc = meta.mean_chi0 + meta.epsilon * meta.mean_chi1 * (1.0 - decay)
    mc_err = np.abs(col["mean_chi"] - mc)
    mc_tol = MEAN_REL_TOL * (abs(meta.mean_chi0) + meta.epsilon * abs(meta.mean_chi1)) + MEAN_ABS_TOL
    out.append(CheckResult("mean chi closed form", bool(np.all(mc_err <= mc_tol)), float(np.max(mc_err)), mc_tol))

    H = col["lyap_H"]
    if h_slack is None:
        h_slack = 1e-12 * max(1.0, float(np.max(np.abs(H))))
    c0 = estimate_c0(t, H)
    excess = lyapunov_excess(t, H, c0) - h_slack
    bad = int(np.sum(excess > 0))
    out.append(CheckResult("lyapunov decrease", bad == 0, float(np.max(excess + h_slack)), h_slack,
                           f"C0={c0:.3g}, {bad} violating intervals"))

    tr = float(np.max(col["trace_residual"]))
    out.append(CheckResult("trace consistency", tr <= TRACE_TOL, tr, TRACE_TOL))
    return out
