"""Acceptance suite: one PASS/FAIL line per criterion (1 to 10).

Each test records its verdict through the ``acceptance`` fixture before
asserting, so the summary section lists every criterion even on failure.
"""
import csv
import math
import time
from pathlib import Path

import numpy as np
import pytest

from chdbc.cli import decay_stream, main
from chdbc.config import ScenarioSpec
from chdbc.diagnostics import Diagnostics, DiagnosticsConfig, estimate_c0, state_norm
from chdbc.grid import GridSpec, trace
from chdbc.integrator import Stepper, StepperConfig, make_state, run
from chdbc.model import ModelParams
from chdbc.operators import NeumannLaplacian, apply_A, div, grad
from chdbc.scenarios import build_initial_state, curl_flux
from chdbc.steady import fit_decay, gradient_M, mu_inf_identity, solve_stationary, upsilon
from chdbc.storage import decode_snapshot, encode_snapshot, read_csv

TWO_PI = 2 * math.pi


def cfg_text(scenario, opts="", lx=TWO_PI, ly=TWO_PI, nx=64, ny=33, dt=1e-3, t_end=1.0,
             cadence=1, snapshot_every=0):
    return f"""
[grid]
lx = {lx!r}
ly = {ly!r}
nx = {nx}
ny = {ny}

[stepper]
dt = {dt!r}
t_end = {t_end!r}
cadence = {cadence}
snapshot_every = {snapshot_every}

[scenario]
name = {scenario}
{opts}
"""


def collect(grid, params, s0, dt, t_end, cadence=1):
    diag = Diagnostics(grid, params, DiagnosticsConfig.from_state(grid, s0, dt, params.epsilon))
    recs = []
    final = run(s0, params, StepperConfig(dt, t_end, cadence), grid, [lambda s: recs.append(diag.record(s))])
    return recs, final


def test_criterion_01_conservation(tmp_path, acceptance):
    cfg = tmp_path / "c1.ini"
    cfg.write_text(cfg_text("spinodal", "seed = 7", dt=1e-3, t_end=5.0, cadence=10))
    t0 = time.perf_counter()
    code = main(["simulate", "--config", str(cfg), "--output", str(tmp_path / "run")])
    elapsed = time.perf_counter() - t0
    recs = read_csv(tmp_path / "run" / "diagnostics.csv")
    ct = np.array([r.conserved_total for r in recs])
    drift = float(np.max(np.abs(ct - ct[0]))) / abs(ct[0])
    ok = code == 0 and recs[-1].t == pytest.approx(5.0) and drift <= 1e-12 and elapsed <= 20.0
    acceptance(1, ok, f"relative drift {drift:.2e} (<= 1e-12), runtime {elapsed:.1f} s (<= 20 s)")
    assert ok


def test_criterion_02_mean_odes(acceptance):
    g, p = GridSpec(TWO_PI, TWO_PI, 32, 17), ModelParams()
    s0 = build_initial_state(g, ScenarioSpec("mean-ode", {"chi1_mean": 0.2}))
    assert g.mean(s0.v) == pytest.approx(0.2, rel=1e-14)
    dt = 1e-3
    recs, _ = collect(g, p, s0, dt, 2.0, cadence=10)
    c1, m0 = g.mean(s0.v), g.mean(s0.chi)
    v_rel = chi_rel = gap_ratio = 0.0
    for r in recs:
        n = int(round(r.t / dt))
        q1 = c1 * (1.0 + dt) ** (-n)
        v_rel = max(v_rel, abs(r.mean_v - q1) / abs(q1))
        chi_cf = m0 + c1 * (1.0 - (1.0 + dt) ** (-n))
        chi_rel = max(chi_rel, abs(r.mean_chi - chi_cf) / max(abs(chi_cf), 1.0))
        if r.t > 0:
            gap_ratio = max(gap_ratio, abs(q1 - c1 * math.exp(-r.t)) / (1.1 * c1 * r.t * dt))
    ok = v_rel <= 1e-12 and chi_rel <= 1e-12 and gap_ratio <= 1.0
    acceptance(2, ok, f"<v> rel err {v_rel:.2e}, <chi> rel err {chi_rel:.2e}, "
                      f"gap / (1.1 <chi1> t dt) = {gap_ratio:.3f} (<= 1)")
    assert ok


def test_criterion_03_curl_decay(acceptance):
    g, p = GridSpec(TWO_PI, math.pi, 32, 17), ModelParams(sigma=1.0)
    x, y = g.coords()
    s0 = make_state(g, 1.0, 0.05 * np.cos(x) * np.cos(y), q=curl_flux(g, 0.5))
    dt, steps = 1e-3, 5000
    recs, _ = collect(g, p, s0, dt, steps * dt, cadence=50)
    c0 = recs[0].curl_norm
    assert c0 > 0.1
    err = max(abs(r.curl_norm - c0 * (1.0 + dt) ** (-round(r.t / dt))) / (c0 * (1.0 + dt) ** (-round(r.t / dt)))
              for r in recs)
    ok = err <= 1e-10 and round(recs[-1].t / dt) == steps
    acceptance(3, ok, f"max relative curl error over {steps} steps {err:.2e} (<= 1e-10)")
    assert ok


def test_criterion_04_operator_oracles(acceptance):
    errs = []
    for n in (32, 64, 128):
        g = GridSpec(TWO_PI, math.pi, n, n // 2 + 1)
        x, y = g.coords()
        u = np.cos(x) * np.cos(y)  # (k, m) = (1, 1), eigenvalue 2
        w = NeumannLaplacian(g).solve(u)
        errs.append(math.sqrt(g.inner_l2(w - u / 2.0, w - u / 2.0)))
    orders = [math.log2(errs[0] / errs[1]), math.log2(errs[1] / errs[2])]

    g = GridSpec(2.5, 1.5, 32, 17)
    lap = NeumannLaplacian(g)
    r = np.random.default_rng(4)
    rt = sa = sbp = 0.0
    for _ in range(10):
        u, w = r.standard_normal((2,) + g.shape)
        u -= g.mean(u)
        w -= g.mean(w)
        su = lap.solve(u)
        rt = max(rt, g.norm_l2(apply_A(g, su) - u) / g.norm_l2(u))
        a, b = g.inner_l2(su, w), g.inner_l2(u, lap.solve(w))
        sa = max(sa, abs(a - b) / (g.norm_l2(su) * g.norm_l2(w)))
        q = r.standard_normal((2,) + g.shape)
        q[1, :, [0, -1]] = 0.0
        lhs = g.inner_l2(div(g, q), u) + g.inner_flux(q, grad(g, u))
        sbp = max(sbp, abs(lhs) / (g.norm_flux(q) * g.norm_flux(grad(g, u))))
    ok = min(orders) >= 1.9 and rt <= 1e-10 and sa <= 1e-10 and sbp <= 1e-10
    acceptance(4, ok, f"A0^-1 orders {orders[0]:.3f}, {orders[1]:.3f} (>= 1.9); round trip {rt:.1e}, "
                      f"self-adjoint {sa:.1e}, summation by parts {sbp:.1e} (<= 1e-10)")
    assert ok


def test_criterion_05_gradient_check(acceptance):
    g = GridSpec(3.0, 2.0, 16, 9)
    r = np.random.default_rng(2024)
    h, worst = 1e-5, 0.0
    for _ in range(20):
        f = (r.uniform(-0.5, 0.5), r.uniform(-1.5, -0.5), r.uniform(-0.5, 0.5), r.uniform(0.5, 1.5))
        gc = (r.uniform(-0.5, 0.5), r.uniform(-1.5, -0.5), r.uniform(-0.5, 0.5), r.uniform(0.5, 1.5))
        p = ModelParams(f_coeffs=f, g_coeffs=gc)
        u = 0.5 * r.standard_normal(g.shape)
        u -= g.mean(u)
        w = r.standard_normal(g.shape)
        w -= g.mean(w)
        shift = r.uniform(-0.5, 0.5)
        fd = (upsilon(g, p, u + h * w, trace(u + h * w), shift)
              - upsilon(g, p, u - h * w, trace(u - h * w), shift)) / (2 * h)
        mi, mb = gradient_M(g, p, u, trace(u), shift)
        pair = g.inner_l2(mi, w) + g.inner_gamma(mb, trace(w))
        worst = max(worst, abs(fd - pair) / abs(pair))
    ok = worst <= 1e-6
    acceptance(5, ok, f"max relative error over 20 instances {worst:.2e} (<= 1e-6, h = 1e-5)")
    assert ok


def test_criterion_06_stationary_fixed_point(acceptance):
    g, p = GridSpec(TWO_PI, math.pi, 32, 17), ModelParams()
    r = np.random.default_rng(6)
    seed = 1.0 + 0.01 * r.standard_normal(g.shape)
    eq = solve_stationary(g, p, seed, 1.0)
    assert np.max(np.abs(eq.chi_inf - 1.0)) < 1e-10
    s_eq = make_state(g, eq.theta_inf, eq.chi_inf)
    stepper = Stepper(g, p, 1e-3)
    s = s_eq
    lap = NeumannLaplacian(g)
    drift = 0.0
    for _ in range(1000):
        s = stepper.step(s)
        drift = max(drift, state_norm(g, s - s_eq, lap))
    ident = abs(eq.mu_inf - mu_inf_identity(g, p, eq))
    ok = eq.residual_norm <= 1e-10 and drift <= 1e-8 and ident <= 1e-10
    acceptance(6, ok, f"Newton residual {eq.residual_norm:.1e} in {eq.iterations} iterations, "
                      f"1000-step drift {drift:.1e}, mu identity {ident:.1e}")
    assert ok


def test_criterion_07_lyapunov_structure(acceptance):
    g, p = GridSpec(TWO_PI, TWO_PI, 64, 33), ModelParams()
    s0 = build_initial_state(g, ScenarioSpec("spinodal", {"seed": 7}))
    assert g.mean(s0.v) == 0.0
    excess_ok = True
    pos, signed = [], []
    for dt in (2e-3, 1e-3, 5e-4):
        recs, _ = collect(g, p, s0, dt, 1.0)
        t = np.array([r.t for r in recs])
        H = np.array([r.lyap_H for r in recs])
        inc = np.diff(H)
        slack = estimate_c0(t, H) * np.exp(-2 * t[:-1]) * np.diff(t) + 1e-12 * np.max(np.abs(H))
        excess_ok &= bool(np.all(inc <= slack))
        pos.append(max(float(np.max(inc)), 0.0))
        signed.append(float(np.max(inc)))
    if max(pos) > 0:
        ratios = [pos[0] / pos[1], pos[1] / pos[2]]
        halving = all(1.4 <= q <= 2.6 for q in ratios)
        note = f"positive-increment ratios {ratios[0]:.2f}, {ratios[1]:.2f}"
    else:
        # no positive increment at any dt: the halving condition holds as 0 -> 0
        halving = True
        note = (f"no positive increments at any dt; largest signed increments {signed[0]:.2e}, "
                f"{signed[1]:.2e}, {signed[2]:.2e} (ratios {signed[0] / signed[1]:.2f}, "
                f"{signed[1] / signed[2]:.2f})")
    ok = excess_ok and halving
    acceptance(7, ok, f"H nonincreasing within slack: {excess_ok}; {note}")
    assert ok


@pytest.mark.slow
def test_criterion_08_convergence_to_equilibrium(tmp_path, acceptance, capsys):
    cfg = tmp_path / "c8.ini"
    cfg.write_text(cfg_text("spinodal", "seed = 7\namplitude = 0.05\nlayer = 0.5", ly=5.0, dt=0.01,
                            t_end=60.0, cadence=10, snapshot_every=50))
    run_dir, eq_dir = tmp_path / "run", tmp_path / "eq"
    assert main(["simulate", "--config", str(cfg), "--output", str(run_dir)]) == 0
    assert main(["steady", "--config", str(cfg), "--output", str(eq_dir),
                 "--seed-snapshot", str(run_dir / "final.chc")]) == 0
    capsys.readouterr()
    code = main(["fit-decay", "--csv", str(run_dir / "diagnostics.csv"),
                 "--equilibrium", str(eq_dir / "equilibrium.chc")])
    report = capsys.readouterr().out
    t, d = decay_stream(run_dir / "diagnostics.csv", eq_dir / "equilibrium.chc")
    fit = fit_decay(t, d, t_min=t[0] + 0.5 * (t[-1] - t[0]))
    eq = decode_snapshot((eq_dir / "equilibrium.chc").read_bytes())
    two_phase = np.ptp(eq.state.chi) > 0.5
    ok = code == 0 and d[-1] < 1e-4 and fit.r2 >= 0.95 and fit.monotone and two_phase
    rate = f"rate {fit.rate:.3g}" if fit.model == "exponential" else f"exponent {fit.rate:.3g}, rho {fit.rho}"
    acceptance(8, ok, f"final distance {d[-1]:.2e} (< 1e-4); {fit.model} fit, {rate}, R^2 {fit.r2:.4f}, "
                      f"monotone {fit.monotone}; equilibrium range {np.ptp(eq.state.chi):.2f}")
    assert "monotone tail: yes" in report
    assert ok


def test_criterion_09_temporal_order(acceptance):
    g, p = GridSpec(TWO_PI, math.pi, 32, 17), ModelParams()
    x, y = g.coords()
    s0 = make_state(g, 0.5 + 0.2 * np.sin(x) * np.cos(y),
                    0.3 * np.cos(x) * np.cos(y) + 0.2 * np.cos(2 * y),
                    v=0.1 * np.cos(x), q=curl_flux(g, 0.1))
    # dt = 0.04 is still pre-asymptotic for this data (ratio about 2.8)
    t_end, dts = 0.5, (0.02, 0.01, 0.005)
    lap = NeumannLaplacian(g)

    def final(dt):
        return run(s0, p, StepperConfig(dt, t_end), g)

    ref = final(dts[-1] / 16)
    errs = [state_norm(g, final(dt) - ref, lap) for dt in dts]
    ratios = [errs[0] / errs[1], errs[1] / errs[2]]
    ok = all(1.7 <= q <= 2.3 for q in ratios)
    acceptance(9, ok, f"X-norm errors {errs[0]:.2e}, {errs[1]:.2e}, {errs[2]:.2e}; "
                      f"ratios {ratios[0]:.3f}, {ratios[1]:.3f} (in [1.7, 2.3])")
    assert ok


def test_criterion_10_infrastructure(tmp_path, acceptance, capsys):
    text = cfg_text("mean-ode", "curl = 0.2", nx=32, ny=17, dt=0.01, t_end=1.0, cadence=5, snapshot_every=50)
    (tmp_path / "full.ini").write_text(text)
    (tmp_path / "half.ini").write_text(text.replace("t_end = 1.0", "t_end = 0.5"))
    full, h1, h2 = tmp_path / "full", tmp_path / "h1", tmp_path / "h2"
    assert main(["simulate", "--config", str(tmp_path / "full.ini"), "--output", str(full)]) == 0
    assert main(["simulate", "--config", str(tmp_path / "half.ini"), "--output", str(h1)]) == 0
    assert main(["simulate", "--config", str(tmp_path / "full.ini"), "--output", str(h2),
                 "--restart", str(h1 / "final.chc")]) == 0

    blob = (full / "final.chc").read_bytes()
    snap = decode_snapshot(blob)
    bytes_ok = encode_snapshot(snap.grid, snap.state, digest=snap.digest, ref_means=snap.ref_means) == blob

    a = np.array([r.as_row() for r in read_csv(full / "diagnostics.csv")])
    b = np.array([r.as_row() for r in read_csv(h1 / "diagnostics.csv")]
                 + [r.as_row() for r in read_csv(h2 / "diagnostics.csv")])
    restart_err = float(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(a)))) if a.shape == b.shape else math.inf

    capsys.readouterr()
    clean = main(["verify", "--csv", str(full / "diagnostics.csv")])
    rows = list(csv.reader(open(full / "diagnostics.csv")))
    rows[7][1] = repr(float(rows[7][1]) + 1e-6)
    doctored = tmp_path / "doctored"
    doctored.mkdir()
    with open(doctored / "diagnostics.csv", "w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(rows)
    bad = main(["verify", "--csv", str(doctored / "diagnostics.csv"), "--meta", str(full / "run_meta.json")])
    out = capsys.readouterr().out
    ok = bytes_ok and restart_err <= 1e-12 and clean == 0 and bad == 1 and "FAILED conservation" in out
    acceptance(10, ok, f"snapshot round trip byte-identical: {bytes_ok}; restart max rel diff {restart_err:.1e} "
                       f"(<= 1e-12); verify clean exit {clean}, doctored exit {bad}")
    assert ok
