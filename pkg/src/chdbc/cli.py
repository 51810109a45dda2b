"""Command-line runner: ``simulate``, ``steady``, ``fit-decay`` and ``verify``.

Exit codes: 0 success, 1 a check failed, 2 bad configuration or input,
3 numerical failure.  Failures print one structured line to stderr::

    error: code=3 kind=numerical step=1234 t=1.234 message="..."
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .checks import check_stream
from .config import ConfigError, RunConfig, load_config
from .diagnostics import Diagnostics, DiagnosticsConfig, smallness_check, state_norm
from .integrator import IntegrationError, StepperConfig, SystemState, make_state, run, stability_ceiling
from .model import validate_assumptions
from .operators import NeumannLaplacian
from .scenarios import build_initial_state
from .steady import DecayFitError, SteadyStateError, fit_decay, mu_inf_identity, solve_stationary
from .storage import (CsvWriter, RunMeta, SnapshotError, params_digest, read_csv, read_meta,
                      read_snapshot, write_meta, write_snapshot)

log = logging.getLogger("chdbc")

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3
SNAPSHOT_DIR = "snapshots"
FINAL_SNAPSHOT = "final.chc"
CSV_NAME = "diagnostics.csv"
META_NAME = "run_meta.json"


class CliFailure(Exception):
    def __init__(self, code: int, kind: str, message: str, **fields):
        super().__init__(message)
        self.code = code
        self.kind = kind
        self.fields = fields

    def line(self) -> str:
        extra = "".join(f" {k}={v}" for k, v in self.fields.items())
        msg = str(self).replace('"', "'")
        return f'error: code={self.code} kind={self.kind}{extra} message="{msg}"'


def _load(path: str, output: str | None) -> RunConfig:
    try:
        cfg = load_config(path)
    except ConfigError as exc:
        raise CliFailure(EXIT_CONFIG, "config", str(exc)) from None
    if output:
        cfg = cfg.with_output(output)
    return cfg


def _preflight(cfg: RunConfig) -> None:
    bad = [r for r in validate_assumptions(cfg.params) if not r.ok]
    if bad:
        raise CliFailure(EXIT_CONFIG, "config", "; ".join(str(r) for r in bad))
    ceiling = stability_ceiling(cfg.params)
    if cfg.dt > ceiling:
        raise CliFailure(EXIT_CONFIG, "config", f"dt={cfg.dt} exceeds the stability ceiling {ceiling:.4g}")
    rep = smallness_check(cfg.grid, cfg.kappa1, cfg.kappa2)
    if not rep.ok:
        for line in rep.lines():
            log.warning("multiplier smallness: %s", line)


def _restart_state(cfg: RunConfig, path: str) -> tuple[SystemState, tuple]:
    try:
        snap = read_snapshot(path)
    except SnapshotError as exc:
        raise CliFailure(EXIT_CONFIG, "snapshot", str(exc)) from None
    if snap.grid != cfg.grid:
        raise CliFailure(EXIT_CONFIG, "snapshot", f"snapshot grid {snap.grid} does not match config {cfg.grid}")
    if snap.digest != params_digest(cfg.params):
        raise CliFailure(EXIT_CONFIG, "snapshot", "snapshot parameter digest does not match the config")
    if abs(snap.state.n * cfg.dt - snap.state.t) > 1e-9 * max(1.0, snap.state.t):
        raise CliFailure(EXIT_CONFIG, "snapshot", f"snapshot time {snap.state.t} is not step {snap.state.n} at dt={cfg.dt}")
    return snap.state, snap.ref_means


def simulate(cfg: RunConfig, restart: str | None = None) -> SystemState:
    """Run one configured simulation, writing CSV, snapshots and metadata."""
    _preflight(cfg)
    out = cfg.output
    (out / SNAPSHOT_DIR).mkdir(parents=True, exist_ok=True)
    g, p = cfg.grid, cfg.params
    if restart:
        s0, ref = _restart_state(cfg, restart)
    else:
        s0 = build_initial_state(g, cfg.scenario)
        ref = (g.mean(s0.theta), g.mean(s0.chi), g.mean(s0.v))
    dcfg = DiagnosticsConfig(cfg.kappa1, cfg.kappa2, *ref, cfg.dt, p.epsilon)
    meta = RunMeta(cfg.scenario.name, g.Lx, g.Ly, g.nx, g.ny, cfg.dt, cfg.t_end, cfg.cadence,
                   p.epsilon, p.sigma, p.alpha, cfg.kappa1, cfg.kappa2, *ref, g.area)
    write_meta(out / META_NAME, meta)
    diag = Diagnostics(g, p, dcfg)

    def snap(s: SystemState) -> None:
        if cfg.snapshot_every and s.n % cfg.snapshot_every == 0:
            write_snapshot(out / SNAPSHOT_DIR / f"snap_{s.n:09d}.chc", g, s, p, ref)

    with CsvWriter(out / CSV_NAME) as csv_out:
        observers = [lambda s: csv_out(diag.record(s)), snap]
        try:
            final = run(s0, p, StepperConfig(cfg.dt, cfg.t_end, cfg.cadence, cfg.linear_tol), g,
                        observers, emit_initial=not restart)
        except IntegrationError as exc:
            raise CliFailure(EXIT_NUMERICAL, "numerical", str(exc), step=exc.step, t=exc.t) from None
    write_snapshot(out / FINAL_SNAPSHOT, g, final, p, ref)
    return final


def steady(cfg: RunConfig, seed_snapshot: str | None = None) -> dict:
    """Solve for the equilibrium with the mean of the configured (or seeded) data."""
    g, p = cfg.grid, cfg.params
    if seed_snapshot:
        s0, ref = _restart_state(cfg, seed_snapshot)
    else:
        s0 = build_initial_state(g, cfg.scenario)
        ref = (g.mean(s0.theta), g.mean(s0.chi), g.mean(s0.v))
    m = ref[1] + p.epsilon * ref[2]
    theta_inf = ref[0] - p.epsilon * ref[2]
    try:
        eq = solve_stationary(g, p, s0.chi, m, seed_xi=s0.xi, theta_inf=theta_inf)
    except SteadyStateError as exc:
        raise CliFailure(EXIT_NUMERICAL, "numerical", str(exc), residual=exc.residual) from None
    out = cfg.output
    out.mkdir(parents=True, exist_ok=True)
    state = make_state(g, theta_inf, eq.chi_inf)
    write_snapshot(out / "equilibrium.chc", g, state, p, (theta_inf, m, 0.0))
    report = {
        "residual_norm": eq.residual_norm,
        "iterations": eq.iterations,
        "mu_inf": eq.mu_inf,
        "mu_inf_identity_error": abs(eq.mu_inf - mu_inf_identity(g, p, eq)),
        "theta_inf": theta_inf,
        "constraint_mean": m,
        "mean_chi_inf": g.mean(eq.chi_inf),
    }
    (out / "steady.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return report


def decay_stream(csv_path: str | Path, eq_path: str | Path,
                 snap_dir: str | Path | None = None) -> tuple[np.ndarray, np.ndarray]:
    """``(t, distance to equilibrium)`` from the run's stored snapshots."""
    csv_path = Path(csv_path)
    read_csv(csv_path)  # schema check
    try:
        eq = read_snapshot(eq_path)
    except SnapshotError as exc:
        raise CliFailure(EXIT_CONFIG, "snapshot", str(exc)) from None
    snap_dir = Path(snap_dir) if snap_dir else csv_path.parent / SNAPSHOT_DIR
    files = sorted(snap_dir.glob("snap_*.chc"))
    final = csv_path.parent / FINAL_SNAPSHOT
    if final.exists():
        files.append(final)
    if not files:
        raise CliFailure(EXIT_CONFIG, "input", f"no snapshots found in {snap_dir}")
    lap = NeumannLaplacian(eq.grid)
    seen: dict[int, float] = {}
    times: dict[int, float] = {}
    for f in files:
        try:
            s = read_snapshot(f)
        except SnapshotError as exc:
            raise CliFailure(EXIT_CONFIG, "snapshot", f"{f}: {exc}") from None
        if s.grid != eq.grid or s.digest != eq.digest:
            raise CliFailure(EXIT_CONFIG, "snapshot", f"{f} does not match the equilibrium grid/parameters")
        seen[s.state.n] = state_norm(eq.grid, s.state - eq.state, lap)
        times[s.state.n] = s.state.t
    ns = sorted(seen)
    return np.array([times[n] for n in ns]), np.array([seen[n] for n in ns])


def _cmd_simulate(args) -> int:
    cfg = _load(args.config, args.output)
    final = simulate(cfg, args.restart)
    print(f"simulate: reached t={final.t:.6g} after {final.n} steps; output in {cfg.output}")
    return EXIT_OK


def _cmd_steady(args) -> int:
    cfg = _load(args.config, args.output)
    rep = steady(cfg, args.seed_snapshot)
    for k in sorted(rep):
        print(f"{k}: {rep[k]:.17g}" if isinstance(rep[k], float) else f"{k}: {rep[k]}")
    return EXIT_OK if rep["residual_norm"] <= 1e-10 else EXIT_CHECK


def _cmd_fit_decay(args) -> int:
    t, d = decay_stream(args.csv, args.equilibrium, args.snapshots)
    t_min = args.t_min if args.t_min is not None else t[0] + 0.5 * (t[-1] - t[0])
    out = Path(args.csv).parent / "decay.csv"
    np.savetxt(out, np.column_stack([t, d]), fmt="%.17g", delimiter=",", header="t,distance", comments="")
    print(f"distance: initial {d[0]:.6e} final {d[-1]:.6e} min {d.min():.6e}")
    try:
        fit = fit_decay(t, d, t_min=t_min, floor=args.floor)
    except DecayFitError as exc:
        raise CliFailure(EXIT_CHECK, "fit", str(exc)) from None
    print(fit.report())
    return EXIT_OK


def _cmd_verify(args) -> int:
    csv_path = Path(args.csv)
    meta_path = Path(args.meta) if args.meta else csv_path.parent / META_NAME
    try:
        records = read_csv(csv_path)
        meta = read_meta(meta_path)
    except (OSError, ValueError, TypeError) as exc:
        raise CliFailure(EXIT_CONFIG, "input", str(exc)) from None
    results = check_stream(records, meta, args.h_slack)
    for r in results:
        print(r.line())
    failed = [r.name for r in results if not r.ok]
    if failed:
        print(f"verify: FAILED {', '.join(failed)}")
        return EXIT_CHECK
    print("verify: all checks passed")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="chdbc", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a configured scenario")
    p.add_argument("--config", required=True)
    p.add_argument("--output", help="override [output] directory")
    p.add_argument("--restart", metavar="SNAPSHOT", help="resume from a snapshot")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("steady", help="solve the stationary problem")
    p.add_argument("--config", required=True)
    p.add_argument("--seed-snapshot", help="seed and mean constraint from a snapshot")
    p.add_argument("--output", help="override [output] directory")
    p.set_defaults(func=_cmd_steady)

    p = sub.add_parser("fit-decay", help="fit the decay of the distance to equilibrium")
    p.add_argument("--csv", required=True)
    p.add_argument("--equilibrium", required=True)
    p.add_argument("--snapshots", help="snapshot directory (default: next to the CSV)")
    p.add_argument("--t-min", type=float, help="start of the fit window (default: second half)")
    p.add_argument("--floor", type=float, default=1e-9, help="ignore distances at or below this")
    p.set_defaults(func=_cmd_fit_decay)

    p = sub.add_parser("verify", help="check the diagnostics invariants of a run")
    p.add_argument("--csv", required=True)
    p.add_argument("--meta", help="run metadata (default: run_meta.json next to the CSV)")
    p.add_argument("--h-slack", type=float, help="extra slack for the Lyapunov check")
    p.set_defaults(func=_cmd_verify)
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliFailure as exc:
        print(exc.line(), file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
