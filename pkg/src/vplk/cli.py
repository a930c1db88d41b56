"""Command-line front end: ``vplk run | check | fit | norms``.

Exit codes: 0 success, 1 property failure or step failure, 2 usage or
configuration error.  ``VPLK_THREADS`` caps the FFT worker count.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import asdict

import numpy as np

from . import functionals as fn
from .config import ConfigError, RunConfig, load_config, serialize_config
from .dynamics import (
    PositivityError,
    SchemeConfig,
    Simulator,
    cfl_dt,
    initial_data,
    run,
)
from .field import field_norms, field_state, grad_x
from .grid import SpatialGrid, build_velocity_grid, neg_sobolev_norm
from .io import SnapshotError, read_csv, read_snapshot, write_csv, write_snapshot
from .landau import KernelSpec, LandauOperator
from .suites import SUITES, run_suite

log = logging.getLogger("vplk")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# building blocks shared with the test-suite


def build(cfg: RunConfig):
    """Grids, simulator and initial state for a validated config."""
    vg = build_velocity_grid(cfg.nv, cfg.vcut)
    xg = SpatialGrid(cfg.dimx, cfg.nx, cfg.lx)
    dt = cfl_dt(vg, xg, cfg.cfl) if cfg.dt == "cfl" else float(cfg.dt)
    scheme = SchemeConfig(dt=dt, t_end=cfg.steps * dt, implicit_tol=cfg.implicit_tol,
                          formulation=cfg.formulation, epsilon=cfg.epsilon,
                          implicit_solver=cfg.implicit_solver)
    op = LandauOperator(vg, KernelSpec(cfg.kernel_p), cfg.conv_mode)
    sim = Simulator(vg, xg, scheme, op)
    u0 = initial_data(cfg.family, cfg.epsilon, vg, xg, cfg.formulation)
    return sim, sim.make_state(0.0, u0.values)


class RunMonitor:
    """Per-sample channels of the run CSV.

    Drifts are relative to fixed scales taken from the initial state:
    ``||sqrt(mu)|| ||f_pm(0)||`` for the species masses and
    ``|| |v|^2 sqrt(mu) || ||f1(0)|| + ||grad phi(0)||^2`` for the energy.
    """

    def __init__(self, sim: Simulator, cfg: RunConfig):
        self.sim, self.cfg = sim, cfg
        self.ctx = fn.Context(sim.vgrid, sim.xgrid, sim.op)
        self._ref = None

    def conserved(self, pm, f1, phi):
        vg, xg = self.sim.vgrid, self.sim.xgrid
        w = self.ctx.w
        sm = vg.sqrt_mu
        gphi2 = float(xg.cell_volume * np.sum(grad_x(phi, xg) ** 2))
        vals = (float(w * np.sum(sm * pm[0])), float(w * np.sum(sm * pm[1])),
                float(w * np.sum(vg.v2 * sm * f1)) + gphi2)
        if self._ref is None:
            full = xg.shape + vg.shape
            n_sm = math.sqrt(w * np.sum(np.broadcast_to(sm, full) ** 2))
            n_e = math.sqrt(w * np.sum(np.broadcast_to(vg.v2 * sm, full) ** 2))
            scales = (n_sm * math.sqrt(w * np.sum(pm[0] ** 2)), n_sm * math.sqrt(w * np.sum(pm[1] ** 2)),
                      n_e * math.sqrt(w * np.sum(f1 ** 2)) + gphi2)
            self._ref = (vals, tuple(s if s > 0 else 1.0 for s in scales))
        v0, sc = self._ref
        return [(a - b) / s for a, b, s in zip(vals, v0, sc)]

    def __call__(self, state, report) -> dict:
        c = self.cfg
        ctx = self.ctx
        pf = state.fields
        f1, f2 = pf.as_sd().values
        pm = pf.as_pm().values
        phi = state.field_state.phi
        fnorm = field_norms(phi, f2, self.sim.vgrid, self.sim.xgrid, J=state.field_state.J)
        dm_p, dm_m, de = self.conserved(pm, f1, phi)
        _, micro1 = self.sim.op.project(f1, "P1")
        parts = fn.dissipation_parts(c.m, c.l, c.q, pm, phi, ctx)
        e0l, led = fn.e0l_f2(c.ell, f2, phi, ctx), fn.ledger_dissipation(c.ell, f2, phi, ctx)
        if c.m == c.ell:
            e0m, led_m = e0l, led
        else:
            e0m, led_m = fn.e0l_f2(c.m, f2, phi, ctx), fn.ledger_dissipation(c.m, f2, phi, ctx)
        row = {
            "E": fn.energy_E(c.m, c.l, c.q, pm, phi, ctx),
            "D_full": fn.combine_dissipation(parts, "full"),
            "D_tilde": fn.combine_dissipation(parts, "tilde"),
            "D_overline": fn.combine_dissipation(parts, "overline"),
            "e0l_f2": e0l,
            "ledger_D": led,
            "e0m_f2": e0m,
            "ledger_D_m": led_m,
            "elm_f1": fn.elm_f1(c.ell, c.m, f1, ctx),
            "l2_grad_phi": fnorm["l2_grad_phi"],
            "linf_grad_phi": fnorm["linf_grad_phi"],
            "linf_dt_phi": fnorm["linf_dt_phi"],
            "bound_ratio": fnorm["bound_ratio"],
            "continuity_residual": 0.0 if report is None else report.continuity_residual,
            "mass_plus_drift": dm_p,
            "mass_minus_drift": dm_m,
            "energy_drift": de,
            "norm_f1": math.sqrt(ctx.l2sq(f1)),
            "norm_f2_phi": math.sqrt(ctx.l2sq(f2)) + fnorm["l2_grad_phi"],
            "norm_micro_f1": math.sqrt(ctx.l2sq(micro1)),
            "norm_f2": math.sqrt(ctx.l2sq(f2)),
            "neg_sobolev_f1": self._neg_sobolev(f1),
            "min_F": float(np.min(self.sim.vgrid.mu + self.sim.vgrid.sqrt_mu * pm)),
        }
        return row

    def _neg_sobolev(self, f1):
        # ||Lambda^{-s} f1||_{L2(x, v)}: trailing velocity axes summed, times the cell weight
        return neg_sobolev_norm(f1, self.sim.xgrid, self.cfg.s) * math.sqrt(self.sim.vgrid.cell_weight)


CSV_ORDER = ("t", "E", "D_full", "D_tilde", "D_overline", "e0l_f2", "ledger_D", "ledger", "e0m_f2",
             "ledger_D_m", "ledger_m", "elm_f1", "l2_grad_phi", "linf_grad_phi", "linf_dt_phi",
             "bound_ratio", "continuity_residual", "mass_plus_drift", "mass_minus_drift", "energy_drift",
             "norm_f1", "norm_f2_phi", "norm_micro_f1", "norm_f2", "neg_sobolev_f1", "min_F")


def ledger_column(times, energies, dissipations) -> np.ndarray:
    """Ledger values aligned with samples; row ``i`` covers ``[t_{i-1}, t_i]`` and row 0 is 0."""
    recs = fn.monotone_ledger(times, energies, dissipations)
    return np.concatenate([[0.0], [r.value for r in recs]])


def execute(cfg: RunConfig, out_dir: str | None = None):
    """Run a validated config; returns ``(columns, summary)`` and writes outputs if ``out_dir``."""
    sim, state = build(cfg)
    mon = RunMonitor(sim, cfg)
    snaps = []

    def observer(st, rep):
        row = mon(st, rep)
        if out_dir and cfg.snapshot_every and len(mon_times) % cfg.snapshot_every == 0:
            path = os.path.join(out_dir, f"snap_{len(mon_times):06d}.vplk")
            write_snapshot(path, st.fields.values, sim.vgrid, sim.xgrid, st.fields.tag, st.t)
            snaps.append(os.path.basename(path))
        mon_times.append(st.t)
        return row

    mon_times = []
    res = run(sim, state, cfg.sample_every, observer)
    t = np.asarray(res.times)
    cols = {"t": t}
    cols.update({k: np.asarray(v) for k, v in res.series.items()})
    cols["ledger"] = ledger_column(t, cols["e0l_f2"], cols["ledger_D"])
    cols["ledger_m"] = ledger_column(t, cols["e0m_f2"], cols["ledger_D_m"])
    cols = {k: cols[k] for k in CSV_ORDER}
    recs = fn.monotone_ledger(t, cols["e0l_f2"], cols["ledger_D"], cfg.violation_tol)
    recs_m = fn.monotone_ledger(t, cols["e0m_f2"], cols["ledger_D_m"], cfg.violation_tol)
    summary = {
        "steps": sim.cfg.n_steps,
        "dt": sim.cfg.dt,
        "samples": int(t.size),
        "error": res.error,
        "ledger_flags": int(sum(r.flagged for r in recs)),
        "ledger_m_flags": int(sum(r.flagged for r in recs_m)),
        "max_mass_drift": float(max(np.max(np.abs(cols["mass_plus_drift"])),
                                    np.max(np.abs(cols["mass_minus_drift"])))),
        "max_energy_drift": float(np.max(np.abs(cols["energy_drift"]))),
        "snapshots": snaps,
    }
    if out_dir:
        write_csv(os.path.join(out_dir, cfg.csv), cols)
        _write_json(os.path.join(out_dir, "summary.json"), summary)
        with open(os.path.join(out_dir, "config.txt"), "w") as fh:
            fh.write(serialize_config(cfg))
    return cols, summary


def _write_json(path, obj):
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")
    os.replace(tmp, path)


# ---------------------------------------------------------------------------
# subcommands


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig().validate()
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def cmd_run(args) -> int:
    cfg = _config(args)
    out = args.out or "."
    # validate everything that can fail before touching the output directory
    try:
        vg = build_velocity_grid(cfg.nv, cfg.vcut)
        initial_data(cfg.family, cfg.epsilon, vg, SpatialGrid(cfg.dimx, cfg.nx, cfg.lx), check_positivity=True)
    except PositivityError as exc:
        raise ConfigError([str(exc)]) from None
    os.makedirs(out, exist_ok=True)
    _, summary = execute(cfg, out)
    print(json.dumps(summary, sort_keys=True))
    return EXIT_FAIL if summary["error"] else EXIT_OK


def cmd_check(args) -> int:
    suite = args.suite or "all"
    if suite not in SUITES + ("all",):
        raise UsageError(f"unknown suite {suite!r}; choose from {', '.join(SUITES + ('all',))}")
    report = run_suite(suite, 0 if args.seed is None else args.seed)
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    _write_json(os.path.join(out, "report.json"), report)
    for name, checks in report["suites"].items():
        for c in checks:
            print(f"{'PASS' if c['passed'] else 'FAIL'} {name}/{c['name']}")
    return EXIT_OK if report["passed"] else EXIT_FAIL


def cmd_fit(args) -> int:
    try:
        data = read_csv(args.csv)
    except OSError as exc:
        raise UsageError(f"cannot read {args.csv}: {exc.strerror}") from None
    if args.channel not in data:
        raise UsageError(f"channel {args.channel!r} not in {args.csv}; available: {', '.join(data)}")
    if "t" not in data:
        raise UsageError(f"{args.csv} has no 't' column")
    try:
        fit = fn.fit_decay(data["t"], data[args.channel], args.model, t0=args.t0)
    except fn.FitError as exc:
        print(f"fit failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    res = {"channel": args.channel, **asdict(fit), "window": list(fit.window)}
    _write_json(os.path.join(out, "fit.json"), res)
    print(json.dumps(res, sort_keys=True))
    return EXIT_OK


def cmd_norms(args) -> int:
    cfg = _config(args)
    if not args.snapshots:
        raise UsageError("norms needs at least one snapshot path")
    rows = []
    ctx_cache = {}
    for path in args.snapshots:
        try:
            snap = read_snapshot(path)
        except (OSError, SnapshotError) as exc:
            raise UsageError(f"cannot read snapshot {path}: {exc}") from None
        if snap.tag == "raw" or snap.dimx == 0:
            raise UsageError(f"{path} is not a phase-field snapshot")
        key = (snap.nv, snap.vcut, snap.dimx, snap.nx, snap.lx)
        if key not in ctx_cache:
            vg, xg = snap.grids()
            ctx_cache[key] = fn.Context(vg, xg, LandauOperator(vg, KernelSpec(cfg.kernel_p), cfg.conv_mode))
        ctx = ctx_cache[key]
        pf = snap.phase_field()
        f1, f2 = pf.as_sd().values
        pm = pf.as_pm().values
        phi = field_state(f2, ctx.vgrid, ctx.xgrid).phi
        rows.append({
            "path": os.path.basename(path), "t": snap.t,
            "E": fn.energy_E(cfg.m, cfg.l, cfg.q, pm, phi, ctx),
            "D_full": fn.dissipation_D(cfg.m, cfg.l, cfg.q, pm, phi, ctx, "full"),
            "e0l_f2": fn.e0l_f2(cfg.ell, f2, phi, ctx),
            "elm_f1": fn.elm_f1(cfg.ell, cfg.m, f1, ctx),
            "macro_micro": fn.macro_micro_norms(pm, ctx, cfg.m),
        })
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    _write_json(os.path.join(out, "norms.json"), rows)
    print(json.dumps([{k: r[k] for k in ("path", "t", "E", "e0l_f2")} for r in rows], sort_keys=True))
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vplk", description="Two-species Vlasov-Poisson-Landau simulator.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="key=value config file")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", help="output directory (default: current)")

    sp = sub.add_parser("run", help="integrate a scenario and write run.csv")
    common(sp)
    sp.set_defaults(func=cmd_run)
    sp = sub.add_parser("check", help="run the seeded property suites")
    common(sp)
    sp.add_argument("--suite", default="all", help=f"one of {', '.join(SUITES + ('all',))}")
    sp.add_argument("suite_pos", nargs="?", help=argparse.SUPPRESS)
    sp.set_defaults(func=cmd_check)
    sp = sub.add_parser("fit", help="fit a decay law to a run.csv channel")
    common(sp)
    sp.add_argument("csv")
    sp.add_argument("--channel", required=True)
    sp.add_argument("--model", choices=("power", "stretched_exp"), default="power")
    sp.add_argument("--t0", type=float, help="start of the fit window (default 10%% of the run)")
    sp.set_defaults(func=cmd_fit)
    sp = sub.add_parser("norms", help="evaluate functionals on stored .vplk snapshots")
    common(sp)
    sp.add_argument("snapshots", nargs="*")
    sp.set_defaults(func=cmd_norms)
    return p


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "suite_pos", None):
        args.suite = args.suite_pos
    try:
        return args.func(args)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
