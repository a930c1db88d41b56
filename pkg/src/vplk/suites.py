"""Seeded property suites behind ``vplk check``.

Every check returns a plain dict ``{name, passed, measured, tolerance}``;
the reports contain no timings or paths, so a fixed seed gives identical
JSON.
"""
from __future__ import annotations

import math

import numpy as np

from .dynamics import SchemeConfig, Simulator, cfl_dt, initial_data, run
from .functionals import gagliardo_nirenberg_constant, moment_interp_check
from .grid import SpatialGrid, build_velocity_grid
from .landau import (
    LandauOperator,
    coercivity_constant,
    phi_kernel,
    sigma_at,
    smooth_samples,
)

SUITES = ("operators", "conservation", "coercivity", "interpolation")
SIGMA_ORIGIN = 4.0 * math.pi / 3.0


def _check(name, passed, measured, tolerance=None):
    return {"name": name, "passed": bool(passed), "measured": measured, "tolerance": tolerance}


def _ip(op, a, b):
    s = a.shape[0]
    return op.grid.cell_weight * np.sum((a * b).reshape(s, -1), axis=1)


# ---------------------------------------------------------------------------
# operators


def kernel_algebra(seed: int = 0, n: int = 100) -> dict:
    """``Phi(v) v = 0`` and spectrum ``{0, 1/|v|, 1/|v|}`` for random ``v``."""
    rng = np.random.default_rng(seed)
    d = rng.standard_normal((3, n))
    r = rng.uniform(0.1, 5.0, n)
    v = d / np.linalg.norm(d, axis=0) * r
    P = phi_kernel(v)
    null = float(np.max(np.abs(np.einsum("ij...,j...->i...", P, v))))
    ev = np.linalg.eigvalsh(np.moveaxis(P, -1, 0))
    want = np.stack([np.zeros(n), 1 / r, 1 / r], axis=1)
    ev_err = float(np.max(np.abs(ev[:, 1:] - want[:, 1:]) / want[:, 1:]))
    zero_err = float(np.max(np.abs(ev[:, 0]) * r))
    ok = null <= 1e-12 and ev_err <= 1e-10 and zero_err <= 1e-10
    return _check("kernel_algebra", ok, {"max_abs_phi_v": null, "max_rel_eig_err": max(ev_err, zero_err)},
                  {"phi_v": 1e-12, "eig_rel": 1e-10})


def sigma_origin(n: int = 24, V: float = 6.0) -> dict:
    s = sigma_at(np.zeros(3), build_velocity_grid(n, V))
    diag = np.diag(s)
    rel = float(np.max(np.abs(diag - SIGMA_ORIGIN)) / SIGMA_ORIGIN)
    off = float(np.max(np.abs(s - np.diag(diag))))
    return _check("sigma_origin", rel <= 0.02 and off <= 1e-10,
                  {"sigma_diag": [float(x) for x in diag], "rel_err": rel, "max_offdiag": off,
                   "oracle": SIGMA_ORIGIN, "grid": [n, V]}, {"rel": 0.02})


def operator_symmetry(op: LandauOperator, seed: int = 0, n_pairs: int = 20) -> list:
    """Symmetry and nonnegativity of ``L``, ``L1``, ``L2`` on random smooth samples."""
    out = []
    g = smooth_samples(op.grid, n_pairs, seed, components=2)
    h = smooth_samples(op.grid, n_pairs, seed + 1, components=2)
    gs, hs = g[:, 0], h[:, 0]
    cases = {
        "L": (op.apply_L, g, h),
        "L1": (op.apply_L1, gs, hs),
        "L2": (op.apply_L2, gs, hs),
    }
    for name, (A, x, y) in cases.items():
        Ax, Ay = A(x), A(y)
        a, b = _ip(op, Ax, y), _ip(op, x, Ay)
        scale = np.sqrt(np.abs(_ip(op, Ax, x)) * np.abs(_ip(op, Ay, y))) + 1e-300
        sym = float(np.max(np.abs(a - b) / scale))
        out.append(_check(f"symmetry_{name}", sym <= 1e-9, {"max_rel": sym}, 1e-9))
        q = _ip(op, Ax, x) / _ip(op, x, x)
        out.append(_check(f"nonnegative_{name}", float(q.min()) >= -1e-9, {"min_ratio": float(q.min())}, -1e-9))
    return out


def null_residuals(op: LandauOperator) -> dict:
    """``max |A b| / |b|`` over the null bases of ``L``, ``L1``, ``L2``."""
    nb = op.null_basis
    hw = op.grid.cell_weight
    res = {}
    for name, basis, A in (("L", nb.L, op.apply_L), ("L1", nb.L1, op.apply_L1), ("L2", nb.L2, op.apply_L2)):
        Ab = A(basis)
        num = np.sqrt(hw * np.sum(Ab.reshape(len(basis), -1) ** 2, axis=1))
        den = np.sqrt(hw * np.sum(basis.reshape(len(basis), -1) ** 2, axis=1))
        res[name] = float(np.max(num / den))
    return res


def null_space_check(grids=(16, 32), V: float = 6.0, tol: float = 5e-2, exact: float = 1e-10) -> dict:
    """Null-basis residuals with an observed refinement order.

    The discrete null spaces are exact here, so two residuals at round-off
    level count as order satisfied (the ratio of round-off carries no order).
    """
    vals = [null_residuals(LandauOperator(build_velocity_grid(n, V))) for n in grids]
    worst = [max(v.values()) for v in vals]
    if worst[0] <= exact and worst[-1] <= exact:
        order, order_ok = None, True
    else:
        order = math.log(worst[0] / worst[-1]) / math.log(grids[-1] / grids[0])
        order_ok = order >= 1.8
    ok = worst[0] <= tol and order_ok
    return _check("null_space", ok, {"grids": list(grids), "residuals": vals, "observed_order": order,
                                     "roundoff_exact": order is None}, {"residual": tol, "order": 1.8})


def fft_vs_direct(seed: int = 0, n: int = 8, V: float = 4.0) -> dict:
    grid = build_velocity_grid(n, V)
    a = LandauOperator(grid, conv_mode="fft")
    b = LandauOperator(grid, conv_mode="direct")
    g = smooth_samples(grid, 4, seed)
    h = smooth_samples(grid, 4, seed + 1)
    diff = float(np.max(np.abs(a.apply_Gamma_star(g, h) - b.apply_Gamma_star(g, h))))
    diff_L = float(np.max(np.abs(a.apply_L1(g) - b.apply_L1(g))))
    d = max(diff, diff_L)
    return _check("fft_vs_direct", d <= 1e-10, {"max_abs_gamma": diff, "max_abs_L1": diff_L}, 1e-10)


def operators_suite(seed: int = 0, n: int = 16, V: float = 6.0) -> list:
    op = LandauOperator(build_velocity_grid(n, V))
    out = [kernel_algebra(seed), sigma_origin()]
    out += operator_symmetry(op, seed)
    out.append(null_space_check((n, 2 * n) if n <= 16 else (n, n + 8), V))
    out.append(fft_vs_direct(seed))
    return out


# ---------------------------------------------------------------------------
# conservation


def gamma_invariants(op: LandauOperator, seed: int = 0, n_pairs: int = 20) -> list:
    """Moments of ``Gamma*`` against ``sqrt(mu)``, ``v sqrt(mu)``, ``|v|^2 sqrt(mu)``.

    Mass is annihilated for every pair; momentum and energy only for the
    symmetric action ``Gamma*(g, g)``, which is what the two-species sum
    ``Gamma_+(f, f) + Gamma_-(f, f) = Gamma*(f1, f1)`` sees.
    """
    grid = op.grid
    g = smooth_samples(grid, n_pairs, seed)
    h = smooth_samples(grid, n_pairs, seed + 1)
    sm = grid.sqrt_mu
    tests = [sm] + [grid.v[i] * sm for i in range(3)] + [grid.v2 * sm]
    names = ["mass", "momentum_1", "momentum_2", "momentum_3", "energy"]
    hw = grid.cell_weight

    def moments(G, a, b):
        na = np.sqrt(hw * np.sum(a.reshape(n_pairs, -1) ** 2, axis=1))
        nb = np.sqrt(hw * np.sum(b.reshape(n_pairs, -1) ** 2, axis=1))
        out = {}
        for nm, t in zip(names, tests):
            tn = math.sqrt(hw * np.sum(t * t))
            out[nm] = float(np.max(np.abs(hw * np.sum((G * t).reshape(n_pairs, -1), axis=1)) / (na * nb * tn)))
        return out

    raw = moments(op.apply_Gamma_star(g, h), g, h)
    sym = moments(op.apply_Gamma_star(g, g), g, g)
    res = [_check("gamma_mass_pairs", raw["mass"] <= 1e-6, {"max_rel": raw["mass"]}, 1e-6)]
    worst = max(sym.values())
    res.append(_check("gamma_invariants_symmetric", worst <= 1e-6, sym, 1e-6))
    # two-species pairs f = (f+, f-): species masses and total momentum/energy of Gamma(f, f)
    f = np.stack([g, h], axis=1)
    G = op.apply_Gamma(f, f)
    nf = np.sqrt(hw * np.sum(f.reshape(n_pairs, -1) ** 2, axis=1))
    two = {}
    for nm, t in zip(names, tests):
        tn = math.sqrt(hw * np.sum(t * t))
        comps = [G[:, 0], G[:, 1]] if nm == "mass" else [G[:, 0] + G[:, 1]]
        two[nm] = max(float(np.max(np.abs(hw * np.sum((c * t).reshape(n_pairs, -1), axis=1)) / (nf ** 2 * tn)))
                      for c in comps)
    res.append(_check("gamma_invariants_two_species", max(two.values()) <= 1e-6, two, 1e-6))
    res.append(_check("gamma_momentum_energy_pairs_report", True,
                      {k: raw[k] for k in names[1:]}, None))
    return res


def zero_fixed_point(n_steps: int = 100, nv: int = 8, nx: int = 8) -> dict:
    vg = build_velocity_grid(nv, 4.0)
    xg = SpatialGrid(1, nx, 4.0 * math.pi)
    dt = cfl_dt(vg, xg)
    sim = Simulator(vg, xg, SchemeConfig(dt=dt, t_end=n_steps * dt))
    st = sim.make_state(0.0, initial_data("a", 0.0, vg, xg).values)
    st, _ = sim.step(st, n_steps)
    m = float(np.max(np.abs(st.fields.values)))
    return _check("zero_fixed_point", m <= 1e-12, {"max_abs": m, "steps": n_steps}, 1e-12)


def short_run_conservation(n_steps: int = 40, nv: int = 8, nx: int = 16) -> list:
    """Mass, energy and the ``f2 = 0`` manifold on a small grid."""
    vg = build_velocity_grid(nv, 4.0)
    xg = SpatialGrid(1, nx, 4.0 * math.pi)
    dt = cfl_dt(vg, xg)
    sim = Simulator(vg, xg, SchemeConfig(dt=dt, t_end=n_steps * dt))
    ch = conserved_channels(vg, xg)
    res = run(sim, sim.make_state(0.0, initial_data("a", 1e-3, vg, xg).values), n_steps,
              observer=lambda s, r: ch(s))
    out = []
    for key in ("mass_plus", "mass_minus", "energy"):
        v = np.asarray(res.series[key])
        scale = res.series[key + "_scale"][0]
        drift = float(np.max(np.abs(v - v[0])) / scale)
        tol = 1e-5 if key == "energy" else 1e-8
        out.append(_check(f"drift_{key}", drift <= tol, {"rel_drift": drift}, tol))
    res_c = run(sim, sim.make_state(0.0, initial_data("c", 1e-3, vg, xg).values), n_steps,
                observer=lambda s, r: {"f2": float(np.max(np.abs(s.fields.values[1])))})
    leak = float(res_c.series["f2"][-1])
    out.append(_check("f2_manifold", leak <= 1e-10, {"max_abs_f2": leak}, 1e-10))
    return out


def conserved_channels(vg, xg):
    """Observer returning species masses, total energy and their drift scales."""
    from .field import grad_x

    w = vg.cell_weight * xg.cell_volume
    sm = vg.sqrt_mu
    n_sm = math.sqrt(w * np.sum(np.broadcast_to(sm, xg.shape + vg.shape) ** 2))
    n_e = math.sqrt(w * np.sum(np.broadcast_to(vg.v2 * sm, xg.shape + vg.shape) ** 2))
    scales = {}

    def obs(state):
        pf = state.fields
        sd, pm = pf.as_sd().values, pf.as_pm().values
        gp = grad_x(state.field_state.phi, xg)
        gphi2 = float(xg.cell_volume * np.sum(gp ** 2))
        if not scales:
            scales["mass_plus"] = max(n_sm * math.sqrt(w * np.sum(pm[0] ** 2)), 1e-300)
            scales["mass_minus"] = max(n_sm * math.sqrt(w * np.sum(pm[1] ** 2)), 1e-300)
            scales["energy"] = max(n_e * math.sqrt(w * np.sum(sd[0] ** 2)) + gphi2, 1e-300)
        out = {
            "mass_plus": float(w * np.sum(sm * pm[0])),
            "mass_minus": float(w * np.sum(sm * pm[1])),
            "energy": float(w * np.sum(vg.v2 * sm * sd[0])) + gphi2,
        }
        out.update({k + "_scale": v for k, v in scales.items()})
        return out

    return obs


def conservation_suite(seed: int = 0) -> list:
    op = LandauOperator(build_velocity_grid(16, 6.0))
    out = gamma_invariants(op, seed)
    out.append(zero_fixed_point())
    out += short_run_conservation()
    return out


# ---------------------------------------------------------------------------
# coercivity


def coercivity_check(grids=(16, 24), V: float = 6.0, seed: int = 0, n_samples: int = 50,
                     stability: float = 0.2) -> list:
    ops = [LandauOperator(build_velocity_grid(n, V)) for n in grids]
    out = []
    for which in ("L", "L1", "L2"):
        c = [coercivity_constant(op, n_samples, seed, which) for op in ops]
        rel = abs(c[1] - c[0]) / max(c[0], c[1])
        ok = min(c) > 0 and rel <= stability
        out.append(_check(f"coercivity_{which}", ok, {"grids": list(grids), "V": V, "constants": c,
                                                       "rel_change": rel}, {"positive": 0.0, "rel": stability}))
    return out


def coercivity_suite(seed: int = 0) -> list:
    return coercivity_check(seed=seed)


# ---------------------------------------------------------------------------
# interpolation


def hoelder_check(seed: int = 0, n_samples: int = 100, n: int = 16, V: float = 6.0,
                  levels=((2.0, 1.0), (1.5, 1.0), (3.0, 0.0))) -> list:
    grid = build_velocity_grid(n, V)
    op = LandauOperator(grid)
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n_samples,) + grid.shape) * grid.mu ** rng.uniform(0.05, 0.5, (n_samples, 1, 1, 1))
    # small-|v| support: the unit ball, or at least the innermost nodes
    radius2 = max(1.0, 3.0 * (0.5 * grid.spacing) ** 2 * (1 + 1e-12))
    compact = np.where(grid.v2 <= radius2, rng.standard_normal((4,) + grid.shape), 0.0)
    out = []
    for l, ell in levels:
        r = moment_interp_check(X, l, ell, grid, op)
        rc = moment_interp_check(compact, l, ell, grid, op)
        out.append(_check(f"hoelder_l{l:g}_ell{ell:g}", r["max_ratio"] <= 1 + 1e-10,
                          {"theta": r["theta"], "max_ratio": r["max_ratio"],
                           "max_ratio_sigma": r["max_ratio_sigma"], "compact_support_ratio": rc["max_ratio"]},
                          1 + 1e-10))
    return out


GN_CASES = ((0, 0, 1, 4.0), (0, 0, 1, math.inf), (1, 0, 2, 4.0), (1, 0, 2, math.inf))


def gn_check(dim: int = 1, grids=(32, 64), seed: int = 0, n_samples: int = 100, stability: float = 0.05) -> list:
    out = []
    for k, ell, m, p in GN_CASES:
        c = [gagliardo_nirenberg_constant(SpatialGrid(dim, n, 2 * math.pi), k, ell, m, p, n_samples, seed)
             for n in grids]
        rel = abs(c[1] - c[0]) / max(c)
        ok = all(math.isfinite(x) and x > 0 for x in c) and rel <= stability
        out.append(_check(f"gn_k{k}_l{ell}_m{m}_p{p:g}", ok, {"grids": list(grids), "constants": c,
                                                              "rel_change": rel}, {"rel": stability}))
    return out


def interpolation_suite(seed: int = 0) -> list:
    return hoelder_check(seed) + gn_check(seed=seed)


def run_suite(name: str, seed: int = 0) -> dict:
    """Run one suite (or ``all``) and return the report dict."""
    names = SUITES if name == "all" else (name,)
    for nm in names:
        if nm not in SUITES:
            raise ValueError(f"unknown suite {nm!r}; choose from {SUITES + ('all',)}")
    table = {"operators": operators_suite, "conservation": conservation_suite,
             "coercivity": coercivity_suite, "interpolation": interpolation_suite}
    suites = {nm: table[nm](seed) for nm in names}
    passed = all(c["passed"] for cs in suites.values() for c in cs)
    return {"seed": seed, "suite": name, "passed": passed, "suites": suites}
