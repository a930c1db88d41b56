import math

import numpy as np
import pytest

from vplk.dynamics import (
    PositivityError,
    SchemeConfig,
    Simulator,
    StepFailure,
    cfl_dt,
    initial_data,
    max_admissible_epsilon,
    rhs,
    run,
    step_imex,
)
from vplk.field import NeutralityError
from vplk.grid import SpatialGrid, build_velocity_grid
from vplk.suites import conserved_channels


@pytest.fixture(scope="module")
def small():
    vg = build_velocity_grid(8, 4.0)
    xg = SpatialGrid(1, 16, 4 * math.pi)
    return vg, xg


def make(small, formulation="sd", n=10, **kw):
    vg, xg = small
    dt = kw.pop("dt", cfl_dt(vg, xg))
    return Simulator(vg, xg, SchemeConfig(dt=dt, t_end=n * dt, formulation=formulation, **kw))


def test_scheme_config_validation():
    with pytest.raises(ValueError):
        SchemeConfig(dt=0, t_end=1)
    with pytest.raises(ValueError):
        SchemeConfig(dt=0.1, t_end=1, formulation="xy")
    with pytest.raises(ValueError):
        SchemeConfig(dt=0.1, t_end=1, implicit_tol=0.1)
    assert SchemeConfig(dt=0.1, t_end=1.0).n_steps == 10


def test_initial_data(small):
    vg, xg = small
    assert np.all(initial_data("a", 0.0, vg, xg).values == 0)
    c = initial_data("c", 1e-3, vg, xg)
    assert np.all(c.values[1] == 0)
    eps_max = max_admissible_epsilon("a", vg, xg)
    assert 0 < eps_max < np.inf
    with pytest.raises(PositivityError) as exc:
        initial_data("a", 2 * eps_max, vg, xg)
    assert math.isclose(exc.value.max_epsilon, eps_max)
    with pytest.raises(ValueError):
        initial_data("z", 1e-3, vg, xg)
    pm = initial_data("a", 1e-3, vg, xg, "pm")
    assert pm.tag == "pm"
    assert np.all(vg.mu + vg.sqrt_mu * pm.values > 0)


def test_initial_data_positivity_default_grid():
    vg = build_velocity_grid(16, 6.0)
    xg = SpatialGrid(1, 32, 4 * math.pi)
    pm = initial_data("a", 1e-3, vg, xg, "pm")
    assert np.min(vg.mu + vg.sqrt_mu * pm.values) > 0


def test_rhs_zero_and_invariant_subspace(small):
    sim = make(small)
    z = sim.make_state(0.0, np.zeros((2,) + sim.xgrid.shape + sim.vgrid.shape))
    assert np.all(rhs(z, sim).values == 0)
    c = initial_data("c", 1e-3, *small)
    r = rhs(sim.make_state(0.0, c.values), sim).values
    assert np.max(np.abs(r[1])) == 0


def test_rhs_pm_sd_equivalence(small):
    a = initial_data("a", 1e-3, *small)
    sd = make(small, "sd")
    pm = make(small, "pm")
    r_sd = rhs(sd.make_state(0.0, a.values), sd)
    r_pm = rhs(pm.make_state(0.0, a.as_pm().values), pm)
    scale = np.max(np.abs(r_sd.values))
    assert np.max(np.abs(r_pm.as_sd().values - r_sd.values)) <= 1e-10 * scale


def test_rhs_tag_mismatch(small):
    sd, pm = make(small, "sd"), make(small, "pm")
    st = pm.make_state(0.0, initial_data("a", 1e-3, *small, "pm").values)
    with pytest.raises(ValueError):
        rhs(st, sd)
    with pytest.raises(ValueError):
        step_imex(st, sd)


def test_zero_state_stays_zero(small):
    sim = make(small, n=20)
    st = sim.make_state(0.0, np.zeros((2,) + sim.xgrid.shape + sim.vgrid.shape))
    new, rep = step_imex(st, sim)
    assert np.all(new.fields.values == 0)
    assert rep.implicit_iterations == 0
    res = run(sim, st, observer=lambda s, r: {"n": float(np.max(np.abs(s.fields.values)))})
    assert max(res.series["n"]) <= 1e-12


def test_pm_and_sd_trajectories_agree(small):
    a = initial_data("a", 1e-3, *small)
    sd, pm = make(small, "sd"), make(small, "pm")
    s1, _ = sd.step(sd.make_state(0.0, a.values), 10)
    s2, _ = pm.step(pm.make_state(0.0, a.as_pm().values), 10)
    assert np.max(np.abs(s2.fields.as_sd().values - s1.fields.values)) <= 1e-10 * np.max(np.abs(a.values))


def test_cg_matches_dense(small):
    a = initial_data("a", 1e-3, *small)
    d = make(small, implicit_solver="dense")
    c = make(small, implicit_solver="cg", implicit_tol=1e-13)
    s1, _ = d.step(d.make_state(0.0, a.values), 3)
    s2, rep = c.step(c.make_state(0.0, a.values), 3)
    assert rep.implicit_iterations > 0
    assert np.max(np.abs(s1.fields.values - s2.fields.values)) <= 1e-9 * np.max(np.abs(a.values))


def test_cg_failure_reported(small):
    a = initial_data("a", 1e-3, *small)
    c = make(small, implicit_solver="cg", implicit_tol=1e-13, max_cg_iter=1)
    with pytest.raises(StepFailure):
        c.step(c.make_state(0.0, a.values), 1)


def test_pure_collision_norm_nonincreasing(small):
    sim = make(small, transport=False, field=False, nonlinear=False)
    a = initial_data("a", 1e-3, *small)
    st = sim.make_state(0.0, a.values)
    prev = np.linalg.norm(st.fields.values)
    for _ in range(10):
        st, _ = sim.step(st, 1)
        cur = np.linalg.norm(st.fields.values)
        assert cur <= prev * (1 + 1e-14)
        prev = cur


def test_f2_manifold(small):
    sim = make(small, n=50)
    c = initial_data("c", 1e-3, *small)
    res = run(sim, sim.make_state(0.0, c.values),
              observer=lambda s, r: {"f2": float(np.max(np.abs(s.fields.values[1])))})
    assert max(res.series["f2"]) <= 1e-10


def test_conservation_short(small):
    vg, xg = small
    sim = make(small, n=40)
    ch = conserved_channels(vg, xg)
    res = run(sim, sim.make_state(0.0, initial_data("a", 1e-3, vg, xg).values),
              observer=lambda s, r: ch(s))
    for key, tol in (("mass_plus", 1e-12), ("mass_minus", 1e-12), ("energy", 1e-5)):
        v = np.asarray(res.series[key])
        assert np.max(np.abs(v - v[0])) / res.series[key + "_scale"][0] <= tol


def test_self_convergence_order():
    """Global error against a dt/4 reference decreases at order >= 1.8."""
    vg = build_velocity_grid(8, 4.0)
    xg = SpatialGrid(1, 16, 4 * math.pi)
    a = initial_data("a", 1e-3, vg, xg)
    T = 0.8
    out = {}
    for n in (16, 32, 128):
        sim = Simulator(vg, xg, SchemeConfig(dt=T / n, t_end=T))
        st, _ = sim.step(sim.make_state(0.0, a.values), n)
        out[n] = st.fields.values
    e1 = np.linalg.norm(out[16] - out[128])
    e2 = np.linalg.norm(out[32] - out[128])
    # dt = 0.05 and 0.025; coarser steps are still pre-asymptotic
    assert math.log2(e1 / e2) >= 1.8


def test_continuity_second_order():
    vg = build_velocity_grid(8, 4.0)
    xg = SpatialGrid(1, 16, 4 * math.pi)
    a = initial_data("a", 1e-3, vg, xg)
    res = []
    for dt in (0.1, 0.05):
        sim = Simulator(vg, xg, SchemeConfig(dt=dt, t_end=dt))
        _, rep = sim.step(sim.make_state(0.0, a.values), 1)
        res.append(rep.continuity_residual)
    assert 3.0 <= res[0] / res[1] <= 5.0


def test_neutrality_enforced(small):
    vg, xg = small
    sim = make(small)
    bad = np.zeros((2,) + xg.shape + vg.shape)
    bad[1] = vg.sqrt_mu
    with pytest.raises(NeutralityError):
        sim.make_state(0.0, bad)
