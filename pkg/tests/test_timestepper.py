import math

import numpy as np
import pytest

from hmmrd.errors import FixedPointDivergence, NonFiniteState
from hmmrd.experiments import heat_exact
from hmmrd.gdm import CellVector, HybridVector, cell_averages
from hmmrd.mesh import build_box_triangular, build_uniform_triangular
from hmmrd.reaction import BarkleyParams, barkley, constant_reaction, linear_reaction, zero_reaction
from hmmrd.timestepper import (DiffusionOperator, SimulationState, StepperConfig, TimeGrid,
                               energy_estimate_check, gradient_estimate_check, run,
                               step_implicit, step_semi_implicit)

SEMI = StepperConfig("semi-implicit")
IMPL = StepperConfig("implicit-fixedpoint")


def bump(x1, x2):
    return np.exp(-20 * ((x1 - 0.3) ** 2 + (x2 - 0.4) ** 2))


def fields(mesh):
    return bump, lambda x1, x2: 0.5 * x1 + 0 * x2


def test_time_grid():
    g = TimeGrid.uniform(1.0, 0.3)
    assert g.n_steps == 4 and g.T == 1.0
    np.testing.assert_allclose(g.steps, 0.25)
    assert TimeGrid.uniform(1.0, 0.25).n_steps == 4
    assert g.index_of(0.5) == 2
    with pytest.raises(ValueError):
        TimeGrid([0.0, 0.5, 0.5])
    with pytest.raises(ValueError):
        TimeGrid([0.1, 0.5])
    with pytest.raises(ValueError):
        TimeGrid.uniform(1.0, -0.1)


def test_stepper_config_validation():
    with pytest.raises(ValueError):
        StepperConfig("explicit")
    with pytest.raises(ValueError):
        StepperConfig(fp_max_iter=0)


@pytest.mark.parametrize("cfg", [SEMI, IMPL])
def test_zero_kinetics_decays_and_v_frozen(unit_mesh, cfg):
    u0, v0 = fields(unit_mesh)
    res = run(unit_mesh, zero_reaction(), u0, v0, TimeGrid.uniform(0.1, 0.01), cfg)
    rep = energy_estimate_check(res.trajectory)
    assert rep.passed and rep.monotone
    l2 = np.asarray(res.trajectory.l2_u)
    assert l2[-1] < l2[0]
    np.testing.assert_array_equal(res.state.v.cell, cell_averages(unit_mesh, v0))


def test_rest_state_is_fixed(unit_mesh):
    r = barkley(BarkleyParams(rho=0.02, a=0.75, b=0.02))
    zero = lambda x1, x2: 0 * x1
    for cfg in (SEMI, IMPL):
        res = run(unit_mesh, r, zero, zero, TimeGrid.uniform(0.05, 0.01), cfg)
        assert np.all(res.state.u.flat() == 0) and np.all(res.state.v.cell == 0)


def test_mass_conservation(perturbed_mesh):
    u0, v0 = fields(perturbed_mesh)
    res = run(perturbed_mesh, zero_reaction(), u0, v0, TimeGrid.uniform(0.2, 0.002), SEMI)
    m = np.asarray(res.trajectory.mass_u)
    assert np.abs(m - m[0]).max() <= 1e-9 * abs(m[0])


def test_constant_kinetics_schemes_agree(unit_mesh):
    u0, v0 = fields(unit_mesh)
    r = constant_reaction(0.7, -0.2)
    g = TimeGrid.uniform(0.05, 0.01)
    a = run(unit_mesh, r, u0, v0, g, SEMI)
    b = run(unit_mesh, r, u0, v0, g, IMPL)
    np.testing.assert_allclose(a.state.u.flat(), b.state.u.flat(), rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(a.state.v.cell, b.state.v.cell, rtol=1e-12, atol=1e-12)
    # mass grows by exactly |Omega| * c_f * T
    assert a.trajectory.mass_u[-1] - a.trajectory.mass_u[0] == pytest.approx(0.7 * 0.05, rel=1e-10)


def test_single_step_run_equals_step(unit_mesh):
    u0, v0 = fields(unit_mesh)
    r = linear_reaction(-1.0, 0.5, r=0.3, c=0.1, alpha=-0.4)
    res = run(unit_mesh, r, u0, v0, TimeGrid([0.0, 0.02]), IMPL)
    ops = DiffusionOperator(unit_mesh, 1.0)
    from hmmrd.timestepper import initial_state
    s = step_implicit(unit_mesh, ops, r, initial_state(unit_mesh, u0, v0), 0.02, IMPL)
    np.testing.assert_array_equal(res.state.u.flat(), s.u.flat())
    np.testing.assert_array_equal(res.state.v.cell, s.v.cell)


def test_implicit_step_is_fixed_point(unit_mesh):
    # after convergence the iterate satisfies both discrete equations
    r = barkley(BarkleyParams(rho=0.2, a=0.75, b=0.02))
    u0 = lambda x1, x2: 0.8 * (x1 > 0.5)
    v0 = lambda x1, x2: 0.1 + 0 * x1
    from hmmrd.timestepper import initial_state
    st = initial_state(unit_mesh, u0, v0)
    ops = DiffusionOperator(unit_mesh, 1.0)
    dt = 0.01
    s = step_implicit(unit_mesh, ops, r, st, dt, StepperConfig("implicit-fixedpoint", fp_tol=1e-13))
    area = unit_mesh.cell_area
    np.testing.assert_allclose((s.v.cell - st.v.cell) / dt, r.g(s.u.cell, s.v.cell), atol=1e-9)
    A = ops.diffusion.matrix
    lhs = np.concatenate([area * (s.u.cell - st.u.cell) / dt, np.zeros(unit_mesh.n_faces)]) + A @ s.u.flat()
    rhs = np.concatenate([area * r.f(s.u.cell, s.v.cell), np.zeros(unit_mesh.n_faces)])
    assert np.abs(lhs - rhs).max() < 1e-8
    assert s.iterations > 1


def test_fixed_point_divergence(unit_mesh):
    r = barkley(BarkleyParams(rho=0.005, a=0.3, b=0.01))
    u0 = lambda x1, x2: 1.0 * (x1 > 0.5)
    with pytest.raises(FixedPointDivergence) as exc:
        run(unit_mesh, r, u0, lambda x1, x2: 0 * x1, TimeGrid([0.0, 0.05]),
            StepperConfig("implicit-fixedpoint", fp_max_iter=1))
    assert exc.value.residual > 1e-8


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_state_raised(unit_mesh):
    r = linear_reaction(1e300, 1e300)
    with pytest.raises(NonFiniteState):
        run(unit_mesh, r, bump, bump, TimeGrid.uniform(0.2, 0.1), SEMI)


def test_step_rejects_nonpositive_dt(unit_mesh):
    from hmmrd.timestepper import initial_state
    st = initial_state(unit_mesh, bump, bump)
    ops = DiffusionOperator(unit_mesh, 1.0)
    for f in (step_semi_implicit, step_implicit):
        with pytest.raises(ValueError):
            f(unit_mesh, ops, zero_reaction(), st, 0.0)


def test_negative_step_fails_estimates(unit_mesh):
    res = run(unit_mesh, zero_reaction(), bump, bump, TimeGrid.uniform(0.03, 0.01), SEMI)
    tr = res.trajectory
    tr.dt[1] = -tr.dt[1]
    assert not energy_estimate_check(tr).passed
    assert not gradient_estimate_check(tr).passed


def test_stationary_state_has_zero_time_derivative(unit_mesh):
    r = linear_reaction(0.0, 0.0, r=0.0, c=0.0, alpha=-1.0)
    res = run(unit_mesh, r, lambda x1, x2: 0 * x1 + 0.3, bump, TimeGrid.uniform(0.05, 0.01), IMPL)
    rep = gradient_estimate_check(res.trajectory)
    assert rep.norms["l2_dtu"] < 1e-13 and rep.norms["sup_grad_u"] < 1e-13
    np.testing.assert_allclose(res.state.u.flat(), 0.3, rtol=1e-14)


def test_halving_step_converges(unit_mesh):
    reports = []
    for dt in (0.004, 0.002, 0.001):
        reports.append(run(unit_mesh, zero_reaction(), bump, bump, TimeGrid.uniform(0.02, dt), SEMI).state.u.cell)
    e1 = np.abs(reports[0] - reports[2]).max()
    e2 = np.abs(reports[1] - reports[2]).max()
    assert e1 / e2 == pytest.approx(3.0, rel=0.1)      # first order in time


def test_heat_against_exact_solution():
    mesh = build_uniform_triangular(1.0, 8)
    u0 = lambda x1, x2: heat_exact(x1, x2, 0.0)
    res = run(mesh, zero_reaction(), u0, u0, TimeGrid.uniform(0.02, 0.002), IMPL)
    exact = cell_averages(mesh, lambda x1, x2: heat_exact(x1, x2, 0.02))
    err = math.sqrt(float(np.dot(mesh.cell_area, (res.state.u.cell - exact) ** 2)))
    assert err < 0.02 * math.sqrt(float(np.dot(mesh.cell_area, exact ** 2)))


def test_refinement_bound(rng):
    u0 = lambda x1, x2: np.cos(np.pi * x1) * np.cos(np.pi * x2)
    r = linear_reaction(-0.5, 0.2, r=0.1, c=0.0, alpha=-1.0)
    reps = []
    for n in (4, 8):
        res = run(build_box_triangular(0, 1, 0, 1, n), r, u0, u0, TimeGrid.uniform(0.05, 0.005), SEMI)
        reps.append((energy_estimate_check(res.trajectory), gradient_estimate_check(res.trajectory)))
    assert reps[0][0].bounded_against(reps[1][0]) and reps[0][1].bounded_against(reps[1][1])


def test_observer_protocol(unit_mesh):
    seen = []
    run(unit_mesh, zero_reaction(), bump, bump, TimeGrid.uniform(0.03, 0.01), SEMI,
        observers=[lambda s, n, t: seen.append((n, t, s.t))])
    assert [n for n, _, _ in seen] == [0, 1, 2, 3]
    assert all(t == st for _, t, st in seen) and seen[-1][1] == 0.03


def test_face_system_reused(unit_mesh):
    ops = DiffusionOperator(unit_mesh, 1.0)
    a, _ = ops.face_system(0.1)
    b, key = ops.face_system(0.1 * (1 + 1e-14))
    assert a is b and key == 0.1
    c, _ = ops.face_system(0.2)
    assert c is not a
