import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rfheat.errors import HypothesisViolation
from rfheat.estimates import (
    DerivedQuantities,
    EstimateParams,
    EstimateReport,
    check_liyau_boundary,
    check_liyau_global,
    check_space_only_boundary,
    check_space_only_global,
    constant_drift,
    f1_quadratic_bound,
    fit_constant_space_only,
    fit_constant_space_time,
    optimal_split,
    random_square_completion_checks,
    square_completion_terms,
    tolerance,
    verify_F1_max_bound,
    verify_F_inequality,
    verify_P_nonpositive,
    verify_w_inequality,
    w_algebra_terms,
)
from rfheat.geometry import Ball, ManifoldModel
from rfheat.heat import HeatSolution, initial_data, solve_fd, solve_neumann_cap
from rfheat.ricci_flow import evolve_axisym_conformal, evolve_homothetic

from conftest import constant_solution


def at(report, t, x):
    j = np.argmin(np.abs(report.t - t) + np.abs(report.coord - x))
    assert abs(report.t[j] - t) < 1e-12 and abs(report.coord[j] - x) < 1e-12
    return report.lhs[j], report.rhs[j]


def scaled(sol, c):
    return HeatSolution(sol.traj, sol.times, c * sol.u, sol.dt, sol.method, sol.shift)


# -- report plumbing -----------------------------------------------------------


def test_report_pass_logic():
    rep = EstimateReport("x", np.zeros(3), np.arange(3.0), np.array([1.0, 2, 3]),
                         np.array([1.5, 2, 2.99]), 0.02)
    assert rep.min_margin == pytest.approx(-0.01) and rep.passed
    assert rep.argmin == (0.0, 2.0)
    rep.checks["aux"] = False
    assert not rep.passed
    empty = EstimateReport("x", *(np.zeros(0),) * 4, 0.0)
    assert empty.passed and empty.min_margin is None and empty.argmin is None
    assert len(list(rep.rows())) == 3


def test_params_validation():
    with pytest.raises(ValueError):
        EstimateParams(alpha=0.5, a=1.0, b=1.0)
    with pytest.raises(ValueError):
        EstimateParams(alpha=2.0, a=0.3, b=0.3)
    with pytest.raises(ValueError):
        EstimateParams(alpha=1.0, a=0.5, b=0.5, k1=-1.0)
    p = EstimateParams.split(4.0)
    assert p.a + p.b == pytest.approx(0.25) and p.a == p.b


def test_tolerance_model(sphere_solution):
    base = tolerance(sphere_solution, 0.5)
    assert base == pytest.approx(10 * (sphere_solution.dt + sphere_solution.model.spacing**2))
    assert tolerance(sphere_solution, 4.0) == pytest.approx(4 * base)
    assert tolerance(sphere_solution, 1.0, time_differenced=True) > base


def test_drift():
    assert constant_drift(0.0, 0.0) == 0.0
    assert constant_drift(1.0, 1.1) == pytest.approx(0.1 / 1.1)


# -- worked values ---------------------------------------------------------------


def test_sphere_space_only_worked_value(sphere_solution):
    rep = check_space_only_global(sphere_solution)
    lhs, rhs = at(rep, 0.1, math.pi / 2)
    assert lhs == pytest.approx(math.sqrt(0.8) / 2, abs=1e-3)
    assert rhs == pytest.approx(math.sqrt(10 * math.log(1.5)), abs=1e-3)
    assert rep.passed


def test_sphere_liyau_worked_value(sphere_solution):
    rep = check_liyau_global(sphere_solution)
    assert rep.extras["k"] == pytest.approx(5 / 3)
    lhs, rhs = at(rep, 0.1, math.pi / 2)
    assert lhs == pytest.approx(0.2, abs=1e-3)
    assert rhs == pytest.approx(10 / 3 + 10, abs=1e-9)
    assert rep.passed


def test_torus_worked_values(torus_solution):
    rep = check_space_only_global(torus_solution)
    lhs, rhs = at(rep, 1.0, math.pi / 2)
    assert lhs == pytest.approx(0.5 * math.exp(-1), abs=1e-3)
    assert rhs == pytest.approx(math.sqrt(math.log(1.5)), abs=1e-3)
    ly = check_liyau_global(torus_solution, k=0.0)
    lhs, rhs = at(ly, 1.0, 0.0)
    assert lhs == pytest.approx(0.5 * math.exp(-1) / (1 + 0.5 * math.exp(-1)), abs=1e-3)
    assert rhs == pytest.approx(0.5)
    assert rep.passed and ly.passed


@pytest.mark.parametrize("name", ["sphere_solution", "torus_solution", "conformal_solution"])
def test_global_checks_pass(name, request):
    sol = request.getfixturevalue(name)
    for rep in (check_space_only_global(sol), check_liyau_global(sol), verify_F1_max_bound(sol),
                verify_P_nonpositive(sol)):
        assert rep.passed, rep.summary()


def test_sphere_P_strictly_negative(sphere_solution):
    dq = DerivedQuantities(sphere_solution)
    P = dq.P()
    assert np.all(P[1:].max(axis=1) < 0)


# -- trivial solutions -------------------------------------------------------------


def test_constant_solution_everything_vanishes():
    sol = constant_solution(ManifoldModel("round_sphere", 2, grid=32))
    so = check_space_only_global(sol)
    assert np.max(so.lhs) < 1e-12 and np.max(so.rhs) < 1e-6 and so.passed
    ly = check_liyau_global(sol)
    assert np.all(np.abs(ly.lhs) < 1e-12) and ly.passed
    f1 = verify_F1_max_bound(sol)
    assert f1.extras["F1_max"] < 1e-10 and f1.passed
    p = verify_P_nonpositive(sol)
    assert abs(p.extras["max_P"]) < 1e-12 and p.passed
    w = verify_w_inequality(sol)
    assert np.all(np.abs(w.rhs[np.isfinite(w.rhs)]) < 1e-10) and w.passed
    k2 = 1 / (1 - 2 * 0.2)
    for alpha in (1.0, 2.0, 3.5):
        F = verify_F_inequality(sol, EstimateParams.split(alpha, k2=k2))
        assert F.passed
        expected = -alpha * F.t * 2 / (2 * (0.5 / alpha)) * k2**2
        np.testing.assert_allclose(F.lhs, expected, atol=1e-10)


def test_constant_solution_local_constants_zero():
    sol = constant_solution(ManifoldModel("round_sphere", 2, grid=32))
    ball = Ball(0.0, 1.0, sol.T)
    assert fit_constant_space_only(sol, ball).fitted_constant == 0.0
    assert fit_constant_space_time(sol, ball, 0.0, 5 / 3, 2.0).fitted_constant < 1e-12


def test_constant_on_cap_boundary_checks():
    model = ManifoldModel("spherical_cap", 2, grid=32, cap_angle=1.0)
    sol = solve_neumann_cap(evolve_homothetic(model, 0.2), np.full(model.npoints, 2.0), outputs=21)
    for rep in (check_space_only_boundary(sol), check_liyau_boundary(sol)):
        assert rep.passed
        assert np.all(rep.margin >= -1e-12)


# -- invariances and code-path equivalences --------------------------------------


@settings(max_examples=20, deadline=None)
@given(c=st.sampled_from([2.0**k for k in range(-6, 7)]))
def test_rescaling_invariance(sphere_solution, c):
    big = scaled(sphere_solution, c)
    for check in (check_space_only_global, check_liyau_global):
        a, b = check(sphere_solution), check(big)
        np.testing.assert_array_equal(a.lhs, b.lhs)


@settings(max_examples=15, deadline=None)
@given(c=st.floats(0.01, 100.0))
def test_rescaling_invariance_any_factor(torus_solution, c):
    a = check_space_only_global(torus_solution)
    b = check_space_only_global(scaled(torus_solution, c))
    np.testing.assert_allclose(a.lhs, b.lhs, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(a.rhs, b.rhs, rtol=1e-9, atol=1e-9)


def test_alpha_one_matches_liyau_lhs(sphere_solution):
    dq = DerivedQuantities(sphere_solution)
    ly = check_liyau_global(sphere_solution)
    st_lhs = dq.space_time_lhs(1.0)
    mask = sphere_solution.times >= ly.extras["t_min"]
    np.testing.assert_array_equal(st_lhs[mask].ravel(), ly.lhs)
    local = fit_constant_space_time(sphere_solution, None, 0.0, 5 / 3, 1.0 + 1e-9)
    np.testing.assert_allclose(local.lhs, ly.lhs, atol=1e-6)


@settings(max_examples=50, deadline=None)
@given(t0=st.floats(1e-3, 10.0), k=st.floats(0.0, 10.0), n=st.integers(1, 6))
def test_quadratic_bound_at_optimal_split(t0, k, n):
    a = optimal_split(t0, k)
    if a < 1:
        assert f1_quadratic_bound(a, t0, k, n) == pytest.approx(t0 * k * n + n / 2, rel=1e-9)
    # any other split gives a weaker bound
    for other in (0.3, 0.6, 0.9):
        if other < 1 and k > 0:
            assert f1_quadratic_bound(other, t0, k, n) >= t0 * k * n + n / 2 - 1e-9


def test_f1_bound_extras(sphere_solution):
    rep = verify_F1_max_bound(sphere_solution)
    ex = rep.extras
    assert 0 < ex["tightness"] <= 1
    assert ex["quadratic_bound_at_a_star"] == pytest.approx(ex["bound_at_argmax"], rel=1e-9)


def test_F_lemma_flat_alpha_one_reproduces_quadratic(torus_solution):
    # with α = 1, k = 0 the lower bound is (2a/n)F₁²/t - F₁/t - 2∇f∇F₁
    params = EstimateParams.split(1.0)
    rep = verify_F_inequality(torus_solution, params)
    dq = DerivedQuantities(torus_solution)
    F1 = dq.F1
    with np.errstate(invalid="ignore", divide="ignore"):
        quad = 2 * params.a / dq.n * F1**2 / dq.t - F1 / dq.t - 2 * dq.dot(dq.f, F1)
    mask = np.zeros_like(F1, dtype=bool)
    mask[2:-2] = (torus_solution.times[2:-2] >= rep.extras["t_min"])[:, None]
    np.testing.assert_allclose(rep.lhs, quad[mask], rtol=1e-9, atol=1e-12)


# -- lemma residuals ----------------------------------------------------------------


@pytest.mark.parametrize("name", ["sphere_solution", "torus_solution", "conformal_solution"])
def test_lemma_residuals(name, request):
    sol = request.getfixturevalue(name)
    k1, k2 = (0.0, 0.0) if sol.model.periodic else (0.0, float(np.max(sol.ricci_rows())) + 1e-9)
    alpha = 1.0 if sol.model.periodic else 2.0
    w = verify_w_inequality(sol)
    F = verify_F_inequality(sol, EstimateParams.split(alpha, k1=k1, k2=k2))
    for rep in (w, F):
        assert rep.passed, rep.summary()
        assert rep.extras["min_residual"] >= -1e-3


def test_identity_gaps_shrink_under_refinement():
    gaps = []
    for grid in (32, 64):
        model = ManifoldModel("round_sphere", 2, grid=grid)
        sol = solve_fd(evolve_homothetic(model, 0.1), initial_data(model, "modal", [2, 1, 0.3]), outputs=101)
        gaps.append([
            verify_P_nonpositive(sol).extras["identity_gap"],
            verify_w_inequality(sol).extras["identity_gap"],
            verify_F_inequality(sol, EstimateParams.split(2.0, k2=1 / 0.8)).extras["identity_gap"],
        ])
    coarse, fine = np.array(gaps)
    assert np.all(fine < 0.5 * coarse)


def test_heat_op_needs_uniform_samples(sphere_solution):
    sol = HeatSolution(sphere_solution.traj, sphere_solution.times[[0, 1, 3, 4, 5, 6]],
                       sphere_solution.u[[0, 1, 3, 4, 5, 6]], sphere_solution.dt, "fd")
    with pytest.raises(ValueError):
        verify_w_inequality(sol)


# -- hypotheses -----------------------------------------------------------------------


def negative_curvature_solution():
    model = ManifoldModel("axisym_conformal_sphere", 2, grid=48)
    v0 = -0.7 * (np.cos(model.coords) ** 2 - 1 / 3)
    traj = evolve_axisym_conformal(model, v0, 0.01)
    return solve_fd(traj, initial_data(model, "modal", [2, 0.5]), outputs=21)


def test_negative_ricci_raises():
    sol = negative_curvature_solution()
    assert float(np.min(sol.ricci_rows())) < 0
    with pytest.raises(HypothesisViolation):
        check_liyau_global(sol)
    with pytest.raises(HypothesisViolation):
        verify_F1_max_bound(sol)


def test_supplied_bounds_too_small(sphere_solution):
    with pytest.raises(HypothesisViolation):
        check_liyau_global(sphere_solution, k=1.0)
    with pytest.raises(HypothesisViolation):
        verify_F_inequality(sphere_solution, EstimateParams.split(2.0, k2=1.0))
    with pytest.raises(HypothesisViolation):
        fit_constant_space_time(sphere_solution, None, 0.0, 1.0, 2.0)
    with pytest.raises(ValueError):
        fit_constant_space_time(sphere_solution, None, 0.0, 5 / 3, 1.0)


# -- local constants -------------------------------------------------------------------


def test_local_space_only_fit(sphere_solution):
    rep = fit_constant_space_only(sphere_solution, Ball(0.0, 1.0, 0.2))
    C = rep.fitted_constant
    assert 0 < C < math.inf and rep.passed
    assert np.min(rep.margin) == pytest.approx(0.0, abs=1e-12)
    wider = fit_constant_space_only(sphere_solution, Ball(0.0, 2.0, 0.2)).fitted_constant
    assert wider <= 2 * C


def test_local_space_time_alpha_sweep(sphere_solution):
    ball = Ball(0.0, 1.0, 0.2)
    fits = [fit_constant_space_time(sphere_solution, ball, 0.0, 5 / 3, a).fitted_constant
            for a in (1.5, 2.0, 4.0)]
    assert all(0 <= c < math.inf for c in fits)


def test_boundary_checks(hemisphere_solution, quarter_cap_solution):
    for sol in (hemisphere_solution, quarter_cap_solution):
        so = check_space_only_boundary(sol)
        ly = check_liyau_boundary(sol)
        assert so.passed and ly.passed, (so.summary(), ly.summary())
    # totally geodesic boundary: ∂P/∂ν is zero up to discretization
    rep = check_space_only_boundary(hemisphere_solution)
    assert rep.extras["lambda_min"] == 0
    assert abs(rep.extras["max_dP_dnu"]) <= rep.extras["normal_tolerance"]


def test_boundary_checks_need_cap(sphere_solution):
    with pytest.raises(ValueError):
        check_space_only_boundary(sphere_solution)
    with pytest.raises(ValueError):
        check_liyau_boundary(sphere_solution)


# -- algebra ------------------------------------------------------------------------------


def test_hand_instance():
    assert square_completion_terms(1.0, 1.0, 2.0, 0.25, 0.25) == pytest.approx((3.0, -1.5, 4.5))


def test_zero_hessian_and_gradient():
    R = np.diag([0.5, -0.3])
    total, lower, square = square_completion_terms(np.zeros((2, 2)), R, 2.0, 0.25, 0.25)
    assert total == 0.0
    assert lower == pytest.approx(-(2.0 / 1.0) * np.sum(R**2))
    assert total >= lower
    direct, regrouped, wlower, _ = w_algebra_terms(np.zeros((3, 3)), np.zeros(3), -0.5)
    assert direct == regrouped == wlower == 0.0


@settings(max_examples=200, deadline=None)
@given(
    n=st.integers(1, 4),
    seed=st.integers(0, 2**31),
    alpha=st.floats(1.0, 5.0),
    frac=st.floats(0.05, 0.95),
    f=st.floats(-20.0, -1e-6),
)
def test_square_completion_property(n, seed, alpha, frac, f):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, n))
    H = X + X.T
    R = rng.standard_normal((n, n))
    R = R + R.T
    g = rng.standard_normal(n)
    a = frac / alpha
    b = 1 / alpha - a
    total, lower, square = square_completion_terms(H, R, alpha, a, b)
    scale = np.sum(H**2) + alpha * np.sum(np.abs(R * H)) + alpha / (4 * b) * np.sum(R**2)
    assert abs(total - lower - square) <= 1e-12 * scale
    assert square >= 0
    direct, regrouped, wlower, wscale = w_algebra_terms(H, g, f)
    assert abs(direct - regrouped) <= 1e-12 * wscale
    assert direct - wlower >= -1e-12 * wscale


def test_random_checks_report():
    rep = random_square_completion_checks(seed=3, trials=500)
    assert rep.passed, rep.checks
    assert len(rep.lhs) == 1500
    again = random_square_completion_checks(seed=3, trials=500)
    np.testing.assert_array_equal(rep.lhs, again.lhs)
