import math

import numpy as np
import pytest

from config import DAY_S
from services.benchmark_service import BenchmarkService, sample_costate_guess
from services.dynamics.mee import mee_to_cartesian
from services.numerics.integrator import IntegratorConfig, integrate
from services.numerics.root_finder import TerminationReason
from services.shooting import (
    SAMPLE_COLUMNS,
    Backend,
    ContinuationSchedule,
    ContinuationSolver,
    ShootingEvaluator,
    ShootingProblem,
    propagate,
    residual,
    residual_jacobian,
    revolutions_swept,
    sample_solution,
    solve_with_continuation,
)
from smoothing import SmoothingConfig, SmoothingKind
from units import CanonicalParams
from tests.helpers import assert_matrix_close, central_difference


def _problem(scale, params, tof, target=None, backend=Backend.CARTESIAN, initial=None, **kwargs):
    start = (
        np.array([1.0, 0.0, 0.0, 0.0, math.sqrt(params.mu), 0.0, 1.0])
        if initial is None
        else initial
    )
    return ShootingProblem(
        backend=backend,
        params=params,
        scale=scale,
        initial_state=start,
        target=start[0:6] if target is None else target,
        tof=tof,
        smoothing=SmoothingConfig(SmoothingKind.L2_NORM, 0.1),
        name="unit",
        **kwargs,
    )


def test_default_ladder():
    ladder = ContinuationSchedule().ladder()
    assert len(ladder) == 6
    assert ladder[0] == 1.0
    assert ladder[-1] == 1e-5
    np.testing.assert_allclose(ladder, [1.0, 0.1, 1e-2, 1e-3, 1e-4, 1e-5], rtol=1e-12)


def test_single_stage_and_invalid_ladders():
    assert ContinuationSchedule(0.01, 0.1, 0.01).ladder() == [0.01]
    assert ContinuationSchedule(1.0, 0.5, 0.3).ladder() == [1.0, 0.5, 0.3]
    with pytest.raises(ValueError):
        ContinuationSchedule(1.0, 0.1, 2.0)
    with pytest.raises(ValueError):
        ContinuationSchedule(1.0, 1.0, 1e-3)
    with pytest.raises(ValueError):
        ContinuationSchedule(1.0, 0.1, 0.0)


def test_problem_validation(helio_scale, cartesian_params):
    with pytest.raises(ValueError):
        _problem(helio_scale, cartesian_params, tof=0.0)
    with pytest.raises(ValueError):
        _problem(helio_scale, cartesian_params, tof=1.0, target=np.zeros(5))
    problem = _problem(helio_scale, cartesian_params, tof=1.0)
    with pytest.raises(ValueError):
        problem.initial_augmented_state(np.zeros(6))


def test_residual_for_vanishing_flight_time(helio_scale, cartesian_params):
    problem = _problem(helio_scale, cartesian_params, tof=1e-12)
    eta0 = np.array([0.3, 0.1, -0.2, 0.4, 0.5, 0.1, 0.7])
    psi = residual(problem, eta0)
    np.testing.assert_allclose(psi[0:6], 0.0, atol=1e-9)
    assert psi[6] == pytest.approx(0.7, abs=1e-9)


def test_residual_jacobian_matches_finite_difference(helio_scale, cartesian_params):
    problem = _problem(helio_scale, cartesian_params, tof=0.2, target=np.zeros(6) + 0.5)
    eta0 = np.array([0.3, 0.1, -0.2, 0.4, 0.5, 0.1, 0.7])
    analytic = residual_jacobian(problem, eta0, rho=0.1)
    numeric = central_difference(lambda eta: residual(problem, eta, rho=0.1), eta0)
    assert_matrix_close(analytic, numeric, 1e-5)

    evaluator = ShootingEvaluator(problem, 0.1)
    np.testing.assert_array_equal(evaluator.jacobian(eta0), analytic)
    np.testing.assert_allclose(
        evaluator.residual(eta0), residual(problem, eta0, 0.1), rtol=1e-7, atol=1e-8
    )


def test_numeric_failure_becomes_nan_residual(helio_scale, cartesian_params):
    bad = np.array([1.0, 0.0, 0.0, 0.0, 6.0, 0.0, -1.0])
    problem = _problem(helio_scale, cartesian_params, tof=0.5, initial=bad)
    assert np.all(np.isnan(residual(problem, np.ones(7))))
    assert np.all(np.isnan(ShootingEvaluator(problem, 0.1).jacobian(np.ones(7))))


def test_mee_target_longitude_is_unwrapped(helio_scale, cartesian_params):
    initial = np.array([1.0, 0.0, 0.0, 0.0, 0.0, 2.0, 1.0])
    target = np.array([1.2, 0.0, 0.0, 0.0, 0.0, 1.0])
    problem = _problem(
        helio_scale, cartesian_params, tof=1.0, target=target,
        backend=Backend.MEE, initial=initial, n_rev=2,
    )
    assert problem.terminal_target()[5] == pytest.approx(1.0 + 3 * 2.0 * math.pi)
    np.testing.assert_array_equal(problem.target, target)


def test_continuation_reports_failure_stage(helio_scale, cartesian_params):
    bad = np.array([1.0, 0.0, 0.0, 0.0, 6.0, 0.0, -1.0])
    problem = _problem(helio_scale, cartesian_params, tof=0.5, initial=bad)
    report = solve_with_continuation(problem, np.ones(7))
    assert not report.converged
    assert report.failed_stage == 0
    assert report.termination == TerminationReason.NON_FINITE.value
    assert report.final_mass_kg is None
    assert len(report.stages) == 1


def test_continuation_runs_every_stage_for_exact_guess(helio_scale):
    """无推力时 λ_m 恒定，λ_m0 = 0 且目标取弹道终点即为各级的精确解"""
    params = CanonicalParams(t_max=0.0, c=1.0, mu=helio_scale.mu_canonical)
    start = _problem(helio_scale, params, tof=0.3)
    eta0 = np.array([0.2, 0.1, 0.0, 0.3, -0.1, 0.2, 0.0])
    endpoint = propagate(start, eta0).z[0:6]
    problem = _problem(helio_scale, params, tof=0.3, target=endpoint)

    report = ContinuationSolver().solve(problem, eta0, seed=3)
    assert report.converged
    assert report.rho_ladder == ContinuationSchedule().ladder()
    assert all(stage.iterations == 0 for stage in report.stages)
    assert report.final_mass_kg == pytest.approx(helio_scale.mass_unit)
    assert report.lam_m0 == 0.0

    data = report.to_dict()
    assert data["converged"] is True
    assert data["seed"] == 3
    assert data["rho_final"] == 1e-5
    assert len(data["rho_ladder"]) == 6
    assert "wall_time_s" not in data
    assert "wall_time_s" in report.to_dict(include_timing=True)


def test_sampled_circular_orbit(helio_scale):
    params = CanonicalParams(t_max=0.0, c=1.0, mu=helio_scale.mu_canonical)
    period = 2.0 * math.pi / math.sqrt(params.mu)
    problem = _problem(helio_scale, params, tof=period)
    samples = sample_solution(problem, np.full(7, 0.1), n_points=200)

    assert samples.columns == list(SAMPLE_COLUMNS)
    assert samples.rows.shape == (200, len(SAMPLE_COLUMNS))
    t = samples.column("t")
    assert t[0] == 0.0
    assert t[-1] == pytest.approx(period * helio_scale.time_unit / DAY_S)
    radius = np.linalg.norm(samples.rows[:, 1:4], axis=1)
    np.testing.assert_allclose(radius, helio_scale.length_unit, rtol=1e-7)
    np.testing.assert_allclose(samples.column("m"), helio_scale.mass_unit)
    assert revolutions_swept(samples) == pytest.approx(1.0, abs=1e-6)
    assert set(samples.to_records()[0]) == set(SAMPLE_COLUMNS)
    with pytest.raises(ValueError):
        sample_solution(problem, np.full(7, 0.1), n_points=1)


@pytest.mark.slow
def test_mee_residual_jacobian_matches_finite_difference():
    service = BenchmarkService()
    problem = service.load_benchmark("e2m", Backend.MEE, SmoothingKind.HYPERBOLIC_TANGENT)
    short = ShootingProblem(
        backend=problem.backend,
        params=problem.params,
        scale=problem.scale,
        initial_state=problem.initial_state,
        target=problem.target,
        tof=0.05,
        smoothing=problem.smoothing,
        n_rev=0,
    )
    eta0 = sample_costate_guess(Backend.MEE, 0, 0)
    analytic = residual_jacobian(short, eta0, rho=0.1)
    numeric = central_difference(lambda eta: residual(short, eta, rho=0.1), eta0)
    assert_matrix_close(analytic, numeric, 1e-5)


def _in_km(problem, x):
    if problem.backend is Backend.MEE:
        r, v = mee_to_cartesian(x[0:6], problem.scale.mu_canonical)
    else:
        r, v = x[0:3], x[3:6]
    return r * problem.scale.length_unit, v * problem.scale.velocity_unit


def _first_converged(problem, service, seeds):
    for seed in seeds:
        eta0 = sample_costate_guess(problem.backend, seed, 0)
        report = service.solve(problem, eta0, seed=seed)
        if report.converged:
            return report
    return None


@pytest.mark.slow
@pytest.mark.parametrize("coords", [Backend.CARTESIAN, Backend.MEE])
def test_earth_to_mars_optimum(coords):
    service = BenchmarkService()
    problem = service.load_benchmark("e2m", coords, SmoothingKind.L2_NORM, use_stm=True)
    report = _first_converged(problem, service, range(20))
    assert report is not None
    assert report.final_mass_kg == pytest.approx(603.935, abs=0.5)
    assert report.lam_m0 >= 0.0

    zf = propagate(problem, report.eta0_solution, report.rho_final).z
    assert abs(zf[13]) < 1e-8
    r_end, v_end = _in_km(problem, zf)
    r_target, v_target = _in_km(problem, problem.terminal_target())
    assert np.linalg.norm(r_end - r_target) < 5.0
    assert np.linalg.norm(v_end - v_target) < 1e-6

    # 从收敛解重新求解几乎不需要迭代
    again = service.solve(
        problem,
        report.eta0_solution,
        ContinuationSchedule(report.rho_final, 0.1, report.rho_final),
    )
    assert again.converged
    assert again.stages[0].iterations <= 2

    # 推力-滑行-推力结构
    samples = sample_solution(problem, report.eta0_solution, report.rho_final, 2000)
    thrusting = samples.column("delta") > 0.5
    assert np.count_nonzero(np.diff(thrusting.astype(int))) == 2

    # ρ 很小时 H 沿极值轨迹近似守恒
    H = samples.column("H")
    assert np.max(np.abs(H - H[0])) <= 1e-6 * max(1.0, abs(H[0]))


@pytest.mark.slow
def test_earth_to_mars_continuation_flattens():
    service = BenchmarkService()
    problem = service.load_benchmark("e2m", Backend.CARTESIAN, SmoothingKind.HYPERBOLIC_TANGENT)
    report = _first_converged(problem, service, range(20))
    assert report is not None
    masses = {stage.rho: stage.final_mass_kg for stage in report.stages}
    assert abs(masses[report.rho_ladder[-2]] - masses[report.rho_ladder[-1]]) < 0.2


@pytest.mark.slow
def test_earth_to_dionysus_optimum():
    service = BenchmarkService()
    problem = service.load_benchmark("e2d", Backend.MEE, SmoothingKind.HYPERBOLIC_TANGENT)
    assert problem.n_rev == 5
    report = _first_converged(problem, service, range(20))
    assert report is not None
    assert report.final_mass_kg == pytest.approx(2718.33, abs=1.0)


def test_integrator_config_flows_into_problem(helio_scale, cartesian_params):
    ode = IntegratorConfig(rel_tol=1e-10, abs_tol=1e-10)
    problem = _problem(helio_scale, cartesian_params, tof=0.1, integrator=ode)
    z0 = problem.initial_augmented_state(np.full(7, 0.2))
    expected = integrate(
        lambda z: problem.dynamics.rhs(z, problem.params, problem.smoothing), z0, 0.0, 0.1, ode
    ).z
    np.testing.assert_array_equal(propagate(problem, np.full(7, 0.2)).z, expected)


def test_hamiltonian_drift_follows_smoothed_throttle(helio_scale, cartesian_params):
    """平滑油门下 dH/dt = −(T/c)·S·dδ/dt，ρ → 0 时漂移消失"""
    problem = _problem(helio_scale, cartesian_params, tof=0.5)
    eta0 = np.array([0.3, 0.1, -0.2, 0.4, 0.5, 0.1, 0.2])
    samples = sample_solution(problem, eta0, n_points=4000)
    H, S, delta = samples.column("H"), samples.column("S"), samples.column("delta")
    steps = 0.5 * (S[1:] + S[:-1]) * np.diff(delta)
    thrust_over_c = cartesian_params.t_max / cartesian_params.c
    expected = -thrust_over_c * np.concatenate([[0.0], np.cumsum(steps)])
    drift = H - H[0]
    atol = 1e-10 + 1e-5 * np.max(np.abs(drift))
    np.testing.assert_allclose(drift, expected, rtol=1e-4, atol=atol)
