import numpy as np
import pytest

from config import EARTH_MOON_MU
from exceptions import RootBracketError, TrajectoryError
from services.dynamics.cr3bp import (
    _solve_collinear,
    cr3bp_hamiltonian,
    cr3bp_rhs,
    cr3bp_rhs_jacobian,
    cr3bp_switching,
    effective_potential,
    gravity_gradient,
    gravity_rotating,
    jacobi_constant,
    libration_points,
)
from services.numerics.integrator import IntegratorConfig, integrate
from smoothing import SmoothingConfig, SmoothingKind
from units import CanonicalParams
from tests.helpers import assert_matrix_close, central_difference

MU = EARTH_MOON_MU


@pytest.fixture
def cr3bp_params():
    return CanonicalParams(t_max=0.05, c=0.8, mu=MU)


def _random_state(rng):
    """位于地月之间、远离两个主天体的随机状态"""
    r = np.array([rng.uniform(0.2, 0.8), rng.uniform(-0.4, 0.4), rng.uniform(-0.2, 0.2)])
    v = rng.uniform(-0.5, 0.5, 3)
    m = rng.uniform(0.6, 1.0)
    lam = rng.uniform(-1.0, 1.0, 6)
    return np.concatenate([r, v, [m], lam, [rng.uniform(0.0, 1.0)]])


def test_libration_points_are_equilibria():
    points = libration_points(MU)
    assert set(points) == {"L1", "L2", "L3", "L4", "L5"}
    for point in points.values():
        np.testing.assert_allclose(gravity_rotating(point, MU), 0.0, atol=1e-12)


def test_earth_moon_collinear_locations():
    points = libration_points(MU)
    assert points["L1"][0] == pytest.approx(0.8369, abs=1e-3)
    assert points["L2"][0] == pytest.approx(1.1557, abs=1e-3)
    assert points["L3"][0] == pytest.approx(-1.0051, abs=1e-3)
    np.testing.assert_allclose(points["L4"], [0.5 - MU, np.sqrt(3.0) / 2.0, 0.0])


def test_gravity_gradient_is_symmetric_hessian(rng):
    for _ in range(20):
        r = _random_state(rng)[0:3]
        G = gravity_gradient(r, MU)
        np.testing.assert_allclose(G, G.T, atol=1e-14)
        assert_matrix_close(G, central_difference(lambda x: gravity_rotating(x, MU), r), 1e-7)
        grad_u = central_difference(lambda x: effective_potential(x, MU), r)[0]
        np.testing.assert_allclose(gravity_rotating(r, MU), grad_u, rtol=1e-7, atol=1e-7)


def test_jacobian_matches_finite_difference(rng, cr3bp_params):
    for kind in (SmoothingKind.HYPERBOLIC_TANGENT, SmoothingKind.L2_NORM):
        cfg = SmoothingConfig(kind, 0.5)
        for _ in range(50):
            z = _random_state(rng)
            analytic = cr3bp_rhs_jacobian(z, cr3bp_params, cfg)
            numeric = central_difference(lambda x: cr3bp_rhs(x, cr3bp_params, cfg), z)
            assert_matrix_close(analytic, numeric, 5e-6)


def test_rates_are_hamiltonian_gradients(rng, cr3bp_params):
    cfg = SmoothingConfig(SmoothingKind.L2_NORM, 0.5)
    for _ in range(30):
        z = _random_state(rng)
        frozen = cr3bp_switching(z, cr3bp_params, cfg)
        grad_h = central_difference(
            lambda x: cr3bp_hamiltonian(x, cr3bp_params, cfg, frozen), z
        )[0]
        dz = cr3bp_rhs(z, cr3bp_params, cfg)
        assert_matrix_close(dz, np.concatenate([grad_h[7:14], -grad_h[0:7]]), 1e-6)


def test_jacobi_constant_is_conserved():
    params = CanonicalParams(t_max=0.0, c=1.0, mu=MU)
    cfg = SmoothingConfig(SmoothingKind.HYPERBOLIC_TANGENT, 1.0)
    z0 = np.zeros(14)
    z0[0:3] = libration_points(MU)["L4"] + np.array([0.01, 0.01, 0.005])
    z0[6] = 1.0
    z0[10:13] = [0.1, 0.2, 0.3]
    ode = IntegratorConfig(rel_tol=1e-13, abs_tol=1e-13)
    end = integrate(lambda z: cr3bp_rhs(z, params, cfg), z0, 0.0, 10.0, ode).z
    assert abs(jacobi_constant(end[0:6], MU) - jacobi_constant(z0[0:6], MU)) < 1e-10


def test_invalid_inputs():
    with pytest.raises(ValueError):
        libration_points(0.7)
    with pytest.raises(ValueError):
        libration_points(0.0)
    with pytest.raises(TrajectoryError):
        gravity_rotating([1.0 - MU, 0.0, 0.0], MU)
    with pytest.raises(RootBracketError):
        _solve_collinear("L2", 1.5, 1.9, MU)
