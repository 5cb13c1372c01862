"""
圆型限制性三体问题（旋转坐标系）的状态-协态动力学与平动点。

主天体位于 (−μ, 0, 0)，次天体位于 (1 − μ, 0, 0)。CanonicalParams.mu 为质量比。
"""

import math
from typing import Dict, Optional

import numpy as np
from scipy.optimize import brentq

from exceptions import RootBracketError, TrajectoryError
from services.dynamics.cartesian import ControlEval, fill_thrust_blocks, primer_control
from smoothing import SmoothingConfig
from units import CanonicalParams

CORIOLIS_MATRIX = np.array([[0.0, 2.0, 0.0], [-2.0, 0.0, 0.0], [0.0, 0.0, 0.0]])


def _check_mu(mu_ratio: float) -> None:
    if not 0.0 < mu_ratio < 0.5:
        raise ValueError(f"Mass ratio must lie in (0, 1/2), got {mu_ratio}")


def _primary_offsets(r: np.ndarray, mu_ratio: float):
    d1 = r - np.array([-mu_ratio, 0.0, 0.0])
    d2 = r - np.array([1.0 - mu_ratio, 0.0, 0.0])
    r1 = float(np.linalg.norm(d1))
    r2 = float(np.linalg.norm(d2))
    if r1 == 0.0 or r2 == 0.0:
        raise TrajectoryError(f"Collision with a primary (r1={r1}, r2={r2})")
    return d1, d2, r1, r2


def effective_potential(r, mu_ratio: float) -> float:
    """U = ½(x² + y²) + (1 − μ)/r₁ + μ/r₂"""
    r = np.asarray(r, dtype=float)
    _, _, r1, r2 = _primary_offsets(r, mu_ratio)
    return 0.5 * (r[0] ** 2 + r[1] ** 2) + (1.0 - mu_ratio) / r1 + mu_ratio / r2


def gravity_rotating(r, mu_ratio: float) -> np.ndarray:
    """g(r) = ∇U，含离心项"""
    r = np.asarray(r, dtype=float)
    d1, d2, r1, r2 = _primary_offsets(r, mu_ratio)
    g = -(1.0 - mu_ratio) * d1 / r1**3 - mu_ratio * d2 / r2**3
    g[0] += r[0]
    g[1] += r[1]
    return g


def gravity_gradient(r, mu_ratio: float) -> np.ndarray:
    """G = ∂g/∂r，U 的 Hessian，对称"""
    r = np.asarray(r, dtype=float)
    d1, d2, r1, r2 = _primary_offsets(r, mu_ratio)
    G = np.diag([1.0, 1.0, 0.0])
    for k, d, rho in ((1.0 - mu_ratio, d1, r1), (mu_ratio, d2, r2)):
        G += k * (-np.eye(3) / rho**3 + 3.0 * np.outer(d, d) / rho**5)
    return G


def coriolis(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return np.array([2.0 * v[1], -2.0 * v[0], 0.0])


def jacobi_constant(state, mu_ratio: float) -> float:
    """C = 2U − v²"""
    state = np.asarray(state, dtype=float)
    v = state[3:6]
    return 2.0 * effective_potential(state[0:3], mu_ratio) - float(np.dot(v, v))


def cr3bp_switching(z: np.ndarray, params: CanonicalParams, cfg: SmoothingConfig) -> ControlEval:
    z = np.asarray(z, dtype=float)
    return primer_control(z[10:13], z[6], z[13], params.c, cfg)


def cr3bp_rhs(z: np.ndarray, params: CanonicalParams, cfg: SmoothingConfig) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    r, v, m = z[0:3], z[3:6], z[6]
    lam_r, lam_v = z[7:10], z[10:13]
    ctrl = cr3bp_switching(z, params, cfg)
    T = params.t_max

    dz = np.empty(14)
    dz[0:3] = v
    dz[3:6] = gravity_rotating(r, params.mu) + coriolis(v) + (T / m) * ctrl.delta * ctrl.alpha_hat
    dz[6] = -(T / params.c) * ctrl.delta
    dz[7:10] = -gravity_gradient(r, params.mu).T @ lam_v
    dz[10:13] = -lam_r - CORIOLIS_MATRIX.T @ lam_v
    dz[13] = -(T / m**2) * np.linalg.norm(lam_v) * ctrl.delta
    return dz


def cr3bp_rhs_jacobian(z: np.ndarray, params: CanonicalParams, cfg: SmoothingConfig) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    r, m = z[0:3], z[6]
    lam_v, lam_m = z[10:13], z[13]
    mu = params.mu
    d1, d2, r1, r2 = _primary_offsets(r, mu)
    G = gravity_gradient(r, mu)
    eye = np.eye(3)

    F = np.zeros((14, 14))
    F[0:3, 3:6] = eye
    F[3:6, 0:3] = G
    F[3:6, 3:6] = CORIOLIS_MATRIX
    fill_thrust_blocks(F, m, lam_v, lam_m, params, cfg)

    # ∂(Gλ_v)/∂r，G 的三阶导数与 λ_v 缩并
    dG_lam = np.zeros((3, 3))
    for k, d, rho in ((1.0 - mu, d1, r1), (mu, d2, r2)):
        d_dot = float(np.dot(d, lam_v))
        dG_lam += (3.0 * k / rho**5) * (
            np.outer(lam_v, d) + d_dot * eye + np.outer(d, lam_v)
        ) - (15.0 * k * d_dot / rho**7) * np.outer(d, d)
    F[7:10, 0:3] = -dG_lam
    F[7:10, 10:13] = -G.T
    F[10:13, 7:10] = -eye
    F[10:13, 10:13] = -CORIOLIS_MATRIX.T
    return F


def cr3bp_hamiltonian(
    z: np.ndarray,
    params: CanonicalParams,
    cfg: SmoothingConfig,
    control_eval: Optional[ControlEval] = None,
) -> float:
    z = np.asarray(z, dtype=float)
    r, v, m = z[0:3], z[3:6], z[6]
    ctrl = control_eval or cr3bp_switching(z, params, cfg)
    T, c = params.t_max, params.c
    f_v = gravity_rotating(r, params.mu) + coriolis(v) + (T / m) * ctrl.delta * ctrl.alpha_hat
    return float(
        (T / c) * ctrl.delta * (1.0 - z[13]) + np.dot(z[7:10], v) + np.dot(z[10:13], f_v)
    )


def _collinear_force(x: float, mu_ratio: float) -> float:
    return float(gravity_rotating([x, 0.0, 0.0], mu_ratio)[0])


def _solve_collinear(name: str, lo: float, hi: float, mu_ratio: float) -> float:
    try:
        return brentq(_collinear_force, lo, hi, args=(mu_ratio,), xtol=1e-15, rtol=4 * np.finfo(float).eps)
    except ValueError as e:
        raise RootBracketError(f"{name} not bracketed on [{lo}, {hi}]: {e}") from e


def libration_points(mu_ratio: float) -> Dict[str, np.ndarray]:
    """L1-L3 由 x 轴上 g_x = 0 求根，L4/L5 为解析解"""
    _check_mu(mu_ratio)
    hill = (mu_ratio / 3.0) ** (1.0 / 3.0)
    eps = 1e-3 * hill
    secondary = 1.0 - mu_ratio

    x_l1 = _solve_collinear("L1", -mu_ratio + 0.5, secondary - eps, mu_ratio)
    x_l2 = _solve_collinear("L2", secondary + eps, 2.0, mu_ratio)
    x_l3 = _solve_collinear("L3", -2.0, -mu_ratio - 0.5, mu_ratio)
    half_sqrt3 = 0.5 * math.sqrt(3.0)
    return {
        "L1": np.array([x_l1, 0.0, 0.0]),
        "L2": np.array([x_l2, 0.0, 0.0]),
        "L3": np.array([x_l3, 0.0, 0.0]),
        "L4": np.array([0.5 - mu_ratio, half_sqrt3, 0.0]),
        "L5": np.array([0.5 - mu_ratio, -half_sqrt3, 0.0]),
    }
