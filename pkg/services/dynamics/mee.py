"""
修正春分点根数 (MEE) 下的状态-协态动力学与坐标转换。

增广状态 z (14) = [p, f, g, h, k, L, m, λ (6), λ_m]，要求 μ = 1 的规范单位。
A、B 对根数的偏导数由 dual.py 的前向模式对偶数精确求得；
mee_rhs_jacobian 在此之上再嵌套一层对偶数。
"""

import math
from typing import List, Optional, Sequence, Tuple

import numpy as np

from exceptions import SingularControlError, TrajectoryError
from services.dynamics.cartesian import FALLBACK_AXIS, SINGULARITY_FLOOR, ControlEval
from services.dynamics.dual import (
    Dual,
    dcos,
    dsin,
    dsqrt,
    jacobian_rows,
    seed,
    split,
    stack,
    value,
)
from smoothing import SmoothingConfig, throttle, throttle_derivative
from units import CanonicalParams

TWO_PI = 2.0 * math.pi


def _dynamics_terms(p, f, g, h, k, L) -> Tuple[List, List[List]]:
    """漂移项 A 与控制矩阵 B（列依次为径向、横向、法向）"""
    sinL, cosL = dsin(L), dcos(L)
    sp = dsqrt(p)
    q = 1.0 + f * cosL + g * sinL
    s2 = 1.0 + h * h + k * k
    hk = h * sinL - k * cosL
    spq = sp / q

    A = [0.0, 0.0, 0.0, 0.0, 0.0, sp * q * q / (p * p)]
    B = [
        [0.0, 2.0 * p * spq, 0.0],
        [sp * sinL, spq * ((q + 1.0) * cosL + f), -spq * g * hk],
        [-sp * cosL, spq * ((q + 1.0) * sinL + g), spq * f * hk],
        [0.0, 0.0, 0.5 * spq * s2 * cosL],
        [0.0, 0.0, 0.5 * spq * s2 * sinL],
        [0.0, 0.0, spq * hk],
    ]
    return A, B


def drift_and_control_matrix(elements: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    A, B = _dynamics_terms(*(float(e) for e in elements))
    return np.array(A, dtype=float), np.array(B, dtype=float)


def _element_partials(x: Sequence):
    """A、∂A/∂x、B、∂B/∂x；dA[j, i] = ∂A_j/∂x_i，dB[j, c, i] = ∂B_jc/∂x_i"""
    xs = seed(list(x))
    level = xs[0].level
    A, B = _dynamics_terms(*xs)

    A_parts = [split(a, level, 6) for a in A]
    B_parts = [[split(b, level, 6) for b in row] for row in B]
    A_val = stack([val for val, _ in A_parts])
    dA = stack([grad for _, grad in A_parts])
    B_val = stack([stack([val for val, _ in row]) for row in B_parts])
    dB = stack([stack([grad for _, grad in row]) for row in B_parts])
    return A_val, dA, B_val, dB


def _smoothed_throttle(S, cfg: SmoothingConfig):
    if isinstance(S, Dual):
        return Dual(
            float(throttle(S.val, cfg)),
            S.grad * float(throttle_derivative(S.val, cfg)),
            S.level,
        )
    return float(throttle(S, cfg))


def _check_elements(z: Sequence) -> None:
    p, f, g, L, m = (value(z[i]) for i in (0, 1, 2, 5, 6))
    if not p > 0:
        raise TrajectoryError(f"Semi-latus rectum must be positive, got p={p}")
    q = 1.0 + f * math.cos(L) + g * math.sin(L)
    if not q > 0:
        raise TrajectoryError(f"q = 1 + f cosL + g sinL must be positive, got {q}")
    if not m > 0:
        raise TrajectoryError(f"Mass must be positive, got {m}")


def _rates(z: Sequence, params: CanonicalParams, cfg: SmoothingConfig):
    """
    增广右端函数的通用实现，z 的元素可以是浮点数或对偶数。

    协态方程为 −∂H/∂x，推力方向和油门 δ 在求导时都保持冻结。
    方向项在极值处为零；∂H/∂δ = −(T/c)S 在平滑下不为零，不计入。
    """
    _check_elements(z)
    x = list(z[0:6])
    m = z[6]
    lam = stack(list(z[7:13]))
    lam_m = z[13]
    T, c = params.t_max, params.c

    A, dA, B, dB = _element_partials(x)
    b = B.T @ lam
    nb = dsqrt(b @ b)
    degenerate = value(nb) < SINGULARITY_FLOOR
    if degenerate:
        alpha = FALLBACK_AXIS.copy()
    else:
        alpha = -b / nb

    S = c * nb / m + lam_m - 1.0
    delta = _smoothed_throttle(S, cfg)
    thrust = T * delta / m

    x_dot = A + (B @ alpha) * thrust
    m_dot = -(T / c) * delta
    lam_dot = -(lam @ dA) - (alpha @ np.tensordot(lam, dB, axes=(0, 0))) * thrust
    lam_m_dot = -(T / (m * m)) * delta * nb

    rates = list(x_dot) + [m_dot] + list(lam_dot) + [lam_m_dot]
    return rates, degenerate


def mee_rhs(z: np.ndarray, params: CanonicalParams, cfg: SmoothingConfig) -> np.ndarray:
    z = _as_state(z)
    rates, _ = _rates(z, params, cfg)
    return np.array([value(r) for r in rates])


def mee_rhs_jacobian(z: np.ndarray, params: CanonicalParams, cfg: SmoothingConfig) -> np.ndarray:
    """mee_rhs 的精确 14×14 雅可比矩阵（嵌套对偶数）"""
    z = _as_state(z)
    zd = seed([float(e) for e in z])
    rates, degenerate = _rates(zd, params, cfg)
    if degenerate:
        raise SingularControlError("‖Bᵀλ‖ is below the singularity floor")
    return jacobian_rows(rates, zd[0].level, 14)


def mee_control(z: np.ndarray, params: CanonicalParams, cfg: SmoothingConfig) -> ControlEval:
    """α̂ = −Bᵀλ/‖Bᵀλ‖（RTN 坐标），S = c‖Bᵀλ‖/m + λ_m − 1"""
    z = _as_state(z)
    _check_elements(z)
    _, B = drift_and_control_matrix(z[0:6])
    b = B.T @ z[7:13]
    nb = float(np.linalg.norm(b))
    S = params.c * nb / z[6] + z[13] - 1.0
    delta = float(throttle(S, cfg))
    if nb < SINGULARITY_FLOOR:
        return ControlEval(FALLBACK_AXIS.copy(), delta, float(S), True)
    return ControlEval(-b / nb, delta, float(S))


def mee_hamiltonian(
    z: np.ndarray,
    params: CanonicalParams,
    cfg: SmoothingConfig,
    control_eval: Optional[ControlEval] = None,
) -> float:
    """H = (T/c)δ + λᵀ(A + B(T/m)δα̂) − λ_m(T/c)δ，可冻结控制"""
    z = _as_state(z)
    ctrl = control_eval or mee_control(z, params, cfg)
    A, B = drift_and_control_matrix(z[0:6])
    T, c = params.t_max, params.c
    x_dot = A + B @ ctrl.alpha_hat * (T * ctrl.delta / z[6])
    return float((T / c) * ctrl.delta * (1.0 - z[13]) + np.dot(z[7:13], x_dot))


def _as_state(z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.shape != (14,):
        raise ValueError(f"Augmented state must have 14 entries, got shape {z.shape}")
    return z


# ---------------------------------------------------------------------------
# 坐标转换
# ---------------------------------------------------------------------------


def coe_to_mee(a: float, e: float, i: float, raan: float, argp: float, nu: float) -> np.ndarray:
    """经典轨道根数 (a, e, i, Ω, ω, θ) -> (p, f, g, h, k, L)"""
    if e < 0:
        raise TrajectoryError(f"Eccentricity must be non-negative, got {e}")
    if not 0.0 <= i < math.pi:
        raise TrajectoryError(f"Inclination must lie in [0, π), got {i}")
    p = a * (1.0 - e * e)
    if not p > 0:
        raise TrajectoryError(f"a(1 - e²) must be positive, got {p}")
    tan_half = math.tan(0.5 * i)
    return np.array(
        [
            p,
            e * math.cos(argp + raan),
            e * math.sin(argp + raan),
            tan_half * math.cos(raan),
            tan_half * math.sin(raan),
            nu + argp + raan,
        ]
    )


def mee_to_coe(elements: Sequence[float]) -> np.ndarray:
    """仅支持椭圆轨道，角度归一化到 [0, 2π)"""
    p, f, g, h, k, L = (float(x) for x in elements)
    e = math.hypot(f, g)
    if e >= 1.0:
        raise TrajectoryError(f"Orbit is not elliptic (e={e})")
    a = p / (1.0 - e * e)
    i = 2.0 * math.atan(math.hypot(h, k))
    raan = math.atan2(k, h) if math.hypot(h, k) > 0 else 0.0
    lon_peri = math.atan2(g, f) if e > 0 else raan
    argp = lon_peri - raan
    nu = L - lon_peri
    return np.array([a, e, i, raan % TWO_PI, argp % TWO_PI, nu % TWO_PI])


def _equinoctial_frame(h: float, k: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    s2 = 1.0 + h * h + k * k
    f_hat = np.array([1.0 - k * k + h * h, 2.0 * k * h, -2.0 * k]) / s2
    g_hat = np.array([2.0 * k * h, 1.0 + k * k - h * h, 2.0 * h]) / s2
    w_hat = np.array([2.0 * k, -2.0 * h, 1.0 - k * k - h * h]) / s2
    return f_hat, g_hat, w_hat


def cartesian_to_mee(r: Sequence[float], v: Sequence[float], mu: float) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    v = np.asarray(v, dtype=float)
    r_norm = float(np.linalg.norm(r))
    if r_norm == 0.0:
        raise TrajectoryError("Position vector is zero")
    h_vec = np.cross(r, v)
    h_norm = float(np.linalg.norm(h_vec))
    if h_norm <= 1e-12 * r_norm * float(np.linalg.norm(v)) or h_norm == 0.0:
        raise TrajectoryError("Rectilinear orbit has no equinoctial representation")
    h_hat = h_vec / h_norm
    if h_hat[2] <= -1.0 + 1e-15:
        raise TrajectoryError("Retrograde equatorial orbit (i = π) is singular")

    p = h_norm**2 / mu
    k = h_hat[0] / (1.0 + h_hat[2])
    h = -h_hat[1] / (1.0 + h_hat[2])
    f_hat, g_hat, _ = _equinoctial_frame(h, k)
    e_vec = np.cross(v, h_vec) / mu - r / r_norm
    return np.array(
        [
            p,
            float(np.dot(e_vec, f_hat)),
            float(np.dot(e_vec, g_hat)),
            h,
            k,
            math.atan2(float(np.dot(r, g_hat)), float(np.dot(r, f_hat))),
        ]
    )


def mee_to_cartesian(elements: Sequence[float], mu: float) -> Tuple[np.ndarray, np.ndarray]:
    p, f, g, h, k, L = (float(x) for x in elements)
    if not p > 0:
        raise TrajectoryError(f"Semi-latus rectum must be positive, got p={p}")
    cosL, sinL = math.cos(L), math.sin(L)
    q = 1.0 + f * cosL + g * sinL
    if not q > 0:
        raise TrajectoryError(f"q must be positive, got {q}")
    f_hat, g_hat, _ = _equinoctial_frame(h, k)
    radius = p / q
    sqrt_mu_p = math.sqrt(mu / p)
    r = radius * (cosL * f_hat + sinL * g_hat)
    v = sqrt_mu_p * (-(sinL + g) * f_hat + (cosL + f) * g_hat)
    return r, v


def cartesian_to_coe(r: Sequence[float], v: Sequence[float], mu: float) -> np.ndarray:
    """(a, e, i, Ω, ω, θ)，赤道轨道取 Ω = 0，圆轨道取 ω = 0"""
    r = np.asarray(r, dtype=float)
    v = np.asarray(v, dtype=float)
    r_norm = float(np.linalg.norm(r))
    h_vec = np.cross(r, v)
    h_norm = float(np.linalg.norm(h_vec))
    if h_norm == 0.0:
        raise TrajectoryError("Rectilinear orbit has no classical elements")
    h_hat = h_vec / h_norm
    e_vec = np.cross(v, h_vec) / mu - r / r_norm
    e = float(np.linalg.norm(e_vec))
    if e >= 1.0:
        raise TrajectoryError(f"Orbit is not elliptic (e={e})")
    energy = 0.5 * float(np.dot(v, v)) - mu / r_norm
    a = -mu / (2.0 * energy)
    i = math.atan2(math.hypot(h_vec[0], h_vec[1]), h_vec[2])

    node = np.array([-h_vec[1], h_vec[0], 0.0])
    node_norm = float(np.linalg.norm(node))
    if node_norm > 1e-15 * h_norm:
        n_hat = node / node_norm
        raan = math.atan2(n_hat[1], n_hat[0])
    else:
        n_hat = np.array([1.0, 0.0, 0.0])
        raan = 0.0

    if e > 1e-15:
        e_hat = e_vec / e
        argp = math.atan2(float(np.dot(h_hat, np.cross(n_hat, e_hat))), float(np.dot(n_hat, e_hat)))
    else:
        e_hat = n_hat
        argp = 0.0
    nu = math.atan2(float(np.dot(h_hat, np.cross(e_hat, r))), float(np.dot(e_hat, r)))
    return np.array([a, e, i, raan % TWO_PI, argp % TWO_PI, nu % TWO_PI])


def rtn_to_inertial(r: Sequence[float], v: Sequence[float], vec: Sequence[float]) -> np.ndarray:
    """把径向-横向-法向分量转换到惯性系"""
    r = np.asarray(r, dtype=float)
    v = np.asarray(v, dtype=float)
    r_hat = r / np.linalg.norm(r)
    h_vec = np.cross(r, v)
    n_hat = h_vec / np.linalg.norm(h_vec)
    t_hat = np.cross(n_hat, r_hat)
    return np.column_stack([r_hat, t_hat, n_hat]) @ np.asarray(vec, dtype=float)


def unwrap_target_longitude(L_target: float, L0: float, n_rev: int) -> float:
    """目标真经度归一化到 [L0, L0 + 2π) 后再加 n_rev 圈"""
    if n_rev < 0:
        raise ValueError(f"n_rev must be non-negative, got {n_rev}")
    return L0 + (L_target - L0) % TWO_PI + TWO_PI * n_rev
