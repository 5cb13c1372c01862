"""
二体笛卡尔坐标下的状态-协态动力学。

增广状态 z (14) = [r (0:3), v (3:6), m (6), λ_r (7:10), λ_v (10:13), λ_m (13)]。
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from exceptions import SingularControlError, TrajectoryError
from smoothing import SmoothingConfig, throttle, throttle_derivative
from units import CanonicalParams

# ‖λ_v‖ 低于该值时推力方向无定义
SINGULARITY_FLOOR = 1e-12
FALLBACK_AXIS = np.array([1.0, 0.0, 0.0])


@dataclass(frozen=True)
class ControlEval:
    """某一时刻的极值控制：推力方向、平滑油门和开关函数"""

    alpha_hat: np.ndarray
    delta: float
    S: float
    degenerate: bool = False


def primer_control(
    lam_v: np.ndarray, m: float, lam_m: float, c: float, cfg: SmoothingConfig
) -> ControlEval:
    """α̂ = −λ_v/‖λ_v‖，S = c‖λ_v‖/m + λ_m − 1"""
    if not m > 0:
        raise TrajectoryError(f"Mass must be positive, got {m}")
    norm = float(np.linalg.norm(lam_v))
    S = c * norm / m + lam_m - 1.0
    if norm < SINGULARITY_FLOOR:
        return ControlEval(FALLBACK_AXIS.copy(), float(throttle(S, cfg)), float(S), True)
    return ControlEval(-lam_v / norm, float(throttle(S, cfg)), float(S))


def _unpack(z: np.ndarray):
    z = np.asarray(z, dtype=float)
    if z.shape != (14,):
        raise ValueError(f"Augmented state must have 14 entries, got shape {z.shape}")
    r, v, m = z[0:3], z[3:6], z[6]
    lam_r, lam_v, lam_m = z[7:10], z[10:13], z[13]
    r_norm = float(np.linalg.norm(r))
    if r_norm == 0.0:
        raise TrajectoryError("Position vector is zero (collision with central body)")
    if not m > 0:
        raise TrajectoryError(f"Mass must be positive, got {m}")
    return r, v, m, lam_r, lam_v, lam_m, r_norm


def control(z: np.ndarray, params: CanonicalParams, cfg: SmoothingConfig) -> ControlEval:
    z = np.asarray(z, dtype=float)
    return primer_control(z[10:13], z[6], z[13], params.c, cfg)


def rhs(z: np.ndarray, params: CanonicalParams, cfg: SmoothingConfig) -> np.ndarray:
    r, v, m, lam_r, lam_v, lam_m, r_norm = _unpack(z)
    ctrl = primer_control(lam_v, m, lam_m, params.c, cfg)
    mu, T = params.mu, params.t_max
    r3 = r_norm**3
    r5 = r_norm**5

    dz = np.empty(14)
    dz[0:3] = v
    dz[3:6] = -mu * r / r3 + (T / m) * ctrl.delta * ctrl.alpha_hat
    dz[6] = -(T / params.c) * ctrl.delta
    dz[7:10] = (mu / r3) * lam_v - (3.0 * mu * np.dot(r, lam_v) / r5) * r
    dz[10:13] = -lam_r
    dz[13] = -(T / m**2) * np.linalg.norm(lam_v) * ctrl.delta
    return dz


def fill_thrust_blocks(
    F: np.ndarray,
    m: float,
    lam_v: np.ndarray,
    lam_m: float,
    params: CanonicalParams,
    cfg: SmoothingConfig,
) -> None:
    """
    写入 ∂Γ/∂z 中与推力耦合的块（v̇、ṁ、λ̇_m 对 m、λ_v、λ_m 的偏导）。

    笛卡尔与 CR3BP 两种后端的主矢量控制律相同，共用这一部分。
    """
    lv = float(np.linalg.norm(lam_v))
    if lv < SINGULARITY_FLOOR:
        raise SingularControlError(f"‖λ_v‖ = {lv:.3e} is below the singularity floor")

    T, c = params.t_max, params.c
    eye = np.eye(3)
    u = lam_v / lv
    alpha = -u
    S = c * lv / m + lam_m - 1.0
    delta = float(throttle(S, cfg))
    d_delta = float(throttle_derivative(S, cfg))
    dS_dm = -c * lv / m**2
    dS_dlv = (c / m) * u

    # v̇
    F[3:6, 6] = -(T / m**2) * delta * alpha + (T / m) * d_delta * dS_dm * alpha
    F[3:6, 10:13] = (T / m) * (
        -delta * (eye - np.outer(u, u)) / lv + d_delta * np.outer(alpha, dS_dlv)
    )
    F[3:6, 13] = (T / m) * d_delta * alpha
    # ṁ
    F[6, 6] = -(T / c) * d_delta * dS_dm
    F[6, 10:13] = -(T / (m * lv)) * d_delta * lam_v
    F[6, 13] = -(T / c) * d_delta
    # λ̇_m = −(T/m²)‖λ_v‖δ
    F[13, 6] = 2.0 * T * lv * delta / m**3 - (T * lv / m**2) * d_delta * dS_dm
    F[13, 10:13] = -(T / m**2) * (delta * u + lv * d_delta * dS_dlv)
    F[13, 13] = -(T * lv / m**2) * d_delta


def rhs_jacobian(z: np.ndarray, params: CanonicalParams, cfg: SmoothingConfig) -> np.ndarray:
    """∂Γ/∂z，按 [r, v, m, λ_r, λ_v, λ_m] 分块"""
    r, v, m, lam_r, lam_v, lam_m, r_norm = _unpack(z)
    mu = params.mu
    eye = np.eye(3)
    r3, r5, r7 = r_norm**3, r_norm**5, r_norm**7
    r_dot_lv = float(np.dot(r, lam_v))

    F = np.zeros((14, 14))
    F[0:3, 3:6] = eye
    F[3:6, 0:3] = -(mu / r3) * eye + (3.0 * mu / r5) * np.outer(r, r)
    fill_thrust_blocks(F, m, lam_v, lam_m, params, cfg)
    # λ̇_r
    F[7:10, 0:3] = (
        -(3.0 * mu / r5) * (np.outer(lam_v, r) + r_dot_lv * eye + np.outer(r, lam_v))
        + (15.0 * mu * r_dot_lv / r7) * np.outer(r, r)
    )
    F[7:10, 10:13] = (mu / r3) * eye - (3.0 * mu / r5) * np.outer(r, r)
    # λ̇_v = −λ_r
    F[10:13, 7:10] = -eye
    return F


def hamiltonian(
    z: np.ndarray,
    params: CanonicalParams,
    cfg: SmoothingConfig,
    control_eval: Optional[ControlEval] = None,
) -> float:
    """
    H = (T/c)δ + λ_r·v + λ_v·(−μr/r³ + (T/m)δα̂) − λ_m(T/c)δ

    传入 control_eval 时控制保持冻结，用于对 H 做有限差分校验协态方程。
    """
    r, v, m, lam_r, lam_v, lam_m, r_norm = _unpack(z)
    ctrl = control_eval or primer_control(lam_v, m, lam_m, params.c, cfg)
    T, c = params.t_max, params.c
    f_v = -params.mu * r / r_norm**3 + (T / m) * ctrl.delta * ctrl.alpha_hat
    return float(
        (T / c) * ctrl.delta
        + np.dot(lam_r, v)
        + np.dot(lam_v, f_v)
        - lam_m * (T / c) * ctrl.delta
    )


def orbital_energy(z: np.ndarray, mu: float) -> float:
    z = np.asarray(z, dtype=float)
    return float(0.5 * np.dot(z[3:6], z[3:6]) - mu / np.linalg.norm(z[0:3]))
