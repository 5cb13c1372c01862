"""
规范单位制与航天器参数。

所有边界数据在进入数值计算之前都通过这里转换为无量纲形式。
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from config import AU_KM, G0_KM_S2, MU_SUN_KM3_S2, TU_S


@dataclass(frozen=True)
class CanonicalScale:
    """规范单位：LU (km), TU (s), MU (kg)"""

    length_unit: float
    time_unit: float
    mass_unit: float
    mu_canonical: float
    mu_body: float

    def __post_init__(self):
        if self.length_unit <= 0 or self.time_unit <= 0 or self.mass_unit <= 0:
            raise ValueError(
                f"Scale units must be positive: LU={self.length_unit}, "
                f"TU={self.time_unit}, MU={self.mass_unit}"
            )

    @property
    def velocity_unit(self) -> float:
        """km/s per LU/TU"""
        return self.length_unit / self.time_unit

    @property
    def acceleration_unit(self) -> float:
        """km/s^2 per LU/TU^2"""
        return self.length_unit / self.time_unit**2

    def recomputed_mu(self) -> float:
        return self.mu_body * self.time_unit**2 / self.length_unit**3


@dataclass(frozen=True)
class SpacecraftParams:
    """航天器物理参数（有量纲）"""

    m0: float  # kg
    isp: float  # s
    t_max: float  # N
    mu_body: float  # km^3/s^2

    def __post_init__(self):
        if self.m0 <= 0 or self.isp <= 0:
            raise ValueError(f"m0 and isp must be positive (m0={self.m0}, isp={self.isp})")
        if self.t_max < 0:
            raise ValueError(f"t_max must be non-negative, got {self.t_max}")

    @property
    def c(self) -> float:
        """有效排气速度 (km/s)"""
        return self.isp * G0_KM_S2

    def to_canonical(self, scale: CanonicalScale, mu: Optional[float] = None) -> "CanonicalParams":
        # N -> kN = kg*km/s^2
        thrust_accel = self.t_max * 1e-3 / scale.mass_unit
        return CanonicalParams(
            t_max=thrust_accel / scale.acceleration_unit,
            c=self.c / scale.velocity_unit,
            mu=scale.mu_canonical if mu is None else mu,
        )


@dataclass(frozen=True)
class CanonicalParams:
    """
    动力学右端函数使用的无量纲参数。

    mu 对二体后端是引力常数，对 CR3BP 后端是质量比。
    """

    t_max: float
    c: float
    mu: float

    def __post_init__(self):
        if self.c <= 0:
            raise ValueError(f"Exhaust velocity must be positive, got {self.c}")
        if self.t_max < 0:
            raise ValueError(f"Thrust must be non-negative, got {self.t_max}")


def make_heliocentric_scale(mass_unit: float = 1.0, mu_body: float = MU_SUN_KM3_S2) -> CanonicalScale:
    """日心规范单位：LU = 1.496e8 km, TU = 3.1536e7 s"""
    return CanonicalScale(
        length_unit=AU_KM,
        time_unit=TU_S,
        mass_unit=mass_unit,
        mu_canonical=mu_body * TU_S**2 / AU_KM**3,
        mu_body=mu_body,
    )


def make_mu_one_scale(mu_body: float, length_unit: float, mass_unit: float = 1.0) -> CanonicalScale:
    """μ = 1 的规范单位，MEE 动力学的 A/B 矩阵要求此缩放"""
    if mu_body <= 0 or length_unit <= 0:
        raise ValueError(
            f"mu_body and length_unit must be positive (mu={mu_body}, LU={length_unit})"
        )
    return CanonicalScale(
        length_unit=length_unit,
        time_unit=math.sqrt(length_unit**3 / mu_body),
        mass_unit=mass_unit,
        mu_canonical=1.0,
        mu_body=mu_body,
    )


def _scale_vector(state: np.ndarray, scale: CanonicalScale) -> np.ndarray:
    state = np.asarray(state, dtype=float)
    if state.shape not in ((6,), (7,)):
        raise ValueError(f"Expected a 6- or 7-vector [r, v(, m)], got shape {state.shape}")
    factors = np.array([scale.length_unit] * 3 + [scale.velocity_unit] * 3 + [scale.mass_unit])
    return factors[: state.shape[0]]


def nondimensionalize(state: np.ndarray, scale: CanonicalScale) -> np.ndarray:
    """[r (km), v (km/s), 可选 m (kg)] -> 规范单位"""
    return np.asarray(state, dtype=float) / _scale_vector(state, scale)


def redimensionalize(state: np.ndarray, scale: CanonicalScale) -> np.ndarray:
    """nondimensionalize 的逆变换"""
    return np.asarray(state, dtype=float) * _scale_vector(state, scale)
