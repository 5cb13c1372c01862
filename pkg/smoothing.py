"""
油门平滑函数族及其对开关函数 S 的导数。

两种平滑都把 bang-bang 油门嵌入到以 ρ 为参数的光滑曲线族中：
    tanh: δ = 0.5 [1 + tanh(S/ρ)]
    L2:   δ = 0.5 [1 + S / sqrt(S² + ρ²)]
"""

from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

# |S/ρ| 超过该值时 tanh 平滑直接饱和为 0 或 1
TANH_SATURATION = 40.0


class SmoothingKind(str, Enum):
    HYPERBOLIC_TANGENT = "tanh"
    L2_NORM = "l2"


@dataclass(frozen=True)
class SmoothingConfig:
    kind: SmoothingKind
    rho: float

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError(f"Smoothing parameter rho must be positive, got {self.rho}")
        object.__setattr__(self, "kind", SmoothingKind(self.kind))

    def with_rho(self, rho: float) -> "SmoothingConfig":
        return replace(self, rho=rho)


def throttle(S, cfg: SmoothingConfig):
    """平滑油门 δ(S; ρ) ∈ (0, 1)，接受标量或数组"""
    S = np.asarray(S, dtype=float)
    if cfg.kind is SmoothingKind.HYPERBOLIC_TANGENT:
        x = S / cfg.rho
        delta = np.where(
            x > TANH_SATURATION,
            1.0,
            np.where(x < -TANH_SATURATION, 0.0, 0.5 * (1.0 + np.tanh(x))),
        )
    else:
        delta = 0.5 * (1.0 + S / np.hypot(S, cfg.rho))
    return delta[()] if delta.ndim == 0 else delta


def throttle_derivative(S, cfg: SmoothingConfig):
    """dδ/dS，在 S = 0 处取最大值 0.5/ρ"""
    S = np.asarray(S, dtype=float)
    if cfg.kind is SmoothingKind.HYPERBOLIC_TANGENT:
        # sech²(x) = 4 e^{-2|x|} / (1 + e^{-2|x|})²，大参数下不溢出
        e = np.exp(-2.0 * np.abs(S / cfg.rho))
        deriv = (0.5 / cfg.rho) * 4.0 * e / (1.0 + e) ** 2
    else:
        hyp = np.hypot(S, cfg.rho)
        deriv = 0.5 * (cfg.rho / hyp) ** 2 / hyp
    return deriv[()] if deriv.ndim == 0 else deriv


def hard_throttle(S):
    """ρ→0 极限下的 bang-bang 油门，S = 0 记为 1"""
    S = np.asarray(S, dtype=float)
    delta = np.where(S >= 0.0, 1.0, 0.0)
    return delta[()] if delta.ndim == 0 else delta
