"""
Powell 混合狗腿法求解非线性方程组 F(x) = 0。

核心迭代由 scipy.optimize.root(method="hybr")（MINPACK hybrd/hybrj）完成：
信赖域内 Cauchy 步与 Newton 步插值，雅可比在完整重算之间做 Broyden 秩一更新。
本模块负责雅可比来源（解析或中心差分）、非有限残差的处理与终止原因的归类。
"""

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.optimize import root

from config import ROOT_MAX_ITERS, ROOT_RESIDUAL_TOL, ROOT_XTOL

ResidualFn = Callable[[np.ndarray], np.ndarray]
JacobianFn = Callable[[np.ndarray], np.ndarray]

DEFAULT_FD_STEP = float(np.sqrt(np.finfo(float).eps))
# 非有限残差替换为该量级的常向量，使信赖域拒绝该试探点
PENALTY_SCALE = 1e8


class JacobianMode(str, Enum):
    ANALYTIC = "analytic"
    FINITE_DIFFERENCE = "fd"


class TerminationReason(str, Enum):
    CONVERGED = "converged"
    MAX_ITERS = "max_iters"
    TRUST_REGION_COLLAPSE = "trust_region_collapse"
    STALLED = "stalled"
    NON_FINITE = "non_finite"


@dataclass(frozen=True)
class RootSolveConfig:
    max_iters: int = ROOT_MAX_ITERS
    residual_tol: float = ROOT_RESIDUAL_TOL
    jacobian_mode: JacobianMode = JacobianMode.ANALYTIC
    fd_step: float = DEFAULT_FD_STEP
    xtol: float = ROOT_XTOL

    def __post_init__(self):
        if not self.residual_tol > 0:
            raise ValueError(f"residual_tol must be positive, got {self.residual_tol}")
        if self.max_iters <= 0:
            raise ValueError(f"max_iters must be positive, got {self.max_iters}")
        if not self.fd_step > 0 or not self.xtol > 0:
            raise ValueError("fd_step and xtol must be positive")
        object.__setattr__(self, "jacobian_mode", JacobianMode(self.jacobian_mode))


@dataclass
class RootReport:
    converged: bool
    termination: TerminationReason
    iterations: int
    nfev: int
    njev: int
    residual_norm: float
    message: str = ""


def finite_difference_jacobian(
    residual_fn: ResidualFn, x: np.ndarray, fd_step: float = DEFAULT_FD_STEP
) -> np.ndarray:
    """中心差分，第 i 列步长为 fd_step * max(1, |x_i|)"""
    x = np.asarray(x, dtype=float)
    columns = []
    for i in range(x.size):
        h = fd_step * max(1.0, abs(x[i]))
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        columns.append((np.asarray(residual_fn(xp)) - np.asarray(residual_fn(xm))) / (2.0 * h))
    return np.column_stack(columns)


def _inf_norm(f: np.ndarray) -> float:
    return float(np.max(np.abs(f))) if f.size else 0.0


def solve_root(
    residual_fn: ResidualFn,
    jacobian_fn: Optional[JacobianFn],
    x0: np.ndarray,
    cfg: Optional[RootSolveConfig] = None,
) -> Tuple[np.ndarray, RootReport]:
    cfg = cfg or RootSolveConfig()
    x0 = np.array(x0, dtype=float)
    counts = {"nfev": 0, "njev": 0}

    def evaluate(x: np.ndarray) -> np.ndarray:
        counts["nfev"] += 1
        return np.asarray(residual_fn(x), dtype=float)

    f0 = evaluate(x0)
    if not np.all(np.isfinite(f0)):
        return x0, RootReport(
            False, TerminationReason.NON_FINITE, 0, counts["nfev"], 0, float("nan"),
            "Residual is non-finite at the initial guess",
        )
    norm0 = _inf_norm(f0)
    if norm0 < cfg.residual_tol:
        return x0, RootReport(True, TerminationReason.CONVERGED, 0, counts["nfev"], 0, norm0)

    penalty = PENALTY_SCALE * max(1.0, norm0)

    def guarded(x: np.ndarray) -> np.ndarray:
        f = evaluate(x)
        if not np.all(np.isfinite(f)):
            return np.full_like(f0, penalty)
        return f

    def jacobian(x: np.ndarray) -> np.ndarray:
        counts["njev"] += 1
        if cfg.jacobian_mode is JacobianMode.ANALYTIC and jacobian_fn is not None:
            jac = np.asarray(jacobian_fn(x), dtype=float)
            if np.all(np.isfinite(jac)):
                return jac
        jac = finite_difference_jacobian(guarded, x, cfg.fd_step)
        return np.nan_to_num(jac, nan=0.0, posinf=penalty, neginf=-penalty)

    sol = root(
        guarded,
        x0,
        jac=jacobian,
        method="hybr",
        options=dict(xtol=cfg.xtol, maxfev=cfg.max_iters),
    )
    x = np.asarray(sol.x, dtype=float)
    f = np.asarray(sol.fun, dtype=float)
    norm = _inf_norm(f)
    iterations = int(sol.nfev)

    if not np.all(np.isfinite(f)) or norm >= penalty:
        termination = TerminationReason.NON_FINITE
    elif norm < cfg.residual_tol:
        termination = TerminationReason.CONVERGED
    elif sol.status == 2:
        termination = TerminationReason.MAX_ITERS
    elif sol.status in (3, 4, 5):
        termination = TerminationReason.TRUST_REGION_COLLAPSE
    else:
        termination = TerminationReason.STALLED

    return x, RootReport(
        converged=termination is TerminationReason.CONVERGED,
        termination=termination,
        iterations=iterations,
        nfev=counts["nfev"],
        njev=counts["njev"],
        residual_norm=norm,
        message=str(sol.message),
    )
