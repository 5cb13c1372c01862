"""
自适应 Dormand-Prince 8(5,3) 积分，以及 14 + 196 = 210 维的 STM 增广积分。

使用 scipy.integrate.DOP853 的逐步接口，便于限制步数并在每步检查有限性。
"""

from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np
from scipy.integrate import DOP853, OdeSolution

from config import INTEGRATOR_ABS_TOL, INTEGRATOR_MAX_STEPS, INTEGRATOR_REL_TOL
from exceptions import IntegrationError

VectorField = Callable[[np.ndarray], np.ndarray]
JacobianField = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class IntegratorConfig:
    rel_tol: float = INTEGRATOR_REL_TOL
    abs_tol: float = INTEGRATOR_ABS_TOL
    max_steps: int = INTEGRATOR_MAX_STEPS
    initial_step: Optional[float] = None  # None 表示自动选取

    def __post_init__(self):
        if not self.rel_tol > 0 or not self.abs_tol > 0:
            raise ValueError(f"Tolerances must be positive (rel={self.rel_tol}, abs={self.abs_tol})")
        if self.max_steps <= 0:
            raise ValueError(f"max_steps must be positive, got {self.max_steps}")
        if self.initial_step is not None and not self.initial_step > 0:
            raise ValueError(f"initial_step must be positive, got {self.initial_step}")


@dataclass
class IntegrationResult:
    t0: float
    tf: float
    z0: np.ndarray
    z: np.ndarray
    n_steps: int
    solution: Optional[OdeSolution] = None

    def sample(self, times) -> np.ndarray:
        """稠密输出，返回形状 (len(times), n)"""
        times = np.asarray(times, dtype=float)
        if self.solution is None:
            if self.tf == self.t0:
                return np.tile(self.z0, (times.size, 1))
            raise ValueError("Dense output was not requested for this integration")
        return np.asarray(self.solution(times)).T


@dataclass
class StmResult:
    z: np.ndarray
    phi: np.ndarray  # Φ(tf, t0)，14×14
    n_steps: int
    trajectory: IntegrationResult


def integrate(
    rhs: VectorField,
    z0: np.ndarray,
    t0: float,
    tf: float,
    cfg: Optional[IntegratorConfig] = None,
    dense: bool = False,
) -> IntegrationResult:
    cfg = cfg or IntegratorConfig()
    z0 = np.array(z0, dtype=float)
    if tf == t0:
        return IntegrationResult(t0, tf, z0, z0.copy(), 0)
    if tf < t0:
        raise ValueError(f"Integration requires tf > t0 (t0={t0}, tf={tf})")
    if not np.all(np.isfinite(z0)):
        raise IntegrationError("Initial state contains non-finite values")

    solver = DOP853(
        lambda t, y: rhs(y),
        t0,
        z0,
        tf,
        rtol=cfg.rel_tol,
        atol=cfg.abs_tol,
        first_step=cfg.initial_step,
    )
    times: List[float] = [t0]
    interpolants = []
    n_steps = 0
    while solver.status == "running":
        if n_steps >= cfg.max_steps:
            raise IntegrationError(f"Step budget of {cfg.max_steps} exhausted at t={solver.t}")
        message = solver.step()
        n_steps += 1
        if solver.status == "failed":
            raise IntegrationError(f"Integration failed at t={solver.t}: {message}")
        if not np.all(np.isfinite(solver.y)):
            raise IntegrationError(f"Non-finite state at t={solver.t}")
        if dense:
            times.append(solver.t)
            interpolants.append(solver.dense_output())

    solution = OdeSolution(times, interpolants) if dense else None
    return IntegrationResult(t0, tf, z0, solver.y.copy(), n_steps, solution)


def integrate_with_stm(
    rhs: VectorField,
    rhs_jacobian: JacobianField,
    z0: np.ndarray,
    t0: float,
    tf: float,
    cfg: Optional[IntegratorConfig] = None,
    dense: bool = False,
) -> StmResult:
    """Φ̇ = (∂Γ/∂z)Φ，Φ(t0, t0) = I；Φ 按行展开接在状态之后，共用步长控制"""
    z0 = np.asarray(z0, dtype=float)
    n = z0.size

    def augmented(y: np.ndarray) -> np.ndarray:
        z = y[:n]
        phi = y[n:].reshape(n, n)
        return np.concatenate([rhs(z), (rhs_jacobian(z) @ phi).ravel()])

    y0 = np.concatenate([z0, np.eye(n).ravel()])
    result = integrate(augmented, y0, t0, tf, cfg, dense)
    return StmResult(
        z=result.z[:n].copy(),
        phi=result.z[n:].reshape(n, n).copy(),
        n_steps=result.n_steps,
        trajectory=result,
    )
