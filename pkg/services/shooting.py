"""
单次打靶：终端残差、基于 STM 链式法则的残差雅可比、ρ 延拓求解与解的采样。
"""

import logging
import math
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional

import numpy as np

from config import DAY_S, RHO_FACTOR, RHO_FINAL, RHO_INIT
from exceptions import IntegrationError, TrajectoryError
from services.dynamics import cartesian, cr3bp, mee
from services.logging_mixin import LoggingMixin
from services.numerics.integrator import (
    IntegrationResult,
    IntegratorConfig,
    integrate,
    integrate_with_stm,
)
from services.numerics.root_finder import (
    JacobianMode,
    RootReport,
    RootSolveConfig,
    TerminationReason,
    solve_root,
)
from smoothing import SmoothingConfig
from units import CanonicalParams, CanonicalScale

logger = logging.getLogger(__name__)

# ψ 选取 z(t_f) 的前六个分量和 λ_m；η 注入 z(t_0) 的协态槽位
TERMINAL_ROWS = [0, 1, 2, 3, 4, 5, 13]
COSTATE_COLS = list(range(7, 14))

_NUMERIC_FAILURES = (
    TrajectoryError,
    IntegrationError,
    FloatingPointError,
    OverflowError,
    ZeroDivisionError,
)


class Backend(str, Enum):
    CARTESIAN = "cartesian"
    MEE = "mee"
    CR3BP = "cr3bp"


@dataclass(frozen=True)
class DynamicsBackend:
    rhs: Callable
    rhs_jacobian: Callable
    control: Callable
    hamiltonian: Callable


BACKENDS: Dict[Backend, DynamicsBackend] = {
    Backend.CARTESIAN: DynamicsBackend(
        cartesian.rhs, cartesian.rhs_jacobian, cartesian.control, cartesian.hamiltonian
    ),
    Backend.MEE: DynamicsBackend(
        mee.mee_rhs, mee.mee_rhs_jacobian, mee.mee_control, mee.mee_hamiltonian
    ),
    Backend.CR3BP: DynamicsBackend(
        cr3bp.cr3bp_rhs, cr3bp.cr3bp_rhs_jacobian, cr3bp.cr3bp_switching, cr3bp.cr3bp_hamiltonian
    ),
}


@dataclass(frozen=True)
class ShootingProblem:
    """
    规范单位下的两点边值问题。

    initial_state 为 [x0 (6), m0]；target 为终端 6 维状态。MEE 后端的 target[5]
    是未展开的真经度，实际约束为 terminal_target() 给出的 L_target + 2π·n_rev。
    """

    backend: Backend
    params: CanonicalParams
    scale: CanonicalScale
    initial_state: np.ndarray
    target: np.ndarray
    tof: float
    smoothing: SmoothingConfig
    use_stm: bool = True
    n_rev: int = 0
    name: str = ""
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)

    def __post_init__(self):
        object.__setattr__(self, "backend", Backend(self.backend))
        object.__setattr__(self, "initial_state", np.asarray(self.initial_state, dtype=float))
        object.__setattr__(self, "target", np.asarray(self.target, dtype=float))
        if not self.tof > 0:
            raise ValueError(f"Time of flight must be positive, got {self.tof}")
        if self.initial_state.shape != (7,):
            raise ValueError(f"initial_state must be [x0 (6), m0], got shape {self.initial_state.shape}")
        if self.target.shape != (6,):
            raise ValueError(f"target must have 6 entries, got shape {self.target.shape}")
        if self.n_rev < 0:
            raise ValueError(f"n_rev must be non-negative, got {self.n_rev}")

    @property
    def dynamics(self) -> DynamicsBackend:
        return BACKENDS[self.backend]

    def smoothing_at(self, rho: Optional[float]) -> SmoothingConfig:
        return self.smoothing if rho is None else self.smoothing.with_rho(rho)

    def terminal_target(self) -> np.ndarray:
        if self.backend is not Backend.MEE:
            return self.target
        target = self.target.copy()
        target[5] = mee.unwrap_target_longitude(self.target[5], self.initial_state[5], self.n_rev)
        return target

    def initial_augmented_state(self, eta0: np.ndarray) -> np.ndarray:
        eta0 = np.asarray(eta0, dtype=float)
        if eta0.shape != (7,):
            raise ValueError(f"Costate guess must have 7 entries, got shape {eta0.shape}")
        return np.concatenate([self.initial_state, eta0])


def _vector_fields(problem: ShootingProblem, rho: Optional[float]):
    cfg = problem.smoothing_at(rho)
    dyn = problem.dynamics
    params = problem.params
    return (lambda z: dyn.rhs(z, params, cfg)), (lambda z: dyn.rhs_jacobian(z, params, cfg))


def propagate(
    problem: ShootingProblem, eta0: np.ndarray, rho: Optional[float] = None, dense: bool = False
) -> IntegrationResult:
    rhs, _ = _vector_fields(problem, rho)
    z0 = problem.initial_augmented_state(eta0)
    return integrate(rhs, z0, 0.0, problem.tof, problem.integrator, dense=dense)


def terminal_residual(problem: ShootingProblem, zf: np.ndarray) -> np.ndarray:
    return np.concatenate([zf[0:6] - problem.terminal_target(), [zf[13]]])


def residual(problem: ShootingProblem, eta0: np.ndarray, rho: Optional[float] = None) -> np.ndarray:
    """ψ(η; ρ)；数值失败时返回全 NaN，由求根器视为拒绝点"""
    try:
        zf = propagate(problem, eta0, rho).z
    except _NUMERIC_FAILURES as e:
        logger.debug(f"残差计算失败 ({problem.name}, rho={rho}): {e}")
        return np.full(7, np.nan)
    return terminal_residual(problem, zf)


def residual_jacobian(
    problem: ShootingProblem, eta0: np.ndarray, rho: Optional[float] = None
) -> np.ndarray:
    """∂ψ/∂η = Φ(t_f, t_0) 的 TERMINAL_ROWS × COSTATE_COLS 子块"""
    rhs, jac = _vector_fields(problem, rho)
    z0 = problem.initial_augmented_state(eta0)
    stm = integrate_with_stm(rhs, jac, z0, 0.0, problem.tof, problem.integrator)
    return stm.phi[np.ix_(TERMINAL_ROWS, COSTATE_COLS)]


class ShootingEvaluator:
    """
    某一 ρ 下的残差与雅可比求值器。

    STM 积分同时给出终端状态，缓存后同一点的残差不再重复积分。
    """

    _CACHE_SIZE = 8

    def __init__(self, problem: ShootingProblem, rho: float):
        self.problem = problem
        self.rho = rho
        self._terminal: Dict[bytes, np.ndarray] = {}

    def _remember(self, eta0: np.ndarray, zf: np.ndarray) -> None:
        if len(self._terminal) >= self._CACHE_SIZE:
            self._terminal.pop(next(iter(self._terminal)))
        self._terminal[np.asarray(eta0, dtype=float).tobytes()] = zf

    def terminal_state(self, eta0: np.ndarray) -> np.ndarray:
        key = np.asarray(eta0, dtype=float).tobytes()
        if key not in self._terminal:
            self._remember(eta0, propagate(self.problem, eta0, self.rho).z)
        return self._terminal[key]

    def residual(self, eta0: np.ndarray) -> np.ndarray:
        try:
            zf = self.terminal_state(eta0)
        except _NUMERIC_FAILURES as e:
            logger.debug(f"残差计算失败 ({self.problem.name}, rho={self.rho}): {e}")
            return np.full(7, np.nan)
        return terminal_residual(self.problem, zf)

    def jacobian(self, eta0: np.ndarray) -> np.ndarray:
        rhs, jac = _vector_fields(self.problem, self.rho)
        try:
            z0 = self.problem.initial_augmented_state(eta0)
            stm = integrate_with_stm(rhs, jac, z0, 0.0, self.problem.tof, self.problem.integrator)
        except _NUMERIC_FAILURES as e:
            logger.debug(f"STM 积分失败 ({self.problem.name}, rho={self.rho}): {e}")
            return np.full((7, 7), np.nan)
        self._remember(eta0, stm.z)
        return stm.phi[np.ix_(TERMINAL_ROWS, COSTATE_COLS)]

    def final_mass_kg(self, eta0: np.ndarray) -> float:
        return float(self.terminal_state(eta0)[6] * self.problem.scale.mass_unit)


@dataclass(frozen=True)
class ContinuationSchedule:
    rho_init: float = RHO_INIT
    rho_factor: float = RHO_FACTOR
    rho_final: float = RHO_FINAL

    def __post_init__(self):
        if not 0 < self.rho_final <= self.rho_init:
            raise ValueError(
                f"Need 0 < rho_final <= rho_init (got {self.rho_final}, {self.rho_init})"
            )
        if not 0 < self.rho_factor < 1:
            raise ValueError(f"rho_factor must lie in (0, 1), got {self.rho_factor}")

    def ladder(self) -> List[float]:
        """ρ 序列，末项恰为 rho_final"""
        limit = self.rho_final * (1.0 + 1e-9)
        rhos = [self.rho_init]
        while rhos[-1] > limit:
            nxt = rhos[-1] * self.rho_factor
            rhos.append(nxt if nxt > limit else self.rho_final)
        return rhos


@dataclass
class StageReport:
    rho: float
    converged: bool
    iterations: int
    nfev: int
    njev: int
    residual_norm: float
    termination: TerminationReason
    final_mass_kg: Optional[float] = None

    @classmethod
    def from_root(cls, rho: float, report: RootReport, final_mass_kg: Optional[float]):
        return cls(
            rho=rho,
            converged=report.converged,
            iterations=report.iterations,
            nfev=report.nfev,
            njev=report.njev,
            residual_norm=report.residual_norm,
            termination=report.termination,
            final_mass_kg=final_mass_kg,
        )


@dataclass
class SolveReport:
    problem: str
    coords: str
    smoothing: str
    use_stm: bool
    n_rev: int
    eta0_initial: np.ndarray
    eta0_solution: np.ndarray
    converged: bool
    final_mass_kg: Optional[float]
    residual_inf_norm: float
    stages: List[StageReport]
    wall_time: float
    seed: Optional[int] = None
    failed_stage: Optional[int] = None

    @property
    def rho_ladder(self) -> List[float]:
        return [stage.rho for stage in self.stages]

    @property
    def rho_final(self) -> Optional[float]:
        return self.stages[-1].rho if self.stages else None

    @property
    def lam_m0(self) -> float:
        return float(self.eta0_solution[6])

    @property
    def termination(self) -> str:
        return self.stages[-1].termination.value if self.stages else TerminationReason.NON_FINITE.value

    def to_dict(self, include_timing: bool = False) -> Dict:
        data = {
            "problem": self.problem,
            "coords": self.coords,
            "smoothing": self.smoothing,
            "stm": self.use_stm,
            "n_rev": self.n_rev,
            "rho_final": self.rho_final,
            "eta0": [float(x) for x in self.eta0_solution],
            "final_mass_kg": self.final_mass_kg,
            "residual_inf_norm": self.residual_inf_norm,
            "converged": self.converged,
            "failed_stage": self.failed_stage,
            "rho_ladder": [
                {
                    "rho": stage.rho,
                    "iterations": stage.iterations,
                    "residual": stage.residual_norm,
                    "final_mass_kg": stage.final_mass_kg,
                    "termination": stage.termination.value,
                }
                for stage in self.stages
            ],
            "seed": self.seed,
        }
        if include_timing:
            data["wall_time_s"] = self.wall_time
        return data


class ContinuationSolver(LoggingMixin):
    """ρ 延拓求解器：从 rho_init 逐级缩小到 rho_final，每级以上一级的解热启动"""

    def __init__(self, root_cfg: Optional[RootSolveConfig] = None, debug: bool = False):
        self._root_cfg = root_cfg or RootSolveConfig()
        self._debug = debug
        self._setup_logging()

    def _root_config(self, problem: ShootingProblem) -> RootSolveConfig:
        mode = JacobianMode.ANALYTIC if problem.use_stm else JacobianMode.FINITE_DIFFERENCE
        cfg = self._root_cfg
        return RootSolveConfig(
            max_iters=cfg.max_iters,
            residual_tol=cfg.residual_tol,
            jacobian_mode=mode,
            fd_step=cfg.fd_step,
            xtol=cfg.xtol,
        )

    def solve(
        self,
        problem: ShootingProblem,
        eta0: np.ndarray,
        schedule: Optional[ContinuationSchedule] = None,
        seed: Optional[int] = None,
    ) -> SolveReport:
        schedule = schedule or ContinuationSchedule()
        root_cfg = self._root_config(problem)
        eta_initial = np.array(eta0, dtype=float)
        eta = eta_initial.copy()
        stages: List[StageReport] = []
        failed_stage = None
        start = time.perf_counter()

        self._log(
            f"开始求解 {problem.name} ({problem.backend.value}, "
            f"{problem.smoothing.kind.value}, stm={problem.use_stm})",
            level="detail",
        )
        for index, rho in enumerate(schedule.ladder()):
            evaluator = ShootingEvaluator(problem, rho)
            jacobian_fn = evaluator.jacobian if problem.use_stm else None
            try:
                x, report = solve_root(evaluator.residual, jacobian_fn, eta, root_cfg)
            except Exception as e:
                self._log(f"rho={rho:.1e} 求根异常: {e}", level="warning")
                x = eta
                report = RootReport(
                    False, TerminationReason.NON_FINITE, 0, 0, 0, float("nan"), str(e)
                )

            final_mass = None
            if report.converged:
                try:
                    final_mass = evaluator.final_mass_kg(x)
                except _NUMERIC_FAILURES as e:
                    self._log(f"终端质量计算失败: {e}", level="warning")
            stages.append(StageReport.from_root(rho, report, final_mass))
            self._log(
                f"rho={rho:.1e}: {report.termination.value}, iterations={report.iterations}, "
                f"|psi|={report.residual_norm:.3e}",
                level="debug",
            )
            if not report.converged:
                failed_stage = index
                break
            eta = x

        converged = failed_stage is None
        last = stages[-1]
        return SolveReport(
            problem=problem.name,
            coords=problem.backend.value,
            smoothing=problem.smoothing.kind.value,
            use_stm=problem.use_stm,
            n_rev=problem.n_rev,
            eta0_initial=eta_initial,
            eta0_solution=eta,
            converged=converged,
            final_mass_kg=last.final_mass_kg if converged else None,
            residual_inf_norm=last.residual_norm,
            stages=stages,
            wall_time=time.perf_counter() - start,
            seed=seed,
            failed_stage=failed_stage,
        )


def solve_with_continuation(
    problem: ShootingProblem,
    eta0: np.ndarray,
    schedule: Optional[ContinuationSchedule] = None,
    root_cfg: Optional[RootSolveConfig] = None,
    seed: Optional[int] = None,
) -> SolveReport:
    return ContinuationSolver(root_cfg).solve(problem, eta0, schedule, seed)


SAMPLE_COLUMNS = (
    ["t", "x", "y", "z", "vx", "vy", "vz", "m"]
    + [f"lam{i}" for i in range(1, 7)]
    + ["lam_m", "alpha_1", "alpha_2", "alpha_3", "H", "S", "delta"]
)


@dataclass
class SampledTrajectory:
    columns: List[str]
    rows: np.ndarray

    def column(self, name: str) -> np.ndarray:
        return self.rows[:, self.columns.index(name)]

    def to_records(self) -> List[Dict[str, float]]:
        return [dict(zip(self.columns, (float(v) for v in row))) for row in self.rows]


def _physical_cartesian(problem: ShootingProblem, z: np.ndarray):
    """返回 (r km, v km/s)，MEE 先转换为笛卡尔坐标"""
    if problem.backend is Backend.MEE:
        r, v = mee.mee_to_cartesian(z[0:6], problem.scale.mu_canonical)
    else:
        r, v = z[0:3], z[3:6]
    return r * problem.scale.length_unit, v * problem.scale.velocity_unit


def sample_solution(
    problem: ShootingProblem,
    eta0: np.ndarray,
    rho: Optional[float] = None,
    n_points: int = 1000,
) -> SampledTrajectory:
    """在 [0, tof] 上均匀取 n_points 个稠密输出点，时间单位为天，状态为物理单位"""
    if n_points < 2:
        raise ValueError(f"n_points must be at least 2, got {n_points}")
    cfg = problem.smoothing_at(rho)
    dyn = problem.dynamics
    trajectory = propagate(problem, eta0, rho, dense=True)
    times = np.linspace(0.0, problem.tof, n_points)
    states = trajectory.sample(times)

    rows = np.empty((n_points, len(SAMPLE_COLUMNS)))
    for i, (t, z) in enumerate(zip(times, states)):
        ctrl = dyn.control(z, problem.params, cfg)
        r, v = _physical_cartesian(problem, z)
        alpha = ctrl.alpha_hat
        if problem.backend is Backend.MEE:
            alpha = mee.rtn_to_inertial(r, v, alpha)
        rows[i, 0] = t * problem.scale.time_unit / DAY_S
        rows[i, 1:4] = r
        rows[i, 4:7] = v
        rows[i, 7] = z[6] * problem.scale.mass_unit
        rows[i, 8:15] = z[7:14]
        rows[i, 15:18] = alpha
        rows[i, 18] = dyn.hamiltonian(z, problem.params, cfg)
        rows[i, 19] = ctrl.S
        rows[i, 20] = ctrl.delta
    return SampledTrajectory(list(SAMPLE_COLUMNS), rows)


def revolutions_swept(samples: SampledTrajectory) -> float:
    """按展开后的 atan2(y, x) 累计转过的圈数"""
    theta = np.unwrap(np.arctan2(samples.column("y"), samples.column("x")))
    return float((theta[-1] - theta[0]) / (2.0 * math.pi))
