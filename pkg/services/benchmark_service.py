"""
基准问题（地球-火星、地球-Dionysus）的构建与蒙特卡洛收敛性对比。
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from config import (
    AU_KM,
    DAY_S,
    EARTH_MOON_LU_KM,
    EARTH_MOON_MU,
    MAX_THREADS,
    MU_EARTH_MOON_KM3_S2,
    RHO_INIT,
    load_benchmark_catalog,
)
from services.dynamics.mee import cartesian_to_mee
from services.logging_mixin import LoggingMixin
from services.numerics.integrator import IntegratorConfig
from services.numerics.root_finder import RootSolveConfig
from services.shooting import (
    Backend,
    ContinuationSchedule,
    ContinuationSolver,
    SampledTrajectory,
    ShootingProblem,
    SolveReport,
    revolutions_swept,
    sample_solution,
)
from smoothing import SmoothingConfig, SmoothingKind
from units import (
    SpacecraftParams,
    make_heliocentric_scale,
    make_mu_one_scale,
    nondimensionalize,
)

SMOOTHING_LABELS = {
    SmoothingKind.HYPERBOLIC_TANGENT: "Hyperbolic Tangent",
    SmoothingKind.L2_NORM: "L2",
}
COORD_LABELS = {Backend.CARTESIAN: "Cartesian", Backend.MEE: "MEE", Backend.CR3BP: "CR3BP"}

# 行顺序：坐标 > 平滑函数 > STM
CONFIG_MATRIX: List[Tuple[Backend, SmoothingKind, bool]] = [
    (coords, kind, stm)
    for coords in (Backend.CARTESIAN, Backend.MEE)
    for kind in (SmoothingKind.HYPERBOLIC_TANGENT, SmoothingKind.L2_NORM)
    for stm in (True, False)
]

REVOLUTION_SAMPLES = 2000


@dataclass(frozen=True)
class BenchmarkProblem:
    """基准问题的物理参数与边界条件（km, km/s, kg, s, N）"""

    problem_id: str
    name: Dict[str, str]
    mu_km3_s2: float
    m0_kg: float
    isp_s: float
    t_max_n: float
    r0_km: Tuple[float, ...]
    v0_km_s: Tuple[float, ...]
    rf_km: Tuple[float, ...]
    vf_km_s: Tuple[float, ...]
    tof_days: float
    n_rev: int = 0
    reference_final_mass_kg: Optional[float] = None

    @classmethod
    def from_catalog(cls, entry: Dict) -> "BenchmarkProblem":
        return cls(
            problem_id=entry["problem_id"],
            name=dict(entry.get("name", {})),
            mu_km3_s2=float(entry["mu_km3_s2"]),
            m0_kg=float(entry["m0_kg"]),
            isp_s=float(entry["isp_s"]),
            t_max_n=float(entry["t_max_n"]),
            r0_km=tuple(entry["r0_km"]),
            v0_km_s=tuple(entry["v0_km_s"]),
            rf_km=tuple(entry["rf_km"]),
            vf_km_s=tuple(entry["vf_km_s"]),
            tof_days=float(entry["tof_days"]),
            n_rev=int(entry.get("n_rev", 0)),
            reference_final_mass_kg=entry.get("reference_final_mass_kg"),
        )

    @property
    def spacecraft(self) -> SpacecraftParams:
        return SpacecraftParams(
            m0=self.m0_kg, isp=self.isp_s, t_max=self.t_max_n, mu_body=self.mu_km3_s2
        )


def build_shooting_problem(
    bench: BenchmarkProblem,
    coords: Backend = Backend.CARTESIAN,
    smoothing: SmoothingKind = SmoothingKind.HYPERBOLIC_TANGENT,
    use_stm: bool = True,
    n_rev: Optional[int] = None,
    rho: float = RHO_INIT,
    integrator: Optional[IntegratorConfig] = None,
) -> ShootingProblem:
    """
    把基准问题转换为规范单位下的打靶问题。

    笛卡尔坐标使用日心规范单位；MEE 使用 μ = 1、LU = AU 的规范单位，
    边界根数由 cartesian_to_mee 得到。质量以 m0 为单位。
    """
    coords = Backend(coords)
    if coords is Backend.CR3BP:
        raise ValueError("Heliocentric benchmarks do not support CR3BP coordinates")
    if coords is Backend.CARTESIAN:
        scale = make_heliocentric_scale(mass_unit=bench.m0_kg, mu_body=bench.mu_km3_s2)
    else:
        scale = make_mu_one_scale(bench.mu_km3_s2, AU_KM, mass_unit=bench.m0_kg)

    start = nondimensionalize(np.concatenate([bench.r0_km, bench.v0_km_s, [bench.m0_kg]]), scale)
    end = nondimensionalize(np.concatenate([bench.rf_km, bench.vf_km_s]), scale)
    if coords is Backend.MEE:
        x0 = cartesian_to_mee(start[0:3], start[3:6], scale.mu_canonical)
        start = np.concatenate([x0, [start[6]]])
        end = cartesian_to_mee(end[0:3], end[3:6], scale.mu_canonical)
        revs = bench.n_rev if n_rev is None else n_rev
    else:
        revs = 0

    return ShootingProblem(
        backend=coords,
        params=bench.spacecraft.to_canonical(scale),
        scale=scale,
        initial_state=start,
        target=end,
        tof=bench.tof_days * DAY_S / scale.time_unit,
        smoothing=SmoothingConfig(SmoothingKind(smoothing), rho),
        use_stm=use_stm,
        n_rev=revs,
        name=bench.problem_id,
        integrator=integrator or IntegratorConfig(),
    )


def build_cr3bp_problem(
    initial_state: Sequence[float],
    target: Sequence[float],
    tof: float,
    spacecraft: SpacecraftParams,
    mu_ratio: float = EARTH_MOON_MU,
    length_unit: float = EARTH_MOON_LU_KM,
    mu_system: float = MU_EARTH_MOON_KM3_S2,
    smoothing: SmoothingKind = SmoothingKind.HYPERBOLIC_TANGENT,
    use_stm: bool = True,
    rho: float = RHO_INIT,
    name: str = "cr3bp",
) -> ShootingProblem:
    """
    用户给定的旋转系转移问题，状态与 tof 均为规范单位。

    initial_state 为 [r, v] (6)，初始质量取 1（即 m0）。
    """
    scale = make_mu_one_scale(mu_system, length_unit, mass_unit=spacecraft.m0)
    return ShootingProblem(
        backend=Backend.CR3BP,
        params=spacecraft.to_canonical(scale, mu=mu_ratio),
        scale=scale,
        initial_state=np.concatenate([np.asarray(initial_state, dtype=float), [1.0]]),
        target=np.asarray(target, dtype=float),
        tof=tof,
        smoothing=SmoothingConfig(SmoothingKind(smoothing), rho),
        use_stm=use_stm,
        name=name,
    )


def sample_costate_guess(backend: Backend, seed: int, trial: int) -> np.ndarray:
    """
    第 trial 次试验的随机初始协态，只由 (seed, trial) 决定。

    笛卡尔：各分量 U[0, 1]；MEE：λ ~ U[0, 0.1]，λ_m ~ U[0, 1]；
    CR3BP：U[−1, 1]，λ_m 截断为非负。
    """
    rng = np.random.default_rng([seed, trial])
    backend = Backend(backend)
    if backend is Backend.CR3BP:
        eta = rng.uniform(-1.0, 1.0, 7)
        eta[6] = max(eta[6], 0.0)
        return eta
    eta = rng.uniform(0.0, 1.0, 7)
    if backend is Backend.MEE:
        eta[0:6] *= 0.1
    return eta


@dataclass
class MonteCarloTrial:
    trial: int
    eta0_guess: np.ndarray
    report: SolveReport
    revolutions: Optional[float] = None

    @property
    def converged(self) -> bool:
        return self.report.converged


@dataclass
class MonteCarloRow:
    coords: Backend
    smoothing: SmoothingKind
    use_stm: bool
    trials: List[MonteCarloTrial] = field(default_factory=list)

    @property
    def n_converged(self) -> int:
        return sum(1 for t in self.trials if t.converged)

    @property
    def convergence_pct(self) -> float:
        return 100.0 * self.n_converged / len(self.trials) if self.trials else 0.0

    @property
    def mean_time_all(self) -> float:
        return float(np.mean([t.report.wall_time for t in self.trials])) if self.trials else math.nan

    @property
    def mean_time_converged(self) -> float:
        times = [t.report.wall_time for t in self.trials if t.converged]
        return float(np.mean(times)) if times else math.nan

    def to_dict(self, include_timing: bool = False) -> Dict:
        data = {
            "smoothing": self.smoothing.value,
            "coords": self.coords.value,
            "stm": self.use_stm,
            "trials": len(self.trials),
            "converged": self.n_converged,
            "convergence_pct": self.convergence_pct,
        }
        if include_timing:
            data["mean_time_all_s"] = self.mean_time_all
            data["mean_time_converged_s"] = self.mean_time_converged
        return data


@dataclass
class MonteCarloReport:
    problem: str
    trials: int
    seed: int
    rows: List[MonteCarloRow]

    def to_dict(self, include_timing: bool = False) -> Dict:
        return {
            "problem": self.problem,
            "trials": self.trials,
            "seed": self.seed,
            "rows": [
                dict(
                    row.to_dict(include_timing),
                    results=[
                        {
                            "trial": t.trial,
                            "converged": t.converged,
                            "final_mass_kg": t.report.final_mass_kg,
                            "termination": t.report.termination,
                            "revolutions": t.revolutions,
                        }
                        for t in row.trials
                    ],
                )
                for row in self.rows
            ],
        }

    def csv_rows(self, include_timing: bool = False) -> Tuple[List[str], List[List]]:
        header = ["smoothing", "coords", "stm", "trials", "converged", "convergence_pct"]
        if include_timing:
            header += ["mean_time_all_s", "mean_time_converged_s"]
        rows = [[row.to_dict(include_timing)[key] for key in header] for row in self.rows]
        return header, rows

    def format_table(self, include_timing: bool = False) -> str:
        """按收敛率对比表的版式输出"""
        header = f"{'Smoothing Function':<20}{'Coordinates':<13}{'STM':<7}{'Convergence %':>14}"
        if include_timing:
            header += f"{'Time (s)':>10}"
        lines = [header, "-" * len(header)]
        for index, row in enumerate(self.rows):
            line = (
                f"{SMOOTHING_LABELS[row.smoothing]:<20}{COORD_LABELS[row.coords]:<13}"
                f"{str(row.use_stm):<7}{row.convergence_pct:>14.0f}"
            )
            if include_timing:
                line += f"{row.mean_time_converged:>10.2f}"
            lines.append(line)
            if index % 2 == 1:
                lines.append("-" * len(header))
        return "\n".join(lines)


class BenchmarkService(LoggingMixin):
    """基准问题服务类，负责加载基准问题并运行蒙特卡洛对比"""

    def __init__(
        self,
        catalog: Optional[Dict[str, Dict]] = None,
        root_cfg: Optional[RootSolveConfig] = None,
        integrator: Optional[IntegratorConfig] = None,
        max_threads: int = MAX_THREADS,
        debug: bool = False,
    ):
        self._debug = debug
        self._root_cfg = root_cfg or RootSolveConfig()
        self._integrator = integrator or IntegratorConfig()
        self._max_threads = max(1, max_threads)
        self._setup_logging()
        self._catalog = catalog if catalog is not None else load_benchmark_catalog()
        if not self._catalog:
            self._log("基准问题目录为空", level="warning")
        self._log("BenchmarkService initialized", level="detail")

    @property
    def problem_ids(self) -> List[str]:
        return list(self._catalog.keys())

    def get_benchmark(self, problem_id: str) -> BenchmarkProblem:
        if problem_id not in self._catalog:
            raise ValueError(
                f"Unknown benchmark '{problem_id}', valid ids: {', '.join(self.problem_ids)}"
            )
        return BenchmarkProblem.from_catalog(self._catalog[problem_id])

    def list_benchmarks(self) -> List[Dict]:
        return [dict(entry) for entry in self._catalog.values()]

    def load_benchmark(
        self,
        problem_id: str,
        coords: Backend = Backend.CARTESIAN,
        smoothing: SmoothingKind = SmoothingKind.HYPERBOLIC_TANGENT,
        use_stm: bool = True,
        n_rev: Optional[int] = None,
    ) -> ShootingProblem:
        return build_shooting_problem(
            self.get_benchmark(problem_id),
            coords=coords,
            smoothing=smoothing,
            use_stm=use_stm,
            n_rev=n_rev,
            integrator=self._integrator,
        )

    def solve(
        self,
        problem: ShootingProblem,
        eta0: np.ndarray,
        schedule: Optional[ContinuationSchedule] = None,
        seed: Optional[int] = None,
    ) -> SolveReport:
        return ContinuationSolver(self._root_cfg, debug=self._debug).solve(
            problem, eta0, schedule, seed
        )

    def sample_stored_solution(self, data: Dict, n_points: int) -> SampledTrajectory:
        """按 SolveReport.to_dict() 的内容重建问题并重新传播"""
        for key in ("problem", "coords", "smoothing", "eta0"):
            if key not in data:
                raise ValueError(f"Solution record is missing '{key}'")
        problem = self.load_benchmark(
            data["problem"],
            Backend(data["coords"]),
            SmoothingKind(data["smoothing"]),
            bool(data.get("stm", True)),
            data.get("n_rev"),
        )
        rho = data.get("rho_final")
        return sample_solution(problem, np.asarray(data["eta0"], dtype=float), rho, n_points)

    def _run_trial(
        self,
        problem: ShootingProblem,
        schedule: ContinuationSchedule,
        seed: int,
        trial: int,
    ) -> MonteCarloTrial:
        eta0 = sample_costate_guess(problem.backend, seed, trial)
        report = self.solve(problem, eta0, schedule, seed)
        revolutions = None
        if report.converged and problem.backend is Backend.CARTESIAN:
            try:
                samples = sample_solution(
                    problem, report.eta0_solution, report.rho_final, REVOLUTION_SAMPLES
                )
                revolutions = revolutions_swept(samples)
            except Exception as e:
                self._log(f"圈数统计失败 (trial {trial}): {e}", level="warning")
        return MonteCarloTrial(trial, eta0, report, revolutions)

    def run_monte_carlo(
        self,
        problem_id: str,
        trials: int,
        seed: int,
        schedule: Optional[ContinuationSchedule] = None,
        config_matrix: Optional[Sequence[Tuple[Backend, SmoothingKind, bool]]] = None,
        n_rev: Optional[int] = None,
    ) -> MonteCarloReport:
        """
        对配置矩阵的每一行，用同一组按 (seed, trial) 生成的初始协态运行延拓求解。

        单次试验失败只记为未收敛；结果按行和试验编号排序，与线程调度无关。
        """
        if trials < 1:
            raise ValueError(f"trials must be at least 1, got {trials}")
        schedule = schedule or ContinuationSchedule()
        matrix = list(config_matrix or CONFIG_MATRIX)
        rows = [MonteCarloRow(Backend(c), SmoothingKind(k), bool(s)) for c, k, s in matrix]
        problems = [
            self.load_benchmark(problem_id, row.coords, row.smoothing, row.use_stm, n_rev)
            for row in rows
        ]

        tasks = [(r, t) for r in range(len(rows)) for t in range(trials)]
        self._log(
            f"蒙特卡洛: {problem_id}, {len(rows)} 行 x {trials} 次试验, 线程数 {self._max_threads}",
            level="info",
        )
        with ThreadPoolExecutor(max_workers=self._max_threads) as executor:
            futures = [
                executor.submit(self._run_trial, problems[r], schedule, seed, t) for r, t in tasks
            ]
            for (r, _), future in zip(tasks, futures):
                rows[r].trials.append(future.result())

        for row in rows:
            self._log(
                f"{COORD_LABELS[row.coords]} / {SMOOTHING_LABELS[row.smoothing]} / "
                f"stm={row.use_stm}: {row.n_converged}/{trials}",
                level="info",
            )
        return MonteCarloReport(problem_id, trials, seed, rows)
