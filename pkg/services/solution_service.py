import json
from datetime import datetime, timedelta
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from config import SOLUTION_CACHE_TTL_HOURS
from models import Solution, SolveLog, db
from services.benchmark_service import BenchmarkService, sample_costate_guess
from services.logging_mixin import LoggingMixin
from services.shooting import Backend, ContinuationSchedule
from smoothing import SmoothingKind
from utils import to_jsonable


class SolutionService(LoggingMixin):
    """解服务类，负责求解基准问题、存储解并提供采样数据"""

    def __init__(
        self,
        benchmark_service: Optional[BenchmarkService] = None,
        cache_ttl_hours: float = SOLUTION_CACHE_TTL_HOURS,
        debug: bool = False,
    ):
        # 缓存结构: {cache_key: (data, expiration_time)}
        self._cache: Dict[str, Tuple[Any, datetime]] = {}
        self._cache_ttl = timedelta(hours=cache_ttl_hours)
        self._debug = debug

        self._benchmarks = benchmark_service or BenchmarkService(debug=debug)

        # 配置日志
        self._setup_logging()
        self._log("SolutionService initialized", level="detail")

    @property
    def benchmarks(self) -> BenchmarkService:
        return self._benchmarks

    def solve(
        self,
        problem_id: str,
        coords: str,
        smoothing: str,
        use_stm: bool = True,
        seed: Optional[int] = None,
        eta0: Optional[List[float]] = None,
        schedule: Optional[ContinuationSchedule] = None,
        n_rev: Optional[int] = None,
    ) -> Dict:
        """
        求解基准问题并存储结果（相同请求直接返回缓存）

        Args:
            problem_id: 基准问题ID（'e2m'/'e2d'）
            coords: 'cartesian' 或 'mee'
            smoothing: 'tanh' 或 'l2'
            seed: 随机初始协态的种子，与 eta0 二选一
            eta0: 显式初始协态（7 维）

        Returns:
            SolveReport.to_dict() 加上存储的 id
        """
        schedule = schedule or ContinuationSchedule()
        if eta0 is None and seed is None:
            raise ValueError("Either seed or eta0 must be given")
        cache_key = json.dumps(
            [problem_id, coords, smoothing, use_stm, seed, eta0, n_rev,
             schedule.rho_init, schedule.rho_factor, schedule.rho_final]
        )
        cached = self._get_from_cache(cache_key)
        if cached is not None:
            self._log(f"使用缓存的解 {cached['id']}", "debug")
            return cached

        problem = self._benchmarks.load_benchmark(
            problem_id, Backend(coords), SmoothingKind(smoothing), use_stm, n_rev
        )
        guess = (
            np.asarray(eta0, dtype=float)
            if eta0 is not None
            else sample_costate_guess(problem.backend, seed, 0)
        )
        self._log(f"⏳ 开始求解 {problem_id}/{coords}/{smoothing} stm={use_stm}", "detail")
        report = self._benchmarks.solve(problem, guess, schedule, seed)
        data = to_jsonable(report.to_dict())

        try:
            record = Solution(
                problem=problem_id,
                coords=coords,
                smoothing=smoothing,
                use_stm=use_stm,
                seed=seed if eta0 is None else None,
                n_rev=problem.n_rev,
                rho_init=schedule.rho_init,
                rho_final=schedule.rho_final,
                converged=report.converged,
                final_mass_kg=report.final_mass_kg,
                residual_inf_norm=data["residual_inf_norm"],
                payload=json.dumps(data),
            )
            db.session.add(record)
            db.session.add(
                SolveLog(
                    problem=problem_id,
                    coords=coords,
                    success=1 if report.converged else 0,
                    wall_time=report.wall_time,
                )
            )
            db.session.commit()
        except Exception as e:
            self._log(f"[ERROR in solve] {repr(e)}", "error")
            db.session.rollback()
            raise

        result = record.to_dict()
        self._set_to_cache(cache_key, result)
        self._set_to_cache(f"solution_{record.id}", result)
        self._log(
            f"✔️ 解 {record.id}: converged={report.converged}, m_f={report.final_mass_kg}",
            "detail",
        )
        return result

    def get_solution(self, solution_id: int) -> Optional[Dict]:
        cache_key = f"solution_{solution_id}"
        cached = self._get_from_cache(cache_key)
        if cached is not None:
            return cached

        record = db.session.get(Solution, solution_id)
        if record is None:
            return None
        data = record.to_dict()
        self._set_to_cache(cache_key, data)
        return data

    def get_samples(self, solution_id: int, points: int) -> Optional[List[Dict]]:
        """重新传播已存储的解并返回时间序列"""
        data = self.get_solution(solution_id)
        if data is None:
            return None
        return self._benchmarks.sample_stored_solution(data, points).to_records()

    def _get_from_cache(self, cache_key: str) -> Optional[Any]:
        """从缓存获取数据，检查过期时间"""
        if cache_key not in self._cache:
            return None

        data, expiration_time = self._cache[cache_key]
        if datetime.now() >= expiration_time:
            self._cache.pop(cache_key, None)
            self._log(f"Cache expired for {cache_key}", "debug")
            return None

        return data

    def _set_to_cache(self, cache_key: str, data: Any):
        """将数据存入缓存，设置过期时间"""
        expiration_time = datetime.now() + self._cache_ttl
        self._cache[cache_key] = (data, expiration_time)
        self._log(f"Data cached for {cache_key} until {expiration_time}", "debug")
