import os
import json
import logging

logger = logging.getLogger(__name__)

# 基础配置
BASE_DIR = os.path.dirname(os.path.abspath(__file__))
INSTANCE_DIR = os.path.join(BASE_DIR, "instance")
BENCHMARKS_JSON_FILE = os.path.join(BASE_DIR, "data", "benchmarks.json")

# 物理常数
G0_KM_S2 = 9.80665e-3  # 标准重力加速度 (km/s^2)
MU_SUN_KM3_S2 = 132712440018.0
AU_KM = 1.496e8
TU_S = 3.1536e7
DAY_S = 86400.0

# 地月系统
EARTH_MOON_MU = 0.012150585609624
EARTH_MOON_LU_KM = 384400.0
MU_EARTH_MOON_KM3_S2 = 398600.4418 + 4902.800066

# 积分器
INTEGRATOR_REL_TOL = 1e-13
INTEGRATOR_ABS_TOL = 1e-13
INTEGRATOR_MAX_STEPS = 200000

# 求根器
ROOT_MAX_ITERS = 200
ROOT_RESIDUAL_TOL = 1e-8
ROOT_XTOL = 1e-12

# ρ 延拓
RHO_INIT = 1.0
RHO_FACTOR = 0.1
RHO_FINAL = 1e-5

# 并行度，MINTRAJ_THREADS 环境变量优先
MAX_THREADS = max(1, int(os.environ.get("MINTRAJ_THREADS", os.cpu_count() or 1)))

# 主数据库配置
SQLALCHEMY_DATABASE_URI = os.environ.get(
    "MINTRAJ_DATABASE_URI", "sqlite:///" + os.path.join(INSTANCE_DIR, "mintraj.sqlite3")
)
SQLALCHEMY_TRACK_MODIFICATIONS = False
SOLUTION_CACHE_TTL_HOURS = 1


# 从JSON文件读取基准问题配置
def load_benchmark_catalog(path: str = BENCHMARKS_JSON_FILE) -> dict:
    catalog = {}
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)

            for problem in data["benchmarks"]:
                catalog[problem["problem_id"]] = problem

    except Exception as e:
        logger.error(f"加载基准问题配置失败: {str(e)}")
        catalog = {}

    return catalog
