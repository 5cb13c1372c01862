"""测试共用的随机状态生成、有限差分与伪造求解报告"""

import numpy as np

from services.numerics.root_finder import TerminationReason
from services.shooting import SolveReport, StageReport


def random_cartesian_state(rng, mu):
    """远离中心天体、主矢量非零的随机增广状态"""
    direction = rng.normal(size=3)
    direction /= np.linalg.norm(direction)
    radius = rng.uniform(0.7, 1.5)
    r = radius * direction
    v = rng.uniform(-1.0, 1.0, 3) * np.sqrt(mu / radius)
    m = rng.uniform(0.5, 1.0)
    lam = rng.uniform(-1.0, 1.0, 6)
    lam_m = rng.uniform(0.0, 1.0)
    return np.concatenate([r, v, [m], lam, [lam_m]])


def random_mee_state(rng):
    elements = [
        rng.uniform(0.8, 1.5),
        rng.uniform(-0.2, 0.2),
        rng.uniform(-0.2, 0.2),
        rng.uniform(-0.3, 0.3),
        rng.uniform(-0.3, 0.3),
        rng.uniform(0.0, 2.0 * np.pi),
    ]
    m = rng.uniform(0.5, 1.0)
    lam = rng.uniform(-1.0, 1.0, 6)
    lam_m = rng.uniform(0.0, 1.0)
    return np.concatenate([elements, [m], lam, [lam_m]])


def central_difference(fn, x, step=1e-6):
    """fn: R^n -> R^k 的中心差分雅可比，返回 (k, n)"""
    x = np.asarray(x, dtype=float)
    columns = []
    for i in range(x.size):
        h = step * max(1.0, abs(x[i]))
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        columns.append((np.atleast_1d(fn(xp)) - np.atleast_1d(fn(xm))) / (2.0 * h))
    return np.column_stack(columns)


def assert_matrix_close(actual, expected, rel):
    """按矩阵最大元素缩放的误差判据"""
    actual = np.asarray(actual, dtype=float)
    expected = np.asarray(expected, dtype=float)
    scale = max(1.0, float(np.max(np.abs(expected))))
    assert np.max(np.abs(actual - expected)) <= rel * scale


def make_report(
    problem,
    eta0=None,
    converged=True,
    termination=TerminationReason.CONVERGED,
    final_mass_kg=603.9,
    rho=1e-5,
    seed=None,
    wall_time=1.25,
):
    eta = np.full(7, 0.5) if eta0 is None else np.asarray(eta0, dtype=float)
    stage = StageReport(
        rho=rho,
        converged=converged,
        iterations=4,
        nfev=5,
        njev=1,
        residual_norm=1e-10 if converged else 0.3,
        termination=termination,
        final_mass_kg=final_mass_kg if converged else None,
    )
    return SolveReport(
        problem=problem.name,
        coords=problem.backend.value,
        smoothing=problem.smoothing.kind.value,
        use_stm=problem.use_stm,
        n_rev=problem.n_rev,
        eta0_initial=eta,
        eta0_solution=eta,
        converged=converged,
        final_mass_kg=final_mass_kg if converged else None,
        residual_inf_norm=stage.residual_norm,
        stages=[stage],
        wall_time=wall_time,
        seed=seed,
        failed_stage=None if converged else 0,
    )
