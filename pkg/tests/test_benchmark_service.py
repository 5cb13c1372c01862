import numpy as np
import pytest

from config import AU_KM, EARTH_MOON_MU, MU_EARTH_MOON_KM3_S2
from services import benchmark_service
from services.benchmark_service import (
    CONFIG_MATRIX,
    BenchmarkService,
    build_cr3bp_problem,
    sample_costate_guess,
)
from services.dynamics.cr3bp import libration_points
from services.dynamics.mee import mee_to_cartesian
from services.shooting import Backend, residual
from smoothing import SmoothingKind
from units import SpacecraftParams
from tests.helpers import make_report


@pytest.fixture
def service():
    return BenchmarkService(max_threads=2)


def test_catalog_entries(service):
    assert service.problem_ids == ["e2m", "e2d"]
    e2m = service.get_benchmark("e2m")
    assert e2m.m0_kg == 1000.0
    assert e2m.tof_days == 348.795
    assert e2m.reference_final_mass_kg == pytest.approx(603.935)
    e2d = service.get_benchmark("e2d")
    assert e2d.n_rev == 5
    assert e2d.t_max_n == 0.32
    assert [b["problem_id"] for b in service.list_benchmarks()] == ["e2m", "e2d"]


def test_cartesian_problem_in_canonical_units(service):
    problem = service.load_benchmark("e2m", Backend.CARTESIAN, SmoothingKind.L2_NORM)
    assert problem.tof == pytest.approx(0.9556, abs=2e-4)
    assert problem.initial_state[6] == 1.0
    assert problem.n_rev == 0
    assert problem.scale.mass_unit == 1000.0
    np.testing.assert_allclose(
        problem.initial_state[0:3] * AU_KM, [-140699693.0, -51614428.0, 980.0], rtol=1e-12
    )
    assert problem.smoothing.kind is SmoothingKind.L2_NORM


def test_mee_problem_boundary_elements(service):
    problem = service.load_benchmark("e2d", Backend.MEE, SmoothingKind.HYPERBOLIC_TANGENT)
    assert problem.n_rev == 5
    assert problem.params.mu == 1.0
    r, _ = mee_to_cartesian(problem.initial_state[0:6], 1.0)
    np.testing.assert_allclose(r * AU_KM, [-3637871.081, 147099798.784, -2261.441], rtol=1e-9, atol=1e-3)
    rf, vf = mee_to_cartesian(problem.target, 1.0)
    np.testing.assert_allclose(
        rf * AU_KM, [-302452014.884, 316097179.632, 82872290.0755], rtol=1e-10
    )
    assert service.load_benchmark("e2d", Backend.MEE, n_rev=2).n_rev == 2


def test_unknown_benchmark_and_coordinates(service):
    with pytest.raises(ValueError):
        service.get_benchmark("e2v")
    with pytest.raises(ValueError):
        service.load_benchmark("e2m", Backend.CR3BP)
    with pytest.raises(ValueError):
        BenchmarkService(catalog={}).load_benchmark("e2m")


def test_costate_guesses_are_reproducible():
    first = sample_costate_guess(Backend.CARTESIAN, 7, 3)
    np.testing.assert_array_equal(first, sample_costate_guess(Backend.CARTESIAN, 7, 3))
    assert not np.array_equal(first, sample_costate_guess(Backend.CARTESIAN, 7, 4))
    assert not np.array_equal(first, sample_costate_guess(Backend.CARTESIAN, 8, 3))
    assert np.all((first >= 0.0) & (first <= 1.0))

    mee = sample_costate_guess("mee", 7, 3)
    np.testing.assert_allclose(mee[0:6], 0.1 * first[0:6])
    assert mee[6] == first[6]

    for trial in range(20):
        cr3bp = sample_costate_guess(Backend.CR3BP, 1, trial)
        assert np.all(np.abs(cr3bp) <= 1.0)
        assert cr3bp[6] >= 0.0


def test_config_matrix_order():
    assert len(CONFIG_MATRIX) == 8
    assert CONFIG_MATRIX[0] == (Backend.CARTESIAN, SmoothingKind.HYPERBOLIC_TANGENT, True)
    assert CONFIG_MATRIX[1] == (Backend.CARTESIAN, SmoothingKind.HYPERBOLIC_TANGENT, False)
    assert CONFIG_MATRIX[2] == (Backend.CARTESIAN, SmoothingKind.L2_NORM, True)
    assert CONFIG_MATRIX[-1] == (Backend.MEE, SmoothingKind.L2_NORM, False)


@pytest.fixture
def fake_solver(monkeypatch):
    """只有 STM 配置“收敛”，并记录每次调用的初始协态"""
    calls = []

    def fake_solve(self, problem, eta0, schedule=None, seed=None):
        calls.append((problem.backend, problem.use_stm, np.array(eta0)))
        return make_report(problem, eta0, converged=problem.use_stm, seed=seed, wall_time=2.0)

    monkeypatch.setattr(BenchmarkService, "solve", fake_solve)
    monkeypatch.setattr(benchmark_service, "sample_solution", lambda *args, **kwargs: None)
    monkeypatch.setattr(benchmark_service, "revolutions_swept", lambda samples: 1.5)
    return calls


def test_monte_carlo_report(service, fake_solver):
    report = service.run_monte_carlo("e2m", trials=3, seed=11)
    assert len(report.rows) == 8
    assert len(fake_solver) == 24
    for row, (coords, kind, stm) in zip(report.rows, CONFIG_MATRIX):
        assert (row.coords, row.smoothing, row.use_stm) == (coords, kind, stm)
        assert [t.trial for t in row.trials] == [0, 1, 2]
        assert row.convergence_pct == (100.0 if stm else 0.0)
        expected = 1.5 if stm and coords is Backend.CARTESIAN else None
        assert all(t.revolutions == expected for t in row.trials)
        for t in row.trials:
            np.testing.assert_array_equal(t.eta0_guess, sample_costate_guess(coords, 11, t.trial))

    header, rows = report.csv_rows()
    assert header == ["smoothing", "coords", "stm", "trials", "converged", "convergence_pct"]
    assert rows[0] == ["tanh", "cartesian", True, 3, 3, 100.0]
    assert rows[1] == ["tanh", "cartesian", False, 3, 0, 0.0]

    timed_header, timed_rows = report.csv_rows(include_timing=True)
    assert timed_header[-2:] == ["mean_time_all_s", "mean_time_converged_s"]
    assert timed_rows[0][-2:] == [2.0, 2.0]
    assert np.isnan(timed_rows[1][-1])

    table = report.format_table().splitlines()
    assert len(table) == 2 + 8 + 4
    assert table[2].startswith("Hyperbolic Tangent")
    assert "Cartesian" in table[2]
    assert table[2].rstrip().endswith("100")
    assert "Time (s)" in report.format_table(include_timing=True)

    data = report.to_dict()
    assert data["problem"] == "e2m"
    assert data["seed"] == 11
    assert len(data["rows"][0]["results"]) == 3


def test_monte_carlo_rejects_empty_run(service):
    with pytest.raises(ValueError):
        service.run_monte_carlo("e2m", trials=0, seed=0)


def test_sample_stored_solution(service):
    problem = service.load_benchmark("e2m", Backend.CARTESIAN)
    data = {
        "problem": "e2m",
        "coords": "cartesian",
        "smoothing": "tanh",
        "stm": True,
        "n_rev": 0,
        "rho_final": 0.1,
        "eta0": sample_costate_guess(Backend.CARTESIAN, 0, 0).tolist(),
    }
    samples = service.sample_stored_solution(data, 5)
    assert samples.rows.shape == (5, 21)
    assert samples.column("t")[-1] == pytest.approx(348.795)
    assert samples.column("m")[0] == pytest.approx(problem.scale.mass_unit)
    assert samples.column("m")[-1] < samples.column("m")[0]
    with pytest.raises(ValueError):
        service.sample_stored_solution({"problem": "e2m"}, 5)


def test_cr3bp_problem():
    spacecraft = SpacecraftParams(m0=1000.0, isp=2000.0, t_max=0.5, mu_body=MU_EARTH_MOON_KM3_S2)
    start = np.concatenate([libration_points(EARTH_MOON_MU)["L4"] + [0.01, 0.0, 0.0], np.zeros(3)])
    problem = build_cr3bp_problem(start, start, 0.5, spacecraft)
    assert problem.backend is Backend.CR3BP
    assert problem.params.mu == EARTH_MOON_MU
    assert problem.initial_state[6] == 1.0
    psi = residual(problem, np.full(7, 0.2))
    assert np.all(np.isfinite(psi))


@pytest.mark.slow
def test_stm_improves_dionysus_convergence():
    report = BenchmarkService().run_monte_carlo("e2d", trials=100, seed=1)
    pct = {(r.coords, r.smoothing, r.use_stm): r.convergence_pct for r in report.rows}
    for coords in (Backend.CARTESIAN, Backend.MEE):
        for kind in SmoothingKind:
            assert pct[(coords, kind, True)] > pct[(coords, kind, False)]
    for kind in SmoothingKind:
        for stm in (True, False):
            assert pct[(Backend.MEE, kind, stm)] > pct[(Backend.CARTESIAN, kind, stm)]
