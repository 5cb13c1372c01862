"""
命令行入口：solve / montecarlo / sample 三个子命令。

退出码：0 成功；1 未收敛；2 参数错误；3 数值失败。
"""

import argparse
import json
import logging
import sys
from typing import List, Optional, Sequence

import numpy as np

from config import (
    INTEGRATOR_ABS_TOL,
    INTEGRATOR_REL_TOL,
    RHO_FACTOR,
    RHO_FINAL,
    RHO_INIT,
    ROOT_RESIDUAL_TOL,
)
from exceptions import IntegrationError, TrajectoryError
from services.benchmark_service import BenchmarkService, sample_costate_guess
from services.numerics.integrator import IntegratorConfig
from services.numerics.root_finder import RootSolveConfig, TerminationReason
from services.shooting import Backend, ContinuationSchedule
from smoothing import SmoothingKind
from utils import dumps_csv, dumps_json, read_json, write_text

EXIT_OK = 0
EXIT_NOT_CONVERGED = 1
EXIT_BAD_ARGS = 2
EXIT_NUMERIC_FAILURE = 3

LADDER_COLUMNS = ["rho", "iterations", "residual", "final_mass_kg", "termination"]

logger = logging.getLogger("mintraj")


class ArgumentError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """参数错误时抛出异常而不是直接退出"""

    def error(self, message):
        raise ArgumentError(message)


def _add_common(parser: argparse.ArgumentParser, output_format: str) -> None:
    parser.add_argument("--rel-tol", type=float, default=INTEGRATOR_REL_TOL)
    parser.add_argument("--abs-tol", type=float, default=INTEGRATOR_ABS_TOL)
    parser.add_argument("--out", default="-", help="输出文件，'-' 表示标准输出")
    parser.add_argument("--format", choices=["json", "csv"], default=output_format)
    parser.add_argument("--timing", action="store_true", help="输出墙钟时间列")
    parser.add_argument("--verbose", "-v", action="store_true")


def _add_solver_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--problem", required=True, choices=["e2m", "e2d"])
    parser.add_argument("--rho-init", type=float, default=RHO_INIT)
    parser.add_argument("--rho-factor", type=float, default=RHO_FACTOR)
    parser.add_argument("--rho-final", type=float, default=RHO_FINAL)
    parser.add_argument("--residual-tol", type=float, default=ROOT_RESIDUAL_TOL)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--n-rev", type=int, default=None, help="覆盖 MEE 的终端圈数")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mintraj", description="Minimum-fuel low-thrust trajectory solver")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    solve = sub.add_parser("solve", help="单次延拓求解")
    _add_solver_options(solve)
    solve.add_argument("--coords", choices=[Backend.CARTESIAN.value, Backend.MEE.value], default="cartesian")
    solve.add_argument("--smoothing", choices=[k.value for k in SmoothingKind], default="tanh")
    solve.add_argument("--stm", action=argparse.BooleanOptionalAction, default=True)
    solve.add_argument("--eta0", type=float, nargs=7, default=None, metavar="X")
    _add_common(solve, "json")

    montecarlo = sub.add_parser("montecarlo", help="配置矩阵上的蒙特卡洛收敛性对比")
    _add_solver_options(montecarlo)
    montecarlo.add_argument("--trials", type=int, default=100)
    _add_common(montecarlo, "csv")

    sample = sub.add_parser("sample", help="对已保存的解做稠密采样")
    sample.add_argument("--solution", required=True, help="solve 子命令输出的 JSON 文件")
    sample.add_argument("--points", type=int, default=1000)
    _add_common(sample, "csv")
    return parser


def _configure_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        stream=sys.stderr,
    )


def _service(args) -> BenchmarkService:
    root_cfg = RootSolveConfig(residual_tol=getattr(args, "residual_tol", ROOT_RESIDUAL_TOL))
    integrator = IntegratorConfig(rel_tol=args.rel_tol, abs_tol=args.abs_tol)
    return BenchmarkService(root_cfg=root_cfg, integrator=integrator, debug=args.verbose)


def _schedule(args) -> ContinuationSchedule:
    return ContinuationSchedule(args.rho_init, args.rho_factor, args.rho_final)


def _run_solve(args) -> int:
    service = _service(args)
    problem = service.load_benchmark(
        args.problem, Backend(args.coords), SmoothingKind(args.smoothing), args.stm, args.n_rev
    )
    if args.eta0 is not None:
        eta0, seed = np.asarray(args.eta0, dtype=float), None
    else:
        eta0, seed = sample_costate_guess(problem.backend, args.seed, 0), args.seed
    report = service.solve(problem, eta0, _schedule(args), seed)

    data = report.to_dict(args.timing)
    if args.format == "json":
        text = dumps_json(data)
    else:
        rows = [[stage.get(key) for key in LADDER_COLUMNS] for stage in data["rho_ladder"]]
        text = dumps_csv(LADDER_COLUMNS, rows)
    write_text(text, args.out, sys.stdout)

    if report.converged:
        return EXIT_OK
    if report.termination == TerminationReason.NON_FINITE.value:
        print(
            f"error: numeric failure at rho stage {report.failed_stage}", file=sys.stderr
        )
        return EXIT_NUMERIC_FAILURE
    print(
        f"error: solve did not converge ({report.termination}, "
        f"residual {report.residual_inf_norm:.3e}, stage {report.failed_stage})",
        file=sys.stderr,
    )
    return EXIT_NOT_CONVERGED


def _run_montecarlo(args) -> int:
    service = _service(args)
    report = service.run_monte_carlo(
        args.problem, args.trials, args.seed, _schedule(args), n_rev=args.n_rev
    )
    logger.info("\n%s", report.format_table(args.timing))
    if args.format == "json":
        text = dumps_json(report.to_dict(args.timing))
    else:
        header, rows = report.csv_rows(args.timing)
        text = dumps_csv(header, rows)
    write_text(text, args.out, sys.stdout)
    return EXIT_OK


def _run_sample(args) -> int:
    if args.points < 2:
        raise ValueError(f"--points must be at least 2, got {args.points}")
    try:
        data = read_json(args.solution)
    except (OSError, json.JSONDecodeError) as e:
        raise ValueError(f"cannot read solution file {args.solution}: {e}")
    if not isinstance(data, dict):
        raise ValueError(f"{args.solution} does not hold a solution object")
    samples = _service(args).sample_stored_solution(data, args.points)
    if args.format == "json":
        text = dumps_json(samples.to_records())
    else:
        text = dumps_csv(samples.columns, samples.rows.tolist())
    write_text(text, args.out, sys.stdout)
    return EXIT_OK


COMMANDS = {"solve": _run_solve, "montecarlo": _run_montecarlo, "sample": _run_sample}


def cli_main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(list(argv) if argv is not None else None)
    except ArgumentError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_BAD_ARGS
    except SystemExit as e:
        # --help
        return EXIT_OK if not e.code else EXIT_BAD_ARGS

    _configure_logging(args.verbose)
    try:
        return COMMANDS[args.command](args)
    except (TrajectoryError, IntegrationError, FloatingPointError, OverflowError) as e:
        print(f"error: numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC_FAILURE
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_BAD_ARGS


def main(argv: Optional[List[str]] = None) -> None:
    sys.exit(cli_main(argv))


if __name__ == "__main__":
    main()
