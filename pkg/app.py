import os
from typing import Optional

from flask import Flask, request
from flask_cors import CORS
from werkzeug.exceptions import MethodNotAllowed

from models import db
from services.shooting import Backend, ContinuationSchedule
from services.solution_service import SolutionService
from smoothing import SmoothingKind
from utils import make_json_response

VALID_COORDS = [Backend.CARTESIAN.value, Backend.MEE.value]
VALID_SMOOTHING = [kind.value for kind in SmoothingKind]
MAX_SAMPLE_POINTS = 20000


def _parse_solve_request(payload: dict, valid_problems) -> dict:
    """校验 /api/solve 请求体，非法参数抛出 ValueError"""
    problem = payload.get("problem")
    if problem not in valid_problems:
        raise ValueError(f"Invalid problem '{problem}'. Valid problems: {', '.join(valid_problems)}")
    coords = payload.get("coords", Backend.CARTESIAN.value)
    if coords not in VALID_COORDS:
        raise ValueError(f"Invalid coords '{coords}'. Valid coords: {', '.join(VALID_COORDS)}")
    smoothing = payload.get("smoothing", SmoothingKind.HYPERBOLIC_TANGENT.value)
    if smoothing not in VALID_SMOOTHING:
        raise ValueError(
            f"Invalid smoothing '{smoothing}'. Valid smoothing: {', '.join(VALID_SMOOTHING)}"
        )
    use_stm = payload.get("stm", True)
    if not isinstance(use_stm, bool):
        raise ValueError("stm must be a boolean")

    seed = payload.get("seed")
    eta0 = payload.get("eta0")
    if eta0 is not None:
        if not isinstance(eta0, list) or len(eta0) != 7:
            raise ValueError("eta0 must be a list of 7 numbers")
        eta0 = [float(x) for x in eta0]
    elif seed is None:
        seed = 0
    if seed is not None and (isinstance(seed, bool) or not isinstance(seed, int) or seed < 0):
        raise ValueError("seed must be a non-negative integer")

    n_rev = payload.get("n_rev")
    if n_rev is not None and (isinstance(n_rev, bool) or not isinstance(n_rev, int) or n_rev < 0):
        raise ValueError("n_rev must be a non-negative integer")

    defaults = ContinuationSchedule()
    schedule = ContinuationSchedule(
        rho_init=float(payload.get("rho_init", defaults.rho_init)),
        rho_factor=float(payload.get("rho_factor", defaults.rho_factor)),
        rho_final=float(payload.get("rho_final", defaults.rho_final)),
    )
    return dict(
        problem_id=problem,
        coords=coords,
        smoothing=smoothing,
        use_stm=use_stm,
        seed=seed,
        eta0=eta0,
        schedule=schedule,
        n_rev=n_rev,
    )


def create_app(
    test_config: Optional[dict] = None,
    solution_service: Optional[SolutionService] = None,
) -> Flask:
    app = Flask(__name__)
    app.json.ensure_ascii = False
    app.config.from_object("config")
    if test_config:
        app.config.update(test_config)
    CORS(app)

    os.makedirs(app.config["INSTANCE_DIR"], exist_ok=True)
    db.init_app(app)
    with app.app_context():
        db.create_all()

    service = solution_service or SolutionService(debug=app.debug)

    @app.route("/api/benchmarks", methods=["GET"])
    def get_benchmarks():
        return make_json_response(data={"benchmarks": service.benchmarks.list_benchmarks()})

    @app.route("/api/solve", methods=["POST"])
    def solve():
        """
        Solve a benchmark transfer with rho continuation
        Body (JSON):
        - problem: Benchmark id (e.g. e2m) [required]
        - coords: cartesian | mee [optional, default cartesian]
        - smoothing: tanh | l2 [optional, default tanh]
        - stm: Analytic jacobian through the STM [optional, default true]
        - seed / eta0: Random guess seed or explicit 7-entry costate guess [optional]
        - n_rev, rho_init, rho_factor, rho_final [optional]

        Error Codes:
        - 400: Bad Request (invalid parameters)
        - 500: Internal Server Error
        """
        payload = request.get_json(silent=True)
        if not isinstance(payload, dict):
            return make_json_response(code=400, message="Request body must be a JSON object")
        try:
            kwargs = _parse_solve_request(payload, service.benchmarks.problem_ids)
        except (TypeError, ValueError) as ve:
            return make_json_response(
                code=400,
                message=f"Invalid parameter value: {str(ve)}",
                data={
                    "valid_problems": service.benchmarks.problem_ids,
                    "valid_coords": VALID_COORDS,
                    "valid_smoothing": VALID_SMOOTHING,
                },
            )

        try:
            result = service.solve(**kwargs)
        except Exception as e:
            app.logger.error(f"Unexpected error: {str(e)}", exc_info=True)
            return make_json_response(code=500, message="Internal server error")
        return make_json_response(data={"solution": result})

    @app.route("/api/solutions/<int:solution_id>", methods=["GET"])
    def get_solution(solution_id):
        solution = service.get_solution(solution_id)
        if solution is None:
            return make_json_response(code=404, message=f"Solution {solution_id} not found")
        return make_json_response(data={"solution": solution})

    @app.route("/api/solutions/<int:solution_id>/samples", methods=["GET"])
    def get_samples(solution_id):
        try:
            points = int(request.args.get("points", 1000))
        except ValueError:
            points = None
        if points is None or not 2 <= points <= MAX_SAMPLE_POINTS:
            return make_json_response(
                code=400, message=f"points must be an integer in [2, {MAX_SAMPLE_POINTS}]"
            )
        try:
            samples = service.get_samples(solution_id, points)
        except Exception as e:
            app.logger.error(f"Error sampling solution {solution_id}: {str(e)}", exc_info=True)
            return make_json_response(code=500, message="Internal server error")
        if samples is None:
            return make_json_response(code=404, message=f"Solution {solution_id} not found")
        return make_json_response(data={"points": len(samples), "samples": samples})

    @app.errorhandler(404)
    @app.errorhandler(405)
    @app.errorhandler(500)
    def handle_errors(error):
        if isinstance(error, MethodNotAllowed):
            return make_json_response(
                code=405,
                message="Method Not Allowed",
                data={"allowed_methods": error.valid_methods},
            )
        elif getattr(error, "code", 500) == 404:
            return make_json_response(code=404, message="Not Found")
        else:
            return make_json_response(code=500, message="Internal Server Error")

    return app


if __name__ == "__main__":
    app = create_app()
    app.run(host="0.0.0.0", port=8182, debug=True)
