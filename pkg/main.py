import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional

import pandas as pd
from flask import Flask

from config import Config
from errors import ModelParseError
from lob_app import LobExecApp
from logger import set_console_level, setup_logger
from market_model.example_builders import EXAMPLES
from oracle_module import GridSpec, MCConfig
from web.routes import reports

logger = setup_logger('main')

FORMATS = ('table', 'csv', 'json')
FLOAT_FORMAT = '%.17g'
# Rules that need no extra input; the report server also takes trade maps
SOLVE_STRATEGIES = ('OPTIMAL', 'IMMEDIATE')


def create_app() -> Flask:
    app = Flask(__name__)
    # Pass Config to the blueprint
    app.register_blueprint(reports, url_prefix='', config=Config)
    return app


def render_frame(frame: pd.DataFrame, fmt: str) -> str:
    if fmt == 'csv':
        return frame.to_csv(index=False, float_format=FLOAT_FORMAT)
    if fmt == 'json':
        return json.dumps(frame.to_dict(orient='records'), indent=4)
    if frame.empty:
        return "(none)\n"
    return frame.to_string(index=False, float_format=lambda v: FLOAT_FORMAT % v) + "\n"


def emit(text: str, out: Optional[str]) -> None:
    """Write command output to --out or stdout"""
    if out:
        path = Path(out)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
        logger.info(f"Wrote output to {path}")
    else:
        sys.stdout.write(text)


def write_csv(frame: pd.DataFrame, path: str) -> None:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(target, index=False, float_format=FLOAT_FORMAT)
    logger.info(f"Wrote {len(frame)} row(s) to {target}")


def load_app(args) -> LobExecApp:
    if args.example:
        return LobExecApp.from_example(args.example, args.seed)
    return LobExecApp.from_source(args.model)


def cmd_validate(args) -> int:
    app = load_app(args)
    report = app.validate()
    if args.format == 'json':
        emit(json.dumps(report.to_dict(), indent=4) + "\n", args.out)
    else:
        emit(render_frame(report.to_frame(), args.format), args.out)
    return 0 if report.ok else 1


def cmd_solve(args) -> int:
    app = load_app(args)
    result = app.solve(args.x, args.d, s0=args.s0, strategy={'type': args.strategy})
    if args.y_out:
        write_csv(result.y_frame, args.y_out)
    if args.strategy_out:
        write_csv(result.strategy.to_frame(), args.strategy_out)

    if args.format == 'json':
        emit(json.dumps(result.to_dict(), indent=4) + "\n", args.out)
        return 0
    summary = pd.DataFrame([{
        'x': result.x,
        'd': result.d,
        'value': result.value,
        'strategy': result.rule['type'],
        'expected_cost': result.cost.expected_cost,
        'excess_cost': result.excess_cost,
        'price_overlay_offset': result.cost.price_overlay_offset,
    }])
    text = render_frame(summary, args.format)
    if args.format == 'table':
        text += "\n" + render_frame(result.strategy.to_frame(), 'table')
    emit(text, args.out)
    return 0


def cmd_analyze(args) -> int:
    app = load_app(args)
    report = app.analyze(args.tol)
    if args.format == 'json':
        emit(json.dumps(report.to_dict(), indent=4) + "\n", args.out)
        return 0
    text = render_frame(report.to_frame(), args.format)
    if args.format == 'table' and report.pimi_cutoff is not None:
        text += f"\nPIMI cutoff: {report.pimi_cutoff}\n"
        if report.limit_result is not None:
            text += f"Long-time limit: {report.limit_result.case.value} {list(report.limit_result.values)}\n"
    emit(text, args.out)
    return 0


def _second_triple(args) -> Optional[List[float]]:
    given = [args.beta2, args.eta2, args.alpha2]
    if all(v is None for v in given):
        return None
    if any(v is None for v in given):
        raise ModelParseError("--beta2, --eta2 and --alpha2 must be given together")
    return given


def cmd_limit(args) -> int:
    result = LobExecApp.limit([args.beta, args.eta, args.alpha], _second_triple(args),
                              tol=args.tol if args.tol is not None else Config.LIMIT_TOL)
    if args.format == 'json':
        emit(json.dumps(result.to_dict(), indent=4) + "\n", args.out)
        return 0
    row = {'case': result.case.value}
    for i, value in enumerate(result.values, start=1):
        row[f'value_{i}' if len(result.values) > 1 else 'value'] = value
    row.update({'iterations': result.iterations, 'residual': result.residual, 'converged': result.converged})
    emit(render_frame(pd.DataFrame([row]), args.format), args.out)
    return 0


def cmd_verify(args) -> int:
    app = load_app(args)
    grid = GridSpec(points=args.points, rounds=args.rounds)
    mc = MCConfig(samples=args.samples, seed=args.seed, antithetic=args.antithetic)
    report = app.verify(args.x, args.d, grid, mc, tol=args.tol if args.tol is not None else Config.ORACLE_TOL)
    if args.format == 'json':
        emit(json.dumps(report.to_dict(), indent=4) + "\n", args.out)
    else:
        lines = [
            f"analytic value: {report.analytic_value!r}",
            f"oracle value:   {report.oracle_value!r}",
            f"MC mean:        {report.mc_mean!r} +/- {report.mc_stderr!r}",
            f"first order:    {report.first_order!r}",
        ]
        lines += [f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.detail}" for c in report.checks]
        if args.format == 'csv':
            frame = pd.DataFrame([{'check': c.name, 'passed': c.passed, 'detail': c.detail}
                                  for c in report.checks])
            emit(render_frame(frame, 'csv'), args.out)
        else:
            emit("\n".join(lines) + "\n", args.out)
    return 0 if report.passed else 1


def cmd_serve(args) -> int:
    app = create_app()
    logger.info(f"Serving reports on {args.host}:{args.port}")
    app.run(host=args.host, port=args.port, debug=False)
    return 0


def _seed(value: str) -> int:
    """Seed for the Philox generator: an integer in [0, 2**64)"""
    try:
        seed = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed: {value!r}")
    if not 0 <= seed < 2 ** 64:
        raise argparse.ArgumentTypeError(f"seed must lie in [0, 2**64), got {seed}")
    return seed


def _positive_int(value: str) -> int:
    try:
        number = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid integer: {value!r}")
    if number < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {number}")
    return number


def _add_model_args(parser: argparse.ArgumentParser) -> None:
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument('--model', help="model JSON path or http(s) URL")
    source.add_argument('--example', choices=sorted(EXAMPLES), help="built-in example model")
    parser.add_argument('--seed', type=_seed, default=Config.MC_SEED,
                        help="seed for --example random and Monte Carlo")


def _add_output_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--format', choices=FORMATS, default='table')
    parser.add_argument('--out', help="write the report here instead of stdout")


def _add_state_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--x', type=float, default=1.0, help="initial position")
    parser.add_argument('--d', type=float, default=0.0, help="initial deviation")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='lobexec',
        description="Optimal execution with stochastic resilience and impact on scenario trees",
    )
    parser.add_argument('--log-level', choices=('DEBUG', 'INFO', 'WARNING', 'ERROR'),
                        help="console log level (the log file always records DEBUG)")
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('validate', help="check a model against the structural assumption")
    _add_model_args(p)
    _add_output_args(p)
    p.set_defaults(handler=cmd_validate)

    p = sub.add_parser('solve', help="value function, Y field and optimal strategy")
    _add_model_args(p)
    _add_state_args(p)
    _add_output_args(p)
    p.add_argument('--y-out', help="CSV file for the Y field")
    p.add_argument('--strategy-out', help="CSV file for the optimal strategy")
    p.add_argument('--s0', type=float, help="unaffected price at the start (cost overlay)")
    p.add_argument('--strategy', choices=SOLVE_STRATEGIES, default='OPTIMAL',
                   help="rule whose exact expected cost is reported next to the value")
    p.set_defaults(handler=cmd_solve)

    p = sub.add_parser('analyze', help="round-trip, premature closure and ratio report")
    _add_model_args(p)
    _add_output_args(p)
    p.add_argument('--tol', type=float, default=Config.EVENT_TOL)
    p.set_defaults(handler=cmd_analyze)

    p = sub.add_parser('limit', help="long-time limit of Y for step-constant means")
    p.add_argument('--beta', type=float, required=True, help="E[beta]")
    p.add_argument('--eta', type=float, required=True, help="E[eta]")
    p.add_argument('--alpha', type=float, required=True, help="E[beta^2/eta]")
    p.add_argument('--beta2', type=float)
    p.add_argument('--eta2', type=float)
    p.add_argument('--alpha2', type=float)
    p.add_argument('--tol', type=float)
    _add_output_args(p)
    p.set_defaults(handler=cmd_limit)

    p = sub.add_parser('verify', help="compare the analytic value with the brute-force oracle")
    _add_model_args(p)
    _add_state_args(p)
    _add_output_args(p)
    p.add_argument('--tol', type=float)
    p.add_argument('--points', type=int, default=Config.GRID_POINTS)
    p.add_argument('--rounds', type=int, default=Config.GRID_ROUNDS)
    p.add_argument('--samples', type=_positive_int, default=Config.MC_SAMPLES)
    p.add_argument('--antithetic', action='store_true')
    p.set_defaults(handler=cmd_verify)

    p = sub.add_parser('serve', help="start the report server")
    p.add_argument('--host', default=Config.WEB_HOST)
    p.add_argument('--port', type=int, default=Config.WEB_PORT)
    p.set_defaults(handler=cmd_serve)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        Config.validate()
        if args.log_level:
            set_console_level(args.log_level)
        return args.handler(args)
    except ModelParseError as e:
        logger.error(f"Input error: {e}", exc_info=True)
        return 2
    except ValueError as e:
        logger.error(f"Fatal error: {e}", exc_info=True)
        return 1


if __name__ == "__main__":
    sys.exit(main())
