from pathlib import Path
from datetime import datetime
from flask import Blueprint, Response, jsonify, request
import time

from errors import LobExecError, ModelParseError
from lob_app import LobExecApp

reports = Blueprint('reports', __name__)

RECENT_LINES = 1000


def tail_file(filename):
    """Generator function to tail a file"""
    with open(filename, 'r') as f:
        f.seek(0, 2)
        while True:
            line = f.readline()
            if not line:
                time.sleep(0.1)
                continue
            yield line


def _line_date(line):
    return datetime.strptime(line.split()[0], '%Y-%m-%d').date()


@reports.record
def record_params(setup_state):
    """Store config in blueprint when registering"""
    config = setup_state.options.get('config')
    reports.config = config


def _log_path():
    return Path(reports.config.LOG_FILE)


@reports.route('/logs', defaults={'date': None})
@reports.route('/logs/<date>')
def get_logs(date):
    """Log lines of one day as plain text, today by default"""
    if date:
        try:
            target_date = datetime.strptime(date, '%Y%m%d').date()
        except ValueError:
            return Response('Invalid date format. Use YYYYMMDD', status=400)
    else:
        target_date = datetime.now(reports.config.TIMEZONE).date()

    log_path = _log_path()
    if not log_path.exists():
        return Response('', mimetype='text/plain')

    filtered_logs = []
    with open(log_path, 'r') as f:
        for line in f:
            try:
                if _line_date(line) == target_date:
                    filtered_logs.append(line)
            except (ValueError, IndexError):
                continue
    return Response(''.join(filtered_logs), mimetype='text/plain')


@reports.route('/logs/stream')
def stream_logs():
    """Endpoint for SSE streaming"""
    log_path = _log_path()
    if not log_path.exists():
        return Response('Log file not found', status=404)
    today = datetime.now(reports.config.TIMEZONE).date()

    def generate():
        # Start with the most recent lines for today
        with open(log_path, 'r') as f:
            lines = f.readlines()
            for line in lines[-RECENT_LINES:]:
                try:
                    if _line_date(line) == today:
                        yield f"data: {line}\n\n"
                except (ValueError, IndexError):
                    continue

        # Then stream new lines
        for line in tail_file(log_path):
            try:
                if _line_date(line) == today:
                    yield f"data: {line}\n\n"
            except (ValueError, IndexError):
                continue

    return Response(generate(), mimetype='text/event-stream')


def _error(e, status):
    return jsonify({'error': str(e)}), status


def _app_from_request():
    payload = request.get_json(silent=True)
    if not isinstance(payload, dict) or 'model' not in payload:
        raise ModelParseError("Request body must be a JSON object with a 'model' entry")
    return LobExecApp.from_dict(payload['model']), payload


def _float_arg(source, name, default=None):
    value = source.get(name, default)
    if value is None:
        raise ModelParseError(f"Missing parameter '{name}'")
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ModelParseError(f"Parameter '{name}' must be a number, got {value!r}")


@reports.route('/solve', methods=['POST'])
def solve():
    """Value, Y field and optimal strategy for a posted model.

    An optional 'strategy' object (e.g. {"type": "TRADE_MAP", "trades": {...}})
    is costed exactly next to the optimum.
    """
    try:
        app, payload = _app_from_request()
        strategy = payload.get('strategy')
        if strategy is not None and not isinstance(strategy, dict):
            raise ModelParseError("'strategy' must be a JSON object")
        result = app.solve(_float_arg(payload, 'x', 1.0), _float_arg(payload, 'd', 0.0), strategy=strategy)
        return jsonify(result.to_dict())
    except ModelParseError as e:
        return _error(e, 400)
    except LobExecError as e:
        return _error(e, 422)


@reports.route('/analyze', methods=['POST'])
def analyze():
    """Analysis report for a posted model"""
    try:
        app, payload = _app_from_request()
        tol = _float_arg(payload, 'tol', reports.config.EVENT_TOL)
        return jsonify(app.analyze(tol).to_dict())
    except ModelParseError as e:
        return _error(e, 400)
    except LobExecError as e:
        return _error(e, 422)


@reports.route('/limit')
def limit():
    """Long-time limit, or alternating limits when a second triple is given"""
    try:
        params = [_float_arg(request.args, name) for name in ('beta', 'eta', 'alpha')]
        second = None
        if any(name in request.args for name in ('beta2', 'eta2', 'alpha2')):
            second = [_float_arg(request.args, name) for name in ('beta2', 'eta2', 'alpha2')]
        return jsonify(LobExecApp.limit(params, second).to_dict())
    except ModelParseError as e:
        return _error(e, 400)
    except LobExecError as e:
        return _error(e, 422)
