import os
import pytz
from pathlib import Path


class Config:
    # Parallelism
    THREADS = int(os.getenv('LOBEXEC_THREADS', '1'))
    PARALLEL_MIN_NODES = int(os.getenv('LOBEXEC_PARALLEL_MIN_NODES', '256'))

    # Model limits
    NODE_CAP = int(os.getenv('LOBEXEC_NODE_CAP', '1000000'))
    PROB_TOL = 1e-12
    STRUCTURAL_MARGIN = 1e-12
    DENOMINATOR_GUARD = 1e-14

    # Tolerances
    EVENT_TOL = float(os.getenv('LOBEXEC_EVENT_TOL', '1e-9'))
    ORACLE_TOL = float(os.getenv('LOBEXEC_ORACLE_TOL', '1e-4'))
    LIMIT_TOL = 1e-12
    LIMIT_MAX_ITER = 10**6

    # Oracle settings
    MC_SAMPLES = int(os.getenv('LOBEXEC_MC_SAMPLES', '100000'))
    MC_SEED = int(os.getenv('LOBEXEC_MC_SEED', '0'))
    GRID_POINTS = int(os.getenv('LOBEXEC_GRID_POINTS', '21'))
    GRID_ROUNDS = int(os.getenv('LOBEXEC_GRID_ROUNDS', '4'))
    ORACLE_MAX_DEPTH = 4
    ORACLE_MAX_CHILDREN = 4
    ORACLE_MAX_WORK = float(os.getenv('LOBEXEC_ORACLE_MAX_WORK', '1e9'))

    # Timezone settings
    TIMEZONE = pytz.timezone(os.getenv('LOBEXEC_TZ', 'UTC'))

    # Logging
    LOG_DIR = Path(os.getenv('LOBEXEC_LOG_DIR', 'logs'))
    LOG_FILE = LOG_DIR / "lobexec.log"
    LOG_LEVEL = os.getenv('LOBEXEC_LOG_LEVEL', 'INFO').upper()

    # Report server
    WEB_HOST = os.getenv('LOBEXEC_WEB_HOST', '127.0.0.1')
    WEB_PORT = int(os.getenv('LOBEXEC_WEB_PORT', '5000'))
    HTTP_TIMEOUT = float(os.getenv('LOBEXEC_HTTP_TIMEOUT', '30'))

    @classmethod
    def validate(cls) -> bool:
        """Validate settings that would make the solvers misbehave"""
        if cls.THREADS < 1:
            raise ValueError(f"LOBEXEC_THREADS must be at least 1, got {cls.THREADS}")
        if cls.GRID_POINTS < 3 or cls.GRID_POINTS % 2 == 0:
            raise ValueError(
                f"Grid points ({cls.GRID_POINTS}) must be an odd number "
                "of at least 3"
            )
        if cls.GRID_ROUNDS < 1:
            raise ValueError(f"Grid rounds must be at least 1, got {cls.GRID_ROUNDS}")
        if cls.MC_SAMPLES < 1:
            raise ValueError(f"Monte Carlo samples must be at least 1, got {cls.MC_SAMPLES}")
        if not cls.ORACLE_MAX_WORK > 0:
            raise ValueError(f"Oracle work limit must be positive, got {cls.ORACLE_MAX_WORK}")
        return True
