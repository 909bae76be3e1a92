# config/settings.py
import os
from pathlib import Path
from dotenv import load_dotenv


# ──────────────────────────────────────────────────────────────────────────────
# Base & Env
# ──────────────────────────────────────────────────────────────────────────────
BASE_DIR = Path(__file__).resolve().parent.parent
load_dotenv(BASE_DIR / ".env")  # .env 로드


def _env_float(name: str, default: float) -> float:
    raw = os.getenv(name)
    return float(raw) if raw not in (None, "") else default


def _env_int(name: str, default: int) -> int:
    raw = os.getenv(name)
    return int(raw) if raw not in (None, "") else default


def _env_bool(name: str, default: bool) -> bool:
    # "1/true/yes/on" 다 허용 (대소문자 무시)
    raw = os.getenv(name)
    if raw in (None, ""):
        return default
    return str(raw).strip().lower() in ("1", "true", "yes", "on")


# ──────────────────────────────────────────────────────────────────────────────
# Flow integration (flowcore)
# ──────────────────────────────────────────────────────────────────────────────
T_MAX = _env_float("MCFKIT_T_MAX", 200.0)
R_CONV = _env_float("MCFKIT_R_CONV", 1e-3)
RTOL = _env_float("MCFKIT_RTOL", 1e-9)
ATOL = _env_float("MCFKIT_ATOL", 1e-11)
H_INIT = _env_float("MCFKIT_H_INIT", 1e-3)
H_MAX = _env_float("MCFKIT_H_MAX", 0.05)
CONE_RATIO = _env_float("MCFKIT_CONE_RATIO", 0.1)
FRAME_COND_MAX = _env_float("MCFKIT_FRAME_COND_MAX", 1e12)

# 임계점 탐색
TOL_CRIT = _env_float("MCFKIT_TOL_CRIT", 1e-9)
TOL_NONDEG = _env_float("MCFKIT_TOL_NONDEG", 1e-8)
SEEDS_PER_AXIS = _env_int("MCFKIT_SEEDS_PER_AXIS", 32)
DEDUPE_RADIUS = _env_float("MCFKIT_DEDUPE_RADIUS", 1e-6)

# 섭동(generic perturbation)
PERTURB_EPSILON = _env_float("MCFKIT_PERTURB_EPSILON", 1e-3)
PERTURB_ATTEMPTS = _env_int("MCFKIT_PERTURB_ATTEMPTS", 16)
DEFAULT_SEED = _env_int("MCFKIT_SEED", 0)

# ──────────────────────────────────────────────────────────────────────────────
# Shooting / intersection counting (moduli, inducedmaps)
# ──────────────────────────────────────────────────────────────────────────────
R_LAUNCH = _env_float("MCFKIT_R_LAUNCH", 1e-3)
CURVE_SAMPLES = _env_int("MCFKIT_CURVE_SAMPLES", 720)
IMAGE_RESOLUTION = _env_float("MCFKIT_IMAGE_RESOLUTION", 1e-2)
SIDE_RADIUS = _env_float("MCFKIT_SIDE_RADIUS", 5e-2)
BISECTION_WIDTH = _env_float("MCFKIT_BISECTION_WIDTH", 1e-10)
TOL_TRANSV = _env_float("MCFKIT_TOL_TRANSV", 1e-6)
MAX_CURVE_SAMPLES = _env_int("MCFKIT_MAX_CURVE_SAMPLES", 20000)
PREIMAGE_SEEDS = _env_int("MCFKIT_PREIMAGE_SEEDS", 16)

# continuation: smoothstep 스위치 구간과 최대 허용 신장률
SWITCH_HORIZON = _env_float("MCFKIT_SWITCH_HORIZON", 20.0)
SWITCH_STRETCH_CAP = _env_float("MCFKIT_SWITCH_STRETCH_CAP", 1e3)
LAMBDA_GRID = _env_int("MCFKIT_LAMBDA_GRID", 11)
R_GRID = _env_int("MCFKIT_R_GRID", 11)
R_MAX = _env_float("MCFKIT_R_MAX", 50.0)

# ──────────────────────────────────────────────────────────────────────────────
# Isolation certificates (conley)
# ──────────────────────────────────────────────────────────────────────────────
# 고립 인증용 궤도 시간 상한 (T_MAX 보다 짧게: 경계점은 대부분 금방 빠져나감)
ISOLATION_T_MAX = _env_float("MCFKIT_ISOLATION_T_MAX", 50.0)
BOUNDARY_SPACING = _env_float("MCFKIT_BOUNDARY_SPACING", 1e-2)
INTERIOR_PER_AXIS = _env_int("MCFKIT_INTERIOR_PER_AXIS", 21)
MARGIN_INT = _env_float("MCFKIT_MARGIN_INT", 1e-2)
TOL_CONST = _env_float("MCFKIT_TOL_CONST", 1e-6)
LYAPUNOV_PER_AXIS = _env_int("MCFKIT_LYAPUNOV_PER_AXIS", 41)
PULLBACK_RESOLUTION = _env_float("MCFKIT_PULLBACK_RESOLUTION", 1e-3)
EQUIVARIANCE_TOL = _env_float("MCFKIT_EQUIVARIANCE_TOL", 1e-6)
EQUIVARIANCE_SAMPLES = _env_int("MCFKIT_EQUIVARIANCE_SAMPLES", 100)
REFINE_DEPTH = _env_int("MCFKIT_REFINE_DEPTH", 24)

# ──────────────────────────────────────────────────────────────────────────────
# Runner / reports
# ──────────────────────────────────────────────────────────────────────────────
WORKER_THREADS = _env_int("MCFKIT_THREADS", 1)
HALT_ON_FAIL = _env_bool("MCFKIT_HALT_ON_FAIL", False)
REPORT_SCHEMA = "mcfkit-report/1"
SCENARIO_SCHEMA = "mcfkit-scenario/1"
OUTPUT_DIR = Path(os.getenv("MCFKIT_OUTPUT_DIR", str(BASE_DIR / "out")))

LOG_LEVEL = os.getenv("MCFKIT_LOG_LEVEL", "INFO").upper()

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "plain": {"format": "%(asctime)s %(levelname)s %(name)s: %(message)s"},
    },
    "handlers": {"console": {"class": "logging.StreamHandler", "formatter": "plain"}},
    "loggers": {
        "domains": {"handlers": ["console"], "level": LOG_LEVEL, "propagate": False},
        "": {"handlers": ["console"], "level": "WARNING"},
    },
}
