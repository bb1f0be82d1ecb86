# app/services/core/config.py
import os
import sys
from pathlib import Path

from dotenv import load_dotenv
from loguru import logger

# ──────────────────────────────────────────────────────────────────────────────
#  Base path (repository root)
# ──────────────────────────────────────────────────────────────────────────────
BASE_DIR = Path(__file__).resolve().parent.parent.parent.parent

# ──────────────────────────────────────────────────────────────────────────────
#  Local development: read .env.dev only if it actually exists
# ──────────────────────────────────────────────────────────────────────────────
ENV_FILE = BASE_DIR / ".env.dev"
if ENV_FILE.exists():
    load_dotenv(ENV_FILE)

# ──────────────────────────────────────────────────────────────────────────────
#  Environment variables
# ──────────────────────────────────────────────────────────────────────────────
LOG_LEVEL = os.getenv("LONGIT_LOG_LEVEL", "INFO").upper()
LOG_FILE = os.getenv("LONGIT_LOG_FILE")
DEFAULT_JOBS = int(os.getenv("LONGIT_JOBS", "1"))
DEFAULT_OUT_DIR = Path(os.getenv("LONGIT_OUT_DIR", "reports"))
SHOW_PROGRESS = os.getenv("LONGIT_PROGRESS", "true").lower() == "true"

# ──────────────────────────────────────────────────────────────────────────────
#  Sanity checks
# ──────────────────────────────────────────────────────────────────────────────
_invalid = [
    name for name, ok in {
        "LONGIT_LOG_LEVEL": LOG_LEVEL in {"TRACE", "DEBUG", "INFO", "SUCCESS", "WARNING", "ERROR", "CRITICAL"},
        "LONGIT_JOBS": DEFAULT_JOBS != 0,
    }.items() if not ok
]
if _invalid:
    raise EnvironmentError(f"Invalid environment settings: {', '.join(_invalid)}")

# ──────────────────────────────────────────────────────────────────────────────
#  Logging setup
# ──────────────────────────────────────────────────────────────────────────────
LOG_FORMAT = (
    "<green>{time:YYYY-MM-DD HH:mm:ss.SSS}</green> | "
    "<level>{level:<8}</level> | "
    "<cyan>{name}:{function}:{line}</cyan> - "
    "<b>{message}</b>"
)

logger.remove()
# stderr keeps stdout free for command output (transition matrix, diagnostics)
logger.add(sys.stderr, level=LOG_LEVEL, format=LOG_FORMAT, colorize=True)
if LOG_FILE:
    logger.add(LOG_FILE, level="DEBUG", format=LOG_FORMAT, rotation="10 MB", colorize=False)
log = logger

log.debug(
    f"Configuration loaded: "
    f"LOG_LEVEL={LOG_LEVEL}, "
    f"LOG_FILE={LOG_FILE}, "
    f"DEFAULT_JOBS={DEFAULT_JOBS}, "
    f"DEFAULT_OUT_DIR={DEFAULT_OUT_DIR}, "
    f"SHOW_PROGRESS={SHOW_PROGRESS}"
)
