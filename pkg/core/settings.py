import logging
import os

from dotenv import load_dotenv

# ----------------------------
# Load environment variables
# ----------------------------
load_dotenv()

LOG_FORMAT = "%(asctime)s %(levelname)-7s %(name)s: %(message)s"


def _int_env(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        return int(raw)
    except ValueError:
        raise ValueError(f"Environment variable {name} must be an integer, got '{raw}'")


def log_level() -> str:
    return os.getenv("MMW_LOG_LEVEL", "INFO").upper()


def default_workers() -> int:
    return max(1, _int_env("MMW_WORKERS", os.cpu_count() or 1))


def default_out_dir() -> str:
    return os.getenv("MMW_OUT_DIR", "runs")


def torch_threads() -> int:
    # One intra-op thread keeps float reductions in a fixed order.
    return max(1, _int_env("MMW_TORCH_THREADS", 1))


def progress_enabled() -> bool:
    return os.getenv("MMW_PROGRESS", "1").strip() not in ("0", "false", "no")


def configure_logging(level: str = None) -> None:
    logging.basicConfig(level=(level or log_level()), format=LOG_FORMAT)
