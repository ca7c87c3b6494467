# utils/settings.py
import os

from dotenv import load_dotenv

load_dotenv()

LOG_LEVEL = os.getenv("CMG_LOG_LEVEL", "INFO").upper()
LOG_FORMAT = os.getenv("CMG_LOG_FORMAT", "text").lower()
OUTPUT_DIR = os.getenv("CMG_OUTPUT_DIR", "runs")


def _int_env(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        return int(raw)
    except ValueError:
        return default


JOBS = max(1, _int_env("CMG_JOBS", 1))
