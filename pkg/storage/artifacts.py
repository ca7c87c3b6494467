import csv
import json
import logging
import math
import os
import threading
from pathlib import Path
from typing import Iterable

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ("iter", "tau", "loss", "bound", "epsilon", "wallclock_ms")

_append_lock = threading.Lock()


def _finite_or_none(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def write_json(path: Path, payload: dict):
    """Atomic write via a sibling .tmp file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    try:
        with open(tmp, "w", encoding="utf-8") as f:
            json.dump(payload, f, indent=2, ensure_ascii=False)
            f.write("\n")
        os.replace(tmp, path)
    except Exception as e:
        logger.error("❌ Failed to write JSON %s: %s", path, e)
        raise
    logger.info("💾 %s", path)


def get_json(path: Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"JSON not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def append_jsonl(path: Path, payload: dict):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    line = json.dumps(payload, ensure_ascii=False)
    with _append_lock:
        with open(path, "a", encoding="utf-8") as f:
            f.write(line + "\n")


def write_trace_csv(path: Path, rows: Iterable) -> int:
    """One row per TraceRow; an unevaluated epsilon is an empty cell."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(TRACE_COLUMNS)
        for row in rows:
            writer.writerow(
                [
                    row.iter,
                    repr(float(row.tau)),
                    repr(float(row.loss)),
                    repr(float(row.bound)),
                    "" if row.epsilon is None else repr(float(row.epsilon)),
                    f"{row.wallclock_ms:.3f}",
                ]
            )
            count += 1
    logger.info("💾 %s (%d rows)", path, count)
    return count


def read_trace_csv(path: Path) -> list[dict]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"trace not found: {path}")
    out = []
    with open(path, "r", encoding="utf-8", newline="") as f:
        for record in csv.DictReader(f):
            out.append(
                {
                    "iter": int(record["iter"]),
                    "tau": float(record["tau"]),
                    "loss": float(record["loss"]),
                    "bound": float(record["bound"]),
                    "epsilon": None if record["epsilon"] == "" else float(record["epsilon"]),
                    "wallclock_ms": float(record["wallclock_ms"]),
                }
            )
    return out


def jsonable(value):
    """numpy-free copy of nested lists, dicts and floats for json.dump."""
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if hasattr(value, "tolist"):
        return jsonable(value.tolist())
    if isinstance(value, float):
        return _finite_or_none(value)
    return value
