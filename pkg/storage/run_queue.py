import logging
import threading
import time
from concurrent.futures import Future, ThreadPoolExecutor, wait
from typing import Any, Callable, Optional

logger = logging.getLogger(__name__)

QUEUED = "queued"
RUNNING = "running"
DONE = "done"
FAILED = "failed"


class RunQueue:
    """Thread pool for independent solver runs (seeds, domains).

    Runs move queued -> running -> done | failed. ``close_and_wait`` blocks
    until every run has finished and raises if any of them failed; the
    per-run exceptions stay available in ``errors``.
    """

    def __init__(
        self,
        run_fn: Callable[..., Any],
        workers: int = 1,
        on_state_change: Optional[Callable[[str, str], None]] = None,
    ):
        self.run_fn = run_fn
        self.workers = max(1, workers)
        self._executor: ThreadPoolExecutor | None = None
        self._futures: list[Future] = []
        self._futures_lock = threading.Lock()
        self._closed = False

        self._states: dict[str, str] = {}
        self._states_lock = threading.Lock()

        self._results: dict[str, Any] = {}
        self._errors: dict[str, BaseException] = {}
        self._outcome_lock = threading.Lock()
        self._on_state_change = on_state_change

    def _set_state(self, run_id: str, state: str):
        with self._states_lock:
            self._states[run_id] = state
        if self._on_state_change is None:
            return
        try:
            self._on_state_change(run_id, state)
        except Exception:
            logger.exception("❌ Falha no callback de estado do run %s", run_id)

    def _execute(self, run_id: str, args: tuple, kwargs: dict):
        self._set_state(run_id, RUNNING)
        started = time.monotonic()
        try:
            result = self.run_fn(*args, **kwargs)
        except Exception as exc:
            with self._outcome_lock:
                self._errors[run_id] = exc
            logger.error("❌ run %s falhou: %s", run_id, exc)
            self._set_state(run_id, FAILED)
            return
        with self._outcome_lock:
            self._results[run_id] = result
        logger.info("✅ run %s concluído (%.2fs)", run_id, time.monotonic() - started)
        self._set_state(run_id, DONE)

    def submit(self, run_id: str, *args, **kwargs):
        if self._closed:
            raise RuntimeError("RunQueue already closed")
        with self._states_lock:
            if run_id in self._states:
                raise ValueError(f"duplicate run id: {run_id}")
        if self._executor is None:
            self._executor = ThreadPoolExecutor(max_workers=self.workers, thread_name_prefix="cmg-run")
        self._set_state(run_id, QUEUED)
        future = self._executor.submit(self._execute, run_id, args, kwargs)
        with self._futures_lock:
            self._futures.append(future)

    def close_and_wait(self) -> dict[str, Any]:
        self._closed = True
        with self._futures_lock:
            pending = list(self._futures)
        wait(pending)
        if self._executor:
            self._executor.shutdown(wait=True)

        with self._outcome_lock:
            if self._errors:
                raise RuntimeError(f"Falha em {len(self._errors)} de {len(self._states)} runs: {sorted(self._errors)}")
            return dict(self._results)

    @property
    def states(self) -> dict[str, str]:
        with self._states_lock:
            return dict(self._states)

    @property
    def results(self) -> dict[str, Any]:
        with self._outcome_lock:
            return dict(self._results)

    @property
    def errors(self) -> dict[str, BaseException]:
        with self._outcome_lock:
            return dict(self._errors)
