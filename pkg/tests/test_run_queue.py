import threading
import time

import pytest

from storage.run_queue import RunQueue


def test_run_queue_tracks_states_and_results():
    transitions = []
    lock = threading.Lock()

    def record(run_id, state):
        with lock:
            transitions.append((run_id, state))

    queue = RunQueue(lambda seed: seed * 10, workers=2, on_state_change=record)
    queue.submit("pgl-seed0", 0)
    queue.submit("pgl-seed1", 1)
    results = queue.close_and_wait()

    assert results == {"pgl-seed0": 0, "pgl-seed1": 10}
    assert queue.states == {"pgl-seed0": "done", "pgl-seed1": "done"}
    for run_id in results:
        states = [s for r, s in transitions if r == run_id]
        assert states == ["queued", "running", "done"]


def test_run_queue_raises_on_failure_and_keeps_errors():
    def flaky(seed):
        if seed == 1:
            raise ValueError("boom")
        return seed

    queue = RunQueue(flaky, workers=1)
    queue.submit("a", 0)
    queue.submit("b", 1)

    with pytest.raises(RuntimeError, match="Falha em 1 de 2 runs"):
        queue.close_and_wait()

    assert queue.states == {"a": "done", "b": "failed"}
    assert isinstance(queue.errors["b"], ValueError)
    assert queue.results == {"a": 0}


def test_duplicate_run_id_rejected():
    queue = RunQueue(lambda: None)
    queue.submit("x")
    with pytest.raises(ValueError):
        queue.submit("x")
    queue.close_and_wait()


def test_submit_after_close_rejected():
    queue = RunQueue(lambda: None)
    queue.close_and_wait()
    with pytest.raises(RuntimeError):
        queue.submit("late")


def test_runs_overlap_with_several_workers():
    active = 0
    peak = 0
    lock = threading.Lock()

    def slow():
        nonlocal active, peak
        with lock:
            active += 1
            peak = max(peak, active)
        time.sleep(0.05)
        with lock:
            active -= 1

    queue = RunQueue(slow, workers=3)
    for k in range(3):
        queue.submit(f"run{k}")
    queue.close_and_wait()

    assert peak >= 2


def test_callback_failure_does_not_break_the_run():
    def broken_callback(run_id, state):
        raise RuntimeError("callback")

    queue = RunQueue(lambda: "ok", on_state_change=broken_callback)
    queue.submit("r")
    assert queue.close_and_wait() == {"r": "ok"}
