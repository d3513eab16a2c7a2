import time

import pytest

from skewinfo.batch_runner import BatchRunner, BatchRunnerError


def slow_square(x):
    time.sleep(0.01 * (5 - x))
    return x * x


class TestBatchRunner:
    def test_results_keep_input_order(self):
        results = BatchRunner(max_workers=4).map(slow_square, [0, 1, 2, 3, 4])
        assert [r.index for r in results] == [0, 1, 2, 3, 4]
        assert [r.data for r in results] == [0, 1, 4, 9, 16]

    def test_failures_are_recorded(self):
        def invert(x):
            return 1.0 / x

        results = BatchRunner(max_workers=2).map(invert, [1.0, 0.0, 2.0], labels=["a", "b", "c"])
        assert [r.success for r in results] == [True, False, True]
        assert results[1].label == "b"
        assert results[1].message.startswith("ZeroDivisionError")
        assert results[1].data is None

    def test_single_worker_runs_inline(self):
        results = BatchRunner(max_workers=1).map(lambda x: x + 1, range(3))
        assert [r.data for r in results] == [1, 2, 3]

    def test_summary(self):
        runner = BatchRunner(max_workers=2)
        results = runner.map(lambda x: 1 // x, [1, 0, 1, 1], labels=["w", "x", "y", "z"])
        summary = runner.generate_summary(results)
        assert summary["total_tasks"] == 4
        assert summary["failed"] == 1
        assert summary["success_rate"] == 75.0
        assert summary["failed_tasks"] == ["x"]

    def test_empty_summary(self):
        assert BatchRunner().generate_summary([])["success_rate"] == 0

    def test_invalid_worker_count(self):
        with pytest.raises(BatchRunnerError):
            BatchRunner(max_workers=0)

    def test_environment(self, monkeypatch):
        monkeypatch.setenv("SKEWINFO_THREADS", "3")
        assert BatchRunner.from_environment().max_workers == 3
        monkeypatch.delenv("SKEWINFO_THREADS")
        assert BatchRunner.from_environment(default=2).max_workers == 2

    def test_environment_rejects_garbage(self, monkeypatch):
        monkeypatch.setenv("SKEWINFO_THREADS", "many")
        with pytest.raises(BatchRunnerError, match="SKEWINFO_THREADS"):
            BatchRunner.from_environment()
