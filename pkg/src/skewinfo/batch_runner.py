import os
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence

from .skew_logger import get_logger


@dataclass
class TaskResult:
    index: int
    label: str
    success: bool
    message: str
    data: Any = None


class BatchRunnerError(Exception):
    """Custom exception for BatchRunner errors."""


class BatchRunner:
    """
    Parallel runner for independent numerical tasks.

    Tasks (divergence probes over an a-grid, replicate fits, per-context
    fits) are submitted to a thread pool; results come back in submission
    order whatever the completion order, so downstream reductions are
    deterministic. A failing task is recorded, never raised.
    """

    ENV_THREADS = "SKEWINFO_THREADS"
    DEFAULT_WORKERS = 4

    def __init__(self, max_workers: int = DEFAULT_WORKERS):
        """
        Initialize the BatchRunner.

        Args:
            max_workers (int): Maximum number of worker threads.

        Raises:
            BatchRunnerError: If max_workers is not positive.
        """
        if max_workers < 1:
            raise BatchRunnerError(f"max_workers must be positive, got {max_workers}")
        self.max_workers = max_workers
        self.logger = get_logger(__name__)

    @classmethod
    def from_environment(cls, default: int = DEFAULT_WORKERS) -> "BatchRunner":
        """Build a runner capped by SKEWINFO_THREADS when it is set."""
        raw = os.environ.get(cls.ENV_THREADS)
        if raw is None or not raw.strip():
            return cls(default)
        try:
            return cls(int(raw))
        except ValueError as e:
            raise BatchRunnerError(f"{cls.ENV_THREADS} must be a positive integer, got '{raw}'") from e

    def map(
        self,
        func: Callable[[Any], Any],
        items: Sequence[Any],
        labels: Optional[Sequence[str]] = None,
    ) -> List[TaskResult]:
        """
        Apply ``func`` to every item in parallel.

        Args:
            func (Callable[[Any], Any]): Task body; its return value becomes ``data``.
            items (Sequence[Any]): Task inputs.
            labels (Optional[Sequence[str]]): Names used in log messages.

        Returns:
            List[TaskResult]: One result per item, in input order.
        """
        labels = list(labels) if labels is not None else [str(i) for i in range(len(items))]
        results: List[Optional[TaskResult]] = [None] * len(items)
        if self.max_workers == 1:
            for i, item in enumerate(items):
                results[i] = self._run_task(i, labels[i], func, item)
            return results

        with ThreadPoolExecutor(max_workers=self.max_workers) as executor:
            future_to_index = {
                executor.submit(self._run_task, i, labels[i], func, item): i
                for i, item in enumerate(items)
            }
            for future in as_completed(future_to_index):
                i = future_to_index[future]
                results[i] = future.result()
        return results

    def generate_summary(self, results: List[TaskResult]) -> Dict[str, Any]:
        """
        Summarize a batch.

        Args:
            results (List[TaskResult]): Results from ``map``.

        Returns:
            Dict[str, Any]: Totals, success rate and failed labels.
        """
        total = len(results)
        successful = sum(1 for r in results if r.success)
        return {
            "total_tasks": total,
            "successful": successful,
            "failed": total - successful,
            "success_rate": (successful / total) * 100 if total > 0 else 0,
            "failed_tasks": [r.label for r in results if not r.success],
        }

    def _run_task(self, index: int, label: str, func: Callable[[Any], Any], item: Any) -> TaskResult:
        """Run one task and capture its outcome."""
        try:
            data = func(item)
            self.logger.debug(f"Task {label} finished")
            return TaskResult(index, label, True, "ok", data)
        except Exception as e:
            self.logger.warning(f"Task {label} failed: {str(e)}")
            return TaskResult(index, label, False, f"{type(e).__name__}: {str(e)}")

    def __repr__(self) -> str:
        """Provide a string representation of the BatchRunner."""
        return f"BatchRunner(max_workers={self.max_workers})"
