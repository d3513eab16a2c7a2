import csv
import json
from io import StringIO
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np

from . import __version__
from .density import CurveTable
from .exp_matcher import NaturalSpace, SingularityPrediction, VerificationRecord
from .fisher_information import InfoMatrix, RankReport
from .ml_fitter import ExperimentSummary, FitResult
from .skew_logger import get_logger


class ReportWriterError(Exception):
    """Custom exception for ReportWriter errors."""


class ReportWriter:
    """
    Renders results as CSV tables, JSON sidecars and ``key: value`` text.

    Every CSV starts with a comment line naming the tool version, the seed
    and the quadrature settings; numbers are written with 17 significant
    digits so that tables reproduce bit for bit.
    """

    NUMBER_FORMAT = "%.17g"
    TEXT_FORMAT = "%.6g"

    def __init__(self, seed: int = 0, quadrature_settings: Optional[Dict[str, Any]] = None):
        self.seed = seed
        self.quadrature_settings = dict(quadrature_settings or {})
        self.logger = get_logger(__name__)

    def header_line(self) -> str:
        settings = ",".join(f"{k}={v}" for k, v in self.quadrature_settings.items())
        return f"# skewinfo {__version__}; seed={self.seed}; quadrature={settings or 'default'}"

    def table_csv(self, columns: Sequence[str], rows: Any) -> str:
        """
        Render a numeric table as CSV text.

        Args:
            columns (Sequence[str]): Header names.
            rows: 2-D array-like of numbers, one row per record.

        Returns:
            str: The CSV text including the comment header.
        """
        try:
            output = StringIO()
            output.write(self.header_line() + "\n")
            writer = csv.writer(output, lineterminator="\n")
            writer.writerow(columns)
            for row in np.atleast_2d(np.asarray(rows, dtype=float)):
                writer.writerow([self._number(v) for v in row])
            return output.getvalue()
        except Exception as e:
            raise ReportWriterError(f"Failed to render CSV table: {str(e)}") from e

    def matrix_csv(self, info: InfoMatrix) -> str:
        """Information matrix with a label column and a label header."""
        output = StringIO()
        output.write(self.header_line() + "\n")
        writer = csv.writer(output, lineterminator="\n")
        writer.writerow([""] + list(info.labels))
        for label, row in zip(info.labels, info.gamma):
            writer.writerow([label] + [self._number(v) for v in row])
        return output.getvalue()

    def matrix_metadata(self, info: InfoMatrix) -> Dict[str, Any]:
        return {
            "tool": f"skewinfo {__version__}",
            "kind": info.kind.value,
            "labels": list(info.labels),
            "blocks": {name: list(bounds) for name, bounds in info.blocks.items()},
            "standardization": info.rule,
            "scheme": info.scheme,
            "theta0": info.theta0.to_dict(),
            "error": info.err.tolist(),
            "max_error": info.max_error,
            "seed": self.seed,
            "quadrature": self.quadrature_settings,
        }

    def write_matrix(self, info: InfoMatrix, path: Union[str, Path]) -> List[Path]:
        """
        Write the matrix CSV and its JSON sidecar (same stem, .json suffix).

        Returns:
            List[Path]: The CSV and JSON paths.
        """
        path = Path(path)
        sidecar = path.with_suffix(".json")
        self._write(path, self.matrix_csv(info))
        self._write(sidecar, json.dumps(self.matrix_metadata(info), indent=2))
        return [path, sidecar]

    def curves_csv(self, curves: Sequence[CurveTable]) -> str:
        """One x column and one density column per delta."""
        if not curves:
            raise ReportWriterError("No curves to write")
        x = curves[0].x
        for curve in curves[1:]:
            if curve.x.shape != x.shape or np.any(curve.x != x):
                raise ReportWriterError("Curves must share one grid")
        columns = ["x"] + [f"delta={self._delta_label(c.delta)}" for c in curves]
        return self.table_csv(columns, np.column_stack([x] + [c.pdf for c in curves]))

    def samples_csv(self, samples: np.ndarray) -> str:
        samples = np.atleast_2d(np.asarray(samples, dtype=float))
        return self.table_csv([f"x{j + 1}" for j in range(samples.shape[1])], samples)

    def experiment_csv(self, summary: ExperimentSummary) -> str:
        rows = np.column_stack([np.arange(summary.replicates), summary.delta_hats])
        return self.table_csv(["replicate", "delta_hat"], rows)

    def format_information(self, info: InfoMatrix) -> str:
        """Matrix entries with their error estimates, one row per line."""
        lines = [
            f"matrix: {info.kind.value} ({info.gamma.shape[0]}x{info.gamma.shape[1]})",
            f"standardization: {info.rule}",
            f"scheme: {info.scheme}",
            "labels: " + ", ".join(info.labels),
        ]
        for label, row, err in zip(info.labels, info.gamma, info.err):
            cells = "  ".join(f"{self.TEXT_FORMAT % v} +- {err_v:.1e}" for v, err_v in zip(row, err))
            lines.append(f"{label}: {cells}")
        return "\n".join(lines)

    def format_rank_report(self, report: RankReport) -> str:
        lines = [
            f"kind: {report.kind.value}",
            f"rank: {report.rank}",
            f"nullity: {report.nullity}",
            f"tolerance: {report.tolerance_used:.3e}",
            f"indeterminate: {str(report.indeterminate).lower()}",
            "singular_values: " + self._vector(report.singular_values),
        ]
        if report.nullity:
            for i in range(report.nullity):
                lines.append(f"null_vector_{i + 1}: " + self._vector(report.null_basis[:, i]))
            if report.V is not None and report.W is not None:
                lines.append("V: " + self._vector(report.V))
                lines.append("W: " + self._vector(report.W))
        return "\n".join(lines)

    def format_prediction(self, prediction: SingularityPrediction) -> str:
        lines = [
            f"model: {prediction.model_tag}",
            f"verdict: {prediction.verdict}",
            f"nullity: {prediction.nullity}",
            f"residual: {prediction.residual:.3e}",
        ]
        if prediction.nullity:
            lines.append("V: " + self._vector(prediction.V))
            lines.append("W: " + self._vector(prediction.W))
        for key, value in prediction.a_values.items():
            lines.append(f"a{key}: {value:.12g}")
        if prediction.matched_kernel is not None:
            lines.append(f"matched_kernel: {prediction.matched_kernel.family_tag}")
        if prediction.log_density_gap is not None:
            lines.append(f"log_density_gap: {prediction.log_density_gap:.3e}")
        return "\n".join(lines)

    def format_verification(self, record: VerificationRecord) -> str:
        lines = [
            f"passed: {str(record.passed).lower()}",
            f"predicted_nullity: {record.predicted_nullity}",
            f"measured_nullity: {record.measured_nullity}",
            f"indeterminate: {str(record.indeterminate).lower()}",
        ]
        if record.contexts:
            lines.append(f"contexts: {len(record.contexts)}")
            lines.append(f"a_spread: {record.a_spread:.3e}")
            lines.append(f"max_residual: {record.max_residual:.3e}")
            lines.append(f"grid_resolution: {record.grid_resolution}")
        lines.extend(f"message: {m}" for m in record.messages)
        return "\n".join(lines)

    def format_natural_space(self, space: NaturalSpace) -> str:
        lines = [
            f"skewer: {space.skewer_tag}",
            f"sign_pattern: {space.sign_pattern}",
            f"convergent: {int(np.sum(space.convergent))}/{space.a_grid.size}",
            f"contiguous: {str(space.contiguous).lower()}",
        ]
        if space.boundaries:
            lines.append("boundaries: " + self._vector(np.asarray(space.boundaries)))
        return "\n".join(lines)

    def format_fit(self, result: FitResult) -> str:
        theta = result.theta_hat
        lines = [
            f"loglik: {result.loglik:.12g}",
            f"converged: {str(result.converged).lower()}",
            f"iterations: {result.iterations}",
            "mu: " + self._vector(theta.mu),
            "sigma_half: " + self._vector(theta.sigma_half.ravel()),
            "delta: " + self._vector(theta.delta),
            f"information_singular: {str(result.information_singular).lower()}",
        ]
        if result.stderr_proxy is not None:
            lines.append("stderr_chart: " + self._vector(result.stderr_proxy))
        return "\n".join(lines)

    def format_experiment(self, summary: ExperimentSummary) -> str:
        return "\n".join([
            f"replicates: {summary.replicates}",
            f"n_per_replicate: {summary.n_per_replicate}",
            f"seed: {summary.seed}",
            f"bimodality_coefficient: {summary.bimodality_coefficient:.6f}",
            f"sign_split: {summary.sign_split:.6f}",
            f"failed: {len(summary.failed)}",
            f"success_rate: {summary.success_rate:.2f}",
        ])

    def write_text(self, text: str, path: Union[str, Path]) -> Path:
        path = Path(path)
        self._write(path, text if text.endswith("\n") else text + "\n")
        return path

    def _write(self, path: Path, content: str) -> None:
        try:
            path.write_text(content, encoding="utf-8")
        except OSError as e:
            raise ReportWriterError(f"Failed to write {path}: {str(e)}") from e
        self.logger.info(f"Wrote {path}")

    def _number(self, value: float) -> str:
        return self.NUMBER_FORMAT % value

    def _vector(self, values: np.ndarray) -> str:
        return "[" + ", ".join(self.TEXT_FORMAT % v for v in np.ravel(values)) + "]"

    def _delta_label(self, delta: Optional[np.ndarray]) -> str:
        if delta is None:
            return "?"
        return ";".join(f"{v:g}" for v in np.ravel(delta))

    def __repr__(self) -> str:
        """Provide a string representation of the ReportWriter."""
        return f"ReportWriter(seed={self.seed})"
