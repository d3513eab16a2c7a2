import argparse
import csv
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import __version__
from .batch_runner import BatchRunner, BatchRunnerError
from .curve_plotter import CurvePlotter, CurvePlotterError
from .density import DensityError
from .exp_matcher import ExpMatcher, ExpMatcherError, VerificationFailure
from .fisher_information import AssumptionViolationError, FisherError, FisherInformation, InfoKind
from .ml_fitter import MLFitter, MLFitterError
from .model_spec import ModelSpec, ModelSpecError, ModelSpecParser, ModelSpecWriter
from .model_validator import ModelValidator, ModelValidatorError
from .models import KernelRegistry, ModelError, Standardizer
from .quadrature import QuadratureError
from .report_writer import ReportWriter, ReportWriterError
from .skew_logger import RunLogger, RunLoggerError

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_VERIFICATION = 3
EXIT_ASSUMPTION = 4

DOMAIN_ERRORS = (
    ModelSpecError,
    ModelError,
    QuadratureError,
    DensityError,
    FisherError,
    ExpMatcherError,
    MLFitterError,
    ModelValidatorError,
    ReportWriterError,
    CurvePlotterError,
    BatchRunnerError,
    RunLoggerError,
)


class SkewInfoCLI:
    """
    The ``skewinfo`` command line.

    Every subcommand reads a TOML model spec, validates the kernel and the
    skewer it names and then runs one library operation. Exit codes: 0 on
    success, 2 for spec, validation and input errors, 3 when a verification
    fails and 4 when an integral a required assumption needs diverges.
    """

    PLOT_GRID = (-4.0, 4.0, 401)
    DEFAULT_DELTAS = "0,0.5,2,6"

    def __init__(self):
        self.parser = self._build_parser()
        self.run_logger: Optional[RunLogger] = None

    def run(self, argv: Optional[Sequence[str]] = None) -> int:
        """
        Parse arguments and dispatch to a subcommand.

        Args:
            argv (Optional[Sequence[str]]): Arguments without the program name.

        Returns:
            int: Process exit code.
        """
        args = self.parser.parse_args(argv)
        try:
            self.run_logger = RunLogger(log_directory=args.log_dir, console_output=True, log_level=args.log_level)
            return args.handler(args)
        except VerificationFailure as e:
            return self._fail(args, EXIT_VERIFICATION, str(e))
        except AssumptionViolationError as e:
            return self._fail(args, EXIT_ASSUMPTION, str(e))
        except DOMAIN_ERRORS as e:
            return self._fail(args, EXIT_INPUT, str(e))

    def _build_parser(self) -> argparse.ArgumentParser:
        parser = argparse.ArgumentParser(
            prog="skewinfo",
            description="Fisher information, singularity diagnosis and fitting for skew-symmetric models",
        )
        parser.add_argument("--version", action="version", version=f"skewinfo {__version__}")
        parser.add_argument("--log-dir", default=None, help="directory for the dated run log")
        parser.add_argument("--log-level", default="WARNING", help="DEBUG, INFO, WARNING, ERROR or CRITICAL")
        commands = parser.add_subparsers(dest="command", required=True)

        info = commands.add_parser("info", help="information matrix at the symmetry point and its rank")
        info.add_argument("spec")
        info.add_argument("--full", action="store_true", help="include the scatter block")
        info.add_argument("--out", help="matrix CSV path; a JSON sidecar is written next to it")
        info.set_defaults(handler=self._cmd_info)

        predict = commands.add_parser("predict", help="predict singularity and cross-check it")
        predict.add_argument("spec")
        predict.set_defaults(handler=self._cmd_predict)

        match = commands.add_parser("match", help="build the degenerate kernel of the spec's skewer")
        match.add_argument("spec")
        match.add_argument("--out", help="path of the matched-kernel spec; printed when omitted")
        match.set_defaults(handler=self._cmd_match)

        plot = commands.add_parser("plot", help="density curves for several delta values")
        plot.add_argument("spec")
        plot.add_argument("--deltas", default=self.DEFAULT_DELTAS, help="comma-separated delta values")
        plot.add_argument("--axis", type=int, default=0, help="coordinate that varies (0-based)")
        plot.add_argument("--out", required=True, help="curve CSV path")
        plot.add_argument("--svg", help="optional SVG rendering")
        plot.set_defaults(handler=self._cmd_plot)

        sample = commands.add_parser("sample", help="exact draws from the model")
        sample.add_argument("spec")
        sample.add_argument("-n", type=int, required=True)
        sample.add_argument("--seed", type=int, default=0)
        sample.add_argument("--out", required=True)
        sample.set_defaults(handler=self._cmd_sample)

        fit = commands.add_parser("fit", help="maximum-likelihood fit to a CSV data file")
        fit.add_argument("spec")
        fit.add_argument("--data", required=True)
        fit.set_defaults(handler=self._cmd_fit)

        experiment = commands.add_parser("experiment", help="refit replicates drawn at the symmetry point")
        experiment.add_argument("spec")
        experiment.add_argument("-n", type=int, required=True)
        experiment.add_argument("-R", type=int, required=True)
        experiment.add_argument("--seed", type=int, default=0)
        experiment.add_argument("--out", required=True)
        experiment.set_defaults(handler=self._cmd_experiment)

        validate = commands.add_parser("validate", help="check the spec's kernel and skewer identities")
        validate.add_argument("spec")
        validate.set_defaults(handler=self._cmd_validate)
        return parser

    def _load(self, path: str) -> ModelSpec:
        spec = ModelSpecParser().parse_file(path)
        validator = ModelValidator(standardizer=Standardizer(spec.quadrature()))
        is_valid, errors, warnings = validator.validate(spec.kernel, spec.skewer)
        for warning in warnings:
            self.run_logger.log_custom("WARNING", f"{path}: {warning}")
        if not is_valid:
            raise ModelSpecError("; ".join(errors), source=path)
        return spec

    def _services(self, spec: ModelSpec):
        quadrature = spec.quadrature()
        runner = BatchRunner.from_environment()
        fisher = FisherInformation(quadrature, runner)
        matcher = ExpMatcher(quadrature, runner, fisher, Standardizer(quadrature))
        return quadrature, runner, fisher, matcher

    def _writer(self, spec: ModelSpec, seed: int = 0) -> ReportWriter:
        return ReportWriter(seed=seed, quadrature_settings=spec.quadrature().settings())

    def _cmd_info(self, args: argparse.Namespace) -> int:
        spec = self._load(args.spec)
        _, _, fisher, _ = self._services(spec)
        model = spec.model().with_theta(spec.theta.with_delta(np.zeros(spec.dim)))
        which = InfoKind.FULL if args.full else InfoKind.REDUCED
        info = fisher.information(model, which)
        report = fisher.rank_diagnosis(info)
        self.run_logger.log_information(model.tag, which.value, info.max_error)
        self.run_logger.log_rank(model.tag, report.rank, report.nullity, report.indeterminate)

        writer = self._writer(spec)
        print(writer.format_information(info))
        print(writer.format_rank_report(report))
        if args.out:
            writer.write_matrix(info, args.out)
        return EXIT_OK

    def _cmd_predict(self, args: argparse.Namespace) -> int:
        spec = self._load(args.spec)
        _, _, fisher, matcher = self._services(spec)
        prediction = matcher.predict_singularity(spec.kernel, spec.skewer)
        model = spec.model().with_theta(spec.theta.with_delta(np.zeros(spec.dim)))
        report = fisher.rank_diagnosis(fisher.information(model, InfoKind.REDUCED))
        record = matcher.verify_proposition(spec.kernel, spec.skewer, report)
        self.run_logger.log_prediction(prediction.model_tag, prediction.verdict, prediction.a_values)
        self.run_logger.log_verification(prediction.model_tag, record.passed, record.messages)

        writer = self._writer(spec)
        print(writer.format_prediction(prediction))
        print(writer.format_verification(record))
        return EXIT_OK if record.passed else EXIT_VERIFICATION

    def _cmd_match(self, args: argparse.Namespace) -> int:
        spec = self._load(args.spec)
        _, _, _, matcher = self._services(spec)
        marginal = spec.skewer.marginal()
        writer = self._writer(spec)
        print(writer.format_natural_space(matcher.natural_space(marginal)))
        kernel = matcher.construct_degenerate(spec.skewer, spec.standardization)
        print(f"matched_kernel: {kernel.family_tag}")

        spec_writer = ModelSpecWriter(KernelRegistry(Standardizer(spec.quadrature())))
        document = spec_writer.document(kernel, spec.skewer, quadrature_settings=spec.quadrature_settings)
        if args.out:
            spec_writer.write(document, args.out)
            print(f"matched_spec: {args.out}")
        else:
            print(spec_writer.dumps(document), end="")
        return EXIT_OK

    def _cmd_plot(self, args: argparse.Namespace) -> int:
        spec = self._load(args.spec)
        deltas = self._parse_deltas(args.deltas)
        model = spec.model()
        curves = [
            model.with_theta(spec.theta.with_delta(np.full(spec.dim, d))).curve(args.axis, self.PLOT_GRID)
            for d in deltas
        ]
        self._writer(spec).write_text(self._writer(spec).curves_csv(curves), args.out)
        if args.svg:
            CurvePlotter(title=model.tag).save(curves, args.svg)
        return EXIT_OK

    def _cmd_sample(self, args: argparse.Namespace) -> int:
        spec = self._load(args.spec)
        samples = spec.model().sample(args.n, args.seed)
        writer = self._writer(spec, args.seed)
        writer.write_text(writer.samples_csv(samples), args.out)
        return EXIT_OK

    def _cmd_fit(self, args: argparse.Namespace) -> int:
        spec = self._load(args.spec)
        _, runner, _, _ = self._services(spec)
        data = self._read_data(args.data)
        result = MLFitter(runner=runner).fit(spec.kernel, spec.skewer, data)
        self.run_logger.log_fit(spec.model().tag, result.loglik, result.converged)
        print(self._writer(spec).format_fit(result))
        return EXIT_OK

    def _cmd_experiment(self, args: argparse.Namespace) -> int:
        spec = self._load(args.spec)
        _, runner, _, _ = self._services(spec)
        theta = spec.theta.with_delta(np.zeros(spec.dim))
        summary = MLFitter(runner=runner).symmetry_experiment(spec.kernel, spec.skewer, theta, args.n, args.R, args.seed)
        writer = self._writer(spec, args.seed)
        writer.write_text(writer.experiment_csv(summary), args.out)
        text = writer.format_experiment(summary)
        writer.write_text(text, Path(args.out).with_suffix(".summary.txt"))
        self.run_logger.log_experiment(spec.model().tag, {
            "bimodality_coefficient": summary.bimodality_coefficient,
            "sign_split": summary.sign_split,
            "failed": len(summary.failed),
        })
        print(text)
        return EXIT_OK

    def _cmd_validate(self, args: argparse.Namespace) -> int:
        spec = self._load(args.spec)
        print(f"valid: true\nmodel: {spec.model().tag}")
        print(ModelSpecWriter().dumps(spec.to_document()), end="")
        return EXIT_OK

    def _parse_deltas(self, raw: str) -> List[float]:
        try:
            values = [float(v) for v in raw.split(",") if v.strip()]
        except ValueError as e:
            raise ModelSpecError(f"--deltas must be comma-separated numbers, got '{raw}'") from e
        if not values:
            raise ModelSpecError("--deltas is empty")
        return values

    def _read_data(self, path: str) -> np.ndarray:
        """Numeric CSV rows; '#' comment lines and a non-numeric header are skipped."""
        rows: List[List[float]] = []
        try:
            with open(path, newline="", encoding="utf-8") as handle:
                for number, row in enumerate(csv.reader(handle), start=1):
                    if not row or row[0].lstrip().startswith("#"):
                        continue
                    try:
                        rows.append([float(v) for v in row])
                    except ValueError:
                        if rows:
                            raise ModelSpecError(f"Non-numeric data row: {row}", number, path)
        except OSError as e:
            raise ModelSpecError(f"Cannot read data file: {str(e)}", source=path) from e
        if not rows:
            raise ModelSpecError("Data file has no numeric rows", source=path)
        return np.asarray(rows, dtype=float)

    def _fail(self, args: argparse.Namespace, code: int, message: str) -> int:
        print(f"error: {message}", file=sys.stderr)
        if self.run_logger is not None:
            self.run_logger.log_error(args.command, message)
        return code

    def __repr__(self) -> str:
        """Provide a string representation of the SkewInfoCLI."""
        return "SkewInfoCLI()"


def main(argv: Optional[Sequence[str]] = None) -> int:
    return SkewInfoCLI().run(argv)


if __name__ == "__main__":
    sys.exit(main())
