import itertools
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import optimize

from .batch_runner import BatchRunner
from .density import SkewModel
from .fisher_information import FisherInformation, InfoKind, RankAnalysis, RankReport
from .models import (
    ExpOfNegPsiKernel,
    ProductKernel,
    SkewingFunction,
    StandardizationRule,
    Standardizer,
    SymmetricKernel,
)
from .quadrature import Integrand, Quadrature, QuadScheme
from .skew_logger import get_logger


class ExpMatcherError(Exception):
    """Custom exception for ExpMatcher errors."""


class MatchingAmbiguityError(ExpMatcherError):
    """Raised when the matching equation changes sign more than once on the grid."""

    def __init__(self, message: str, brackets: List[Tuple[float, float]]):
        super().__init__(message)
        self.brackets = brackets


class DegenerateCapabilityError(ExpMatcherError):
    """Raised when no degenerate kernel can be built for a skewer."""


class VerificationFailure(ExpMatcherError):
    """Raised when numeric rank and analytic prediction disagree."""

    def __init__(self, message: str, record: "VerificationRecord"):
        super().__init__(message)
        self.record = record


@dataclass
class NaturalSpace:
    skewer_tag: str
    a_grid: np.ndarray
    convergent: np.ndarray
    boundaries: List[float]
    sign_pattern: str
    contiguous: bool

    @property
    def empty(self) -> bool:
        return not bool(np.any(self.convergent))

    @property
    def convergent_values(self) -> np.ndarray:
        return self.a_grid[self.convergent]


@dataclass
class SingularityPrediction:
    model_tag: str
    nullity: int
    V: np.ndarray
    W: np.ndarray
    residual: float
    gram: np.ndarray
    analysis: RankAnalysis
    a_values: Dict[str, float] = field(default_factory=dict)
    matched_kernel: Optional[SymmetricKernel] = None
    log_density_gap: Optional[float] = None

    @property
    def singular(self) -> bool:
        return self.nullity >= 1

    @property
    def verdict(self) -> str:
        return f"singular({self.nullity})" if self.singular else "nonsingular"


@dataclass
class VerificationRecord:
    passed: bool
    predicted_nullity: int
    measured_nullity: int
    indeterminate: bool
    contexts: List[Tuple[float, ...]] = field(default_factory=list)
    a_values: List[float] = field(default_factory=list)
    a_spread: float = 0.0
    max_residual: float = 0.0
    grid_resolution: str = ""
    messages: List[str] = field(default_factory=list)


class ExpMatcher:
    """
    Matches a skewing function with the exponential family it generates.

    A kernel f gives a singular reduced information exactly when a linear
    relation V' phi_f = W' psi holds f-almost everywhere. In one dimension
    that means f(z) is proportional to exp(-a Psi(z)) for some a in the
    natural parameter space {a : int exp(-a Psi) < inf}; the
    standardization rule then pins a unique a. In k dimensions the
    conditionals of the rotated kernel along the null directions are of that
    exponential form.
    """

    GRID_DECADES = (-2.0, 2.0)
    GRID_POINTS_PER_SIGN = 25
    BISECTION_STEPS = 30
    SCAN_LEVEL = 6
    ROOT_XTOL = 1e-14
    ROOT_RTOL = 4.5e-15
    CONSTRAINT_TOL = 1e-9
    MATCH_GRID = (-4.0, 4.0, 81)
    MATCH_TOL = 1e-6
    CONTEXT_VALUES = (-2.0, -1.0, 0.0, 1.0, 2.0)
    FREE_GRIDS = {1: 61, 2: 25, 3: 15}
    FREE_RANGE = 3.0
    FIT_TOL = 1e-5

    def __init__(
        self,
        quadrature: Optional[Quadrature] = None,
        runner: Optional[BatchRunner] = None,
        fisher: Optional[FisherInformation] = None,
        standardizer: Optional[Standardizer] = None,
    ):
        """
        Initialize the ExpMatcher.

        Args:
            quadrature (Optional[Quadrature]): Integration service.
            runner (Optional[BatchRunner]): Parallel runner for probes and contexts.
            fisher (Optional[FisherInformation]): Shares the rank rule with rank_diagnosis.
            standardizer (Optional[Standardizer]): Re-standardizes matched kernels.
        """
        self.quadrature = quadrature or Quadrature()
        self.runner = runner or BatchRunner()
        self.fisher = fisher or FisherInformation(self.quadrature, self.runner)
        self.standardizer = standardizer or Standardizer(self.quadrature)
        self.logger = get_logger(__name__)

    @classmethod
    def default_grid(cls) -> np.ndarray:
        """+-logspace(-2, 2, 25), ascending."""
        positive = np.logspace(cls.GRID_DECADES[0], cls.GRID_DECADES[1], cls.GRID_POINTS_PER_SIGN)
        return np.concatenate([-positive[::-1], positive])

    def natural_space(self, skewer: SkewingFunction, a_grid: Optional[Sequence[float]] = None) -> NaturalSpace:
        """
        Probe where int exp(-a Psi) is finite.

        Args:
            skewer (SkewingFunction): The skewer generating Psi.
            a_grid (Optional[Sequence[float]]): Natural parameter values.

        Returns:
            NaturalSpace: Per-a verdicts, refined boundaries and the sign pattern.
        """
        grid = np.sort(np.asarray(a_grid if a_grid is not None else self.default_grid(), dtype=float))
        probe_skewer = skewer if skewer.dim <= Quadrature.MAX_TENSOR_DIM else skewer.marginal()
        results = self.runner.map(
            lambda a: self._converges(probe_skewer, a), list(grid), labels=[f"a={a:.4g}" for a in grid]
        )
        failed = [r.label for r in results if not r.success]
        if failed:
            raise ExpMatcherError(f"Failed to probe the natural parameter space at {', '.join(failed)}")
        convergent = np.array([bool(r.data) for r in results])

        boundaries = []
        for i in range(grid.size - 1):
            if convergent[i] != convergent[i + 1]:
                boundaries.append(self._bisect_boundary(probe_skewer, grid[i], grid[i + 1], convergent[i]))

        space = NaturalSpace(
            skewer_tag=skewer.family_tag,
            a_grid=grid,
            convergent=convergent,
            boundaries=boundaries,
            sign_pattern=self._sign_pattern(grid, convergent),
            contiguous=self._is_contiguous(convergent),
        )
        self.logger.info(f"Natural space of {skewer.family_tag}: {space.sign_pattern}, "
                         f"{int(convergent.sum())}/{grid.size} convergent")
        if not space.contiguous:
            self.logger.warning(f"Convergent set of {skewer.family_tag} is not contiguous on the probe grid")
        return space

    def solve_a(self, skewer: SkewingFunction,
                rule: Union[str, StandardizationRule] = StandardizationRule.UNIT_VARIANCE) -> Optional[float]:
        """
        Natural parameter at which exp(-a Psi) meets the standardization rule.

        unit_variance solves int z^2 e^{-a Psi} = int e^{-a Psi};
        median_of_squares solves P(|Z| <= 1) = 1/2 under e^{-a Psi}.

        Args:
            skewer (SkewingFunction): One-dimensional skewer.
            rule (StandardizationRule): The rule to meet.

        Returns:
            Optional[float]: a, or None when the natural space is empty or the
                equation has no root.

        Raises:
            MatchingAmbiguityError: If the equation changes sign more than once on the grid.
        """
        rule = StandardizationRule(rule)
        if skewer.dim != 1:
            raise ExpMatcherError("solve_a handles one-dimensional skewers")
        space = self.natural_space(skewer)
        if space.empty:
            self.logger.info(f"No natural parameter for {skewer.family_tag}: empty natural space")
            return None

        scan = QuadScheme.tensor_product(self.SCAN_LEVEL)
        candidates = space.convergent_values
        values = np.array([self._constraint(skewer, a, rule, scan) for a in candidates])
        finite = np.isfinite(values)
        candidates, values = candidates[finite], values[finite]
        brackets = [
            (float(candidates[i]), float(candidates[i + 1]))
            for i in range(candidates.size - 1)
            if np.sign(values[i]) != np.sign(values[i + 1])
        ]
        if len(brackets) > 1:
            listing = ", ".join(f"[{lo:.6g}, {hi:.6g}]" for lo, hi in brackets)
            raise MatchingAmbiguityError(f"Matching equation for {skewer.family_tag} has several roots: {listing}",
                                         brackets)
        if not brackets:
            self.logger.info(f"Matching equation for {skewer.family_tag} has no root on the grid")
            return None

        try:
            lo, hi = brackets[0]
            a = float(optimize.brentq(lambda t: self._constraint(skewer, t, rule), lo, hi,
                                      xtol=self.ROOT_XTOL, rtol=self.ROOT_RTOL, maxiter=200))
        except Exception as e:
            raise ExpMatcherError(f"Failed to solve for a: {str(e)}") from e
        residual = self._constraint(skewer, a, rule)
        if abs(residual) >= self.CONSTRAINT_TOL:
            raise ExpMatcherError(f"Matching constraint residual {residual:.3e} exceeds {self.CONSTRAINT_TOL}")
        self.logger.info(f"a for {skewer.family_tag} under {rule.value}: {a:.12g}")
        return a

    def predict_singularity(self, kernel: SymmetricKernel, skewer: SkewingFunction) -> SingularityPrediction:
        """
        Predict the nullity of the reduced information from the score Gram matrix.

        G = int (phi_f; psi)(phi_f; psi)' f has the same null space as
        Gamma^0 up to the parameter wrappers. Each null vector (n1, n2)
        gives V' phi_f = W' psi with V = n1 and W = -n2.

        Args:
            kernel (SymmetricKernel): Standardized kernel.
            skewer (SkewingFunction): Skewer of the same dimension.

        Returns:
            SingularityPrediction: Verdict, null directions and, for k = 1 and
                a singular pair, the matched exponential-family kernel.

        Raises:
            AssumptionViolationError: If the Gram integrals diverge.
        """
        model = SkewModel(kernel, skewer)
        self.fisher.check_assumptions(model, InfoKind.REDUCED)
        gram, errors, _ = self.fisher.standardized_moments(kernel, skewer, InfoKind.REDUCED)
        analysis = self.fisher.analyze_rank(gram, float(np.max(errors)))
        k = kernel.dim
        nullity = gram.shape[0] - analysis.rank
        basis = self.fisher.normalize_signs(analysis.null_basis, slice(0, k))
        eigenvalues = np.linalg.eigvalsh(gram)
        prediction = SingularityPrediction(
            model_tag=model.tag,
            nullity=nullity,
            V=basis[:k],
            W=-basis[k:],
            residual=float(np.sum(eigenvalues[:nullity])) if nullity else 0.0,
            gram=gram,
            analysis=analysis,
        )
        if k == 1 and nullity == 1:
            self._attach_match(prediction, kernel, skewer)
        self.logger.info(f"Prediction for {model.tag}: {prediction.verdict}")
        return prediction

    def verify_proposition(
        self,
        kernel: SymmetricKernel,
        skewer: SkewingFunction,
        rank_report: RankReport,
        raise_on_failure: bool = False,
    ) -> VerificationRecord:
        """
        Cross-check a numeric rank diagnosis against the analytic characterization.

        When the null space is nontrivial, V is completed to an orthogonal
        O' = (V, v); on every conditioning context y_{m+1..k} in
        {-2, ..., 2}^{k-m} the log kernel along the free coordinates is fit by
        least squares to -a Psi(O'y) + c, and the fit must be exact to
        FIT_TOL. Kernels built as exponential-family members must show at
        least the nullity they were built for.

        Args:
            kernel (SymmetricKernel): Standardized kernel.
            skewer (SkewingFunction): Skewer of the same dimension.
            rank_report (RankReport): Diagnosis of the reduced information of this pair.
            raise_on_failure (bool): Raise VerificationFailure instead of returning a failed record.

        Returns:
            VerificationRecord: Outcome with per-context a values.
        """
        if rank_report.kind != InfoKind.REDUCED:
            raise ExpMatcherError("verify_proposition needs the diagnosis of a reduced information matrix")
        prediction = self.predict_singularity(kernel, skewer)
        m = rank_report.nullity
        record = VerificationRecord(
            passed=True,
            predicted_nullity=prediction.nullity,
            measured_nullity=m,
            indeterminate=rank_report.indeterminate or prediction.analysis.indeterminate,
        )
        if prediction.nullity != m:
            message = f"Predicted {prediction.verdict} but the information has nullity {m}"
            if record.indeterminate:
                record.messages.append(message + " (indeterminate rank; not counted)")
            else:
                record.passed = False
                record.messages.append(message)

        built_for = self._built_nullity(kernel, skewer)
        if m < built_for:
            record.passed = False
            record.messages.append(f"Exponential-family kernel built for nullity {built_for} shows nullity {m}")

        if m >= 1 and rank_report.V is not None:
            self._check_conditionals(kernel, skewer, rank_report.V, record)

        if not record.passed and raise_on_failure:
            raise VerificationFailure("; ".join(record.messages), record)
        return record

    def construct_degenerate(self, skewer: SkewingFunction,
                             rule: Union[str, StandardizationRule] = StandardizationRule.UNIT_VARIANCE) -> SymmetricKernel:
        """
        Build a kernel whose pairing with ``skewer`` has minimal-rank information.

        Args:
            skewer (SkewingFunction): One-dimensional or coordinatewise skewer.
            rule (StandardizationRule): Standardization of the returned kernel.

        Returns:
            SymmetricKernel: exp(-a Psi) standardized under ``rule``; for k > 1 the
                product of the one-dimensional solution.

        Raises:
            DegenerateCapabilityError: If the natural space is empty or the skewer is
                not coordinatewise.
        """
        rule = StandardizationRule(rule)
        if not skewer.product_structured:
            raise DegenerateCapabilityError(
                f"{skewer.family_tag} is not coordinatewise; degenerate kernels are built for k = 1 "
                f"or coordinatewise skewers"
            )
        marginal = skewer.marginal()
        space = self.natural_space(marginal)
        if space.empty:
            raise DegenerateCapabilityError("no degenerate kernel exists for this skewer")
        a = self.solve_a(marginal, rule)
        if a is None:
            raise DegenerateCapabilityError(
                f"no member of the exponential family of {skewer.family_tag} meets {rule.value}"
            )
        try:
            component = self.standardizer.standardize(ExpOfNegPsiKernel(a=a, skewer=marginal), rule)
            if skewer.dim == 1:
                return component
            return ProductKernel(components=tuple(component for _ in range(skewer.dim)), rule=rule)
        except Exception as e:
            raise ExpMatcherError(f"Failed to construct degenerate kernel: {str(e)}") from e

    def _converges(self, skewer: SkewingFunction, a: float) -> bool:
        origin = skewer.psi_primitive(np.zeros((1, skewer.dim)))[0]
        integrand = Integrand(skewer.dim, lambda z: np.exp(-a * (skewer.psi_primitive(z) - origin)))
        return self.quadrature.probe_divergence(integrand).convergent

    def _bisect_boundary(self, skewer: SkewingFunction, lo: float, hi: float, lo_convergent: bool) -> float:
        """Locate the convergence boundary between two probed values."""
        for _ in range(self.BISECTION_STEPS):
            mid = 0.5 * (lo + hi)
            if self._converges(skewer, mid) == lo_convergent:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    def _sign_pattern(self, grid: np.ndarray, convergent: np.ndarray) -> str:
        positive = convergent[grid > 0]
        negative = convergent[grid < 0]
        if not convergent.any():
            return "empty"
        if positive.any() and not negative.any():
            return "positive"
        if negative.any() and not positive.any():
            return "negative"
        return "both"

    def _is_contiguous(self, convergent: np.ndarray) -> bool:
        idx = np.flatnonzero(convergent)
        return bool(idx.size == 0 or idx[-1] - idx[0] + 1 == idx.size)

    def _constraint(self, skewer: SkewingFunction, a: float, rule: StandardizationRule,
                    scheme: Optional[QuadScheme] = None) -> float:
        """h(a) whose root is the matching parameter."""
        origin = skewer.psi_primitive(np.zeros((1, 1)))[0]

        def weights(z: np.ndarray) -> np.ndarray:
            return np.exp(-a * (skewer.psi_primitive(z) - origin))

        if rule == StandardizationRule.UNIT_VARIANCE:
            integrand = Integrand(1, lambda z: np.stack([weights(z), z[:, 0] ** 2 * weights(z)], axis=1))
        else:
            integrand = Integrand(
                1,
                lambda z: np.stack([weights(z), np.where(np.abs(z[:, 0]) <= 1.0, weights(z), 0.0)], axis=1),
                breakpoints=(-1.0, 0.0, 1.0),
            )
        result = self.quadrature.integrate(integrand, scheme)
        if result.divergent:
            return float("nan")
        mass, moment = result.value
        if rule == StandardizationRule.UNIT_VARIANCE:
            return float(moment / mass - 1.0)
        return float(moment / mass - 0.5)

    def _attach_match(self, prediction: SingularityPrediction, kernel: SymmetricKernel,
                      skewer: SkewingFunction) -> None:
        """Matched exp(-a Psi) kernel for a singular one-dimensional pair."""
        gram = prediction.gram
        if gram[1, 1] <= 0:
            return
        a = float(gram[0, 1] / gram[1, 1])
        prediction.a_values["()"] = a
        try:
            matched = self.standardizer.standardize(ExpOfNegPsiKernel(a=a, skewer=skewer), kernel.rule)
        except Exception as e:
            self.logger.warning(f"Matched density for a={a:.6g} could not be built: {str(e)}")
            return
        grid = np.linspace(*self.MATCH_GRID[:2], self.MATCH_GRID[2])[:, None]
        gap = float(np.max(np.abs(kernel.log_density(grid) - matched.log_density(grid))))
        prediction.matched_kernel = matched
        prediction.log_density_gap = gap
        if gap >= self.MATCH_TOL:
            self.logger.warning(f"Matched density differs from the kernel by {gap:.3e} in log density")

    def _built_nullity(self, kernel: SymmetricKernel, skewer: SkewingFunction) -> int:
        """Nullity an exponential-family construction guarantees for its own skewer."""
        components = kernel.components if isinstance(kernel, ProductKernel) else (kernel,)
        if not skewer.product_structured and len(components) > 1:
            return 0
        tag = (skewer.family_tag, skewer.outer.tag)
        return sum(
            1 for c in components
            if isinstance(c, ExpOfNegPsiKernel) and (c.skewer.family_tag, c.skewer.outer.tag) == tag
        )

    def _check_conditionals(self, kernel: SymmetricKernel, skewer: SkewingFunction, V: np.ndarray,
                            record: VerificationRecord) -> None:
        """Per-context least-squares fit of the rotated kernel to the exponential form."""
        k, m = V.shape
        q, _ = np.linalg.qr(V, mode="complete")
        free_count = self.FREE_GRIDS.get(m, 11)
        axis = np.linspace(-self.FREE_RANGE, self.FREE_RANGE, free_count)
        free = np.array(list(itertools.product(axis, repeat=m)))
        contexts = list(itertools.product(self.CONTEXT_VALUES, repeat=k - m))

        def fit(context: Tuple[float, ...]) -> Tuple[float, float]:
            y = np.hstack([free, np.tile(np.asarray(context, dtype=float), (free.shape[0], 1))])
            z = y @ q.T
            target = kernel.log_density(z)
            design = np.column_stack([-skewer.psi_primitive(z), np.ones(z.shape[0])])
            coef, *_ = np.linalg.lstsq(design, target, rcond=None)
            return float(coef[0]), float(np.max(np.abs(design @ coef - target)))

        results = self.runner.map(fit, contexts, labels=[str(c) for c in contexts])
        failed = [r.label for r in results if not r.success]
        if failed:
            raise ExpMatcherError(f"Failed to fit conditional contexts {', '.join(failed)}")
        a_values = [r.data[0] for r in results]
        residuals = [r.data[1] for r in results]
        record.contexts = [tuple(float(v) for v in c) for c in contexts]
        record.a_values = a_values
        record.a_spread = float(max(a_values) - min(a_values))
        record.max_residual = float(max(residuals))
        record.grid_resolution = (f"contexts {{-2,-1,0,1,2}}^{k - m}; free grid {free_count}^{m} "
                                  f"on [-{self.FREE_RANGE:g}, {self.FREE_RANGE:g}]")
        if record.max_residual >= self.FIT_TOL:
            record.passed = False
            record.messages.append(
                f"Conditional log density is not exponential in Psi: max residual {record.max_residual:.3e}"
            )

    def __repr__(self) -> str:
        """Provide a string representation of the ExpMatcher."""
        return f"ExpMatcher(quadrature={self.quadrature!r}, runner={self.runner!r})"
