from dataclasses import dataclass, field
from typing import Any, List, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize

from .batch_runner import BatchRunner
from .density import SkewModel, ThetaPoint
from .fisher_information import FisherInformation, InfoKind
from .models import SkewingFunction, SymmetricKernel, as_points
from .skew_logger import get_logger


class MLFitterError(Exception):
    """Custom exception for MLFitter errors."""


class MLInputError(MLFitterError):
    """Raised for data or settings that violate a fit precondition."""


@dataclass
class FitResult:
    theta_hat: ThetaPoint
    loglik: float
    iterations: int
    converged: bool
    stderr_proxy: Optional[np.ndarray] = None
    information_singular: bool = False
    labels: List[str] = field(default_factory=list)


@dataclass
class ExperimentSummary:
    replicates: int
    n_per_replicate: int
    delta_hats: np.ndarray
    bimodality_coefficient: float
    sign_split: float
    failed: List[int] = field(default_factory=list)
    seed: int = 0
    success_rate: float = 100.0


class MLFitter:
    """
    Maximum-likelihood fitting of (mu, Sigma^{1/2}, delta).

    The likelihood is maximized with Nelder-Mead over the unconstrained
    chart (mu - m0, vech(L), delta) with Sigma^{1/2} = expm(L), where m0 is
    the sample median. Each fit starts at delta = 0 and restarts at
    delta = +-0.5; the best optimum is polished by probing its neighbours.
    """

    DEFAULT_MAX_ITER = 4000
    RESTART_DELTAS = (0.5, -0.5)
    SIMPLEX_STEP = 0.1
    XATOL = 1e-8
    FATOL = 1e-10
    POLISH_STEP = 1e-4
    POLISH_ROUNDS = 3
    HESSIAN_STEP = 1e-4
    SINGULAR_RATIO = 1e-8
    MIN_OBS_PER_PARAM = 10
    MIN_REPLICATES = 100
    PENALTY = 1e300

    def __init__(self, max_iter: int = DEFAULT_MAX_ITER, restarts: Sequence[float] = RESTART_DELTAS,
                 runner: Optional[BatchRunner] = None):
        """
        Initialize the MLFitter.

        Args:
            max_iter (int): Iteration budget per Nelder-Mead run.
            restarts (Sequence[float]): Extra delta starting values, applied to every coordinate.
            runner (Optional[BatchRunner]): Runs experiment replicates in parallel.
        """
        self.max_iter = max_iter
        self.restarts = tuple(restarts)
        self.runner = runner or BatchRunner()
        self.logger = get_logger(__name__)

    def fit(self, kernel: SymmetricKernel, skewer: SkewingFunction, data: Any,
            init: Optional[ThetaPoint] = None, compute_stderr: bool = True) -> FitResult:
        """
        Fit the model to data.

        Args:
            kernel (SymmetricKernel): Standardized kernel.
            skewer (SkewingFunction): Skewer of the same dimension.
            data: n points in R^k.
            init (Optional[ThetaPoint]): Starting point; automatic when None.
            compute_stderr (bool): Whether to compute curvature-based standard errors.

        Returns:
            FitResult: Estimate, log likelihood and convergence flag.

        Raises:
            MLInputError: If n < 10 dim(theta), data are not finite or have zero variance.
        """
        x = self._validate_data(data, kernel.dim)
        k = kernel.dim
        base = SkewModel(kernel, skewer)
        auto = self._initial_point(x) if init is None else init
        centre = auto.mu.copy()

        starts = [self._to_chart(auto, centre)]
        for d in self.restarts:
            starts.append(self._to_chart(auto.with_delta(np.full(k, d)), centre))

        def objective(params: np.ndarray) -> float:
            return self._negloglik(params, base, x, centre)

        try:
            runs = [self._minimize(objective, p0) for p0 in starts]
            best = min(runs, key=lambda r: r.fun)
            iterations = sum(int(r.nit) for r in runs)
            for _ in range(self.POLISH_ROUNDS):
                better = self._better_neighbour(objective, best.x, best.fun)
                if better is None:
                    break
                rerun = self._minimize(objective, better)
                iterations += int(rerun.nit)
                if rerun.fun < best.fun:
                    best = rerun
        except Exception as e:
            raise MLFitterError(f"Failed to fit {base.tag}: {str(e)}") from e

        theta_hat = self._from_chart(best.x, k, centre)
        result = FitResult(
            theta_hat=theta_hat,
            loglik=float(-best.fun),
            iterations=iterations,
            converged=bool(best.success),
            labels=FisherInformation.parameter_labels(k, InfoKind.FULL),
        )
        if compute_stderr:
            result.stderr_proxy, result.information_singular = self._curvature_stderr(objective, best.x)
        if not result.converged:
            self.logger.warning(f"Fit of {base.tag} did not converge: {best.message}")
        self.logger.debug(f"Fit of {base.tag}: loglik={result.loglik:.6f}, delta={theta_hat.delta}")
        return result

    def symmetry_experiment(self, kernel: SymmetricKernel, skewer: SkewingFunction, theta_true: ThetaPoint,
                            n: int, R: int, seed: int = 0) -> ExperimentSummary:
        """
        Refit R fresh samples drawn at a symmetry point.

        Replicate i samples with its own seed from SeedSequence(seed). The
        bimodality coefficient is (m3^2 + 1) / m4 of the standardized first
        coordinate of delta-hat; failed replicates are recorded, not fatal.

        Args:
            kernel (SymmetricKernel): Standardized kernel.
            skewer (SkewingFunction): Skewer.
            theta_true (ThetaPoint): Truth with delta = 0.
            n (int): Sample size per replicate.
            R (int): Number of replicates, at least 100.
            seed (int): Master seed.

        Returns:
            ExperimentSummary: delta-hats and summary statistics.

        Raises:
            MLInputError: If R < 100 or theta_true is not a symmetry point.
        """
        if R < self.MIN_REPLICATES:
            raise MLInputError(f"symmetry_experiment needs R >= {self.MIN_REPLICATES}, got {R}")
        if not theta_true.at_symmetry:
            raise MLInputError("symmetry_experiment draws at delta = 0")
        model = SkewModel(kernel, skewer, theta_true)
        seeds = [int(s) for s in np.random.SeedSequence(seed).generate_state(R)]

        def replicate(replicate_seed: int) -> float:
            data = model.sample(n, replicate_seed)
            return float(self.fit(kernel, skewer, data, compute_stderr=False).theta_hat.delta[0])

        results = self.runner.map(replicate, seeds, labels=[f"replicate {i}" for i in range(R)])
        delta_hats = np.array([r.data if r.success else np.nan for r in results])
        batch = self.runner.generate_summary(results)
        failed = [r.index for r in results if not r.success]
        ok = delta_hats[np.isfinite(delta_hats)]
        summary = ExperimentSummary(
            replicates=R,
            n_per_replicate=n,
            delta_hats=delta_hats,
            bimodality_coefficient=self.bimodality_coefficient(ok),
            sign_split=float(np.mean(ok < 0)) if ok.size else float("nan"),
            failed=failed,
            seed=seed,
            success_rate=float(batch["success_rate"]),
        )
        if failed:
            self.logger.warning(f"{batch['failed']} of {R} replicates failed: {', '.join(batch['failed_tasks'][:5])}")
        return summary

    @staticmethod
    def bimodality_coefficient(values: np.ndarray) -> float:
        """(m3^2 + 1) / m4 of the standardized values."""
        values = np.asarray(values, dtype=float)
        if values.size < 2 or np.std(values) == 0:
            return float("nan")
        u = (values - values.mean()) / values.std()
        return float((np.mean(u ** 3) ** 2 + 1.0) / np.mean(u ** 4))

    def _validate_data(self, data: Any, k: int) -> np.ndarray:
        try:
            x = as_points(data, k)
        except Exception as e:
            raise MLInputError(str(e)) from e
        n_params = 2 * k + k * (k + 1) // 2
        if x.shape[0] < self.MIN_OBS_PER_PARAM * n_params:
            raise MLInputError(
                f"Need at least {self.MIN_OBS_PER_PARAM * n_params} observations for {n_params} parameters, "
                f"got {x.shape[0]}"
            )
        if not np.all(np.isfinite(x)):
            raise MLInputError("Data must be finite")
        if np.any(np.var(x, axis=0) == 0):
            raise MLInputError("Data have zero variance in at least one coordinate")
        return x

    def _initial_point(self, x: np.ndarray) -> ThetaPoint:
        """Median, covariance square root and delta = 0."""
        k = x.shape[1]
        cov = np.atleast_2d(np.cov(x, rowvar=False))
        return ThetaPoint.from_sigma(np.median(x, axis=0), cov, np.zeros(k))

    def _to_chart(self, theta: ThetaPoint, centre: np.ndarray) -> np.ndarray:
        values, vectors = np.linalg.eigh(theta.sigma_half)
        log_root = (vectors * np.log(values)) @ vectors.T
        return np.concatenate([theta.mu - centre, FisherInformation.vech(log_root), theta.delta])

    def _from_chart(self, params: np.ndarray, k: int, centre: np.ndarray) -> ThetaPoint:
        q = k * (k + 1) // 2
        log_root = np.zeros((k, k))
        r = 0
        for j in range(k):
            for i in range(j + 1):
                log_root[i, j] = log_root[j, i] = params[k + r]
                r += 1
        values, vectors = np.linalg.eigh(log_root)
        root = (vectors * np.exp(values)) @ vectors.T
        return ThetaPoint(centre + params[:k], 0.5 * (root + root.T), params[k + q:])

    def _negloglik(self, params: np.ndarray, base: SkewModel, x: np.ndarray, centre: np.ndarray) -> float:
        try:
            theta = self._from_chart(params, base.dim, centre)
            value = -float(np.sum(base.with_theta(theta).logpdf(x)))
        except Exception:
            return self.PENALTY
        return value if np.isfinite(value) else self.PENALTY

    def _minimize(self, objective, x0: np.ndarray):
        simplex = np.vstack([x0] + [x0 + self.SIMPLEX_STEP * e for e in np.eye(x0.size)])
        return optimize.minimize(
            objective,
            x0,
            method="Nelder-Mead",
            options={
                "maxiter": self.max_iter,
                "maxfev": 2 * self.max_iter,
                "xatol": self.XATOL,
                "fatol": self.FATOL,
                "initial_simplex": simplex,
            },
        )

    def _better_neighbour(self, objective, x: np.ndarray, value: float) -> Optional[np.ndarray]:
        """First coordinate neighbour at distance POLISH_STEP that improves the objective."""
        for i in range(x.size):
            for sign in (1.0, -1.0):
                candidate = x.copy()
                candidate[i] += sign * self.POLISH_STEP
                if objective(candidate) < value:
                    return candidate
        return None

    def _curvature_stderr(self, objective, x: np.ndarray) -> Tuple[Optional[np.ndarray], bool]:
        """Standard errors in chart coordinates from a finite-difference Hessian."""
        size = x.size
        steps = self.HESSIAN_STEP * np.maximum(1.0, np.abs(x))
        hessian = np.zeros((size, size))
        f0 = objective(x)
        for i in range(size):
            for j in range(i, size):
                ei = np.zeros(size)
                ej = np.zeros(size)
                ei[i], ej[j] = steps[i], steps[j]
                if i == j:
                    value = (objective(x + ei) - 2.0 * f0 + objective(x - ei)) / steps[i] ** 2
                else:
                    value = (objective(x + ei + ej) - objective(x + ei - ej)
                             - objective(x - ei + ej) + objective(x - ei - ej)) / (4.0 * steps[i] * steps[j])
                hessian[i, j] = hessian[j, i] = value
        eigenvalues = np.linalg.eigvalsh(hessian)
        if eigenvalues[-1] <= 0 or eigenvalues[0] <= self.SINGULAR_RATIO * eigenvalues[-1]:
            self.logger.info("Curvature at the fit is singular; standard errors withheld")
            return None, True
        return np.sqrt(np.diag(np.linalg.inv(hessian))), False

    def __repr__(self) -> str:
        """Provide a string representation of the MLFitter."""
        return f"MLFitter(max_iter={self.max_iter}, restarts={self.restarts})"
