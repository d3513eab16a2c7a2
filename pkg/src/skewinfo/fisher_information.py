from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from .batch_runner import BatchRunner
from .density import SkewModel, ThetaPoint
from .models import SkewingFunction, SymmetricKernel
from .quadrature import DivergenceProbe, Integrand, Quadrature
from .skew_logger import get_logger


class FisherError(Exception):
    """Custom exception for FisherInformation errors."""


class FisherContractError(FisherError):
    """Raised when information is requested away from the symmetry point."""


class AssumptionViolationError(FisherError):
    """Raised when an integral required by an assumption diverges."""

    def __init__(self, assumption: str, message: str):
        super().__init__(message)
        self.assumption = assumption


class InfoKind(str, Enum):
    REDUCED = "reduced"
    FULL = "full"


@dataclass
class ScoreVector:
    loc_block: np.ndarray
    skew_block: np.ndarray
    scatter_block: Optional[np.ndarray] = None

    def as_array(self) -> np.ndarray:
        """Concatenate the blocks in (loc, scatter, skew) order."""
        parts = [self.loc_block]
        if self.scatter_block is not None:
            parts.append(self.scatter_block)
        parts.append(self.skew_block)
        return np.concatenate(parts, axis=-1)


@dataclass
class InfoMatrix:
    gamma: np.ndarray
    err: np.ndarray
    kind: InfoKind
    theta0: ThetaPoint
    labels: List[str]
    blocks: Dict[str, Tuple[int, int]]
    rule: str = ""
    scheme: str = ""

    @property
    def dim(self) -> int:
        return self.theta0.dim

    @property
    def max_error(self) -> float:
        return float(np.max(self.err))

    def block(self, name: str) -> np.ndarray:
        """Block by label, e.g. '11', '33' or '13'."""
        rows, cols = self.blocks[name[0] * 2], self.blocks[name[1] * 2]
        return self.gamma[rows[0]:rows[1], cols[0]:cols[1]]

    def reduced(self) -> "InfoMatrix":
        """The (location, skewness) submatrix."""
        if self.kind == InfoKind.REDUCED:
            return self
        keep = np.r_[self.blocks["11"][0]:self.blocks["11"][1], self.blocks["33"][0]:self.blocks["33"][1]]
        k = self.dim
        return InfoMatrix(
            gamma=self.gamma[np.ix_(keep, keep)],
            err=self.err[np.ix_(keep, keep)],
            kind=InfoKind.REDUCED,
            theta0=self.theta0,
            labels=[self.labels[i] for i in keep],
            blocks={"11": (0, k), "33": (k, 2 * k)},
            rule=self.rule,
            scheme=self.scheme,
        )


@dataclass
class RankAnalysis:
    singular_values: np.ndarray
    tolerance: float
    rank: int
    null_basis: np.ndarray
    indeterminate: bool


@dataclass
class RankReport:
    rank: int
    nullity: int
    null_basis: np.ndarray
    singular_values: np.ndarray
    tolerance_used: float
    indeterminate: bool
    kind: InfoKind
    V: Optional[np.ndarray] = None
    W: Optional[np.ndarray] = None
    labels: List[str] = field(default_factory=list)


class FisherInformation:
    """
    Score vectors and Fisher information at a symmetry point.

    With z = Sigma^{-1/2}(x - mu) the score splits into

        loc     Sigma^{-1/2} phi_f(z)
        scatter P_k (Sigma^{-1/2} (x) I_k) vec(z phi_f(z)' - I_k)
        skew    2 psi(z)

    so the information is T B T' where B integrates the outer product of
    (phi_f, vec(z phi_f' - I), psi) against f and T collects the
    Sigma^{-1/2} wrappers. Entry errors propagate as |T| E |T|'.
    """

    RANK_RELATIVE_TOL = 1e-7
    ERROR_FACTOR = 10.0
    GRAY_ZONE = 10.0

    def __init__(self, quadrature: Optional[Quadrature] = None, runner: Optional[BatchRunner] = None):
        """
        Initialize the FisherInformation service.

        Args:
            quadrature (Optional[Quadrature]): Integration service.
            runner (Optional[BatchRunner]): Runs the assumption probes in parallel.
        """
        self.quadrature = quadrature or Quadrature()
        self.runner = runner or BatchRunner()
        self.logger = get_logger(__name__)

    @staticmethod
    def duplication_matrix(k: int) -> np.ndarray:
        """
        The 0/1 matrix P_k with P_k' vech(M) = vec(M) for symmetric M.

        vec stacks columns; vech stacks the upper triangle column by column,
        i.e. (m11, m12, m22, m13, m23, m33, ...).

        Args:
            k (int): Dimension, at least 1.

        Returns:
            np.ndarray: Matrix of shape (k(k+1)/2, k^2).
        """
        if k < 1:
            raise FisherError(f"Dimension must be positive, got {k}")
        p = np.zeros((k * (k + 1) // 2, k * k))
        r = 0
        for j in range(k):
            for i in range(j + 1):
                p[r, i + j * k] = 1.0
                p[r, j + i * k] = 1.0
                r += 1
        return p

    @staticmethod
    def vech(matrix: np.ndarray) -> np.ndarray:
        m = np.asarray(matrix)
        k = m.shape[0]
        return np.array([m[i, j] for j in range(k) for i in range(j + 1)])

    @staticmethod
    def vec(matrix: np.ndarray) -> np.ndarray:
        return np.asarray(matrix).reshape(-1, order="F")

    @staticmethod
    def parameter_labels(k: int, kind: InfoKind) -> List[str]:
        loc = [f"mu{i + 1}" for i in range(k)]
        skew = [f"delta{i + 1}" for i in range(k)]
        if kind == InfoKind.REDUCED:
            return loc + skew
        scatter = [f"s{i + 1}{j + 1}" for j in range(k) for i in range(j + 1)]
        return loc + scatter + skew

    def score_at_symmetry(self, model: SkewModel, x: Any, which: Union[str, InfoKind] = InfoKind.REDUCED) -> ScoreVector:
        """
        Score vector at a point with delta = 0.

        Args:
            model (SkewModel): Model whose theta has delta exactly zero.
            x: A point in R^k or an (n, k) batch.
            which (InfoKind): ``reduced`` returns (loc, skew); ``full`` adds scatter.

        Returns:
            ScoreVector: Blocks of shape (k,) for a single point, (n, k) for a batch.

        Raises:
            FisherContractError: If delta is not zero.
        """
        which = InfoKind(which)
        self._require_symmetry(model)
        batch = np.ndim(x) == 2
        z = model.standardize(x)
        s_inv = model.theta.sigma_half_inv
        phi = model.kernel.score(z)
        loc = phi @ s_inv
        skew = 2.0 * model.skewer.psi(z)
        scatter = None
        if which == InfoKind.FULL:
            inner = self._vec_rows(z, phi)
            scatter = inner @ (self.duplication_matrix(model.dim) @ np.kron(s_inv, np.eye(model.dim))).T
        if batch:
            return ScoreVector(loc, skew, scatter)
        return ScoreVector(loc[0], skew[0], None if scatter is None else scatter[0])

    def check_assumptions(self, model: SkewModel, which: Union[str, InfoKind] = InfoKind.REDUCED) -> Dict[str, DivergenceProbe]:
        """
        Probe the integrals each assumption requires to be finite.

        The probes run in parallel; the verdicts are read in the order
        location score, skewness gradient, then (full only) scatter score.

        Raises:
            AssumptionViolationError: Naming the first failed assumption.
        """
        which = InfoKind(which)
        kernel, skewer = model.kernel, model.skewer
        if kernel.dim > Quadrature.MAX_TENSOR_DIM:
            self.logger.warning(f"Assumption probes support k <= {Quadrature.MAX_TENSOR_DIM}; skipped for k={kernel.dim}")
            return {}
        prefix = "A" if kernel.dim == 1 else "B"
        checks = [
            (f"({prefix}1)", "I_f divergent", lambda z: np.sum(kernel.score(z) ** 2, axis=1) * kernel.density(z)),
            (f"({prefix}2⁺)", "∫ψψ′f divergent",
             lambda z: np.sum(skewer.psi(z) ** 2, axis=1) * kernel.density(z)),
        ]
        if which == InfoKind.FULL:
            checks.append((f"({prefix}1⁺)", "J_f divergent",
                           lambda z: np.sum(z * z, axis=1) * np.sum(kernel.score(z) ** 2, axis=1) * kernel.density(z)))

        integrands = [Integrand(kernel.dim, fn, kernel.decay_hint, kernel.tail_df) for _, _, fn in checks]
        results = self.runner.map(self.quadrature.probe_divergence, integrands, labels=[c[0] for c in checks])
        probes: Dict[str, DivergenceProbe] = {}
        for (assumption, what, _), result in zip(checks, results):
            if not result.success:
                raise FisherError(f"Failed to probe {assumption}: {result.message}")
            if not result.data.convergent:
                raise AssumptionViolationError(assumption, f"{assumption} violated: {what}")
            probes[assumption] = result.data
        return probes

    def information(self, model: SkewModel, which: Union[str, InfoKind] = InfoKind.REDUCED) -> InfoMatrix:
        """
        Fisher information at a symmetry point.

        Args:
            model (SkewModel): Model with delta = 0.
            which (InfoKind): ``reduced`` for Gamma^0 (2k x 2k) or ``full``.

        Returns:
            InfoMatrix: Symmetric matrix with per-entry error estimates.

        Raises:
            FisherContractError: If delta is not zero.
            AssumptionViolationError: If a required integral diverges.
        """
        which = InfoKind(which)
        self._require_symmetry(model)
        self.check_assumptions(model, which)
        try:
            moments, errors, scheme = self.standardized_moments(model.kernel, model.skewer, which)
            wrapper = self._wrapper(model.theta, which)
            gamma = wrapper @ moments @ wrapper.T
            err = np.abs(wrapper) @ errors @ np.abs(wrapper).T
        except Exception as e:
            raise FisherError(f"Failed to assemble information: {str(e)}") from e

        k = model.dim
        q = k * (k + 1) // 2
        if which == InfoKind.REDUCED:
            blocks = {"11": (0, k), "33": (k, 2 * k)}
        else:
            blocks = {"11": (0, k), "22": (k, k + q), "33": (k + q, 2 * k + q)}
        info = InfoMatrix(
            gamma=0.5 * (gamma + gamma.T),
            err=0.5 * (err + err.T),
            kind=which,
            theta0=model.theta,
            labels=self.parameter_labels(k, which),
            blocks=blocks,
            rule=model.kernel.rule.value,
            scheme=scheme,
        )
        self.logger.info(f"Assembled {which.value} information for {model.tag}; max error {info.max_error:.3e}")
        return info

    def standardized_moments(
        self,
        kernel: SymmetricKernel,
        skewer: SkewingFunction,
        which: Union[str, InfoKind] = InfoKind.REDUCED,
    ) -> Tuple[np.ndarray, np.ndarray, str]:
        """
        Integrate u u' f with u = (phi_f, [vec(z phi_f' - I)], psi).

        Returns:
            Tuple[np.ndarray, np.ndarray, str]: Moment matrix, entry errors and scheme.
        """
        which = InfoKind(which)
        k = kernel.dim
        full = which == InfoKind.FULL

        def components(z: np.ndarray) -> np.ndarray:
            phi = kernel.score(z)
            parts = [phi]
            if full:
                parts.append(self._vec_rows(z, phi))
            parts.append(skewer.psi(z))
            return np.concatenate(parts, axis=1)

        size = 2 * k + (k * k if full else 0)
        upper = np.triu_indices(size)

        def integrand(z: np.ndarray) -> np.ndarray:
            u = components(z)
            return u[:, upper[0]] * u[:, upper[1]] * kernel.density(z)[:, None]

        result = self.quadrature.integrate(Integrand(k, integrand, kernel.decay_hint, kernel.tail_df))
        if result.divergent:
            raise FisherError("Information integrand produced non-finite values")
        moments = np.zeros((size, size))
        errors = np.zeros((size, size))
        moments[upper] = result.value
        errors[upper] = result.abs_error
        moments = moments + np.triu(moments, 1).T
        errors = errors + np.triu(errors, 1).T
        return moments, errors, result.scheme

    def analyze_rank(self, matrix: np.ndarray, max_error: float) -> RankAnalysis:
        """
        Numerical rank of a symmetric information matrix.

        Singular values above tau = max(1e-7 s_max, 10 max_error) count
        towards the rank. A singular value within a factor 10 of tau marks
        the result indeterminate. Null vectors are the right singular
        vectors of the remaining values.
        """
        _, s, vt = np.linalg.svd(np.asarray(matrix, dtype=float))
        s_max = float(s[0]) if s.size else 0.0
        tau = max(self.RANK_RELATIVE_TOL * s_max, self.ERROR_FACTOR * float(max_error))
        rank = int(np.sum(s > tau))
        indeterminate = bool(np.any((s > tau / self.GRAY_ZONE) & (s < tau * self.GRAY_ZONE)))
        null_basis = vt[rank:].T.copy()
        return RankAnalysis(s, tau, rank, null_basis, indeterminate)

    def rank_diagnosis(self, info: InfoMatrix) -> RankReport:
        """
        Rank, nullity and null directions of an information matrix.

        For the reduced matrix each null vector n = (n_loc, n_skew) gives the
        score relation V' phi_f = W' psi with V = Sigma^{-1/2} n_loc and
        W = -2 n_skew. Columns are sign-normalized so that the
        largest-magnitude location entry is positive.

        Args:
            info (InfoMatrix): Matrix with error estimates.

        Returns:
            RankReport: The diagnosis.
        """
        analysis = self.analyze_rank(info.gamma, info.max_error)
        loc = slice(*info.blocks["11"])
        skew = slice(*info.blocks["33"])
        basis = self.normalize_signs(analysis.null_basis, loc)
        V = W = None
        if info.kind == InfoKind.REDUCED:
            V = info.theta0.sigma_half_inv @ basis[loc]
            W = -2.0 * basis[skew]
        report = RankReport(
            rank=analysis.rank,
            nullity=info.gamma.shape[0] - analysis.rank,
            null_basis=basis,
            singular_values=analysis.singular_values,
            tolerance_used=analysis.tolerance,
            indeterminate=analysis.indeterminate,
            kind=info.kind,
            V=V,
            W=W,
            labels=list(info.labels),
        )
        self.logger.info(f"Rank {report.rank} (nullity {report.nullity}) with tolerance {report.tolerance_used:.3e}")
        if report.indeterminate:
            self.logger.warning("Rank is indeterminate: a singular value lies near the tolerance")
        return report

    def relation_residual(self, kernel: SymmetricKernel, skewer: SkewingFunction,
                          V: np.ndarray, W: np.ndarray) -> float:
        """L2(f) size of V' phi_f - W' psi, summed over the relation columns."""
        if V is None or V.size == 0:
            return 0.0

        def integrand(z: np.ndarray) -> np.ndarray:
            gap = kernel.score(z) @ V - skewer.psi(z) @ W
            return np.sum(gap * gap, axis=1) * kernel.density(z)

        return float(self.quadrature.integrate(Integrand(kernel.dim, integrand, kernel.decay_hint, kernel.tail_df)).value)

    def empirical_information(self, model: SkewModel, n: int = 100_000, seed: int = 0,
                              which: Union[str, InfoKind] = InfoKind.REDUCED) -> Tuple[np.ndarray, np.ndarray]:
        """
        Mean outer product of scores over exact draws and its standard errors.

        Returns:
            Tuple[np.ndarray, np.ndarray]: Estimate and entrywise standard errors.
        """
        self._require_symmetry(model)
        x = model.sample(n, seed)
        scores = self.score_at_symmetry(model, x, which).as_array()
        products = scores[:, :, None] * scores[:, None, :]
        return products.mean(axis=0), products.std(axis=0, ddof=1) / np.sqrt(n)

    def _wrapper(self, theta: ThetaPoint, which: InfoKind) -> np.ndarray:
        """Block-diagonal map from standardized moments to the parameter scores."""
        k = theta.dim
        s_inv = theta.sigma_half_inv
        blocks = [s_inv]
        if which == InfoKind.FULL:
            blocks.append(self.duplication_matrix(k) @ np.kron(s_inv, np.eye(k)))
        blocks.append(2.0 * np.eye(k))
        rows = sum(b.shape[0] for b in blocks)
        cols = sum(b.shape[1] for b in blocks)
        wrapper = np.zeros((rows, cols))
        r = c = 0
        for b in blocks:
            wrapper[r:r + b.shape[0], c:c + b.shape[1]] = b
            r, c = r + b.shape[0], c + b.shape[1]
        return wrapper

    def _vec_rows(self, z: np.ndarray, phi: np.ndarray) -> np.ndarray:
        """Row-wise vec(z phi' - I_k), column-stacked."""
        k = z.shape[1]
        outer = z[:, :, None] * phi[:, None, :] - np.eye(k)[None, :, :]
        return outer.transpose(0, 2, 1).reshape(z.shape[0], k * k)

    def normalize_signs(self, basis: np.ndarray, loc: slice) -> np.ndarray:
        """Flip each column so its largest-magnitude entry in ``loc`` is positive."""
        basis = basis.copy()
        for j in range(basis.shape[1]):
            block = basis[loc, j]
            if np.max(np.abs(block)) == 0:
                block = basis[:, j]
            pivot = block[np.argmax(np.abs(block))]
            if pivot < 0:
                basis[:, j] = -basis[:, j]
        return basis

    def _require_symmetry(self, model: SkewModel) -> None:
        if not model.theta.at_symmetry:
            raise FisherContractError("Information is only defined here at delta = 0")

    def __repr__(self) -> str:
        """Provide a string representation of the FisherInformation service."""
        return f"FisherInformation(quadrature={self.quadrature!r}, runner={self.runner!r})"
