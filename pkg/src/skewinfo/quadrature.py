from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import integrate, stats

from .skew_logger import get_logger


class QuadratureError(Exception):
    """Custom exception for Quadrature errors."""


class QuadratureBudgetError(QuadratureError):
    """Raised when the node budget is exhausted before the tolerance is met."""

    def __init__(self, message: str, best: "QuadResult"):
        super().__init__(message)
        self.best = best


class _NonFiniteIntegrand(Exception):
    """Stops the adaptive scheme at the first non-finite integrand value."""


class DecayHint(str, Enum):
    GAUSSIAN_LIKE = "gaussian_like"
    HEAVY_TAIL = "heavy_tail"
    EXPONENTIAL_LIKE = "exponential_like"


@dataclass
class Integrand:
    """
    A function on R^k to be integrated over the whole space.

    ``eval`` receives an (n, k) array of points and returns either an (n,)
    array or an (n, d) array for vector integrands. ``breakpoints`` are the
    z-locations (1-D only) where the integrand may have a kink or a jump.
    """
    dim: int
    eval: Callable[[np.ndarray], np.ndarray]
    decay_hint: DecayHint = DecayHint.GAUSSIAN_LIKE
    tail_df: Optional[float] = None
    breakpoints: Tuple[float, ...] = (0.0,)

    def values(self, z: np.ndarray) -> np.ndarray:
        """Evaluate on (n, k) points and return an (n, d) array."""
        with np.errstate(over="ignore", under="ignore", invalid="ignore", divide="ignore"):
            raw = np.asarray(self.eval(z), dtype=float)
        return raw.reshape(z.shape[0], -1)


@dataclass(frozen=True)
class QuadScheme:
    kind: str
    level: int = 5
    n: int = 200_000
    seed: int = 0

    ADAPTIVE_1D = "adaptive_1d"
    TENSOR_PRODUCT = "tensor_product"
    MONTE_CARLO = "monte_carlo"

    @classmethod
    def adaptive_1d(cls) -> "QuadScheme":
        return cls(cls.ADAPTIVE_1D)

    @classmethod
    def tensor_product(cls, level: int = 5) -> "QuadScheme":
        return cls(cls.TENSOR_PRODUCT, level=level)

    @classmethod
    def monte_carlo(cls, n: int = 200_000, seed: int = 0) -> "QuadScheme":
        return cls(cls.MONTE_CARLO, n=n, seed=seed)

    def describe(self) -> str:
        if self.kind == self.TENSOR_PRODUCT:
            return f"{self.kind}({self.level})"
        if self.kind == self.MONTE_CARLO:
            return f"{self.kind}({self.n},{self.seed})"
        return self.kind


@dataclass
class QuadResult:
    value: Union[float, np.ndarray]
    abs_error: Union[float, np.ndarray]
    nodes_used: int
    scheme: str
    divergent: bool = False


@dataclass
class DivergenceProbe:
    convergent: bool
    value: float
    radii: List[float] = field(default_factory=list)
    partial_integrals: List[float] = field(default_factory=list)
    relative_increment: float = 0.0


class Quadrature:
    """
    Whole-space integration with error estimates.

    One-dimensional integrals run scipy's adaptive Gauss-Kronrod (quad_vec)
    on the compactified variable t in (-1, 1) with z = t / (1 - t^2), with
    the absolute and relative targets both set to the tolerance.
    Dimensions two and three use a tensor trapezoid rule in the variable u
    with z = sinh(pi sinh(u)) / 2, which is the same rational map composed
    with a tanh-sinh substitution. Higher dimensions fall back to Monte
    Carlo with a product envelope chosen from the integrand's decay hint.
    """

    DEFAULT_TOL = 1e-12
    DEFAULT_MAX_INTERVALS = 20_000
    DEFAULT_SCHEDULE = (10.0, 50.0, 1e2, 1e3, 1e4, 1e5, 1e6, 1e7, 1e8)
    PROBE_RADIUS_FLOOR = 50.0
    PROBE_RELATIVE_INCREMENT = 1e-6
    PROBE_LEVELS = {1: 6, 2: 5, 3: 4}
    SINH_SINH_HALF_WIDTH = 3.2
    TENSOR_CHUNK = 1 << 15
    MAX_TENSOR_DIM = 3

    def __init__(
        self,
        tol: float = DEFAULT_TOL,
        max_intervals: int = DEFAULT_MAX_INTERVALS,
        tensor_level: int = 5,
        mc_samples: int = 200_000,
        seed: int = 0,
    ):
        """
        Initialize the Quadrature service.

        Args:
            tol (float): Absolute (or relative, when larger) error target.
            max_intervals (int): Interval budget of the adaptive 1-D scheme.
            tensor_level (int): Default refinement level, step h = 2**-level.
            mc_samples (int): Default Monte Carlo sample count.
            seed (int): Default Monte Carlo seed.
        """
        if tol <= 0:
            raise QuadratureError(f"Tolerance must be positive, got {tol}")
        self.tol = tol
        self.max_intervals = max_intervals
        self.tensor_level = tensor_level
        self.mc_samples = mc_samples
        self.seed = seed
        self.logger = get_logger(__name__)

    def default_scheme(self, dim: int) -> QuadScheme:
        """Pick the scheme used for a k-dimensional integrand."""
        if dim == 1:
            return QuadScheme.adaptive_1d()
        if dim <= self.MAX_TENSOR_DIM:
            return QuadScheme.tensor_product(self.tensor_level)
        return QuadScheme.monte_carlo(self.mc_samples, self.seed)

    def integrate(self, fn: Integrand, scheme: Optional[QuadScheme] = None) -> QuadResult:
        """
        Integrate ``fn`` over R^k.

        Args:
            fn (Integrand): The integrand.
            scheme (Optional[QuadScheme]): Integration scheme; defaults by dimension.

        Returns:
            QuadResult: Value, per-entry absolute error estimate and node count.
                Non-finite integrand values set the divergent flag.

        Raises:
            QuadratureBudgetError: If the adaptive scheme runs out of intervals.
            QuadratureError: If the scheme does not fit the integrand.
        """
        scheme = scheme or self.default_scheme(fn.dim)
        if scheme.kind == QuadScheme.ADAPTIVE_1D:
            if fn.dim != 1:
                raise QuadratureError(f"adaptive_1d needs a 1-D integrand, got dim={fn.dim}")
            return self._adaptive_1d(fn)
        if scheme.kind == QuadScheme.TENSOR_PRODUCT:
            if fn.dim > self.MAX_TENSOR_DIM:
                raise QuadratureError(f"tensor_product supports k <= {self.MAX_TENSOR_DIM}, got {fn.dim}")
            return self._tensor_product(fn, scheme.level)
        if scheme.kind == QuadScheme.MONTE_CARLO:
            return self._monte_carlo(fn, scheme.n, scheme.seed)
        raise QuadratureError(f"Unknown quadrature scheme: {scheme.kind}")

    def probe_divergence(self, fn: Integrand, schedule: Optional[Sequence[float]] = None) -> DivergenceProbe:
        """
        Decide whether a nonnegative integrand has a finite integral.

        Partial integrals over Euclidean balls of growing radius are compared
        across the last two radii at or beyond PROBE_RADIUS_FLOOR; a relative
        increment above PROBE_RELATIVE_INCREMENT means divergence.

        Args:
            fn (Integrand): Nonnegative integrand, k <= 3.
            schedule (Optional[Sequence[float]]): Ball radii.

        Returns:
            DivergenceProbe: Verdict, value at the largest radius and the partial integrals.
        """
        radii = sorted(float(r) for r in (schedule or self.DEFAULT_SCHEDULE))
        tail = [i for i, r in enumerate(radii) if r >= self.PROBE_RADIUS_FLOOR]
        if len(tail) < 2:
            raise QuadratureError("Divergence probe needs at least two radii at or beyond the radius floor")
        level = self.PROBE_LEVELS.get(fn.dim)
        if level is None:
            raise QuadratureError(f"Divergence probe supports k <= {self.MAX_TENSOR_DIM}, got {fn.dim}")

        nodes, weights, _ = self._sinh_sinh_rule(level)
        partial = np.zeros(len(radii))
        for z, w, _ in self._tensor_chunks(nodes, weights, None, fn.dim):
            contribution = w * fn.values(z).sum(axis=1)
            radius = np.sqrt(np.sum(z * z, axis=1))
            for i, r in enumerate(radii):
                partial[i] += contribution[radius <= r].sum()

        last, previous = partial[tail[-1]], partial[tail[-2]]
        if not (np.isfinite(last) and np.isfinite(previous)):
            increment = np.inf
        else:
            increment = abs(last - previous) / max(abs(last), np.finfo(float).tiny)
        convergent = bool(increment <= self.PROBE_RELATIVE_INCREMENT)
        self.logger.debug(f"Divergence probe: increment={increment:.3e}, convergent={convergent}")
        return DivergenceProbe(
            convergent=convergent,
            value=float(last) if convergent else float("inf"),
            radii=radii,
            partial_integrals=[float(p) for p in partial],
            relative_increment=float(increment),
        )

    def settings(self) -> Dict[str, Any]:
        """Settings recorded in report headers."""
        return {
            "tol": self.tol,
            "max_intervals": self.max_intervals,
            "tensor_level": self.tensor_level,
            "mc_samples": self.mc_samples,
            "seed": self.seed,
            "probe_radius_floor": self.PROBE_RADIUS_FLOOR,
            "probe_relative_increment": self.PROBE_RELATIVE_INCREMENT,
        }

    def _adaptive_1d(self, fn: Integrand) -> QuadResult:
        """Vector Gauss-Kronrod (scipy quad_vec) on the compactified line."""
        scalar = self._is_scalar(fn)
        evaluations = [0]

        def mapped(t: float) -> np.ndarray:
            one_minus = (1.0 - t) * (1.0 + t)
            values = fn.values(np.array([[t / one_minus]]))[0] * ((1.0 + t * t) / one_minus ** 2)
            evaluations[0] += 1
            if not np.all(np.isfinite(values)):
                raise _NonFiniteIntegrand(t / one_minus)
            return values

        try:
            value, error, info = integrate.quad_vec(
                mapped,
                -1.0,
                1.0,
                epsabs=self.tol,
                epsrel=self.tol,
                norm="max",
                limit=self.max_intervals,
                points=self._initial_breaks(fn.breakpoints),
                full_output=True,
            )
        except _NonFiniteIntegrand as e:
            self.logger.debug(f"Non-finite integrand value at z={e.args[0]:.6g}; flagging divergence")
            width = fn.values(np.zeros((1, 1))).shape[1]
            return self._divergent_result(width, scalar, evaluations[0], QuadScheme.ADAPTIVE_1D)

        value = np.atleast_1d(np.asarray(value, dtype=float))
        # the max-norm error bounds every entry
        abs_error = np.full(value.shape, float(error))
        result = QuadResult(
            value=float(value[0]) if scalar else value,
            abs_error=float(abs_error[0]) if scalar else abs_error,
            nodes_used=int(info.neval),
            scheme=QuadScheme.ADAPTIVE_1D,
        )
        if info.status == 1:
            raise QuadratureBudgetError(f"Adaptive quadrature exceeded {self.max_intervals} intervals", result)
        return result

    def _tensor_product(self, fn: Integrand, level: int) -> QuadResult:
        """Tensor trapezoid rule; the error is the gap to the rule with twice the step."""
        nodes, weights, index = self._sinh_sinh_rule(level)
        coarse_factor = 2.0 ** fn.dim
        fine = coarse = magnitude = None
        nodes_used = 0
        for z, w, even in self._tensor_chunks(nodes, weights, index % 2 == 0, fn.dim):
            values = fn.values(z)
            if not np.all(np.isfinite(values)):
                return self._divergent_result(values.shape[1], None, nodes_used, QuadScheme.TENSOR_PRODUCT)
            weighted = values * w[:, None]
            chunk_fine = weighted.sum(axis=0)
            chunk_coarse = (weighted * even[:, None]).sum(axis=0) * coarse_factor
            chunk_magnitude = np.abs(weighted).sum(axis=0)
            if fine is None:
                fine, coarse, magnitude = chunk_fine, chunk_coarse, chunk_magnitude
            else:
                fine, coarse, magnitude = fine + chunk_fine, coarse + chunk_coarse, magnitude + chunk_magnitude
            nodes_used += z.shape[0]
        error = np.abs(fine - coarse) + 64.0 * np.finfo(float).eps * magnitude
        scalar = fine.size == 1 and self._is_scalar(fn)
        return QuadResult(
            value=float(fine[0]) if scalar else fine,
            abs_error=float(error[0]) if scalar else error,
            nodes_used=nodes_used,
            scheme=QuadScheme.tensor_product(level).describe(),
        )

    def _monte_carlo(self, fn: Integrand, n: int, seed: int) -> QuadResult:
        """Importance-sampled Monte Carlo with a product envelope."""
        rng = np.random.Generator(np.random.Philox(seed))
        k = fn.dim
        if fn.decay_hint == DecayHint.HEAVY_TAIL:
            df = fn.tail_df or 1.0
            z = rng.standard_t(df, size=(n, k))
            log_q = stats.t.logpdf(z, df).sum(axis=1)
        elif fn.decay_hint == DecayHint.EXPONENTIAL_LIKE:
            z = rng.laplace(size=(n, k))
            log_q = stats.laplace.logpdf(z).sum(axis=1)
        else:
            z = rng.standard_normal((n, k))
            log_q = stats.norm.logpdf(z).sum(axis=1)
        values = fn.values(z) * np.exp(-log_q)[:, None]
        if not np.all(np.isfinite(values)):
            return self._divergent_result(values.shape[1], None, n, QuadScheme.MONTE_CARLO)
        mean = values.mean(axis=0)
        error = values.std(axis=0, ddof=1) / np.sqrt(n)
        scalar = mean.size == 1 and self._is_scalar(fn)
        return QuadResult(
            value=float(mean[0]) if scalar else mean,
            abs_error=float(error[0]) if scalar else error,
            nodes_used=n,
            scheme=QuadScheme.monte_carlo(n, seed).describe(),
        )

    def _divergent_result(self, width, scalar, nodes_used, scheme) -> QuadResult:
        if scalar:
            return QuadResult(float("inf"), float("inf"), nodes_used, scheme, divergent=True)
        return QuadResult(np.full(width, np.inf), np.full(width, np.inf), nodes_used, scheme, divergent=True)

    def _is_scalar(self, fn: Integrand) -> bool:
        """Whether the integrand returns a flat (n,) array."""
        probe = np.zeros((1, fn.dim))
        with np.errstate(all="ignore"):
            return np.asarray(fn.eval(probe)).ndim == 1

    def _initial_breaks(self, breakpoints: Sequence[float]) -> List[float]:
        """Map z-breakpoints into t-space, the inverse of z = t / (1 - t^2)."""
        z = np.asarray(breakpoints, dtype=float)
        t = 2.0 * z / (1.0 + np.sqrt(1.0 + 4.0 * z * z))
        return [float(v) for v in np.unique(t)]

    def _sinh_sinh_rule(self, level: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Nodes z_j, weights w_j and integer indices j of the 1-D sinh-sinh rule."""
        h = 2.0 ** -level
        count = int(np.ceil(self.SINH_SINH_HALF_WIDTH / h))
        index = np.arange(-count, count + 1)
        u = index * h
        s = np.pi * np.sinh(u)
        nodes = 0.5 * np.sinh(s)
        weights = h * 0.5 * np.pi * np.cosh(u) * np.cosh(s)
        return nodes, weights, index

    def _tensor_chunks(self, nodes, weights, even, dim):
        """Yield (points, weights, all-even mask) chunks of the k-fold tensor grid."""
        n = nodes.size
        total = n ** dim
        shape = (n,) * dim
        for start in range(0, total, self.TENSOR_CHUNK):
            flat = np.arange(start, min(start + self.TENSOR_CHUNK, total))
            subscripts = np.unravel_index(flat, shape)
            z = np.stack([nodes[s] for s in subscripts], axis=1)
            w = np.prod(np.stack([weights[s] for s in subscripts], axis=0), axis=0)
            mask = None if even is None else np.all(np.stack([even[s] for s in subscripts], axis=0), axis=0)
            yield z, w, mask

    def __repr__(self) -> str:
        """Provide a string representation of the Quadrature service."""
        return (f"Quadrature(tol={self.tol}, max_intervals={self.max_intervals}, "
                f"tensor_level={self.tensor_level}, mc_samples={self.mc_samples}, seed={self.seed})")
