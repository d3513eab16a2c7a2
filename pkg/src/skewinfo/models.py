import dataclasses
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, ClassVar, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import optimize, special, stats

from .quadrature import DecayHint, Integrand, Quadrature
from .skew_logger import get_logger

LOG_2PI = float(np.log(2.0 * np.pi))


class ModelError(Exception):
    """Custom exception for kernel and skewer registry errors."""


class ModelInputError(ModelError):
    """Raised for non-finite, mis-shaped or otherwise invalid inputs."""


class StandardizationInfeasibleError(ModelError):
    """Raised when a standardization rule cannot be met by a kernel family."""


class SamplingCapabilityError(ModelError):
    """Raised when a kernel family has no sampler."""


class StandardizationRule(str, Enum):
    UNIT_VARIANCE = "unit_variance"
    MEDIAN_OF_SQUARES = "median_of_squares"


def as_points(z: Any, dim: int) -> np.ndarray:
    """
    Coerce ``z`` to an (n, dim) float array.

    A scalar is one point when dim == 1. A flat array is n points when
    dim == 1 and a single point otherwise.
    """
    arr = np.asarray(z, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1) if dim == 1 else arr.reshape(1, -1)
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise ModelInputError(f"Expected points of dimension {dim}, got array of shape {np.shape(z)}")
    return arr


def _require_finite(arr: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise ModelInputError(f"{what} must be finite")


@dataclass(frozen=True)
class OuterCdf:
    """The symmetric cdf Pi composes with; Pi(z, delta) = F(delta' h(z))."""
    name: str = "normal"
    df: Optional[float] = None

    NAMES: ClassVar[Tuple[str, ...]] = ("normal", "logistic", "student")

    def __post_init__(self):
        if self.name not in self.NAMES:
            raise ModelInputError(f"Unknown outer cdf '{self.name}'; expected one of {self.NAMES}")
        if self.name == "student" and (self.df is None or self.df <= 0):
            raise ModelInputError("Student outer cdf needs a positive 'outer_df'")

    @property
    def slope(self) -> float:
        """Derivative of F at zero."""
        if self.name == "normal":
            return 1.0 / np.sqrt(2.0 * np.pi)
        if self.name == "logistic":
            return 0.25
        return float(stats.t.pdf(0.0, self.df))

    def cdf(self, y: np.ndarray) -> np.ndarray:
        if self.name == "normal":
            return special.ndtr(y)
        if self.name == "logistic":
            return special.expit(y)
        return stats.t.cdf(y, self.df)

    def logcdf(self, y: np.ndarray) -> np.ndarray:
        if self.name == "normal":
            return special.log_ndtr(y)
        if self.name == "logistic":
            return -np.logaddexp(0.0, -y)
        return stats.t.logcdf(y, self.df)

    @property
    def tag(self) -> str:
        return f"student({self.df:g})" if self.name == "student" else self.name


@dataclass
class KernelEvaluation:
    density: Union[float, np.ndarray]
    log_density: Union[float, np.ndarray]
    score: np.ndarray


@dataclass
class SymmetricKernel:
    """
    A centrally symmetric, nonvanishing density f on R^k with score -grad f / f.

    Subclasses define the density at unit base scale; ``scale`` is the
    calibration c applied by standardization, f_c(z) = c^-k f(z / c).
    """
    dim: int = 1
    scale: float = 1.0
    rule: Optional[StandardizationRule] = None

    family: ClassVar[str] = "kernel"
    SPHERICAL: ClassVar[bool] = False

    def __post_init__(self):
        if self.dim < 1:
            raise ModelInputError(f"Kernel dimension must be positive, got {self.dim}")
        if not self.scale > 0:
            raise ModelInputError(f"Kernel scale must be positive, got {self.scale}")
        if self.rule is not None:
            self.rule = StandardizationRule(self.rule)

    def log_density(self, z: Any) -> np.ndarray:
        x = as_points(z, self.dim) / self.scale
        return self._base_log_density(x) - self.dim * np.log(self.scale)

    def score(self, z: Any) -> np.ndarray:
        x = as_points(z, self.dim) / self.scale
        return self._base_score(x) / self.scale

    def density(self, z: Any) -> np.ndarray:
        return np.exp(self.log_density(z))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Draw n points (n, k) from the kernel."""
        return self.scale * self._base_sample(rng, n)

    def evaluate(self, z: Any) -> KernelEvaluation:
        """
        Evaluate density, log density and score at z.

        Args:
            z: A point in R^k (or an (n, k) batch).

        Returns:
            KernelEvaluation: Scalars and a k-vector for a single point.

        Raises:
            ModelInputError: If z is not finite or the kernel is not standardized.
        """
        if self.rule is None:
            raise ModelInputError(f"Kernel {self.family_tag} is not standardized")
        points = as_points(z, self.dim)
        _require_finite(points, "Kernel argument")
        log_density = self.log_density(points)
        score = self.score(points)
        if points.shape[0] == 1 and np.ndim(z) <= 1:
            return KernelEvaluation(float(np.exp(log_density[0])), float(log_density[0]), score[0])
        return KernelEvaluation(np.exp(log_density), log_density, score)

    def with_scale(self, scale: float, rule: Optional[StandardizationRule] = None) -> "SymmetricKernel":
        return dataclasses.replace(self, scale=scale, rule=rule)

    def marginal(self) -> "SymmetricKernel":
        """The 1-D kernel whose scale calibrates this one."""
        if self.dim == 1:
            return self
        raise ModelError(f"Kernel {self.family_tag} has no 1-D marginal")

    @property
    def family_tag(self) -> str:
        return self.family

    @property
    def decay_hint(self) -> DecayHint:
        return DecayHint.GAUSSIAN_LIKE

    @property
    def tail_df(self) -> Optional[float]:
        return None

    def _base_log_density(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _base_score(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _base_sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        raise SamplingCapabilityError(f"No sampler for kernel family {self.family_tag}")

    def __repr__(self) -> str:
        """Provide a string representation of the kernel."""
        rule = self.rule.value if self.rule else None
        return f"{type(self).__name__}(tag='{self.family_tag}', dim={self.dim}, scale={self.scale:.12g}, rule={rule})"


@dataclass(repr=False)
class GaussianKernel(SymmetricKernel):
    family: ClassVar[str] = "gaussian"
    SPHERICAL: ClassVar[bool] = True

    def _base_log_density(self, x):
        return -0.5 * np.sum(x * x, axis=1) - 0.5 * self.dim * LOG_2PI

    def _base_score(self, x):
        return x

    def _base_sample(self, rng, n):
        return rng.standard_normal((n, self.dim))

    def marginal(self):
        return GaussianKernel(dim=1, scale=self.scale)


@dataclass(repr=False)
class StudentKernel(SymmetricKernel):
    """Spherical Student-t kernel; df = 1 is the Cauchy kernel."""
    df: float = 5.0

    family: ClassVar[str] = "student"
    SPHERICAL: ClassVar[bool] = True

    def __post_init__(self):
        super().__post_init__()
        if not self.df > 0:
            raise ModelInputError(f"Student kernel needs df > 0, got {self.df}")

    def _base_log_density(self, x):
        nu, k = self.df, self.dim
        return (special.gammaln(0.5 * (nu + k)) - special.gammaln(0.5 * nu)
                - 0.5 * k * np.log(nu * np.pi)
                - 0.5 * (nu + k) * np.log1p(np.sum(x * x, axis=1) / nu))

    def _base_score(self, x):
        return (self.df + self.dim) * x / (self.df + np.sum(x * x, axis=1))[:, None]

    def _base_sample(self, rng, n):
        normal = rng.standard_normal((n, self.dim))
        chi2 = rng.chisquare(self.df, n)
        return normal / np.sqrt(chi2 / self.df)[:, None]

    def marginal(self):
        return StudentKernel(dim=1, scale=self.scale, df=self.df)

    @property
    def family_tag(self):
        return f"student({self.df:g})"

    @property
    def decay_hint(self):
        return DecayHint.HEAVY_TAIL

    @property
    def tail_df(self):
        return self.df


@dataclass(repr=False)
class LaplaceKernel(SymmetricKernel):
    family: ClassVar[str] = "laplace"

    def _base_log_density(self, x):
        return -np.abs(x[:, 0]) - np.log(2.0)

    def _base_score(self, x):
        return np.sign(x)

    def _base_sample(self, rng, n):
        return rng.laplace(size=(n, 1))

    @property
    def decay_hint(self):
        return DecayHint.EXPONENTIAL_LIKE


@dataclass(repr=False)
class LogisticKernel(SymmetricKernel):
    family: ClassVar[str] = "logistic"

    def _base_log_density(self, x):
        a = np.abs(x[:, 0])
        return -a - 2.0 * np.log1p(np.exp(-a))

    def _base_score(self, x):
        return np.tanh(0.5 * x)

    def _base_sample(self, rng, n):
        return rng.logistic(size=(n, 1))

    @property
    def decay_hint(self):
        return DecayHint.EXPONENTIAL_LIKE


@dataclass(repr=False)
class ExponentialPowerKernel(SymmetricKernel):
    """Base density exp(-|x|^alpha / alpha) / (2 alpha^(1/alpha - 1) Gamma(1/alpha))."""
    alpha: float = 2.0

    family: ClassVar[str] = "exponential_power"

    def __post_init__(self):
        super().__post_init__()
        if not self.alpha >= 1:
            raise ModelInputError(f"Exponential-power kernel needs alpha >= 1, got {self.alpha}")

    @property
    def _log_normalizer(self) -> float:
        a = self.alpha
        return float(np.log(2.0) + (1.0 / a - 1.0) * np.log(a) + special.gammaln(1.0 / a))

    def _base_log_density(self, x):
        return -np.abs(x[:, 0]) ** self.alpha / self.alpha - self._log_normalizer

    def _base_score(self, x):
        return np.sign(x) * np.abs(x) ** (self.alpha - 1.0)

    def _base_sample(self, rng, n):
        g = rng.gamma(1.0 / self.alpha, 1.0, n)
        sign = np.where(rng.random(n) < 0.5, -1.0, 1.0)
        return (sign * (self.alpha * g) ** (1.0 / self.alpha))[:, None]

    @property
    def family_tag(self):
        return f"exponential_power({self.alpha:g})"

    @property
    def decay_hint(self):
        return DecayHint.GAUSSIAN_LIKE if self.alpha >= 2 else DecayHint.EXPONENTIAL_LIKE


@dataclass(repr=False)
class ProductKernel(SymmetricKernel):
    """Product of 1-D kernels; each coordinate keeps its own scale."""
    components: Tuple[SymmetricKernel, ...] = ()

    family: ClassVar[str] = "product"

    def __post_init__(self):
        self.components = tuple(self.components)
        if not self.components:
            raise ModelInputError("Product kernel needs at least one component")
        if any(c.dim != 1 for c in self.components):
            raise ModelInputError("Product kernel components must be one-dimensional")
        self.dim = len(self.components)
        self.scale = 1.0
        super().__post_init__()

    def log_density(self, z):
        points = as_points(z, self.dim)
        return sum(c.log_density(points[:, [i]]) for i, c in enumerate(self.components))

    def score(self, z):
        points = as_points(z, self.dim)
        return np.concatenate([c.score(points[:, [i]]) for i, c in enumerate(self.components)], axis=1)

    def sample(self, rng, n):
        return np.concatenate([c.sample(rng, n) for c in self.components], axis=1)

    def with_scale(self, scale, rule=None):
        raise ModelError("Product kernels are calibrated per component")

    @property
    def family_tag(self):
        return "product(" + ",".join(c.family_tag for c in self.components) + ")"

    @property
    def decay_hint(self):
        hints = [c.decay_hint for c in self.components]
        if DecayHint.HEAVY_TAIL in hints:
            return DecayHint.HEAVY_TAIL
        if DecayHint.EXPONENTIAL_LIKE in hints:
            return DecayHint.EXPONENTIAL_LIKE
        return DecayHint.GAUSSIAN_LIKE

    @property
    def tail_df(self):
        dfs = [c.tail_df for c in self.components if c.tail_df is not None]
        return min(dfs) if dfs else None


@dataclass(repr=False)
class ExpOfNegPsiKernel(SymmetricKernel):
    """
    The exponential-family member g_a(z) = exp(-a Psi(z)) / C(a) generated by
    a one-dimensional skewing function.
    """
    a: float = 1.0
    skewer: Optional["SkewingFunction"] = None
    log_normalizer: Optional[float] = None

    family: ClassVar[str] = "exp_of_neg_psi"

    def __post_init__(self):
        super().__post_init__()
        if self.skewer is None or self.skewer.dim != 1:
            raise ModelInputError("exp_of_neg_psi kernels need a one-dimensional skewer")
        self.dim = 1
        if self.log_normalizer is None:
            self.log_normalizer = self._compute_log_normalizer()

    def _shifted_psi(self, x):
        return self.skewer.psi_primitive(x) - self.skewer.psi_primitive(np.zeros((1, 1)))[0]

    def _compute_log_normalizer(self) -> float:
        quadrature = Quadrature()
        integrand = Integrand(1, lambda z: np.exp(-self.a * self._shifted_psi(z)), self._decay())
        probe = quadrature.probe_divergence(integrand)
        if not probe.convergent:
            raise ModelError(f"a={self.a:g} lies outside the natural parameter space of {self.skewer.family_tag}")
        result = quadrature.integrate(integrand)
        return float(np.log(result.value))

    def _base_log_density(self, x):
        return -self.a * self._shifted_psi(x) - self.log_normalizer

    def _base_score(self, x):
        return self.a * self.skewer.psi(x)

    def _base_sample(self, rng, n):
        rate = self.a * self.skewer.outer.slope
        if isinstance(self.skewer, LinearSkewer):
            return rng.standard_normal((n, 1)) / np.sqrt(rate)
        if isinstance(self.skewer, PowerSkewer):
            p = 0.5 * self.skewer.alpha + 1.0
            lam = rate * np.sqrt(2.0 / self.skewer.alpha) / p
            g = rng.gamma(1.0 / p, 1.0, n)
            sign = np.where(rng.random(n) < 0.5, -1.0, 1.0)
            return (sign * (g / lam) ** (1.0 / p))[:, None]
        if isinstance(self.skewer, ScoreComposedSkewer) and np.isclose(rate, 1.0, rtol=1e-12):
            return self.skewer.kernel.sample(rng, n)
        raise SamplingCapabilityError(f"No sampler for kernel family {self.family_tag}")

    def _decay(self) -> DecayHint:
        if isinstance(self.skewer, LinearSkewer):
            return DecayHint.GAUSSIAN_LIKE
        if isinstance(self.skewer, PowerSkewer):
            return DecayHint.GAUSSIAN_LIKE if self.skewer.alpha >= 2 else DecayHint.EXPONENTIAL_LIKE
        if isinstance(self.skewer, ScoreComposedSkewer):
            return self.skewer.kernel.decay_hint
        return DecayHint.EXPONENTIAL_LIKE

    @property
    def decay_hint(self):
        return self._decay()

    @property
    def family_tag(self):
        return f"exp_of_neg_psi({self.a:.10g},{self.skewer.family_tag})"


@dataclass
class SkewerEvaluation:
    pi: Union[float, np.ndarray]
    psi: np.ndarray
    psi_primitive: Union[float, np.ndarray]


@dataclass
class SkewingFunction:
    """
    A skewing function of the form Pi(z, delta) = F(delta' h(z)) with F a
    symmetric cdf and h odd; psi = F'(0) h and psi_primitive is its even
    primitive.
    """
    dim: int = 1
    outer: OuterCdf = field(default_factory=OuterCdf)

    family: ClassVar[str] = "skewer"
    PRODUCT_STRUCTURED: ClassVar[bool] = True

    def __post_init__(self):
        if self.dim < 1:
            raise ModelInputError(f"Skewer dimension must be positive, got {self.dim}")

    def feature(self, z: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def primitive(self, z: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def pi(self, z: Any, delta: Any) -> np.ndarray:
        return self.outer.cdf(self._argument(z, delta))

    def log_pi(self, z: Any, delta: Any) -> np.ndarray:
        return self.outer.logcdf(self._argument(z, delta))

    def psi(self, z: Any) -> np.ndarray:
        return self.outer.slope * self.feature(as_points(z, self.dim))

    def psi_primitive(self, z: Any) -> np.ndarray:
        return self.outer.slope * self.primitive(as_points(z, self.dim))

    def evaluate(self, z: Any, delta: Any) -> SkewerEvaluation:
        """
        Evaluate Pi, psi and the primitive Psi.

        Args:
            z: A point in R^k (or an (n, k) batch).
            delta: Skewness parameter in R^k.

        Returns:
            SkewerEvaluation: Scalars and a k-vector for a single point.

        Raises:
            ModelInputError: On non-finite input or mismatched dimensions.
        """
        points = as_points(z, self.dim)
        _require_finite(points, "Skewer argument")
        pi = self.pi(points, delta)
        psi = self.psi(points)
        big_psi = self.psi_primitive(points)
        if points.shape[0] == 1 and np.ndim(z) <= 1:
            return SkewerEvaluation(float(pi[0]), psi[0], float(big_psi[0]))
        return SkewerEvaluation(pi, psi, big_psi)

    def marginal(self) -> "SkewingFunction":
        """One-dimensional counterpart of a coordinatewise skewer."""
        if self.dim == 1:
            return self
        if not self.PRODUCT_STRUCTURED:
            raise ModelError(f"Skewer {self.family_tag} is not coordinatewise")
        return dataclasses.replace(self, dim=1)

    @property
    def product_structured(self) -> bool:
        return self.dim == 1 or self.PRODUCT_STRUCTURED

    @property
    def family_tag(self) -> str:
        return self.family

    def _argument(self, z: Any, delta: Any) -> np.ndarray:
        points = as_points(z, self.dim)
        delta = np.atleast_1d(np.asarray(delta, dtype=float))
        if delta.shape != (self.dim,):
            raise ModelInputError(f"delta must have shape ({self.dim},), got {delta.shape}")
        _require_finite(delta, "delta")
        return self.feature(points) @ delta

    def __repr__(self) -> str:
        """Provide a string representation of the skewer."""
        return f"{type(self).__name__}(tag='{self.family_tag}', dim={self.dim}, outer='{self.outer.tag}')"


@dataclass(repr=False)
class LinearSkewer(SkewingFunction):
    family: ClassVar[str] = "linear"

    def feature(self, z):
        return z

    def primitive(self, z):
        return 0.5 * np.sum(z * z, axis=1)


@dataclass(repr=False)
class PowerSkewer(SkewingFunction):
    """h(z) = sign(z)|z|^(alpha/2) (2/alpha)^(1/2), coordinatewise; psi(0) = 0."""
    alpha: float = 3.0

    family: ClassVar[str] = "power"

    def __post_init__(self):
        super().__post_init__()
        if not self.alpha > 1:
            raise ModelInputError(f"Power skewer needs alpha > 1, got {self.alpha}")

    def feature(self, z):
        return np.sign(z) * np.abs(z) ** (0.5 * self.alpha) * np.sqrt(2.0 / self.alpha)

    def primitive(self, z):
        p = 0.5 * self.alpha + 1.0
        return np.sum(np.abs(z) ** p, axis=1) * np.sqrt(2.0 / self.alpha) / p

    @property
    def family_tag(self):
        return f"power({self.alpha:g})"


@dataclass(repr=False)
class TTypeSkewer(SkewingFunction):
    """h(z) = z (nu + k)^(1/2) (z'z + nu)^(-1/2); the skew-t construction."""
    df: float = 5.0

    family: ClassVar[str] = "t_type"
    PRODUCT_STRUCTURED: ClassVar[bool] = False

    def __post_init__(self):
        super().__post_init__()
        if not self.df > 0:
            raise ModelInputError(f"t_type skewer needs df > 0, got {self.df}")

    def feature(self, z):
        return z * np.sqrt(self.df + self.dim) / np.sqrt(np.sum(z * z, axis=1) + self.df)[:, None]

    def primitive(self, z):
        return np.sqrt(self.df + self.dim) * np.sqrt(np.sum(z * z, axis=1) + self.df)

    @property
    def family_tag(self):
        return f"t_type({self.df:g})"


@dataclass(repr=False)
class SineSkewer(SkewingFunction):
    """h(z) = sin(z) coordinatewise; the primitive keeps the -cos(z) constant."""
    family: ClassVar[str] = "sine"

    def feature(self, z):
        return np.sin(z)

    def primitive(self, z):
        return -np.sum(np.cos(z), axis=1)


@dataclass(repr=False)
class ScoreComposedSkewer(SkewingFunction):
    """Pi_f(z, delta) = F(delta' phi_f(z)) built from a kernel's own score."""
    kernel: Optional[SymmetricKernel] = None

    family: ClassVar[str] = "score_composed"

    def __post_init__(self):
        super().__post_init__()
        if self.kernel is None:
            raise ModelInputError("score_composed skewer needs a kernel")
        self.dim = self.kernel.dim

    def feature(self, z):
        return self.kernel.score(z)

    def primitive(self, z):
        origin = self.kernel.log_density(np.zeros((1, self.dim)))[0]
        return origin - self.kernel.log_density(z)

    def marginal(self):
        if self.dim == 1:
            return self
        raise ModelError("score_composed skewers have no coordinatewise counterpart")

    @property
    def product_structured(self):
        return self.dim == 1

    @property
    def family_tag(self):
        return f"score_composed({self.kernel.family_tag})"


class Standardizer:
    """
    Calibrates a kernel's scale so that its standardization rule holds.

    The unit_variance rule solves  int z^2 f_c = 1  and the
    median_of_squares rule solves  int_{-inf}^{1} f_c = 0.75  for the scale
    multiplier with a bracketing root finder against quadrature values.
    Product kernels are calibrated per coordinate and spherical kernels
    through their one-dimensional marginal.
    """

    MEDIAN_LEVEL = 0.75
    ROOT_XTOL = 1e-14
    ROOT_RTOL = 4.5e-15
    MAX_BRACKET_STEPS = 40

    def __init__(self, quadrature: Optional[Quadrature] = None):
        self.quadrature = quadrature or Quadrature()
        self.logger = get_logger(__name__)

    def standardize(self, kernel: SymmetricKernel, rule: Union[str, StandardizationRule]) -> SymmetricKernel:
        """
        Return a copy of ``kernel`` calibrated under ``rule``.

        Args:
            kernel (SymmetricKernel): Kernel with a free scale.
            rule (StandardizationRule): The identification constraint.

        Returns:
            SymmetricKernel: Calibrated kernel with ``rule`` recorded.

        Raises:
            StandardizationInfeasibleError: If the constraint cannot be met.
        """
        rule = StandardizationRule(rule)
        if isinstance(kernel, ProductKernel):
            components = tuple(self.standardize(c, rule) for c in kernel.components)
            return ProductKernel(components=components, rule=rule)
        if kernel.dim > 1:
            calibrated = self.standardize(kernel.marginal(), rule)
            return kernel.with_scale(calibrated.scale, rule)

        multiplier = self._solve_multiplier(kernel, rule)
        self.logger.debug(f"Standardized {kernel.family_tag} under {rule.value}: multiplier={multiplier:.15g}")
        return kernel.with_scale(kernel.scale * multiplier, rule)

    def constraint_residual(self, kernel: SymmetricKernel, rule: Union[str, StandardizationRule]) -> float:
        """Largest absolute residual of the rule's integral equation."""
        rule = StandardizationRule(rule)
        if isinstance(kernel, ProductKernel):
            return max(self.constraint_residual(c, rule) for c in kernel.components)
        if kernel.dim > 1:
            return self.constraint_residual(kernel.marginal(), rule)
        return abs(self._constraint(kernel, rule, 1.0))

    def second_moment_finite(self, kernel: SymmetricKernel) -> bool:
        base = kernel.marginal()
        integrand = Integrand(1, lambda z: z[:, 0] ** 2 * base.density(z), base.decay_hint, base.tail_df)
        return self.quadrature.probe_divergence(integrand).convergent

    def _constraint(self, kernel: SymmetricKernel, rule: StandardizationRule, multiplier: float) -> float:
        scaled = dataclasses.replace(kernel, scale=kernel.scale * multiplier)
        if rule == StandardizationRule.UNIT_VARIANCE:
            integrand = Integrand(1, lambda z: z[:, 0] ** 2 * scaled.density(z),
                                  scaled.decay_hint, scaled.tail_df)
            return float(self.quadrature.integrate(integrand).value) - 1.0
        integrand = Integrand(1, lambda z: np.where(z[:, 0] <= 1.0, scaled.density(z), 0.0),
                              scaled.decay_hint, scaled.tail_df, breakpoints=(0.0, 1.0))
        return float(self.quadrature.integrate(integrand).value) - self.MEDIAN_LEVEL

    def _solve_multiplier(self, kernel: SymmetricKernel, rule: StandardizationRule) -> float:
        """Find the scale multiplier that zeroes the constraint."""
        if rule == StandardizationRule.UNIT_VARIANCE:
            if not self.second_moment_finite(kernel):
                raise StandardizationInfeasibleError(
                    f"unit_variance standardization is infeasible for {kernel.family_tag}: "
                    f"no finite second moment"
                )
            second_moment = self._constraint(kernel, rule, 1.0) + 1.0
            guess = 1.0 / np.sqrt(second_moment)
            lo, hi = 0.9 * guess, 1.1 * guess
        else:
            lo, hi = 0.5, 2.0

        g = lambda s: self._constraint(kernel, rule, s)
        increasing = rule == StandardizationRule.UNIT_VARIANCE
        g_lo, g_hi = g(lo), g(hi)
        for _ in range(self.MAX_BRACKET_STEPS):
            if g_lo * g_hi <= 0:
                break
            if (g_lo > 0) == increasing:
                lo /= 2.0
                g_lo = g(lo)
            else:
                hi *= 2.0
                g_hi = g(hi)
        else:
            raise StandardizationInfeasibleError(
                f"{rule.value} standardization is infeasible for {kernel.family_tag}: no bracket found"
            )
        if g_lo == 0:
            return lo
        if g_hi == 0:
            return hi
        return float(optimize.brentq(g, lo, hi, xtol=self.ROOT_XTOL, rtol=self.ROOT_RTOL, maxiter=200))

    def __repr__(self) -> str:
        """Provide a string representation of the Standardizer."""
        return f"Standardizer(quadrature={self.quadrature!r})"


class SkewerRegistry:
    """Builds skewing functions from a family name and parameters."""

    FAMILIES = ("linear", "power", "t_type", "sine", "score_composed")
    COMMON_PARAMS = ("outer", "outer_df")
    FAMILY_PARAMS = {
        "linear": (),
        "power": ("alpha",),
        "t_type": ("df",),
        "sine": (),
        "score_composed": (),
    }

    def create(
        self,
        family: str,
        params: Optional[Dict[str, Any]] = None,
        dim: int = 1,
        kernel: Optional[SymmetricKernel] = None,
    ) -> SkewingFunction:
        """
        Create a skewing function.

        Args:
            family (str): One of FAMILIES.
            params (Optional[Dict[str, Any]]): Family parameters plus optional
                ``outer`` ("normal", "logistic", "student") and ``outer_df``.
            dim (int): Dimension k.
            kernel (Optional[SymmetricKernel]): Required for score_composed.

        Returns:
            SkewingFunction: The skewer.

        Raises:
            ModelInputError: On unknown families or parameters.
        """
        params = dict(params or {})
        if family not in self.FAMILIES:
            raise ModelInputError(f"Unknown skewer family '{family}'; expected one of {self.FAMILIES}")
        allowed = set(self.COMMON_PARAMS) | set(self.FAMILY_PARAMS[family])
        unknown = sorted(set(params) - allowed)
        if unknown:
            raise ModelInputError(f"Unknown parameter(s) for skewer '{family}': {', '.join(unknown)}")
        missing = [p for p in self.FAMILY_PARAMS[family] if p not in params]
        if missing:
            raise ModelInputError(f"Missing parameter(s) for skewer '{family}': {', '.join(missing)}")

        outer = OuterCdf(params.get("outer", "normal"), params.get("outer_df"))
        if family == "linear":
            return LinearSkewer(dim=dim, outer=outer)
        if family == "power":
            return PowerSkewer(dim=dim, outer=outer, alpha=float(params["alpha"]))
        if family == "t_type":
            return TTypeSkewer(dim=dim, outer=outer, df=float(params["df"]))
        if family == "sine":
            return SineSkewer(dim=dim, outer=outer)
        if kernel is None:
            raise ModelInputError("score_composed skewer needs the model kernel")
        if kernel.dim != dim:
            raise ModelInputError(f"Kernel dimension {kernel.dim} does not match skewer dimension {dim}")
        return ScoreComposedSkewer(dim=dim, outer=outer, kernel=kernel)

    def score_composed(self, kernel: SymmetricKernel, outer: str = "normal") -> ScoreComposedSkewer:
        """Pi_f(z, delta) = F(delta' phi_f(z)) for any kernel."""
        return ScoreComposedSkewer(dim=kernel.dim, outer=OuterCdf(outer), kernel=kernel)

    def describe(self, skewer: SkewingFunction) -> Dict[str, Any]:
        """Family and parameters that ``create`` rebuilds the skewer from."""
        params: Dict[str, Any] = {}
        if skewer.outer.name != "normal":
            params["outer"] = skewer.outer.name
        if skewer.outer.df is not None:
            params["outer_df"] = skewer.outer.df
        if isinstance(skewer, PowerSkewer):
            params["alpha"] = skewer.alpha
        elif isinstance(skewer, TTypeSkewer):
            params["df"] = skewer.df
        return {"family": skewer.family, "params": params}

    def __repr__(self) -> str:
        """Provide a string representation of the SkewerRegistry."""
        return f"SkewerRegistry(families={self.FAMILIES})"


class KernelRegistry:
    """Builds and standardizes symmetric kernels from a family name and parameters."""

    FAMILIES = ("gaussian", "student", "laplace", "logistic", "exponential_power", "product", "exp_of_neg_psi")
    FAMILY_PARAMS = {
        "gaussian": (),
        "student": ("df",),
        "laplace": (),
        "logistic": (),
        "exponential_power": ("alpha",),
        "product": ("components",),
        "exp_of_neg_psi": ("a", "skewer"),
    }
    ONE_DIMENSIONAL = ("laplace", "logistic", "exponential_power", "exp_of_neg_psi")

    def __init__(self, standardizer: Optional[Standardizer] = None, skewers: Optional[SkewerRegistry] = None):
        self.standardizer = standardizer or Standardizer()
        self.skewers = skewers or SkewerRegistry()

    def create(
        self,
        family: str,
        params: Optional[Dict[str, Any]] = None,
        dim: int = 1,
        rule: Union[str, StandardizationRule] = StandardizationRule.UNIT_VARIANCE,
    ) -> SymmetricKernel:
        """
        Create a kernel and standardize it under ``rule``.

        Args:
            family (str): One of FAMILIES.
            params (Optional[Dict[str, Any]]): Family parameters.
            dim (int): Dimension k.
            rule (StandardizationRule): Standardization rule.

        Returns:
            SymmetricKernel: The standardized kernel.
        """
        return self.standardizer.standardize(self.build(family, params, dim), rule)

    def build(self, family: str, params: Optional[Dict[str, Any]] = None, dim: int = 1) -> SymmetricKernel:
        """Create an unstandardized kernel at unit base scale."""
        params = dict(params or {})
        if family not in self.FAMILIES:
            raise ModelInputError(f"Unknown kernel family '{family}'; expected one of {self.FAMILIES}")
        unknown = sorted(set(params) - set(self.FAMILY_PARAMS[family]))
        if unknown:
            raise ModelInputError(f"Unknown parameter(s) for kernel '{family}': {', '.join(unknown)}")
        missing = [p for p in self.FAMILY_PARAMS[family] if p not in params]
        if missing:
            raise ModelInputError(f"Missing parameter(s) for kernel '{family}': {', '.join(missing)}")
        if family in self.ONE_DIMENSIONAL and dim != 1:
            raise ModelInputError(f"Kernel '{family}' is one-dimensional; use a product kernel for dim={dim}")

        if family == "gaussian":
            return GaussianKernel(dim=dim)
        if family == "student":
            return StudentKernel(dim=dim, df=float(params["df"]))
        if family == "laplace":
            return LaplaceKernel()
        if family == "logistic":
            return LogisticKernel()
        if family == "exponential_power":
            return ExponentialPowerKernel(alpha=float(params["alpha"]))
        if family == "product":
            components = [self._component(c) for c in params["components"]]
            if len(components) != dim:
                raise ModelInputError(f"Product kernel has {len(components)} components but dim={dim}")
            return ProductKernel(components=tuple(components))
        skewer_spec = params["skewer"]
        if not isinstance(skewer_spec, dict) or "family" not in skewer_spec:
            raise ModelInputError("exp_of_neg_psi 'skewer' must be a table with a 'family' key")
        skewer = self.skewers.create(skewer_spec["family"], skewer_spec.get("params"), dim=1)
        return ExpOfNegPsiKernel(a=float(params["a"]), skewer=skewer)

    def describe(self, kernel: SymmetricKernel) -> Dict[str, Any]:
        """Family and parameters that ``build`` rebuilds the kernel from."""
        if isinstance(kernel, StudentKernel):
            return {"family": kernel.family, "params": {"df": kernel.df}}
        if isinstance(kernel, ExponentialPowerKernel):
            return {"family": kernel.family, "params": {"alpha": kernel.alpha}}
        if isinstance(kernel, ProductKernel):
            return {"family": kernel.family, "params": {"components": [self.describe(c) for c in kernel.components]}}
        if isinstance(kernel, ExpOfNegPsiKernel):
            if isinstance(kernel.skewer, ScoreComposedSkewer):
                raise ModelError("exp_of_neg_psi kernels of a score_composed skewer cannot be written as a spec")
            return {"family": kernel.family, "params": {"a": kernel.a, "skewer": self.skewers.describe(kernel.skewer)}}
        return {"family": kernel.family, "params": {}}

    def _component(self, spec: Any) -> SymmetricKernel:
        if isinstance(spec, str):
            spec = {"family": spec}
        if not isinstance(spec, dict) or "family" not in spec:
            raise ModelInputError("Product components must be tables with a 'family' key")
        extra = sorted(set(spec) - {"family", "params"})
        if extra:
            raise ModelInputError(f"Unknown key(s) in product component: {', '.join(extra)}")
        return self.build(spec["family"], spec.get("params"), dim=1)

    def __repr__(self) -> str:
        """Provide a string representation of the KernelRegistry."""
        return f"KernelRegistry(families={self.FAMILIES})"
