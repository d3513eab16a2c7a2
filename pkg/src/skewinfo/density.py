from dataclasses import dataclass
from typing import Any, List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import legendre

from .models import (
    SkewingFunction,
    SymmetricKernel,
    as_points,
)
from .quadrature import Integrand, Quadrature
from .skew_logger import get_logger

LOG_2 = float(np.log(2.0))


class DensityError(Exception):
    """Custom exception for SkewModel errors."""


class DensityInputError(DensityError):
    """Raised for invalid parameter points, data or grids."""


@dataclass
class ThetaPoint:
    """
    Parameter point (mu, Sigma^{1/2}, delta).

    ``sigma_half`` is the symmetric square root of the scatter matrix; a
    scalar sigma is accepted when k = 1.
    """
    mu: np.ndarray
    sigma_half: np.ndarray
    delta: np.ndarray

    SYMMETRY_TOL = 1e-10
    EIGEN_FLOOR = 1e-12

    def __post_init__(self):
        self.mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        k = self.mu.size
        self.sigma_half = np.asarray(self.sigma_half, dtype=float)
        if self.sigma_half.size == k * k:
            self.sigma_half = self.sigma_half.reshape(k, k)
        self.delta = np.atleast_1d(np.asarray(self.delta, dtype=float))
        if self.mu.ndim != 1 or self.sigma_half.shape != (k, k) or self.delta.shape != (k,):
            raise DensityInputError(
                f"Inconsistent parameter shapes: mu {self.mu.shape}, sigma_half {self.sigma_half.shape}, "
                f"delta {self.delta.shape}"
            )
        if not (np.all(np.isfinite(self.mu)) and np.all(np.isfinite(self.sigma_half))
                and np.all(np.isfinite(self.delta))):
            raise DensityInputError("Parameter point must be finite")
        scale = max(1.0, float(np.max(np.abs(self.sigma_half))))
        if np.max(np.abs(self.sigma_half - self.sigma_half.T)) > self.SYMMETRY_TOL * scale:
            raise DensityInputError("sigma_half must be symmetric")
        if np.min(np.linalg.eigvalsh(self.sigma_half)) <= 0:
            raise DensityInputError("sigma_half must be positive definite")

    @classmethod
    def symmetric(cls, dim: int) -> "ThetaPoint":
        """The point (0, I_k, 0)."""
        return cls(np.zeros(dim), np.eye(dim), np.zeros(dim))

    @classmethod
    def from_sigma(cls, mu: Any, sigma: Any, delta: Any) -> "ThetaPoint":
        """Build from a scatter matrix; eigenvalues are floored before the square root."""
        sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
        values, vectors = np.linalg.eigh(0.5 * (sigma + sigma.T))
        root = (vectors * np.sqrt(np.maximum(values, cls.EIGEN_FLOOR))) @ vectors.T
        return cls(mu, 0.5 * (root + root.T), delta)

    @property
    def dim(self) -> int:
        return self.mu.size

    @property
    def sigma(self) -> np.ndarray:
        return self.sigma_half @ self.sigma_half

    @property
    def sigma_half_inv(self) -> np.ndarray:
        inv = np.linalg.inv(self.sigma_half)
        return 0.5 * (inv + inv.T)

    @property
    def log_det_sigma_half(self) -> float:
        return float(np.linalg.slogdet(self.sigma_half)[1])

    @property
    def at_symmetry(self) -> bool:
        return bool(np.all(self.delta == 0.0))

    def with_delta(self, delta: Any) -> "ThetaPoint":
        return ThetaPoint(self.mu.copy(), self.sigma_half.copy(), delta)

    def to_dict(self) -> dict:
        return {
            "mu": self.mu.tolist(),
            "sigma_half": self.sigma_half.tolist(),
            "delta": self.delta.tolist(),
        }


@dataclass
class CurveTable:
    x: np.ndarray
    pdf: np.ndarray
    axis: int = 0
    delta: Optional[np.ndarray] = None


class SkewModel:
    """
    A skew-symmetric density

        2 |Sigma|^{-1/2} f(Sigma^{-1/2}(x - mu)) Pi(Sigma^{-1/2}(x - mu), delta)

    built from a standardized kernel f and a skewing function Pi.
    """

    CHUNK_SIZE = 65536
    CDF_NODES = 20

    def __init__(self, kernel: SymmetricKernel, skewer: SkewingFunction, theta: Optional[ThetaPoint] = None):
        """
        Initialize the SkewModel.

        Args:
            kernel (SymmetricKernel): A standardized kernel.
            skewer (SkewingFunction): Skewing function of the same dimension.
            theta (Optional[ThetaPoint]): Parameter point; defaults to (0, I, 0).

        Raises:
            DensityInputError: On dimension mismatch or an unstandardized kernel.
        """
        theta = theta or ThetaPoint.symmetric(kernel.dim)
        if kernel.dim != skewer.dim or kernel.dim != theta.dim:
            raise DensityInputError(
                f"Dimension mismatch: kernel {kernel.dim}, skewer {skewer.dim}, theta {theta.dim}"
            )
        if kernel.rule is None:
            raise DensityInputError(f"Kernel {kernel.family_tag} is not standardized")
        self.kernel = kernel
        self.skewer = skewer
        self.theta = theta
        self.logger = get_logger(__name__)

    @property
    def dim(self) -> int:
        return self.kernel.dim

    @property
    def tag(self) -> str:
        return f"{self.kernel.family_tag} x {self.skewer.family_tag}/{self.skewer.outer.tag}"

    def with_theta(self, theta: ThetaPoint) -> "SkewModel":
        return SkewModel(self.kernel, self.skewer, theta)

    def standardize(self, x: Any) -> np.ndarray:
        """z = Sigma^{-1/2}(x - mu) for each row of x."""
        points = self._points(x)
        return (points - self.theta.mu) @ self.theta.sigma_half_inv

    def logpdf(self, x: Any) -> np.ndarray:
        """Log density at each row of x."""
        z = self.standardize(x)
        return (LOG_2 - self.theta.log_det_sigma_half + self.kernel.log_density(z)
                + self.skewer.log_pi(z, self.theta.delta))

    def pdf(self, x: Any) -> np.ndarray:
        """
        Density at each row of x.

        Args:
            x: A point in R^k or an (n, k) array.

        Returns:
            np.ndarray: Densities, shape (n,).

        Raises:
            DensityInputError: If x is not finite or has the wrong dimension.
        """
        return np.exp(self.logpdf(x))

    def sample(self, n: int, seed: int = 0) -> np.ndarray:
        """
        Draw exact samples by sign flipping.

        Z ~ f and U ~ U(0, 1); the sign is +1 when U < Pi(Z, delta). Draws are
        produced in chunks; chunk i uses the Philox stream of ``seed`` jumped
        i times, so any chunk can be regenerated independently.

        Args:
            n (int): Number of draws, at least 1.
            seed (int): Generator seed.

        Returns:
            np.ndarray: Draws of shape (n, k).

        Raises:
            DensityInputError: If n < 1.
            SamplingCapabilityError: If the kernel has no sampler.
        """
        if n < 1:
            raise DensityInputError(f"Sample size must be at least 1, got {n}")
        chunks: List[np.ndarray] = []
        for i, start in enumerate(range(0, n, self.CHUNK_SIZE)):
            size = min(self.CHUNK_SIZE, n - start)
            chunks.append(self._sample_chunk(self._chunk_generator(seed, i), size))
        return np.concatenate(chunks, axis=0)

    def curve(self, axis: int = 0, grid: Tuple[float, float, int] = (-4.0, 4.0, 401),
              fixed: Optional[Sequence[float]] = None) -> CurveTable:
        """
        Tabulate the density along one coordinate.

        Args:
            axis (int): Coordinate index that varies.
            grid (Tuple[float, float, int]): (lo, hi, n_points).
            fixed (Optional[Sequence[float]]): Values of the other coordinates; defaults to mu.

        Returns:
            CurveTable: The grid and the density values.

        Raises:
            DensityInputError: On an empty grid or an invalid axis.
        """
        lo, hi, count = float(grid[0]), float(grid[1]), int(grid[2])
        if count < 1 or (count > 1 and not hi > lo):
            raise DensityInputError(f"Empty curve grid: [{lo}, {hi}] with {count} points")
        if not 0 <= axis < self.dim:
            raise DensityInputError(f"Axis {axis} out of range for dimension {self.dim}")
        base = self.theta.mu.copy() if fixed is None else np.asarray(fixed, dtype=float).reshape(self.dim)
        x = np.linspace(lo, hi, count)
        points = np.tile(base, (count, 1))
        points[:, axis] = x
        return CurveTable(x=x, pdf=self.pdf(points), axis=axis, delta=self.theta.delta.copy())

    def cdf(self, x: Any) -> np.ndarray:
        """
        Distribution function for k = 1.

        The left tail up to the smallest query point is integrated
        adaptively; successive gaps between sorted query points use a
        Gauss-Legendre rule.
        """
        if self.dim != 1:
            raise DensityInputError("cdf is available for k = 1 only")
        values = np.asarray(x, dtype=float).ravel()
        knots = np.unique(np.concatenate([values, self.theta.mu]))
        first = knots[0]
        tail = Integrand(
            1,
            lambda z: np.where(z[:, 0] <= first, self.pdf(z), 0.0),
            self.kernel.decay_hint,
            self.kernel.tail_df,
            breakpoints=(0.0, float(first)),
        )
        start = Quadrature().integrate(tail).value
        nodes, weights = legendre.leggauss(self.CDF_NODES)
        left, right = knots[:-1], knots[1:]
        half, centre = 0.5 * (right - left), 0.5 * (right + left)
        points = (centre[:, None] + half[:, None] * nodes[None, :]).reshape(-1, 1)
        gaps = (self.pdf(points).reshape(left.size, -1) @ weights) * half
        cumulative = np.concatenate([[start], start + np.cumsum(gaps)])
        return np.clip(cumulative[np.searchsorted(knots, values)], 0.0, 1.0)

    def _points(self, x: Any) -> np.ndarray:
        try:
            points = as_points(x, self.dim)
        except Exception as e:
            raise DensityInputError(str(e)) from e
        if not np.all(np.isfinite(points)):
            raise DensityInputError("Density argument must be finite")
        return points

    def _chunk_generator(self, seed: int, index: int) -> np.random.Generator:
        """Generator for one sampling chunk."""
        bit_generator = np.random.Philox(seed)
        if index:
            bit_generator = bit_generator.jumped(index)
        return np.random.Generator(bit_generator)

    def _sample_chunk(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Sign-flip one chunk of kernel draws."""
        z = self.kernel.sample(rng, size)
        u = rng.random(size)
        sign = np.where(u < self.skewer.pi(z, self.theta.delta), 1.0, -1.0)
        return self.theta.mu + (sign[:, None] * z) @ self.theta.sigma_half

    def __repr__(self) -> str:
        """Provide a string representation of the SkewModel."""
        return f"SkewModel(tag='{self.tag}', theta={self.theta.to_dict()})"
