from typing import List, Optional, Tuple

import numpy as np

from .models import SkewingFunction, Standardizer, SymmetricKernel
from .skew_logger import get_logger


class ModelValidatorError(Exception):
    """Custom exception for ModelValidator errors."""


class ModelValidator:
    """
    Checks kernels and skewers against their defining identities on random
    probe points.

    Kernels: central symmetry of the log density, oddness of the score, the
    score against central differences of the log density and idempotent
    standardization. Skewers: Pi(-z, delta) + Pi(z, delta) = 1,
    Pi(z, 0) = 1/2, psi against a central difference in delta and the
    gradient of the primitive against psi.
    """

    PROBES = 1000
    DELTA_DRAWS = 20
    PROBE_SCALE = 2.0
    SYMMETRY_TOL = 1e-12
    SCORE_ODD_TOL = 1e-9
    FD_STEP = 1e-4
    SCORE_FD_TOL = 1e-5
    PSI_FD_TOL = 1e-6
    GRADIENT_TOL = 1e-6
    IDEMPOTENCE_TOL = 1e-10

    def __init__(self, probes: int = PROBES, seed: int = 42, standardizer: Optional[Standardizer] = None):
        self.probes = probes
        self.seed = seed
        self.standardizer = standardizer or Standardizer()
        self.logger = get_logger(__name__)
        self.errors: List[str] = []
        self.warnings: List[str] = []

    def validate_kernel(self, kernel: SymmetricKernel) -> Tuple[bool, List[str], List[str]]:
        """
        Validate a kernel on random probes.

        Args:
            kernel (SymmetricKernel): The kernel to check.

        Returns:
            Tuple[bool, List[str], List[str]]: A tuple containing:
                - Boolean indicating if the validation passed (True) or failed (False)
                - List of error messages
                - List of warning messages

        Raises:
            ModelValidatorError: If validation fails due to critical errors.
        """
        self.errors, self.warnings = [], []
        try:
            z = self._probes(kernel.dim)
            self._validate_kernel_symmetry(kernel, z)
            self._validate_score(kernel, z)
            self._validate_standardization(kernel)
            self.logger.debug(f"Validated kernel {kernel.family_tag}: {len(self.errors)} error(s)")
            return len(self.errors) == 0, self.errors, self.warnings
        except Exception as e:
            raise ModelValidatorError(f"Failed to validate kernel {kernel.family_tag}: {str(e)}") from e

    def validate_skewer(self, skewer: SkewingFunction) -> Tuple[bool, List[str], List[str]]:
        """
        Validate a skewer on random (z, delta) probes.

        Returns:
            Tuple[bool, List[str], List[str]]: (is_valid, errors, warnings).

        Raises:
            ModelValidatorError: If validation fails due to critical errors.
        """
        self.errors, self.warnings = [], []
        try:
            z = self._probes(skewer.dim)
            self._validate_reflection(skewer, z)
            self._validate_psi(skewer, z)
            self._validate_primitive(skewer, z)
            self.logger.debug(f"Validated skewer {skewer.family_tag}: {len(self.errors)} error(s)")
            return len(self.errors) == 0, self.errors, self.warnings
        except Exception as e:
            raise ModelValidatorError(f"Failed to validate skewer {skewer.family_tag}: {str(e)}") from e

    def validate(self, kernel: SymmetricKernel, skewer: SkewingFunction) -> Tuple[bool, List[str], List[str]]:
        """Validate a kernel and a skewer together."""
        _, kernel_errors, kernel_warnings = self.validate_kernel(kernel)
        _, skewer_errors, skewer_warnings = self.validate_skewer(skewer)
        if kernel.dim != skewer.dim:
            kernel_errors.append(f"Kernel dimension {kernel.dim} does not match skewer dimension {skewer.dim}")
        errors = kernel_errors + skewer_errors
        return len(errors) == 0, errors, kernel_warnings + skewer_warnings

    def _probes(self, dim: int) -> np.ndarray:
        rng = np.random.default_rng(self.seed)
        return self.PROBE_SCALE * rng.standard_normal((self.probes, dim))

    def _deltas(self, dim: int) -> np.ndarray:
        rng = np.random.default_rng(self.seed + 1)
        return self.PROBE_SCALE * rng.standard_normal((self.DELTA_DRAWS, dim))

    def _validate_kernel_symmetry(self, kernel: SymmetricKernel, z: np.ndarray) -> None:
        """log f(z) = log f(-z) and score(-z) = -score(z)."""
        gap = np.max(np.abs(kernel.log_density(z) - kernel.log_density(-z)))
        if not gap < self.SYMMETRY_TOL:
            self.errors.append(f"Kernel {kernel.family_tag} is not centrally symmetric: max gap {gap:.3e}")
        odd = np.max(np.linalg.norm(kernel.score(z) + kernel.score(-z), axis=1))
        if not odd < self.SCORE_ODD_TOL:
            self.errors.append(f"Kernel {kernel.family_tag} score is not odd: max gap {odd:.3e}")

    def _validate_score(self, kernel: SymmetricKernel, z: np.ndarray) -> None:
        """score = -grad log f by central differences."""
        h = self.FD_STEP
        score = kernel.score(z)
        worst = 0.0
        for j in range(kernel.dim):
            step = np.zeros(kernel.dim)
            step[j] = h
            fd = -(kernel.log_density(z + step) - kernel.log_density(z - step)) / (2.0 * h)
            # kinks of the Laplace and low-alpha power kernels sit at coordinate zeros
            smooth = np.all(np.abs(z) > 10 * h, axis=1)
            worst = max(worst, float(np.max(np.abs(fd - score[:, j])[smooth] / (1.0 + np.abs(score[smooth, j])))))
        if not worst < self.SCORE_FD_TOL:
            self.errors.append(f"Kernel {kernel.family_tag} score disagrees with -grad log f: {worst:.3e}")

    def _validate_standardization(self, kernel: SymmetricKernel) -> None:
        if kernel.rule is None:
            self.warnings.append(f"Kernel {kernel.family_tag} is not standardized")
            return
        again = self.standardizer.standardize(kernel, kernel.rule)
        ratio = self._scales(again) / self._scales(kernel)
        drift = float(np.max(np.abs(ratio - 1.0)))
        if not drift < self.IDEMPOTENCE_TOL:
            self.errors.append(
                f"Standardizing {kernel.family_tag} again changes its scale by {drift:.3e} "
                f"under {kernel.rule.value}"
            )

    def _scales(self, kernel: SymmetricKernel) -> np.ndarray:
        components = getattr(kernel, "components", None)
        if components:
            return np.array([c.scale for c in components])
        return np.array([kernel.scale])

    def _validate_reflection(self, skewer: SkewingFunction, z: np.ndarray) -> None:
        """Pi(-z, delta) + Pi(z, delta) = 1 and Pi(z, 0) = 1/2."""
        worst = 0.0
        for delta in self._deltas(skewer.dim):
            total = skewer.pi(z, delta) + skewer.pi(-z, delta)
            worst = max(worst, float(np.max(np.abs(total - 1.0))))
        if not worst < self.SYMMETRY_TOL:
            self.errors.append(f"Skewer {skewer.family_tag} violates Pi(-z) + Pi(z) = 1: max gap {worst:.3e}")
        half = float(np.max(np.abs(skewer.pi(z, np.zeros(skewer.dim)) - 0.5)))
        if not half < self.SYMMETRY_TOL:
            self.errors.append(f"Skewer {skewer.family_tag} has Pi(z, 0) != 1/2: max gap {half:.3e}")
        values = np.concatenate([skewer.pi(z, delta) for delta in self._deltas(skewer.dim)])
        if np.any(values < 0.0) or np.any(values > 1.0):
            self.errors.append(f"Skewer {skewer.family_tag} leaves [0, 1]")

    def _validate_psi(self, skewer: SkewingFunction, z: np.ndarray) -> None:
        """psi_j = d Pi / d delta_j at delta = 0 by central differences."""
        h = self.FD_STEP
        psi = skewer.psi(z)
        worst = 0.0
        for j in range(skewer.dim):
            step = np.zeros(skewer.dim)
            step[j] = h
            fd = (skewer.pi(z, step) - skewer.pi(z, -step)) / (2.0 * h)
            size = 1.0 + np.abs(psi[:, j]) ** 3
            worst = max(worst, float(np.max(np.abs(fd - psi[:, j]) / size)))
        if not worst < self.PSI_FD_TOL:
            self.errors.append(f"Skewer {skewer.family_tag} psi disagrees with d Pi / d delta: {worst:.3e}")

    def _validate_primitive(self, skewer: SkewingFunction, z: np.ndarray) -> None:
        """grad Psi = psi by central differences."""
        h = self.FD_STEP
        psi = skewer.psi(z)
        smooth = np.all(np.abs(z) > 10 * h, axis=1)
        worst = 0.0
        for j in range(skewer.dim):
            step = np.zeros(skewer.dim)
            step[j] = h
            fd = (skewer.psi_primitive(z + step) - skewer.psi_primitive(z - step)) / (2.0 * h)
            worst = max(worst, float(np.max(np.abs(fd - psi[:, j])[smooth] / (1.0 + np.abs(psi[smooth, j])))))
        if not worst < self.GRADIENT_TOL:
            self.errors.append(f"Skewer {skewer.family_tag} primitive gradient disagrees with psi: {worst:.3e}")
        if np.max(np.abs(skewer.psi_primitive(-z) - skewer.psi_primitive(z))) > self.SYMMETRY_TOL * (
            1.0 + float(np.max(np.abs(skewer.psi_primitive(z))))
        ):
            self.warnings.append(f"Skewer {skewer.family_tag} primitive is not even")

    def __repr__(self) -> str:
        """Provide a string representation of the ModelValidator."""
        return f"ModelValidator(probes={self.probes}, seed={self.seed})"
