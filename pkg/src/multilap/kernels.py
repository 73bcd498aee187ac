"""Radial kernel functions used to define graph weights on point clouds.

Two families are supported:

    gaussian    K(y) = exp(-|y|^2 / sigma^2)
    laplacian   K(y) = exp(-|y| / sigma)

Both satisfy K(0) = 1 and decay monotonically, so a kernel weight matrix
W_ij = K(x_i - x_j) (with zero diagonal) is symmetric and nonnegative.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

FAMILIES = ("gaussian", "laplacian")


@dataclass(frozen=True)
class KernelSpec:
    """A radial kernel, parameterized by its family name and length scale."""

    family: str
    sigma: float

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(
                f"unknown kernel family {self.family!r}, expected one of {FAMILIES}"
            )
        if not np.isfinite(self.sigma) or self.sigma <= 0:
            raise ConfigError(f"kernel sigma must be positive, got {self.sigma}")

    def value_at_zero(self):
        return 1.0

    def of_sqdist(self, d2):
        """Kernel value as a function of squared distance."""
        d2 = np.asarray(d2, dtype=float)
        if self.family == "gaussian":
            return np.exp(-d2 / self.sigma**2)
        return np.exp(-np.sqrt(d2) / self.sigma)

    def radial(self, r):
        """Kernel value as a function of distance r >= 0."""
        r = np.asarray(r, dtype=float)
        if self.family == "gaussian":
            return np.exp(-((r / self.sigma) ** 2))
        return np.exp(-r / self.sigma)

    def radial_derivatives(self, r, order):
        """Derivatives d^j/dr^j K(r) for j = 0..order at a scalar radius r.

        Closed forms: for the gaussian, d^j/dr^j e^{-(r/s)^2} =
        (-1)^j s^{-j} H_j(r/s) e^{-(r/s)^2} with physicists' Hermite
        polynomials H_j; for the laplacian, (-1/s)^j e^{-r/s}.
        """
        r = float(r)
        s = self.sigma
        if self.family == "laplacian":
            base = np.exp(-r / s)
            return [base * (-1.0 / s) ** j for j in range(order + 1)]
        x = r / s
        e = np.exp(-(x**2))
        # Hermite recurrence H_{j+1} = 2 x H_j - 2 j H_{j-1}
        h_prev, h = 0.0, 1.0
        out = [e]
        for j in range(1, order + 1):
            h_prev, h = h, 2.0 * x * h - 2.0 * (j - 1) * h_prev
            out.append((-1.0 / s) ** j * h * e)
        return out

    def scaled(self, factor):
        """Kernel matching K under the coordinate change x -> factor * x.

        Both families satisfy K_sigma(y / factor) = K_{sigma * factor}(y),
        so rescaled points with a rescaled sigma reproduce the original
        weights exactly.
        """
        return KernelSpec(self.family, self.sigma * factor)
