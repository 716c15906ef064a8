"""Independent numerical oracles used by the tests.

These deliberately avoid the package's own evaluation paths: transforms are
integrated in t-space (the package substitutes into Gaussian coordinates for
the log-normal), derivatives come from a separate Richardson routine, and the
point mass is handled through a narrow-uniform surrogate.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.integrate import quad

from aoiq import Deterministic


def transform_quad(dist, s: float, power: int = 0, abs_tol: float = 1e-12) -> float:
    """E[U^power e^{sU}] by adaptive quadrature of the density in t-space.

    For the point mass the integral is approximated on a width-2e-5 uniform
    surrogate, accurate to ~1e-11 relative for |s| of order one.
    """
    if isinstance(dist, Deterministic):
        u, eps = dist.value, 1e-5
        lo, hi = u - eps, u + eps
        val, _ = quad(lambda t: t**power * math.exp(s * t) / (2 * eps), lo, hi,
                      epsabs=abs_tol, epsrel=1e-11)
        return val

    def integrand(t):
        return t**power * math.exp(s * t) * dist.pdf(t)

    val, _ = quad(integrand, 0.0, np.inf, epsabs=abs_tol, epsrel=1e-11, limit=400)
    return val


def richardson_derivative(f, x: float, h0: float, levels: int = 5) -> float:
    """First derivative by central differences with Richardson extrapolation."""
    table = [[0.0] * levels for _ in range(levels)]
    for i in range(levels):
        h = h0 / 2.0**i
        table[i][0] = (f(x + h) - f(x - h)) / (2.0 * h)
        for j in range(1, i + 1):
            w = 4.0**j
            table[i][j] = (w * table[i][j - 1] - table[i - 1][j - 1]) / (w - 1.0)
    return table[levels - 1][levels - 1]


def richardson_second_derivative(f, x: float, h0: float, levels: int = 4) -> float:
    """Second derivative by the three-point stencil with Richardson."""
    table = [[0.0] * levels for _ in range(levels)]
    for i in range(levels):
        h = h0 / 2.0**i
        table[i][0] = (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h)
        for j in range(1, i + 1):
            w = 4.0**j
            table[i][j] = (w * table[i][j - 1] - table[i - 1][j - 1]) / (w - 1.0)
    return table[levels - 1][levels - 1]
