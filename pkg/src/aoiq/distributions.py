"""Service-time distributions and their exponential transforms.

Every analytic formula in this package touches the service law only through
the transforms E[e^{sU}] and E[U e^{sU}], so each family carries closed forms
for those where they exist and a guarded numerical quadrature otherwise
(log-normal). Distribution objects are immutable and hashable; sampling
mutates only the caller-owned generator.
"""

from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import special
from scipy.integrate import IntegrationWarning, quad

from .errors import DistSpecError, DomainError, QuadratureError

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
_EXP_OVERFLOW = 700.0
_EXP_UNDERFLOW = -745.0


def quad_tolerances() -> tuple[float, float]:
    """(absolute, relative) tolerance for transform quadrature.

    The absolute tolerance defaults to 1e-12 and can be overridden through the
    AOI_QUAD_TOL environment variable; the relative tolerance is ten times
    looser. Defaults are tighter than the documented 1e-10 guarantee so that
    nearly cancelling combinations downstream keep enough digits.
    """
    abs_tol = float(os.environ.get("AOI_QUAD_TOL", "1e-12"))
    return abs_tol, 10.0 * abs_tol


class ServiceDistribution:
    """Common surface of all service-time families.

    Subclasses are frozen dataclasses; construction validates parameters and
    raises ValueError for out-of-domain values.
    """

    @property
    def sup_s(self) -> float:
        """Supremum of s for which E[e^{sU}] is finite."""
        raise NotImplementedError

    # True when E[e^{sU}] is finite at s == sup_s itself (log-normal at 0).
    _finite_at_sup = False

    def mean(self) -> float:
        raise NotImplementedError

    def raw_moment(self, order: int) -> float:
        """E[U^order] for order in {1, 2, 3}."""
        raise NotImplementedError

    def second_moment(self) -> float:
        return self.raw_moment(2)

    def pdf(self, t: float) -> float:
        raise NotImplementedError

    def cdf(self, t: float) -> float:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size: int | None = None):
        """Draw service times using the caller's generator."""
        raise NotImplementedError

    def exp_transform(self, s: float) -> float:
        """E[e^{sU}] for s inside the transform domain."""
        if s == 0.0:
            return 1.0
        self._check_transform_domain(s)
        return self._exp_transform(s)

    def exp_transform_deriv(self, s: float) -> float:
        """E[U e^{sU}], the derivative of exp_transform."""
        if s == 0.0:
            return self.mean()
        self._check_transform_domain(s)
        return self._exp_transform_deriv(s)

    def exp_transform_deriv2(self, s: float) -> float:
        """E[U^2 e^{sU}], the second derivative of exp_transform."""
        if s == 0.0:
            return self.raw_moment(2)
        self._check_transform_domain(s)
        return self._exp_transform_deriv2(s)

    def _check_transform_domain(self, s: float) -> None:
        sup = self.sup_s
        if s > sup or (s == sup and not self._finite_at_sup):
            raise DomainError(
                f"exponential transform of {self.spec_string()} undefined at "
                f"s={s!r}; domain is s < {sup!r}"
            )

    def _exp_transform(self, s: float) -> float:
        raise NotImplementedError

    def _exp_transform_deriv(self, s: float) -> float:
        raise NotImplementedError

    def _exp_transform_deriv2(self, s: float) -> float:
        raise NotImplementedError

    def spec_string(self) -> str:
        """Spec-grammar string that parses back to an equal distribution."""
        raise NotImplementedError


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ValueError(msg)


def _finite_positive(x: float) -> bool:
    return math.isfinite(x) and x > 0.0


@dataclass(frozen=True)
class Exponential(ServiceDistribution):
    """Exponential service with the given rate."""

    rate: float

    def __post_init__(self):
        _require(_finite_positive(self.rate), f"exponential rate must be > 0, got {self.rate}")

    @property
    def sup_s(self) -> float:
        return self.rate

    def mean(self) -> float:
        return 1.0 / self.rate

    def raw_moment(self, order: int) -> float:
        return math.factorial(order) / self.rate**order

    def pdf(self, t: float) -> float:
        return self.rate * math.exp(-self.rate * t) if t >= 0.0 else 0.0

    def cdf(self, t: float) -> float:
        return -math.expm1(-self.rate * t) if t >= 0.0 else 0.0

    def sample(self, rng, size=None):
        return rng.exponential(1.0 / self.rate, size)

    def _exp_transform(self, s):
        return self.rate / (self.rate - s)

    def _exp_transform_deriv(self, s):
        return self.rate / (self.rate - s) ** 2

    def _exp_transform_deriv2(self, s):
        return 2.0 * self.rate / (self.rate - s) ** 3

    def spec_string(self):
        return f"exp:rate={self.rate!r}"


@dataclass(frozen=True)
class Gamma(ServiceDistribution):
    """Gamma service with shape k and rate beta (mean k/beta)."""

    shape: float
    rate: float

    def __post_init__(self):
        _require(_finite_positive(self.shape), f"gamma shape must be > 0, got {self.shape}")
        _require(_finite_positive(self.rate), f"gamma rate must be > 0, got {self.rate}")

    @property
    def sup_s(self) -> float:
        return self.rate

    def mean(self) -> float:
        return self.shape / self.rate

    def raw_moment(self, order: int) -> float:
        v = 1.0
        for j in range(order):
            v *= (self.shape + j) / self.rate
        return v

    def pdf(self, t: float) -> float:
        if t < 0.0:
            return 0.0
        if t == 0.0:
            if self.shape < 1.0:
                return math.inf
            return self.rate if self.shape == 1.0 else 0.0
        log_p = (
            self.shape * math.log(self.rate)
            + (self.shape - 1.0) * math.log(t)
            - self.rate * t
            - math.lgamma(self.shape)
        )
        return math.exp(log_p)

    def cdf(self, t: float) -> float:
        return float(special.gammainc(self.shape, self.rate * t)) if t > 0.0 else 0.0

    def sample(self, rng, size=None):
        return rng.gamma(self.shape, 1.0 / self.rate, size)

    def _exp_transform(self, s):
        return (self.rate / (self.rate - s)) ** self.shape

    def _exp_transform_deriv(self, s):
        return self.shape * self._exp_transform(s) / (self.rate - s)

    def _exp_transform_deriv2(self, s):
        return self.shape * (self.shape + 1.0) * self._exp_transform(s) / (self.rate - s) ** 2

    def spec_string(self):
        return f"gamma:shape={self.shape!r},rate={self.rate!r}"


@dataclass(frozen=True)
class Deterministic(ServiceDistribution):
    """Unit point mass: every service takes exactly `value` time units.

    Represented exactly rather than as a narrow continuous law so the
    transforms are closed-form and free of tolerance stacking. The density is
    reported as an atom marker: inf at the atom, 0 elsewhere.
    """

    value: float

    def __post_init__(self):
        _require(_finite_positive(self.value), f"deterministic value must be > 0, got {self.value}")

    @property
    def sup_s(self) -> float:
        return math.inf

    def mean(self) -> float:
        return self.value

    def raw_moment(self, order: int) -> float:
        return self.value**order

    def pdf(self, t: float) -> float:
        return math.inf if t == self.value else 0.0

    def cdf(self, t: float) -> float:
        return 1.0 if t >= self.value else 0.0

    def sample(self, rng, size=None):
        if size is None:
            return self.value
        return np.full(size, self.value)

    def _exp_transform(self, s):
        return math.exp(s * self.value)

    def _exp_transform_deriv(self, s):
        return self.value * math.exp(s * self.value)

    def _exp_transform_deriv2(self, s):
        return self.value**2 * math.exp(s * self.value)

    def spec_string(self):
        return f"det:value={self.value!r}"


@dataclass(frozen=True)
class Uniform(ServiceDistribution):
    """Uniform service on [a, b] with 0 <= a < b."""

    a: float
    b: float

    def __post_init__(self):
        _require(math.isfinite(self.a) and self.a >= 0.0, f"uniform a must be >= 0, got {self.a}")
        _require(math.isfinite(self.b) and self.b > self.a, f"uniform b must exceed a, got {self.b}")

    @property
    def sup_s(self) -> float:
        return math.inf

    def mean(self) -> float:
        return 0.5 * (self.a + self.b)

    def raw_moment(self, order: int) -> float:
        j = order + 1
        return (self.b**j - self.a**j) / (j * (self.b - self.a))

    def pdf(self, t: float) -> float:
        return 1.0 / (self.b - self.a) if self.a <= t <= self.b else 0.0

    def cdf(self, t: float) -> float:
        if t <= self.a:
            return 0.0
        if t >= self.b:
            return 1.0
        return (t - self.a) / (self.b - self.a)

    def sample(self, rng, size=None):
        return rng.uniform(self.a, self.b, size)

    def _small_s(self, s: float) -> bool:
        return abs(s) * max(abs(self.a), self.b) < 1e-3

    def _exp_transform(self, s):
        width = self.b - self.a
        if self._small_s(s):
            # series in s avoids the 0/0 cancellation of the closed form
            return 1.0 + s * (self.mean() + s * (self.raw_moment(2) / 2.0 + s * self.raw_moment(3) / 6.0))
        return math.exp(s * self.a) * math.expm1(s * width) / (s * width)

    def _exp_transform_deriv(self, s):
        if self._small_s(s):
            return self.mean() + s * (self.raw_moment(2) + s * self.raw_moment(3) / 2.0)
        width = self.b - self.a
        ea, eb = math.exp(s * self.a), math.exp(s * self.b)
        return (self.b * eb - self.a * ea) / (s * width) - (eb - ea) / (s * s * width)

    def _exp_transform_deriv2(self, s):
        if self._small_s(s):
            j5 = (self.b**5 - self.a**5) / (5.0 * (self.b - self.a))
            return self.raw_moment(2) + s * (self.raw_moment(3) + s * j5 / 2.0)
        width = self.b - self.a

        def antideriv(t):
            # integral of t^2 e^{st}: e^{st} (t^2/s - 2t/s^2 + 2/s^3)
            return math.exp(s * t) * (t * t / s - 2.0 * t / (s * s) + 2.0 / s**3)

        return (antideriv(self.b) - antideriv(self.a)) / width

    def spec_string(self):
        return f"uniform:a={self.a!r},b={self.b!r}"


@dataclass(frozen=True)
class LogNormal(ServiceDistribution):
    """Log-normal service: U = exp(alpha + omega Z) with Z standard normal.

    E[e^{sU}] diverges for every s > 0, so the transform domain is s <= 0;
    transforms are evaluated by adaptive quadrature after the substitution
    t = e^{alpha + omega x}, which turns the integral into a smooth,
    light-tailed one against the Gaussian kernel.
    """

    alpha: float
    omega: float

    def __post_init__(self):
        _require(math.isfinite(self.alpha), f"lognormal alpha must be finite, got {self.alpha}")
        _require(_finite_positive(self.omega), f"lognormal omega must be > 0, got {self.omega}")

    @property
    def sup_s(self) -> float:
        return 0.0

    _finite_at_sup = True  # E[e^{0 U}] = 1

    def mean(self) -> float:
        return math.exp(self.alpha + 0.5 * self.omega**2)

    def raw_moment(self, order: int) -> float:
        return math.exp(order * self.alpha + 0.5 * (order * self.omega) ** 2)

    def pdf(self, t: float) -> float:
        if t <= 0.0:
            return 0.0
        z = (math.log(t) - self.alpha) / self.omega
        return math.exp(-0.5 * z * z) / (t * self.omega * math.sqrt(2.0 * math.pi))

    def cdf(self, t: float) -> float:
        if t <= 0.0:
            return 0.0
        z = (math.log(t) - self.alpha) / self.omega
        return 0.5 * math.erfc(-z / math.sqrt(2.0))

    def sample(self, rng, size=None):
        return rng.lognormal(self.alpha, self.omega, size)

    def _weighted_transform(self, s: float, power: int) -> float:
        """Quadrature of E[U^power e^{sU}] for s <= 0 in Gaussian coordinates."""
        alpha, omega = self.alpha, self.omega
        abs_tol, rel_tol = quad_tolerances()

        def integrand(x):
            w = alpha + omega * x
            if w > _EXP_OVERFLOW:
                return 0.0  # s < 0 here, so the tilt term dominates to -inf
            e = power * w + s * math.exp(w) - 0.5 * x * x - _LOG_SQRT_2PI
            return math.exp(e) if e > _EXP_UNDERFLOW else 0.0

        with warnings.catch_warnings():
            # the routine reports an unattainable tolerance through a warning
            warnings.simplefilter("error", IntegrationWarning)
            try:
                value, err_est = quad(
                    integrand, -np.inf, np.inf, epsabs=abs_tol, epsrel=rel_tol, limit=200
                )
            except IntegrationWarning as warn:
                raise QuadratureError(
                    f"lognormal transform quadrature at s={s!r} (power {power}) could "
                    f"not attain tolerance (abs {abs_tol:.1e}, rel {rel_tol:.1e}): {warn}"
                ) from None
        if not math.isfinite(value) or err_est > 10.0 * max(abs_tol, rel_tol * abs(value)):
            raise QuadratureError(
                f"lognormal transform quadrature at s={s!r} (power {power}) reported "
                f"error {err_est:.3e}, beyond tolerance (abs {abs_tol:.1e}, rel {rel_tol:.1e})"
            )
        return value

    def _exp_transform(self, s):
        return self._weighted_transform(s, 0)

    def _exp_transform_deriv(self, s):
        return self._weighted_transform(s, 1)

    def _exp_transform_deriv2(self, s):
        return self._weighted_transform(s, 2)

    def spec_string(self):
        return f"lognormal:alpha={self.alpha!r},omega={self.omega!r}"


_FAMILIES: dict[str, tuple[type, tuple[str, ...]]] = {
    "exp": (Exponential, ("rate",)),
    "gamma": (Gamma, ("shape", "rate")),
    "det": (Deterministic, ("value",)),
    "uniform": (Uniform, ("a", "b")),
    "lognormal": (LogNormal, ("alpha", "omega")),
}


def parse_dist(spec: str) -> ServiceDistribution:
    """Parse a distribution spec string.

    Grammar: ``exp:rate=<f>``, ``gamma:shape=<f>,rate=<f>``, ``det:value=<f>``,
    ``uniform:a=<f>,b=<f>``, ``lognormal:alpha=<f>,omega=<f>``. Raises
    DistSpecError naming the offending token.
    """
    if not isinstance(spec, str) or not spec.strip():
        raise DistSpecError(f"empty distribution spec {spec!r}")
    head, _, tail = spec.strip().partition(":")
    family = head.strip()
    if family not in _FAMILIES:
        raise DistSpecError(
            f"unknown family {family!r} in {spec!r}; expected one of {sorted(_FAMILIES)}"
        )
    cls, keys = _FAMILIES[family]
    kwargs: dict[str, float] = {}
    for token in (tail.split(",") if tail else []):
        token = token.strip()
        key, eq, text = token.partition("=")
        key = key.strip()
        if not eq or not key:
            raise DistSpecError(f"malformed token {token!r} in {spec!r}; expected key=value")
        if key not in keys:
            raise DistSpecError(f"unexpected parameter {key!r} for family {family!r} in {spec!r}")
        if key in kwargs:
            raise DistSpecError(f"duplicate parameter {key!r} in {spec!r}")
        try:
            kwargs[key] = float(text)
        except ValueError:
            raise DistSpecError(f"bad number {text.strip()!r} in token {token!r} of {spec!r}") from None
    missing = [k for k in keys if k not in kwargs]
    if missing:
        raise DistSpecError(f"missing parameter(s) {missing} for family {family!r} in {spec!r}")
    try:
        return cls(**kwargs)
    except ValueError as exc:
        raise DistSpecError(f"invalid parameters in {spec!r}: {exc}") from None
