"""Closed-form age statistics for the probabilistically preemptive M/G/1/1 queue.

A single source emits Poisson(arrival_rate) updates into a bufferless server;
an arrival that finds the server busy replaces the packet in service with
probability preempt_prob and is discarded otherwise. Because preemption
decisions are independent coin flips, the stream of preempting arrivals seen
by a busy server is Poisson with the thinned rate c = preempt_prob *
arrival_rate, and everything below is an exact function of the service-time
transforms evaluated at -c:

* a packet that enters service is delivered with probability M_U(-c);
* the delivered-packet system time has the exponentially tilted density
  f_U(t) e^{-ct} / M_U(-c);
* the interdeparture time decomposes over a two-state semi-Markov chain
  (idle, serving) into one idle sojourn, a geometric number of sojourns that
  end in preemption, and one sojourn that ends in delivery.

All functions are pure and safe for concurrent use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

from scipy.optimize import brentq

from .distributions import ServiceDistribution
from .errors import DegenerateError, DomainError, PrecisionError

# |s| below this is treated as the removable singularity at s = 0
_ZERO_SNAP = 1e-12
# |s| below this uses the series form of (M_Y(s) - 1)/s
_SERIES_S = 1e-5
# thinned rate below this uses series for the near-cancelling sojourn moments
_SERIES_C = 1e-3

_FD_STEP_SCALE = {1: 5e-4, 2: 5e-3, 3: 2e-2}
_FD_MAX_REL_ERR = {1: 1e-6, 2: 1e-5, 3: 1e-3}


@dataclass(frozen=True)
class SystemConfig:
    """Arrival rate, preemption probability, and service law."""

    arrival_rate: float
    preempt_prob: float
    service: ServiceDistribution

    def __post_init__(self):
        if not (math.isfinite(self.arrival_rate) and self.arrival_rate > 0.0):
            raise ValueError(f"arrival_rate must be positive, got {self.arrival_rate}")
        if not (0.0 <= self.preempt_prob <= 1.0):
            raise ValueError(f"preempt_prob must lie in [0, 1], got {self.preempt_prob}")

    @property
    def thin_rate(self) -> float:
        """Rate of the thinned arrival stream whose points actually preempt."""
        return self.preempt_prob * self.arrival_rate


@dataclass(frozen=True)
class AnalyticSummary:
    """Headline quantities of one configuration, plus evaluation metadata."""

    avg_aoi: float
    avg_paoi: float
    mean_interdeparture: float
    delivery_prob: float
    mean_system_time: float
    aoi_second_moment: float
    paoi_second_moment: float
    roc_sup: float

    def as_dict(self) -> dict[str, float]:
        return {
            "avg_aoi": self.avg_aoi,
            "avg_paoi": self.avg_paoi,
            "mean_interdeparture": self.mean_interdeparture,
            "delivery_prob": self.delivery_prob,
            "mean_system_time": self.mean_system_time,
            "aoi_second_moment": self.aoi_second_moment,
            "paoi_second_moment": self.paoi_second_moment,
            "roc_sup": self.roc_sup,
        }


@lru_cache(maxsize=4096)
def delivery_prob(cfg: SystemConfig) -> float:
    """Probability that a packet entering service survives to delivery.

    Equal to M_U(-c): the thinned preempting stream must produce no arrival
    during the service time.
    """
    return cfg.service.exp_transform(-cfg.thin_rate)


def system_time_mgf(cfg: SystemConfig, s: float) -> float:
    """MGF of the system time of a delivered packet: M_U(s - c) / M_U(-c)."""
    if s == 0.0:
        return 1.0
    c = cfg.thin_rate
    return cfg.service.exp_transform(s - c) / delivery_prob(cfg)


def system_time_pdf(cfg: SystemConfig, t: float) -> float:
    """Density of the delivered-packet system time: f_U(t) e^{-ct} / M_U(-c)."""
    if t < 0.0:
        return 0.0
    c = cfg.thin_rate
    if c == 0.0:
        return cfg.service.pdf(t)
    return cfg.service.pdf(t) * math.exp(-c * t) / delivery_prob(cfg)


def mean_system_time(cfg: SystemConfig) -> float:
    """E[T] of a delivered packet: M_U'(-c) / M_U(-c)."""
    c = cfg.thin_rate
    if c == 0.0:
        return cfg.service.mean()
    return cfg.service.exp_transform_deriv(-c) / delivery_prob(cfg)


def sojourn_pdf_eta(cfg: SystemConfig, t: float) -> float:
    """Density of a busy sojourn that ends in a delivery.

    Coincides with the delivered-packet system-time density: conditioning a
    service on "no preempting arrival before completion" tilts it the same way.
    """
    return system_time_pdf(cfg, t)


def sojourn_pdf_etabar(cfg: SystemConfig, t: float) -> float:
    """Density of a busy sojourn that ends in a preemption.

    The preempting arrival lands at an Exp(c) time conditioned on beating the
    service: c e^{-ct} (1 - F_U(t)) / (1 - M_U(-c)).
    """
    c = cfg.thin_rate
    p_bar = 1.0 - delivery_prob(cfg)
    if c == 0.0 or p_bar <= 0.0:
        raise DegenerateError(
            "preempted-sojourn density undefined: preemption never occurs "
            f"(thinned rate {c}, preemption probability per attempt {p_bar})"
        )
    if t < 0.0:
        return 0.0
    return c * math.exp(-c * t) * (1.0 - cfg.service.cdf(t)) / p_bar


def _geometric_ratio(cfg: SystemConfig, s: float) -> float:
    """(1 - M_U(-c)) E[e^{s etabar}] = c (M_U(s - c) - 1)/(s - c).

    The geometric sum over preempted sojourns converges while this stays
    below 1. Monotone increasing in s; the removable point s = c is handled
    by the series of (M_U(z) - 1)/z around z = 0.
    """
    c = cfg.thin_rate
    z = s - c
    if abs(z) < 1e-7:
        return c * (cfg.service.mean() + 0.5 * z * cfg.service.raw_moment(2))
    return c * (cfg.service.exp_transform(z) - 1.0) / z


@lru_cache(maxsize=4096)
def mgf_roc(cfg: SystemConfig) -> float:
    """Supremum s* of the region of convergence shared by the AoI, peak-AoI
    and interdeparture MGFs.

    The interdeparture MGF denominator c M_U(s - c) - s factors exactly as
    (s - c) (g(s) - 1) with g the monotone geometric ratio, so its smallest
    positive root is the g = 1 crossing when that lies below c and c itself
    otherwise. The result is additionally capped by the idle-sojourn pole at
    s = arrival_rate and by the transform domain shifted by c.
    """
    lam = cfg.arrival_rate
    c = cfg.thin_rate
    sup = cfg.service.sup_s
    if c == 0.0:
        return min(lam, sup)
    cap = min(lam, c + sup)
    if c * cfg.service.mean() <= 1.0:
        return min(c, cap)
    root = brentq(
        lambda s: _geometric_ratio(cfg, s) - 1.0, 0.0, c, xtol=1e-13, rtol=8.9e-16
    )
    return min(float(root), cap)


def _check_in_roc(cfg: SystemConfig, s: float, what: str) -> None:
    s_star = mgf_roc(cfg)
    if s >= s_star:
        raise DomainError(
            f"{what} MGF diverges at s={s!r}: region of convergence is s < {s_star!r}"
        )


def interdeparture_mgf(cfg: SystemConfig, s: float) -> float:
    """MGF of the time between consecutive deliveries.

    lam (c - s) M_U(s - c) / ((lam - s)(c M_U(s - c) - s)); the s = 0 point is
    the limit value 1, the no-preemption case reduces to lam M_U(s)/(lam - s),
    and at preempt_prob = 1 the (lam - s) factors cancel algebraically.
    """
    if abs(s) < _ZERO_SNAP:
        return 1.0
    _check_in_roc(cfg, s, "interdeparture")
    lam = cfg.arrival_rate
    c = cfg.thin_rate
    shifted = cfg.service.exp_transform(s - c)
    if c == 0.0:
        return lam * shifted / (lam - s)
    if cfg.preempt_prob == 1.0:
        return lam * shifted / (lam * shifted - s)
    return lam * (c - s) * shifted / ((lam - s) * (c * shifted - s))


def interdeparture_mgf_geometric(cfg: SystemConfig, s: float) -> float:
    """Interdeparture MGF assembled from the three sojourn transforms.

    p E[e^{s idle}] E[e^{s served}] / (1 - (1-p) E[e^{s preempted}]), the
    geometric sum over the number of preempted visits. Agrees with
    interdeparture_mgf to rounding; kept as an independently assembled form.
    """
    if abs(s) < _ZERO_SNAP:
        return 1.0
    _check_in_roc(cfg, s, "interdeparture")
    lam = cfg.arrival_rate
    c = cfg.thin_rate
    p = delivery_prob(cfg)
    e_idle = lam / (lam - s)
    e_served = cfg.service.exp_transform(s - c) / p
    if c == 0.0:
        return e_idle * e_served  # p = 1 and no preempted visits
    return p * e_idle * e_served / (1.0 - _geometric_ratio(cfg, s))


@lru_cache(maxsize=4096)
def mean_interdeparture(cfg: SystemConfig) -> float:
    """Mean time between deliveries via the sojourn decomposition.

    One Exp(arrival_rate) idle wait, a geometric number of preempted sojourns,
    and one delivered sojourn. The preempted-visit term reduces exactly to
    (1 - M - c M')/(c M) with M = M_U(-c), M' = M_U'(-c), so no numerical
    differentiation is involved.
    """
    lam = cfg.arrival_rate
    c = cfg.thin_rate
    if c == 0.0:
        return 1.0 / lam + cfg.service.mean()
    m = delivery_prob(cfg)
    mp = cfg.service.exp_transform_deriv(-c)
    idle = 1.0 / lam
    served = mp / m
    preempted_visits = (1.0 - m - c * mp) / (c * m)
    return idle + preempted_visits + served


@lru_cache(maxsize=4096)
def interdeparture_second_moment(cfg: SystemConfig) -> float:
    """E[Y^2] from the series of the geometric-sum form around s = 0."""
    lam = cfg.arrival_rate
    c = cfg.thin_rate
    m1 = cfg.service.mean()
    m2 = cfg.service.raw_moment(2)
    if c == 0.0:
        return 2.0 / lam**2 + 2.0 * m1 / lam + m2
    m = delivery_prob(cfg)
    if c < _SERIES_C:
        # direct forms below lose their leading digits as c -> 0
        q1 = c * (0.5 * m2 - c * cfg.service.raw_moment(3) / 3.0) / m
        q2 = c * cfg.service.raw_moment(3) / (3.0 * m)
    else:
        mp = cfg.service.exp_transform_deriv(-c)
        mpp = cfg.service.exp_transform_deriv2(-c)
        q1 = (1.0 - m - c * mp) / (c * m)
        q2 = (2.0 * (1.0 - m) - 2.0 * c * mp - c * c * mpp) / (c * c * m)
    e_eta = cfg.service.exp_transform_deriv(-c) / m
    e_eta2 = cfg.service.exp_transform_deriv2(-c) / m
    return (
        2.0 / lam**2
        + 2.0 * e_eta / lam
        + e_eta2
        + 2.0 * (1.0 / lam + e_eta) * q1
        + q2
        + 2.0 * q1 * q1
    )


def paoi_mgf(cfg: SystemConfig, s: float) -> float:
    """MGF of the peak age, the age seen just before a delivery.

    Product form M_T(s) M_Y(s): each peak is an interdeparture interval plus
    the previous delivered packet's system time, and the two are independent.
    """
    if abs(s) < _ZERO_SNAP:
        return 1.0
    _check_in_roc(cfg, s, "peak-AoI")
    return system_time_mgf(cfg, s) * interdeparture_mgf(cfg, s)


def aoi_mgf(cfg: SystemConfig, s: float) -> float:
    """MGF of the stationary age process: M_T(s) (M_Y(s) - 1) / (s Ybar).

    s = 0 is a removable singularity returning exactly 1; for small |s| the
    (M_Y(s) - 1)/s factor is evaluated through its series to avoid losing
    digits to cancellation.
    """
    if abs(s) < _ZERO_SNAP:
        return 1.0
    _check_in_roc(cfg, s, "AoI")
    ybar = mean_interdeparture(cfg)
    if abs(s) < _SERIES_S:
        growth = 1.0 + 0.5 * s * interdeparture_second_moment(cfg) / ybar
    else:
        growth = (interdeparture_mgf(cfg, s) - 1.0) / (s * ybar)
    return system_time_mgf(cfg, s) * growth


def average_aoi_no_preemption(arrival_rate: float, service: ServiceDistribution) -> float:
    """Average AoI in the blocking (never-preempt) limit.

    Hard-coded limit of the general closed form, which is 0/0 at
    preempt_prob = 0. Equals the renewal form E[U] + E[(X+U)^2] / (2 E[X+U])
    with X the Exp(arrival_rate) idle wait.
    """
    m1 = service.mean()
    m2 = service.raw_moment(2)
    lam = arrival_rate
    return (1.0 + 2.0 * lam * m1 + lam * lam * (m1 * m1 + 0.5 * m2)) / (lam * (1.0 + lam * m1))


def average_paoi_no_preemption(arrival_rate: float, service: ServiceDistribution) -> float:
    """Average peak AoI in the blocking limit: idle wait plus two full services."""
    return 1.0 / arrival_rate + 2.0 * service.mean()


def average_aoi(cfg: SystemConfig) -> float:
    """Stationary average AoI.

    Closed form in M = M_U(-c) and M' = M_U'(-c); the preempt_prob = 0 case
    routes to the dedicated limit expression.
    """
    th = cfg.preempt_prob
    if th == 0.0:
        return average_aoi_no_preemption(cfg.arrival_rate, cfg.service)
    lam = cfg.arrival_rate
    m = delivery_prob(cfg)
    mp = cfg.service.exp_transform_deriv(-cfg.thin_rate)
    num = m * ((th * th - th) * (m + lam * mp) + th - 1.0) + 1.0
    den = lam * m * m * (th * th - th) + lam * m * th
    return num / den


def average_paoi(cfg: SystemConfig) -> float:
    """Stationary average peak AoI: (M (th - 1) + lam th M' + 1) / (th lam M)."""
    th = cfg.preempt_prob
    if th == 0.0:
        return average_paoi_no_preemption(cfg.arrival_rate, cfg.service)
    lam = cfg.arrival_rate
    m = delivery_prob(cfg)
    mp = cfg.service.exp_transform_deriv(-cfg.thin_rate)
    return (m * (th - 1.0) + lam * th * mp + 1.0) / (th * lam * m)


def _mgf_moment(mgf, order: int, roc: float) -> float:
    """Raw moment of order 1..3 by Richardson-extrapolated central differences.

    The base step scales with the derivative order (higher orders divide by
    h^order, so they need a larger step to stay above rounding noise) and with
    the convergence radius so every stencil point stays inside the ROC.
    """
    if order not in (1, 2, 3):
        raise ValueError(f"moment order must be 1, 2 or 3, got {order}")
    h0 = _FD_STEP_SCALE[order] * min(1.0, roc)

    def stencil(h: float) -> float:
        if order == 1:
            return (mgf(h) - mgf(-h)) / (2.0 * h)
        if order == 2:
            return (mgf(h) - 2.0 + mgf(-h)) / (h * h)  # mgf(0) == 1 exactly
        return (mgf(2.0 * h) - 2.0 * mgf(h) + 2.0 * mgf(-h) - mgf(-2.0 * h)) / (2.0 * h**3)

    levels = 4
    table = [[0.0] * levels for _ in range(levels)]
    for i in range(levels):
        table[i][0] = stencil(h0 / 2.0**i)
        for j in range(1, i + 1):
            w = 4.0**j
            table[i][j] = (w * table[i][j - 1] - table[i - 1][j - 1]) / (w - 1.0)
    best = table[levels - 1][levels - 1]
    err = abs(best - table[levels - 2][levels - 2])
    if err > _FD_MAX_REL_ERR[order] * max(abs(best), 1e-300):
        raise PrecisionError(
            f"Richardson sequence for moment {order} did not converge: "
            f"estimate {best!r}, last correction {err:.3e}"
        )
    return best


def aoi_moment(cfg: SystemConfig, order: int) -> float:
    """Raw moment of the stationary age, differentiated from its MGF at 0."""
    return _mgf_moment(lambda s: aoi_mgf(cfg, s), order, mgf_roc(cfg))


def paoi_moment(cfg: SystemConfig, order: int) -> float:
    """Raw moment of the peak age, differentiated from its MGF at 0."""
    return _mgf_moment(lambda s: paoi_mgf(cfg, s), order, mgf_roc(cfg))


def summarize(cfg: SystemConfig) -> AnalyticSummary:
    """Evaluate the full analytic summary for one configuration."""
    return AnalyticSummary(
        avg_aoi=average_aoi(cfg),
        avg_paoi=average_paoi(cfg),
        mean_interdeparture=mean_interdeparture(cfg),
        delivery_prob=delivery_prob(cfg),
        mean_system_time=mean_system_time(cfg),
        aoi_second_moment=aoi_moment(cfg, 2),
        paoi_second_moment=paoi_moment(cfg, 2),
        roc_sup=mgf_roc(cfg),
    )
