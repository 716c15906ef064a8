import math

import numpy as np
import pytest
from scipy.integrate import quad

from aoiq import (
    Deterministic,
    DegenerateError,
    DomainError,
    Exponential,
    Gamma,
    LogNormal,
    SystemConfig,
    aoi_mgf,
    aoi_moment,
    average_aoi,
    average_aoi_no_preemption,
    average_paoi,
    average_paoi_no_preemption,
    delivery_prob,
    interdeparture_mgf,
    interdeparture_mgf_geometric,
    interdeparture_second_moment,
    mean_interdeparture,
    mean_system_time,
    mgf_roc,
    paoi_mgf,
    paoi_moment,
    sojourn_pdf_eta,
    sojourn_pdf_etabar,
    summarize,
    system_time_mgf,
    system_time_pdf,
)
from aoiq.validation import (
    agreement_configs,
    endpoint_continuity_checks,
    mgf_form_checks,
    moment_consistency_checks,
    normalization_checks,
    ordering_checks,
    paoi_identity_checks,
    roc_divergence_checks,
)
from _oracles import richardson_derivative, richardson_second_derivative

EXP1 = Exponential(rate=1.0)
FULL_PREEMPT_EXP = SystemConfig(1.0, 1.0, EXP1)
LN = LogNormal(alpha=0.75, omega=0.75)


class TestSystemConfig:
    @pytest.mark.parametrize("lam,theta", [(0.0, 0.5), (-1.0, 0.5), (1.0, -0.1), (1.0, 1.1)])
    def test_invalid_rejected(self, lam, theta):
        with pytest.raises(ValueError):
            SystemConfig(lam, theta, EXP1)

    def test_thin_rate(self):
        assert SystemConfig(2.0, 0.25, EXP1).thin_rate == 0.5


class TestDeliveryProb:
    def test_no_preemption_always_delivers(self):
        for dist in (EXP1, Deterministic(value=1.0), LN):
            assert delivery_prob(SystemConfig(3.0, 0.0, dist)) == 1.0

    def test_exponential_closed_form(self):
        mu, lam, th = 2.0, 1.5, 0.5
        cfg = SystemConfig(lam, th, Exponential(rate=mu))
        assert delivery_prob(cfg) == pytest.approx(mu / (mu + th * lam), rel=1e-15)

    def test_deterministic_closed_form(self):
        u, lam, th = 1.3, 2.0, 0.7
        cfg = SystemConfig(lam, th, Deterministic(value=u))
        assert delivery_prob(cfg) == pytest.approx(math.exp(-th * lam * u), rel=1e-15)


class TestSystemTime:
    def test_mgf_normalization(self):
        assert system_time_mgf(FULL_PREEMPT_EXP, 0.0) == 1.0

    def test_mgf_exponential_spot_value(self):
        # M_U(-2)/M_U(-1) = (1/3)/(1/2)
        assert system_time_mgf(FULL_PREEMPT_EXP, -1.0) == pytest.approx(2.0 / 3.0, rel=1e-14)

    def test_mgf_deterministic_is_pure_shift(self):
        cfg = SystemConfig(2.0, 0.6, Deterministic(value=1.7))
        for s in (-1.0, -0.2, 0.3):
            assert system_time_mgf(cfg, s) == pytest.approx(math.exp(s * 1.7), rel=1e-13)

    def test_pdf_without_preemption_is_service_density(self):
        cfg = SystemConfig(1.0, 0.0, Gamma(shape=2.0, rate=2.0))
        for t in np.linspace(0.01, 5.0, 50):
            assert system_time_pdf(cfg, float(t)) == cfg.service.pdf(float(t))

    def test_pdf_integrates_to_one(self):
        cfg = SystemConfig(2.0, 0.5, Gamma(shape=2.0, rate=2.0))
        total, _ = quad(lambda t: system_time_pdf(cfg, t), 0, np.inf, limit=200)
        assert total == pytest.approx(1.0, abs=1e-9)

    def test_pdf_tilted_exponential(self):
        mu, lam, th = 1.0, 2.0, 0.5
        cfg = SystemConfig(lam, th, Exponential(rate=mu))
        rate = mu + th * lam
        for t in (0.1, 0.5, 2.0):
            assert system_time_pdf(cfg, t) == pytest.approx(rate * math.exp(-rate * t), rel=1e-13)

    def test_mean_system_time_shorter_under_preemption(self):
        # delivered packets are the fast ones when preemption is possible
        base = SystemConfig(1.0, 0.0, LN)
        tilted = SystemConfig(1.0, 0.8, LN)
        assert mean_system_time(tilted) < mean_system_time(base)


class TestSojournDensities:
    def test_eta_equals_system_time_density_on_grid(self):
        cfg = SystemConfig(2.0, 0.5, Gamma(shape=2.0, rate=2.0))
        for t in np.linspace(0.0, 6.0, 100):
            assert sojourn_pdf_eta(cfg, float(t)) == system_time_pdf(cfg, float(t))

    def test_etabar_normalized(self):
        cfg = SystemConfig(2.0, 0.5, EXP1)
        total, _ = quad(lambda t: sojourn_pdf_etabar(cfg, t), 0, np.inf, limit=200)
        assert total == pytest.approx(1.0, abs=1e-9)

    def test_etabar_deterministic_truncated_exponential(self):
        # thinned rate 1: density e^{-t} 1{t<u} / (1 - e^{-u})
        u = 1.0
        cfg = SystemConfig(2.0, 0.5, Deterministic(value=u))
        assert cfg.thin_rate == 1.0
        norm = 1.0 - math.exp(-u)
        for t in (0.1, 0.5, 0.99):
            assert sojourn_pdf_etabar(cfg, t) == pytest.approx(math.exp(-t) / norm, rel=1e-12)
        assert sojourn_pdf_etabar(cfg, 1.5) == 0.0

    def test_etabar_degenerate_without_preemption(self):
        with pytest.raises(DegenerateError):
            sojourn_pdf_etabar(SystemConfig(1.0, 0.0, EXP1), 0.5)


class TestInterdepartureMgf:
    @pytest.mark.parametrize("cfg", agreement_configs(), ids=str)
    def test_normalization(self, cfg):
        assert interdeparture_mgf(cfg, 0.0) == 1.0

    def test_full_preemption_exponential_closed_form(self):
        lam, mu = 1.0, 1.0
        cfg = SystemConfig(lam, 1.0, Exponential(rate=mu))
        for s in (-2.0, -1.0, -0.3, 0.5):
            expected = lam * mu / ((lam - s) * (mu - s))
            assert interdeparture_mgf(cfg, s) == pytest.approx(expected, rel=1e-13)

    def test_no_preemption_exponential_closed_form(self):
        lam, mu = 1.0, 2.0
        cfg = SystemConfig(lam, 0.0, Exponential(rate=mu))
        for s in (-1.5, -0.5, 0.4):
            expected = lam / (lam - s) * mu / (mu - s)
            assert interdeparture_mgf(cfg, s) == pytest.approx(expected, rel=1e-13)

    def test_matches_geometric_assembly(self):
        cfg = SystemConfig(2.0, 0.5, Gamma(shape=2.0, rate=2.0))
        for s in (-1.0, -0.1, 0.05):
            assert interdeparture_mgf(cfg, s) == pytest.approx(
                interdeparture_mgf_geometric(cfg, s), rel=1e-12
            )

    def test_out_of_roc_rejected(self):
        cfg = FULL_PREEMPT_EXP  # ROC sup is exactly 1
        with pytest.raises(DomainError):
            interdeparture_mgf(cfg, 1.0)
        with pytest.raises(DomainError):
            interdeparture_mgf(cfg, 1.5)


class TestMeanInterdeparture:
    def test_full_preemption_exponential(self):
        lam, mu = 2.0, 1.5
        cfg = SystemConfig(lam, 1.0, Exponential(rate=mu))
        assert mean_interdeparture(cfg) == pytest.approx(1.0 / lam + 1.0 / mu, rel=1e-13)

    def test_no_preemption_any_service(self):
        for dist in (EXP1, Gamma(shape=2.0, rate=2.0), Deterministic(value=1.0), LN):
            cfg = SystemConfig(0.7, 0.0, dist)
            assert mean_interdeparture(cfg) == pytest.approx(
                1.0 / 0.7 + dist.mean(), rel=1e-12
            )

    def test_deterministic_full_preemption_pinned(self):
        # 1/lam + (1 - M)/(lam M) with M = e^{-1}: equals e for lam = u = 1
        cfg = SystemConfig(1.0, 1.0, Deterministic(value=1.0))
        assert mean_interdeparture(cfg) == pytest.approx(math.e, rel=1e-13)

    @pytest.mark.parametrize("cfg", agreement_configs(), ids=str)
    def test_matches_mgf_derivative(self, cfg):
        h0 = 1e-3 * min(1.0, mgf_roc(cfg))
        fd = richardson_derivative(lambda s: interdeparture_mgf(cfg, s), 0.0, h0)
        assert mean_interdeparture(cfg) == pytest.approx(fd, rel=1e-7)

    def test_matches_density_quadrature(self):
        # independent route: integrate t against the sojourn densities
        cfg = SystemConfig(2.0, 0.5, Gamma(shape=2.0, rate=2.0))
        e_eta, _ = quad(lambda t: t * sojourn_pdf_eta(cfg, t), 0, np.inf, limit=200)
        e_etabar, _ = quad(lambda t: t * sojourn_pdf_etabar(cfg, t), 0, np.inf, limit=200)
        p = delivery_prob(cfg)
        expected = 1.0 / cfg.arrival_rate + (1.0 - p) / p * e_etabar + e_eta
        assert mean_interdeparture(cfg) == pytest.approx(expected, rel=1e-10)


class TestSecondMoment:
    @pytest.mark.parametrize("cfg", agreement_configs(), ids=str)
    def test_matches_mgf_second_derivative(self, cfg):
        h0 = 5e-3 * min(1.0, mgf_roc(cfg))
        fd = richardson_second_derivative(lambda s: interdeparture_mgf(cfg, s), 0.0, h0)
        assert interdeparture_second_moment(cfg) == pytest.approx(fd, rel=1e-6)

    def test_tiny_thin_rate_series_branch(self):
        # exponential service keeps Y = Exp(lam) + Exp(mu) at every preemption
        # probability, so E[Y^2] = 6 exactly at unit rates; this pins the
        # series branch (c < 1e-3) and the direct branch just above it
        for theta in (9e-4, 2e-3):
            cfg = SystemConfig(1.0, theta, EXP1)
            assert interdeparture_second_moment(cfg) == pytest.approx(6.0, rel=1e-5)


class TestAgeMgfs:
    def test_normalization_exact(self):
        for cfg in agreement_configs():
            assert aoi_mgf(cfg, 0.0) == 1.0
            assert paoi_mgf(cfg, 0.0) == 1.0

    def test_peak_mgf_pinned_value(self):
        # M_T(-1) M_Y(-1) = (2/3)(1/4) for full preemption, unit rates
        assert paoi_mgf(FULL_PREEMPT_EXP, -1.0) == pytest.approx(1.0 / 6.0, rel=1e-13)

    def test_age_mgf_pinned_value(self):
        assert aoi_mgf(FULL_PREEMPT_EXP, -1.0) == pytest.approx(0.25, rel=1e-13)

    def test_small_s_branch_continuous(self):
        # the series branch and the direct branch agree across the threshold
        for cfg in (FULL_PREEMPT_EXP, SystemConfig(0.5, 0.5, LN)):
            below = 0.9e-5 * min(1.0, mgf_roc(cfg))
            above = 1.1e-5
            for s in (below, -below, above, -above):
                direct = system_time_mgf(cfg, s) * (interdeparture_mgf(cfg, s) - 1.0) / (
                    s * mean_interdeparture(cfg)
                )
                assert aoi_mgf(cfg, s) == pytest.approx(direct, rel=1e-7)

    def test_peak_derivative_recovers_average(self):
        # six-config spread across families and both endpoint policies
        grid = [
            SystemConfig(1.0, 1.0, EXP1),
            SystemConfig(0.5, 0.5, EXP1),
            SystemConfig(2.0, 0.5, Gamma(shape=2.0, rate=2.0)),
            SystemConfig(1.0, 0.34, LN),
            SystemConfig(2.0, 1.0, Deterministic(value=1.0)),
            SystemConfig(0.5, 0.0, Gamma(shape=2.0, rate=2.0)),
        ]
        for cfg in grid:
            h0 = 1e-3 * min(1.0, mgf_roc(cfg))
            fd = richardson_derivative(lambda s: paoi_mgf(cfg, s), 0.0, h0)
            assert fd == pytest.approx(average_paoi(cfg), rel=1e-6)

    def test_out_of_roc_rejected(self):
        with pytest.raises(DomainError):
            aoi_mgf(FULL_PREEMPT_EXP, 1.01)
        with pytest.raises(DomainError):
            paoi_mgf(FULL_PREEMPT_EXP, 1.01)


class TestAverages:
    def test_full_preemption_exponential_exact(self):
        assert average_aoi(FULL_PREEMPT_EXP) == pytest.approx(2.0, rel=1e-12)
        assert average_paoi(FULL_PREEMPT_EXP) == pytest.approx(2.5, rel=1e-12)

    def test_full_preemption_deterministic_exact(self):
        cfg = SystemConfig(1.0, 1.0, Deterministic(value=1.0))
        assert average_aoi(cfg) == pytest.approx(math.e, rel=1e-12)

    def test_no_preemption_blocking_values(self):
        # M/M/1/1 blocking at unit rates: Delta = 2.5, peak = 3
        assert average_aoi_no_preemption(1.0, EXP1) == pytest.approx(2.5, rel=1e-14)
        assert average_paoi_no_preemption(1.0, EXP1) == pytest.approx(3.0, rel=1e-14)
        cfg = SystemConfig(1.0, 0.0, EXP1)
        assert average_aoi(cfg) == average_aoi_no_preemption(1.0, EXP1)
        assert average_paoi(cfg) == average_paoi_no_preemption(1.0, EXP1)

    def test_lognormal_operating_points_pinned(self):
        assert average_aoi(SystemConfig(1.0, 0.34, LN)) == pytest.approx(
            4.958703987025991, rel=1e-9
        )
        assert average_paoi(SystemConfig(1.0, 0.34, LN)) == pytest.approx(
            6.125785084047738, rel=1e-9
        )
        assert average_aoi(SystemConfig(0.2, 1.0, LN)) == pytest.approx(
            8.067749758253616, rel=1e-9
        )

    def test_paoi_identity(self):
        for cfg in agreement_configs():
            assert average_paoi(cfg) == pytest.approx(
                mean_interdeparture(cfg) + mean_system_time(cfg), rel=1e-12
            )


class TestMoments:
    def test_first_equals_average(self):
        assert aoi_moment(FULL_PREEMPT_EXP, 1) == pytest.approx(2.0, rel=1e-6)
        assert paoi_moment(FULL_PREEMPT_EXP, 1) == pytest.approx(2.5, rel=1e-6)

    def test_pinned_higher_moments_full_preemption(self):
        # frozen from symbolic differentiation of the closed-form MGFs
        assert paoi_moment(FULL_PREEMPT_EXP, 2) == pytest.approx(8.5, rel=1e-6)
        assert paoi_moment(FULL_PREEMPT_EXP, 3) == pytest.approx(36.75, rel=1e-4)
        assert aoi_moment(FULL_PREEMPT_EXP, 2) == pytest.approx(6.0, rel=1e-6)

    def test_bad_order_rejected(self):
        with pytest.raises(ValueError):
            aoi_moment(FULL_PREEMPT_EXP, 4)
        with pytest.raises(ValueError):
            paoi_moment(FULL_PREEMPT_EXP, 0)


class TestRocSup:
    def test_no_preemption_cap(self):
        assert mgf_roc(SystemConfig(0.5, 0.0, EXP1)) == 0.5  # arrival-rate pole
        assert mgf_roc(SystemConfig(2.0, 0.0, EXP1)) == 1.0  # transform domain

    def test_full_preemption_exponential_balanced(self):
        # c E[U] = 1: the root sits exactly at the thinned rate
        assert mgf_roc(FULL_PREEMPT_EXP) == pytest.approx(1.0, rel=1e-12)

    def test_root_below_thin_rate_when_loaded(self):
        # lam = 10, mu = 1: denominator root at s = 1, well under c = 10
        cfg = SystemConfig(10.0, 1.0, EXP1)
        assert mgf_roc(cfg) == pytest.approx(1.0, rel=1e-9)

    def test_light_load_capped_at_thin_rate(self):
        cfg = SystemConfig(1.0, 0.25, EXP1)  # c E[U] = 0.25 < 1
        assert mgf_roc(cfg) == pytest.approx(0.25, rel=1e-12)

    def test_lognormal_capped_by_transform_domain(self):
        cfg = SystemConfig(1.0, 0.34, LN)
        assert mgf_roc(cfg) == pytest.approx(0.34, rel=1e-12)

    def test_mgf_finite_inside_roc(self):
        for cfg in agreement_configs():
            s = 0.95 * mgf_roc(cfg)
            assert math.isfinite(interdeparture_mgf(cfg, s))


class TestSummarize:
    def test_summary_is_consistent(self):
        s = summarize(FULL_PREEMPT_EXP)
        assert s.avg_aoi == pytest.approx(2.0, rel=1e-12)
        assert s.avg_paoi == pytest.approx(2.5, rel=1e-12)
        assert s.mean_interdeparture == pytest.approx(2.0, rel=1e-12)
        assert s.delivery_prob == pytest.approx(0.5, rel=1e-14)
        assert s.mean_system_time == pytest.approx(0.5, rel=1e-13)
        assert s.paoi_second_moment == pytest.approx(8.5, rel=1e-6)
        assert s.roc_sup == pytest.approx(1.0, rel=1e-12)
        d = s.as_dict()
        assert set(d) == {
            "avg_aoi", "avg_paoi", "mean_interdeparture", "delivery_prob",
            "mean_system_time", "aoi_second_moment", "paoi_second_moment", "roc_sup",
        }


class TestInvariantSuites:
    """The validation-module grids double as the analytic property tests."""

    @pytest.mark.parametrize(
        "suite",
        [
            normalization_checks,
            mgf_form_checks,
            paoi_identity_checks,
            endpoint_continuity_checks,
            moment_consistency_checks,
            ordering_checks,
            roc_divergence_checks,
        ],
        ids=lambda f: f.__name__,
    )
    def test_suite_passes(self, suite):
        results = suite()
        failures = [c.line() for c in results if not c.passed]
        assert not failures, "\n".join(failures)
