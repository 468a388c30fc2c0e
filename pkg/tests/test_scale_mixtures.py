import math

import numpy as np
import pytest
from scipy import stats

from tiltlab.montecarlo import rate_fit
from tiltlab.scale_mixtures import (
    MixingLaw,
    RealSample,
    ZeroAcceptanceError,
    condition_two_moments,
    empirical_limits,
    radial_cf_check,
    sample_gsm,
)

TWO_ATOM = MixingLaw.discrete([(0.0, 1.0, 0.5), (0.0, 4.0, 0.5)])


# ------------------------------------------------------------------- mixing


def test_mixing_law_validation():
    with pytest.raises(ValueError, match="positive"):
        MixingLaw.point(0.0, -1.0)
    with pytest.raises(ValueError, match="sum"):
        MixingLaw.discrete([(0.0, 1.0, 0.6), (0.0, 2.0, 0.6)])
    with pytest.raises(ValueError, match="shape"):
        MixingLaw.inverse_gamma(-1.0, 2.0)


# ----------------------------------------------------------------- sampling


def test_sample_gsm_deterministic():
    a = sample_gsm(TWO_ATOM, 100, seed=12)
    b = sample_gsm(TWO_ATOM, 100, seed=12)
    assert np.array_equal(a.values, b.values)
    assert a.latent == b.latent


def test_point_mixing_empirical_moments():
    sample = sample_gsm(MixingLaw.point(0.0, 1.0), 10**5, seed=1)
    mean, variance = empirical_limits(sample)
    assert abs(mean) < 0.02
    assert abs(variance - 1.0) < 0.02


def test_two_atom_variances_cluster():
    variances = []
    for seed in range(300):
        sample = sample_gsm(TWO_ATOM, 10**4, seed=seed)
        variances.append(empirical_limits(sample)[1])
    variances = np.array(variances)
    low = variances[variances < 2.5]
    high = variances[variances >= 2.5]
    assert low.size > 0 and high.size > 0
    assert abs(low.mean() - 1.0) < 0.1
    assert abs(high.mean() - 4.0) < 0.1


def test_per_sequence_limits_track_latent_draw():
    # Each sequence's empirical moments sit on its own latent draw (not the
    # mixture averages); allow one 3-sigma excursion across the seeds.
    hits = 0
    for seed in range(20):
        sample = sample_gsm(TWO_ATOM, 10**5, seed=seed)
        mean, variance = empirical_limits(sample)
        m_lat, v_lat = sample.latent
        mean_ok = abs(mean - m_lat) <= 3 * math.sqrt(v_lat / sample.n)
        var_ok = abs(variance - v_lat) <= 3 * math.sqrt(2.0 / sample.n) * v_lat
        hits += mean_ok and var_ok
    assert hits >= 19


def test_point_mixing_passes_normality_ks():
    passed = 0
    for seed in range(20):
        sample = sample_gsm(MixingLaw.point(0.0, 1.0), 2000, seed=seed)
        if stats.kstest(sample.values, "norm").pvalue > 0.01:
            passed += 1
    assert passed >= 18


def test_empirical_limits_degenerate():
    constant = RealSample(values=np.full(10, 2.5))
    mean, variance = empirical_limits(constant)
    assert mean == 2.5 and variance == 0.0
    with pytest.raises(ValueError):
        empirical_limits(RealSample(values=np.array([1.0])))


# ------------------------------------------------------ characteristic function


def test_cf_closed_forms():
    assert MixingLaw.point(0.0, 1.0).cf_real(1.0) == pytest.approx(math.exp(-0.5), abs=1e-12)
    pair = MixingLaw.discrete([(0.0, 1.0, 0.5), (0.0, 2.0, 0.5)])
    assert pair.cf_real(1.0) == pytest.approx(0.5 * math.exp(-0.5) + 0.5 * math.exp(-1.0), abs=1e-12)
    assert pair.cf_real(0.0) == pytest.approx(1.0, abs=1e-15)


def test_cf_check_point_and_two_atom():
    for mixing in (MixingLaw.point(0.0, 1.0), MixingLaw.discrete([(0.0, 1.0, 0.5), (0.0, 2.0, 0.5)])):
        report = radial_cf_check(mixing, (0.0, 0.5, 1.0, 2.0), samples=4 * 10**4, seed=2)
        assert report.max_deviation <= 4.0 / math.sqrt(report.samples) + 1e-3
        assert report.empirical[0] == pytest.approx(1.0, abs=1e-12)
        assert report.max_imaginary < 0.02


def test_cf_check_inverse_gamma_quadrature():
    mixing = MixingLaw.inverse_gamma(3.0, 2.0)
    report = radial_cf_check(mixing, (0.0, 0.5, 1.0, 2.0), samples=10**5, seed=3)
    assert report.max_deviation <= 4.0 / math.sqrt(report.samples) + 1e-3


# ----------------------------------------------------- two-moment conditioning


def test_condition_two_moments_selects_unit_variance_component():
    report = condition_two_moments(TWO_ATOM, (0.0, 1.0), 0.1, 200, 5, 12000, seed=0)
    assert report.accepted >= 2000
    assert report.ks_statistic < 0.05


def test_condition_two_moments_wide_window_keeps_mixture():
    # Windows that accept everything: the pooled law is the two-atom
    # mixture, whose exact KS distance from N(0,1) is 0.0807 at the
    # maximizing point, so a large KS must show up.
    report = condition_two_moments(TWO_ATOM, (0.0, 1.0), 50.0, 50, 10, 4000, seed=1)
    assert report.acceptance_rate == 1.0
    assert report.ks_statistic > 0.05


def test_condition_two_moments_zero_acceptance():
    with pytest.raises(ZeroAcceptanceError, match="acceptance probability"):
        condition_two_moments(TWO_ATOM, (25.0, 1.0), 0.05, 100, 2, 2000, seed=2)


def test_condition_two_moments_ks_shrinks_along_schedule():
    # epsilon halves while n*eps^2 doubles: the window sharpens on the CLT
    # scale and the pooled law tightens onto the target Gaussian.
    settings = [(0.4, 100), (0.2, 800), (0.1, 6400)]
    ks = [
        condition_two_moments(TWO_ATOM, (0.0, 1.0), eps, n, 10, 4000, seed=5).ks_statistic
        for eps, n in settings
    ]
    noise = 1.0 / math.sqrt(4000 * 10 / 4)
    assert ks[-1] < ks[0] + noise
    assert ks[-1] < 0.05


# ------------------------------------------------------ variance recovery rate


def test_variance_recovery_error_scales_like_root_n():
    mixing = MixingLaw.point(0.0, 1.0)
    records = []
    for i, n in enumerate((64, 256, 1024, 4096)):
        errors = []
        for r in range(200):
            sample = sample_gsm(mixing, n, seed=10_000 + 1000 * i + r)
            errors.append(abs(empirical_limits(sample)[1] - 1.0))
        records.append((n, float(np.mean(errors))))
    fit = rate_fit(records)
    assert -0.65 < fit.slope < -0.35
