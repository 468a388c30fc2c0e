import math

import numpy as np
import pytest

from tiltlab.exact import conditional_block_law
from tiltlab.montecarlo import (
    LowEffectiveSampleError,
    WindowSchedule,
    ZeroAcceptanceError,
    rate_fit,
    sample_conditional_blocks,
    window_sweep,
)
from tiltlab.simplex import Distribution
from tiltlab.tilting import MomentConstraint, MomentFunction

COIN = Distribution.bernoulli(0.5)
COIN_H = MomentFunction.from_labels(COIN.alphabet)

# Pr(X1=1 | 0.70 < mean < 0.80, n=100) for a fair coin: exact binomial sums
# over S in 71..79 (open window excludes the lattice endpoints).
WINDOW_ORACLE = 0.7161413808782501


# ------------------------------------------------------------------ schedule


def test_schedule_validation():
    with pytest.raises(ValueError, match="exponent"):
        WindowSchedule(amplitude=0.5, exponent=0.6)
    with pytest.raises(ValueError, match="amplitude"):
        WindowSchedule(amplitude=-1.0, exponent=0.25)
    schedule = WindowSchedule(amplitude=0.5, exponent=0.25)
    assert schedule.epsilon(16) == pytest.approx(0.25)


# ------------------------------------------------------------------ sampling


def test_fixed_seed_is_bit_identical():
    a, _ = sample_conditional_blocks(COIN, COIN_H, (0.35, 0.65), 40, 2, 2000, seed=9)
    b, _ = sample_conditional_blocks(COIN, COIN_H, (0.35, 0.65), 40, 2, 2000, seed=9)
    assert np.array_equal(a.estimates, b.estimates)
    assert np.array_equal(a.std_errors, b.std_errors)
    assert a.accepted == b.accepted
    c, _ = sample_conditional_blocks(COIN, COIN_H, (0.35, 0.65), 40, 2, 2000, seed=10)
    assert not np.array_equal(a.estimates, c.estimates)


def test_vacuous_window_recovers_baseline():
    for method in ("rejection", "tilt-importance"):
        est, _ = sample_conditional_blocks(
            COIN, COIN_H, (0.05, 0.95), 60, 1, 40000, method=method, seed=2
        )
        value, se = est.estimate_for((1,))
        assert abs(value - 0.5) <= 3 * se
    assert est.estimates.sum() == pytest.approx(1.0, abs=1e-12)


def test_estimates_agree_across_methods():
    rej, _ = sample_conditional_blocks(COIN, COIN_H, (0.6, 0.9), 50, 1, 10**5, "rejection", seed=4)
    imp, _ = sample_conditional_blocks(COIN, COIN_H, (0.6, 0.9), 50, 1, 10**5, "tilt-importance", seed=4)
    v_r, se_r = rej.estimate_for((1,))
    v_i, se_i = imp.estimate_for((1,))
    assert abs(v_r - v_i) <= 3 * math.hypot(se_r, se_i)


def test_rejection_se_matches_sample_std():
    est, _ = sample_conditional_blocks(COIN, COIN_H, (0.6, 0.9), 50, 1, 20000, "rejection", seed=8)
    value, se = est.estimate_for((1,))
    n_acc = est.accepted
    expected = math.sqrt(value * (1 - value) * n_acc / (n_acc - 1)) / math.sqrt(n_acc)
    assert se == pytest.approx(expected, rel=1e-12)
    assert est.ess == pytest.approx(n_acc)


def test_importance_matches_exact_window_oracle():
    est, _ = sample_conditional_blocks(
        COIN, COIN_H, (0.70, 0.80), 100, 1, 2 * 10**5, "tilt-importance", seed=0
    )
    value, se = est.estimate_for((1,))
    assert abs(value - WINDOW_ORACLE) <= 3 * se
    assert est.ess >= 50


def test_window_oracle_constant_matches_package_oracle():
    windowed = MomentConstraint(COIN_H, "equality", [0.75], epsilon=0.05)
    block = conditional_block_law(COIN, windowed, 100, 1)
    assert block.mass((1,)) == pytest.approx(WINDOW_ORACLE, abs=1e-12)


def test_importance_beats_rejection_acceptance_in_rare_regime():
    imp, _ = sample_conditional_blocks(
        COIN, COIN_H, (0.70, 0.80), 100, 1, 10**5, "tilt-importance", seed=1
    )
    rej, _ = sample_conditional_blocks(
        COIN, COIN_H, (0.70, 0.80), 100, 1, 6 * 10**6, "rejection", seed=1
    )
    assert imp.acceptance_rate > rej.acceptance_rate


def test_zero_acceptance_raises_with_advice():
    with pytest.raises(ZeroAcceptanceError, match="tilt-importance"):
        sample_conditional_blocks(COIN, COIN_H, (0.94, 0.96), 100, 1, 1000, "rejection", seed=3)


def test_low_effective_sample_raises():
    with pytest.raises((ZeroAcceptanceError, LowEffectiveSampleError)):
        sample_conditional_blocks(COIN, COIN_H, (0.70, 0.80), 100, 1, 10**5, "rejection", seed=5)


def test_window_must_be_inside_value_range():
    with pytest.raises(ValueError, match="window"):
        sample_conditional_blocks(COIN, COIN_H, (0.5, 1.5), 20, 1, 2000)


# -------------------------------------------------------------------- sweeps


def test_window_sweep_shrinking_trend():
    schedule = WindowSchedule(amplitude=0.5, exponent=0.25)
    points = window_sweep(
        COIN, COIN_H, 0.75, schedule, [25, 50, 100, 150], m=1, samples=4 * 10**5, seed=0
    )
    assert [pt.n for pt in points] == [25, 50, 100, 150]
    assert all(pt.epsilon == pytest.approx(0.5 * pt.n**-0.25) for pt in points)
    first, last = points[0], points[-1]
    allowance = math.hypot(first.std_error, last.std_error)
    assert last.tv_estimate < first.tv_estimate + allowance
    assert all(pt.ess >= 50 for pt in points)


def test_window_sweep_degenerate_weights_raise():
    # Whole-sequence importance weights collapse once the window is wide on
    # the CLT scale; the sweep must refuse to publish such estimates.
    schedule = WindowSchedule(amplitude=0.5, exponent=0.25)
    with pytest.raises(LowEffectiveSampleError, match="effective sample size"):
        window_sweep(COIN, COIN_H, 0.75, schedule, [400], m=1, samples=10**5, seed=0)


def test_window_sweep_fixed_window_plateaus():
    # A nearly constant window that does not contain the baseline mean: the
    # conditional law stabilizes away from the tilt at the window center.
    schedule = WindowSchedule(amplitude=0.15, exponent=0.01)
    points = window_sweep(
        COIN, COIN_H, 0.75, schedule, [50, 100, 200], m=1,
        samples=2 * 10**5, seed=0, method="rejection",
    )
    assert min(pt.tv_estimate for pt in points) > 0.05


# ------------------------------------------------------------------ rate fit


def test_rate_fit_exact_cube_root_law():
    records = [(n, n ** (-1 / 3)) for n in (50, 100, 200, 400, 800)]
    fit = rate_fit(records)
    assert fit.slope == pytest.approx(-1 / 3, abs=1e-9)
    assert fit.residual_rms < 1e-12


def test_rate_fit_sqrt_log_law_slope():
    ns = np.unique(np.geomspace(50, 5000, 12).astype(int))
    records = [(int(n), math.sqrt(math.log(n) / n)) for n in ns]
    fit = rate_fit(records)
    assert -0.5 < fit.slope < -0.4


def test_rate_fit_requires_four_points():
    with pytest.raises(ValueError, match=">= 4"):
        rate_fit([(10, 0.1), (20, 0.05), (40, 0.02)])


def test_rate_fit_rejects_nonpositive_tv():
    with pytest.raises(ValueError, match="sample budget"):
        rate_fit([(10, 0.1), (20, 0.05), (40, 0.0), (80, 0.01)])
