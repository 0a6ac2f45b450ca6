import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from srdetect import oracles
from srdetect.detectors import ThresholdRule
from srdetect.errors import CalibrationMismatchError, KTooLargeError
from srdetect.metrics import (
    Estimate,
    GeometricPrior,
    LossSpec,
    auto_horizon,
    compare_rules,
    conditional_add,
    delay_profile,
    expected_loss,
    integral_add_cm,
    integral_add_direct,
    mixture_add_experiment,
    operating_characteristics,
    residual_time_dist,
    stationary_add_direct,
    sup_conditional_add,
    survival,
    tv_distance,
    weights,
)
from srdetect.models import ObservationModel
from srdetect.streams import RandomStreams

TOY = ObservationModel("bernoulli", 0.5, 0.75)
GAUSS = ObservationModel("gaussian_mean_shift", 0.0, 1.0)
SR14 = ThresholdRule.sr(1.4)


def near(est: Estimate, target: float, n_se: float = 4.0) -> bool:
    return abs(est.value - target) <= n_se * est.std_err


def test_toy_integral_both_ways():
    d = integral_add_direct(SR14, TOY, "auto", 100_000, 1)
    assert near(d.estimate, 2 / 3)
    assert near(integral_add_cm(SR14, TOY, 100_000, 1), 2 / 3)


def test_toy_conditional_delay_is_constant():
    for k in (1, 2, 3, 5):
        assert near(conditional_add(SR14, TOY, k, 100_000, 2), 1 / 3)
    with pytest.raises(KTooLargeError):
        conditional_add(SR14, TOY, 30, 10_000, 2)
    assert sup_conditional_add(SR14, TOY, 8, 100_000, 2) >= conditional_add(SR14, TOY, 1, 100_000, 2).value - 0.02


def test_instant_detection_has_zero_delay():
    r = ThresholdRule.sr(0.4)
    oc = operating_characteristics(r, TOY, 2000, 0)
    assert oc.arl2fa.mean == 1.0
    assert oc.integral_add.value == 0.0 and oc.integral_add_cm.value == 0.0
    assert oc.stationary_add.value == 0.0 and oc.sup_conditional_add == 0.0


def test_cusum_delays_against_enumeration():
    model = ObservationModel("bernoulli", 0.3, 0.7)
    rule = ThresholdRule.cusum(1.5)
    prof = delay_profile(rule, model, 100_000, 3, K=4)
    for k in range(1, 5):
        # post-change detection is fast, so length-18 paths leave a bias far below the MC error
        exact = oracles.delay_terms(rule, model, k, 18)["unconditional"]
        m = prof.delay_sum[k - 1] / prof.n_reps
        se = math.sqrt((prof.delay_sq[k - 1] / prof.n_reps - m * m) / prof.n_reps)
        assert abs(m - exact) <= 4 * se + 1e-3


def test_conditional_times_survival_reproduces_integral():
    prof = delay_profile(ThresholdRule.sr(20.0), GAUSS, 20_000, 4)
    mean, _ = prof.conditional()
    ok = prof.count > 0
    assert np.sum(mean[ok] * prof.survival[ok]) == pytest.approx(prof.integral.value, rel=1e-9)


def test_auto_horizon_and_weights():
    prof = delay_profile(ThresholdRule.sr(20.0), GAUSS, 20_000, 5)
    n = prof.run_lengths
    assert survival(n, prof.K)[-1] < 1e-4
    assert survival(n, prof.K - 1)[-1] >= 1e-4
    w = weights(ThresholdRule.sr(20.0), GAUSS, 10 * int(n.max()), 20_000, 5)
    assert w.sum() == pytest.approx(1.0, abs=1e-12)


@given(st.lists(st.integers(1, 200), min_size=1, max_size=300))
def test_auto_horizon_property(n):
    n = np.array(n)
    K = auto_horizon(n)
    s = survival(n, K)
    assert s[-1] < 1e-4
    if K > 1:
        assert s[-2] >= 1e-4
    assert survival(n, int(n.max())).sum() == pytest.approx(n.mean())


@given(st.lists(st.floats(0, 1), min_size=1, max_size=20), st.lists(st.floats(0, 1), min_size=1, max_size=20))
def test_tv_properties(a, b):
    p = np.array(a) / max(sum(a), 1e-300) if sum(a) > 0 else np.zeros(len(a))
    q = np.array(b) / max(sum(b), 1e-300) if sum(b) > 0 else np.zeros(len(b))
    assert tv_distance(p, q) == pytest.approx(tv_distance(q, p))
    assert tv_distance(p, p) == 0
    assert 0 <= tv_distance(p, q) <= 1 + 1e-12


def test_toy_stationary_and_residual_time():
    st_ = stationary_add_direct(SR14, TOY, 20, 100_000, 6)
    assert near(st_, 1 / 3)
    res = residual_time_dist(SR14, TOY, 20, 100_000, 6)
    assert tv_distance(res.mass, 0.5 ** np.arange(1, 30)) < 0.01
    with pytest.raises(ValueError):
        stationary_add_direct(SR14, TOY, 10, 100, 6, B=2.0, burn_in=10)


def test_toy_bayes_loss_exact():
    rho, c = 0.1, 0.5
    exact = 1 - (1 - c / 3) * 2 * rho / (1 + rho)
    assert near(expected_loss(SR14, TOY, LossSpec(c, GeometricPrior(rho)), 200_000, 7), exact)
    with pytest.raises(ValueError):
        GeometricPrior(0.0)
    with pytest.raises(ValueError):
        LossSpec(-1.0, GeometricPrior(0.1))


def test_mixture_experiment_small():
    rep = mixture_add_experiment(ThresholdRule.sr(10.0), ThresholdRule.sr(40.0), GAUSS, 600, 20_000, 8)
    assert rep.identity_holds(4.0) and rep.fraction_holds(4.0)
    assert 0 < rep.weight_1 < 0.5
    assert rep.to_dict()["nu"] == 600


def test_compare_rules_guards():
    sr = ThresholdRule.sr(27.0)
    rep = compare_rules([sr, sr], GAUSS, 50.0, "auto", 20_000, 9)
    assert not rep.violations
    with pytest.raises(CalibrationMismatchError):
        compare_rules([sr, ThresholdRule.sr(0.4)], GAUSS, 50.0, "auto", 5000, 9)
    with pytest.raises(ValueError):
        compare_rules([sr], GAUSS, 50.0, "auto", 5000, 9)


def test_estimates_do_not_depend_on_call_order():
    a = integral_add_cm(SR14, TOY, 5000, RandomStreams(1))
    integral_add_direct(SR14, TOY, 10, 5000, RandomStreams(1))
    b = integral_add_cm(SR14, TOY, 5000, RandomStreams(1))
    assert a == b
