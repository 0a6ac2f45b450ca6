import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from srdetect.detectors import (
    CusumState,
    Detector,
    MixtureRule,
    ShiryaevState,
    SrState,
    ThresholdRule,
    alarm_time,
    cusum_update,
    default_n_max,
    multicyclic_from_lrs,
    multicyclic_run,
    run_to_alarm,
    shiryaev_posterior,
    shiryaev_update,
    simulate_multicyclic,
    simulate_run_lengths,
    sr_direct,
    sr_update,
)
from srdetect.errors import DomainError, UndefinedPosteriorError
from srdetect.models import ChangeSpec, ObservationModel, likelihood_ratio
from srdetect.streams import RandomStreams

GAUSS = ObservationModel("gaussian_mean_shift", 0.0, 1.0)
TOY = ObservationModel("bernoulli", 0.5, 0.75)
EXPO = ObservationModel("exponential_rate", 1.0, 2.0)

lr_lists = st.lists(st.floats(1e-3, 1e3), min_size=1, max_size=40)


@given(lr_lists)
def test_sr_recursion_equals_sum_of_products(lrs):
    s = SrState()
    for lr in lrs:
        s = sr_update(s, lr)
    assert s.n == len(lrs)
    assert s.r == pytest.approx(sr_direct(lrs), rel=1e-10)


def test_sr_first_steps():
    s = sr_update(SrState(), 2.0)
    assert s.r == 2.0
    assert sr_update(s, 0.5).r == 1.5


@given(lr_lists)
def test_shiryaev_with_rho_zero_is_sr(lrs):
    a, b = SrState(), ShiryaevState(0.0)
    for lr in lrs:
        a, b = sr_update(a, lr), shiryaev_update(b, lr)
    assert a.r == b.r_rho


def test_shiryaev_posterior():
    s = shiryaev_update(ShiryaevState(0.2), 1.0)
    assert s.r_rho == pytest.approx(1.25)
    assert shiryaev_posterior(s) == pytest.approx(1.25 / (1.25 + 5))
    with pytest.raises(UndefinedPosteriorError):
        shiryaev_posterior(ShiryaevState(0.0, 1.0))
    with pytest.raises(DomainError):
        ShiryaevState(1.0)


def test_cusum():
    w = CusumState()
    for llr, want in [(1.0, 1.0), (-0.5, 0.5), (-2.0, 0.0), (0.3, 0.3)]:
        w = cusum_update(w, llr)
        assert w.w == pytest.approx(want)
    with pytest.raises(DomainError):
        cusum_update(w, math.inf)


def test_bad_lr_rejected():
    with pytest.raises(DomainError):
        sr_update(SrState(), 0.0)
    with pytest.raises(DomainError):
        sr_update(SrState(), math.nan)


def test_threshold_is_inclusive():
    assert alarm_time(ThresholdRule.sr(1.5), [1.5]).n == 1
    assert alarm_time(ThresholdRule.sr(1.5 + 1e-12), [1.5, 0.5]).truncated
    assert alarm_time(ThresholdRule.cusum(1.0), [math.e]).n == 1


def test_toy_rules():
    rng = np.random.default_rng(0)
    for _ in range(200):
        path = rng.integers(0, 2, 30)
        lrs = [likelihood_ratio(TOY, int(x)) for x in path]
        assert alarm_time(ThresholdRule.sr(0.4), lrs).n == 1
        r = alarm_time(ThresholdRule.sr(1.4), lrs)
        if 1 in path:
            assert r.n == int(np.argmax(path == 1)) + 1  # first success
        else:
            assert r.truncated


def test_rule_validation():
    with pytest.raises(ValueError):
        ThresholdRule.sr(-1.0)
    with pytest.raises(ValueError):
        ThresholdRule("shiryaev", 10.0, 1.0)
    with pytest.raises(ValueError):
        ThresholdRule("sr", 10.0, 0.1)
    with pytest.raises(ValueError):
        ThresholdRule("page", 1.0)
    with pytest.raises(ValueError):
        MixtureRule(ThresholdRule.sr(10), ThresholdRule.cusum(2))


def test_shiryaev_posterior_threshold_round_trip():
    r = ThresholdRule.shiryaev_from_posterior(0.9, 0.01)
    assert r.threshold == pytest.approx(900.0)
    assert r.posterior_threshold == pytest.approx(0.9)


def test_log_domain_agrees_with_linear():
    rng = np.random.default_rng(1)
    for _ in range(50):
        lrs = list(np.exp(rng.normal(0.6, 1.0, 200)))
        big = ThresholdRule.sr(1e13)
        assert big.log_domain
        s, n_lin = SrState(), None
        for i, lr in enumerate(lrs, 1):
            s = sr_update(s, lr)
            if s.r >= 1e13:
                n_lin = i
                break
        r = alarm_time(big, lrs)
        assert (None if r.truncated else r.n) == n_lin


def test_default_n_max():
    assert default_n_max(ThresholdRule.sr(50), B=100) == 100_000
    assert default_n_max(ThresholdRule.sr(50)) == 50_000


CASES = [
    (ThresholdRule.sr(30.0), GAUSS),
    (ThresholdRule.cusum(2.5), GAUSS),
    (ThresholdRule.shiryaev(40.0, 0.05), GAUSS),
    (ThresholdRule.sr(1e13), ObservationModel("gaussian_mean_shift", 0.0, 3.0)),
    (ThresholdRule.sr(20.0), TOY),
    (ThresholdRule.sr(20.0), EXPO),
    (ThresholdRule.cusum(2.0), ObservationModel("exponential_rate", 1.0, 0.5)),
]


@pytest.mark.parametrize("rule,model", CASES)
@pytest.mark.parametrize("nu", [math.inf, 1, 15])
def test_compiled_runs_match_reference(rule, model, nu):
    if rule.threshold > 1e12 and nu == math.inf:
        pytest.skip("no alarm in reasonable time without a change")
    streams = RandomStreams(42).spawn("t")
    n, tr = simulate_run_lengths(rule, model, streams, 60, nu=nu)
    for i in range(60):
        ref = run_to_alarm(rule, model, ChangeSpec(nu), streams.substream(i))
        assert (n[i], tr[i]) == (ref.n, ref.truncated)


@pytest.mark.parametrize("rule", [ThresholdRule.sr(10.0), ThresholdRule.cusum(1.5),
                                  MixtureRule(ThresholdRule.sr(5.0), ThresholdRule.sr(30.0))])
def test_compiled_multicyclic_matches_reference(rule):
    streams = RandomStreams(3).spawn("mc")
    out = simulate_multicyclic(rule, GAUSS, 120, streams, 40)
    for i in range(40):
        tr = multicyclic_run(rule, GAUSS, 120, streams.substream(i))
        tr.check()
        assert out["delay"][i] == tr.delay
        assert out["age"][i] == tr.age_at_change
        assert out["j"][i] == tr.j_nu
        assert out["type"][i] == tr.cycle_types[-1]
        assert out["n0"][i] == tr.cycle_types.count(0)


@given(seed=st.integers(0, 2**32), nu=st.integers(1, 300))
@settings(max_examples=30, deadline=None)
def test_multicyclic_trace_invariants(seed, nu):
    tr = multicyclic_run(ThresholdRule.sr(8.0), GAUSS, nu, RandomStreams(seed).substream(0))
    tr.check()
    assert tr.delay >= 0
    assert 1 <= tr.age_at_change <= tr.cycle_lengths[-1]


def test_multicyclic_from_lrs_restarts():
    # lr 2 everywhere: R = 2, 6, 14, ... so A = 6 alarms every second step
    tr = multicyclic_from_lrs(ThresholdRule.sr(6.0), lambda n: 2.0, nu=7)
    assert tr.alarm_epochs == [2, 4, 6, 8]
    assert tr.j_nu == 4 and tr.delay == 1 and tr.age_at_change == 1
    with pytest.raises(ValueError):
        multicyclic_run(ThresholdRule.sr(6.0), GAUSS, math.inf, RandomStreams(0).substream(0))


def test_detector_matches_alarm_time():
    rng = np.random.default_rng(5)
    x = rng.normal(0, 1, 500)
    x[200:] += 1
    rule = ThresholdRule.sr(100.0)
    det = Detector(rule, GAUSS)
    n = next(i for i, v in enumerate(x, 1) if det.update(v))
    assert n == alarm_time(rule, [likelihood_ratio(GAUSS, v) for v in x]).n
    det.reset()
    assert det.n == 0 and det.statistic == 0.0


def test_detector_posterior():
    det = Detector(ThresholdRule.shiryaev_from_posterior(0.99, 0.1), TOY)
    det.update(1)
    assert det.posterior == pytest.approx(shiryaev_posterior(shiryaev_update(ShiryaevState(0.1), 1.5)))
    with pytest.raises(UndefinedPosteriorError):
        _ = Detector(ThresholdRule.sr(5.0), TOY).posterior
