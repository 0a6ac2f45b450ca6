"""Operating characteristics of detection rules.

Estimators for the integral average delay ``sum_k E_k(N-k)^+``, the
conditional delays ``E_k(N-k | N>=k)``, their weights, the stationary
(multi-cyclic) delay, the residual-time law, the Bayes loss under a geometric
prior, and the two-threshold mixture experiment.  Every estimate carries a
standard error.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels
from .calibration import ArlEstimate, arl_from_run_lengths, estimate_arl2fa
from .detectors import (
    MixtureRule,
    ThresholdRule,
    default_n_max,
    simulate_multicyclic,
    simulate_run_lengths,
)
from .errors import CalibrationMismatchError, KTooLargeError
from .models import ObservationModel
from .streams import as_streams

__all__ = [
    "HORIZON_SURVIVAL",
    "MIN_ACCEPTANCE",
    "BURN_IN",
    "Estimate",
    "GeometricPrior",
    "LossSpec",
    "DelayProfile",
    "IntegralAdd",
    "OperatingCharacteristics",
    "ResidualTime",
    "MixtureReport",
    "ComparisonRow",
    "ComparisonReport",
    "survival",
    "auto_horizon",
    "delay_profile",
    "conditional_add",
    "integral_add_direct",
    "integral_add_cm",
    "weights",
    "stationary_add_direct",
    "stationary_add_formula",
    "residual_time_dist",
    "tv_distance",
    "expected_loss",
    "mixture_add_experiment",
    "compare_rules",
    "sup_conditional_add",
    "operating_characteristics",
]

HORIZON_SURVIVAL = 1e-4
MIN_ACCEPTANCE = 1e-3
BURN_IN = 10
_BLOCKS = _kernels.N_BLOCKS


@dataclass(frozen=True)
class Estimate:
    value: float
    std_err: float

    @classmethod
    def of(cls, x) -> "Estimate":
        x = np.asarray(x, dtype=np.float64)
        se = float(x.std(ddof=1) / math.sqrt(len(x))) if len(x) > 1 else math.inf
        return cls(float(x.mean()), se)

    def combined_se(self, other: "Estimate") -> float:
        return math.hypot(self.std_err, other.std_err)

    def agrees(self, other: "Estimate", n_se: float) -> bool:
        return abs(self.value - other.value) <= n_se * self.combined_se(other)

    def to_dict(self) -> dict:
        return {"value": self.value, "std_err": self.std_err}


@dataclass(frozen=True)
class GeometricPrior:
    """``P(nu = k) = rho (1 - rho)^(k-1)``, ``k >= 1``."""

    rho: float

    def __post_init__(self) -> None:
        if not 0.0 < self.rho < 1.0:
            raise ValueError(f"rho must lie in (0, 1), got {self.rho!r}")

    def pmf(self, k) -> np.ndarray:
        return self.rho * (1.0 - self.rho) ** (np.asarray(k) - 1)


@dataclass(frozen=True)
class LossSpec:
    """False alarm costs 1; each step of delay costs ``c``."""

    c: float
    prior: GeometricPrior

    def __post_init__(self) -> None:
        if not self.c >= 0:
            raise ValueError(f"delay cost c must be nonnegative, got {self.c!r}")


def _nblocks(n_reps: int) -> int:
    return max(1, min(_BLOCKS, n_reps))


# -- survival and horizon --------------------------------------------------------


def survival(n: np.ndarray, K: int) -> np.ndarray:
    """Empirical ``P(N >= k)`` for ``k = 1..K``."""
    counts = np.bincount(np.minimum(n, K + 1), minlength=K + 2)
    at_least = np.cumsum(counts[::-1])[::-1]
    return at_least[1 : K + 1] / len(n)


def auto_horizon(n: np.ndarray, level: float = HORIZON_SURVIVAL) -> int:
    """Smallest ``K`` with empirical ``P(N >= K) < level``."""
    m = len(n)
    allowed = max(math.ceil(level * m) - 1, 0)  # largest count still below level*m
    return int(np.sort(n)[m - 1 - allowed]) + 1


# -- integral average delay ------------------------------------------------------


@dataclass
class DelayProfile:
    """Per-change-point delays for ``k = 1..K``.

    Within a replication the pre-change prefix is shared across ``k`` (common
    random numbers) and each ``k`` gets its own post-change continuation, so
    every ``k`` column is an independent-replication estimate of its own
    ``E_k``.  Standard errors of sums over ``k`` use per-replication totals.
    """

    rule: ThresholdRule
    K: int
    n_reps: int
    run_lengths: np.ndarray
    run_truncated: np.ndarray
    totals: np.ndarray
    count: np.ndarray
    delay_sum: np.ndarray
    delay_sq: np.ndarray
    truncated_fraction: float

    @property
    def arl(self) -> ArlEstimate:
        return arl_from_run_lengths(self.run_lengths, self.run_truncated)

    @property
    def survival(self) -> np.ndarray:
        """``P_inf(N >= k)``, which is also the acceptance rate of ``{N >= k}`` under ``P_k``."""
        return self.count / self.n_reps

    @property
    def unconditional(self) -> np.ndarray:
        """``E_k (N - k)^+``."""
        return self.delay_sum / self.n_reps

    def conditional(self) -> tuple[np.ndarray, np.ndarray]:
        """``E_k(N - k | N >= k)`` and standard errors (NaN/inf where nothing was accepted)."""
        cnt = self.count.astype(np.float64)
        with np.errstate(invalid="ignore", divide="ignore"):
            mean = self.delay_sum / cnt
            var = (self.delay_sq - cnt * mean**2) / (cnt - 1)
            se = np.sqrt(np.maximum(var, 0.0) / cnt)
        se[cnt < 2] = np.inf
        return mean, se

    def reliable(self) -> np.ndarray:
        return self.survival >= MIN_ACCEPTANCE

    @property
    def integral(self) -> Estimate:
        return Estimate.of(self.totals)

    def tail_bound(self) -> float:
        """Bound on the omitted part ``sum_{k>K} E_k(N-k)^+``."""
        mean, _ = self.conditional()
        ok = self.reliable()
        c_tail = float(np.max(mean[ok])) if ok.any() else 0.0
        beyond = float(np.maximum(self.run_lengths - self.K, 0).sum()) / self.n_reps
        return c_tail * beyond

    def stationary(self) -> Estimate:
        """Integral delay divided by ARL, delta-method error over paired replications."""
        t = self.totals
        n = self.run_lengths.astype(np.float64)
        ratio = t.mean() / n.mean()
        resid = t - ratio * n
        return Estimate(float(ratio), float(resid.std(ddof=1) / (n.mean() * math.sqrt(len(n)))))


def delay_profile(
    rule: ThresholdRule,
    model: ObservationModel,
    n_reps: int,
    rng,
    K: int | str = "auto",
    n_max: int | None = None,
) -> DelayProfile:
    """Simulate ``(N - k)^+`` under a change at each ``k <= K``."""
    streams = as_streams(rng).spawn("integral")
    pre, post = streams.spawn("pre"), streams.spawn("post")
    n_max = default_n_max(rule) if n_max is None else int(n_max)
    n, tr = simulate_run_lengths(rule, model, pre, n_reps, n_max=n_max)
    horizon = auto_horizon(n) if K == "auto" else int(K)
    if horizon < 1:
        raise ValueError("K must be >= 1")
    mode, thr, c = rule.encode()
    nb = _nblocks(n_reps)
    totals = np.empty(n_reps)
    branch_tr = np.empty(n_reps, dtype=np.bool_)
    blk_sum = np.zeros((nb, horizon))
    blk_sq = np.zeros((nb, horizon))
    blk_cnt = np.zeros((nb, horizon), dtype=np.int64)
    _kernels.integral_batch(mode, thr, c, model.code, model.params, pre.root_u64, post.root_u64,
                            n_reps, horizon, n_max, totals, branch_tr, blk_sum, blk_sq, blk_cnt)
    return DelayProfile(
        rule=rule,
        K=horizon,
        n_reps=n_reps,
        run_lengths=n,
        run_truncated=tr,
        totals=totals,
        count=blk_cnt.sum(axis=0),
        delay_sum=blk_sum.sum(axis=0),
        delay_sq=blk_sq.sum(axis=0),
        truncated_fraction=float(branch_tr.mean()),
    )


@dataclass(frozen=True)
class IntegralAdd:
    value: float
    std_err: float
    tail_bound: float
    K: int

    @property
    def estimate(self) -> Estimate:
        return Estimate(self.value, self.std_err)


def integral_add_direct(
    rule: ThresholdRule,
    model: ObservationModel,
    K: int | str,
    n_reps: int,
    rng,
    n_max: int | None = None,
) -> IntegralAdd:
    """``sum_{k<=K} E_k(N-k)^+`` from change-at-``k`` simulations, plus a tail bound."""
    prof = delay_profile(rule, model, n_reps, rng, K, n_max)
    est = prof.integral
    return IntegralAdd(est.value, est.std_err, prof.tail_bound(), prof.K)


def integral_add_cm(
    rule: ThresholdRule,
    model: ObservationModel,
    n_reps: int,
    rng,
    n_max: int | None = None,
) -> Estimate:
    """Change-of-measure estimate ``E_inf sum_{n<N} R_n`` of the integral delay.

    ``R_n`` is the SR statistic of ``model`` whatever ``rule`` is being run;
    only pre-change data are simulated.  The identity behind it:
    ``P_k(N > n) = E_inf[prod_{i=k}^n lr_i ; N > n]`` summed over ``k <= n``.
    """
    streams = as_streams(rng).spawn("integral-cm")
    n_max = default_n_max(rule) if n_max is None else int(n_max)
    mode, thr, c = rule.encode()
    out_n = np.empty(n_reps, dtype=np.int64)
    out_tr = np.empty(n_reps, dtype=np.bool_)
    out_sum = np.empty(n_reps)
    _kernels.cm_batch(mode, thr, c, model.code, model.params, streams.root_u64, n_reps, n_max,
                      out_n, out_tr, out_sum)
    return Estimate.of(out_sum)


def conditional_add(
    rule: ThresholdRule,
    model: ObservationModel,
    k: int,
    n_reps: int,
    rng,
    n_max: int | None = None,
) -> Estimate:
    """``E_k(N - k | N >= k)`` by rejection: change at ``k``, runs with ``N < k`` discarded."""
    if k < 1:
        raise ValueError("k must be >= 1")
    streams = as_streams(rng).spawn("conditional", k)
    n, _ = simulate_run_lengths(rule, model, streams, n_reps, nu=k, n_max=n_max)
    kept = n[n >= k]
    if len(kept) < max(2, MIN_ACCEPTANCE * n_reps):
        raise KTooLargeError(
            f"only {len(kept)}/{n_reps} runs survive to k={k}; use the integral sum's tail bound instead"
        )
    return Estimate.of(kept - k)


def sup_conditional_add(
    rule: ThresholdRule, model: ObservationModel, K: int | str, n_reps: int, rng
) -> float:
    """``max_{k<=K} E_k(N-k | N>=k)`` over the change points with enough accepted runs."""
    prof = delay_profile(rule, model, n_reps, rng, K)
    mean, _ = prof.conditional()
    ok = prof.reliable()
    return float(np.max(mean[ok])) if ok.any() else 0.0


def weights(rule: ThresholdRule, model: ObservationModel, K: int, n_reps: int, rng) -> np.ndarray:
    """``w_k = P_inf(N >= k) / E_inf N`` for ``k = 1..K``."""
    streams = as_streams(rng).spawn("arl2fa")
    n, _ = simulate_run_lengths(rule, model, streams, n_reps)
    return survival(n, K) / n.mean()


# -- multi-cyclic quantities -----------------------------------------------------


def _check_nu(nu: int, B: float | None, burn_in: float) -> None:
    if B is not None and nu < burn_in * B:
        raise ValueError(f"nu={nu} is below the burn-in {burn_in}*B={burn_in * B:g}")


def stationary_add_direct(
    rule: ThresholdRule | MixtureRule,
    model: ObservationModel,
    nu: int,
    n_reps: int,
    rng,
    B: float | None = None,
    burn_in: float = BURN_IN,
    n_max: int | None = None,
) -> Estimate:
    """Mean of ``Q_{J_nu} - nu`` over multi-cyclic runs with the change at ``nu``."""
    _check_nu(nu, B, burn_in)
    out = simulate_multicyclic(rule, model, nu, as_streams(rng).spawn("multicyclic"), n_reps, n_max)
    ok = ~out["truncated"]
    return Estimate.of(out["delay"][ok])


def stationary_add_formula(oc: "OperatingCharacteristics") -> float:
    """Integral delay over ARL2FA."""
    return oc.integral_add.value / oc.arl2fa.mean


@dataclass(frozen=True)
class ResidualTime:
    """Empirical law of ``nu - Q_{J_nu - 1}`` on ``k = 1..len(mass)``."""

    mass: np.ndarray
    n_reps: int

    @property
    def k(self) -> np.ndarray:
        return np.arange(1, len(self.mass) + 1)


def residual_time_dist(
    rule: ThresholdRule,
    model: ObservationModel,
    nu: int,
    n_reps: int,
    rng,
    B: float | None = None,
    burn_in: float = BURN_IN,
) -> ResidualTime:
    _check_nu(nu, B, burn_in)
    out = simulate_multicyclic(rule, model, nu, as_streams(rng).spawn("multicyclic"), n_reps)
    age = out["age"][~out["truncated"]]
    counts = np.bincount(age, minlength=2)[1:]
    return ResidualTime(counts / len(age), len(age))


def tv_distance(p: np.ndarray, q: np.ndarray) -> float:
    """Total-variation distance between two mass functions on ``1, 2, ...`` (zero-padded)."""
    m = max(len(p), len(q))
    p = np.pad(np.asarray(p, dtype=np.float64), (0, m - len(p)))
    q = np.pad(np.asarray(q, dtype=np.float64), (0, m - len(q)))
    return 0.5 * float(np.abs(p - q).sum())


# -- Bayes loss ----------------------------------------------------------------------


def expected_loss(
    rule: ThresholdRule,
    model: ObservationModel,
    loss: LossSpec,
    n_reps: int,
    rng,
    n_max: int | None = None,
) -> Estimate:
    """``P(N < nu) + c E(N - nu)^+`` with ``nu`` drawn from the geometric prior per replication."""
    streams = as_streams(rng).spawn("bayes-loss")
    n_max = default_n_max(rule) if n_max is None else int(n_max)
    mode, thr, c = rule.encode()
    nb = _nblocks(n_reps)
    s1, s2 = np.zeros(nb), np.zeros(nb)
    ntr = np.zeros(nb, dtype=np.int64)
    _kernels.loss_batch(mode, thr, c, model.code, model.params, loss.prior.rho, loss.c,
                        streams.root_u64, n_reps, n_max, s1, s2, ntr)
    total, total2 = s1.sum(), s2.sum()
    mean = total / n_reps
    var = max(total2 / n_reps - mean * mean, 0.0) * n_reps / (n_reps - 1)
    return Estimate(float(mean), math.sqrt(var / n_reps))


# -- mixture experiment -----------------------------------------------------------


@dataclass
class MixtureReport:
    arl_1: ArlEstimate
    arl_2: ArlEstimate
    add_1: Estimate
    add_2: Estimate
    add_mixture: Estimate
    prediction: Estimate
    covering_fraction_1: Estimate
    predicted_fraction_1: Estimate
    cycle_fraction_1: float
    nu: int
    n_reps: int

    @property
    def weight_1(self) -> float:
        return self.predicted_fraction_1.value

    def identity_holds(self, n_se: float = 3.0) -> bool:
        return self.add_mixture.agrees(self.prediction, n_se)

    def fraction_holds(self, n_se: float = 3.0) -> bool:
        return self.covering_fraction_1.agrees(self.predicted_fraction_1, n_se)

    def to_dict(self) -> dict:
        return {
            "nu": self.nu,
            "n_reps": self.n_reps,
            "arl_1": self.arl_1.to_dict(),
            "arl_2": self.arl_2.to_dict(),
            "add_1": self.add_1.to_dict(),
            "add_2": self.add_2.to_dict(),
            "add_mixture": self.add_mixture.to_dict(),
            "prediction": self.prediction.to_dict(),
            "covering_fraction_1": self.covering_fraction_1.to_dict(),
            "predicted_fraction_1": self.predicted_fraction_1.to_dict(),
            "cycle_fraction_1": self.cycle_fraction_1,
        }


def mixture_add_experiment(
    rule_1: ThresholdRule,
    rule_2: ThresholdRule,
    model: ObservationModel,
    nu: int,
    n_reps: int,
    rng,
    arl_reps: int | None = None,
) -> MixtureReport:
    """Stationary delay of the 1/2-1/2 cycle mixture against its convex-combination prediction.

    The weights are the components' ARL2FA, ``B_1/(B_1+B_2)`` and
    ``B_2/(B_1+B_2)``, estimated from ``arl_reps`` pre-change runs each.  The
    same weights predict how often the alarm-covering cycle is of each type.
    """
    streams = as_streams(rng).spawn("mixture")
    arl_reps = n_reps if arl_reps is None else arl_reps
    b1 = estimate_arl2fa(rule_1, model, arl_reps, streams.spawn(1))
    b2 = estimate_arl2fa(rule_2, model, arl_reps, streams.spawn(2))
    add_1 = stationary_add_direct(rule_1, model, nu, n_reps, streams.spawn(1))
    add_2 = stationary_add_direct(rule_2, model, nu, n_reps, streams.spawn(2))
    out = simulate_multicyclic(MixtureRule(rule_1, rule_2), model, nu,
                               streams.spawn("mix").spawn("multicyclic"), n_reps)
    ok = ~out["truncated"]
    add_mix = Estimate.of(out["delay"][ok])
    covering_1 = Estimate.of((out["type"][ok] == 0).astype(np.float64))

    s = b1.mean + b2.mean
    w1 = b1.mean / s
    # d w1 / d b1 = b2 / s^2, d w1 / d b2 = -b1 / s^2
    w1_se = math.hypot(b2.mean * b1.std_err, b1.mean * b2.std_err) / s**2
    pred = w1 * add_1.value + (1 - w1) * add_2.value
    pred_se = math.sqrt(
        (w1 * add_1.std_err) ** 2 + ((1 - w1) * add_2.std_err) ** 2 + ((add_1.value - add_2.value) * w1_se) ** 2
    )
    return MixtureReport(
        arl_1=b1,
        arl_2=b2,
        add_1=add_1,
        add_2=add_2,
        add_mixture=add_mix,
        prediction=Estimate(pred, pred_se),
        covering_fraction_1=covering_1,
        predicted_fraction_1=Estimate(w1, w1_se),
        cycle_fraction_1=float(out["n0"][ok].sum() / out["j"][ok].sum()),
        nu=nu,
        n_reps=int(ok.sum()),
    )


# -- comparison ---------------------------------------------------------------------


@dataclass(frozen=True)
class ComparisonRow:
    rule: ThresholdRule
    arl2fa: ArlEstimate
    integral_add: Estimate
    stationary_add: Estimate
    tail_bound: float
    K: int
    beats_sr: bool = False


@dataclass
class ComparisonReport:
    B: float
    rows: list[ComparisonRow]
    n_se: float = 3.0

    @property
    def violations(self) -> list[ComparisonRow]:
        return [r for r in self.rows if r.beats_sr]

    def ranking(self) -> list[ComparisonRow]:
        return sorted(self.rows, key=lambda r: r.integral_add.value)


def compare_rules(
    rules: Sequence[ThresholdRule],
    model: ObservationModel,
    B: float,
    K: int | str,
    n_reps: int,
    rng,
    rel_tol: float = 0.02,
    n_se: float = 3.0,
) -> ComparisonReport:
    """Integral and stationary delay of rules calibrated to the same ARL2FA.

    Refuses (:class:`CalibrationMismatchError`) when some rule's estimated
    ARL2FA is further than ``rel_tol*B`` plus ``n_se`` standard errors from
    ``B``.  Rows whose integral delay undercuts the first SR rule's by more
    than ``n_se`` combined standard errors are flagged ``beats_sr``.
    """
    if len(rules) < 2:
        raise ValueError("need at least two rules to compare")
    streams = as_streams(rng)
    profiles = []
    for i, rule in enumerate(rules):
        prof = delay_profile(rule, model, n_reps, streams.spawn("compare", i), K)
        arl = prof.arl
        if abs(arl.mean - B) > rel_tol * B + n_se * arl.std_err:
            raise CalibrationMismatchError(
                f"{rule.label} has ARL2FA {arl.mean:.4g} +- {arl.std_err:.2g}, not calibrated to B={B:g}"
            )
        profiles.append(prof)
    sr_idx = next((i for i, r in enumerate(rules) if r.kind == "sr"), None)
    rows = []
    for i, (rule, prof) in enumerate(zip(rules, profiles)):
        integ = prof.integral
        beats = False
        if sr_idx is not None and i != sr_idx:
            ref = profiles[sr_idx].integral
            beats = integ.value + n_se * integ.combined_se(ref) < ref.value
        rows.append(ComparisonRow(rule, prof.arl, integ, prof.stationary(), prof.tail_bound(), prof.K, beats))
    return ComparisonReport(B, rows, n_se)


# -- everything at once --------------------------------------------------------------


@dataclass
class OperatingCharacteristics:
    rule: ThresholdRule
    arl2fa: ArlEstimate
    integral_add: Estimate
    integral_add_cm: Estimate
    conditional_add: np.ndarray
    conditional_add_se: np.ndarray
    acceptance: np.ndarray
    weights: np.ndarray
    stationary_add: Estimate
    stationary_add_formula: Estimate
    residual_time: ResidualTime
    K: int
    tail_bound: float
    nu: int
    n_reps: int
    truncated_fraction: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def sup_conditional_add(self) -> float:
        ok = self.acceptance >= MIN_ACCEPTANCE
        return float(np.max(self.conditional_add[ok])) if ok.any() else 0.0

    def identity_residual(self) -> float:
        """``sum_k E_k(N-k | N>=k) P(N>=k) - sum_k E_k(N-k)^+``; zero up to rounding."""
        ok = self.acceptance > 0
        return float(np.sum(self.conditional_add[ok] * self.acceptance[ok]) - self.integral_add.value)

    def summary(self) -> dict:
        return {
            "rule": self.rule.to_dict(),
            "n_reps": self.n_reps,
            "K": self.K,
            "survival_at_K": float(self.acceptance[-1]),
            "tail_bound": self.tail_bound,
            "nu": self.nu,
            "arl2fa": self.arl2fa.to_dict(),
            "integral_add": self.integral_add.to_dict(),
            "integral_add_cm": self.integral_add_cm.to_dict(),
            "stationary_add_direct": self.stationary_add.to_dict(),
            "stationary_add_formula": self.stationary_add_formula.to_dict(),
            "sup_conditional_add": self.sup_conditional_add,
            "weights_sum": float(self.weights.sum()),
            "truncated_fraction": self.truncated_fraction,
        }


def operating_characteristics(
    rule: ThresholdRule,
    model: ObservationModel,
    n_reps: int,
    rng,
    K: int | str = "auto",
    nu: int | None = None,
    burn_in: float = BURN_IN,
) -> OperatingCharacteristics:
    """All delay and false-alarm characteristics of one rule.

    ``nu`` for the multi-cyclic estimates defaults to ``burn_in`` times the
    estimated ARL2FA.
    """
    streams = as_streams(rng)
    prof = delay_profile(rule, model, n_reps, streams, K)
    arl = prof.arl
    if nu is None:
        nu = max(int(math.ceil(burn_in * arl.mean)), 1)
    mean, se = prof.conditional()
    mc = simulate_multicyclic(rule, model, nu, streams.spawn("multicyclic"), n_reps)
    ok = ~mc["truncated"]
    age = mc["age"][ok]
    return OperatingCharacteristics(
        rule=rule,
        arl2fa=arl,
        integral_add=prof.integral,
        integral_add_cm=integral_add_cm(rule, model, n_reps, streams),
        conditional_add=mean,
        conditional_add_se=se,
        acceptance=prof.survival,
        weights=prof.survival / arl.mean,
        stationary_add=Estimate.of(mc["delay"][ok]),
        stationary_add_formula=prof.stationary(),
        residual_time=ResidualTime(np.bincount(age, minlength=2)[1:] / len(age), len(age)),
        K=prof.K,
        tail_bound=prof.tail_bound(),
        nu=nu,
        n_reps=n_reps,
        truncated_fraction=max(prof.truncated_fraction, arl.truncated_fraction, float(mc["truncated"].mean())),
    )
