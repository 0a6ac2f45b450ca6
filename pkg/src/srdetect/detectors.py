"""Shiryaev-Roberts, Shiryaev and CUSUM detection rules.

Two layers live here:

* plain-Python state machines (``sr_update`` and friends) and reference runs
  (:func:`run_to_alarm`, :func:`multicyclic_run`) that draw from a
  :class:`~srdetect.streams.Substream`;
* batch simulators backed by the compiled kernels, which reproduce the
  reference runs replication by replication.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, NamedTuple

import numpy as np

from . import _kernels as K
from .errors import DomainError, UndefinedPosteriorError
from .models import ChangeSpec, ObservationModel, likelihood_ratio, log_likelihood_ratio
from .streams import RandomStreams, Substream

__all__ = [
    "KINDS",
    "LOG_DOMAIN_THRESHOLD",
    "SrState",
    "ShiryaevState",
    "CusumState",
    "ThresholdRule",
    "MixtureRule",
    "MultiCyclicTrace",
    "RunResult",
    "Detector",
    "sr_update",
    "shiryaev_update",
    "shiryaev_posterior",
    "cusum_update",
    "sr_direct",
    "alarm_time",
    "run_to_alarm",
    "multicyclic_run",
    "multicyclic_from_lrs",
    "mixture_rule",
    "default_n_max",
    "simulate_run_lengths",
    "simulate_multicyclic",
]

KINDS = ("sr", "shiryaev", "cusum")
LOG_DOMAIN_THRESHOLD = 1e12


def _check_lr(lr: float) -> None:
    if not (lr > 0 and math.isfinite(lr)):
        raise DomainError(f"likelihood ratio must be positive and finite, got {lr!r}")


# -- incremental statistics -------------------------------------------------


@dataclass(frozen=True)
class SrState:
    r: float = 0.0
    n: int = 0


@dataclass(frozen=True)
class ShiryaevState:
    rho: float
    r_rho: float = 0.0
    n: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.rho < 1.0:
            raise DomainError(f"rho must lie in [0, 1), got {self.rho!r}")


@dataclass(frozen=True)
class CusumState:
    w: float = 0.0
    n: int = 0


def sr_update(state: SrState, lr: float) -> SrState:
    """``R_n = (1 + R_{n-1}) * lr``."""
    _check_lr(lr)
    return SrState((1.0 + state.r) * lr, state.n + 1)


def shiryaev_update(state: ShiryaevState, lr: float) -> ShiryaevState:
    """``R_{rho,n} = (1 + R_{rho,n-1}) * lr / (1 - rho)``."""
    _check_lr(lr)
    return ShiryaevState(state.rho, (1.0 + state.r_rho) * lr / (1.0 - state.rho), state.n + 1)


def shiryaev_posterior(state: ShiryaevState) -> float:
    """Posterior probability that the change has already happened, ``P(nu <= n | X_1..X_n)``."""
    if state.rho == 0.0:
        raise UndefinedPosteriorError("posterior is undefined for rho = 0")
    if math.isinf(state.r_rho):
        return 1.0
    return state.r_rho / (state.r_rho + 1.0 / state.rho)


def cusum_update(state: CusumState, log_lr: float) -> CusumState:
    """Page's recursion ``W_n = max(0, W_{n-1} + log lr)``."""
    if not math.isfinite(log_lr):
        raise DomainError(f"log likelihood ratio must be finite, got {log_lr!r}")
    return CusumState(max(0.0, state.w + log_lr), state.n + 1)


def sr_direct(lrs: Iterable[float]) -> float:
    """Brute-force ``sum_k prod_{i=k}^n lr_i`` (quadratic; for checking only)."""
    lrs = list(lrs)
    return sum(math.prod(lrs[k:]) for k in range(len(lrs)))


# -- rules -------------------------------------------------------------------


@dataclass(frozen=True)
class ThresholdRule:
    """A detection statistic together with its alarm threshold.

    ``threshold`` is ``A`` for ``sr``, ``A_{rho,c}`` for ``shiryaev`` (on the
    ``R_{rho,n}`` scale, so the posterior threshold is ``A*rho/(1 + A*rho)``)
    and ``a`` for ``cusum`` (on the log-likelihood scale).
    """

    kind: str
    threshold: float
    rho: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown rule kind {self.kind!r}; expected one of {KINDS}")
        if not (self.threshold > 0 and math.isfinite(self.threshold)):
            raise DomainError(f"threshold must be positive and finite, got {self.threshold!r}")
        if self.kind == "shiryaev":
            if not 0.0 <= self.rho < 1.0:
                raise DomainError(f"rho must lie in [0, 1), got {self.rho!r}")
        elif self.rho != 0.0:
            raise ValueError(f"rho is only meaningful for shiryaev rules, got rho={self.rho!r}")
        object.__setattr__(self, "threshold", float(self.threshold))
        object.__setattr__(self, "rho", float(self.rho))

    @classmethod
    def sr(cls, A: float) -> "ThresholdRule":
        return cls("sr", A)

    @classmethod
    def cusum(cls, a: float) -> "ThresholdRule":
        return cls("cusum", a)

    @classmethod
    def shiryaev(cls, A: float, rho: float) -> "ThresholdRule":
        return cls("shiryaev", A, rho)

    @classmethod
    def shiryaev_from_posterior(cls, delta: float, rho: float) -> "ThresholdRule":
        """Rule stopping once the posterior reaches ``delta``."""
        if not 0.0 < delta < 1.0 or not 0.0 < rho < 1.0:
            raise DomainError("need 0 < delta < 1 and 0 < rho < 1")
        return cls("shiryaev", delta / (1.0 - delta) / rho, rho)

    def with_threshold(self, threshold: float) -> "ThresholdRule":
        return ThresholdRule(self.kind, threshold, self.rho)

    @property
    def posterior_threshold(self) -> float:
        if self.kind != "shiryaev":
            raise ValueError("posterior threshold exists for shiryaev rules only")
        if self.rho == 0.0:
            raise UndefinedPosteriorError("posterior is undefined for rho = 0")
        ar = self.threshold * self.rho
        return ar / (1.0 + ar)

    @property
    def log_domain(self) -> bool:
        return self.kind != "cusum" and self.threshold > LOG_DOMAIN_THRESHOLD

    def encode(self) -> tuple[int, float, float]:
        """``(mode, thr, c)`` triple understood by the kernels."""
        if self.kind == "cusum":
            return 2, self.threshold, 0.0
        if self.log_domain:
            return 1, math.log(self.threshold), -math.log1p(-self.rho)
        return 0, self.threshold, 1.0 / (1.0 - self.rho)

    @property
    def label(self) -> str:
        if self.kind == "shiryaev":
            return f"shiryaev(A={self.threshold:.6g},rho={self.rho:.3g})"
        if self.kind == "cusum":
            return f"cusum(a={self.threshold:.6g})"
        return f"sr(A={self.threshold:.6g})"

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "threshold": self.threshold}
        if self.kind == "shiryaev":
            d["rho"] = self.rho
        return d


@dataclass(frozen=True)
class MixtureRule:
    """Cycle-level randomization between two SR rules, each with probability 1/2."""

    rule_1: ThresholdRule
    rule_2: ThresholdRule

    def __post_init__(self) -> None:
        if self.rule_1.kind != "sr" or self.rule_2.kind != "sr":
            raise ValueError("mixture components must both be sr rules")

    @property
    def label(self) -> str:
        return f"mix({self.rule_1.label},{self.rule_2.label})"


def mixture_rule(rule_1: ThresholdRule, rule_2: ThresholdRule) -> MixtureRule:
    return MixtureRule(rule_1, rule_2)


def default_n_max(rule: ThresholdRule | MixtureRule, B: float | None = None) -> int:
    """Truncation cap: ``1000 * B`` when the target ARL is known.

    Without ``B`` the cap is derived from the threshold, using ``E_inf N >= A``
    for SR-type rules and ``E_inf N >= exp(a)`` for CUSUM.
    """
    if B is not None:
        return int(min(1000 * max(B, 1.0), 2**52))
    if isinstance(rule, MixtureRule):
        return max(default_n_max(rule.rule_1), default_n_max(rule.rule_2))
    scale = math.exp(min(rule.threshold, 40.0)) if rule.kind == "cusum" else rule.threshold
    return int(min(1000 * max(scale, 10.0), 2**52))


# -- reference (pure Python) runs ---------------------------------------------


class RunResult(NamedTuple):
    n: int
    truncated: bool = False


class _Stepper:
    """Statistic update for one rule, in whichever domain the rule uses."""

    def __init__(self, rule: ThresholdRule):
        self.mode, self.thr, self.c = rule.encode()

    def init(self) -> float:
        return -math.inf if self.mode == 1 else 0.0

    def step(self, stat: float, lr: float, llr: float) -> float:
        if self.mode == 0:
            return (1.0 + stat) * lr * self.c
        if self.mode == 1:
            v = stat
            lse = v + math.log1p(math.exp(-v)) if v > 0 else math.log1p(math.exp(v))
            return lse + llr + self.c
        return max(0.0, stat + llr)


def alarm_time(rule: ThresholdRule, lrs: Iterable[float], n_max: int | None = None) -> RunResult:
    """First ``n`` with statistic ``>= threshold`` for a given likelihood-ratio sequence.

    Truncated (``truncated=True``) if the sequence runs out or ``n_max`` is reached.
    """
    st = _Stepper(rule)
    stat = st.init()
    n = 0
    for lr in lrs:
        if n_max is not None and n >= n_max:
            return RunResult(n, True)
        _check_lr(lr)
        n += 1
        stat = st.step(stat, lr, math.log(lr))
        if stat >= st.thr:
            return RunResult(n, False)
    return RunResult(n, True)


def _model_lrs(model: ObservationModel, change: ChangeSpec, rng: Substream, start: int = 0) -> Iterator[float]:
    n = start
    while True:
        n += 1
        yield likelihood_ratio(model, rng.draw(model, change.is_post(n)))


def run_to_alarm(
    rule: ThresholdRule,
    model: ObservationModel,
    change: ChangeSpec,
    rng: Substream,
    n_max: int | None = None,
) -> RunResult:
    """Single run of ``rule`` on data drawn lazily from ``model`` with change ``change``."""
    n_max = default_n_max(rule) if n_max is None else n_max
    st = _Stepper(rule)
    stat = st.init()
    for n in range(1, n_max + 1):
        x = rng.draw(model, change.is_post(n))
        stat = st.step(stat, likelihood_ratio(model, x), log_likelihood_ratio(model, x))
        if stat >= st.thr:
            return RunResult(n, False)
    return RunResult(n_max, True)


@dataclass
class MultiCyclicTrace:
    """Alarm history of a repeatedly applied rule.

    ``alarm_epochs[j-1]`` is the time of the ``j``-th alarm; ``j_nu`` is the
    index of the first alarm at or after ``nu`` (``None`` when ``nu`` is
    infinite or the run was truncated before reaching it).
    """

    cycle_lengths: list[int]
    alarm_epochs: list[int]
    nu: float
    j_nu: int | None = None
    detection_epoch: int | None = None
    cycle_types: list[int] = field(default_factory=list)
    truncated: bool = False

    @property
    def delay(self) -> int | None:
        return None if self.detection_epoch is None else self.detection_epoch - int(self.nu)

    @property
    def age_at_change(self) -> int | None:
        """``nu - Q_{J_nu - 1}`` with ``Q_0 = 0``."""
        if self.j_nu is None:
            return None
        prev = self.alarm_epochs[self.j_nu - 2] if self.j_nu > 1 else 0
        return int(self.nu) - prev

    def check(self) -> None:
        """Assert the structural invariants of the trace."""
        assert self.alarm_epochs == list(np.cumsum(self.cycle_lengths, dtype=np.int64)), "Q_j != sum N^(i)"
        if self.j_nu is not None:
            q = self.alarm_epochs
            assert q[self.j_nu - 1] == self.detection_epoch >= self.nu
            assert self.j_nu == 1 or q[self.j_nu - 2] < self.nu


def _cycles(rules, choose, next_obs, nu, n_max, max_cycles) -> MultiCyclicTrace:
    steppers = [_Stepper(r) for r in rules]
    trace = MultiCyclicTrace([], [], nu)
    t = 0
    while max_cycles is None or len(trace.cycle_lengths) < max_cycles:
        typ = choose()
        st = steppers[typ]
        stat = st.init()
        n = t
        while True:
            if n - t >= n_max:
                trace.truncated = True
                return trace
            n += 1
            lr, llr = next_obs(n)
            stat = st.step(stat, lr, llr)
            if stat >= st.thr:
                break
        trace.cycle_lengths.append(n - t)
        trace.alarm_epochs.append(n)
        trace.cycle_types.append(typ)
        t = n
        if n >= nu:
            trace.j_nu = len(trace.alarm_epochs)
            trace.detection_epoch = n
            return trace
    return trace


def multicyclic_run(
    rule: ThresholdRule | MixtureRule,
    model: ObservationModel,
    nu: float,
    rng: Substream,
    n_max: int | None = None,
    max_cycles: int | None = None,
) -> MultiCyclicTrace:
    """Apply ``rule`` repeatedly, restarting the statistic after every alarm.

    Data are pre-change before ``nu`` and post-change from ``nu`` on.  With
    ``nu = inf`` the run stops after ``max_cycles`` cycles.
    """
    change = ChangeSpec(nu)
    if change.never and max_cycles is None:
        raise ValueError("nu = inf needs max_cycles")
    n_max = default_n_max(rule) if n_max is None else n_max
    if isinstance(rule, MixtureRule):
        rules = (rule.rule_1, rule.rule_2)
        choose = lambda: 0 if rng.uniform() < 0.5 else 1  # noqa: E731
    else:
        rules = (rule,)
        choose = lambda: 0  # noqa: E731

    def next_obs(n):
        x = rng.draw(model, change.is_post(n))
        return likelihood_ratio(model, x), log_likelihood_ratio(model, x)

    return _cycles(rules, choose, next_obs, change.nu, n_max, max_cycles)


def multicyclic_from_lrs(rule: ThresholdRule, lrs: Callable[[int], float] | Iterable[float], nu: int,
                         n_max: int = 10**6, max_cycles: int | None = None) -> MultiCyclicTrace:
    """:func:`multicyclic_run` driven by an explicit likelihood-ratio sequence."""
    if callable(lrs):
        get = lrs
    else:
        it = iter(lrs)
        get = lambda n: next(it)  # noqa: E731

    def next_obs(n):
        lr = get(n)
        _check_lr(lr)
        return lr, math.log(lr)

    return _cycles((rule,), lambda: 0, next_obs, ChangeSpec(nu).nu, n_max, max_cycles)


class Detector:
    """Online detector: feed observations one at a time.

    >>> det = Detector(ThresholdRule.sr(50.0), model)
    >>> for x in stream:
    ...     if det.update(x):
    ...         handle_alarm(det.n)
    ...         det.reset()
    """

    def __init__(self, rule: ThresholdRule, model: ObservationModel):
        self.rule = rule
        self.model = model
        self._st = _Stepper(rule)
        self.reset()

    def reset(self) -> None:
        self.n = 0
        self._stat = self._st.init()

    @property
    def statistic(self) -> float:
        """Current statistic on its natural scale (``R_n``, ``R_{rho,n}`` or ``W_n``)."""
        return math.exp(self._stat) if self._st.mode == 1 else self._stat

    @property
    def posterior(self) -> float:
        return shiryaev_posterior(ShiryaevState(self.rule.rho, self.statistic, self.n))

    def update(self, x: float) -> bool:
        self.n += 1
        self._stat = self._st.step(self._stat, likelihood_ratio(self.model, x),
                                   log_likelihood_ratio(self.model, x))
        return self._stat >= self._st.thr


# -- compiled batch simulation -------------------------------------------------


def _nu_int(nu: float) -> np.int64:
    return K.NU_INF if nu == math.inf else np.int64(nu)


def simulate_run_lengths(
    rule: ThresholdRule,
    model: ObservationModel,
    streams: RandomStreams,
    n_reps: int,
    nu: float = math.inf,
    n_max: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Stopping times of ``n_reps`` independent runs; replication ``i`` uses ``streams.substream(i)``.

    Returns ``(N, truncated)``; truncated runs report ``N = n_max``.
    """
    n_max = default_n_max(rule) if n_max is None else int(n_max)
    mode, thr, c = rule.encode()
    out_n = np.empty(n_reps, dtype=np.int64)
    out_tr = np.empty(n_reps, dtype=np.bool_)
    K.run_batch(mode, thr, c, model.code, model.params, _nu_int(nu), streams.root_u64,
                n_reps, n_max, out_n, out_tr)
    return out_n, out_tr


def simulate_multicyclic(
    rule: ThresholdRule | MixtureRule,
    model: ObservationModel,
    nu: int,
    streams: RandomStreams,
    n_reps: int,
    n_max: int | None = None,
) -> dict[str, np.ndarray]:
    """Summaries of ``n_reps`` multi-cyclic runs with the change at ``nu``.

    Keys: ``delay`` (``Q_{J_nu} - nu``), ``age`` (``nu - Q_{J_nu-1}``),
    ``type`` (component of the alarm-covering cycle), ``j`` (``J_nu``),
    ``n0`` (cycles that used the first component) and ``truncated``.
    """
    n_max = default_n_max(rule) if n_max is None else int(n_max)
    if isinstance(rule, MixtureRule):
        enc = [rule.rule_1.encode(), rule.rule_2.encode()]
        mix = True
    else:
        enc = [rule.encode()] * 2
        mix = False
    modes = np.array([e[0] for e in enc], dtype=np.int64)
    thrs = np.array([e[1] for e in enc])
    cs = np.array([e[2] for e in enc])
    out = {
        "delay": np.empty(n_reps, dtype=np.int64),
        "age": np.empty(n_reps, dtype=np.int64),
        "type": np.empty(n_reps, dtype=np.int64),
        "j": np.empty(n_reps, dtype=np.int64),
        "n0": np.empty(n_reps, dtype=np.int64),
        "truncated": np.empty(n_reps, dtype=np.bool_),
    }
    K.multicyclic_batch(modes, thrs, cs, mix, model.code, model.params, np.int64(nu),
                        streams.root_u64, n_reps, n_max, out["delay"], out["age"],
                        out["type"], out["j"], out["n0"], out["truncated"])
    return out
