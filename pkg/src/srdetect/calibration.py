"""ARL2FA estimation and threshold calibration.

Calibration bisects on the threshold with common random numbers: every
evaluation replays the same replication streams, and since each run's
stopping time is nondecreasing in the threshold, so is the estimated ARL
curve.  The search is therefore deterministic and never sees noise-induced
non-monotonicity.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .detectors import ThresholdRule, default_n_max, simulate_run_lengths
from .errors import CalibrationError, CalibrationUnreliableError
from .models import ObservationModel
from .streams import as_streams

__all__ = [
    "MAX_TRUNCATED_FRACTION",
    "ArlEstimate",
    "Calibration",
    "estimate_arl2fa",
    "arl_from_run_lengths",
    "calibrate",
    "calibrate_threshold",
]

MAX_TRUNCATED_FRACTION = 1e-3


@dataclass(frozen=True)
class ArlEstimate:
    mean: float
    std_err: float
    n_reps: int
    truncated_fraction: float = 0.0

    def contains(self, value: float, n_se: float = 4.0) -> bool:
        return abs(self.mean - value) <= n_se * self.std_err

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "std_err": self.std_err,
            "n_reps": self.n_reps,
            "truncated_fraction": self.truncated_fraction,
        }


def arl_from_run_lengths(n: np.ndarray, truncated: np.ndarray) -> ArlEstimate:
    m = len(n)
    return ArlEstimate(
        mean=float(n.mean()),
        std_err=float(n.std(ddof=1) / math.sqrt(m)),
        n_reps=m,
        truncated_fraction=float(truncated.mean()),
    )


def estimate_arl2fa(
    rule: ThresholdRule,
    model: ObservationModel,
    n_reps: int,
    rng,
    n_max: int | None = None,
    strict: bool = True,
) -> ArlEstimate:
    """Mean run length with no change, over ``n_reps`` independent runs.

    Truncated runs enter the mean at ``n_max``.  With ``strict`` set, a
    truncated fraction above ``MAX_TRUNCATED_FRACTION`` raises
    :class:`CalibrationUnreliableError`.
    """
    if n_reps < 2:
        raise ValueError("n_reps must be >= 2")
    streams = as_streams(rng).spawn("arl2fa")
    n, tr = simulate_run_lengths(rule, model, streams, n_reps, n_max=n_max)
    est = arl_from_run_lengths(n, tr)
    if strict and est.truncated_fraction > MAX_TRUNCATED_FRACTION:
        raise CalibrationUnreliableError(
            f"{est.truncated_fraction:.2%} of runs hit the cap n_max; estimate is unreliable",
            {"rule": rule.to_dict(), "estimate": est.to_dict()},
        )
    return est


@dataclass
class Calibration:
    rule: ThresholdRule
    estimate: ArlEstimate
    B: float
    rel_tol: float
    n_reps: int
    seed: int
    history: list[tuple[float, float]] = field(default_factory=list)

    @property
    def within_tolerance(self) -> bool:
        return abs(self.estimate.mean - self.B) <= self.rel_tol * self.B

    def record(self) -> dict:
        """The JSON record emitted by the ``calibrate`` subcommand."""
        rec = {
            "kind": self.rule.kind,
            "B": self.B,
            "A": self.rule.threshold,
            "arl_estimate": self.estimate.mean,
            "std_err": self.estimate.std_err,
            "n_reps": self.n_reps,
            "seed": self.seed,
        }
        if self.rule.kind == "shiryaev":
            rec["rho"] = self.rule.rho
        return rec


def calibrate(
    kind: str,
    model: ObservationModel,
    B: float,
    rel_tol: float = 0.02,
    n_reps: int = 10_000,
    rng=0,
    rho: float = 0.0,
    max_iter: int = 200,
    refine_tol: float | None = None,
) -> Calibration:
    """Find a threshold whose estimated ARL2FA lies within ``rel_tol`` of ``B``.

    Bisection keeps going past the first acceptable point until the estimate
    is within ``refine_tol`` (default ``rel_tol / 10``) of ``B`` or the
    bracket collapses, and returns the closest acceptable threshold seen.
    """
    if not B >= 1:
        raise ValueError(f"target ARL B must be >= 1, got {B!r}")
    if not 0 < rel_tol <= 0.1:
        raise ValueError(f"rel_tol must lie in (0, 0.1], got {rel_tol!r}")
    streams = as_streams(rng)
    n_max = default_n_max(None, B)
    lo_ok, hi_ok = B * (1 - rel_tol), B * (1 + rel_tol)
    refine_tol = rel_tol / 10 if refine_tol is None else refine_tol
    history: list[tuple[float, float]] = []
    best: list[float] = []
    cache: dict[float, ArlEstimate] = {}

    def rule_at(a: float) -> ThresholdRule:
        return ThresholdRule(kind, a, rho)

    def arl(a: float) -> ArlEstimate:
        if a not in cache:
            cache[a] = estimate_arl2fa(rule_at(a), model, n_reps, streams, n_max=n_max, strict=False)
            history.append((a, cache[a].mean))
        return cache[a]

    def diag() -> dict:
        return {"kind": kind, "B": B, "rel_tol": rel_tol, "n_reps": n_reps, "evaluations": list(history)}

    def done(a: float) -> Calibration:
        est = arl(a)
        if est.truncated_fraction > MAX_TRUNCATED_FRACTION:
            raise CalibrationUnreliableError(
                f"{est.truncated_fraction:.2%} of calibration runs truncated at n_max={n_max}", diag()
            )
        return Calibration(rule_at(a), est, B, rel_tol, n_reps, streams.seed, history)

    geometric = kind != "cusum"
    # lower end: threshold 0 stops at n = 1 for every rule, i.e. ARL 1
    lo, lo_arl = 0.0, 1.0
    hi = B if geometric else max(math.log(B), 1.0)
    if geometric:
        a = 1.0
        while a > 1e-12:
            m = arl(a).mean
            if m <= hi_ok:
                lo, lo_arl = a, m
                break
            a /= 2
        if lo == 0.0 and B > 1:
            raise CalibrationError("no threshold gives an ARL as small as B", diag())
        if lo < 1.0 and lo_ok <= lo_arl:
            return done(lo)
        hi = max(hi, lo * 2)
    for _ in range(200):
        if arl(hi).mean >= lo_ok:
            break
        lo, lo_arl, hi = hi, arl(hi).mean, hi * 2
    else:
        raise CalibrationError("upper bracket search did not reach B", diag())
    if lo_ok <= arl(hi).mean <= hi_ok:
        best.append(hi)

    for _ in range(max_iter):
        mid = math.sqrt(lo * hi) if geometric and lo > 0 else 0.5 * (lo + hi)
        if not lo < mid < hi:
            break
        m = arl(mid).mean
        if m < lo_arl or m > arl(hi).mean:
            raise CalibrationError("estimated ARL is not monotone in the threshold", diag())
        if lo_ok <= m <= hi_ok and (not best or abs(m - B) < abs(arl(best[0]).mean - B)):
            best[:] = [mid]
        if abs(m - B) <= refine_tol * B:
            break
        if m > B:
            hi = mid
        else:
            lo, lo_arl = mid, m
    if best:
        return done(best[0])
    raise CalibrationError(
        f"bisection collapsed without an ARL within {rel_tol:.1%} of B={B}; "
        "the ARL curve jumps over the target (discrete model) or n_reps is too small",
        diag(),
    )


def calibrate_threshold(
    kind: str,
    model: ObservationModel,
    B: float,
    rel_tol: float = 0.02,
    n_reps: int = 10_000,
    rng=0,
    rho: float = 0.0,
) -> ThresholdRule:
    """Rule of the given kind with ``E_inf N`` estimated within ``rel_tol`` of ``B``."""
    return calibrate(kind, model, B, rel_tol, n_reps, rng, rho).rule
