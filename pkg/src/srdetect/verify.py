"""The verification suite behind ``srdetect verify``.

Each acceptance criterion is a function returning a list of :class:`Check`.
The ``quick`` profile runs the enumeration oracles and toy-model Monte Carlo
checks; ``full`` adds the Gaussian experiments.  A report is one JSON line
per criterion, with no timings, so two runs with the same seed produce the
same bytes.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np

from . import oracles
from .calibration import Calibration, calibrate, estimate_arl2fa
from .detectors import SrState, ShiryaevState, ThresholdRule, shiryaev_posterior, shiryaev_update, sr_update
from .metrics import (
    Estimate,
    GeometricPrior,
    LossSpec,
    OperatingCharacteristics,
    delay_profile,
    expected_loss,
    integral_add_cm,
    mixture_add_experiment,
    operating_characteristics,
    residual_time_dist,
    stationary_add_direct,
    survival,
    tv_distance,
)
from .models import ChangeSpec, ObservationModel, enumerate_paths, likelihood_ratio, path_table
from .detectors import simulate_run_lengths
from .streams import RandomStreams

PROFILES = ("quick", "full")

TOY = ObservationModel("bernoulli", 0.5, 0.75)
TOY_RULE = ThresholdRule.sr(1.4)
GAUSS = ObservationModel("gaussian_mean_shift", 0.0, 1.0)

# (model, rule) pairs on which the two integral-delay estimators must agree
DEFAULT_MATRIX = (
    (TOY, TOY_RULE),
    (GAUSS, ThresholdRule.sr(50.0)),
    (GAUSS, ThresholdRule.cusum(2.8)),
    (GAUSS, ThresholdRule.shiryaev(50.0, 0.01)),
    (ObservationModel("gaussian_mean_shift", 0.0, 0.5), ThresholdRule.sr(30.0)),
    (ObservationModel("bernoulli", 0.2, 0.4), ThresholdRule.sr(30.0)),
    (ObservationModel("exponential_rate", 1.0, 2.0), ThresholdRule.sr(30.0)),
    (ObservationModel("exponential_rate", 1.0, 0.5), ThresholdRule.sr(30.0)),
)

FAMILY_MODELS = (GAUSS, TOY, ObservationModel("exponential_rate", 1.0, 2.0))

MC_REPS = 100_000
ENUM_N = 12


@dataclass
class Check:
    criterion: str
    name: str
    passed: bool
    detail: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.passed = bool(self.passed)

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "detail": jsonable(self.detail)}


def jsonable(x):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(x, dict):
        return {str(k): jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, np.ndarray)):
        return [jsonable(v) for v in x]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer, int)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    return x


def _within(est: Estimate, target: float, n_se: float) -> dict:
    return {
        "estimate": est.value,
        "std_err": est.std_err,
        "target": target,
        "z": (est.value - target) / est.std_err if est.std_err > 0 else (0.0 if est.value == target else math.inf),
        "n_se": n_se,
    }


def _z_ok(d: dict) -> bool:
    return abs(d["z"]) <= d["n_se"]


class Suite:
    """Shared state for one verification run.

    ``update`` is the SR one-step update checked against the sum-of-products
    form; substituting a broken one is how the suite's sensitivity is tested.
    """

    def __init__(self, seed: int, profile: str = "quick",
                 update: Callable[[SrState, float], SrState] = sr_update):
        if profile not in PROFILES:
            raise ValueError(f"profile must be one of {PROFILES}, got {profile!r}")
        self.seed = seed
        self.profile = profile
        self.update = update
        self.streams = RandomStreams(seed).spawn("verify")
        self.calibrations: list[Calibration] = []

    @property
    def full(self) -> bool:
        return self.profile == "full"

    def calibrated(self, kind: str, model: ObservationModel, B: float, key: str, n_reps: int = 10_000) -> Calibration:
        cal = calibrate(kind, model, B, rel_tol=0.02, n_reps=n_reps, rng=self.streams.spawn("calibrate", key))
        self.calibrations.append(cal)
        return cal

    @cached_property
    def toy_oc(self) -> OperatingCharacteristics:
        return operating_characteristics(TOY_RULE, TOY, MC_REPS, self.streams.spawn("toy"), K="auto", nu=20)

    @cached_property
    def toy_table(self) -> tuple[np.ndarray, np.ndarray]:
        paths, _ = path_table(TOY, ChangeSpec(), ENUM_N)
        lrs = oracles.lr_table(TOY, paths)
        rec = np.empty_like(lrs)
        for i, row in enumerate(lrs):
            st = SrState()
            for j, lr in enumerate(row):
                st = self.update(st, float(lr))
                rec[i, j] = st.r
        return lrs, rec

    # -- criteria ----------------------------------------------------------------

    def criterion_1(self) -> list[Check]:
        out = []
        lrs, rec = self.toy_table
        direct = oracles.sr_sum_of_products(lrs)
        rel = float(np.max(np.abs(rec - direct) / direct))
        out.append(Check("1", "sr_recursion_equals_sum_of_products", rel <= 1e-10,
                         {"paths": len(lrs), "n": ENUM_N, "max_rel_err": rel, "tol": 1e-10}))

        _, probs = path_table(TOY, ChangeSpec(), ENUM_N)
        mean = probs @ rec
        err = float(np.max(np.abs(mean - np.arange(1, ENUM_N + 1))))
        out.append(Check("1", "mean_sr_equals_n", err <= 1e-9, {"n": ENUM_N, "max_abs_err": err, "tol": 1e-9}))

        worst = 0.0
        surv_gap = 0.0
        for k in range(1, 7):
            t = oracles.delay_terms(TOY_RULE, TOY, k, ENUM_N)
            worst = max(worst, abs(t["lhs"] - t["unconditional"]))
            surv_gap = max(surv_gap, abs(t["P_k(N>=k)"] - t["P_inf(N>=k)"]))
        out.append(Check("1", "conditional_times_survival_equals_unconditional", worst <= 1e-12 and surv_gap <= 1e-12,
                         {"k_max": 6, "A": 1.4, "max_abs_err": worst, "max_survival_gap": surv_gap}))

        oc = self.toy_oc
        checks = {
            "arl2fa": _within(Estimate(oc.arl2fa.mean, oc.arl2fa.std_err), 2.0, 4),
            "integral_add": _within(oc.integral_add, 2 / 3, 4),
            "stationary_add_direct": _within(oc.stationary_add, 1 / 3, 4),
            "stationary_add_formula": _within(oc.stationary_add_formula, 1 / 3, 4),
        }
        for name, d in checks.items():
            out.append(Check("1", f"toy_{name}", _z_ok(d), d))
        res = oc.residual_time
        m = res.n_reps
        ks = np.arange(1, 9)
        exact = 0.5 ** (ks - 1) / 2
        got = np.pad(res.mass, (0, max(0, 8 - len(res.mass))))[:8]
        se = np.sqrt(exact * (1 - exact) / m)
        z = (got - exact) / se
        out.append(Check("1", "toy_residual_time_mass", bool(np.all(np.abs(z) <= 4)),
                         {"k": ks, "estimate": got, "target": exact, "z": z, "n_se": 4, "n_reps": m}))
        return out

    def criterion_2(self) -> list[Check]:
        if not self.full:
            return []
        rows = {}
        for kind in ("sr", "cusum"):
            cal = self.calibrated(kind, GAUSS, 100.0, f"c2-{kind}", n_reps=MC_REPS)
            prof = delay_profile(cal.rule, GAUSS, MC_REPS, self.streams.spawn("c2", kind), K="auto")
            rows[kind] = (cal, prof)
        sr, cu = rows["sr"][1].integral, rows["cusum"][1].integral
        cse = sr.combined_se(cu)
        detail = {
            "B": 100.0,
            "sr_threshold": rows["sr"][0].rule.threshold,
            "cusum_threshold": rows["cusum"][0].rule.threshold,
            "sr_arl2fa": rows["sr"][1].arl.mean,
            "cusum_arl2fa": rows["cusum"][1].arl.mean,
            "sr_integral_add": sr.to_dict(),
            "cusum_integral_add": cu.to_dict(),
            "combined_se": cse,
        }
        ok = sr.value <= cu.value + 3 * cse and sr.value < cu.value
        return [Check("2", "sr_integral_add_not_above_cusum", ok, detail)]

    def criterion_3(self) -> list[Check]:
        if not self.full:
            return []
        out = []
        for B in (50.0, 100.0):
            cal = self.calibrated("sr", GAUSS, B, f"c3-{B:g}")
            nu = int(10 * B)
            direct = stationary_add_direct(cal.rule, GAUSS, nu, 10_000, self.streams.spawn("c3-direct", int(B)), B=B)
            formula = delay_profile(cal.rule, GAUSS, MC_REPS, self.streams.spawn("c3-formula", int(B))).stationary()
            cse = direct.combined_se(formula)
            out.append(Check("3", f"stationary_direct_vs_formula_B{B:g}", direct.agrees(formula, 2.0),
                             {"A": cal.rule.threshold, "nu": nu, "direct": direct.to_dict(),
                              "formula": formula.to_dict(), "combined_se": cse, "n_se": 2}))
        return out

    def criterion_4(self) -> list[Check]:
        oc = self.toy_oc
        tv = tv_distance(oc.residual_time.mass, oc.weights)
        out = [Check("4", "toy_residual_time_tv", tv <= 0.02, {"tv": tv, "tol": 0.02, "n_reps": MC_REPS})]
        if self.full:
            cal = self.calibrated("sr", GAUSS, 50.0, "c4")
            nu = 500
            res = residual_time_dist(cal.rule, GAUSS, nu, MC_REPS, self.streams.spawn("c4-residual"), B=50.0)
            n, _ = simulate_run_lengths(cal.rule, GAUSS, self.streams.spawn("c4-survival"), MC_REPS)
            w = survival(n, int(n.max()) + 1) / n.mean()
            tv = tv_distance(res.mass, w)
            out.append(Check("4", "gaussian_B50_residual_time_tv", tv <= 0.05,
                             {"A": cal.rule.threshold, "nu": nu, "tv": tv, "tol": 0.05, "n_reps": MC_REPS}))
        return out

    def criterion_5(self) -> list[Check]:
        if not self.full:
            return []
        oc = self.toy_oc
        c = 0.01
        reference = oc.arl2fa.mean - c * oc.integral_add.value
        gaps = {}
        detail = {"c": c, "reference": reference}
        for rho in (1e-2, 1e-3):
            n_reps = int(round(4e5 / rho))
            phi = expected_loss(TOY_RULE, TOY, LossSpec(c, GeometricPrior(rho)), n_reps,
                                self.streams.spawn("c5", repr(rho)))
            scaled = (1 - phi.value) / rho
            gaps[rho] = abs(scaled - reference)
            detail[f"rho={rho:g}"] = {"n_reps": n_reps, "loss": phi.to_dict(), "scaled": scaled,
                                      "scaled_se": phi.std_err / rho, "gap": gaps[rho]}
        return [Check("5", "bayes_limit_gap_shrinks", gaps[1e-3] < gaps[1e-2], detail)]

    def criterion_6(self) -> list[Check]:
        if not self.full:
            return []
        r1 = self.calibrated("sr", GAUSS, 50.0, "c6-1").rule
        r2 = self.calibrated("sr", GAUSS, 150.0, "c6-2").rule
        rep = mixture_add_experiment(r1, r2, GAUSS, 1500, MC_REPS, self.streams.spawn("c6"))
        d = rep.to_dict()
        return [
            Check("6", "mixture_delay_equals_weighted_components", rep.identity_holds(3.0),
                  {**d, "combined_se": rep.add_mixture.combined_se(rep.prediction), "n_se": 3}),
            Check("6", "covering_cycle_type_frequency", rep.fraction_holds(3.0),
                  {"covering_fraction_1": d["covering_fraction_1"], "predicted_fraction_1": d["predicted_fraction_1"],
                   "combined_se": rep.covering_fraction_1.combined_se(rep.predicted_fraction_1), "n_se": 3}),
        ]

    def criterion_7(self) -> list[Check]:
        out = []
        oc = self.toy_oc
        out.append(self._cross("toy_sr_A1.4", oc.integral_add, oc.integral_add_cm))
        if self.full:
            for i, (model, rule) in enumerate(DEFAULT_MATRIX[1:], start=1):
                s = self.streams.spawn("c7", i)
                direct = delay_profile(rule, model, MC_REPS, s).integral
                cm = integral_add_cm(rule, model, MC_REPS, s)
                out.append(self._cross(f"{model.family}{list(model.pre)}->{list(model.post)}_{rule.label}", direct, cm))
        return out

    @staticmethod
    def _cross(name: str, direct: Estimate, cm: Estimate) -> Check:
        return Check("7", name, direct.agrees(cm, 3.0),
                     {"direct": direct.to_dict(), "cm": cm.to_dict(), "combined_se": direct.combined_se(cm), "n_se": 3})

    def criterion_8(self) -> list[Check]:
        if not self.full:
            return []
        out = []
        for model in FAMILY_MODELS:
            self.calibrated("sr", model, 50.0, f"c8-{model.family}")
        bad = [c.record() for c in self.calibrations
               if c.rule.kind == "sr" and c.rule.threshold > c.B * (1 + c.rel_tol)]
        out.append(Check("8", "calibrated_sr_threshold_at_most_B", not bad,
                         {"calibrations": [c.record() for c in self.calibrations if c.rule.kind == "sr"],
                          "violations": bad}))
        for model in FAMILY_MODELS:
            rows = []
            for A in (2.0, 10.0, 50.0):
                est = estimate_arl2fa(ThresholdRule.sr(A), model, MC_REPS, self.streams.spawn("c8", model.family, int(A)))
                rows.append({"A": A, **est.to_dict(), "ok": est.mean >= A - 3 * est.std_err})
            out.append(Check("8", f"arl_at_least_A_{model.family}", all(r["ok"] for r in rows), {"rows": rows}))
        return out

    def criterion_9(self) -> list[Check]:
        if not self.full:
            return []
        import numba

        counts = sorted({1, numba.config.NUMBA_NUM_THREADS})
        before = numba.get_num_threads()
        reports = []
        try:
            for t in counts:
                numba.set_num_threads(t)
                reports.append(run(self.seed, "quick", self.update).text())
        finally:
            numba.set_num_threads(before)
        same = all(r == reports[0] for r in reports)
        return [Check("9", "quick_report_identical_across_threads", same, {"thread_counts": counts})]

    def invariants(self) -> list[Check]:
        out = []
        worst = 0.0
        for nu in list(range(1, ENUM_N + 1)) + [math.inf]:
            _, probs = path_table(TOY, ChangeSpec(nu), ENUM_N)
            worst = max(worst, abs(probs.sum() - 1.0))
        out.append(Check("invariants", "enumeration_probabilities_sum_to_one", worst <= 1e-12,
                         {"n": ENUM_N, "max_abs_err": worst}))
        mean_lr = sum(p * likelihood_ratio(TOY, x[0]) for x, p in enumerate_paths(TOY, ChangeSpec(), 1))
        out.append(Check("invariants", "pre_change_mean_lr_is_one", abs(mean_lr - 1) <= 1e-15, {"mean": mean_lr}))

        rho = 0.1
        paths, _ = path_table(TOY, ChangeSpec(), 8)
        worst = 0.0
        for row in paths:
            st = ShiryaevState(rho)
            for x in row:
                st = shiryaev_update(st, likelihood_ratio(TOY, int(x)))
            worst = max(worst, abs(shiryaev_posterior(st) - oracles.bayes_posterior(TOY, rho, row)))
        out.append(Check("invariants", "shiryaev_posterior_equals_bayes_formula", worst <= 1e-12,
                         {"rho": rho, "n": 8, "max_abs_err": worst}))

        if self.full:
            out.extend(self._ranking())
        return out

    def _ranking(self) -> list[Check]:
        out = []
        for theta in (0.5, 1.0):
            model = ObservationModel("gaussian_mean_shift", 0.0, theta)
            for B in (50.0, 100.0):
                prof = {}
                for kind in ("sr", "cusum"):
                    cal = self.calibrated(kind, model, B, f"rank-{theta}-{B:g}-{kind}", n_reps=MC_REPS)
                    prof[kind] = delay_profile(cal.rule, model, MC_REPS, self.streams.spawn("rank", repr(theta), int(B), kind))
                detail = {}
                ok = True
                for metric in ("integral", "stationary"):
                    s = prof["sr"].integral if metric == "integral" else prof["sr"].stationary()
                    c = prof["cusum"].integral if metric == "integral" else prof["cusum"].stationary()
                    cse = s.combined_se(c)
                    ok &= s.value <= c.value + 3 * cse
                    detail[metric] = {"sr": s.to_dict(), "cusum": c.to_dict(), "combined_se": cse}
                out.append(Check("invariants", f"sr_not_worse_than_cusum_theta{theta:g}_B{B:g}", ok, detail))
        rows = []
        for B in (25.0, 50.0, 100.0, 200.0):
            cal = self.calibrated("sr", GAUSS, B, f"mono-{B:g}")
            st = delay_profile(cal.rule, GAUSS, MC_REPS, self.streams.spawn("mono", int(B))).stationary()
            rows.append({"B": B, **st.to_dict()})
        ok = all(b["value"] >= a["value"] - 3 * math.hypot(a["std_err"], b["std_err"]) for a, b in zip(rows, rows[1:]))
        out.append(Check("invariants", "stationary_add_nondecreasing_in_B", ok, {"rows": rows}))
        return out


CRITERIA = ("1", "2", "3", "4", "5", "6", "7", "8", "9")


@dataclass
class Report:
    profile: str
    seed: int
    checks: list[Check]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def lines(self) -> list[str]:
        groups: dict[str, list[Check]] = {}
        for c in self.checks:
            groups.setdefault(c.criterion, []).append(c)
        return [
            json.dumps({
                "criterion": crit,
                "profile": self.profile,
                "seed": self.seed,
                "passed": all(c.passed for c in cs),
                "checks": [c.to_dict() for c in cs],
            }, sort_keys=False)
            for crit, cs in groups.items()
        ]

    def text(self) -> str:
        return "\n".join(self.lines()) + "\n"


def run_criterion(suite: Suite, criterion: str) -> list[Check]:
    if criterion == "invariants":
        return suite.invariants()
    return getattr(suite, f"criterion_{criterion}")()


def run(seed: int, profile: str = "quick", update: Callable[[SrState, float], SrState] = sr_update) -> Report:
    suite = Suite(seed, profile, update)
    checks: list[Check] = []
    for crit in CRITERIA + ("invariants",):
        checks.extend(run_criterion(suite, crit))
    return Report(profile, seed, checks)
