"""Command-line harness: ``srdetect {calibrate,oc,compare,multicyclic,verify}``.

Metric tables are CSV with the columns in :data:`CSV_COLUMNS`; summaries are
JSON.  With ``--out PATH`` the CSV goes to ``PATH`` and the summary next to it
with a ``.json`` suffix; otherwise the CSV (or JSON record, for ``calibrate``
and ``verify``) is written to standard output.

Exit codes: 0 success, 1 usage, 2 numerical or calibration failure,
3 verification failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

from . import verify as verify_mod
from .verify import jsonable
from .calibration import Calibration, calibrate
from .config import ConfigError, RunConfig, from_mapping, load
from .detectors import MixtureRule, ThresholdRule
from .errors import CalibrationError, CalibrationMismatchError, DomainError, KTooLargeError
from .metrics import (
    HORIZON_SURVIVAL,
    MIN_ACCEPTANCE,
    compare_rules,
    mixture_add_experiment,
    operating_characteristics,
    residual_time_dist,
    stationary_add_direct,
)
from .streams import RandomStreams

CSV_COLUMNS = ("rule", "metric", "k", "estimate", "std_err", "n_reps", "seed")

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL, EXIT_VERIFY = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _num(x) -> str:
    if x is None or x == "":
        return ""
    if isinstance(x, int):
        return str(x)
    return format(float(x), ".17g")


class Table:
    def __init__(self, seed: int):
        self.seed = seed
        self.rows: list[tuple] = []

    def add(self, rule: str, metric: str, estimate, std_err=None, n_reps=None, k=None) -> None:
        self.rows.append((rule, metric, "" if k is None else str(int(k)), _num(estimate), _num(std_err),
                          "" if n_reps is None else str(int(n_reps)), str(self.seed)))

    def text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        w.writerows(self.rows)
        return buf.getvalue()


def _dump(obj) -> str:
    return json.dumps(jsonable(obj), indent=2) + "\n"


def _emit(args, table: Table | None, summary: dict) -> None:
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        if table is None:
            out.write_text(_dump(summary))
        else:
            out.write_text(table.text())
            out.with_suffix(".json").write_text(_dump(summary))
    else:
        sys.stdout.write(_dump(summary) if table is None else table.text())


# -- configuration -----------------------------------------------------------------


def _config(args) -> RunConfig:
    overrides = {"seed": args.seed}
    if args.config:
        cfg = load(args.config, overrides)
    else:
        cfg = from_mapping({k: v for k, v in overrides.items() if v is not None})
    if cfg.seed is None:
        raise UsageError("a seed is required: pass --seed or set 'seed' in the config")
    if not 0 <= int(cfg.seed) < 2**64:
        raise UsageError(f"seed must be an unsigned 64-bit integer, got {cfg.seed}")
    if args.out is None and cfg.out is not None:
        args.out = cfg.out
    return cfg


def _streams(cfg: RunConfig) -> RandomStreams:
    return RandomStreams(int(cfg.seed))


def _resolve_rule(cfg: RunConfig, streams: RandomStreams, kind: str | None = None) -> tuple[ThresholdRule, Calibration | None]:
    cfg.require_point()
    kind = kind or cfg.rule
    if cfg.threshold is not None:
        return ThresholdRule(kind, float(cfg.threshold), cfg.rho), None
    cal = calibrate(kind, cfg.model(), float(cfg.B), cfg.rel_tol, cfg.calib_reps,
                    streams.spawn("calibrate", kind), cfg.rho)
    return cal.rule, cal


# -- subcommands -------------------------------------------------------------------


def cmd_calibrate(args) -> int:
    cfg = _config(args)
    if cfg.B is None:
        raise UsageError("calibrate needs a target ARL 'B'")
    if cfg.threshold is not None:
        raise UsageError("calibrate takes 'B', not a fixed 'threshold'")
    cal = calibrate(cfg.rule, cfg.model(), float(cfg.B), cfg.rel_tol, cfg.n_reps,
                    _streams(cfg).spawn("calibrate", cfg.rule), cfg.rho)
    rec = cal.record()
    text = json.dumps(jsonable(rec)) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_oc(args) -> int:
    cfg = _config(args)
    streams = _streams(cfg)
    rule, cal = _resolve_rule(cfg, streams)
    nu = None if math.isinf(cfg.nu) else int(cfg.nu)
    oc = operating_characteristics(rule, cfg.model(), cfg.n_reps, streams.spawn("oc"), cfg.K, nu)
    t = Table(int(cfg.seed))
    lab, n = rule.label, oc.n_reps
    t.add(lab, "arl2fa", oc.arl2fa.mean, oc.arl2fa.std_err, n)
    t.add(lab, "integral_add", oc.integral_add.value, oc.integral_add.std_err, n)
    t.add(lab, "integral_add_cm", oc.integral_add_cm.value, oc.integral_add_cm.std_err, n)
    t.add(lab, "stationary_add_direct", oc.stationary_add.value, oc.stationary_add.std_err, oc.residual_time.n_reps)
    t.add(lab, "stationary_add_formula", oc.stationary_add_formula.value, oc.stationary_add_formula.std_err, n)
    t.add(lab, "sup_conditional_add", oc.sup_conditional_add, None, n)
    t.add(lab, "tail_bound", oc.tail_bound, None, n)
    tail_from = None
    for i in range(oc.K):
        k = i + 1
        acc = oc.acceptance[i]
        t.add(lab, "survival", acc, math.sqrt(acc * (1 - acc) / n), n, k)
        t.add(lab, "weight", oc.weights[i], None, n, k)
        if acc >= MIN_ACCEPTANCE and math.isfinite(oc.conditional_add_se[i]):
            t.add(lab, "conditional_add", oc.conditional_add[i], oc.conditional_add_se[i], n, k)
        elif tail_from is None:
            tail_from = k
    m = oc.residual_time.n_reps
    for i, p in enumerate(oc.residual_time.mass):
        t.add(lab, "residual_time", p, math.sqrt(p * (1 - p) / m), m, i + 1)
    summary = {
        "command": "oc",
        "seed": int(cfg.seed),
        "model": cfg.model().to_dict(),
        **oc.summary(),
        "K_auto": cfg.K == "auto",
        "K_survival_below_level": bool(oc.acceptance[-1] < HORIZON_SURVIVAL) if cfg.K == "auto" else None,
        "conditional_add_tail_from_k": tail_from,
        "identity_residual": oc.identity_residual(),
        "calibration": cal.record() if cal else None,
        "class_note": "rules calibrated to B within rel_tol stand in for the class E_inf N >= B",
    }
    _emit(args, t, summary)
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = _config(args)
    if len(cfg.rules) < 2:
        raise UsageError("compare needs at least two entries in 'rules'")
    if cfg.B is None:
        raise UsageError("compare needs the common target ARL 'B'")
    streams = _streams(cfg)
    model = cfg.model()
    rules, cals = [], []
    if cfg.thresholds is not None:
        if len(cfg.thresholds) != len(cfg.rules):
            raise UsageError("'thresholds' must have one entry per rule")
        rules = [ThresholdRule(k, float(a), cfg.rho) for k, a in zip(cfg.rules, cfg.thresholds)]
    else:
        for i, kind in enumerate(cfg.rules):
            cal = calibrate(kind, model, float(cfg.B), cfg.rel_tol, cfg.calib_reps,
                            streams.spawn("calibrate", kind, i), cfg.rho)
            rules.append(cal.rule)
            cals.append(cal.record())
    report = compare_rules(rules, model, float(cfg.B), cfg.K, cfg.n_reps, streams.spawn("compare"), cfg.rel_tol)
    t = Table(int(cfg.seed))
    ranking = report.ranking()
    for i, row in enumerate(report.rows):
        lab = f"{i}:{row.rule.label}"
        t.add(lab, "arl2fa", row.arl2fa.mean, row.arl2fa.std_err, cfg.n_reps)
        t.add(lab, "integral_add", row.integral_add.value, row.integral_add.std_err, cfg.n_reps)
        t.add(lab, "stationary_add", row.stationary_add.value, row.stationary_add.std_err, cfg.n_reps)
        t.add(lab, "tail_bound", row.tail_bound, None, cfg.n_reps)
        t.add(lab, "rank", ranking.index(row) + 1)
        t.add(lab, "beats_sr", int(row.beats_sr))
    summary = {
        "command": "compare",
        "seed": int(cfg.seed),
        "B": float(cfg.B),
        "model": model.to_dict(),
        "ranking": [r.rule.label for r in ranking],
        "violations": [r.rule.label for r in report.violations],
        "calibrations": cals,
    }
    _emit(args, t, summary)
    return EXIT_OK


def cmd_multicyclic(args) -> int:
    cfg = _config(args)
    if math.isinf(cfg.nu):
        raise UsageError("multicyclic needs a finite change point 'nu'")
    nu = int(cfg.nu)
    streams = _streams(cfg)
    model = cfg.model()
    t = Table(int(cfg.seed))
    summary = {"command": "multicyclic", "seed": int(cfg.seed), "nu": nu, "model": model.to_dict()}
    pair = cfg.B_mixture or (cfg.thresholds if cfg.rule == "sr" and cfg.thresholds else None)
    if pair is not None:
        if len(pair) != 2:
            raise UsageError("a mixture needs exactly two entries")
        if cfg.B_mixture:
            comps = [calibrate("sr", model, float(b), cfg.rel_tol, cfg.calib_reps, streams.spawn("calibrate", i)).rule
                     for i, b in enumerate(pair)]
        else:
            comps = [ThresholdRule.sr(float(a)) for a in pair]
        rep = mixture_add_experiment(comps[0], comps[1], model, nu, cfg.n_reps, streams.spawn("multicyclic"))
        lab = MixtureRule(*comps).label
        for name in ("add_mixture", "prediction", "add_1", "add_2", "covering_fraction_1", "predicted_fraction_1"):
            e = getattr(rep, name)
            t.add(lab, name, e.value, e.std_err, rep.n_reps)
        t.add(lab, "arl_1", rep.arl_1.mean, rep.arl_1.std_err, rep.arl_1.n_reps)
        t.add(lab, "arl_2", rep.arl_2.mean, rep.arl_2.std_err, rep.arl_2.n_reps)
        summary.update(rep.to_dict(), rule=lab, identity_holds=rep.identity_holds(), fraction_holds=rep.fraction_holds())
    else:
        rule, cal = _resolve_rule(cfg, streams)
        B = float(cfg.B) if cfg.B is not None else None
        s = streams.spawn("multicyclic")
        st = stationary_add_direct(rule, model, nu, cfg.n_reps, s, B=B)
        res = residual_time_dist(rule, model, nu, cfg.n_reps, s, B=B)
        t.add(rule.label, "stationary_add_direct", st.value, st.std_err, res.n_reps)
        for i, p in enumerate(res.mass):
            t.add(rule.label, "residual_time", p, math.sqrt(p * (1 - p) / res.n_reps), res.n_reps, i + 1)
        summary.update(rule=rule.to_dict(), stationary_add_direct=st.to_dict(), n_reps=res.n_reps,
                       calibration=cal.record() if cal else None)
    _emit(args, t, summary)
    return EXIT_OK


def cmd_verify(args) -> int:
    if args.seed is None:
        raise UsageError("verify needs --seed")
    report = verify_mod.run(int(args.seed), args.profile)
    text = report.text()
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return EXIT_OK if report.passed else EXIT_VERIFY


COMMANDS = {
    "calibrate": cmd_calibrate,
    "oc": cmd_oc,
    "compare": cmd_compare,
    "multicyclic": cmd_multicyclic,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    common.add_argument("--threads", type=int, help="worker threads (default: all logical cores)")
    common.add_argument("--out", help="output path")
    parser = _Parser(prog="srdetect", description="Change detection experiments and verification.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in ("calibrate", "oc", "compare", "multicyclic"):
        p = sub.add_parser(name, parents=[common])
        p.add_argument("--config", help="TOML experiment configuration")
    p = sub.add_parser("verify", parents=[common])
    p.add_argument("--profile", choices=("quick", "full"), default="quick")
    return parser


def _set_threads(n: int | None) -> None:
    if n is None:
        return
    if n < 1:
        raise UsageError("--threads must be >= 1")
    import numba

    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        _set_threads(args.threads)
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError, FileNotFoundError) as exc:
        print(f"srdetect {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CalibrationError, CalibrationMismatchError, KTooLargeError, DomainError, FloatingPointError) as exc:
        print(f"srdetect {args.command}: {exc}", file=sys.stderr)
        diag = getattr(exc, "diagnostic", None)
        if diag:
            print(json.dumps(jsonable(diag)), file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"srdetect {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
