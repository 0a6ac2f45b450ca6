"""Exact answers for Bernoulli models by enumerating every binary path.

All quantities here are computed without sampling, on the ``2**n`` paths of
length ``n`` returned by :func:`srdetect.models.path_table`.  Stopping times
that have not fired by ``n`` are censored at ``n``, so delay quantities are
exact for the truncated time ``min(N, n)`` and converge as ``n`` grows.
"""
from __future__ import annotations

import numpy as np

from .detectors import ThresholdRule, _Stepper
from .models import ChangeSpec, ObservationModel, path_table


def lr_table(model: ObservationModel, paths: np.ndarray) -> np.ndarray:
    p0, p1 = model.params[0], model.params[2]
    return np.where(paths == 1, p1 / p0, (1 - p1) / (1 - p0))


def sr_recursive(lrs: np.ndarray, plus_one: bool = True) -> np.ndarray:
    """``R_1..R_n`` row-wise via ``R_n = (1 + R_{n-1}) lr_n``.

    ``plus_one=False`` drops the ``1 +`` and exists only so the verification
    suite can show that it notices a broken recursion.
    """
    r = np.zeros(lrs.shape[0])
    out = np.empty_like(lrs, dtype=np.float64)
    for j in range(lrs.shape[1]):
        r = ((1.0 + r) if plus_one else r) * lrs[:, j]
        out[:, j] = r
    return out


def sr_sum_of_products(lrs: np.ndarray) -> np.ndarray:
    """``R_n = sum_{k<=n} prod_{i=k}^n lr_i`` evaluated term by term."""
    m, n = lrs.shape
    out = np.zeros((m, n))
    for t in range(n):
        for k in range(t + 1):
            out[:, t] += np.prod(lrs[:, k : t + 1], axis=1)
    return out


def stopping_times(rule: ThresholdRule, model: ObservationModel, paths: np.ndarray) -> np.ndarray:
    """First alarm on each path, ``n + 1`` if the rule never fires within the path."""
    st = _Stepper(rule)
    lrs = lr_table(model, paths)
    stat = np.full(paths.shape[0], st.init())
    stop = np.full(paths.shape[0], paths.shape[1] + 1, dtype=np.int64)
    for j in range(paths.shape[1]):
        lr = lrs[:, j]
        if st.mode == 0:
            stat = (1.0 + stat) * lr * st.c
        elif st.mode == 1:
            stat = np.logaddexp(0.0, stat) + np.log(lr) + st.c
        else:
            stat = np.maximum(0.0, stat + np.log(lr))
        fired = (stat >= st.thr) & (stop > paths.shape[1])
        stop[fired] = j + 1
    return stop


def survival(rule: ThresholdRule, model: ObservationModel, n: int, nu: float = np.inf) -> np.ndarray:
    """``P_nu(N >= k)`` for ``k = 1..n``."""
    paths, probs = path_table(model, ChangeSpec(nu), n)
    stop = stopping_times(rule, model, paths)
    return np.array([probs[stop >= k].sum() for k in range(1, n + 1)])


def delay_terms(rule: ThresholdRule, model: ObservationModel, k: int, n: int) -> dict:
    """Both sides of ``E_k(N-k | N>=k) P_inf(N>=k) = E_k(N-k)^+`` for ``min(N, n)``."""
    paths, p_k = path_table(model, ChangeSpec(k), n)
    _, p_inf = path_table(model, ChangeSpec(), n)
    stop = np.minimum(stopping_times(rule, model, paths), n)
    alive = stop >= k
    pk_alive = p_k[alive].sum()
    pinf_alive = p_inf[alive].sum()
    unconditional = float((p_k * np.maximum(stop - k, 0)).sum())
    conditional = float((p_k[alive] * (stop[alive] - k)).sum() / pk_alive) if pk_alive > 0 else 0.0
    return {
        "P_k(N>=k)": float(pk_alive),
        "P_inf(N>=k)": float(pinf_alive),
        "conditional": conditional,
        "unconditional": unconditional,
        "lhs": conditional * float(pinf_alive),
    }


def mean_sr(model: ObservationModel, n: int) -> np.ndarray:
    """``E_inf R_j`` for ``j = 1..n``."""
    paths, probs = path_table(model, ChangeSpec(), n)
    return probs @ sr_recursive(lr_table(model, paths))


def bayes_posterior(model: ObservationModel, rho: float, path) -> float:
    """``P(nu <= n | X_1..X_n)`` under a geometric(rho) prior, by Bayes' formula over ``nu``."""
    path = np.asarray(path)
    n = len(path)
    p0, p1 = model.params[0], model.params[2]
    f0 = np.where(path == 1, p0, 1 - p0)
    f1 = np.where(path == 1, p1, 1 - p1)
    joint_before = 0.0
    for nu in range(1, n + 1):
        prior = rho * (1 - rho) ** (nu - 1)
        joint_before += prior * np.prod(f0[: nu - 1]) * np.prod(f1[nu - 1 :])
    joint_after = (1 - rho) ** n * np.prod(f0)
    return float(joint_before / (joint_before + joint_after))
