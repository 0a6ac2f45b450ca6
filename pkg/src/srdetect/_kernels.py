"""Compiled Monte Carlo kernels.

Rule encoding shared by every kernel:

``mode``
    0: SR/Shiryaev statistic in the linear domain, ``stat = (1 + stat) * lr * c``
    with ``c = 1 / (1 - rho)``.
    1: the same statistic carried as its logarithm, ``c = -log(1 - rho)``.
    2: CUSUM, ``stat = max(0, stat + log lr)``; ``c`` unused.
``thr``
    alarm when ``stat >= thr`` (``log A`` in mode 1).

Each replication writes only its own output slot, or its fixed block's row,
so results never depend on the thread count.
"""
import numba as nb

nb.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]
import numpy as np

from .streams import combine, next_normal, next_uniform

NU_INF = np.int64(2**62)
N_BLOCKS = 64

_jit = dict(cache=True, nogil=True)


@nb.njit(inline="always", **_jit)
def observe(fam, p, post, s):
    if fam == 0:
        s, z = next_normal(s)
        x = (p[2] if post else p[0]) + p[1] * z
    elif fam == 1:
        s, u = next_uniform(s)
        x = 1.0 if u < (p[2] if post else p[0]) else 0.0
    else:
        s, u = next_uniform(s)
        x = -np.log(u) / (p[2] if post else p[0])
    return s, x


@nb.njit(inline="always", **_jit)
def llr(fam, p, x):
    if fam == 0:
        return (p[2] - p[0]) * (x - 0.5 * (p[0] + p[2])) / (p[1] * p[1])
    if fam == 1:
        return np.log(p[2] / p[0]) if x == 1.0 else np.log((1.0 - p[2]) / (1.0 - p[0]))
    return np.log(p[2] / p[0]) - (p[2] - p[0]) * x


@nb.njit(inline="always", **_jit)
def lr(fam, p, x):
    if fam == 1:
        return p[2] / p[0] if x == 1.0 else (1.0 - p[2]) / (1.0 - p[0])
    return np.exp(llr(fam, p, x))


@nb.njit(inline="always", **_jit)
def log1pexp(v):
    if v > 0.0:
        return v + np.log1p(np.exp(-v))
    return np.log1p(np.exp(v))


@nb.njit(inline="always", **_jit)
def init_stat(mode):
    return -np.inf if mode == 1 else 0.0


@nb.njit(inline="always", **_jit)
def update(mode, c, stat, fam, p, x):
    if mode == 0:
        return (1.0 + stat) * lr(fam, p, x) * c
    if mode == 1:
        return log1pexp(stat) + llr(fam, p, x) + c
    return max(0.0, stat + llr(fam, p, x))


@nb.njit(**_jit)
def run(mode, thr, c, fam, p, s, stat, n, nu, n_cap):
    """Continue a run whose last consumed observation was ``n``.

    Returns ``(s, n_stop, truncated)``; observation ``i`` is post-change iff
    ``i >= nu``.  ``n_cap`` is an absolute time limit.
    """
    while True:
        if n >= n_cap:
            return s, n, True
        n += 1
        s, x = observe(fam, p, n >= nu, s)
        stat = update(mode, c, stat, fam, p, x)
        if stat >= thr:
            return s, n, False


@nb.njit(parallel=True, **_jit)
def run_batch(mode, thr, c, fam, p, nu, root, n_reps, n_max, out_n, out_trunc):
    for i in nb.prange(n_reps):
        s = combine(root, i)
        _, stop, tr = run(mode, thr, c, fam, p, s, init_stat(mode), 0, nu, n_max)
        out_n[i] = stop
        out_trunc[i] = tr


@nb.njit(parallel=True, **_jit)
def cm_batch(mode, thr, c, fam, p, root, n_reps, n_max, out_n, out_trunc, out_sum):
    """Pre-change runs accumulating the SR statistic over ``n < N``."""
    for i in nb.prange(n_reps):
        s = combine(root, i)
        stat = init_stat(mode)
        r = 0.0
        acc = 0.0
        n = 0
        tr = False
        while True:
            if n >= n_max:
                tr = True
                break
            n += 1
            s, x = observe(fam, p, False, s)
            stat = update(mode, c, stat, fam, p, x)
            if stat >= thr:
                break
            r = (1.0 + r) * lr(fam, p, x)
            acc += r
        out_n[i] = n
        out_trunc[i] = tr
        out_sum[i] = acc


@nb.njit(parallel=True, **_jit)
def integral_batch(mode, thr, c, fam, p, root_pre, root_post, n_reps, K, n_max,
                   out_total, out_trunc, blk_sum, blk_sq, blk_cnt):
    """Delays ``(N_k - k)^+`` for every change point ``k <= K``.

    The pre-change prefix ``X_1..X_{k-1}`` is the replication's single
    pre-change path (same stream as :func:`run_batch` with ``root_pre``);
    each ``k`` continues from that prefix on its own post-change branch,
    which may run for up to ``n_max`` further observations.
    """
    n_blocks = blk_sum.shape[0]
    for b in nb.prange(n_blocks):
        lo = b * n_reps // n_blocks
        hi = (b + 1) * n_reps // n_blocks
        for i in range(lo, hi):
            s = combine(root_pre, i)
            rep_post = combine(root_post, i)
            stat = init_stat(mode)
            total = 0.0
            tr = False
            for k in range(1, K + 1):
                # here N >= k: no alarm among the first k - 1 observations
                sb = combine(rep_post, k)
                _, stop, btr = run(mode, thr, c, fam, p, sb, stat, k - 1, k, k - 1 + n_max)
                tr = tr or btr
                d = float(stop - k)
                total += d
                blk_sum[b, k - 1] += d
                blk_sq[b, k - 1] += d * d
                blk_cnt[b, k - 1] += 1
                s, x = observe(fam, p, False, s)
                stat = update(mode, c, stat, fam, p, x)
                if stat >= thr:
                    break
            out_total[i] = total
            out_trunc[i] = tr


@nb.njit(parallel=True, **_jit)
def multicyclic_batch(modes, thrs, cs, mix, fam, p, nu, root, n_reps, n_max,
                      out_delay, out_age, out_type, out_j, out_n0, out_trunc):
    """Repeated application; the rule restarts from zero after every alarm.

    With ``mix`` set, each cycle first draws one uniform and uses rule 0 if it
    is below 1/2, rule 1 otherwise.
    """
    for i in nb.prange(n_reps):
        s = combine(root, i)
        t = 0
        j = 0
        n0 = 0
        while True:
            j += 1
            typ = 0
            if mix:
                s, u = next_uniform(s)
                typ = 0 if u < 0.5 else 1
            if typ == 0:
                n0 += 1
            out_n0[i] = n0
            m = modes[typ]
            s, stop, tr = run(m, thrs[typ], cs[typ], fam, p, s, init_stat(m), t, nu, t + n_max)
            if tr:
                out_trunc[i] = True
                out_delay[i] = -1
                out_age[i] = nu - t
                out_type[i] = typ
                out_j[i] = j
                break
            if stop >= nu:
                out_trunc[i] = False
                out_delay[i] = stop - nu
                out_age[i] = nu - t
                out_type[i] = typ
                out_j[i] = j
                break
            t = stop


@nb.njit(parallel=True, **_jit)
def loss_batch(mode, thr, c, fam, p, rho, cost, root, n_reps, n_max,
               blk_sum, blk_sq, blk_trunc):
    """Bayes loss ``1{N < nu} + cost * (N - nu)^+`` with geometric ``nu``."""
    n_blocks = blk_sum.shape[0]
    log_q = np.log1p(-rho)
    for b in nb.prange(n_blocks):
        lo = b * n_reps // n_blocks
        hi = (b + 1) * n_reps // n_blocks
        acc = 0.0
        acc2 = 0.0
        ntr = 0
        for i in range(lo, hi):
            s = combine(root, i)
            s, u = next_uniform(s)
            nu = np.int64(1 + np.floor(np.log(u) / log_q))
            _, stop, tr = run(mode, thr, c, fam, p, s, init_stat(mode), 0, nu, n_max)
            if tr:
                ntr += 1
            if stop < nu:
                loss = 1.0
            else:
                loss = cost * (stop - nu)
            acc += loss
            acc2 += loss * loss
        blk_sum[b] = acc
        blk_sq[b] = acc2
        blk_trunc[b] = ntr
