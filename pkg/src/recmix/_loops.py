"""Hot inner loops, in a numba flavour and a vectorized numpy flavour.

All loops work on probability masses over support points (density value
times measure weight) and on scaled likelihood rows whose maximum is 1, so
the measure never appears here.  ``BACKEND`` names the flavour in use; both
flavours are always importable so they can be compared.
"""

import numpy as np

from ._accel import USE_NUMBA, optional_njit, prange

BACKEND = "numba" if USE_NUMBA else "numpy"


# ---------------------------------------------------------------- recursion

@optional_njit(cache=True, fastmath=False)
def _re_fold_nb(rows, order, weights, mass0, checkpoints, snaps, marg):
    m = mass0.size
    cur = mass0.copy()
    c = 0
    for i in range(order.size):
        r = rows[order[i]]
        s = 0.0
        for j in range(m):
            s += r[j] * cur[j]
        marg[i] = s
        if not s > 0.0:
            return cur, i
        a = 1.0 - weights[i]
        b = weights[i] / s
        for j in range(m):
            cur[j] = cur[j] * (a + b * r[j])
        while c < checkpoints.size and checkpoints[c] == i + 1:
            snaps[c, :] = cur
            c += 1
    return cur, -1


def _re_fold_np(rows, order, weights, mass0, checkpoints, snaps, marg):
    cur = mass0.copy()
    c = 0
    for i in range(order.size):
        r = rows[order[i]]
        s = float(r @ cur)
        marg[i] = s
        if not s > 0.0:
            return cur, i
        cur *= (1.0 - weights[i]) + (weights[i] / s) * r
        while c < checkpoints.size and checkpoints[c] == i + 1:
            snaps[c, :] = cur
            c += 1
    return cur, -1


def re_fold(rows, order, weights, mass0, checkpoints=None, backend=None):
    """One recursive pass.  Returns ``(mass, scaled_marginals, snapshots,
    failed_step)``; ``failed_step`` is -1 on success."""
    n, m = order.size, mass0.size
    checkpoints = np.zeros(0, np.int64) if checkpoints is None else np.asarray(checkpoints, np.int64)
    snaps = np.zeros((checkpoints.size, m))
    marg = np.zeros(n)
    fn = _pick(_re_fold_nb, _re_fold_np, backend)
    mass, fail = fn(rows, np.asarray(order, np.int64), np.asarray(weights, float),
                    np.asarray(mass0, float), checkpoints, snaps, marg)
    return mass, marg, snaps, int(fail)


@optional_njit(cache=True, parallel=True)
def _pare_fold_nb(rows, perms, weights, mass0, out, fails):
    k_total, n = perms.shape
    m = mass0.size
    for k in prange(k_total):
        cur = mass0.copy()
        fails[k] = -1
        for i in range(n):
            r = rows[perms[k, i]]
            s = 0.0
            for j in range(m):
                s += r[j] * cur[j]
            if not s > 0.0:
                fails[k] = i
                break
            a = 1.0 - weights[i]
            b = weights[i] / s
            for j in range(m):
                cur[j] = cur[j] * (a + b * r[j])
        out[k, :] = cur


def _pare_fold_np(rows, perms, weights, mass0, out, fails):
    k_total, n = perms.shape
    cur = np.repeat(mass0[None, :], k_total, axis=0)
    fails[:] = -1
    alive = np.ones(k_total, dtype=bool)
    for i in range(n):
        r = rows[perms[:, i]]
        s = np.einsum("km,km->k", r, cur)
        dead = alive & ~(s > 0.0)
        if np.any(dead):
            fails[dead] = i
            alive &= ~dead
        s = np.where(alive, s, 1.0)
        w = np.where(alive, weights[i], 0.0)
        cur *= (1.0 - w)[:, None] + (w / s)[:, None] * r
    out[:] = cur


def pare_fold(rows, perms, weights, mass0, backend=None):
    """Independent recursive passes, one per row of ``perms``.  Returns the
    per-permutation final masses and failure steps (-1 = ok)."""
    perms = np.ascontiguousarray(perms, dtype=np.int64)
    out = np.empty((perms.shape[0], mass0.size))
    fails = np.empty(perms.shape[0], np.int64)
    fn = _pick(_pare_fold_nb, _pare_fold_np, backend)
    fn(rows, perms, np.asarray(weights, float), np.asarray(mass0, float), out, fails)
    return out, fails


# ---------------------------------------------------------------- npb / SIS

@optional_njit(cache=True)
def _sis_one_nb(rows, offsets, base_marg, f0, c, order, uniforms, labels, fs_out):
    n = order.size
    m = f0.size
    cap = 16 if n > 16 else n
    clusters = np.empty((cap, m))
    sizes = np.zeros(cap, np.int64)
    q = np.empty(n + 1)

    i0 = order[0]
    logw = np.log(base_marg[i0]) + offsets[i0]
    inv = 1.0 / base_marg[i0]
    for j in range(m):
        clusters[0, j] = rows[i0, j] * f0[j] * inv
    sizes[0] = 1
    labels[0] = 1
    num = 1
    for t in range(1, n):
        i = order[t]
        r = rows[i]
        q[0] = c * base_marg[i]
        tot = q[0]
        for ell in range(num):
            s = 0.0
            for j in range(m):
                s += r[j] * clusters[ell, j]
            q[ell + 1] = sizes[ell] * s
            tot += q[ell + 1]
        logw += np.log(tot) + offsets[i] - np.log(c + t)
        u = uniforms[t] * tot
        pick = num
        acc = 0.0
        for k in range(num + 1):
            acc += q[k]
            if u < acc:
                pick = k
                break
        # guard against rounding past the last positive entry
        while pick > 0 and q[pick] <= 0.0:
            pick -= 1
        if pick == 0:
            if num == cap:
                grown = np.empty((2 * cap, m))
                grown[:cap] = clusters
                clusters = grown
                gs = np.zeros(2 * cap, np.int64)
                gs[:cap] = sizes
                sizes = gs
                cap *= 2
            inv = 1.0 / base_marg[i]
            for j in range(m):
                clusters[num, j] = r[j] * f0[j] * inv
            sizes[num] = 1
            num += 1
            labels[t] = num
        else:
            ell = pick - 1
            inv = sizes[ell] / q[pick]
            for j in range(m):
                clusters[ell, j] = r[j] * clusters[ell, j] * inv
            sizes[ell] += 1
            labels[t] = pick
    for j in range(m):
        fs_out[j] = c * f0[j]
    for ell in range(num):
        for j in range(m):
            fs_out[j] += sizes[ell] * clusters[ell, j]
    for j in range(m):
        fs_out[j] /= c + n
    return logw, num


@optional_njit(cache=True, parallel=True)
def _sis_chunk_nb(rows, offsets, base_marg, f0, c, orders, uniforms, labels, fs, logw, nclus):
    for r in prange(orders.shape[0]):
        lw, num = _sis_one_nb(rows, offsets, base_marg, f0, c, orders[r], uniforms[r], labels[r], fs[r])
        logw[r] = lw
        nclus[r] = num


def _sis_one_np(rows, offsets, base_marg, f0, c, order, uniforms, labels, fs_out):
    n, m = order.size, f0.size
    clusters = np.empty((min(n, 16), m))
    sizes = np.zeros(clusters.shape[0], np.int64)
    i0 = order[0]
    logw = np.log(base_marg[i0]) + offsets[i0]
    clusters[0] = rows[i0] * f0 / base_marg[i0]
    sizes[0] = 1
    labels[0] = 1
    num = 1
    q = np.empty(n + 1)
    for t in range(1, n):
        i = order[t]
        r = rows[i]
        q[0] = c * base_marg[i]
        q[1:num + 1] = sizes[:num] * (clusters[:num] @ r)
        cum = np.cumsum(q[:num + 1])
        tot = cum[-1]
        logw += np.log(tot) + offsets[i] - np.log(c + t)
        pick = int(np.searchsorted(cum, uniforms[t] * tot, side="right"))
        pick = min(pick, num)
        while pick > 0 and q[pick] <= 0.0:
            pick -= 1
        if pick == 0:
            if num == clusters.shape[0]:
                clusters = np.concatenate([clusters, np.empty_like(clusters)])
                sizes = np.concatenate([sizes, np.zeros_like(sizes)])
            clusters[num] = r * f0 / base_marg[i]
            sizes[num] = 1
            num += 1
            labels[t] = num
        else:
            ell = pick - 1
            clusters[ell] = r * clusters[ell] * (sizes[ell] / q[pick])
            sizes[ell] += 1
            labels[t] = pick
    fs_out[:] = (c * f0 + sizes[:num] @ clusters[:num]) / (c + n)
    return logw, num


def _sis_chunk_np(rows, offsets, base_marg, f0, c, orders, uniforms, labels, fs, logw, nclus):
    for r in range(orders.shape[0]):
        logw[r], nclus[r] = _sis_one_np(rows, offsets, base_marg, f0, c, orders[r], uniforms[r],
                                        labels[r], fs[r])


def sis_chunk(rows, offsets, base_marg, f0, c, orders, uniforms, backend=None):
    """Run one collapsed sequential-importance pass per row of ``orders``.

    Returns ``(log_weights, cluster_counts, conditional_means, labels)``;
    ``labels`` follow the processing order of each pass.
    """
    orders = np.ascontiguousarray(orders, dtype=np.int64)
    uniforms = np.ascontiguousarray(uniforms, dtype=float)
    k, n = orders.shape
    labels = np.zeros((k, n), np.int64)
    fs = np.empty((k, f0.size))
    logw = np.empty(k)
    nclus = np.empty(k, np.int64)
    fn = _pick(_sis_chunk_nb, _sis_chunk_np, backend)
    fn(rows, offsets, base_marg, np.asarray(f0, float), float(c), orders, uniforms, labels, fs, logw, nclus)
    return logw, nclus, fs, labels


def _pick(nb, np_fn, backend):
    backend = backend or BACKEND
    if backend == "numba":
        if not USE_NUMBA:
            raise RuntimeError("numba backend requested but acceleration is disabled")
        return nb
    if backend == "numpy":
        return np_fn
    raise ValueError(f"unknown backend {backend!r}")
