"""Numba-compiled hot loops. Same API as ``_numpy``."""

from __future__ import annotations

import math

import numpy as np
from numba import njit

OFFSET, RMSE, SPEARMAN, KAPPA, MEAN = 0, 1, 2, 3, 4


@njit(cache=True)
def average_ranks(x):
    n = x.shape[0]
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(n)
    i = 0
    while i < n:
        j = i
        while j + 1 < n and x[order[j + 1]] == x[order[i]]:
            j += 1
        r = 0.5 * (i + j) + 1.0
        for k in range(i, j + 1):
            ranks[order[k]] = r
        i = j + 1
    return ranks


@njit(cache=True)
def _pearson(a, b):
    n = a.shape[0]
    ma = 0.0
    mb = 0.0
    for i in range(n):
        ma += a[i]
        mb += b[i]
    ma /= n
    mb /= n
    sab = 0.0
    saa = 0.0
    sbb = 0.0
    for i in range(n):
        da = a[i] - ma
        db = b[i] - mb
        sab += da * db
        saa += da * da
        sbb += db * db
    if saa == 0.0 or sbb == 0.0:
        return np.nan
    return sab / math.sqrt(saa * sbb)


@njit(cache=True)
def _stat(r, o, code):
    n = r.shape[0]
    if n == 0:
        return np.nan
    if code == OFFSET:
        s = 0.0
        for i in range(n):
            s += r[i] - o[i]
        return s / n
    if code == RMSE:
        s = 0.0
        for i in range(n):
            d = r[i] - o[i]
            s += d * d
        return math.sqrt(s / n)
    if code == SPEARMAN:
        if n < 2:
            return np.nan
        return _pearson(average_ranks(r), average_ranks(o))
    if code == KAPPA:
        mr = 0.0
        mo = 0.0
        for i in range(n):
            mr += r[i]
            mo += o[i]
        mr /= n
        mo /= n
        srr = 0.0
        soo = 0.0
        num = 0.0
        for i in range(n):
            srr += (r[i] - mr) ** 2
            soo += (o[i] - mo) ** 2
            num += (r[i] - o[i]) ** 2
        den = srr + soo + n * (mr - mo) ** 2
        if den == 0.0:
            return np.nan
        return 1.0 - num / den
    # MEAN
    s = 0.0
    for i in range(n):
        s += r[i]
    return s / n


@njit(cache=True)
def resample_stat(ref, other, offsets, members, draws, code):
    nb, ng = draws.shape
    out = np.empty(nb)
    for b in range(nb):
        m = 0
        for g in range(ng):
            d = draws[b, g]
            m += offsets[d + 1] - offsets[d]
        r = np.empty(m)
        o = np.empty(m)
        k = 0
        for g in range(ng):
            d = draws[b, g]
            for p in range(offsets[d], offsets[d + 1]):
                idx = members[p]
                r[k] = ref[idx]
                o[k] = other[idx]
                k += 1
        out[b] = _stat(r, o, code)
    return out


@njit(cache=True)
def kendall_tau_b(x, y):
    n = x.shape[0]
    s = 0.0
    tx = 0.0
    ty = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            dx = x[i] - x[j]
            dy = y[i] - y[j]
            if dx == 0.0:
                tx += 1.0
            if dy == 0.0:
                ty += 1.0
            if dx != 0.0 and dy != 0.0:
                if (dx > 0.0) == (dy > 0.0):
                    s += 1.0
                else:
                    s -= 1.0
    n0 = n * (n - 1) / 2.0
    den = (n0 - tx) * (n0 - ty)
    if den <= 0.0:
        return np.nan
    return s / math.sqrt(den)


@njit(cache=True)
def pava(y, w):
    n = y.shape[0]
    vals = np.empty(n)
    wts = np.empty(n)
    cnt = np.empty(n, dtype=np.int64)
    k = 0
    for i in range(n):
        vals[k] = y[i]
        wts[k] = w[i]
        cnt[k] = 1
        while k > 0 and vals[k - 1] > vals[k]:
            tw = wts[k - 1] + wts[k]
            vals[k - 1] = (vals[k - 1] * wts[k - 1] + vals[k] * wts[k]) / tw
            wts[k - 1] = tw
            cnt[k - 1] += cnt[k]
            k -= 1
        k += 1
    out = np.empty(n)
    p = 0
    for b in range(k):
        for _ in range(cnt[b]):
            out[p] = vals[b]
            p += 1
    return out


@njit(cache=True)
def kde_eval(grid, data, h):
    ng = grid.shape[0]
    n = data.shape[0]
    out = np.empty(ng)
    norm = 1.0 / (n * h * math.sqrt(2.0 * math.pi))
    for g in range(ng):
        s = 0.0
        for i in range(n):
            z = (grid[g] - data[i]) / h
            s += math.exp(-0.5 * z * z)
        out[g] = s * norm
    return out
