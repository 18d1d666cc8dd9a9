"""Pure-numpy kernels. Same API as ``_numba``."""

from __future__ import annotations

import numpy as np
from scipy.stats import rankdata

OFFSET, RMSE, SPEARMAN, KAPPA, MEAN = 0, 1, 2, 3, 4


def average_ranks(x):
    return rankdata(x, method="average").astype(float)


def _rowwise_pearson(a, b):
    a = a - a.mean(axis=-1, keepdims=True)
    b = b - b.mean(axis=-1, keepdims=True)
    saa = (a * a).sum(axis=-1)
    sbb = (b * b).sum(axis=-1)
    sab = (a * b).sum(axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = sab / np.sqrt(saa * sbb)
    return np.where((saa == 0) | (sbb == 0), np.nan, out)


def _rowwise_stat(r, o, code):
    n = r.shape[-1]
    if n == 0:
        return np.full(r.shape[:-1], np.nan)
    if code == OFFSET:
        return (r - o).mean(axis=-1)
    if code == RMSE:
        return np.sqrt(((r - o) ** 2).mean(axis=-1))
    if code == SPEARMAN:
        if n < 2:
            return np.full(r.shape[:-1], np.nan)
        return _rowwise_pearson(rankdata(r, axis=-1), rankdata(o, axis=-1))
    if code == KAPPA:
        mr = r.mean(axis=-1)
        mo = o.mean(axis=-1)
        srr = ((r - mr[..., None]) ** 2).sum(axis=-1)
        soo = ((o - mo[..., None]) ** 2).sum(axis=-1)
        num = ((r - o) ** 2).sum(axis=-1)
        den = srr + soo + n * (mr - mo) ** 2
        with np.errstate(divide="ignore", invalid="ignore"):
            out = 1.0 - num / den
        return np.where(den == 0, np.nan, out)
    return r.mean(axis=-1)


def resample_stat(ref, other, offsets, members, draws, code):
    sizes = np.diff(offsets)
    if np.all(sizes == 1):
        idx = members[offsets[:-1]][draws]
        return np.asarray(_rowwise_stat(ref[idx], other[idx], code), dtype=float)
    out = np.empty(draws.shape[0])
    for b, row in enumerate(draws):
        idx = np.concatenate([members[offsets[d] : offsets[d + 1]] for d in row])
        out[b] = _rowwise_stat(ref[idx], other[idx], code)
    return out


def kendall_tau_b(x, y):
    n = x.shape[0]
    iu = np.triu_indices(n, k=1)
    dx = np.sign(x[:, None] - x[None, :])[iu]
    dy = np.sign(y[:, None] - y[None, :])[iu]
    s = float((dx * dy).sum())
    n0 = n * (n - 1) / 2.0
    tx = float((dx == 0).sum())
    ty = float((dy == 0).sum())
    den = (n0 - tx) * (n0 - ty)
    if den <= 0:
        return np.nan
    return s / np.sqrt(den)


def pava(y, w):
    # Blocks are (mean, weight, count); at most one merge cascade per element.
    blocks: list[list[float]] = []
    for yi, wi in zip(y.tolist(), w.tolist()):
        blocks.append([yi, wi, 1])
        while len(blocks) > 1 and blocks[-2][0] > blocks[-1][0]:
            v2, w2, c2 = blocks.pop()
            v1, w1, c1 = blocks[-1]
            tw = w1 + w2
            blocks[-1] = [(v1 * w1 + v2 * w2) / tw, tw, c1 + c2]
    return np.repeat([b[0] for b in blocks], [b[2] for b in blocks]).astype(float)


def kde_eval(grid, data, h):
    z = (grid[:, None] - data[None, :]) / h
    return np.exp(-0.5 * z * z).sum(axis=1) / (data.shape[0] * h * np.sqrt(2.0 * np.pi))
