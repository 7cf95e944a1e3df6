"""Pure-Python symbol scan, used when the compiled extension is unavailable.

Same signature and arithmetic order as the Cython kernel in ``_scan.pyx``;
the two agree draw for draw except for rare last-ulp differences in ``exp``.
"""

import numpy as np


def scan_symbols(resid, point_idx, labels, counts, h, points, pair_point,
                 pair_label, log_prior, inv_temp, uniforms):
    N = resid.shape[0]
    L = h.shape[0]
    n_sym = point_idx.shape[0]
    if n_sym != N + L - 1 or uniforms.shape[0] != n_sym:
        raise ValueError("inconsistent block geometry")
    for i in range(n_sym):
        n = i - (L - 1)
        k0 = max(n, 0)
        k1 = min(n + L - 1, N - 1)
        taps = h[k0 - n:k1 - n + 1]
        stripped = resid[k0:k1 + 1] + points[point_idx[i]] * taps
        e = stripped[None, :] - points[:, None] * taps[None, :]
        dist = (e.real * e.real + e.imag * e.imag).sum(axis=1)
        w = log_prior - dist[pair_point] * inv_temp
        w = np.exp(w - w.max())
        cdf = np.cumsum(w)
        pick = int(np.searchsorted(cdf, uniforms[i] * cdf[-1], side="right"))
        if pick >= cdf.size:
            pick = int(np.flatnonzero(w > 0)[-1])
        p = pair_point[pick]
        lab = pair_label[pick]
        counts[labels[i]] -= 1
        counts[lab] += 1
        labels[i] = lab
        point_idx[i] = p
        resid[k0:k1 + 1] = stripped - points[p] * taps
