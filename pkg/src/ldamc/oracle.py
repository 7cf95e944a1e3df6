"""Brute-force posterior of the mixture weights for tiny blocks.

With the channel and noise variance known, the posterior mean of the
mixture weights is a finite sum over every (point, label) assignment of the
N + L - 1 symbols. Integrating the Dirichlet out gives each assignment the
weight::

    exp(-||r - S h||^2 / sigma2) * prod_n 1/|z_n| * B(gamma + c) / B(gamma)

and, given the assignment, E[P_A | labels] = (gamma + c) / sum(gamma + c).
This module shares no code with the sampler on purpose.
"""

from __future__ import annotations

import numpy as np
from scipy.special import gammaln

MAX_SYMBOLS = 5
MAX_PAIRS = 28


def exact_posterior_oracle(obs, cset, priors, taps, sigma2: float) -> np.ndarray:
    """E[P_A(a) | r] by exhaustive enumeration.

    Raises
    ------
    ValueError
        If the block has more than 5 symbols, the set more than 28
        (point, label) pairs, or gamma has a zero entry.
    """
    r = np.asarray(obs.samples, dtype=np.complex128)
    h = np.asarray(taps, dtype=np.complex128)
    N, L = r.size, h.size
    n_sym = N + L - 1
    gamma = np.asarray(priors.gamma, dtype=np.float64)
    K = gamma.size

    # pair table rebuilt from the member point lists
    pair_val, pair_lab = [], []
    for a, m in enumerate(cset.members):
        for v in m.points:
            pair_val.append(complex(v))
            pair_lab.append(a)
    pair_val = np.asarray(pair_val)
    pair_lab = np.asarray(pair_lab)
    Q = pair_val.size
    if n_sym > MAX_SYMBOLS or Q > MAX_PAIRS:
        raise ValueError(
            f"enumeration bound exceeded: {n_sym} symbols (max {MAX_SYMBOLS}), "
            f"{Q} pairs (max {MAX_PAIRS})"
        )
    if np.any(gamma <= 0):
        raise ValueError("oracle needs strictly positive gamma")
    if not sigma2 > 0:
        raise ValueError("oracle needs a positive noise variance")
    sizes = np.array([len(m.points) for m in cset.members], dtype=np.float64)

    log_sizes = np.log(sizes)
    top = -np.inf
    num = np.zeros(K)
    den = 0.0
    # enumerate by the first symbol's pair to bound memory
    if n_sym > 1:
        rest = np.indices((Q,) * (n_sym - 1)).reshape(n_sym - 1, -1).T
    else:
        rest = np.zeros((1, 0), dtype=np.int64)
    for q0 in range(Q):
        grids = np.concatenate([np.full((rest.shape[0], 1), q0), rest], axis=1)
        X = pair_val[grids]
        Z = pair_lab[grids]
        pred = np.zeros((X.shape[0], N), dtype=np.complex128)
        for k in range(N):
            for j in range(L):
                # s_{k-j} sits in column k - j + L - 1
                pred[:, k] += h[j] * X[:, k - j + L - 1]
        rss = np.sum(np.abs(r[None, :] - pred) ** 2, axis=1)
        c = np.stack([(Z == a).sum(axis=1) for a in range(K)], axis=1).astype(np.float64)
        log_w = (
            -rss / sigma2
            - c @ log_sizes
            + gammaln(gamma[None, :] + c).sum(axis=1)
            - gammaln(gamma.sum() + n_sym)
        )
        chunk_top = log_w.max()
        if chunk_top > top:
            rescale = np.exp(top - chunk_top) if np.isfinite(top) else 0.0
            num *= rescale
            den *= rescale
            top = chunk_top
        w = np.exp(log_w - top)
        post_mean = (gamma[None, :] + c) / (gamma.sum() + n_sym)
        num += w @ post_mean
        den += w.sum()
    return num / den
