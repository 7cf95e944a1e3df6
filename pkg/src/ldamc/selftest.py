"""Invariant suite run by ``ldamc selftest``.

Each check returns ``(ok, detail)``; :func:`run_selftest` prints one line per
check and returns True when every check passed.
"""

from __future__ import annotations

import itertools
import time

import numpy as np
from scipy import stats

from . import _backend
from .channel_sim import (
    convolution_matrix,
    rayleigh_taps,
    transmit,
    two_path_taps,
)
from .constellations import KINDS, POINT_TOL, build_constellation, build_set
from .gibbs_core import (
    ChainConfig,
    Priors,
    ChainResult,
    classify,
    gibbs_sweep,
    initial_state,
    run_chain,
    sample_mixture,
    sample_symbol,
    symbol_pair_logweights,
)
from .harness import ExperimentConfig, run_sweep, wilson_interval, write_results
from .rand_dists import (
    normalize_logweights,
    rng_stream,
    sample_categorical,
    sample_categorical_log,
    sample_dirichlet,
    sample_invgamma,
)

CHECKS = []


def check(fn):
    CHECKS.append(fn)
    return fn


def _set3():
    return build_set(KINDS)


@check
def constellation_normalization():
    worst = max(abs(build_constellation(k).average_power - 1.0) for k in KINDS)
    distinct = all(
        np.min(np.abs(np.subtract.outer(c.points, c.points)) + np.eye(c.size) * 9) > 1e-6
        for c in map(build_constellation, KINDS)
    )
    return worst <= 1e-12 and distinct, f"max |power - 1| = {worst:.1e}"


@check
def membership_brute_force():
    for r in range(1, 4):
        for kinds in itertools.permutations(KINDS, r):
            cs = build_set(kinds)
            for p, owners in zip(cs.super_points, cs.membership):
                brute = {a for a, m in enumerate(cs.members)
                         if min(abs(p - q) for q in m.points) <= POINT_TOL}
                if brute != set(owners) or not owners:
                    return False, f"{kinds}: membership mismatch at {p}"
            for m in cs.members:
                for q in m.points:
                    if np.sum(np.abs(cs.super_points - q) <= POINT_TOL) != 1:
                        return False, f"{kinds}: point {q} not unique in union"
    return True, "all ordered subsets"


@check
def superconstellation_order_insensitive():
    ref = {complex(np.round(p, 12)) for p in _set3().super_points}
    for perm in itertools.permutations(KINDS):
        if {complex(np.round(p, 12)) for p in build_set(perm).super_points} != ref:
            return False, f"{perm} differs"
    return True, "6 orderings"


@check
def convolution_locality():
    rng = rng_stream(1)
    N, L = 12, 4
    s = rng.standard_normal(N + L - 1) + 1j * rng.standard_normal(N + L - 1)
    S = convolution_matrix(s, N, L)
    for i in range(N + L - 1):
        t = s.copy()
        t[i] += 1.0
        changed = np.flatnonzero(np.any(convolution_matrix(t, N, L) != S, axis=1))
        n = i - (L - 1)
        expect = np.arange(max(0, n), min(N - 1, n + L - 1) + 1)
        if not np.array_equal(changed, expect):
            return False, f"symbol {n} touched rows {changed}"
    a, b = rng.standard_normal(2)
    u = rng.standard_normal(N + L - 1) + 0j
    lin = np.max(np.abs(convolution_matrix(a * s + b * u, N, L) - a * S - b * convolution_matrix(u, N, L)))
    return lin < 1e-12, f"linearity error {lin:.1e}"


@check
def noiseless_transmit_residual():
    rng = rng_stream(2)
    cs = _set3()
    worst = 0.0
    for m in cs.members:
        taps = rayleigh_taps([0, -3, -6], rng)
        blk = transmit(m, taps, 0.0, 50, rng)
        S = convolution_matrix(blk.truth.symbols, 50, 3)
        worst = max(worst, float(np.max(np.abs(blk.samples - S @ blk.truth.taps))))
    return worst == 0.0, f"max residual {worst:.1e}"


@check
def two_path_integer_delays():
    rng = rng_stream(3)
    taps = two_path_taps([0, 2], [0, -3], 0.3, 5, rng)
    nz = np.flatnonzero(np.abs(taps.taps) > 1e-12)
    return nz.tolist() == [0, 2], f"nonzero taps at {nz.tolist()}"


@check
def rng_replay():
    a = [sample_invgamma(3, 4, r) for r in [rng_stream(5, 1)] * 3]
    b = [sample_invgamma(3, 4, r) for r in [rng_stream(5, 1)] * 3]
    d1 = sample_dirichlet([1, 2, 3], rng_stream(5, 2))
    d2 = sample_dirichlet([1, 2, 3], rng_stream(5, 2))
    return a == b and np.array_equal(d1, d2), "replayed streams identical"


@check
def log_categorical_shift_invariance():
    lw = np.array([-3.0, 0.5, 1.0, -np.inf])
    p1, p2 = normalize_logweights(lw), normalize_logweights(lw - 1234.5)
    i1 = [sample_categorical_log(lw, rng_stream(9, k)) for k in range(200)]
    i2 = [sample_categorical_log(lw + 777.0, rng_stream(9, k)) for k in range(200)]
    return np.allclose(p1, p2, atol=1e-15) and i1 == i2, "identical draws after shift"


@check
def categorical_goodness_of_fit():
    rng = rng_stream(11)
    w = np.array([1.0, 2.0, 3.0])
    draws = np.array([sample_categorical(w, rng) for _ in range(100_000)])
    obs = np.bincount(draws, minlength=3)
    p = stats.chisquare(obs, 100_000 * w / w.sum()).pvalue
    return p > 1e-3, f"chi-square p = {p:.3f}"


@check
def dirichlet_and_invgamma_moments():
    rng = rng_stream(12)
    d = np.array([sample_dirichlet([2.0, 1.0], rng) for _ in range(100_000)]).mean(axis=0)
    ig = np.mean([sample_invgamma(3.0, 4.0, rng) for _ in range(100_000)])
    ok = np.all(np.abs(d - [2 / 3, 1 / 3]) < 0.01) and abs(ig - 2.0) < 0.06
    return ok, f"Dirichlet mean {np.round(d, 4)}, IG mean {ig:.4f}"


@check
def mixture_posterior_mean():
    rng = rng_stream(13)
    pri = Priors.uniform(3, 1.0)
    labels = np.array([0, 0, 2])
    draws = np.array([sample_mixture(labels, pri, rng) for _ in range(20_000)])
    target = np.array([3, 1, 2]) / 6
    se = draws.std(axis=0) / np.sqrt(len(draws))
    err = np.abs(draws.mean(axis=0) - target)
    return bool(np.all(err < 3 * se)), f"max error {err.max():.4f} vs 3 SE {3 * se.max():.4f}"


def _block(seed, N=60, L=3, snr=12.0, kind=2):
    rng = rng_stream(seed)
    cs = _set3()
    taps = rayleigh_taps(np.linspace(0, -5, L), rng)
    return cs, transmit(cs.members[kind], taps, 10 ** (-snr / 10), N, rng)


@check
def incremental_residual():
    worst = 0.0
    for mode in ("latent_dirichlet", "superconstellation", "conventional"):
        cs, obs = _block(21)
        pri = Priors.uniform(3, 0.0 if mode != "latent_dirichlet" else 15.0)
        # check_every raises on drift beyond 1e-9
        res = run_chain(obs, cs, pri, ChainConfig(100, 50, mode, check_every=50), rng_stream(22))
        worst = max(worst, res.max_residual_drift)
    return worst <= 1e-9, f"max drift {worst:.1e} ({_backend.BACKEND} kernel)"


@check
def conventional_absorption():
    # Symbols never leave the starting constellation. The label itself may
    # only move to a constellation nested inside the current one (8PSK to
    # QPSK once every symbol sits on the shared points).
    cs, obs = _block(31, kind=0)
    pri = Priors.uniform(3, 0.0)
    cfg = ChainConfig(50, 0, "conventional")
    for start in (1, 2):
        rng = rng_stream(32, start)
        state = initial_state(obs, cs, pri, "conventional", rng, init_constellation=start)
        allowed = set(cs.member_point_indices(start).tolist())
        current = allowed
        for t in range(cfg.M):
            gibbs_sweep(state, obs, cs, pri, cfg, t, rng)
            if not set(state.point_idx.tolist()) <= allowed:
                return False, f"symbols left constellation {cs.ids[start]}"
            now = set(cs.member_point_indices(int(state.labels[0])).tolist())
            if not now <= current:
                return False, f"label moved outside {cs.ids[start]}"
            current = now
    return True, "symbols stayed inside the starting constellation"


@check
def exact_symbol_conditional():
    cs, obs = _block(41, N=8, L=3, snr=6.0)
    pri = Priors.uniform(3, 2.0)
    state = initial_state(obs, cs, pri, "latent_dirichlet", rng_stream(42))
    n = 2
    probs = normalize_logweights(symbol_pair_logweights(n, state, obs, cs, 1.0))
    rng = rng_stream(43)
    hits = np.zeros(len(cs.pair_point))
    lookup = {(int(p), int(a)): q for q, (p, a) in enumerate(zip(cs.pair_point, cs.pair_label))}
    draws = 100_000
    for _ in range(draws):
        trial = state.copy()
        hits[lookup[sample_symbol(n, trial, obs, cs, 1.0, rng)]] += 1
    tv = 0.5 * np.abs(hits / draws - probs).sum()
    return tv < 0.01, f"total variation {tv:.4f}"


@check
def classify_tie_and_scale():
    cs = _set3()
    res = ChainResult("latent_dirichlet", np.array([[1.0, 0, 0], [0, 1.0, 0]]),
                      np.zeros((2, 3), int), np.zeros(2))
    est, score = classify(res, cs)
    scaled = ChainResult("latent_dirichlet", res.mixture_samples * 7.5, res.label_count_samples,
                         res.loglik)
    ok = est == cs.ids[0] and np.allclose(score, [0.5, 0.5, 0]) and classify(scaled, cs)[0] == est
    return ok, f"tie -> {est}"


@check
def wilson_bounds():
    for n in (1, 7, 100):
        for k in range(n + 1):
            lo, hi = wilson_interval(k, n)
            if not (0 <= lo <= k / n <= hi <= 1):
                return False, f"k={k}, n={n}: [{lo}, {hi}]"
    return True, "contains estimate, within [0, 1]"


@check
def sweep_worker_invariance():
    import tempfile
    from pathlib import Path

    cfg = ExperimentConfig(block_length=20, snr_db=(10.0, 20.0), trials=4, samples=10,
                           burn_in=5, gamma=(1.0, 15.0), seed=77)
    one = run_sweep(cfg, workers=1)
    two = run_sweep(cfg, workers=2)
    with tempfile.TemporaryDirectory() as tmp:
        a, b = Path(tmp, "a.csv"), Path(tmp, "b.csv")
        write_results(one, a, timing=False)
        write_results(two, b, timing=False)
        same = a.read_bytes() == b.read_bytes()
    rows_ok = all(r.confusion.sum() == cfg.trials for r in one.rows)
    return same and rows_ok, "1 vs 2 workers byte-identical; confusion rows sum to trials"


def run_selftest(out=print) -> bool:
    all_ok = True
    for fn in CHECKS:
        t0 = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as exc:  # a crash is a failure, keep going
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        all_ok &= bool(ok)
        out(f"{'PASS' if ok else 'FAIL'}  {fn.__name__:<38} {detail}  ({time.perf_counter() - t0:.1f}s)")
    return all_ok
