"""Gibbs samplers for modulation classification over an unknown ISI channel.

Three modes share one state layout and one sweep:

``latent_dirichlet``
    Symbols follow a mixture of uniform distributions over the candidate
    constellations with Dirichlet mixture weights. Each symbol carries a
    latent label (the mixture component it was drawn from); the weights are
    resampled from Dirichlet(gamma + label counts).
``superconstellation``
    Baseline: the weights are set to the normalized label counts at every
    sweep instead of being sampled.
``conventional``
    A single constellation variable with symbols uniform on it. Kept to
    show that this chain never leaves its initial constellation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from . import _backend
from .channel_sim import ChannelTaps, ReceivedBlock, convolution_matrix
from .constellations import ConstellationSet
from .rand_dists import (
    JITTER,
    sample_categorical_log,
    sample_cgauss,
    sample_dirichlet,
    sample_invgamma,
)

MODES = ("latent_dirichlet", "superconstellation", "conventional")
SCHEDULES = ("none", "linear", "logarithmic")


class StateError(RuntimeError):
    """A Gibbs state violated one of its invariants."""


def canonical_mode(mode: str) -> str:
    key = str(mode).strip().lower().replace("-", "_")
    aliases = {"ld": "latent_dirichlet", "latent": "latent_dirichlet",
               "super": "superconstellation", "sc": "superconstellation"}
    key = aliases.get(key, key)
    if key not in MODES:
        raise ValueError(f"unknown sampler mode {mode!r}; expected one of {', '.join(MODES)}")
    return key


@dataclass(frozen=True)
class Priors:
    """Hyperparameters.

    gamma : Dirichlet concentration, one entry per candidate constellation.
    alpha_h : prior variance of each channel tap, h ~ CN(0, alpha_h I).
    alpha0, beta0 : shape and scale of the inverse-gamma noise prior. Both
        small: a large scale drags sigma^2 toward beta0 / N and flattens the
        symbol conditionals.
    """

    gamma: np.ndarray
    alpha_h: float = 1e3
    alpha0: float = 1e-2
    beta0: float = 1e-2

    def __post_init__(self):
        g = np.atleast_1d(np.asarray(self.gamma, dtype=np.float64))
        if g.ndim != 1 or g.size == 0 or np.any(g < 0) or not np.all(np.isfinite(g)):
            raise ValueError(f"gamma must be a nonnegative vector, got {self.gamma!r}")
        if not (self.alpha_h > 0 and self.alpha0 > 0 and self.beta0 > 0):
            raise ValueError("alpha_h, alpha0 and beta0 must be positive")
        object.__setattr__(self, "gamma", g)

    @classmethod
    def uniform(cls, n_constellations: int, gamma: float = 15.0, **kw) -> "Priors":
        return cls(np.full(n_constellations, float(gamma)), **kw)


@dataclass(frozen=True)
class Annealing:
    """Temperature schedule; ``horizon`` is the sweep at which rho reaches 1."""

    kind: str = "none"
    rho0: float = 1.0
    horizon: int = 0

    def __post_init__(self):
        if self.kind not in SCHEDULES:
            raise ValueError(f"unknown annealing schedule {self.kind!r}")
        if self.kind != "none":
            if self.rho0 < 1:
                raise ValueError("initial temperature must be >= 1")
            if self.horizon < 1:
                raise ValueError("annealing horizon must be >= 1 sweep")


def anneal_temperature(schedule: Annealing, sweep_index: int) -> float:
    """Likelihood temperature rho >= 1 at ``sweep_index``.

    Both decreasing schedules start at ``rho0`` and are pinned to reach 1 at
    ``schedule.horizon`` (normally the burn-in length), staying at 1 after.
    """
    if sweep_index < 0:
        raise ValueError("sweep index must be nonnegative")
    if schedule.kind == "none" or sweep_index >= schedule.horizon:
        return 1.0
    excess = schedule.rho0 - 1.0
    H = schedule.horizon
    if schedule.kind == "linear":
        kappa = excess / H
        return max(1.0, schedule.rho0 - kappa * sweep_index)
    frac = (math.log(H + 2) - math.log(sweep_index + 2)) / (math.log(H + 2) - math.log(2))
    return max(1.0, 1.0 + excess * frac)


@dataclass(frozen=True)
class ChainConfig:
    M: int = 300
    M0: int = 100
    mode: str = "latent_dirichlet"
    annealing: Annealing = Annealing()
    # recompute-and-compare the cached residual every this many sweeps (0 = off)
    check_every: int = 0

    def __post_init__(self):
        if self.M < 1 or self.M0 < 0:
            raise ValueError("need M >= 1 and M0 >= 0")
        object.__setattr__(self, "mode", canonical_mode(self.mode))


@dataclass
class GibbsState:
    """Current sample of one chain.

    Symbols are stored as indices into ``cset.super_points``; ``labels`` are
    indices into ``cset.members``. ``resid`` caches ``r - S h`` and ``counts``
    caches the label histogram, both kept in step by every update.
    """

    cset: ConstellationSet = field(repr=False)
    point_idx: np.ndarray
    labels: np.ndarray
    taps: np.ndarray
    sigma2: float
    mixture: np.ndarray
    resid: np.ndarray = field(repr=False)
    counts: np.ndarray

    @property
    def symbols(self) -> np.ndarray:
        return self.cset.super_points[self.point_idx]

    @property
    def L(self) -> int:
        return self.taps.size

    def copy(self) -> "GibbsState":
        return GibbsState(
            self.cset, self.point_idx.copy(), self.labels.copy(), self.taps.copy(),
            float(self.sigma2), self.mixture.copy(), self.resid.copy(), self.counts.copy(),
        )


@dataclass
class ChainResult:
    mode: str
    mixture_samples: np.ndarray
    label_count_samples: np.ndarray
    loglik: np.ndarray
    valid: bool = True
    # largest |cached - recomputed| residual seen by the debug checks
    max_residual_drift: float = 0.0
    final_state: Optional[GibbsState] = field(default=None, repr=False)

    def __len__(self) -> int:
        return self.mixture_samples.shape[0]


# ---------------------------------------------------------------- helpers

def full_residual(state: GibbsState, obs: ReceivedBlock) -> np.ndarray:
    S = convolution_matrix(state.symbols, obs.N, obs.L)
    return obs.samples - S @ state.taps


def count_labels(labels, n_constellations: int) -> np.ndarray:
    """Histogram of latent labels over the constellation indices."""
    return np.bincount(np.asarray(labels, dtype=np.int64), minlength=n_constellations)


def residual_drift(state: GibbsState, obs: ReceivedBlock) -> float:
    return float(np.max(np.abs(full_residual(state, obs) - state.resid)))


def check_state(state: GibbsState, obs: ReceivedBlock, tol: float = 1e-9) -> None:
    """Raise :class:`StateError` if any invariant of ``state`` fails."""
    cset = state.cset
    n_sym = obs.n_symbols
    if state.point_idx.shape != (n_sym,) or state.labels.shape != (n_sym,):
        raise StateError("symbol/label arrays have the wrong length")
    for p, a in zip(state.point_idx, state.labels):
        if a not in cset.membership[p]:
            raise StateError(f"label {a} does not contain point {p}")
    if abs(state.mixture.sum() - 1.0) > 1e-12 or np.any(state.mixture < 0):
        raise StateError(f"mixture off the simplex: {state.mixture}")
    if not state.sigma2 > 0:
        raise StateError(f"noise variance must be positive, got {state.sigma2}")
    if not np.array_equal(state.counts, count_labels(state.labels, len(cset))):
        raise StateError("cached label counts are stale")
    err = residual_drift(state, obs)
    if err > tol:
        raise StateError(f"cached residual drifted by {err:.3e}")


def pair_log_prior(mixture: np.ndarray, cset: ConstellationSet) -> np.ndarray:
    """log(P_A(a) / |a|) for every (point, label) pair."""
    with np.errstate(divide="ignore"):
        lp = np.log(mixture) - np.log(cset.sizes.astype(np.float64))
    return np.ascontiguousarray(lp[cset.pair_label])


def log_likelihood(state: GibbsState, obs: ReceivedBlock) -> float:
    rss = float(np.vdot(state.resid, state.resid).real)
    return -obs.N * math.log(math.pi * state.sigma2) - rss / state.sigma2


# ---------------------------------------------------------------- conjugate updates

def channel_posterior_params(S, r, sigma2: float, priors: Priors):
    """Mean and covariance of the Gaussian channel conditional.

    Precision is ``I / alpha_h + S^H S / sigma2`` and the mean is
    ``Sigma S^H r / sigma2`` (prior mean zero).
    """
    if not sigma2 > 0:
        raise ValueError("noise variance must be positive")
    S = np.asarray(S, dtype=np.complex128)
    r = np.asarray(r, dtype=np.complex128)
    L = S.shape[1]
    prec = np.eye(L) / priors.alpha_h + (S.conj().T @ S) / sigma2
    try:
        factor = cho_factor(prec, lower=True)
    except np.linalg.LinAlgError:
        factor = cho_factor(prec + JITTER * np.eye(L), lower=True)
    cov = cho_solve(factor, np.eye(L, dtype=np.complex128))
    cov = 0.5 * (cov + cov.conj().T)
    mean = cov @ (S.conj().T @ r) / sigma2
    return mean, cov


def sample_channel(state: GibbsState, obs: ReceivedBlock, priors: Priors,
                   rng: np.random.Generator) -> ChannelTaps:
    S = convolution_matrix(state.symbols, obs.N, obs.L)
    mean, cov = channel_posterior_params(S, obs.samples, state.sigma2, priors)
    return ChannelTaps(sample_cgauss(mean, cov, rng))


def noise_posterior_params(r, S, h, priors: Priors):
    """Inverse-gamma (shape, scale) of the noise-variance conditional."""
    r = np.asarray(r, dtype=np.complex128)
    e = r - np.asarray(S) @ np.asarray(h)
    return priors.alpha0 + r.size, priors.beta0 + float(np.vdot(e, e).real)


def sample_noise_var(state: GibbsState, obs: ReceivedBlock, priors: Priors,
                     rng: np.random.Generator) -> float:
    """Draw sigma^2 from its conditional using the cached residual; stores it."""
    shape = priors.alpha0 + obs.N
    scale = priors.beta0 + float(np.vdot(state.resid, state.resid).real)
    state.sigma2 = sample_invgamma(shape, scale, rng)
    return state.sigma2


# ---------------------------------------------------------------- symbols

def symbol_rows(n: int, N: int, L: int) -> range:
    """Rows of S that contain s_n (n in -L+1 .. N-1)."""
    return range(max(0, n), min(N - 1, n + L - 1) + 1)


def symbol_pair_logweights(n: int, state: GibbsState, obs: ReceivedBlock,
                           cset: ConstellationSet, temperature: float = 1.0) -> np.ndarray:
    """Unnormalized log conditional of every (point, label) pair for s_n."""
    N, L = obs.N, obs.L
    if not -L + 1 <= n <= N - 1:
        raise IndexError(f"symbol index {n} outside [{-L + 1}, {N - 1}]")
    i = n + L - 1
    rows = np.arange(max(0, n), min(N - 1, n + L - 1) + 1)
    taps = state.taps[rows - n]
    stripped = state.resid[rows] + cset.super_points[state.point_idx[i]] * taps
    e = stripped[None, :] - cset.super_points[:, None] * taps[None, :]
    dist = np.sum(np.abs(e) ** 2, axis=1)
    return pair_log_prior(state.mixture, cset) - dist[cset.pair_point] / (temperature * state.sigma2)


def _set_symbol(state: GibbsState, obs: ReceivedBlock, n: int, p: int, a: int) -> None:
    L = obs.L
    i = n + L - 1
    rows = np.arange(max(0, n), min(obs.N - 1, n + L - 1) + 1)
    taps = state.taps[rows - n]
    pts = state.cset.super_points
    state.resid[rows] += (pts[state.point_idx[i]] - pts[p]) * taps
    state.counts[state.labels[i]] -= 1
    state.counts[a] += 1
    state.point_idx[i] = p
    state.labels[i] = a


def sample_symbol(n: int, state: GibbsState, obs: ReceivedBlock, cset: ConstellationSet,
                  temperature: float, rng: np.random.Generator):
    """Draw (point, label) for s_n from its conditional and apply it in place."""
    lw = symbol_pair_logweights(n, state, obs, cset, temperature)
    q = sample_categorical_log(lw, rng)
    p, a = int(cset.pair_point[q]), int(cset.pair_label[q])
    _set_symbol(state, obs, n, p, a)
    return p, a


def scan_symbols(state: GibbsState, obs: ReceivedBlock, temperature: float,
                 rng: np.random.Generator, kernel=None) -> None:
    """Resample every symbol in ascending n with the selected kernel."""
    cset = state.cset
    kernel = kernel or _backend.scan_symbols
    uniforms = rng.random(obs.n_symbols)
    kernel(state.resid, state.point_idx, state.labels, state.counts, state.taps,
           cset.super_points, cset.pair_point, cset.pair_label,
           pair_log_prior(state.mixture, cset),
           1.0 / (temperature * state.sigma2), uniforms)


# ---------------------------------------------------------------- mixture

def sample_mixture(labels, priors: Priors, rng: np.random.Generator) -> np.ndarray:
    conc = priors.gamma + count_labels(labels, priors.gamma.size)
    if np.any(conc <= 0):
        raise ValueError(f"Dirichlet posterior needs positive concentration, got {conc}")
    return sample_dirichlet(conc, rng)


def superconstellation_update(labels, n_constellations: int) -> np.ndarray:
    c = count_labels(labels, n_constellations).astype(np.float64)
    total = c.sum()
    if total <= 0:
        raise ValueError("cannot normalize an empty label count")
    return c / total


def conventional_logweights(point_idx, cset: ConstellationSet) -> np.ndarray:
    """log p(A = a | s) under a uniform prior on A and uniform symbols on A.

    Constellations missing any current symbol get ``-inf``.
    """
    present = np.unique(point_idx)
    out = np.empty(len(cset))
    for a in range(len(cset)):
        if all(a in cset.membership[p] for p in present):
            out[a] = -len(point_idx) * math.log(cset.members[a].size)
        else:
            out[a] = -np.inf
    return out


def _update_mixture(state: GibbsState, priors: Priors, mode: str,
                    rng: np.random.Generator) -> None:
    K = len(state.cset)
    if mode == "latent_dirichlet":
        state.mixture = sample_dirichlet(priors.gamma + state.counts, rng)
    elif mode == "superconstellation":
        state.mixture = superconstellation_update(state.labels, K)
    else:
        a = sample_categorical_log(conventional_logweights(state.point_idx, state.cset), rng)
        state.mixture = np.zeros(K)
        state.mixture[a] = 1.0
        state.labels[:] = a
        state.counts[:] = count_labels(state.labels, K)


# ---------------------------------------------------------------- chain

def initial_state(obs: ReceivedBlock, cset: ConstellationSet, priors: Priors, mode: str,
                  rng: np.random.Generator, *, init_constellation: Optional[int] = None,
                  known_taps=None, known_sigma2: Optional[float] = None) -> GibbsState:
    """Feasible starting point drawn from the prior.

    The mixture is drawn from Dirichlet(gamma) (uniform when gamma has zero
    entries, as in the baseline); labels and symbols follow from it. In
    conventional mode, or when ``init_constellation`` is given, every label
    starts at that one constellation. The noise variance starts at the
    received power and the channel is drawn from its conditional given those
    initial symbols.
    """
    mode = canonical_mode(mode)
    K = len(cset)
    n_sym = obs.n_symbols
    if mode == "conventional" and init_constellation is None:
        init_constellation = int(rng.integers(K))
    if init_constellation is not None:
        mixture = np.zeros(K)
        mixture[init_constellation] = 1.0
        labels = np.full(n_sym, init_constellation, dtype=np.int64)
    else:
        if np.all(priors.gamma > 0):
            mixture = sample_dirichlet(priors.gamma, rng)
        else:
            mixture = np.full(K, 1.0 / K)
        labels = rng.choice(K, size=n_sym, p=mixture).astype(np.int64)
    point_idx = np.empty(n_sym, dtype=np.int64)
    for a in range(K):
        sel = labels == a
        members = cset.member_point_indices(a)
        point_idx[sel] = members[rng.integers(members.size, size=int(sel.sum()))]
    if known_sigma2 is not None:
        sigma2 = float(known_sigma2)
    else:
        sigma2 = float(np.mean(np.abs(obs.samples) ** 2)) or 1.0
    state = GibbsState(cset, point_idx, labels, np.zeros(obs.L, dtype=np.complex128), sigma2,
                       mixture, np.zeros(obs.N, dtype=np.complex128), count_labels(labels, K))
    if known_taps is not None:
        taps = np.asarray(known_taps, dtype=np.complex128).copy()
        if taps.size != obs.L:
            raise ValueError(f"known channel has {taps.size} taps, block expects {obs.L}")
    else:
        # A draw from the channel prior (variance alpha_h) is far too large and
        # steers the first scan onto the smallest points; condition on the
        # initial symbols instead.
        taps = sample_channel(state, obs, priors, rng).taps
    state.taps = taps
    state.resid = full_residual(state, obs)
    return state


def _discrete_half(state, obs, priors, config, sweep_index, rng):
    _update_mixture(state, priors, config.mode, rng)
    scan_symbols(state, obs, anneal_temperature(config.annealing, sweep_index), rng)


def _continuous_half(state, obs, priors, rng, update_channel, update_noise):
    if update_channel:
        state.taps = sample_channel(state, obs, priors, rng).taps
        state.resid = full_residual(state, obs)
    if update_noise:
        sample_noise_var(state, obs, priors, rng)


def gibbs_sweep(state: GibbsState, obs: ReceivedBlock, cset: ConstellationSet, priors: Priors,
                config: ChainConfig, sweep_index: int, rng: np.random.Generator, *,
                update_channel: bool = True, update_noise: bool = True) -> GibbsState:
    """One systematic scan: mixture, symbols (ascending n), channel, noise."""
    _discrete_half(state, obs, priors, config, sweep_index, rng)
    _continuous_half(state, obs, priors, rng, update_channel, update_noise)
    return state


def run_chain(obs: ReceivedBlock, cset: ConstellationSet, priors: Priors, config: ChainConfig,
              rng: np.random.Generator, *, init_constellation: Optional[int] = None,
              known_taps=None, known_sigma2: Optional[float] = None,
              state: Optional[GibbsState] = None) -> ChainResult:
    """Run ``M0 + M`` sweeps and keep the last ``M`` mixture and count samples.

    Passing ``known_taps`` or ``known_sigma2`` pins that variable and skips
    its update.
    """
    if priors.gamma.size != len(cset):
        raise ValueError("gamma length does not match the constellation set")
    if config.mode == "latent_dirichlet" and np.any(priors.gamma <= 0):
        raise ValueError("latent Dirichlet mode needs strictly positive gamma")
    if state is None:
        state = initial_state(obs, cset, priors, config.mode, rng,
                              init_constellation=init_constellation,
                              known_taps=known_taps, known_sigma2=known_sigma2)
    K = len(cset)
    total = config.M0 + config.M
    mixtures = np.empty((config.M, K))
    counts = np.empty((config.M, K), dtype=np.int64)
    loglik = np.empty(total)
    drift = 0.0
    for t in range(total):
        _discrete_half(state, obs, priors, config, t, rng)
        if config.check_every and (t + 1) % config.check_every == 0:
            # the residual here is still the incrementally updated one
            drift = max(drift, residual_drift(state, obs))
            check_state(state, obs)
        _continuous_half(state, obs, priors, rng, known_taps is None, known_sigma2 is None)
        loglik[t] = log_likelihood(state, obs)
        if t >= config.M0:
            mixtures[t - config.M0] = state.mixture
            counts[t - config.M0] = state.counts
    try:
        check_state(state, obs)
        valid = True
    except StateError:
        valid = False
    return ChainResult(config.mode, mixtures, counts, loglik, valid, drift, state)


def classify(result: ChainResult, cset: ConstellationSet):
    """Posterior-mean mixture weights and the winning constellation id.

    Ties go to the lowest constellation index.
    """
    if len(result) == 0:
        raise ValueError("chain result holds no samples")
    score = result.mixture_samples.mean(axis=0)
    return cset.ids[int(np.argmax(score))], score
