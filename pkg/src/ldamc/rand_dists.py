"""Random draws needed by the Gibbs conditionals.

Every sampler takes an explicit :class:`numpy.random.Generator`; replaying a
generator from the same state replays the draws bit for bit.
"""

from __future__ import annotations

import numpy as np

HERMITIAN_TOL = 1e-10
JITTER = 1e-10


def rng_stream(seed: int, *stream: int) -> np.random.Generator:
    """Independent PCG64 generator keyed by ``seed`` and a stream path.

    Streams are derived through :class:`numpy.random.SeedSequence` spawn keys,
    so ``rng_stream(s, i, j)`` does not depend on how many other streams
    were created before it.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in stream))
    return np.random.Generator(np.random.PCG64(ss))


def cnormal(rng: np.random.Generator, size) -> np.ndarray:
    """Unit-variance circular complex normals, variance split evenly over re/im."""
    z = rng.standard_normal(size=(2,) + tuple(np.atleast_1d(size)))
    return (z[0] + 1j * z[1]) * np.sqrt(0.5)


def hermitian_factor(cov: np.ndarray) -> np.ndarray:
    """Return F with F F^H = cov.

    Cholesky first; if that fails, retry with a 1e-10 diagonal jitter, and
    finally fall back to an eigendecomposition that tolerates exactly
    singular (e.g. all-zero) matrices. Raises ``np.linalg.LinAlgError`` when
    ``cov`` is not Hermitian PSD up to the jitter.
    """
    cov = np.asarray(cov, dtype=np.complex128)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise ValueError(f"covariance must be square, got shape {cov.shape}")
    scale = max(1.0, float(np.max(np.abs(cov)))) if cov.size else 1.0
    if np.max(np.abs(cov - cov.conj().T), initial=0.0) > HERMITIAN_TOL * scale:
        raise np.linalg.LinAlgError("covariance is not Hermitian")
    if not np.any(cov):
        return np.zeros_like(cov)
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    eye = np.eye(cov.shape[0])
    try:
        return np.linalg.cholesky(cov + JITTER * eye)
    except np.linalg.LinAlgError:
        pass
    w, v = np.linalg.eigh(0.5 * (cov + cov.conj().T))
    if w.min(initial=0.0) < -JITTER * scale:
        raise np.linalg.LinAlgError(
            f"covariance is indefinite (min eigenvalue {w.min():.3e})"
        )
    return v * np.sqrt(np.clip(w, 0.0, None))


def sample_cgauss(mean, cov, rng: np.random.Generator) -> np.ndarray:
    """One draw from CN(mean, cov)."""
    mean = np.asarray(mean, dtype=np.complex128)
    factor = hermitian_factor(cov)
    return mean + factor @ cnormal(rng, mean.shape[0])


def sample_dirichlet(concentration, rng: np.random.Generator) -> np.ndarray:
    """Dirichlet draw by normalizing independent gamma variates.

    Small concentrations can underflow every gamma variate to zero; in that
    case the draw is redone in log space using G(a) = G(a+1) U^(1/a).
    """
    a = np.asarray(concentration, dtype=np.float64)
    if a.ndim != 1 or a.size == 0:
        raise ValueError("concentration must be a non-empty vector")
    if not np.all(np.isfinite(a)) or np.any(a <= 0):
        raise ValueError(f"Dirichlet concentration must be positive, got {a}")
    if a.size == 1:
        rng.standard_gamma(a)
        return np.ones(1)
    g = rng.standard_gamma(a)
    total = g.sum()
    if total > 0 and np.isfinite(total):
        return g / total
    logg = np.log(rng.standard_gamma(a + 1.0)) + np.log(rng.random(a.size)) / a
    logg -= logg.max()
    p = np.exp(logg)
    return p / p.sum()


def sample_invgamma(shape: float, scale: float, rng: np.random.Generator) -> float:
    """Draw from IG(shape, scale), i.e. scale / Gamma(shape, 1)."""
    if not (shape > 0 and scale > 0) or not np.isfinite(shape) or not np.isfinite(scale):
        raise ValueError(f"inverse gamma needs positive parameters, got ({shape}, {scale})")
    return float(scale / rng.standard_gamma(shape))


def categorical_from_uniform(weights: np.ndarray, u: float) -> int:
    """Inverse-CDF categorical pick from nonnegative weights and u in [0, 1)."""
    cdf = np.cumsum(weights)
    total = cdf[-1]
    idx = int(np.searchsorted(cdf, u * total, side="right"))
    if idx >= len(cdf):
        idx = int(np.flatnonzero(weights > 0)[-1])
    return idx


def _check_weights(w: np.ndarray) -> None:
    if w.ndim != 1 or w.size == 0:
        raise ValueError("weights must be a non-empty vector")
    if not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite")
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    if not np.any(w > 0):
        raise ValueError("at least one weight must be positive")


def sample_categorical(weights, rng: np.random.Generator) -> int:
    """Index drawn with probability proportional to ``weights``."""
    w = np.asarray(weights, dtype=np.float64)
    _check_weights(w)
    return categorical_from_uniform(w, rng.random())


def normalize_logweights(logw) -> np.ndarray:
    """Probabilities from log-weights, stabilized by subtracting the max.

    ``-inf`` entries get probability zero; ``+inf`` and NaN are rejected.
    """
    lw = np.asarray(logw, dtype=np.float64)
    if lw.ndim != 1 or lw.size == 0:
        raise ValueError("log-weights must be a non-empty vector")
    if np.any(np.isnan(lw)) or np.any(lw == np.inf):
        raise ValueError("log-weights must not be NaN or +inf")
    top = lw.max()
    if top == -np.inf:
        raise ValueError("all log-weights are -inf")
    w = np.exp(lw - top)
    return w / w.sum()


def sample_categorical_log(logw, rng: np.random.Generator) -> int:
    """Log-domain companion of :func:`sample_categorical`."""
    return categorical_from_uniform(normalize_logweights(logw), rng.random())
