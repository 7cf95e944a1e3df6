"""Symbol-rate frequency-selective channel model ``r = S h + w``."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .constellations import Constellation
from .rand_dists import cnormal


@dataclass(frozen=True)
class ChannelTaps:
    taps: np.ndarray

    def __post_init__(self):
        taps = np.atleast_1d(np.asarray(self.taps, dtype=np.complex128))
        if taps.ndim != 1 or taps.size < 1:
            raise ValueError("channel needs at least one tap")
        if not np.all(np.isfinite(taps)):
            raise ValueError("channel taps must be finite")
        object.__setattr__(self, "taps", taps)

    @property
    def L(self) -> int:
        return self.taps.size

    @property
    def energy(self) -> float:
        return float(np.sum(np.abs(self.taps) ** 2))


@dataclass(frozen=True)
class Truth:
    """Simulation ground truth attached to a generated block."""

    constellation: str
    symbols: np.ndarray = field(repr=False)
    taps: np.ndarray = field(repr=False)
    sigma2: float


@dataclass(frozen=True)
class ReceivedBlock:
    """N received samples and the channel length L the receiver assumes."""

    samples: np.ndarray
    L: int
    truth: Optional[Truth] = None

    def __post_init__(self):
        r = np.atleast_1d(np.asarray(self.samples, dtype=np.complex128))
        if r.ndim != 1 or r.size < 1:
            raise ValueError("received block must hold at least one sample")
        if not np.all(np.isfinite(r)):
            raise ValueError("received samples must be finite")
        if int(self.L) < 1:
            raise ValueError(f"L must be >= 1, got {self.L}")
        object.__setattr__(self, "samples", r)
        object.__setattr__(self, "L", int(self.L))

    @property
    def N(self) -> int:
        return self.samples.size

    @property
    def n_symbols(self) -> int:
        return self.N + self.L - 1


def db_to_linear(db) -> np.ndarray:
    return 10.0 ** (np.asarray(db, dtype=np.float64) / 10.0)


def snr_db_to_sigma2(snr_db: float) -> float:
    """Noise variance for SNR = 1 / sigma^2 given in dB."""
    return float(10.0 ** (-float(snr_db) / 10.0))


def rayleigh_taps(power_profile_db: Sequence[float], rng: np.random.Generator) -> ChannelTaps:
    """Independent Rayleigh taps with variances from the profile, summing to 1."""
    prof = np.asarray(power_profile_db, dtype=np.float64)
    if prof.ndim != 1 or prof.size == 0:
        raise ValueError("power profile must be a non-empty sequence")
    if not np.all(np.isfinite(prof)):
        raise ValueError("power profile must be finite")
    var = db_to_linear(prof)
    var /= var.sum()
    return ChannelTaps(np.sqrt(var) * cnormal(rng, prof.size))


def raised_cosine(t, rolloff: float, T: float = 1.0):
    """Raised-cosine pulse at time ``t`` (scalar or array).

    At ``|t| = T / (2 rolloff)`` the 0/0 form is replaced by its limit
    ``(pi/4) sinc(1 / (2 rolloff))``.
    """
    if not T > 0:
        raise ValueError("symbol period must be positive")
    x = np.asarray(t, dtype=np.float64) / T
    base = np.sinc(x)
    if rolloff == 0:
        out = base
    else:
        b = float(rolloff)
        denom = 1.0 - (2.0 * b * x) ** 2
        singular = np.abs(denom) < 1e-12
        safe = np.where(singular, 1.0, denom)
        out = np.where(
            singular,
            np.pi / 4 * np.sinc(1.0 / (2.0 * b)),
            base * np.cos(np.pi * b * x) / safe,
        )
    return out.item() if np.ndim(out) == 0 else out


def path_tap_matrix(delays, rolloff: float, L: int, T: float = 1.0) -> np.ndarray:
    """``G[k, p] = rc(kT - delay_p)``: symbol-rate samples of each path's pulse."""
    k = np.arange(L)[:, None] * T
    return np.asarray(raised_cosine(k - np.asarray(delays, dtype=np.float64)[None, :], rolloff, T))


def two_path_gain_variances(delays, powers_db, rolloff: float, L: int, T: float = 1.0) -> np.ndarray:
    """Per-path gain variances that make E[||h||^2] = 1 for the truncated taps."""
    G = path_tap_matrix(delays, rolloff, L, T)
    var = db_to_linear(powers_db)
    expected = float(np.sum(var * np.sum(G ** 2, axis=0)))
    if expected <= 0:
        raise ValueError("paths have no energy inside the tap window")
    return var / expected


def two_path_taps(
    delays: Sequence[float],
    powers_db: Sequence[float],
    rolloff: float,
    L: int,
    rng: np.random.Generator,
    T: float = 1.0,
) -> ChannelTaps:
    """Multipath channel seen through a raised-cosine pulse, sampled at kT.

    Each path gets an independent Rayleigh gain. The gain variances are
    scaled analytically so that the expected tap energy is one; individual
    draws still fluctuate.
    """
    if int(L) < 1:
        raise ValueError(f"L must be positive, got {L}")
    delays = np.asarray(delays, dtype=np.float64)
    powers_db = np.asarray(powers_db, dtype=np.float64)
    if delays.shape != powers_db.shape or delays.ndim != 1 or delays.size == 0:
        raise ValueError("delays and powers must be non-empty and of equal length")
    var = two_path_gain_variances(delays, powers_db, rolloff, int(L), T)
    gains = np.sqrt(var) * cnormal(rng, delays.size)
    G = path_tap_matrix(delays, rolloff, int(L), T)
    return ChannelTaps(G @ gains)


def convolution_matrix(symbols, N: int, L: int) -> np.ndarray:
    """N x L matrix whose row k is ``[s_k, s_{k-1}, ..., s_{k-L+1}]``.

    ``symbols`` holds ``s_{-L+1} .. s_{N-1}`` in that order.
    """
    s = np.asarray(symbols, dtype=np.complex128)
    if N < 1 or L < 1:
        raise ValueError("N and L must be positive")
    if s.shape != (N + L - 1,):
        raise ValueError(f"expected {N + L - 1} symbols for N={N}, L={L}, got {s.shape}")
    return np.ascontiguousarray(sliding_window_view(s, L)[:, ::-1])


def transmit(
    true_constellation: Constellation,
    taps: ChannelTaps,
    sigma2: float,
    N: int,
    rng: np.random.Generator,
) -> ReceivedBlock:
    """Draw uniform symbols and pass them through the channel with AWGN."""
    if sigma2 < 0:
        raise ValueError("noise variance must be nonnegative")
    L = taps.L
    idx = rng.integers(true_constellation.size, size=N + L - 1)
    symbols = true_constellation.points[idx]
    r = convolution_matrix(symbols, N, L) @ taps.taps
    noise = cnormal(rng, N)
    if sigma2 > 0:
        r = r + np.sqrt(sigma2) * noise
    truth = Truth(true_constellation.id, symbols, taps.taps.copy(), float(sigma2))
    return ReceivedBlock(r, L, truth)
