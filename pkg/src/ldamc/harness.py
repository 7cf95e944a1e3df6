"""Monte Carlo driver: SNR sweeps, PCC tables, config and result files.

Config files
------------
Flat UTF-8 text, one ``key = value`` per line, ``#`` starts a comment. List
values are comma separated. Unknown keys are rejected. Every key is listed
in :data:`CONFIG_KEYS` with its meaning; :func:`dump_config` writes them out
as comments.

Result CSV
----------
Header ``snr_db,mode,gamma,n_trials,pcc,ci_lo,ci_hi,confusion_flat,secs_per_trial``.
``confusion_flat`` is the row-major confusion matrix (rows = true
constellation, columns = estimate, in configured order) joined by spaces.

IQ files
--------
Whitespace-separated ``index re im`` lines, indices 0..N-1 in order. Blank
lines and ``#`` comments are ignored.
"""

from __future__ import annotations

import csv
import logging
import math
import multiprocessing as mp
import time
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .channel_sim import (
    ReceivedBlock,
    rayleigh_taps,
    snr_db_to_sigma2,
    transmit,
    two_path_taps,
)
from .constellations import ConstellationSet, build_set, canonical_kind
from .gibbs_core import (
    SCHEDULES,
    Annealing,
    ChainConfig,
    Priors,
    canonical_mode,
    classify,
    run_chain,
)
from .oracle import exact_posterior_oracle
from .rand_dists import rng_stream

log = logging.getLogger(__name__)

CSV_HEADER = ["snr_db", "mode", "gamma", "n_trials", "pcc", "ci_lo", "ci_hi",
              "confusion_flat", "secs_per_trial"]

# stream tags keep data and chain draws in separate rng families
_DATA_STREAM = 0
_CHAIN_STREAM = 1


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    constellations: tuple = ("qpsk", "8psk", "16qam")
    channel: str = "tapped"
    power_profile_db: tuple = (0.0, -0.9, -4.9)
    path_delays: tuple = (0.0, 1.3)
    path_powers_db: tuple = (0.0, -0.9)
    rolloff: float = 0.3
    taps: int = 6
    block_length: int = 100
    snr_db: tuple = (0.0, 5.0, 10.0, 15.0, 20.0)
    trials: int = 100
    samples: int = 300
    burn_in: int = 100
    modes: tuple = ("latent_dirichlet", "superconstellation")
    gamma: tuple = (15.0,)
    alpha_h: float = 1e3
    alpha0: float = 1e-2
    beta0: float = 1e-2
    annealing: str = "none"
    rho0: float = 1.0
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if not self.snr_db:
            raise ConfigError("snr_db grid must not be empty")
        if self.channel not in ("tapped", "two_path"):
            raise ConfigError(f"channel must be 'tapped' or 'two_path', got {self.channel!r}")
        if self.block_length < self.L:
            raise ConfigError(f"block_length ({self.block_length}) must be >= L ({self.L})")
        if self.channel == "two_path" and len(self.path_delays) != len(self.path_powers_db):
            raise ConfigError("path_delays and path_powers_db differ in length")
        if self.annealing not in SCHEDULES:
            raise ConfigError(f"annealing must be one of {', '.join(SCHEDULES)}")
        if not self.modes:
            raise ConfigError("modes must not be empty")
        if "latent_dirichlet" in self.modes and (not self.gamma or min(self.gamma) <= 0):
            raise ConfigError("latent_dirichlet needs positive gamma values")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        try:
            build_set(self.constellations)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def L(self) -> int:
        return len(self.power_profile_db) if self.channel == "tapped" else int(self.taps)

    def variants(self) -> list:
        """(mode, gamma) pairs run on every simulated block, in table order."""
        out = []
        for mode in self.modes:
            if mode == "latent_dirichlet":
                out.extend((mode, float(g)) for g in self.gamma)
            else:
                out.append((mode, 0.0))
        return out

    def chain_config(self, mode: str) -> ChainConfig:
        ann = Annealing(self.annealing, self.rho0, self.burn_in) if self.annealing != "none" else Annealing()
        return ChainConfig(self.samples, self.burn_in, mode, ann)

    def priors(self, gamma: float) -> Priors:
        K = len(self.constellations)
        return Priors(np.full(K, gamma), self.alpha_h, self.alpha0, self.beta0)


def _floats(text):
    return tuple(float(x) for x in text.split(",") if x.strip())


def _labels(text):
    return tuple(canonical_kind(x) for x in text.split(",") if x.strip())


def _modes(text):
    return tuple(canonical_mode(x) for x in text.split(",") if x.strip())


def _fmt_list(values):
    return ", ".join(_fmt_num(v) if not isinstance(v, str) else v for v in values)


def _fmt_num(v):
    return repr(float(v)) if not isinstance(v, (int, np.integer)) or isinstance(v, bool) else str(v)


# key -> (parser, description)
CONFIG_KEYS = {
    "constellations": (_labels, "candidate set, e.g. qpsk, 8psk, 16qam"),
    "channel": (str, "tapped (independent Rayleigh taps) or two_path (raised-cosine multipath)"),
    "power_profile_db": (_floats, "tapped: per-tap average power in dB; L is its length"),
    "path_delays": (_floats, "two_path: path delays in symbol periods"),
    "path_powers_db": (_floats, "two_path: path powers in dB"),
    "rolloff": (float, "two_path: raised-cosine roll-off"),
    "taps": (int, "two_path: channel length L in symbol periods"),
    "block_length": (int, "received samples per block (N)"),
    "snr_db": (_floats, "SNR grid in dB, SNR = 1/sigma^2"),
    "trials": (int, "Monte Carlo blocks per SNR point"),
    "samples": (int, "retained Gibbs sweeps (M)"),
    "burn_in": (int, "discarded Gibbs sweeps (M0)"),
    "modes": (_modes, "samplers: latent_dirichlet, superconstellation, conventional"),
    "gamma": (_floats, "Dirichlet concentration values for latent_dirichlet (one run each)"),
    "alpha_h": (float, "prior variance of each channel tap"),
    "alpha0": (float, "inverse-gamma shape of the noise prior"),
    "beta0": (float, "inverse-gamma scale of the noise prior"),
    "annealing": (str, "none, linear or logarithmic (reaches rho = 1 at the end of burn-in)"),
    "rho0": (float, "initial annealing temperature"),
    "seed": (int, "master seed"),
    "workers": (int, "worker processes"),
}


def _parse_value(key: str, raw: str, where: str):
    if key not in CONFIG_KEYS:
        raise ConfigError(f"{where}: unknown key {key!r}")
    parser = CONFIG_KEYS[key][0]
    try:
        return parser(raw.strip())
    except ValueError as exc:
        raise ConfigError(f"{where}: bad value for {key!r}: {exc}") from None


def parse_config(text: str, source: str = "<config>", overrides: Optional[dict] = None) -> ExperimentConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        where = f"{source}:{lineno}"
        if "=" not in body:
            raise ConfigError(f"{where}: expected 'key = value', got {body!r}")
        key, raw = (part.strip() for part in body.split("=", 1))
        if key in values:
            raise ConfigError(f"{where}: duplicate key {key!r}")
        values[key] = _parse_value(key, raw, where)
    for key, raw in (overrides or {}).items():
        values[key] = _parse_value(key, str(raw), "override")
    try:
        return ExperimentConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path, overrides: Optional[dict] = None) -> ExperimentConfig:
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), str(path), overrides)


def dump_config(cfg: ExperimentConfig) -> str:
    lines = []
    for f in fields(cfg):
        value = getattr(cfg, f.name)
        lines.append(f"# {CONFIG_KEYS[f.name][1]}")
        if isinstance(value, tuple):
            text = _fmt_list(value)
        elif isinstance(value, str):
            text = value
        else:
            text = _fmt_num(value)
        lines.append(f"{f.name} = {text}")
    return "\n".join(lines) + "\n"


def save_config(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(dump_config(cfg), encoding="utf-8")


PRESET_DIR = Path(__file__).with_name("presets")


def preset_path(name: str) -> Path:
    path = PRESET_DIR / (name if name.endswith(".cfg") else f"{name}.cfg")
    if not path.exists():
        known = sorted(p.stem for p in PRESET_DIR.glob("*.cfg"))
        raise ConfigError(f"no preset {name!r}; available: {', '.join(known)}")
    return path


# ---------------------------------------------------------------- IQ files

def read_iq(path) -> np.ndarray:
    samples = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        parts = body.split()
        if len(parts) != 3:
            raise ValueError(f"{path}:{lineno}: expected 'index re im'")
        idx, re_, im = int(parts[0]), float(parts[1]), float(parts[2])
        if idx != len(samples):
            raise ValueError(f"{path}:{lineno}: expected index {len(samples)}, got {idx}")
        samples.append(complex(re_, im))
    if not samples:
        raise ValueError(f"{path}: no samples")
    return np.asarray(samples, dtype=np.complex128)


def write_iq(path, samples) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for k, v in enumerate(np.asarray(samples, dtype=np.complex128)):
            fh.write(f"{k} {float(v.real)!r} {float(v.imag)!r}\n")


# ---------------------------------------------------------------- trials

@dataclass(frozen=True)
class TrialOutcome:
    snr_index: int
    trial_index: int
    mode: str
    gamma: float
    true_index: int
    est_index: int
    score: np.ndarray = field(repr=False)
    secs: float = 0.0


def simulate_block(cfg: ExperimentConfig, cset: ConstellationSet, snr_index: int,
                   trial_index: int):
    """True constellation index and received block for one trial."""
    rng = rng_stream(cfg.seed, _DATA_STREAM, snr_index, trial_index)
    true_index = int(rng.integers(len(cset)))
    if cfg.channel == "tapped":
        taps = rayleigh_taps(cfg.power_profile_db, rng)
    else:
        taps = two_path_taps(cfg.path_delays, cfg.path_powers_db, cfg.rolloff, cfg.taps, rng)
    sigma2 = snr_db_to_sigma2(cfg.snr_db[snr_index])
    block = transmit(cset.members[true_index], taps, sigma2, cfg.block_length, rng)
    return true_index, block


def gibbs_classifier(obs: ReceivedBlock, cset: ConstellationSet, cfg: ExperimentConfig,
                     mode: str, gamma: float, rng: np.random.Generator):
    result = run_chain(obs, cset, cfg.priors(gamma), cfg.chain_config(mode), rng)
    est, score = classify(result, cset)
    return cset.ids.index(est), score


def run_trial(cfg: ExperimentConfig, snr_index: int, trial_index: int,
              classifier: Optional[Callable] = None) -> list:
    """Simulate one block and classify it with every configured variant.

    All variants see the same block. Draws depend only on
    (seed, snr_index, trial_index, variant index), never on scheduling.
    """
    classifier = classifier or gibbs_classifier
    cset = build_set(cfg.constellations)
    true_index, block = simulate_block(cfg, cset, snr_index, trial_index)
    out = []
    for v, (mode, gamma) in enumerate(cfg.variants()):
        rng = rng_stream(cfg.seed, _CHAIN_STREAM, snr_index, trial_index, v)
        t0 = time.perf_counter()
        est, score = classifier(block, cset, cfg, mode, gamma, rng)
        out.append(TrialOutcome(snr_index, trial_index, mode, gamma, true_index, int(est),
                                np.asarray(score, dtype=np.float64),
                                time.perf_counter() - t0))
    return out


# ---------------------------------------------------------------- oracle fixtures

@dataclass(frozen=True)
class OracleInstance:
    obs: ReceivedBlock
    taps: np.ndarray
    sigma2: float
    true_id: str
    index: int
    cset: ConstellationSet = field(repr=False)
    priors: Priors = field(repr=False)


def oracle_instance(seed: int, index: int, N: int = 4, L: int = 1, gamma: float = 1.0,
                    snr_db_range=(5.0, 20.0)) -> OracleInstance:
    """Random tiny block with known channel and noise variance.

    The SNR is drawn uniformly in dB from ``snr_db_range`` so that the
    posterior is neither flat nor degenerate.
    """
    cset = build_set(("qpsk", "8psk", "16qam"))
    rng = rng_stream(seed, 2, index)
    true_index = int(rng.integers(len(cset)))
    taps = rayleigh_taps(np.zeros(L), rng)
    sigma2 = snr_db_to_sigma2(rng.uniform(*snr_db_range))
    obs = transmit(cset.members[true_index], taps, sigma2, N, rng)
    priors = Priors(np.full(len(cset), gamma))
    return OracleInstance(obs, taps.taps, sigma2, cset.ids[true_index], index, cset, priors)


def compare_with_oracle(inst: OracleInstance, samples: int = 5000, burn_in: int = 1000,
                        seed: int = 0):
    """(exact posterior mean, chain estimate) with channel and noise pinned."""
    exact = exact_posterior_oracle(inst.obs, inst.cset, inst.priors, inst.taps, inst.sigma2)
    rng = rng_stream(seed, 3, inst.index)
    result = run_chain(inst.obs, inst.cset, inst.priors, ChainConfig(samples, burn_in),
                       rng, known_taps=inst.taps, known_sigma2=inst.sigma2)
    return exact, classify(result, inst.cset)[1]


# ---------------------------------------------------------------- aggregation

def wilson_interval(successes: int, n: int, z: float = 1.959963984540054):
    if n <= 0:
        return 0.0, 1.0
    p = successes / n
    denom = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    # exact at the ends; rounding can otherwise leave p just outside
    return min(p, max(0.0, centre - half)), max(p, min(1.0, centre + half))


@dataclass
class PccRow:
    snr_db: float
    mode: str
    gamma: float
    confusion: np.ndarray
    secs_per_trial: float

    @property
    def n_trials(self) -> int:
        return int(self.confusion.sum())

    @property
    def pcc(self) -> float:
        n = self.n_trials
        return float(np.trace(self.confusion)) / n if n else float("nan")

    @property
    def interval(self):
        return wilson_interval(int(np.trace(self.confusion)), self.n_trials)


@dataclass
class PccTable:
    labels: tuple
    rows: list = field(default_factory=list)
    partial: bool = False

    def get(self, snr_db: float, mode: str, gamma: float = 0.0) -> PccRow:
        mode = canonical_mode(mode)
        for row in self.rows:
            if row.snr_db == snr_db and row.mode == mode and row.gamma == gamma:
                return row
        raise KeyError((snr_db, mode, gamma))

    def pcc(self, snr_db: float, mode: str, gamma: float = 0.0) -> float:
        return self.get(snr_db, mode, gamma).pcc


def aggregate(cfg: ExperimentConfig, outcomes: Sequence[TrialOutcome], partial=False) -> PccTable:
    K = len(cfg.constellations)
    table = PccTable(tuple(cfg.constellations), partial=partial)
    by_key = {}
    for o in outcomes:
        by_key.setdefault((o.snr_index, o.mode, o.gamma), []).append(o)
    for s, snr in enumerate(cfg.snr_db):
        for mode, gamma in cfg.variants():
            group = by_key.get((s, mode, gamma), [])
            if not group:
                continue
            conf = np.zeros((K, K), dtype=np.int64)
            for o in group:
                conf[o.true_index, o.est_index] += 1
            secs = float(np.mean([o.secs for o in group]))
            table.rows.append(PccRow(float(snr), mode, float(gamma), conf, secs))
    return table


def _trial_task(args):
    cfg, s, t, classifier = args
    return run_trial(cfg, s, t, classifier)


def run_sweep(cfg: ExperimentConfig, workers: Optional[int] = None,
              classifier: Optional[Callable] = None,
              progress: Optional[Callable] = None) -> PccTable:
    """Run every (SNR, trial) and aggregate into a :class:`PccTable`.

    The table does not depend on ``workers``. On ``KeyboardInterrupt`` the
    trials finished so far are aggregated and the table is marked partial.
    """
    workers = workers or cfg.workers
    tasks = [(cfg, s, t, classifier)
             for s in range(len(cfg.snr_db)) for t in range(cfg.trials)]
    outcomes = []
    partial = False
    try:
        if workers <= 1:
            for task in tasks:
                outcomes.extend(_trial_task(task))
                if progress:
                    progress(len(outcomes) // len(cfg.variants()), len(tasks))
        else:
            ctx = mp.get_context("spawn") if classifier is None else mp.get_context()
            with ctx.Pool(workers) as pool:
                for res in pool.imap_unordered(_trial_task, tasks, chunksize=4):
                    outcomes.extend(res)
                    if progress:
                        progress(len(outcomes) // len(cfg.variants()), len(tasks))
    except KeyboardInterrupt:
        log.warning("interrupted after %d of %d trials", len(outcomes) // len(cfg.variants()),
                    len(tasks))
        partial = True
    outcomes.sort(key=lambda o: (o.snr_index, o.trial_index, o.mode, o.gamma))
    return aggregate(cfg, outcomes, partial)


def write_results(table: PccTable, path, timing: bool = True) -> None:
    """Write ``table`` as CSV; ``timing=False`` blanks the wall-time column."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for row in table.rows:
            lo, hi = row.interval
            w.writerow([
                f"{row.snr_db:g}", row.mode, f"{row.gamma:g}", row.n_trials,
                f"{row.pcc:.6f}", f"{lo:.6f}", f"{hi:.6f}",
                " ".join(str(int(x)) for x in row.confusion.ravel()),
                f"{row.secs_per_trial:.6f}" if timing else "",
            ])


def read_results(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def with_overrides(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    return replace(cfg, **kw)
