"""Acceptance criteria, one test each, at the stated tolerances.

Each test records a PASS/FAIL line that is printed in the pytest terminal
summary, so ``pytest tests/test_acceptance.py`` shows the verdicts without
``-s``.
"""

import json
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE, make_block
from ldamc.channel_sim import ReceivedBlock, convolution_matrix
from ldamc.constellations import KINDS, build_set
from ldamc.gibbs_core import (
    ChainConfig,
    Priors,
    channel_posterior_params,
    classify,
    gibbs_sweep,
    initial_state,
    run_chain,
    sample_channel,
    sample_noise_var,
)
from ldamc.harness import load_config, preset_path, run_sweep, with_overrides, write_results
from ldamc.oracle import exact_posterior_oracle
from ldamc.rand_dists import rng_stream
from ldamc.selftest import run_selftest

FIXTURE = Path(__file__).parent / "fixtures" / "oracle_n4_l1.json"

pytestmark = pytest.mark.slow


def report(number, name, ok, detail, check=True):
    line = f"{'PASS' if ok else 'FAIL'}  [{number}] {name}: {detail}"
    ACCEPTANCE.append(line)
    print(line)
    if check:
        assert ok, line


def test_1_oracle_equivalence():
    data = json.loads(FIXTURE.read_text())
    cset = build_set(KINDS)
    priors = Priors.uniform(3, data["gamma"])
    t0 = time.perf_counter()
    hits, worst = 0, []
    for rec in data["instances"]:
        obs = ReceivedBlock(np.array(rec["r_re"]) + 1j * np.array(rec["r_im"]), data["L"])
        taps = np.array(rec["taps_re"]) + 1j * np.array(rec["taps_im"])
        res = run_chain(obs, cset, priors, ChainConfig(5000, 1000),
                        rng_stream(data["seed"], 3, rec["index"]),
                        known_taps=taps, known_sigma2=rec["sigma2"])
        err = float(np.max(np.abs(classify(res, cset)[1] - np.array(rec["posterior_mean"]))))
        worst.append(err)
        hits += err <= 0.05
    secs = time.perf_counter() - t0
    report(1, "oracle equivalence", hits >= 9 and secs < 120,
           f"{hits}/10 within 0.05 (max |diff| {max(worst):.4f}), {secs:.1f}s")


def test_1b_fixture_matches_live_oracle():
    # guards the frozen values against drift in the enumeration code
    data = json.loads(FIXTURE.read_text())
    cset = build_set(KINDS)
    worst = 0.0
    for rec in data["instances"]:
        obs = ReceivedBlock(np.array(rec["r_re"]) + 1j * np.array(rec["r_im"]), data["L"])
        taps = np.array(rec["taps_re"]) + 1j * np.array(rec["taps_im"])
        live = exact_posterior_oracle(obs, cset, Priors.uniform(3, data["gamma"]), taps, rec["sigma2"])
        worst = max(worst, float(np.max(np.abs(live - rec["posterior_mean"]))))
    assert worst < 1e-12


def test_2_conjugacy():
    t0 = time.perf_counter()
    cset = build_set(KINDS)
    # short block so the channel posterior has strong cross-correlations
    obs = make_block(cset, 500, N=8, L=3, snr_db=10.0)
    pri = Priors.uniform(3)
    state = initial_state(obs, cset, pri, "ld", rng_stream(501))
    S = convolution_matrix(state.symbols, obs.N, obs.L)
    mean, cov = channel_posterior_params(S, obs.samples, state.sigma2, pri)
    rng = rng_stream(502)
    n = 100_000
    draws = np.array([sample_channel(state, obs, pri, rng).taps for _ in range(n)])
    # h has L complex coordinates; the complex mean has variance cov_ii / n
    dev = np.abs(draws.mean(axis=0) - mean)
    z = dev / np.sqrt(np.diag(cov).real / n)
    split = draws.mean(axis=0) - mean
    z_split = np.max(np.abs(np.concatenate([split.real, split.imag]))
                     / np.tile(np.sqrt(np.diag(cov).real / 2 / n), 2))
    mean_ok = bool(np.all(z <= 3))
    centred = draws - mean
    emp = centred.T @ centred.conj() / n
    scale = np.sqrt(np.outer(np.diag(cov).real, np.diag(cov).real))
    cov_err = float(np.max(np.abs(emp - cov) / scale))

    ig = np.array([sample_noise_var(state, obs, pri, rng) for _ in range(n)])
    alpha = pri.alpha0 + obs.N
    beta = pri.beta0 + float(np.sum(np.abs(state.resid) ** 2))
    ig_err = abs(ig.mean() / (beta / (alpha - 1)) - 1)
    secs = time.perf_counter() - t0
    ok = mean_ok and cov_err <= 0.05 and ig_err <= 0.03 and secs < 60
    report(2, "conjugacy", ok,
           f"h mean max {z.max():.2f} SE per complex tap ({z_split:.2f} SE per real part), "
           f"cov max err {100 * cov_err:.2f}%, IG mean err {100 * ig_err:.2f}%, {secs:.1f}s")


_CONVENTIONAL = {}


def _conventional_chains():
    """50 conventional chains started away from the truth, tracked per sweep."""
    if _CONVENTIONAL:
        return _CONVENTIONAL
    cset = build_set(KINDS)
    pri = Priors.uniform(3, 0.0)
    cfg = ChainConfig(400, 0, "conventional")
    moved, out_of_support, non_subset = [], 0, 0
    for t in range(50):
        kind = t % 3
        start = (kind + 1 + t % 2) % 3
        obs = make_block(cset, 600 + t, kind=kind, N=100, snr_db=15.0)
        rng = rng_stream(700 + t)
        state = initial_state(obs, cset, pri, "conventional", rng, init_constellation=start)
        allowed = set(cset.member_point_indices(start).tolist())
        current = start
        for sweep in range(cfg.M):
            gibbs_sweep(state, obs, cset, pri, cfg, sweep, rng)
            out_of_support += len(set(state.point_idx.tolist()) - allowed)
            label = int(state.labels[0])
            if label != current:
                target = set(cset.member_point_indices(label).tolist())
                non_subset += not target < set(cset.member_point_indices(current).tolist())
                moved.append((t, cset.ids[kind], cset.ids[current], cset.ids[label], sweep))
                current = label
    _CONVENTIONAL.update(moved=moved, out_of_support=out_of_support, non_subset=non_subset)
    return _CONVENTIONAL


@pytest.mark.xfail(strict=True, reason="the exact A conditional moves 8PSK -> QPSK once every "
                                       "symbol sits on the shared QPSK points")
def test_3_conventional_failure():
    moved = _conventional_chains()["moved"]
    chains = sorted({m[0] for m in moved})
    detail = "; ".join(f"chain {t}: truth {k}, {a} -> {b} at sweep {sw}" for t, k, a, b, sw in moved)
    report(3, "conventional Gibbs never changes A", not moved,
           f"{len(chains)}/50 chains changed label" + (f" ({detail})" if moved else ""))


def test_3b_conventional_support():
    res = _conventional_chains()
    ok = res["out_of_support"] == 0 and res["non_subset"] == 0
    report("3b", "conventional Gibbs never leaves its starting support", ok,
           f"{res['out_of_support']} symbols outside the starting constellation, "
           f"{res['non_subset']} moves to a non-subset constellation, 50 chains x 400 sweeps")


def test_4_fig3_trend(tmp_path):
    cfg = with_overrides(load_config(preset_path("fig3")), gamma=(0.1, 15.0))
    t0 = time.perf_counter()
    table = run_sweep(cfg)
    write_results(table, tmp_path / "fig3.csv")
    secs = time.perf_counter() - t0
    worst_drop = 0.0
    curves = {}
    for mode, gamma in cfg.variants():
        pcc = [table.pcc(s, mode, gamma) for s in cfg.snr_db]
        curves[(mode, gamma)] = pcc
        worst_drop = max(worst_drop, max(a - b for a, b in zip(pcc, pcc[1:])))
    ld15 = table.pcc(20.0, "latent_dirichlet", 15.0)
    ld01 = table.pcc(20.0, "latent_dirichlet", 0.1)
    sup = table.pcc(20.0, "superconstellation")
    ok_a = worst_drop <= 0.08
    ok_b = ld15 >= 0.85 and ld15 >= sup + 0.03
    ok_c = ld15 >= ld01
    detail = "; ".join(f"{m[:5]} g={g:g}: {' '.join(f'{p:.2f}' for p in c)}"
                       for (m, g), c in curves.items())
    report("4a", "fig3 preset: PCC non-decreasing in SNR", ok_a,
           f"largest drop {worst_drop:.2f} | {detail}", check=False)
    report("4b", "fig3 preset: gamma=15 at 20 dB", ok_b,
           f"LD {ld15:.2f} (>= 0.85), baseline {sup:.2f} (margin {ld15 - sup:+.2f}), {secs:.0f}s",
           check=False)
    report("4c", "fig3 preset: gamma=15 vs gamma=0.1 at 20 dB", ok_c, f"{ld15:.2f} vs {ld01:.2f}",
           check=False)
    assert ok_a and ok_b and ok_c


def test_5_fig4_block_length():
    base = with_overrides(load_config(preset_path("fig4")), snr_db=(20.0,))
    t0 = time.perf_counter()
    short = run_sweep(with_overrides(base, block_length=100))
    long = run_sweep(with_overrides(base, block_length=400))
    secs = time.perf_counter() - t0
    ld100 = short.pcc(20.0, "latent_dirichlet", 15.0)
    ld400 = long.pcc(20.0, "latent_dirichlet", 15.0)
    sup100 = short.pcc(20.0, "superconstellation")
    sup400 = long.pcc(20.0, "superconstellation")
    ok = ld400 >= ld100 - 0.02 and ld400 >= sup400
    report(5, "fig4 preset: longer blocks help, LD beats baseline", ok,
           f"LD N=100 {ld100:.2f} N=400 {ld400:.2f}; baseline N=100 {sup100:.2f} "
           f"N=400 {sup400:.2f}; {secs:.0f}s")


def test_6_determinism(tmp_path):
    cfg = with_overrides(load_config(preset_path("fig3")), snr_db=(5.0, 20.0), trials=8,
                         gamma=(1.0, 15.0), samples=30, burn_in=10, seed=99)
    blobs = []
    for w in (1, 2, 3):
        path = tmp_path / f"w{w}.csv"
        write_results(run_sweep(cfg, workers=w), path, timing=False)
        blobs.append(path.read_bytes())
    ok = blobs[0] == blobs[1] == blobs[2]
    report(6, "worker-count determinism", ok, "1, 2 and 3 workers give byte-identical CSV")


def test_7_selftest():
    lines = []
    t0 = time.perf_counter()
    ok = run_selftest(out=lines.append)
    secs = time.perf_counter() - t0
    failed = [ln for ln in lines if ln.startswith("FAIL")]
    report(7, "invariant suite", ok and secs < 300,
           f"{len(lines) - len(failed)}/{len(lines)} checks pass in {secs:.0f}s"
           + (f"; {failed}" if failed else ""))
