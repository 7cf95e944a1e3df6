import csv
import subprocess
import sys
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ldamc import cli
from ldamc.constellations import build_set
from ldamc.harness import (
    CSV_HEADER,
    ConfigError,
    ExperimentConfig,
    PccTable,
    aggregate,
    dump_config,
    load_config,
    parse_config,
    preset_path,
    read_iq,
    read_results,
    run_sweep,
    run_trial,
    save_config,
    simulate_block,
    wilson_interval,
    with_overrides,
    write_iq,
    write_results,
)

SMALL = ExperimentConfig(block_length=20, snr_db=(10.0, 20.0), trials=4, samples=10, burn_in=5,
                         gamma=(1.0, 15.0), seed=77)


def perfect(block, cset, cfg, mode, gamma, rng):
    est = cset.ids.index(block.truth.constellation)
    score = np.eye(len(cset))[est]
    return est, score


def always_first(block, cset, cfg, mode, gamma, rng):
    return 0, np.eye(len(cset))[0]


# ------------------------------------------------------------ config files

def test_config_round_trip(tmp_path):
    cfg = ExperimentConfig(channel="two_path", gamma=(0.1, 15.0), snr_db=(-2.5, 7.0),
                           annealing="linear", rho0=3.0, seed=9)
    path = tmp_path / "c.cfg"
    save_config(cfg, path)
    assert load_config(path) == cfg
    assert dump_config(load_config(path)) == dump_config(cfg)


def test_dump_documents_every_key():
    text = dump_config(ExperimentConfig())
    keys = [ln.split("=")[0].strip() for ln in text.splitlines() if ln and not ln.startswith("#")]
    comments = [ln for ln in text.splitlines() if ln.startswith("#")]
    assert len(keys) == len(comments) == len(set(keys))


@pytest.mark.parametrize("name", ["fig3", "fig4"])
def test_presets_load(name):
    cfg = load_config(preset_path(name))
    assert cfg.trials == 100 and cfg.snr_db == (0.0, 5.0, 10.0, 15.0, 20.0)


def test_fig3_preset_contents():
    cfg = load_config(preset_path("fig3"))
    assert cfg.L == 3 and cfg.gamma == (0.1, 0.5, 1.0, 10.0, 15.0)
    assert cfg.variants()[-1] == ("superconstellation", 0.0)


def test_fig4_preset_contents():
    cfg = load_config(preset_path("fig4"))
    assert cfg.channel == "two_path" and cfg.L == 6 and cfg.path_delays == (0.0, 1.3)


def test_unknown_preset():
    with pytest.raises(ConfigError, match="fig3"):
        preset_path("fig9")


def test_unknown_key_names_location():
    with pytest.raises(ConfigError, match=r"exp\.cfg:2: unknown key 'snr'"):
        parse_config("trials = 3\nsnr = 5\n", "exp.cfg")


@pytest.mark.parametrize("text", ["trials = x", "trials 3", "trials = 3\ntrials = 4",
                                  "trials = 0", "channel = fading", "snr_db = ",
                                  "constellations = qpsk, qpsk", "constellations = 64qam",
                                  "block_length = 2\npower_profile_db = 0, 0, 0, 0"])
def test_bad_configs_rejected(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_overrides_apply():
    cfg = parse_config("trials = 3", overrides={"trials": "7", "seed": 5})
    assert (cfg.trials, cfg.seed) == (7, 5)


def test_latent_dirichlet_needs_positive_gamma():
    with pytest.raises(ConfigError):
        ExperimentConfig(gamma=(0.0,))
    ExperimentConfig(gamma=(0.0,), modes=("superconstellation",))


# ------------------------------------------------------------ IQ files

def test_iq_round_trip(tmp_path):
    x = np.array([1.5 - 2j, 1e-17 + 3j, -0.1 + 0j])
    write_iq(tmp_path / "a.iq", x)
    assert np.array_equal(read_iq(tmp_path / "a.iq"), x)


@pytest.mark.parametrize("body", ["0 1 2\n2 3 4\n", "0 1\n", "# only a comment\n"])
def test_iq_rejects_malformed(tmp_path, body):
    p = tmp_path / "b.iq"
    p.write_text(body)
    with pytest.raises(ValueError):
        read_iq(p)


# ------------------------------------------------------------ trials and tables

def test_run_trial_variants_share_block():
    outs = run_trial(SMALL, 0, 1)
    assert [(o.mode, o.gamma) for o in outs] == SMALL.variants()
    assert len({o.true_index for o in outs}) == 1


def test_run_trial_is_reproducible():
    a = run_trial(SMALL, 1, 2)
    b = run_trial(SMALL, 1, 2)
    assert [o.est_index for o in a] == [o.est_index for o in b]
    for x, y in zip(a, b):
        assert np.array_equal(x.score, y.score)


def test_simulate_block_reproducible_and_varied():
    cset = build_set(SMALL.constellations)
    a = simulate_block(SMALL, cset, 0, 0)[1].samples
    assert np.array_equal(a, simulate_block(SMALL, cset, 0, 0)[1].samples)
    assert not np.array_equal(a, simulate_block(SMALL, cset, 0, 1)[1].samples)


def test_perfect_classifier_gives_unit_pcc():
    table = run_sweep(with_overrides(SMALL, trials=10), classifier=perfect)
    assert all(r.pcc == 1.0 for r in table.rows)
    assert all(np.count_nonzero(r.confusion - np.diag(np.diag(r.confusion))) == 0
               for r in table.rows)


def test_constant_classifier_confusion_column():
    table = run_sweep(with_overrides(SMALL, trials=12), classifier=always_first)
    for r in table.rows:
        assert r.confusion[:, 1:].sum() == 0 and r.confusion.sum() == 12


def test_single_trial_pcc_is_zero_or_one():
    table = run_sweep(with_overrides(SMALL, trials=1))
    assert all(r.pcc in (0.0, 1.0) and r.n_trials == 1 for r in table.rows)


def test_noiseless_blocks_classified():
    cfg = ExperimentConfig(snr_db=(200.0,), trials=100, block_length=100, power_profile_db=(0.0,),
                           modes=("latent_dirichlet",), gamma=(15.0,))
    assert run_sweep(cfg).rows[0].pcc >= 0.95


def test_trial_runtime_budget():
    cfg = ExperimentConfig(snr_db=(10.0,), trials=1, block_length=100, samples=300, burn_in=100,
                           modes=("latent_dirichlet",))
    t0 = time.perf_counter()
    run_trial(cfg, 0, 0)
    assert time.perf_counter() - t0 < 10.0


def test_worker_count_invariance(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    write_results(run_sweep(SMALL, workers=1), a, timing=False)
    write_results(run_sweep(SMALL, workers=2), b, timing=False)
    assert a.read_bytes() == b.read_bytes()


def test_results_csv_schema(tmp_path):
    p = tmp_path / "r.csv"
    table = run_sweep(SMALL, classifier=perfect)
    write_results(table, p)
    rows = read_results(p)
    with open(p, newline="") as fh:
        assert next(csv.reader(fh)) == CSV_HEADER
    assert len(rows) == len(SMALL.snr_db) * len(SMALL.variants())
    first = rows[0]
    conf = np.array(first["confusion_flat"].split(), dtype=int).reshape(3, 3)
    assert conf.sum() == int(first["n_trials"]) == SMALL.trials
    assert float(first["pcc"]) == 1.0 and float(first["secs_per_trial"]) >= 0


def test_empty_table_writes_header_only(tmp_path):
    p = tmp_path / "e.csv"
    write_results(aggregate(SMALL, []), p)
    assert p.read_text() == ",".join(CSV_HEADER) + "\n"


def test_table_lookup():
    table = run_sweep(SMALL, classifier=perfect)
    assert table.pcc(20.0, "ld", 15.0) == 1.0
    with pytest.raises(KeyError):
        table.get(5.0, "ld", 15.0)
    assert isinstance(table, PccTable) and not table.partial


# ------------------------------------------------------------ Wilson interval

@pytest.mark.parametrize("k, n, lo, hi", [(0, 10, 0.0, 0.2775328), (5, 10, 0.2365931, 0.7634069),
                                          (100, 100, 0.9630065, 1.0)])
def test_wilson_reference_values(k, n, lo, hi):
    got = wilson_interval(k, n)
    assert got == pytest.approx((lo, hi), abs=1e-6)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 10_000), st.data())
def test_wilson_contains_estimate(n, data):
    k = data.draw(st.integers(0, n))
    lo, hi = wilson_interval(k, n)
    assert 0.0 <= lo <= k / n <= hi <= 1.0


# ------------------------------------------------------------ CLI

def test_cli_sweep_writes_csv(tmp_path, capsys):
    cfg = tmp_path / "s.cfg"
    save_config(with_overrides(SMALL, snr_db=(20.0,), trials=2), cfg)
    out = tmp_path / "res.csv"
    assert cli.main(["sweep", str(cfg), "--out", str(out), "--no-timing", "--seed", "4"]) == 0
    rows = read_results(out)
    assert len(rows) == 3 and rows[0]["secs_per_trial"] == ""
    assert "PCC" in capsys.readouterr().out


def test_cli_print_config(capsys):
    assert cli.main(["sweep", "--preset", "fig3", "--set", "trials=5", "--print-config"]) == 0
    assert "trials = 5" in capsys.readouterr().out


def test_cli_reports_config_errors(capsys):
    assert cli.main(["sweep", "--preset", "fig3", "--set", "bogus=1"]) == 2
    assert "unknown key 'bogus'" in capsys.readouterr().err


def test_cli_classify(tmp_path, capsys):
    cset = build_set(SMALL.constellations)
    _, block = simulate_block(with_overrides(SMALL, block_length=60), cset, 1, 0)
    iq = tmp_path / "blk.iq"
    write_iq(iq, block.samples)
    rc = cli.main(["classify", str(iq), "--taps", str(block.L), "--samples", "60",
                   "--burn-in", "20", "--seed", "1"])
    assert rc == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[-1] == f"estimate {block.truth.constellation}"
    assert sum(float(ln.split()[1]) for ln in lines[:-1]) == pytest.approx(1.0)


def test_cli_classify_short_block(tmp_path, capsys):
    iq = tmp_path / "short.iq"
    write_iq(iq, [1.0, -1.0])
    assert cli.main(["classify", str(iq), "--taps", "3"]) == 2


def test_cli_oracle(capsys):
    rc = cli.main(["oracle", "--instances", "2", "--block-length", "3", "--samples", "1500",
                   "--burn-in", "300", "--min-pass", "2", "--seed", "2024"])
    assert rc == 0
    assert "2/2 within 0.05" in capsys.readouterr().out


def test_cli_entry_point_help():
    out = subprocess.run([sys.executable, "-m", "ldamc.cli", "--help"], capture_output=True,
                         text=True, check=True).stdout
    for cmd in ("sweep", "classify", "oracle", "selftest"):
        assert cmd in out
