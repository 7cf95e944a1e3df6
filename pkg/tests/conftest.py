import numpy as np
import pytest

from ldamc.channel_sim import rayleigh_taps, snr_db_to_sigma2, transmit
from ldamc.constellations import KINDS, build_set
from ldamc.rand_dists import rng_stream


@pytest.fixture(scope="session")
def cset():
    return build_set(KINDS)


def make_block(cset, seed, kind=2, N=60, L=3, snr_db=12.0):
    rng = rng_stream(seed)
    taps = rayleigh_taps(np.linspace(0, -5, L), rng)
    return transmit(cset.members[kind], taps, snr_db_to_sigma2(snr_db), N, rng)


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
