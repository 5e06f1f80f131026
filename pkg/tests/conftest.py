import numpy as np
import pytest

import tnsupernet as tn


@pytest.fixture
def chain3():
    return tn.make_chain(3, 5)


@pytest.fixture
def ring3():
    return tn.make_ring(3, 3)


@pytest.fixture
def star4():
    return tn.make_star(4, 3)


def rel_err(a, b, floor=1e-4):
    """Relative difference with a floor so near-zero coordinates stay meaningful."""
    return abs(a - b) / max(abs(a), abs(b), floor)


def fd_log_prob(dist, idx, t, pos, h=1e-5):
    """Central finite difference of log prob along one beta coordinate."""
    core = dist.cores[t].values
    orig = core[pos]
    core[pos] = orig + h
    up = tn.log_prob(dist, idx)
    core[pos] = orig - h
    dn = tn.log_prob(dist, idx)
    core[pos] = orig
    return (up - dn) / (2 * h)


def random_coordinate(dist, rng):
    t = int(rng.integers(len(dist.cores)))
    shape = dist.cores[t].values.shape
    pos = tuple(int(rng.integers(d)) for d in shape)
    return t, pos


def total_variation(counts, probs):
    freq = counts / counts.sum()
    return 0.5 * np.abs(freq - probs).sum()
