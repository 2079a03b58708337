import numpy as np
import pytest

from capflow.markov import MarkovProcess, build_process


def random_chain(rng, n_max=12, reversible=False) -> MarkovProcess:
    """Random irreducible chain on 2..n_max states.

    A directed cycle backbone guarantees irreducibility; extra edges are
    sprinkled on top.  Reversible chains are built from symmetric random
    conductances with a random positive measure.
    """
    n = int(rng.integers(2, n_max + 1))
    R = np.zeros((n, n))
    if reversible:
        mu = rng.uniform(0.2, 1.0, size=n)
        C = np.zeros((n, n))
        for i in range(n):
            C[i, (i + 1) % n] = rng.uniform(0.1, 1.0)
        C = C + C.T
        extra = rng.random((n, n)) < 0.3
        W = rng.uniform(0.1, 1.0, size=(n, n)) * extra
        C += np.triu(W, 1) + np.triu(W, 1).T
        R = C / mu[:, None]
    else:
        for i in range(n):
            R[i, (i + 1) % n] = rng.uniform(0.1, 1.0)
        extra = rng.random((n, n)) < 0.3
        R += rng.uniform(0.1, 1.0, size=(n, n)) * extra
    np.fill_diagonal(R, 0.0)
    return build_process(range(n), {(i, j): R[i, j] for i in range(n) for j in range(n) if R[i, j] > 0})


def random_disjoint_sets(rng, n, max_size=2):
    states = list(range(n))
    rng.shuffle(states)
    ka = int(rng.integers(1, min(max_size, n - 1) + 1))
    kb = int(rng.integers(1, min(max_size, n - ka) + 1))
    return states[:ka], states[ka : ka + kb]


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
