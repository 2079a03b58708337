import json

import numpy as np
import pytest

from capflow.errors import EmptySet, OverlappingSets
from capflow.markov import adjoint, build_process, cycle_walk, dirichlet_form
from capflow.potential import (
    capacity,
    capacity_via_escape,
    direct_mean_hitting_time,
    direct_occupation_time,
    equilibrium_measure,
    equilibrium_potential,
    mean_hitting_functional,
    mean_hitting_time,
    potential_bound,
)
from conftest import random_chain, random_disjoint_sets


def test_boundary_values(rng):
    P = random_chain(rng)
    A, B = random_disjoint_sets(rng, P.n)
    h = equilibrium_potential(P, A, B)
    assert np.all(h[P.subset_indices(A)] == 1.0)
    assert np.all(h[P.subset_indices(B)] == 0.0)


def test_cycle4_midpoints():
    P = cycle_walk(4, 0.5)
    h = equilibrium_potential(P, [0], [2])
    # 2x2 linear solve oracle: h(1) = h(3) = 1/2 by symmetry
    assert h[1] == pytest.approx(0.5, abs=1e-13)
    assert h[3] == pytest.approx(0.5, abs=1e-13)


def test_complement_identity(rng):
    for _ in range(10):
        P = random_chain(rng)
        A, B = random_disjoint_sets(rng, P.n)
        h_ab = equilibrium_potential(P, A, B)
        h_ba = equilibrium_potential(P, B, A)
        np.testing.assert_allclose(h_ba, 1.0 - h_ab, atol=1e-12)


def test_range_invariant(rng):
    for _ in range(20):
        P = random_chain(rng)
        A, B = random_disjoint_sets(rng, P.n)
        h = equilibrium_potential(P, A, B)
        assert h.min() >= -1e-12 and h.max() <= 1 + 1e-12


def test_overlap_and_empty_errors():
    P = cycle_walk(4, 0.5)
    with pytest.raises(OverlappingSets):
        equilibrium_potential(P, [0, 1], [1, 2])
    with pytest.raises(EmptySet):
        equilibrium_potential(P, [], [2])


def test_capacity_cycle4_series_parallel():
    # conductance oracle: every edge has c = (1/4)(1/2) = 1/8; two
    # two-edge paths in series give 1/16 each, in parallel 1/8
    P = cycle_walk(4, 0.5)
    assert capacity(P, [0], [2]).value == pytest.approx(1 / 8, rel=1e-13)
    assert capacity_via_escape(P, [0], [2]).value == pytest.approx(1 / 8, rel=1e-13)


def test_capacity_partition_degenerate():
    P = cycle_walk(4, 0.5)
    rep = capacity(P, [0, 1], [2, 3])
    h = equilibrium_potential(P, [0, 1], [2, 3])
    assert rep.residual == 0.0
    assert rep.value == pytest.approx(dirichlet_form(P, h), rel=1e-14)
    assert rep.value > 0


def test_capacity_report_json():
    P = cycle_walk(4, 0.5)
    doc = json.loads(capacity(P, [0], [2]).to_json())
    assert doc["route"] == "dirichlet_of_h"
    assert doc["A"] == [0] and doc["B"] == [2]


def test_route_agreement_100_random_chains(rng):
    for k in range(100):
        P = random_chain(rng, reversible=bool(k % 2))
        A, B = random_disjoint_sets(rng, P.n)
        c1 = capacity(P, A, B).value
        c2 = capacity_via_escape(P, A, B).value
        assert c2 == pytest.approx(c1, rel=1e-10)


def test_capacity_symmetries(rng):
    for _ in range(25):
        P = random_chain(rng)
        A, B = random_disjoint_sets(rng, P.n)
        cap = capacity(P, A, B).value
        assert capacity(P, B, A).value == pytest.approx(cap, rel=1e-10)
        assert capacity(adjoint(P), A, B).value == pytest.approx(cap, rel=1e-10)


def test_capacity_adjoint_on_cycle():
    P = cycle_walk(6, 0.7)
    cap = capacity(P, [0], [3]).value
    assert capacity(adjoint(P), [0], [3]).value == pytest.approx(cap, rel=1e-12)


def test_singleton_escape_formula():
    P = cycle_walk(5, 0.7)
    rep = capacity_via_escape(P, [0], [2])
    h_ba = 1.0 - equilibrium_potential(P, [0], [2])
    escape = sum(P.rate(0, y) * h_ba[y] for y in (1, 4))  # lambda = 1
    assert rep.value == pytest.approx(P.mu[0] * escape, rel=1e-12)


def test_monotonicity_nested_sets(rng):
    for _ in range(25):
        P = random_chain(rng, n_max=10)
        if P.n < 5:
            continue
        states = list(range(P.n))
        rng.shuffle(states)
        A, Ap = [states[0]], [states[0], states[1]]
        B, Bp = [states[2]], [states[2], states[3]]
        assert capacity(P, A, B).value <= capacity(P, Ap, Bp).value + 1e-12


def test_equilibrium_measure_dirac_singleton(rng):
    P = random_chain(rng)
    A, B = random_disjoint_sets(rng, P.n, max_size=1)
    nu = equilibrium_measure(P, A, B)
    assert nu[P.index[A[0]]] == pytest.approx(1.0, rel=1e-10)


def test_equilibrium_measure_sums_to_one_and_boundary():
    # states 0,1 form A where 1 has no edge out of A: interior gets zero
    rates = {
        (0, 1): 1.0,
        (1, 0): 1.0,
        (0, 2): 1.0,
        (2, 0): 1.0,
        (2, 3): 1.0,
        (3, 2): 1.0,
        (3, 1): 0.0,
    }
    P = build_process(range(4), {k: v for k, v in rates.items() if v > 0})
    for variant in ("plain", "adjoint"):
        nu = equilibrium_measure(P, [0, 1], [3], variant=variant)
        assert nu.sum() == pytest.approx(1.0, rel=1e-10)
        assert nu[1] == 0.0  # interior of A
        assert np.all(nu[2:] == 0.0)


def test_mean_hitting_indicator_of_B_vanishes(rng):
    P = random_chain(rng)
    A, B = random_disjoint_sets(rng, P.n)
    f = np.zeros(P.n)
    f[P.subset_indices(B)] = 1.0
    assert mean_hitting_functional(P, A, B, f) == pytest.approx(0.0, abs=1e-13)


def test_mean_hitting_time_matches_direct_solve(rng):
    for _ in range(50):
        P = random_chain(rng)
        A, B = random_disjoint_sets(rng, P.n, max_size=1)
        z = A[0]
        expected = direct_mean_hitting_time(P, B)[P.index[z]]
        assert mean_hitting_time(P, z, B) == pytest.approx(expected, rel=1e-10)


def test_mean_hitting_numerator_bound(rng):
    for _ in range(10):
        P = random_chain(rng)
        A, B = random_disjoint_sets(rng, P.n)
        h_dag = equilibrium_potential(P, A, B, variant="adjoint")
        numerator = float(np.sum(h_dag * P.mu))
        mu_B = float(P.mu[P.subset_indices(B)].sum())
        assert numerator <= 1.0 - mu_B + 1e-12


def test_occupation_time_identity(rng):
    # E_nu_adj[occupation of z before tau_B] * cap = mu(z) h_adj(z)
    for _ in range(20):
        P = random_chain(rng)
        A, B = random_disjoint_sets(rng, P.n)
        others = [s for s in range(P.n) if s not in A and s not in B]
        if not others:
            continue
        z = others[0]
        nu = equilibrium_measure(P, A, B, variant="adjoint")
        w = direct_occupation_time(P, B, z)
        lhs = float(nu @ w) * capacity(P, A, B).value
        h_dag = equilibrium_potential(P, A, B, variant="adjoint")
        rhs = P.mu[P.index[z]] * h_dag[P.index[z]]
        assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-14)


def test_potential_bound_cycle6():
    P = cycle_walk(6, 0.5)
    bound, holds = potential_bound(P, 1, [0], [3])
    assert holds
    h = equilibrium_potential(P, [0], [3])
    assert h[1] <= bound + 1e-12


def test_potential_bound_random_trials(rng):
    P = cycle_walk(7, 0.7)
    count = 0
    while count < 50:
        states = list(range(7))
        rng.shuffle(states)
        A, B, x = [states[0]], [states[1]], states[2]
        _, holds = potential_bound(P, x, A, B)
        assert holds
        count += 1


def test_potential_bound_huge_rate_direction():
    # x adjacent to A with huge rate: bound near 1, h still below it
    rates = {
        (0, 1): 100.0,
        (1, 0): 100.0,
        (1, 2): 1.0,
        (2, 1): 1.0,
        (2, 0): 0.5,
        (0, 2): 0.5,
    }
    P = build_process(range(3), rates)
    bound, holds = potential_bound(P, 1, [0], [2])
    assert holds
