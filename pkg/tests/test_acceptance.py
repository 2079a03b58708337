"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest -v -s tests/test_acceptance.py`` to see the per-criterion
lines and timings.  Every tolerance is pinned here, not configurable.
"""

import math
import time

import numpy as np
import pytest

from capflow.collapse import verify_collapse_identities
from capflow.markov import adjoint, cycle_walk
from capflow.montecarlo import estimate_hitting_time
from capflow.potential import (
    capacity,
    capacity_via_escape,
    direct_mean_hitting_time,
    equilibrium_potential,
    mean_hitting_time,
)
from capflow.variational import verify_principles
from capflow import ising
from capflow import zrp as zrp_mod
from conftest import random_chain, random_disjoint_sets


def report(number, label, ok, elapsed, budget):
    status = "PASS" if ok and elapsed < budget else "FAIL"
    print(f"[{status}] criterion {number}: {label} ({elapsed:.1f}s / budget {budget:.0f}s)")
    assert ok, f"criterion {number} failed"
    assert elapsed < budget, f"criterion {number} exceeded runtime budget"


@pytest.fixture(scope="module")
def structure56():
    return ising.typical_structure(5, 6)


def test_criterion_1_capacity_route_agreement():
    t0 = time.time()
    rng = np.random.default_rng(101)
    ok = True
    for k in range(100):
        P = random_chain(rng, n_max=12, reversible=bool(k % 2))
        A, B = random_disjoint_sets(rng, P.n)
        c1 = capacity(P, A, B).value
        c2 = capacity_via_escape(P, A, B).value
        ok &= abs(c1 - c2) <= 1e-10 * c1
        ok &= abs(capacity(P, B, A).value - c1) <= 1e-10 * c1
        ok &= abs(capacity(adjoint(P), A, B).value - c1) <= 1e-10 * c1
        if P.n >= 5:
            states = list(range(P.n))
            rng.shuffle(states)
            small = capacity(P, [states[0]], [states[2]]).value
            big = capacity(P, states[:2], states[2:4]).value
            ok &= small <= big + 1e-12 * big
    report(1, "capacity route agreement and symmetries on 100 random chains", ok, time.time() - t0, 5.0)


def test_criterion_2_variational_sandwich():
    t0 = time.time()
    rng = np.random.default_rng(202)
    ok = True
    corpus = [
        (cycle_walk(6, 0.5), [0], [3]),
        (cycle_walk(5, 0.7), [0], [2]),
        (random_chain(rng, reversible=True), None, None),
        (random_chain(rng), None, None),
    ]
    for i, (P, A, B) in enumerate(corpus):
        if A is None:
            A, B = random_disjoint_sets(rng, P.n)
        out = verify_principles(P, A, B, trials=50, seed=300 + i)
        ok &= all(c["pass"] for c in out["checks"].values())
    report(2, "six principles bound correctly and attain at the optimizers", ok, time.time() - t0, 10.0)


def test_criterion_3_mean_hitting():
    t0 = time.time()
    rng = np.random.default_rng(303)
    ok = True
    for _ in range(50):
        P = random_chain(rng)
        A, B = random_disjoint_sets(rng, P.n, max_size=1)
        exact = direct_mean_hitting_time(P, B)[P.index[A[0]]]
        ok &= abs(mean_hitting_time(P, A[0], B) - exact) <= 1e-10 * exact
    P = cycle_walk(6, 0.7)
    start = np.zeros(6)
    start[0] = 1.0
    mean, se = estimate_hitting_time(P, start, {3}, replications=100_000, seed=42)
    exact = direct_mean_hitting_time(P, [3])[0]
    ok &= abs(mean - exact) <= 3 * se
    report(3, "hitting-time formula vs direct solve and Monte Carlo", ok, time.time() - t0, 30.0)


def test_criterion_4_collapse_identities():
    t0 = time.time()
    rng = np.random.default_rng(404)
    ok = True
    for k in range(3):
        P = random_chain(rng, n_max=10, reversible=bool(k % 2))
        E = set(list(P.states)[:2])
        targets = [s for s in P.states if s not in E]
        out = verify_collapse_identities(P, E, {targets[-1]}, trials=50, seed=500 + k)
        ok &= all(c["pass"] for c in out["checks"].values())
    model = zrp_mod.build_zrp(3, 10, 2.0, 0.7)
    out = verify_collapse_identities(
        model.process,
        set(model.valleys[0]),
        set(model.valleys[1]),
        trials=50,
        seed=506,
        sector_bound=4.0 / 0.7,
    )
    ok &= all(c["pass"] for c in out["checks"].values())
    report(4, "collapsing identities on random chains and a ZRP instance", ok, time.time() - t0, 60.0)


def test_criterion_5_energy_barrier():
    t0 = time.time()
    ok = True
    for K, L in [(5, 5), (5, 6), (5, 7)]:
        t1 = time.time()
        gamma = ising.energy_barrier(ising.IsingModel(K, L))
        ok &= gamma == 2 * K + 2
        ok &= time.time() - t1 < 300.0
    from test_ising import widest_path_barrier

    for K in range(2, 5):
        for L in range(K, 17):
            if K * L > 16:
                continue
            m = ising.IsingModel(K, L)
            ok &= ising.energy_barrier(m) == widest_path_barrier(m, m.plus, m.minus)
    report(5, "bottleneck barrier 2K+2 and exhaustive widest-path agreement", ok, time.time() - t0, 900.0)


def test_criterion_6_saddle_structure(structure56):
    t0 = time.time()
    st = structure56
    ok = st.E_minus & st.E_plus == frozenset()
    ok &= st.E_minus & st.B == st.R2
    ok &= st.E_plus & st.B == st.R_top
    ok &= st.verify()["support_is_barrier_neighborhood"]
    fc = ising.flow_checks(st, [4.0])
    ok &= fc["div_zero_bulk"] <= 1e-12
    ok &= fc["div_zero_boundary_rows"] <= 1e-12
    ok &= fc["div_zero_plateau"] <= 1e-12
    ok &= fc["div_zero_off_support"] == 0.0
    ok &= abs(fc["div_sum_minus"] - 1.0) <= 1e-12
    f0 = ising.test_function_f0(st)
    ok &= f0(st.model.minus) == 1.0 and f0(st.model.plus) == 0.0
    ok &= 0.0 < st.e_const <= 1.0 / st.model.L
    report(6, "saddle-structure set identities and test-object contracts at (5,6)", ok, time.time() - t0, 300.0)


def test_criterion_7_scaled_limits(structure56):
    t0 = time.time()
    st = structure56
    betas = [4.0, 6.0, 8.0]
    up = [abs(ising.dirichlet_of_f0(st, b)["scaled_times_2kappa"] - 1.0) for b in betas]
    lo = [abs(r["scaled_over_2kappa"] - 1.0) for r in ising.flow_checks(st, betas)["norms"]]
    ok = up[0] > up[1] > up[2] and up[2] < 0.15
    ok &= lo[0] > lo[1] > lo[2] and lo[2] < 0.15
    report(7, "scaled Dirichlet and flow-norm limits converge at (5,6)", ok, time.time() - t0, 600.0)


def test_criterion_8_tiny_lattice_exactness():
    t0 = time.time()
    model = ising.IsingModel(3, 4)
    barrier = ising.energy_barrier(model)
    caps = {}
    h_consts = []
    nplus = ising.neighborhood(model, model.plus, barrier - 1) - {model.plus}
    for beta in (2.0, 3.0, 4.0):
        proc, _ = ising.exact_chain(model, beta)
        caps[beta] = capacity(proc, [model.plus], [model.minus]).value
        h = equilibrium_potential(proc, [model.minus], [model.plus])
        h_consts.append(max(h[proc.index[s]] for s in nplus) * math.exp(beta))
    slope = -(math.log(caps[4.0]) - math.log(caps[3.0]))
    ok = abs(slope - barrier) / barrier < 0.10
    ok &= h_consts[2] <= 1.05 * max(h_consts[0], h_consts[1])
    report(8, "tiny-lattice exact capacities, log slope, potential decay", ok, time.time() - t0, 120.0)


def test_criterion_9_zrp_identities():
    t0 = time.time()
    model = zrp_mod.build_zrp(3, 12, 2.0, 0.7)
    out = zrp_mod.mean_jump_rates(model)
    ok = out["holding_identity_residual"] < 1e-8
    ok &= out["split_identity_residual"] < 1e-8
    scan = zrp_mod.zrp_capacity_scan(3, 2.0, 0.7, [0], [1], [8, 10, 12])
    ok &= all(row["sandwich_ok"] for row in scan["rows"])
    rev = zrp_mod.build_zrp(3, 12, 2.0, 0.5)
    out_rev = zrp_mod.mean_jump_rates(rev)
    for x, y in ((0, 1), (0, 2)):
        formula = zrp_mod.reversible_rate_formula(rev, x, y)
        ok &= abs(out_rev["r"][x, y] - formula) <= 1e-8 * formula
    report(9, "ZRP jump-rate identities, sector sandwich, reversible formula", ok, time.time() - t0, 120.0)


def test_criterion_10_zrp_trends():
    t0 = time.time()
    n_grid = [10, 20, 30]
    scan = zrp_mod.zrp_capacity_scan(3, 2.0, 0.7, [0], [1], n_grid)
    errs = [row["rel_err"] for row in scan["rows"]]
    ok = errs[0] > errs[1] > errs[2]
    mass_errs = []
    for N in n_grid:
        m = zrp_mod.build_zrp(3, N, 2.0, 0.7)
        mu = m.process.mu
        mass_errs.append(abs(sum(mu[m.process.index[s]] for s in m.valleys[0]) - 1 / 3))
    ok &= mass_errs[0] > mass_errs[1] > mass_errs[2]
    out = zrp_mod.martingale_conditions(3, 2.0, 0.7, n_grid)
    for key in ("H0", "H1", "H2", "H3_hitting_bound", "H3_stationarity_bound"):
        vals = [row[key] for row in out["rows"]]
        ok &= vals[0] > vals[1] > vals[2]
    report(10, "ZRP scaled-capacity, valley-mass and H0-H3 trends decrease", ok, time.time() - t0, 600.0)


def test_criterion_11_order_chain_statistics():
    t0 = time.time()
    model = zrp_mod.build_zrp(3, 20, 2.0, 0.7)
    stats = zrp_mod.order_chain_statistics(model, 2000, seed=0)
    walk = cycle_walk(3, 0.7)
    caps = np.array([capacity(walk, [0], [y]).value for y in (1, 2)])
    target = caps / caps.sum()
    emp = stats["first_jump_from_0"][1:]
    n0 = int(stats["jump_counts"][0].sum())
    ok = stats["transitions"] >= 2000
    for t_val, e_val in zip(target, emp):
        se = math.sqrt(t_val * (1 - t_val) / n0)
        ok &= abs(e_val - t_val) <= 3 * se
    report(11, "empirical condensate first-jump distribution matches capacities", ok, time.time() - t0, 600.0)
