import math

import numpy as np
import pytest
import scipy.integrate

from capflow.errors import AlphaOutOfRange, StateSpaceTooLarge
from capflow.markov import MarkovProcess, cycle_walk, dirichlet_form, is_reversible
from capflow.potential import capacity
from capflow.zrp import (
    build_zrp,
    limit_chain,
    limit_constants,
    martingale_conditions,
    mean_jump_rates,
    occupancy_rate,
    order_chain_statistics,
    partition_function_zrp,
    reversible_rate_formula,
    sector_check_zrp,
    trace_process,
    valley_width,
    zrp_capacity_scan,
)


@pytest.fixture(scope="module")
def model12():
    return build_zrp(3, 12, 2.0, 0.7)


def test_occupancy_rate_limits():
    assert occupancy_rate(0, 2.0) == 0.0
    assert occupancy_rate(1, 2.0) == 1.0
    assert occupancy_rate(50, 2.0) == pytest.approx(1.0, abs=0.05)


def test_state_count(model12):
    assert model12.process.n == math.comb(12 + 2, 2)


def test_kappa2_single_particle():
    m = build_zrp(2, 1, 2.0, 0.7)
    assert m.process.n == 2
    # one particle: g(1) = 1, both directions collapse to the other site
    assert m.process.rate((1, 0), (0, 1)) == pytest.approx(1.0)
    assert m.process.rate((0, 1), (1, 0)) == pytest.approx(1.0)


def test_single_particle_is_cycle_walk():
    m = build_zrp(4, 1, 2.0, 0.7)
    walk = cycle_walk(4, 0.7)
    for x in range(4):
        eta = tuple(1 if y == x else 0 for y in range(4))
        zeta = tuple(1 if y == (x + 1) % 4 else 0 for y in range(4))
        assert m.process.rate(eta, zeta) == pytest.approx(walk.rate(x, (x + 1) % 4))


def test_invariant_measure_formula(model12):
    # mu proportional to 1/prod a(eta_x), cross-checked against the solver
    P = model12.process
    solved = MarkovProcess(P.states, P.rates).mu
    assert np.abs(solved - P.mu).max() / P.mu.min() < 1e-11


def test_alpha_out_of_range():
    with pytest.raises(AlphaOutOfRange):
        build_zrp(3, 5, 1.0, 0.5)
    with pytest.raises(AlphaOutOfRange):
        limit_constants(3, 0.5)


def test_state_budget():
    with pytest.raises(StateSpaceTooLarge):
        build_zrp(3, 10, 2.0, 0.5, budget=10)


def test_reversible_iff_half():
    assert is_reversible(build_zrp(3, 6, 2.0, 0.5).process, tol=1e-10)
    assert not is_reversible(build_zrp(3, 6, 2.0, 0.7).process, tol=1e-10)


def test_limit_constants_oracles():
    gamma2, i2, z = limit_constants(3, 2.0)
    assert gamma2 == pytest.approx(1 + np.pi**2 / 6, rel=1e-12)
    assert i2 == pytest.approx(1 / 30, rel=1e-12)
    quad, _ = scipy.integrate.quad(lambda u: u**2 * (1 - u) ** 2, 0, 1, epsabs=1e-14)
    assert i2 == pytest.approx(quad, abs=1e-12)
    assert z == pytest.approx(3 * gamma2**2, rel=1e-14)
    # generic alpha against adaptive quadrature
    _, i_a, _ = limit_constants(2, 2.7)
    quad, _ = scipy.integrate.quad(lambda u: u**2.7 * (1 - u) ** 2.7, 0, 1, epsabs=1e-14)
    assert i_a == pytest.approx(quad, abs=1e-12)


def test_partition_function_converges():
    gamma2, _, z = limit_constants(3, 2.0)
    errs = [abs(partition_function_zrp(3, N, 2.0) - z) / z for N in (20, 40, 60)]
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 0.12  # slow 1/N-type approach; value pinned from the sequence


def test_measure_recursion_identity():
    # mu_N(eta) g(eta_u) = a_N mu_{N-1}(eta - delta_u) with
    # a_N = N^alpha Z_{N-1} / ((N-1)^alpha Z_N)
    kappa, alpha, p = 3, 2.0, 0.7
    for N in (6, 9):
        big = build_zrp(kappa, N, alpha, p)
        small = build_zrp(kappa, N - 1, alpha, p)
        a_N = (
            float(N) ** alpha
            * partition_function_zrp(kappa, N - 1, alpha)
            / (float(N - 1) ** alpha * partition_function_zrp(kappa, N, alpha))
        )
        worst = 0.0
        for eta in big.process.states:
            mu_eta = big.process.mu[big.process.index[eta]]
            for u in range(kappa):
                if eta[u] == 0:
                    continue
                down = list(eta)
                down[u] -= 1
                mu_down = small.process.mu[small.process.index[tuple(down)]]
                lhs = mu_eta * occupancy_rate(eta[u], alpha)
                rhs = a_N * mu_down
                worst = max(worst, abs(lhs - rhs) / rhs)
        assert worst < 1e-12
    # a_N approaches 1 from the partition-function trend
    a_vals = []
    for N in (10, 20, 40):
        a_vals.append(
            float(N) ** alpha
            * partition_function_zrp(kappa, N - 1, alpha)
            / (float(N - 1) ** alpha * partition_function_zrp(kappa, N, alpha))
        )
    assert abs(a_vals[2] - 1) < abs(a_vals[0] - 1)


def test_dirichlet_change_of_variable():
    kappa, alpha, p, N = 3, 2.0, 0.7, 6
    big = build_zrp(kappa, N, alpha, p)
    small = build_zrp(kappa, N - 1, alpha, p)
    a_N = (
        float(N) ** alpha
        * partition_function_zrp(kappa, N - 1, alpha)
        / (float(N - 1) ** alpha * partition_function_zrp(kappa, N, alpha))
    )
    rng = np.random.default_rng(3)
    r = {(x, (x + 1) % kappa): p for x in range(kappa)}
    r.update({(x, (x - 1) % kappa): 1 - p for x in range(kappa)})
    for _ in range(5):
        f = rng.standard_normal(big.process.n)

        def f_at(eta):
            return f[big.process.index[eta]]

        direct = dirichlet_form(big.process, f)
        total = 0.0
        for zeta in small.process.states:
            mu_z = small.process.mu[small.process.index[zeta]]
            for (x, y), rate in r.items():
                up_x = list(zeta)
                up_x[x] += 1
                up_y = list(zeta)
                up_y[y] += 1
                total += mu_z * rate * (f_at(tuple(up_x)) - f_at(tuple(up_y))) ** 2
        assert direct == pytest.approx(0.5 * a_N * total, rel=1e-11)


def test_valley_width_window():
    for N in (10, 20, 30, 100):
        ell = valley_width(N, 3, 2.0)
        theta = 3 / 5
        assert 1 <= ell < N**theta * 2  # inside the admissible window at desk scale
    assert valley_width(30, 3, 2.0) == 5


def test_valley_symmetry(model12):
    mu = model12.process.mu
    masses = [
        sum(mu[model12.process.index[s]] for s in model12.valleys[x]) for x in range(3)
    ]
    assert masses[0] == pytest.approx(masses[1], rel=1e-12)
    assert masses[0] == pytest.approx(masses[2], rel=1e-12)


def test_valley_mass_trend():
    errs = []
    for N in (10, 20, 30):
        m = build_zrp(3, N, 2.0, 0.7)
        mu = m.process.mu
        mass = sum(mu[m.process.index[s]] for s in m.valleys[0])
        errs.append(abs(mass - 1 / 3))
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 0.08


def test_limit_chain_reversible_and_symmetric():
    lim = limit_chain(3, 2.0, 0.7)
    assert is_reversible(lim.process, tol=1e-12)
    assert lim.process.rate(0, 1) == pytest.approx(lim.process.rate(1, 0), rel=1e-13)
    # partition formula: A u B = S makes cap_Y a plain capacity sum
    gamma_a, i_a, _ = limit_constants(3, 2.0)
    walk = cycle_walk(3, 0.7)
    expected = sum(capacity(walk, [0], [y]).value for y in (1, 2)) / (gamma_a * i_a)
    assert lim.cap_Y([0], [1, 2]) == pytest.approx(expected, rel=1e-11)


def test_limit_chain_kappa2():
    lim = limit_chain(2, 2.0, 0.7)
    walk = cycle_walk(2, 0.7)
    gamma_a, i_a, _ = limit_constants(2, 2.0)
    expected = 2 * capacity(walk, [0], [1]).value / (gamma_a * i_a)
    # two-state chain: equilibrium potential is an indicator
    assert lim.cap_Y([0], [1]) == pytest.approx(expected / 2, rel=1e-12)


def test_trace_process_identity_when_no_complement(model12):
    P = model12.process
    tr = trace_process(P, P.states)
    assert np.abs((tr.rates - P.rates)).max() <= 1e-14


def test_trace_process_conditioned_measure(model12):
    valley_states = [s for x in range(3) for s in model12.valleys[x]]
    tr = trace_process(model12.process, valley_states)
    mu = model12.process.mu
    cond = np.array([mu[model12.process.index[s]] for s in tr.states])
    cond /= cond.sum()
    assert np.abs(tr.mu - cond).max() < 1e-10


def test_trace_exit_rates_bounded(model12):
    valley_states = [s for x in range(3) for s in model12.valleys[x]]
    tr = trace_process(model12.process, valley_states)
    for s in tr.states:
        lam_trace = tr.holding[tr.index[s]]
        lam_orig = model12.process.holding[model12.process.index[s]]
        assert lam_trace <= lam_orig + 1e-12


def test_mean_jump_rate_identities(model12):
    out = mean_jump_rates(model12)
    assert out["holding_identity_residual"] < 1e-8
    assert out["split_identity_residual"] < 1e-8
    r = out["r"]
    np.testing.assert_allclose(r.sum(axis=1), out["lambda"], rtol=1e-15)
    # rotation symmetry
    assert r[0, 1] == pytest.approx(r[1, 2], rel=1e-10)
    assert r[0, 2] == pytest.approx(r[1, 0], rel=1e-10)


def test_reversible_three_capacity_formula():
    m = build_zrp(3, 12, 2.0, 0.5)
    out = mean_jump_rates(m)
    for x, y in ((0, 1), (0, 2), (2, 1)):
        assert out["r"][x, y] == pytest.approx(reversible_rate_formula(m, x, y), rel=1e-10)


def test_capacity_symmetries_between_valleys(model12):
    P = model12.process
    ea = model12.valleys[0]
    eb = model12.valleys[1]
    from capflow.markov import adjoint

    cap = capacity(P, ea, eb).value
    assert capacity(P, eb, ea).value == pytest.approx(cap, rel=1e-10)
    assert capacity(adjoint(P), ea, eb).value == pytest.approx(cap, rel=1e-10)


def test_collapsed_capacity_identity(model12):
    from capflow.collapse import collapse_process

    cp = collapse_process(model12.process, model12.valleys[0])
    cap_bar = capacity(cp.process, model12.valleys[1], [cp.e_state]).value
    cap_full = capacity(model12.process, model12.valleys[1], model12.valleys[0]).value
    assert cap_bar == pytest.approx(cap_full, rel=1e-10)


def test_sector_check(model12):
    report = sector_check_zrp(model12, 200, seed=5)
    assert report["split_ok"] and report["ratio_ok"]
    # constant f gives zero pairing
    from capflow.markov import apply_generator, inner_product_mu

    P = model12.process
    g = np.random.default_rng(0).standard_normal(P.n)
    assert inner_product_mu(P, g, -apply_generator(P, np.ones(P.n))) == pytest.approx(0.0, abs=1e-12)


def test_sector_reversible_ratio_one():
    m = build_zrp(3, 8, 2.0, 0.5)
    report = sector_check_zrp(m, 100, seed=9)
    assert report["max_ratio"] <= 1.0 + 1e-10


def test_capacity_scan_trends():
    scan = zrp_capacity_scan(3, 2.0, 0.7, [0], [1], [10, 20, 30])
    errs = [row["rel_err"] for row in scan["rows"]]
    assert errs[0] > errs[1] > errs[2]
    assert all(row["sandwich_ok"] for row in scan["rows"])


def test_capacity_scan_reversible_equality():
    scan = zrp_capacity_scan(3, 2.0, 0.5, [0], [1], [8, 10])
    for row in scan["rows"]:
        assert row["cap_s_scaled"] == pytest.approx(row["scaled_cap"], rel=1e-10)


def test_martingale_conditions_decreasing():
    out = martingale_conditions(3, 2.0, 0.7, [10, 20, 30])
    rows = out["rows"]
    for key in ("H0", "H1", "H2", "H3_hitting_bound", "H3_stationarity_bound"):
        vals = [row[key] for row in rows]
        assert vals[0] > vals[1] > vals[2], (key, vals)
    consts = [row["min_pair_cap_scaled"] for row in rows]
    assert min(consts) > 0
    assert max(consts) / min(consts) < 10


def test_order_chain_statistics_quick():
    m = build_zrp(3, 12, 2.0, 0.7)
    stats = order_chain_statistics(m, 400, seed=1)
    assert stats["transitions"] >= 400
    rates = mean_jump_rates(m)
    exact_split = rates["r"][0] / rates["lambda"][0]
    n0 = stats["jump_counts"][0].sum()
    se = math.sqrt(float(exact_split[1] * (1 - exact_split[1]) / n0))
    assert abs(stats["first_jump_from_0"][1] - exact_split[1]) <= 3 * se
    assert abs(stats["mean_sojourn_trace"] - 1 / rates["lambda"][0]) <= 4 * stats["sojourn_stderr"]
    # off-valley time fraction is near its stationary value
    mu = m.process.mu
    mu_delta = sum(mu[m.process.index[s]] for s in m.delta)
    assert abs(stats["delta_time_fraction"] - mu_delta) < 0.05


def test_trace_requires_nonempty_set(model12):
    from capflow.errors import EmptySet

    with pytest.raises(EmptySet):
        trace_process(model12.process, [])


def test_sector_estimate_on_zrp_bounded():
    from capflow.variational import estimate_sector_constant

    m = build_zrp(3, 8, 2.0, 0.7)
    assert estimate_sector_constant(m.process, 60, seed=4) <= 4.0 / 0.7 + 1e-10


def test_delta_mass_vanishes():
    masses = []
    for N in (10, 20, 30):
        m = build_zrp(3, N, 2.0, 0.7)
        mu = m.process.mu
        masses.append(sum(mu[m.process.index[s]] for s in m.delta))
    assert masses[0] > masses[1] > masses[2]
