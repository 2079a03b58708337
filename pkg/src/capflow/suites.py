"""Per-module verification suites backing the ``capflow verify`` command.

Each suite runs the module's standing invariants over a randomized corpus
and returns a report dict: every check carries a pass flag, the worst
observed margin and the tolerance it was held to.  Exit-code policy is
applied by the CLI, not here.
"""

from __future__ import annotations

import numpy as np

from . import collapse as collapse_mod
from . import flows as flows_mod
from . import variational as var_mod
from .markov import (
    adjoint,
    apply_generator,
    cycle_walk,
    dirichlet_form,
    embedded_chain,
    inner_product_mu,
    is_reversible,
    process_from_json,
    process_to_json,
    symmetrize,
)
from .potential import (
    capacity,
    capacity_via_escape,
    direct_mean_hitting_time,
    direct_occupation_time,
    equilibrium_measure,
    equilibrium_potential,
    mean_hitting_time,
    potential_bound,
)

__all__ = ["SUITES", "run_suite"]


def _random_chain(rng, n_max=12, reversible=False):
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
    from .markov import build_process

    return build_process(
        range(n), {(i, j): R[i, j] for i in range(n) for j in range(n) if R[i, j] > 0}
    )


def _random_sets(rng, n, max_size=2):
    states = list(range(n))
    rng.shuffle(states)
    ka = int(rng.integers(1, min(max_size, n - 1) + 1))
    kb = int(rng.integers(1, min(max_size, n - ka) + 1))
    return states[:ka], states[ka : ka + kb]


class _Report:
    def __init__(self):
        self.checks = {}

    def add(self, name, margin, tolerance):
        entry = self.checks.get(name)
        margin = float(margin)
        if entry is None:
            self.checks[name] = {"pass": margin <= tolerance, "margin": margin, "tolerance": tolerance}
        else:
            entry["margin"] = max(entry["margin"], margin)
            entry["pass"] = entry["pass"] and margin <= tolerance

    def done(self, **extra):
        out = {"checks": self.checks}
        out.update(extra)
        return out


def suite_core(trials: int, seed: int) -> dict:
    rng = np.random.default_rng(seed)
    rep = _Report()
    for k in range(trials):
        P = _random_chain(rng, reversible=bool(k % 2))
        mu = P.mu
        rep.add("invariant_positive", 0.0 if mu.min() > 0 else 1.0, 0.5)
        res = np.abs(mu @ P.generator).max() / (2 * P.holding.max())
        rep.add("stationarity_residual", res, 1e-12)
        Pd = adjoint(P)
        f = rng.standard_normal(P.n)
        g = rng.standard_normal(P.n)
        lhs = inner_product_mu(P, f, apply_generator(P, g))
        rhs = inner_product_mu(P, apply_generator(Pd, f), g)
        rep.add("adjoint_duality", abs(lhs - rhs) / max(abs(lhs), 1e-30), 1e-12)
        d = dirichlet_form(P, f)
        d_op = inner_product_mu(P, f, -apply_generator(P, f))
        rep.add("dirichlet_two_routes", abs(d - d_op) / max(d, 1e-30), 1e-12)
        rep.add("dirichlet_adjoint_equal", abs(dirichlet_form(Pd, f) - d) / max(d, 1e-30), 1e-12)
        rep.add(
            "dirichlet_symmetrized_equal",
            abs(dirichlet_form(symmetrize(P), f) - d) / max(d, 1e-30),
            1e-12,
        )
        chain = embedded_chain(P)
        minv = np.abs(chain.weight @ chain.jump_probs - chain.weight).max() / chain.weight.max()
        rep.add("embedded_measure_invariant", minv, 1e-11)
        PP = adjoint(Pd)
        rep.add(
            "adjoint_involution",
            np.abs((PP.rates - P.rates)).max() / P.rates.max(),
            1e-12,
        )
        Q = process_from_json(process_to_json(P))
        rep.add("serialization_round_trip", np.abs((Q.rates - P.rates)).max(), 1e-15)
    return rep.done(trials=trials, seed=seed)


def suite_potential(trials: int, seed: int) -> dict:
    rng = np.random.default_rng(seed)
    rep = _Report()
    for k in range(trials):
        P = _random_chain(rng, reversible=bool(k % 2))
        A, B = _random_sets(rng, P.n)
        c1 = capacity(P, A, B).value
        c2 = capacity_via_escape(P, A, B).value
        rep.add("route_agreement", abs(c1 - c2) / c1, 1e-10)
        rep.add("cap_symmetric", abs(capacity(P, B, A).value - c1) / c1, 1e-10)
        rep.add("cap_adjoint", abs(capacity(adjoint(P), A, B).value - c1) / c1, 1e-10)
        h = equilibrium_potential(P, A, B)
        rep.add("potential_range", max(-h.min(), h.max() - 1.0, 0.0), 1e-12)
        h_ba = equilibrium_potential(P, B, A)
        rep.add("complement_identity", np.abs(h_ba - (1.0 - h)).max(), 1e-12)
        if P.n >= 5:
            states = list(range(P.n))
            rng.shuffle(states)
            small = capacity(P, [states[0]], [states[2]]).value
            big = capacity(P, states[:2], states[2:4]).value
            rep.add("monotone_enlargement", small - big, 1e-12)
        A1, B1 = _random_sets(rng, P.n, max_size=1)
        exact = direct_mean_hitting_time(P, B1)[P.index[A1[0]]]
        rep.add(
            "mean_hitting_vs_direct",
            abs(mean_hitting_time(P, A1[0], B1) - exact) / exact,
            1e-10,
        )
        others = [s for s in range(P.n) if s not in A and s not in B]
        if others:
            z = others[0]
            nu = equilibrium_measure(P, A, B, variant="adjoint")
            w = direct_occupation_time(P, B, z)
            lhs = float(nu @ w) * c1
            h_dag = equilibrium_potential(P, A, B, variant="adjoint")
            rhs = P.mu[P.index[z]] * h_dag[P.index[z]]
            rep.add("occupation_identity", abs(lhs - rhs) / max(rhs, 1e-30), 1e-10)
            _, holds = potential_bound(P, z, A, B)
            rep.add("potential_bound_holds", 0.0 if holds else 1.0, 0.5)
        nu = equilibrium_measure(P, A, B)
        rep.add("equilibrium_measure_normalized", abs(nu.sum() - 1.0), 1e-10)
    return rep.done(trials=trials, seed=seed)


def suite_flows(trials: int, seed: int) -> dict:
    rng = np.random.default_rng(seed)
    rep = _Report()
    for k in range(trials):
        P = _random_chain(rng, reversible=bool(k % 2))
        phi = flows_mod.zero_flow(P)
        phi.values[:] = rng.standard_normal(phi.edges.m)
        scale = np.abs(phi.values).max()
        rep.add("global_conservation", abs(flows_mod.divergence(phi).sum()) / scale, 1e-12)
        for kind in ("Phi", "PhiStar", "Psi"):
            rep.add(
                f"divergence_identity_{kind}",
                flows_mod.divergence_equals_generator(P, rng.standard_normal(P.n), kind),
                1e-11,
            )
        f = rng.standard_normal(P.n)
        lhs = flows_mod.flow_inner(flows_mod.flow_from_function(P, f, "Psi"), phi)
        rhs = -float(np.sum(f * flows_mod.divergence(phi)))
        rep.add("divergence_pairing", abs(lhs - rhs) / max(abs(rhs), 1e-30), 1e-11)
        g = rng.standard_normal(P.n)
        lhs = flows_mod.flow_inner(
            flows_mod.flow_from_function(P, f, "Psi"), flows_mod.flow_from_function(P, g, "Phi")
        )
        rhs = inner_product_mu(P, -apply_generator(P, f), g)
        rep.add("generator_pairing", abs(lhs - rhs) / max(abs(rhs), 1e-30), 1e-11)
        d = dirichlet_form(P, f)
        rep.add(
            "norm_equals_dirichlet",
            abs(flows_mod.flow_norm_sq(flows_mod.flow_from_function(P, f, "Psi")) - d) / d,
            1e-12,
        )
        A, B = _random_sets(rng, P.n)
        cap = capacity(P, A, B).value
        h = equilibrium_potential(P, A, B)
        rep.add(
            "psi_h_norm_is_capacity",
            abs(flows_mod.flow_norm_sq(flows_mod.flow_from_function(P, h, "Psi")) - cap) / cap,
            1e-12,
        )
        kind = "psi" if is_reversible(P, tol=1e-10) else "phiStar"
        u = flows_mod.unit_flow(P, A, B, kind)
        div = flows_mod.divergence(u)
        ia = P.subset_indices(A)
        ib = P.subset_indices(B)
        rep.add("unit_flow_source", abs(div[ia].sum() - 1.0), 1e-10)
        rep.add("unit_flow_sink", abs(div[ib].sum() + 1.0), 1e-10)
    return rep.done(trials=trials, seed=seed)


def suite_variational(trials: int, seed: int) -> dict:
    rng = np.random.default_rng(seed)
    corpus = [cycle_walk(6, 0.5), cycle_walk(5, 0.7), _random_chain(rng), _random_chain(rng, reversible=True)]
    checks = {}
    for i, P in enumerate(corpus):
        A, B = _random_sets(rng, P.n)
        out = var_mod.verify_principles(P, A, B, trials=trials, seed=seed + i)
        for name, entry in out["checks"].items():
            key = f"chain{i}_{name}"
            checks[key] = entry
    return {"checks": checks, "trials": trials, "seed": seed}


def suite_collapse(trials: int, seed: int) -> dict:
    from .zrp import build_zrp

    rng = np.random.default_rng(seed)
    checks = {}
    corpus = [
        ("cycle8_drift", cycle_walk(8, 0.7), {0, 1}, {4}, 4.0 / 0.7),
        ("cycle8_reversible", cycle_walk(8, 0.5), {0, 1}, {4}, None),
    ]
    P = _random_chain(rng, n_max=10)
    corpus.append(("random_chain", P, set(list(P.states)[:2]), {P.states[-1]}, None))
    zrp_model = build_zrp(3, 10, 2.0, 0.7)
    corpus.append(
        (
            "zrp_valley",
            zrp_model.process,
            set(zrp_model.valleys[0]),
            set(zrp_model.valleys[1]),
            4.0 / 0.7,
        )
    )
    for label, proc, E, A, bound in corpus:
        out = collapse_mod.verify_collapse_identities(
            proc, E, A, trials=trials, seed=seed, sector_bound=bound
        )
        for name, entry in out["checks"].items():
            checks[f"{label}_{name}"] = entry
    return {"checks": checks, "trials": trials, "seed": seed}


SUITES = {
    "core": suite_core,
    "potential": suite_potential,
    "flows": suite_flows,
    "variational": suite_variational,
    "collapse": suite_collapse,
}


def run_suite(name: str, trials: int, seed: int) -> dict:
    return SUITES[name](trials, seed)
