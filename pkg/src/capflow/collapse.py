"""Collapsing a set of states to a single point.

Contracting E to a new state e keeps rates out of E as mu-weighted
averages and sums rates into E, so that the restriction of the invariant
measure (with mu(E) lumped on e) stays invariant.  Flows and E-constant
functions push forward; the flow norm can only contract, Dirichlet forms
of E-constant functions are preserved and cap(e, A) equals cap(E, A).
Collapsing is not iterated in place: collapsing another set builds a new
process from the collapsed one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import (
    EmptyCollapseSet,
    FullCollapseSet,
    NonConstantOnCollapseSet,
)
from .flows import Flow, divergence, flow_from_edges, flow_from_function, flow_norm_sq, zero_flow
from .markov import (
    MarkovProcess,
    apply_generator,
    dirichlet_form,
    inner_product_mu,
    is_reversible,
)
from .potential import capacity

__all__ = [
    "CollapsedState",
    "CollapsedProcess",
    "collapse_process",
    "collapse_flow",
    "collapse_function",
    "lift_function",
    "verify_collapse_identities",
]


class CollapsedState:
    """Fresh identifier for the contracted point; unique per collapse."""

    __slots__ = ("label",)

    def __init__(self, label: str = "e*"):
        self.label = label

    def __repr__(self):
        return self.label


@dataclass(frozen=True)
class CollapsedProcess:
    """Result of contracting ``collapsed_set`` of ``base`` into ``e_state``."""

    base: MarkovProcess
    process: MarkovProcess
    collapsed_set: frozenset
    e_state: object
    state_map: dict = field(repr=False)


def collapse_process(P: MarkovProcess, E, e_state=None) -> CollapsedProcess:
    """Contract E to a single state.

    The new rates keep r(x, y) off E, sum r(x, z) over z in E for jumps
    into the point, and average mu(z) r(z, y) / mu(E) for jumps out.  The
    lumped measure is passed through as the known invariant measure, so
    its stationarity is verified at construction; reversibility of the
    base process is inherited.
    """
    E = frozenset(E)
    if not E:
        raise EmptyCollapseSet("collapse set is empty")
    if len(E) >= P.n:
        raise FullCollapseSet("cannot collapse the entire state space")
    for s in E:
        if s not in P.index:
            raise KeyError(f"unknown state {s!r}")
    if e_state is None:
        e_state = CollapsedState()
    elif e_state in P.index:
        raise ValueError("collapsed-state identifier clashes with a base state")

    keep = [s for s in P.states if s not in E]
    states = keep + [e_state]
    old_of_new = np.array([P.index[s] for s in keep], dtype=np.intp)
    mu = P.mu
    e_idx = P.subset_indices(E)
    mu_E = float(mu[e_idx].sum())

    R = P.rates
    R_kk = R[old_of_new][:, old_of_new]
    into_e = np.asarray(R[old_of_new][:, e_idx].sum(axis=1)).ravel()
    out_of_e = np.asarray((mu[e_idx] @ R[e_idx][:, old_of_new])).ravel() / mu_E

    top = sp.hstack([R_kk, sp.csr_matrix(into_e.reshape(-1, 1))])
    bottom = sp.csr_matrix(np.concatenate([out_of_e, [0.0]]).reshape(1, -1))
    R_bar = sp.vstack([top, bottom]).tocsr()
    mu_bar = np.concatenate([mu[old_of_new], [mu_E]])

    proc = MarkovProcess(states, R_bar, invariant=mu_bar)
    state_map = {s: (e_state if s in E else s) for s in P.states}
    return CollapsedProcess(
        base=P, process=proc, collapsed_set=E, e_state=e_state, state_map=state_map
    )


def collapse_flow(cp: CollapsedProcess, phi: Flow) -> Flow:
    """Push a flow forward: bar_phi(x, e) = sum over z in E of phi(x, z).

    Divergences map accordingly: unchanged off E, and the divergence at e
    is the total divergence of the original flow over E.  Edges internal
    to E disappear.
    """
    if phi.edges.process is not cp.base:
        raise ValueError("flow does not live on the base process")
    base = cp.base
    E = cp.collapsed_set
    acc: dict = {}
    for k in range(phi.edges.m):
        v = float(phi.values[k])
        if v == 0.0:
            continue
        x = base.states[phi.edges.ei[k]]
        y = base.states[phi.edges.ej[k]]
        sx = cp.state_map[x]
        sy = cp.state_map[y]
        if sx is sy or sx == sy:
            continue
        acc[(sx, sy)] = acc.get((sx, sy), 0.0) + v
    return flow_from_edges(cp.process, acc)


def collapse_function(cp: CollapsedProcess, f) -> np.ndarray:
    """Push an E-constant function forward; exact constancy is required."""
    f = np.asarray(f, dtype=np.float64)
    e_idx = cp.base.subset_indices(cp.collapsed_set)
    vals = f[e_idx]
    if np.any(vals != vals[0]):
        raise NonConstantOnCollapseSet("function varies over the collapsed set")
    out = np.empty(cp.process.n)
    for s, i in cp.process.index.items():
        out[i] = vals[0] if s is cp.e_state else f[cp.base.index[s]]
    return out


def lift_function(cp: CollapsedProcess, f_bar) -> np.ndarray:
    """Pull a collapsed function back, constant over the collapsed set."""
    f_bar = np.asarray(f_bar, dtype=np.float64)
    e_val = f_bar[cp.process.index[cp.e_state]]
    out = np.empty(cp.base.n)
    for s, i in cp.base.index.items():
        out[i] = e_val if s in cp.collapsed_set else f_bar[cp.process.index[s]]
    return out


def _random_base_flow(P: MarkovProcess, rng) -> Flow:
    phi = zero_flow(P)
    phi.values[:] = rng.standard_normal(phi.edges.m)
    return phi


def verify_collapse_identities(
    P: MarkovProcess, E, A, trials: int = 50, seed: int = 0, sector_bound: float | None = None
) -> dict:
    """Numerically exercise the collapsing identities; returns a report.

    Checks norm contraction for random flows, equality for flows built
    from E-constant functions, preservation of Dirichlet pairings, the
    capacity identity cap_bar(e, A) = cap(E, A), divergence bookkeeping
    and reversibility inheritance.  When an analytic sector bound for the
    base chain is known (``sector_bound``; 1 is used automatically for
    reversible chains) the sampled sector ratios of the collapsed chain
    are checked against it, since the collapsed process inherits the
    sector condition with the same constant.
    """
    E = frozenset(E)
    A = frozenset(A)
    if E & A:
        raise ValueError("target set must be disjoint from the collapse set")
    cp = collapse_process(P, E)
    rng = np.random.default_rng(seed)
    checks = {}

    def record(name, margin, tolerance):
        checks[name] = {
            "pass": bool(margin <= tolerance),
            "margin": float(margin),
            "tolerance": tolerance,
        }

    worst_contraction = -np.inf
    for _ in range(trials):
        phi = _random_base_flow(P, rng)
        gap = flow_norm_sq(collapse_flow(cp, phi)) - flow_norm_sq(phi)
        worst_contraction = max(worst_contraction, gap / max(flow_norm_sq(phi), 1e-300))
    record("norm_contraction", worst_contraction, 1e-12)

    worst_eq = 0.0
    worst_div = 0.0
    for _ in range(trials):
        f = rng.standard_normal(P.n)
        e_idx = P.subset_indices(E)
        f[e_idx] = f[e_idx][0]
        psi = flow_from_function(P, f, "Psi")
        psi_bar = collapse_flow(cp, psi)
        scale = max(flow_norm_sq(psi), 1e-300)
        worst_eq = max(worst_eq, abs(flow_norm_sq(psi_bar) - flow_norm_sq(psi)) / scale)
        phi = _random_base_flow(P, rng)
        div = divergence(phi)
        div_bar = divergence(collapse_flow(cp, phi))
        gap = abs(div_bar[cp.process.index[cp.e_state]] - div[e_idx].sum())
        worst_div = max(worst_div, gap / max(np.abs(div).max(), 1e-300))
    record("equality_condition_psi", worst_eq, 1e-12)
    record("divergence_mapping", worst_div, 1e-12)

    worst_df = 0.0
    worst_pair = 0.0
    worst_phif = 0.0
    for _ in range(trials):
        f = rng.standard_normal(P.n)
        g = rng.standard_normal(P.n)
        e_idx = P.subset_indices(E)
        f[e_idx] = f[e_idx][0]
        g[e_idx] = g[e_idx][0]
        fb = collapse_function(cp, f)
        gb = collapse_function(cp, g)
        df = dirichlet_form(P, f)
        worst_df = max(worst_df, abs(dirichlet_form(cp.process, fb) - df) / max(df, 1e-300))
        pair = inner_product_mu(P, g, -apply_generator(P, f))
        pair_bar = inner_product_mu(cp.process, gb, -apply_generator(cp.process, fb))
        worst_pair = max(worst_pair, abs(pair - pair_bar) / max(abs(pair), 1e-300))
        for kind in ("Phi", "PhiStar", "Psi"):
            lhs = collapse_flow(cp, flow_from_function(P, f, kind))
            rhs = flow_from_function(cp.process, fb, kind)
            scale = max(np.abs(rhs.values).max(), 1e-300)
            worst_phif = max(worst_phif, np.abs(lhs.values - rhs.values).max() / scale)
    record("dirichlet_preserved", worst_df, 1e-11)
    record("generator_pairing_preserved", worst_pair, 1e-11)
    record("induced_flows_commute", worst_phif, 1e-11)

    cap_bar = capacity(cp.process, [cp.e_state], A).value
    cap_full = capacity(P, E, A).value
    record("capacity_identity", abs(cap_bar - cap_full) / max(cap_full, 1e-300), 1e-10)

    reversible = is_reversible(P, tol=1e-10)
    if reversible:
        checks["reversibility_inherited"] = {
            "pass": is_reversible(cp.process, tol=1e-10),
            "margin": 0.0,
            "tolerance": 1e-10,
        }

    if sector_bound is None and reversible:
        sector_bound = 1.0
    if sector_bound is not None:
        from .variational import estimate_sector_constant

        coll_bound = estimate_sector_constant(cp.process, 50, seed=seed + 2)
        record("sector_inherited", coll_bound - sector_bound, 1e-9)

    return {"E": sorted(map(repr, E)), "A": sorted(map(repr, A)), "checks": checks}
