"""Equilibrium potentials, capacities and mean-hitting functionals.

The equilibrium potential h_{A,B}(x) is the probability of hitting A
before B from x.  It solves a boundary value problem: 1 on A, 0 on B,
harmonic elsewhere.  The capacity cap(A, B) = D(h_{A,B}) is computed here
by two independent routes, the Dirichlet form of the potential and the
escape-probability formula through the embedded chain; their agreement is
a standing integrity check on the solver.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import EmptySet, OverlappingSets, SolveFailure
from .markov import (
    MarkovProcess,
    adjoint,
    dirichlet_form,
    embedded_chain,
    factorize,
    symmetrize,
)

__all__ = [
    "CapacityReport",
    "equilibrium_potential",
    "capacity",
    "capacity_via_escape",
    "equilibrium_measure",
    "mean_hitting_functional",
    "mean_hitting_time",
    "direct_mean_hitting_time",
    "direct_occupation_time",
    "potential_bound",
]

#: Normalized harmonicity residual allowed for solved potentials.
HARMONIC_RTOL = 1e-11


@dataclass(frozen=True)
class CapacityReport:
    """Capacity value with its computation route and solver residual."""

    value: float
    route: str
    residual: float
    A: tuple
    B: tuple

    def to_json(self) -> str:
        from .markov import _state_to_json

        return json.dumps(
            {
                "value": self.value,
                "route": self.route,
                "residual": self.residual,
                "A": [_state_to_json(s) for s in self.A],
                "B": [_state_to_json(s) for s in self.B],
            }
        )


def _check_sets(P: MarkovProcess, A, B):
    A = frozenset(A)
    B = frozenset(B)
    if not A or not B:
        raise EmptySet("A and B must be non-empty")
    if A & B:
        raise OverlappingSets(f"A and B share states: {sorted(map(repr, A & B))}")
    for s in A | B:
        if s not in P.index:
            raise KeyError(f"unknown state {s!r}")
    return A, B


def _variant_process(P: MarkovProcess, variant: str) -> MarkovProcess:
    if variant == "plain":
        return P
    if variant == "adjoint":
        return adjoint(P)
    if variant == "symmetrized":
        return symmetrize(P)
    raise ValueError(f"unknown variant {variant!r}")


def _harmonic_residual(P: MarkovProcess, h: np.ndarray, interior: np.ndarray) -> float:
    if len(interior) == 0:
        return 0.0
    Lh = P.rates @ h - P.holding * h
    return float(np.max(np.abs(Lh[interior]) / P.holding[interior]))


def equilibrium_potential(P: MarkovProcess, A, B, variant: str = "plain") -> np.ndarray:
    """Solve for h: 1 on A, 0 on B, harmonic on the complement.

    The harmonic block is solved by sparse LU with one step of iterative
    refinement; the normalized residual max |Lh| / lambda on the interior
    must come out below 1e-11 or SolveFailure is raised.  The ``variant``
    selects the plain, adjoint or symmetrized process.
    """
    A, B = _check_sets(P, A, B)
    Pv = _variant_process(P, variant)
    n = Pv.n
    h = np.zeros(n)
    a_idx = Pv.subset_indices(A)
    b_idx = Pv.subset_indices(B)
    h[a_idx] = 1.0
    boundary = np.zeros(n, dtype=bool)
    boundary[a_idx] = True
    boundary[b_idx] = True
    interior = np.flatnonzero(~boundary)
    if len(interior):
        Q = Pv.generator.tocsr()
        Q_II = Q[interior][:, interior].tocsc()
        rhs = -np.asarray(Q[interior][:, a_idx].sum(axis=1)).ravel()
        try:
            lu = factorize(Q_II)
            x = lu.solve(rhs)
            x += lu.solve(rhs - Q_II @ x)
        except RuntimeError as exc:
            raise SolveFailure(str(exc)) from exc
        h[interior] = x
    res = _harmonic_residual(Pv, h, interior)
    if not np.isfinite(res) or res > HARMONIC_RTOL:
        raise SolveFailure(f"harmonicity residual {res:.3e} exceeds {HARMONIC_RTOL}")
    return h


def capacity(P: MarkovProcess, A, B) -> CapacityReport:
    """cap(A, B) as the Dirichlet form of the equilibrium potential.

    When A and B partition the state space the potential is the exact
    indicator of A and the harmonicity residual is vacuously zero; the
    capacity is then the plain conductance cut between A and B.
    """
    A, B = _check_sets(P, A, B)
    h = equilibrium_potential(P, A, B)
    interior = _interior_indices(P, A, B)
    return CapacityReport(
        value=dirichlet_form(P, h),
        route="dirichlet_of_h",
        residual=_harmonic_residual(P, h, interior),
        A=_sorted_states(P, A),
        B=_sorted_states(P, B),
    )


def capacity_via_escape(P: MarkovProcess, A, B) -> CapacityReport:
    """cap(A, B) = sum over x in A of M(x) P_x[hit B before returning to A].

    The escape probability from x in A is evaluated through one jump of
    the embedded chain, P_x[...] = sum_y p(x, y) h_{B,A}(y), reusing the
    potential solver; M = lambda * mu is the jump-chain weight.
    """
    A, B = _check_sets(P, A, B)
    chain = embedded_chain(P)
    h_BA = 1.0 - equilibrium_potential(P, A, B)
    a_idx = P.subset_indices(A)
    escape = np.asarray(chain.jump_probs[a_idx] @ h_BA).ravel()
    value = float(np.sum(chain.weight[a_idx] * escape))
    interior = _interior_indices(P, A, B)
    return CapacityReport(
        value=value,
        route="escape_formula",
        residual=_harmonic_residual(P, 1.0 - h_BA, interior),
        A=_sorted_states(P, A),
        B=_sorted_states(P, B),
    )


def equilibrium_measure(P: MarkovProcess, A, B, variant: str = "adjoint") -> np.ndarray:
    """Probability measure on A proportional to M(x) P_x[escape to B].

    Returned as a full state-indexed vector supported on A.  It
    concentrates on the boundary of A and is the Dirac mass for singleton
    A.  The ``variant`` chooses which process drives the escape; the
    normalizer is that process's capacity, so the weights summing to one
    re-expresses the escape formula for the capacity.
    """
    A, B = _check_sets(P, A, B)
    Pv = _variant_process(P, variant)
    chain = embedded_chain(Pv)
    h_BA = 1.0 - equilibrium_potential(Pv, A, B)
    a_idx = Pv.subset_indices(A)
    escape = np.asarray(chain.jump_probs[a_idx] @ h_BA).ravel()
    cap = dirichlet_form(Pv, 1.0 - h_BA)
    nu = np.zeros(Pv.n)
    nu[a_idx] = chain.weight[a_idx] * escape / cap
    return nu


def mean_hitting_functional(P: MarkovProcess, A, B, f) -> float:
    """<f, h_adj_{A,B}>_mu / cap(A, B).

    Equals the expected additive functional int f(X_t) dt up to tau_B when
    the start is drawn from the adjoint equilibrium measure on A.
    """
    A, B = _check_sets(P, A, B)
    h_dag = equilibrium_potential(P, A, B, variant="adjoint")
    cap = capacity(P, A, B).value
    f = np.asarray(f, dtype=np.float64)
    return float(np.sum(f * h_dag * P.mu)) / cap


def mean_hitting_time(P: MarkovProcess, z, B) -> float:
    """E_z[tau_B] through the potential-theoretic formula."""
    return mean_hitting_functional(P, [z], B, np.ones(P.n))


def direct_mean_hitting_time(P: MarkovProcess, B) -> np.ndarray:
    """Vector of E_x[tau_B] from the fundamental system (-L)u = 1 off B."""
    return _fundamental_solve(P, B, np.ones(P.n))


def direct_occupation_time(P: MarkovProcess, B, z) -> np.ndarray:
    """E_x[time spent at z before tau_B] by direct linear solve."""
    rhs = np.zeros(P.n)
    rhs[P.index[z]] = 1.0
    return _fundamental_solve(P, B, rhs)


def _fundamental_solve(P: MarkovProcess, B, source: np.ndarray) -> np.ndarray:
    B = frozenset(B)
    if not B:
        raise EmptySet("target set must be non-empty")
    b_idx = P.subset_indices(B)
    mask = np.ones(P.n, dtype=bool)
    mask[b_idx] = False
    interior = np.flatnonzero(mask)
    u = np.zeros(P.n)
    if len(interior):
        Q_II = P.generator.tocsr()[interior][:, interior].tocsc()
        rhs = -source[interior]
        lu = factorize(Q_II)
        x = lu.solve(rhs)
        x += lu.solve(rhs - Q_II @ x)
        u[interior] = x
    return u


def potential_bound(P: MarkovProcess, x, A, B):
    """Upper bound h_{A,B}(x) <= cap(x, A) / cap(x, A u B), with check.

    Returns (bound, holds) where ``holds`` records whether the solved
    potential actually satisfies the bound to 1e-12.
    """
    A, B = _check_sets(P, A, B)
    if x in A or x in B:
        raise OverlappingSets("x must lie outside A and B")
    num = capacity(P, [x], A).value
    den = capacity(P, [x], set(A) | set(B)).value
    bound = num / den
    h = equilibrium_potential(P, A, B)
    holds = bool(h[P.index[x]] <= bound + 1e-12)
    return bound, holds


def _interior_indices(P: MarkovProcess, A, B) -> np.ndarray:
    mask = np.ones(P.n, dtype=bool)
    mask[P.subset_indices(A)] = False
    mask[P.subset_indices(B)] = False
    return np.flatnonzero(mask)


def _sorted_states(P: MarkovProcess, S) -> tuple:
    return tuple(sorted(S, key=P.index.__getitem__))
