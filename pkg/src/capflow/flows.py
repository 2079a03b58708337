"""Discrete flow calculus on the conductance graph of a Markov process.

Edges are the directed pairs (x, y) with symmetrized conductance
c_s(x, y) = [c(x, y) + c(y, x)] / 2 > 0; this is the general convention
and the reversible one is its special case.  A flow is an antisymmetric
real function on edges.  Flows are stored on one canonical orientation
(lower dense index to higher) so antisymmetry is exact by construction:
reading the reverse edge returns the negation bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import potential as _potential
from .errors import NotReversible, ZeroCapacity
from .markov import MarkovProcess, apply_generator, is_reversible

__all__ = [
    "EdgeSet",
    "Flow",
    "edge_set",
    "zero_flow",
    "flow_from_edges",
    "divergence",
    "divergence_at",
    "divergence_set",
    "flow_inner",
    "flow_norm_sq",
    "flow_from_function",
    "unit_flow",
    "flow_to_json",
]


@dataclass(frozen=True)
class EdgeSet:
    """Canonical edge list of a process's conductance graph.

    ``ei < ej`` are dense state indices per edge; ``c_fwd`` holds
    c(ei, ej), ``c_bwd`` holds c(ej, ei) and ``cs`` their mean, which is
    strictly positive on every stored edge.
    """

    process: MarkovProcess
    ei: np.ndarray
    ej: np.ndarray
    c_fwd: np.ndarray
    c_bwd: np.ndarray
    cs: np.ndarray
    _lookup: dict = field(repr=False)

    @property
    def m(self) -> int:
        return len(self.ei)

    def edge_id(self, x, y):
        """(edge index, sign) for the ordered state pair (x, y)."""
        i, j = self.process.index[x], self.process.index[y]
        if i < j:
            return self._lookup[(i, j)], 1.0
        return self._lookup[(j, i)], -1.0


_EDGE_CACHE: dict[int, EdgeSet] = {}


def edge_set(P: MarkovProcess) -> EdgeSet:
    """Edge set of P; cached per process instance."""
    key = id(P)
    cached = _EDGE_CACHE.get(key)
    if cached is not None and cached.process is P:
        return cached
    if len(_EDGE_CACHE) > 64:
        _EDGE_CACHE.clear()
    C = P.conductances().tocsr()
    S = (C + C.T).tocoo()
    keep = S.row < S.col
    ei = S.row[keep].astype(np.intp)
    ej = S.col[keep].astype(np.intp)
    order = np.lexsort((ej, ei))
    ei, ej = ei[order], ej[order]
    c_fwd = np.asarray(C[ei, ej]).ravel()
    c_bwd = np.asarray(C[ej, ei]).ravel()
    es = EdgeSet(
        process=P,
        ei=ei,
        ej=ej,
        c_fwd=c_fwd,
        c_bwd=c_bwd,
        cs=0.5 * (c_fwd + c_bwd),
        _lookup={(int(a), int(b)): k for k, (a, b) in enumerate(zip(ei, ej))},
    )
    _EDGE_CACHE[key] = es
    return es


@dataclass
class Flow:
    """Antisymmetric edge function, stored on the canonical orientation."""

    edges: EdgeSet
    values: np.ndarray

    def value(self, x, y) -> float:
        k, sign = self.edges.edge_id(x, y)
        return sign * float(self.values[k])

    def __add__(self, other: "Flow") -> "Flow":
        _same_edges(self, other)
        return Flow(self.edges, self.values + other.values)

    def __sub__(self, other: "Flow") -> "Flow":
        _same_edges(self, other)
        return Flow(self.edges, self.values - other.values)

    def __mul__(self, c: float) -> "Flow":
        return Flow(self.edges, self.values * float(c))

    __rmul__ = __mul__

    def __neg__(self) -> "Flow":
        return Flow(self.edges, -self.values)


def _same_edges(a: Flow, b: Flow) -> None:
    if a.edges is not b.edges:
        raise ValueError("flows live on different edge sets")


def zero_flow(P: MarkovProcess) -> Flow:
    es = edge_set(P)
    return Flow(es, np.zeros(es.m))


def flow_from_edges(P: MarkovProcess, edge_values) -> Flow:
    """Flow from a mapping ``{(x, y): value}`` of directed assignments."""
    phi = zero_flow(P)
    for (x, y), v in edge_values.items():
        k, sign = phi.edges.edge_id(x, y)
        phi.values[k] += sign * float(v)
    return phi


# -- divergence ----------------------------------------------------------


def divergence(phi: Flow) -> np.ndarray:
    """Net outflow (div phi)(x) at every state, as a dense vector."""
    es = phi.edges
    n = es.process.n
    out = np.bincount(es.ei, weights=phi.values, minlength=n)
    out -= np.bincount(es.ej, weights=phi.values, minlength=n)
    return out


def divergence_at(phi: Flow, x) -> float:
    i = phi.edges.process.index[x]
    return float(divergence(phi)[i])


def divergence_set(phi: Flow, A) -> float:
    idx = phi.edges.process.subset_indices(A)
    return float(divergence(phi)[idx].sum())


# -- inner product -------------------------------------------------------


def flow_inner(phi: Flow, psi: Flow) -> float:
    """<phi, psi> = (1/2) sum over directed edges of phi psi / c_s."""
    _same_edges(phi, psi)
    return float(np.sum(phi.values * psi.values / phi.edges.cs))


def flow_norm_sq(phi: Flow) -> float:
    return flow_inner(phi, phi)


# -- function-induced flows ----------------------------------------------


def flow_from_function(P: MarkovProcess, f, kind: str = "Psi") -> Flow:
    """One of the three flows induced by a function.

    Phi(x, y)     = f(y) c(y, x) - f(x) c(x, y)
    PhiStar(x, y) = f(y) c(x, y) - f(x) c(y, x)
    Psi(x, y)     = c_s(x, y) [f(y) - f(x)] = (Phi + PhiStar) / 2

    In the reversible case the three coincide.  div PhiStar = mu * Lf and
    div Phi = mu * L_adj f, so the flows built from equilibrium potentials
    are divergence free away from their boundary sets.
    """
    f = np.asarray(f, dtype=np.float64)
    es = edge_set(P)
    fi, fj = f[es.ei], f[es.ej]
    if kind == "Phi":
        vals = fj * es.c_bwd - fi * es.c_fwd
    elif kind == "PhiStar":
        vals = fj * es.c_fwd - fi * es.c_bwd
    elif kind == "Psi":
        vals = es.cs * (fj - fi)
    else:
        raise ValueError(f"unknown flow kind {kind!r}")
    return Flow(es, vals)


def unit_flow(P: MarkovProcess, A, B, kind: str = "psi") -> Flow:
    """Canonical unit flow from A to B.

    kind "psi" is -Psi_h / cap(A, B) with h the equilibrium potential
    (reversible processes only; in general its divergence does not vanish
    off A and B).  kind "phi" is -Phi_{h_adj} / cap and kind "phiStar" is
    -PhiStar_h / cap; both are unit flows for arbitrary chains.
    """
    cap = _potential.capacity(P, A, B).value
    if cap <= 0.0:
        raise ZeroCapacity("cannot normalize a flow by zero capacity")
    if kind == "psi":
        if not is_reversible(P, tol=1e-10):
            raise NotReversible("psi unit flow requires a reversible process")
        h = _potential.equilibrium_potential(P, A, B)
        base = flow_from_function(P, h, "Psi")
    elif kind == "phi":
        h_dag = _potential.equilibrium_potential(P, A, B, variant="adjoint")
        base = flow_from_function(P, h_dag, "Phi")
    elif kind == "phiStar":
        h = _potential.equilibrium_potential(P, A, B)
        base = flow_from_function(P, h, "PhiStar")
    else:
        raise ValueError(f"unknown unit flow kind {kind!r}")
    return (-1.0 / cap) * base


def flow_to_json(phi: Flow) -> list:
    """Canonical-orientation edge list ``[[x, y, value], ...]``."""
    states = phi.edges.process.states
    from .markov import _state_to_json

    return [
        [_state_to_json(states[i]), _state_to_json(states[j]), float(v)]
        for i, j, v in zip(phi.edges.ei, phi.edges.ej, phi.values)
    ]


def divergence_equals_generator(P: MarkovProcess, f, kind: str) -> float:
    """Max abs difference between div of the induced flow and its generator form."""
    f = np.asarray(f, dtype=np.float64)
    phi = flow_from_function(P, f, kind)
    div = divergence(phi)
    if kind == "Phi":
        from .markov import adjoint

        target = P.mu * apply_generator(adjoint(P), f)
    elif kind == "PhiStar":
        target = P.mu * apply_generator(P, f)
    else:
        from .markov import symmetrize

        target = P.mu * apply_generator(symmetrize(P), f)
    return float(np.abs(div - target).max())
