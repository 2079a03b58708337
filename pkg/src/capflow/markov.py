"""Finite-state continuous-time Markov processes and their derived objects.

A :class:`MarkovProcess` is the single source of truth for a chain: an
ordered finite state set together with a nonnegative rate function
``r(x, y)``.  Everything else (invariant measure, holding rates, embedded
chain, adjoint, symmetrization, generator action, Dirichlet form) is
derived from it.  State identifiers are opaque hashables; a dense integer
index is assigned at construction and all numeric work uses that index.

Processes are immutable after construction and safe to share across
threads; every operation in this module is a pure function.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.csgraph as csgraph
import scipy.sparse.linalg as spla

from .errors import NegativeRate, NotIrreducible, SolveFailure

__all__ = [
    "MarkovProcess",
    "EmbeddedChain",
    "build_process",
    "cycle_walk",
    "invariant_measure",
    "is_reversible",
    "adjoint",
    "symmetrize",
    "embedded_chain",
    "apply_generator",
    "inner_product_mu",
    "dirichlet_form",
    "process_to_json",
    "process_from_json",
]

#: Relative residual allowed for the stationarity equation of the invariant
#: measure, scaled by the infinity norm of the generator matrix.
STATIONARITY_RTOL = 1e-12


def factorize(A):
    """Sparse LU tuned for generator blocks (symmetric sparsity pattern)."""
    return spla.splu(A, permc_spec="MMD_AT_PLUS_A")


class MarkovProcess:
    """Irreducible continuous-time Markov process on a finite state set.

    Parameters
    ----------
    states : sequence of hashables
        Ordered state identifiers.  Order fixes the dense integer index.
    rate_matrix : scipy sparse matrix, shape (n, n)
        ``rate_matrix[i, j] = r(states[i], states[j])``; the diagonal must
        be zero and all entries nonnegative.
    invariant : ndarray, optional
        Known invariant probability measure.  When given it is verified
        against the stationarity equation instead of being solved for,
        which is both faster and better conditioned for Gibbs-type chains
        whose measure is known in closed form.
    """

    __slots__ = ("states", "index", "rates", "holding", "n", "_mu", "_rates_csc")

    def __init__(self, states, rate_matrix, invariant=None, _validate=True):
        self.states = tuple(states)
        self.n = len(self.states)
        if len(set(self.states)) != self.n:
            raise ValueError("duplicate state identifiers")
        self.index = {s: i for i, s in enumerate(self.states)}
        R = sp.csr_matrix(rate_matrix, dtype=np.float64, copy=True)
        R.eliminate_zeros()
        if _validate:
            if R.shape != (self.n, self.n):
                raise ValueError("rate matrix shape does not match state count")
            if R.nnz and R.data.min() < 0.0:
                raise NegativeRate("negative jump rate")
            if R.diagonal().any():
                raise ValueError("rate matrix has nonzero diagonal")
        self.rates = R
        self.holding = np.asarray(R.sum(axis=1)).ravel()
        if _validate:
            if np.any(self.holding <= 0.0):
                dead = self.states[int(np.argmin(self.holding))]
                raise NotIrreducible(f"state {dead!r} has zero holding rate")
            _check_strong_connectivity(R, self.states)
        self._mu = None
        self._rates_csc = None
        if invariant is not None:
            mu = np.asarray(invariant, dtype=np.float64)
            mu = mu / mu.sum()
            _verify_stationarity(self, mu)
            self._mu = mu

    # -- basic accessors ------------------------------------------------

    def state_index(self, state) -> int:
        return self.index[state]

    def subset_indices(self, subset) -> np.ndarray:
        """Sorted dense indices of a collection of state identifiers."""
        return np.array(sorted(self.index[s] for s in subset), dtype=np.intp)

    def rate(self, x, y) -> float:
        return float(self.rates[self.index[x], self.index[y]])

    @property
    def rates_csc(self):
        if self._rates_csc is None:
            self._rates_csc = self.rates.tocsc()
        return self._rates_csc

    @property
    def generator(self) -> sp.csr_matrix:
        """Generator matrix Q with rows summing to zero."""
        return self.rates - sp.diags(self.holding)

    @property
    def mu(self) -> np.ndarray:
        """Invariant probability measure, solved on first access."""
        if self._mu is None:
            self._mu = _solve_invariant(self)
        return self._mu

    def conductances(self) -> sp.csr_matrix:
        """Conductance matrix c(x, y) = mu(x) r(x, y)."""
        return sp.diags(self.mu) @ self.rates

    def __repr__(self):
        return f"MarkovProcess(n={self.n}, edges={self.rates.nnz})"


@dataclass(frozen=True)
class EmbeddedChain:
    """Jump chain of a continuous-time process.

    ``jump_probs[i, j] = r(x_i, x_j) / lambda(x_i)`` is row stochastic and
    ``weight`` is the (non-probability) invariant measure
    ``M(x) = lambda(x) mu(x)`` of the jump chain.  With ``adjoint=True``
    the jump probabilities are those of the time-reversed chain,
    ``p(x, y) = M(y) p_fwd(y, x) / M(x)``; the measure M is shared.
    """

    jump_probs: sp.csr_matrix
    weight: np.ndarray
    adjoint: bool = False


# -- construction ------------------------------------------------------


def build_process(states, rates, invariant=None) -> MarkovProcess:
    """Build a process from a rate mapping ``{(x, y): r}`` or a matrix.

    Raises
    ------
    NegativeRate
        If any supplied rate is negative.
    NotIrreducible
        If the positive-rate graph is not strongly connected.
    """
    states = tuple(states)
    if isinstance(rates, dict):
        index = {s: i for i, s in enumerate(states)}
        n = len(states)
        rows, cols, vals = [], [], []
        for (x, y), r in rates.items():
            r = float(r)
            if r < 0.0:
                raise NegativeRate(f"r({x!r}, {y!r}) = {r} < 0")
            if x == y:
                if r != 0.0:
                    raise ValueError("diagonal rates must be zero")
                continue
            if r > 0.0:
                rows.append(index[x])
                cols.append(index[y])
                vals.append(r)
        matrix = sp.coo_matrix((vals, (rows, cols)), shape=(n, n))
    else:
        matrix = rates
    return MarkovProcess(states, matrix, invariant=invariant)


def cycle_walk(N: int, p: float) -> MarkovProcess:
    """Nearest-neighbour walk on the discrete torus of length N.

    Jump rate p clockwise (x -> x+1) and 1-p counterclockwise.  The
    invariant measure is uniform for every p, and the walk is reversible
    iff p = 1/2.  Endpoint drifts p in {0, 1} stay irreducible on a cycle
    and are accepted.
    """
    if N < 2:
        raise ValueError("cycle needs at least 2 states")
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    rates = {}
    for x in range(N):
        if p > 0.0:
            rates[(x, (x + 1) % N)] = rates.get((x, (x + 1) % N), 0.0) + p
        if p < 1.0:
            rates[(x, (x - 1) % N)] = rates.get((x, (x - 1) % N), 0.0) + (1.0 - p)
    return build_process(range(N), rates, invariant=np.full(N, 1.0 / N))


# -- invariant measure and reversibility --------------------------------


def _check_strong_connectivity(R: sp.csr_matrix, states) -> None:
    # One forward and one backward reachability pass on positive-rate edges.
    n = R.shape[0]
    fwd = csgraph.breadth_first_order(R, 0, directed=True, return_predecessors=False)
    if len(fwd) != n:
        missing = states[int(np.setdiff1d(np.arange(n), fwd)[0])]
        raise NotIrreducible(f"state {missing!r} unreachable from {states[0]!r}")
    bwd = csgraph.breadth_first_order(R.T, 0, directed=True, return_predecessors=False)
    if len(bwd) != n:
        missing = states[int(np.setdiff1d(np.arange(n), bwd)[0])]
        raise NotIrreducible(f"state {states[0]!r} unreachable from {missing!r}")


def _generator_norm(P: MarkovProcess) -> float:
    return 2.0 * float(P.holding.max())


def _verify_stationarity(P: MarkovProcess, mu: np.ndarray) -> None:
    if np.any(mu <= 0.0):
        raise SolveFailure("invariant measure has a non-positive entry")
    residual = np.abs(mu @ P.generator).max()
    if residual > STATIONARITY_RTOL * _generator_norm(P):
        raise SolveFailure(
            f"stationarity residual {residual:.3e} exceeds tolerance"
        )


def _solve_invariant(P: MarkovProcess) -> np.ndarray:
    """Null vector of the transposed generator via sparse LU.

    One row of Q^T is replaced by the normalization constraint; a single
    step of iterative refinement follows the direct solve.
    """
    n = P.n
    A = (P.generator.T).tolil()
    A[n - 1, :] = 1.0
    A = A.tocsc()
    b = np.zeros(n)
    b[n - 1] = 1.0
    try:
        lu = factorize(A)
        mu = lu.solve(b)
        mu += lu.solve(b - A @ mu)
    except RuntimeError as exc:  # singular factor: broken irreducibility check
        raise SolveFailure(str(exc)) from exc
    mu = mu / mu.sum()
    _verify_stationarity(P, mu)
    return mu


def invariant_measure(P: MarkovProcess) -> np.ndarray:
    """Invariant probability measure of P (strictly positive)."""
    return P.mu


def is_reversible(P: MarkovProcess, tol: float = 1e-12) -> bool:
    """Detailed balance check: mu(x) r(x,y) = mu(y) r(y,x) on every edge.

    True iff the maximal conductance asymmetry is at most ``tol`` times
    the maximal conductance.
    """
    C = P.conductances()
    gap = abs(C - C.T)
    if gap.nnz == 0:
        return True
    return gap.max() <= tol * C.max()


def adjoint(P: MarkovProcess) -> MarkovProcess:
    """Time-reversed process, r_adj(x, y) = mu(y) r(y, x) / mu(x).

    Shares the invariant measure of P; applying it twice returns the
    original rates (up to floating point).
    """
    mu = P.mu
    R_adj = sp.diags(1.0 / mu) @ P.rates.T @ sp.diags(mu)
    return MarkovProcess(P.states, R_adj.tocsr(), invariant=mu, _validate=False)


def symmetrize(P: MarkovProcess) -> MarkovProcess:
    """Additive symmetrization, reversible with respect to mu.

    r_s(x, y) = [mu(x) r(x, y) + mu(y) r(y, x)] / (2 mu(x)); the Dirichlet
    form is unchanged.
    """
    mu = P.mu
    C = P.conductances()
    Cs = 0.5 * (C + C.T)
    R_s = sp.diags(1.0 / mu) @ Cs
    return MarkovProcess(P.states, R_s.tocsr(), invariant=mu, _validate=False)


def embedded_chain(P: MarkovProcess, adjoint_chain: bool = False) -> EmbeddedChain:
    """Discrete-time jump chain with its invariant weight M = lambda * mu."""
    Pmat = sp.diags(1.0 / P.holding) @ P.rates
    M = P.holding * P.mu
    if adjoint_chain:
        Pmat = sp.diags(1.0 / M) @ Pmat.T @ sp.diags(M)
    return EmbeddedChain(jump_probs=Pmat.tocsr(), weight=M, adjoint=adjoint_chain)


# -- generator, inner product, Dirichlet form ----------------------------


def apply_generator(P: MarkovProcess, f: np.ndarray) -> np.ndarray:
    """(Lf)(x) = sum_y r(x, y) [f(y) - f(x)]."""
    f = np.asarray(f, dtype=np.float64)
    return P.rates @ f - P.holding * f


def inner_product_mu(P: MarkovProcess, f, g) -> float:
    """<f, g>_mu = sum_x f(x) g(x) mu(x)."""
    return float(np.sum(np.asarray(f) * np.asarray(g) * P.mu))


def dirichlet_form(P: MarkovProcess, f, check: bool = False) -> float:
    """Dirichlet form D(f) = <f, -Lf>_mu.

    Evaluated as the edge sum (1/2) sum_{x,y} mu(x) r(x,y) [f(y)-f(x)]^2,
    which is nonnegative by construction.  With ``check=True`` the
    operator route <f, -Lf>_mu is evaluated as well and the two must agree
    to 1e-12 relative.
    """
    f = np.asarray(f, dtype=np.float64)
    C = P.conductances().tocoo()
    diff = f[C.col] - f[C.row]
    value = 0.5 * float(np.sum(C.data * diff * diff))
    if check:
        other = inner_product_mu(P, f, -apply_generator(P, f))
        scale = max(abs(value), abs(other), 1e-300)
        if abs(value - other) > 1e-12 * max(scale, 1.0):
            raise SolveFailure(
                f"Dirichlet form routes disagree: {value!r} vs {other!r}"
            )
    return value


# -- serialization -------------------------------------------------------


def process_to_json(P: MarkovProcess) -> str:
    """Serialize to ``{"states": [...], "rates": [[from, to, rate], ...]}``.

    States keep construction order; rate triples are sorted by dense index
    so output is deterministic.
    """
    C = P.rates.tocoo()
    order = np.lexsort((C.col, C.row))
    triples = [
        [_state_to_json(P.states[C.row[k]]), _state_to_json(P.states[C.col[k]]), float(C.data[k])]
        for k in order
    ]
    return json.dumps({"states": [_state_to_json(s) for s in P.states], "rates": triples})


def process_from_json(text: str) -> MarkovProcess:
    doc = json.loads(text)
    states = [_state_from_json(s) for s in doc["states"]]
    rates = {
        (_state_from_json(x), _state_from_json(y)): float(r)
        for x, y, r in doc["rates"]
    }
    return build_process(states, rates)


def _state_to_json(state):
    if isinstance(state, tuple):
        return list(_state_to_json(s) for s in state)
    return state


def _state_from_json(state):
    # JSON has no tuples; lists round-trip as tuples so states stay hashable.
    if isinstance(state, list):
        return tuple(_state_from_json(s) for s in state)
    return state
