"""Two-dimensional Ising model on a K x L torus under Metropolis dynamics.

Configurations are bit-packed integers (bit = 1 for spin +, site index
``row * K + column``) so the 2^(K L) state space never materializes:
energy-landscape analysis walks the flip graph lazily.  The module covers
the Hamiltonian and Gibbs weights, exact bottleneck search for the energy
barrier between the two ground states, the canonical band/protuberance
configurations, neighborhood enumeration, the saddle-plateau structure
around each ground state with its auxiliary uniform chain, the resulting
bulk/edge/prefactor constants, and the explicit test function and test
flow whose scaled Dirichlet form and flow norm certify two-sided bounds
on the ground-state capacity.

All Gibbs-weighted sums are energy-shifted: contributions carry factors
exp(-beta (H - offset)) with an integer offset (usually the barrier), so
nothing underflows even at large beta.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import (
    CapExceeded,
    CapflowError,
    DimensionOrder,
    FrontierExplosion,
    StateSpaceTooLarge,
)
from .markov import MarkovProcess
from .potential import capacity, equilibrium_potential

__all__ = [
    "IsingModel",
    "TypicalStructure",
    "EdgeChain",
    "hamiltonian",
    "gibbs_weight",
    "metropolis_rate",
    "edge_chain",
    "partition_function",
    "communication_height",
    "energy_barrier",
    "canonical_configurations",
    "canonical_path",
    "random_canonical_path",
    "neighborhood",
    "typical_structure",
    "bulk_constant",
    "test_function_f0",
    "dirichlet_of_f0",
    "test_flow_psi0",
    "flow_checks",
    "rate_approximation_check",
    "exact_chain",
    "exact_small_lattice",
    "bridge_census",
]

ENUM_BUDGET = 5_000_000
FULL_ENUM_LIMIT = 24


class IsingModel:
    """Torus geometry and bit arithmetic for spin configurations.

    K is the row length (number of columns) and L the number of rows,
    with 2 <= K <= L.  The standing assumptions of the saddle-structure
    theory additionally need K >= 5; ``assumptions_ok`` records that.
    The barrier formula 2K + 2 is exposed as ``gamma`` whenever the
    assumptions hold.
    """

    def __init__(self, K: int, L: int, beta: float | None = None):
        if K > L:
            raise DimensionOrder(f"need K <= L, got ({K}, {L})")
        if K < 2:
            raise ValueError("need K >= 2")
        if beta is not None and beta <= 0:
            raise ValueError("beta must be positive")
        self.K = K
        self.L = L
        self.beta = beta
        self.n_sites = K * L
        self.full = (1 << self.n_sites) - 1
        self.assumptions_ok = 5 <= K <= L
        self.gamma = 2 * K + 2 if self.assumptions_ok else None
        self.minus = 0
        self.plus = self.full
        self._mask_last_col = sum(1 << (ell * K + K - 1) for ell in range(L))
        self._mask_not_last = self.full ^ self._mask_last_col
        self.neighbors = []
        for ell in range(L):
            for k in range(K):
                self.neighbors.append(
                    (
                        ell * K + (k + 1) % K,
                        ell * K + (k - 1) % K,
                        ((ell + 1) % L) * K + k,
                        ((ell - 1) % L) * K + k,
                    )
                )

    # bit-level helpers -------------------------------------------------

    def _rot_row(self, s: int) -> int:
        n, K = self.n_sites, self.K
        return ((s << K) | (s >> (n - K))) & self.full

    def _rot_col(self, s: int) -> int:
        return (((s & self._mask_not_last) << 1) | ((s & self._mask_last_col) >> (self.K - 1))) & self.full

    def energy(self, s: int) -> int:
        """Number of disagreeing nearest-neighbour bonds (periodic)."""
        return ((s ^ self._rot_row(s)).bit_count() + (s ^ self._rot_col(s)).bit_count())

    def energy_delta(self, s: int, site: int) -> int:
        """H(flip(s, site)) - H(s), from the four incident bonds."""
        spin = (s >> site) & 1
        same = 0
        for nb in self.neighbors[site]:
            if ((s >> nb) & 1) == spin:
                same += 1
        return 2 * same - 4

    def flip(self, s: int, site: int) -> int:
        return s ^ (1 << site)

    def row_mask(self, ell: int) -> int:
        return ((1 << self.K) - 1) << ((ell % self.L) * self.K)

    def col_mask(self, k: int) -> int:
        return sum(1 << (ell * self.K + (k % self.K)) for ell in range(self.L))

    # canonical configurations ------------------------------------------

    def band(self, ell: int, v: int) -> int:
        """v consecutive all-plus rows starting at row ell."""
        s = 0
        for i in range(v):
            s |= self.row_mask(ell + i)
        return s

    def protuberance(self, ell: int, v: int, k: int, h: int, up: bool = True) -> int:
        """Band of height v plus a width-h attachment above or below."""
        s = self.band(ell, v)
        row = (ell + v) % self.L if up else (ell - 1) % self.L
        for i in range(h):
            s |= 1 << (row * self.K + (k + i) % self.K)
        return s

    def __repr__(self):
        return f"IsingModel(K={self.K}, L={self.L})"


def hamiltonian(model: IsingModel, sigma: int) -> int:
    return model.energy(sigma)


def gibbs_weight(model: IsingModel, beta: float, sigma: int, offset: float = 0.0) -> float:
    """Unnormalized Gibbs weight exp(-beta (H(sigma) - offset)).

    The integer energy offset keeps products such as mu * c representable
    at large beta; callers track the offset explicitly.
    """
    return math.exp(-beta * (model.energy(sigma) - offset))


def metropolis_rate(model: IsingModel, beta: float, sigma: int, zeta: int) -> float:
    """exp(-beta [H(zeta) - H(sigma)]_+) for single-flip pairs, else 0."""
    diff = sigma ^ zeta
    if diff == 0 or diff & (diff - 1):
        return 0.0
    dh = model.energy(zeta) - model.energy(sigma)
    return math.exp(-beta * dh) if dh > 0 else 1.0


# -- full enumeration ---------------------------------------------------


def _all_energies(model: IsingModel) -> np.ndarray:
    """Energies of every configuration, vectorized; needs K*L <= 24."""
    n = model.n_sites
    if n > FULL_ENUM_LIMIT:
        raise StateSpaceTooLarge(f"2^{n} configurations exceed the enumeration limit")
    K = model.K
    full = np.uint64(model.full)
    c = np.arange(1 << n, dtype=np.uint64)
    rr = ((c << np.uint64(K)) | (c >> np.uint64(n - K))) & full
    not_last = np.uint64(model._mask_not_last)
    last = np.uint64(model._mask_last_col)
    rc = (((c & not_last) << np.uint64(1)) | ((c & last) >> np.uint64(K - 1))) & full
    return (np.bitwise_count(c ^ rr) + np.bitwise_count(c ^ rc)).astype(np.int64)


def partition_function(model: IsingModel, beta: float) -> float:
    """Z_beta by full enumeration; tends to 2 as beta grows."""
    H = _all_energies(model)
    return float(np.exp(-beta * H).sum())


def partition_function_estimate(structure: "TypicalStructure", beta: float):
    """(Z_beta estimate, truncation bound) from the typical configurations.

    Configurations below the barrier all lie inside the enumerated set,
    so the sum misses only states at or above barrier energy; the bound
    2^(K L) exp(-Gamma beta) covers them and is far below rounding for
    the beta values of interest.
    """
    m = structure.model
    z = 2.0
    for cfg, h in structure.support_energy.items():
        if cfg != m.plus and cfg != m.minus:
            z += math.exp(-beta * h)
    bound = math.exp(m.n_sites * math.log(2.0) - beta * structure.gamma)
    return z, bound


# -- bottleneck search ---------------------------------------------------


def communication_height(
    model: IsingModel,
    sigma: int,
    zeta: int,
    energy_cap: int | None = None,
    budget: int = ENUM_BUDGET,
) -> int:
    """Min over flip paths of the max energy along the path, exactly.

    Best-first search on the bottleneck value; only configurations whose
    bottleneck does not exceed the returned value are ever expanded.  The
    default cap is the maximal energy along a canonical path between the
    ground states (a valid ceiling for the ground-state barrier), raised
    to the endpoint energies for other pairs.
    """
    h_sigma = model.energy(sigma)
    if sigma == zeta:
        return h_sigma
    if energy_cap is None:
        path_cap = max(model.energy(w) for w in canonical_path(model))
        energy_cap = max(path_cap, h_sigma, model.energy(zeta))
    if h_sigma > energy_cap or model.energy(zeta) > energy_cap:
        raise CapExceeded("endpoint energy already exceeds the cap")
    best = {sigma: h_sigma}
    heap = [(h_sigma, h_sigma, sigma)]
    visited = 0
    while heap:
        g, h_s, s = heapq.heappop(heap)
        if s == zeta:
            return g
        if g > best.get(s, g):
            continue
        visited += 1
        if visited > budget:
            raise FrontierExplosion(f"bottleneck search visited more than {budget} states")
        for site in range(model.n_sites):
            h_t = h_s + model.energy_delta(s, site)
            if h_t > energy_cap:
                continue
            t = s ^ (1 << site)
            g_t = g if g >= h_t else h_t
            if g_t < best.get(t, energy_cap + 1):
                best[t] = g_t
                heapq.heappush(heap, (g_t, h_t, t))
    raise CapExceeded(f"no path under energy cap {energy_cap}")


def energy_barrier(model: IsingModel, **kwargs) -> int:
    """Barrier between the all-plus and all-minus ground states."""
    return communication_height(model, model.plus, model.minus, **kwargs)


# -- canonical configurations and paths -----------------------------------


def canonical_configurations(model: IsingModel):
    """Bands R_v, band-plus-protuberance sets Q_v, and their union.

    Returns (R, Q, C) where R[v] for v in 0..L and Q[v] for v in 0..L-1
    are frozensets of configurations.
    """
    if model.K > model.L:
        raise DimensionOrder("canonical structures need K <= L")
    L, K = model.L, model.K
    R = {v: frozenset(model.band(ell, v) for ell in range(L)) for v in range(L + 1)}
    Q = {}
    for v in range(L):
        members = set()
        for ell in range(L):
            for k in range(K):
                for h in range(1, K):
                    members.add(model.protuberance(ell, v, k, h, up=True))
                    members.add(model.protuberance(ell, v, k, h, up=False))
        Q[v] = frozenset(members)
    C = frozenset().union(*R.values(), *Q.values())
    return R, Q, C


def canonical_path(model: IsingModel, ell0: int = 0, k0: int = 0, up: bool = True):
    """One canonical path from all-minus to all-plus (K L + 1 configs).

    Rows fill starting at ell0, each row site by site starting at k0.
    Every canonical path stays within the canonical configurations and
    tops out exactly at the barrier energy.
    """
    path = [model.minus]
    for v in range(model.L):
        base = ell0 if up else (ell0 - v) % model.L
        for h in range(1, model.K + 1):
            path.append(model.protuberance(base, v, k0, h, up=up))
    return path


def random_canonical_path(model: IsingModel, rng):
    """Canonical path from random increasing interval sequences.

    Rows join the plus band at either end in random order; each new row
    fills as an interval growing left or right from a random start.
    Every path produced this way stays in the canonical configurations
    and peaks exactly at the barrier energy.
    """
    K, L = model.K, model.L
    lo = int(rng.integers(L))
    v = 0
    path = [model.minus]
    for _ in range(L):
        grow_up = bool(rng.integers(2)) if v else True
        row = (lo + v) % L if grow_up else (lo - 1) % L
        band = model.band(lo, v)
        klo = int(rng.integers(K))
        for h in range(1, K + 1):
            if h > 1 and rng.integers(2):
                klo = (klo - 1) % K
            cfg = band
            for i in range(h):
                cfg |= 1 << (row * K + (klo + i) % K)
            path.append(cfg)
        if not grow_up:
            lo = (lo - 1) % L
        v += 1
    return path


# -- neighborhoods ---------------------------------------------------------


def _explore(model, seeds, level, forbidden, budget):
    """Configs reachable from seeds via paths of energy <= level; with energies."""
    out = {}
    stack = []
    for s in seeds:
        h = model.energy(s)
        if h <= level:
            out[s] = h
            stack.append((s, h))
    while stack:
        s, h_s = stack.pop()
        if len(out) > budget:
            raise FrontierExplosion(f"neighborhood enumeration exceeded {budget} configurations")
        for site in range(model.n_sites):
            h_t = h_s + model.energy_delta(s, site)
            if h_t > level:
                continue
            t = s ^ (1 << site)
            if t in out or t in forbidden:
                continue
            out[t] = h_t
            stack.append((t, h_t))
    return out


def neighborhood(model: IsingModel, sigma: int, level: int, forbidden=frozenset(), budget: int = ENUM_BUDGET):
    """Closure of sigma under flips staying at energy <= level.

    Avoids ``forbidden`` entirely; empty when sigma itself sits above the
    level.  Raising the level from Gamma - 1 to Gamma switches between
    the plain and the extended neighborhood.
    """
    if sigma in forbidden:
        raise ValueError("seed lies in the forbidden set")
    return set(_explore(model, [sigma], level, frozenset(forbidden), budget))


# -- typical structure ------------------------------------------------------


def bulk_constant(K: int, L: int) -> float:
    """Prefactor contribution of the bulk tube of canonical configurations."""
    if K < L:
        return (K + 2) * (L - 4) / (4 * K * L)
    return (K + 2) * (L - 4) / (8 * K * L)


@dataclass
class EdgeChain:
    """Uniform-measure chain on a saddle plateau around one ground state.

    Vertices are the plateau configurations of barrier energy plus one
    representative per low-energy class (the ground state's neighborhood
    collapses to the ground state; each band of the adjacent bulk row is
    its own class).  Rates count connecting flips, so the chain is
    reversible for the uniform measure.
    """

    sign: str
    process: MarkovProcess
    ground: int
    targets: tuple
    o_set: frozenset
    member_to_rep: dict = field(repr=False)
    h: dict = field(repr=False)
    cap: float = 0.0
    e_const: float = 0.0


class TypicalStructure:
    """Saddle-structure decomposition of the barrier-reachable configurations.

    Bulk part: bands and protuberances between heights 2 and L - 2.  Edge
    parts: everything barrier-reachable from a ground state without
    crossing the bulk plateau.  Constructing this requires 5 <= K < L.
    """

    def __init__(self, model: IsingModel, budget: int = ENUM_BUDGET):
        if not model.K < model.L:
            raise DimensionOrder("typical structure needs K < L")
        self.model = model
        self.budget = budget
        m = model
        K, L = m.K, m.L
        self.gamma = 2 * K + 2
        g = self.gamma

        self.R, self.Q, self.C = canonical_configurations(m)
        self.R2 = self.R[2]
        self.R_top = self.R[L - 2]
        self.B = frozenset().union(*(self.R[v] for v in range(2, L - 1)), *(self.Q[v] for v in range(2, L - 2)))
        self.B_gamma = frozenset().union(*(self.Q[v] for v in range(2, L - 2)))

        e_minus = _explore(m, [m.minus], g, self.B_gamma, budget)
        e_plus = _explore(m, [m.plus], g, self.B_gamma, budget)
        self.E_minus = frozenset(e_minus)
        self.E_plus = frozenset(e_plus)
        self.O_minus = frozenset(s for s, h in e_minus.items() if h == g)
        self.O_plus = frozenset(s for s, h in e_plus.items() if h == g)
        self.N_minus = frozenset(_explore(m, [m.minus], g - 1, frozenset(), budget))
        self.N_plus = frozenset(_explore(m, [m.plus], g - 1, frozenset(), budget))

        # energies for every typical configuration (support of the test objects)
        self.support_energy = dict(e_minus)
        self.support_energy.update(e_plus)
        for v in range(2, L - 1):
            for cfg in self.R[v]:
                self.support_energy.setdefault(cfg, m.energy(cfg))
        for v in range(2, L - 2):
            for cfg in self.Q[v]:
                self.support_energy.setdefault(cfg, m.energy(cfg))
        self.support = frozenset(self.support_energy)

        # band height and protuberance size lookups for the bulk formulas
        self.band_info = {}
        for v in range(2, L - 1):
            for ell in range(L):
                self.band_info[m.band(ell, v)] = v
        self.prot_info = {}
        for v in range(2, L - 2):
            for ell in range(L):
                for k in range(K):
                    for h in range(1, K):
                        self.prot_info[m.protuberance(ell, v, k, h, True)] = (v, h)
                        self.prot_info[m.protuberance(ell, v, k, h, False)] = (v, h)

        if m.assumptions_ok:
            self._assert_set_identities()

    def _assert_set_identities(self):
        if self.E_minus & self.E_plus:
            raise CapflowError("edge sets intersect; structure assumptions violated")
        if self.E_minus & self.B != self.R2:
            raise CapflowError("minus edge set meets the bulk off R_2")
        if self.E_plus & self.B != self.R_top:
            raise CapflowError("plus edge set meets the bulk off R_(L-2)")
        i_minus = frozenset(s for s in self.E_minus if self.support_energy[s] < self.gamma)
        if i_minus != self.N_minus | self.R2:
            raise CapflowError("low-energy part of the minus edge set is not N u R_2")

    # -- auxiliary chains and constants ----------------------------------

    def _build_edge_chain(self, sign: str) -> EdgeChain:
        m = self.model
        if sign == "-":
            ground, o_set, nbhd, targets = m.minus, self.O_minus, self.N_minus, sorted(self.R2)
        else:
            ground, o_set, nbhd, targets = m.plus, self.O_plus, self.N_plus, sorted(self.R_top)
        member_to_rep = {cfg: ground for cfg in nbhd}
        for rep in targets:
            member_to_rep[rep] = rep

        rates: dict = {}
        for s in o_set:
            for site in range(m.n_sites):
                t = s ^ (1 << site)
                if t in o_set:
                    if s < t:
                        rates[(s, t)] = 1.0
                        rates[(t, s)] = 1.0
                else:
                    rep = member_to_rep.get(t)
                    if rep is not None:
                        key = (s, rep)
                        rates[key] = rates.get(key, 0.0) + 1.0
                        rates[(rep, s)] = rates[key]
        vertices = sorted(o_set) + [ground] + targets
        proc = MarkovProcess(
            vertices,
            _rates_to_matrix(vertices, rates),
            invariant=np.full(len(vertices), 1.0 / len(vertices)),
        )
        h_vec = equilibrium_potential(proc, [ground], targets)
        cap = capacity(proc, [ground], targets).value
        h = {state: float(h_vec[i]) for i, state in enumerate(proc.states)}
        return EdgeChain(
            sign=sign,
            process=proc,
            ground=ground,
            targets=tuple(targets),
            o_set=o_set,
            member_to_rep=member_to_rep,
            h=h,
            cap=cap,
            e_const=1.0 / (len(vertices) * cap),
        )

    @cached_property
    def edge_chain_minus(self) -> EdgeChain:
        return self._build_edge_chain("-")

    @cached_property
    def edge_chain_plus(self) -> EdgeChain:
        return self._build_edge_chain("+")

    @property
    def b_const(self) -> float:
        return bulk_constant(self.model.K, self.model.L)

    @property
    def e_const(self) -> float:
        return self.edge_chain_minus.e_const

    @property
    def kappa(self) -> float:
        return self.b_const + 2.0 * self.e_const

    def verify(self) -> dict:
        """Full set-identity report, including the barrier-neighborhood equality."""
        m = self.model
        nhat_s = set(_explore(m, [m.minus, m.plus], self.gamma, frozenset(), self.budget))
        low = {s for s, h in self.support_energy.items() if h < self.gamma}
        bands = set().union(*(self.R[v] for v in range(2, m.L - 1)))
        classified = all(
            (s in bands) or (s in self.N_minus) or (s in self.N_plus) for s in low
        )
        e_by_L = self.e_const <= 1.0 / m.L + 1e-15
        return {
            "edge_sets_disjoint": not (self.E_minus & self.E_plus),
            "minus_edge_meets_bulk_at_R2": self.E_minus & self.B == self.R2,
            "plus_edge_meets_bulk_at_Rtop": self.E_plus & self.B == self.R_top,
            "support_is_barrier_neighborhood": self.support == frozenset(nhat_s),
            "low_energy_classified": classified,
            "edge_constants_match": abs(self.edge_chain_minus.e_const - self.edge_chain_plus.e_const)
            <= 1e-10 * self.e_const,
            "e_at_most_1_over_L": bool(e_by_L),
        }


def _rates_to_matrix(states, rates):
    import scipy.sparse as sp

    index = {s: i for i, s in enumerate(states)}
    rows = [index[a] for (a, b) in rates]
    cols = [index[b] for (a, b) in rates]
    vals = list(rates.values())
    return sp.coo_matrix((vals, (rows, cols)), shape=(len(states), len(states)))


def typical_structure(K: int, L: int, budget: int = ENUM_BUDGET) -> TypicalStructure:
    return TypicalStructure(IsingModel(K, L), budget=budget)


def edge_chain(structure: TypicalStructure, sign: str) -> EdgeChain:
    """Saddle-plateau chain around the minus ("-") or plus ("+") ground state."""
    if sign == "-":
        return structure.edge_chain_minus
    if sign == "+":
        return structure.edge_chain_plus
    raise ValueError(f"unknown sign {sign!r}")


# -- test function ----------------------------------------------------------


@dataclass
class SparseFunction:
    """State function stored on a finite support with a default value."""

    values: dict
    default: float = 1.0

    def __call__(self, cfg: int) -> float:
        return self.values.get(cfg, self.default)


def test_function_f0(structure: TypicalStructure) -> SparseFunction:
    """The two-sided interpolation function certifying the capacity upper bound.

    Equals 1 at the all-minus ground state and its plateau class, 0 at
    the all-plus side, interpolates linearly (bulk formula) along the
    canonical tube and follows the rescaled plateau-chain potential on
    the edge regions; 1 everywhere off the typical configurations.
    """
    b, e, kappa = structure.b_const, structure.e_const, structure.kappa
    K, L = structure.model.K, structure.model.L
    values = {}
    for v in range(2, L - 1):
        for cfg in structure.R[v]:
            values[cfg] = ((L - 2 - v) / (L - 4) * b + e) / kappa
    for cfg, (v, h) in structure.prot_info.items():
        values[cfg] = (((K + 2) * (L - 2 - v) - (h + 1)) * b / ((K + 2) * (L - 4)) + e) / kappa

    minus_chain = structure.edge_chain_minus
    for cfg in structure.E_minus:
        rep = minus_chain.member_to_rep.get(cfg, cfg)
        val = 1.0 - (e / kappa) * (1.0 - minus_chain.h[rep])
        if rep in structure.R2:
            # overlap with the bulk formula; keep the bulk value but check
            bulk = values[rep]
            if abs(bulk - val) > 1e-12:
                raise CapflowError("edge and bulk formulas disagree on R_2")
            continue
        values[cfg] = val
    plus_chain = structure.edge_chain_plus
    for cfg in structure.E_plus:
        rep = plus_chain.member_to_rep.get(cfg, cfg)
        val = (e / kappa) * (1.0 - plus_chain.h[rep])
        if rep in structure.R_top:
            bulk = values[rep]
            if abs(bulk - val) > 1e-12:
                raise CapflowError("edge and bulk formulas disagree on R_(L-2)")
            continue
        values[cfg] = val
    return SparseFunction(values=values, default=1.0)


def dirichlet_of_f0(structure: TypicalStructure, beta: float) -> dict:
    """Energy-shifted Dirichlet form of the test function.

    Returns the scaled value exp(Gamma beta) D_beta(f0) together with its
    barrier-edge component (beta-independent) and the boundary component.
    Only edges where f0 varies contribute, plus the boundary edges of the
    typical set, whose far endpoints sit above the barrier.
    """
    m = structure.model
    g = structure.gamma
    f0 = test_function_f0(structure)
    interior = 0.0
    gamma_edge_sum = 0.0  # (df)^2 over edges whose higher endpoint sits at the barrier
    boundary = 0.0
    for cfg, h_cfg in structure.support_energy.items():
        f_here = f0(cfg)
        for site in range(m.n_sites):
            other = cfg ^ (1 << site)
            h_other = structure.support_energy.get(other)
            if h_other is None:
                df = 1.0 - f_here
                if df != 0.0:
                    h_out = h_cfg + m.energy_delta(cfg, site)
                    boundary += math.exp(-beta * (h_out - g)) * df * df
            elif other > cfg:
                df = f0(other) - f_here
                if df != 0.0:
                    top = max(h_cfg, h_other)
                    interior += math.exp(beta * (g - top)) * df * df
                    if top == g:
                        gamma_edge_sum += df * df
    z, _ = partition_function_estimate(structure, beta)
    scaled = (interior + boundary) / z
    return {
        "beta": beta,
        "scaled_dirichlet": scaled,
        "gamma_edge_sum": gamma_edge_sum,
        "interior_term": interior,
        "boundary_term": boundary,
        "partition": z,
        "scaled_times_2kappa": 2.0 * structure.kappa * scaled,
    }


# -- test flow ----------------------------------------------------------


@dataclass
class SparseFlow:
    """Antisymmetric flow on configuration edges, stored sparsely.

    ``edges[(a, b)]`` with a < b holds the flux from a to b; reading the
    opposite orientation negates.
    """

    edges: dict

    def add(self, frm: int, to: int, value: float) -> None:
        if value == 0.0:
            return
        if frm < to:
            key, val = (frm, to), value
        else:
            key, val = (to, frm), -value
        self.edges[key] = self.edges.get(key, 0.0) + val

    def value(self, frm: int, to: int) -> float:
        if frm < to:
            return self.edges.get((frm, to), 0.0)
        return -self.edges.get((to, frm), 0.0)

    def divergence(self) -> dict:
        div: dict = {}
        for (a, b), v in self.edges.items():
            div[a] = div.get(a, 0.0) + v
            div[b] = div.get(b, 0.0) - v
        return div

    def sum_squares(self) -> float:
        return float(sum(v * v for v in self.edges.values()))


def _edge_side_flow(structure: TypicalStructure, chain: EdgeChain, psi: SparseFlow, orientation: float):
    """Plateau-side flux: scaled potential gradient, split over class members."""
    m = structure.model
    e = structure.e_const
    h = chain.h
    for s in chain.o_set:
        for site in range(m.n_sites):
            t = s ^ (1 << site)
            if t in chain.o_set:
                if s < t:
                    psi.add(s, t, orientation * e * (h[s] - h[t]))
            else:
                rep = chain.member_to_rep.get(t)
                if rep is not None:
                    psi.add(s, t, orientation * e * (h[s] - h[rep]))


def test_flow_psi0(structure: TypicalStructure) -> SparseFlow:
    """Unit-strength test flow from the all-minus to the all-plus side.

    On each saddle plateau the flow follows the plateau-chain potential
    gradient scaled by the edge constant, split equally over flips into a
    class; orientation on the plus side is mirrored so the net transport
    runs toward the all-plus state.  Across the bulk tube it is constant
    on each protuberance transition: double weight on the band-attaching
    and band-completing flips, single weight on the sideways growth, so
    every interior configuration balances exactly.  The flow does not
    depend on the temperature.
    """
    m = structure.model
    K, L = m.K, m.L
    psi = SparseFlow(edges={})
    _edge_side_flow(structure, structure.edge_chain_minus, psi, +1.0)
    _edge_side_flow(structure, structure.edge_chain_plus, psi, -1.0)

    unit = structure.b_const / ((K + 2) * (L - 4))
    for v in range(2, L - 2):
        for ell in range(L):
            for k in range(K):
                for up in (True, False):
                    base = m.band(ell, v)
                    first = m.protuberance(ell, v, k, 1, up)
                    psi.add(base, first, 2.0 * unit)
                    for h in range(1, K - 1):
                        cur = m.protuberance(ell, v, k, h, up)
                        psi.add(cur, m.protuberance(ell, v, k, h + 1, up), unit)
                        psi.add(cur, m.protuberance(ell, v, (k - 1) % K, h + 1, up), unit)
                    last = m.protuberance(ell, v, k, K - 1, up)
                    psi.add(last, m.protuberance(ell, v, k, K, up), 2.0 * unit)
    return psi


def flow_checks(structure: TypicalStructure, betas) -> dict:
    """Divergence and norm contract of the test flow, per temperature.

    The divergence must vanish off the two ground-state neighborhoods and
    sum to +1 over the all-minus one; the energy-shifted squared norm
    exp(-Gamma beta) |psi|^2 tends to twice the prefactor constant.
    """
    m = structure.model
    g = structure.gamma
    psi = test_flow_psi0(structure)
    div = psi.divergence()

    def max_abs_over(configs):
        return max((abs(div.get(c, 0.0)) for c in configs), default=0.0)

    interior_bulk = max_abs_over(structure.B - structure.E_minus - structure.E_plus)
    on_r2 = max_abs_over(structure.R2 | structure.R_top)
    on_o = max_abs_over(structure.O_minus | structure.O_plus)
    off_support = max((abs(v) for c, v in div.items() if c not in structure.support), default=0.0)
    sum_minus = sum(div.get(c, 0.0) for c in structure.N_minus)
    sum_plus = sum(div.get(c, 0.0) for c in structure.N_plus)

    norms = []
    for beta in betas:
        z, _ = partition_function_estimate(structure, beta)
        total = 0.0
        for (a, b), v in psi.edges.items():
            top = max(structure.support_energy[a], structure.support_energy[b])
            total += v * v * math.exp(beta * (top - g))
        scaled = z * total
        norms.append(
            {
                "beta": beta,
                "scaled_norm_sq": scaled,
                "scaled_over_2kappa": scaled / (2.0 * structure.kappa),
            }
        )
    return {
        "div_zero_bulk": interior_bulk,
        "div_zero_boundary_rows": on_r2,
        "div_zero_plateau": on_o,
        "div_zero_off_support": off_support,
        "div_sum_minus": sum_minus,
        "div_sum_plus": sum_plus,
        "sum_squares": psi.sum_squares(),
        "norms": norms,
    }


def rate_approximation_check(structure: TypicalStructure, betas) -> dict:
    """Deviation of the uniform plateau chain from the true Gibbs rates.

    For plateau pairs the Gibbs conductance mu_beta(s) c_beta(s, t) is
    compared against half the chain rate times exp(-Gamma beta); for
    pairs involving a representative class the conductance aggregates
    over the class members adjacent to the plateau state.  The maximal
    deviation is reported scaled by exp((Gamma + 2) beta), which must
    stay bounded along the temperature grid.
    """
    m = structure.model
    g = structure.gamma
    rows = []
    for beta in betas:
        z, _ = partition_function_estimate(structure, beta)
        base = math.exp(-beta * g)
        worst = 0.0
        for chain in (structure.edge_chain_minus, structure.edge_chain_plus):
            for s in chain.o_set:
                h_s = structure.support_energy[s]
                agg: dict = {}
                for site in range(m.n_sites):
                    t = s ^ (1 << site)
                    h_t = h_s + m.energy_delta(s, site)
                    if t in chain.o_set:
                        if s < t:
                            gibbs = math.exp(-beta * max(h_s, h_t)) / z
                            worst = max(worst, abs(0.5 * base - gibbs) * math.exp((g + 2) * beta))
                    else:
                        rep = chain.member_to_rep.get(t)
                        if rep is not None:
                            cur = agg.get(rep, (0.0, 0))
                            agg[rep] = (cur[0] + math.exp(-beta * max(h_s, h_t)) / z, cur[1] + 1)
                for rep, (gibbs, mult) in agg.items():
                    dev = abs(0.5 * base * mult - gibbs)
                    worst = max(worst, dev * math.exp((g + 2) * beta))
        rows.append({"beta": beta, "max_scaled_deviation": worst})
    return {"rows": rows}


# -- exact small lattices ----------------------------------------------------


def exact_chain(model: IsingModel, beta: float):
    """Full Metropolis chain on all configurations (K*L <= 24).

    Returns (process, energies); the invariant measure is the Gibbs
    measure, supplied in energy-shifted form rather than re-solved.
    """
    import scipy.sparse as sp

    n = model.n_sites
    H = _all_energies(model)
    size = 1 << n
    configs = np.arange(size, dtype=np.int64)
    rows = []
    cols = []
    vals = []
    for site in range(n):
        zeta = configs ^ (1 << site)
        dh = H[zeta] - H[configs]
        rows.append(configs)
        cols.append(zeta)
        vals.append(np.exp(-beta * np.maximum(dh, 0)))
    R = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(size, size)
    )
    weights = np.exp(-beta * (H - H.min()))
    proc = MarkovProcess(range(size), R, invariant=weights / weights.sum())
    return proc, H


def exact_small_lattice(K: int, L: int, beta: float, A=None, B=None):
    """Exact ground-state capacity on a tiny torus via the full chain."""
    model = IsingModel(K, L)
    proc, _ = exact_chain(model, beta)
    if A is None:
        A = [model.plus]
    if B is None:
        B = [model.minus]
    return capacity(proc, A, B)


# -- bridge census ------------------------------------------------------------


def bridge_census(model: IsingModel, sigma: int):
    """Monochromatic rows/columns and the per-line energy decomposition.

    Returns (plus_bridges, minus_bridges, row_energies, col_energies);
    the energies sum to the Hamiltonian and each non-bridge line carries
    at least 2, which yields the lower bound
    H >= 2 (K + L - plus_bridges - minus_bridges).
    """
    K, L = model.K, model.L
    col_diff = sigma ^ model._rot_col(sigma)
    row_diff = sigma ^ model._rot_row(sigma)
    b_plus = 0
    b_minus = 0
    row_energies = []
    for ell in range(L):
        mask = model.row_mask(ell)
        row_energies.append((col_diff & mask).bit_count())
        row_bits = (sigma & mask) >> (ell * K)
        if row_bits == (1 << K) - 1:
            b_plus += 1
        elif row_bits == 0:
            b_minus += 1
    col_energies = []
    for k in range(K):
        mask = model.col_mask(k)
        col_energies.append((row_diff & mask).bit_count())
        col_bits = sigma & mask
        if col_bits == mask:
            b_plus += 1
        elif col_bits == 0:
            b_minus += 1
    return b_plus, b_minus, row_energies, col_energies
