"""Exact-clock simulation of finite-state continuous-time chains.

Reproducibility is part of the interface.  All randomness comes from the
Philox4x64-10 counter-based generator (numpy's ``Philox`` bit generator)
keyed by the user seed; replication ``i`` uses the counter block
``i * 2**128``, so streams are disjoint and order-independent.  Uniform
doubles are the standard 53-bit conversion; exponential holding times use
the inverse transform -log(1 - u) / lambda; jumps use the inverse
transform over cumulative jump probabilities taken in state-index order.
Given the seed, trajectories are bit-exact across platforms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BudgetExceeded
from .markov import MarkovProcess

__all__ = [
    "CEMETERY",
    "SimulationConfig",
    "Trajectory",
    "stream",
    "simulate",
    "estimate_hitting_time",
    "project_trajectory",
    "trajectory_to_csv",
]

#: Label used for unmapped states in the marked projection variant.
CEMETERY = "cemetery"


@dataclass(frozen=True)
class SimulationConfig:
    """Budgeted, reproducible run description.

    Exactly one stop condition applies: a hitting set, a time horizon or
    the raw event budget.  ``max_events`` always caps the run; exceeding
    it when a hitting set is pending raises BudgetExceeded.
    """

    seed: int
    max_events: int = 10_000_000
    hit: frozenset | None = None
    t_max: float | None = None

    def __post_init__(self):
        if self.max_events <= 0:
            raise ValueError("event budget must be positive")


@dataclass
class Trajectory:
    """Piecewise-constant path: states[i] held for holds[i].

    When the run stopped on a hitting set, the final state is the hit
    state and its recorded holding time is zero.
    """

    states: list
    holds: np.ndarray
    hit: bool = False

    def pairs(self):
        return list(zip(self.states, self.holds))

    @property
    def total_time(self) -> float:
        return float(self.holds.sum())


def stream(seed: int, replication: int = 0) -> np.random.Generator:
    """Generator for one replication: Philox keyed by seed, counter-offset."""
    bg = np.random.Philox(key=seed, counter=replication << 128)
    return np.random.Generator(bg)


def _jump_tables(P: MarkovProcess):
    """Per-state successor indices (ascending) and cumulative probabilities."""
    R = P.rates
    succs, cums = [], []
    for i in range(P.n):
        lo, hi = R.indptr[i], R.indptr[i + 1]
        idx = R.indices[lo:hi]
        order = np.argsort(idx, kind="stable")
        idx = idx[order]
        w = R.data[lo:hi][order]
        cum = np.cumsum(w)
        cum /= cum[-1]
        succs.append(idx)
        cums.append(cum)
    return succs, cums


def simulate(P: MarkovProcess, start, config: SimulationConfig) -> Trajectory:
    """Run one trajectory from ``start`` under ``config``.

    Holding times are exponential with the state's holding rate; the next
    state is chosen with probability r(x, y) / lambda(x).
    """
    succs, cums = _jump_tables(P)
    return _simulate_prepared(P, P.index[start], config, stream(config.seed), succs, cums)


def _simulate_prepared(P, i, config, rng, succs, cums) -> Trajectory:
    holding = P.holding
    hit_idx = None
    if config.hit is not None:
        hit_idx = {P.index[s] for s in config.hit}
        if i in hit_idx:
            return Trajectory([P.states[i]], np.zeros(1), hit=True)
    states = [P.states[i]]
    holds = []
    elapsed = 0.0
    for _ in range(config.max_events):
        u = rng.random()
        dt = -math.log1p(-u) / holding[i]
        if config.t_max is not None and elapsed + dt >= config.t_max:
            holds.append(config.t_max - elapsed)
            return Trajectory(states, np.array(holds))
        holds.append(dt)
        elapsed += dt
        v = rng.random()
        cum = cums[i]
        i = int(succs[i][min(np.searchsorted(cum, v, side="right"), len(cum) - 1)])
        states.append(P.states[i])
        if hit_idx is not None and i in hit_idx:
            holds.append(0.0)
            return Trajectory(states, np.array(holds), hit=True)
    if hit_idx is not None or config.t_max is not None:
        raise BudgetExceeded(f"no stop within {config.max_events} events")
    holds.append(0.0)
    return Trajectory(states, np.array(holds))


def estimate_hitting_time(
    P: MarkovProcess, start_measure, B, replications: int, seed: int, max_events: int = 10_000_000
):
    """(mean, stderr) of tau_B over independent replications.

    The start is drawn from ``start_measure`` (a state-indexed
    probability vector) with the replication's own stream; replications
    starting inside B contribute zero.  Mean and variance accumulate via
    Welford updates, so partial aggregation is order-independent.
    """
    start_measure = np.asarray(start_measure, dtype=np.float64)
    cum_start = np.cumsum(start_measure / start_measure.sum())
    b_idx = frozenset(P.index[s] for s in B)
    succs, cums = _jump_tables(P)
    holding = P.holding
    mean = 0.0
    m2 = 0.0
    for rep in range(replications):
        rng = stream(seed, rep)
        i = int(np.searchsorted(cum_start, rng.random(), side="right"))
        t = 0.0
        events = 0
        while i not in b_idx:
            if events >= max_events:
                raise BudgetExceeded(f"replication {rep} exceeded {max_events} events")
            u = rng.random()
            t += -math.log1p(-u) / holding[i]
            v = rng.random()
            cum = cums[i]
            i = int(succs[i][min(np.searchsorted(cum, v, side="right"), len(cum) - 1)])
            events += 1
        delta = t - mean
        mean += delta / (rep + 1)
        m2 += delta * (t - mean)
    stderr = math.sqrt(m2 / (replications - 1) / replications) if replications > 1 else float("nan")
    return mean, stderr


def project_trajectory(path, valley_map, time_scale: float = 1.0, variant: str = "trace"):
    """Valley-label projection of a piecewise-constant path.

    ``path`` is a Trajectory or a sequence of (state, duration) pairs;
    ``valley_map`` maps states to labels and may be partial.  The trace
    variant excises time spent on unmapped states; the marked variant
    keeps it under the CEMETERY label.  Durations are divided by
    ``time_scale``.  Consecutive equal labels merge, so projecting an
    already-projected path (with the identity map) is the identity.
    """
    if isinstance(path, Trajectory):
        path = path.pairs()
    if variant not in ("trace", "marked"):
        raise ValueError(f"unknown variant {variant!r}")
    out = []
    for state, dur in path:
        if state in valley_map:
            label = valley_map[state]
        elif variant == "trace":
            continue
        else:
            label = CEMETERY
        dur = dur / time_scale
        if out and out[-1][0] == label:
            out[-1][1] += dur
        else:
            out.append([label, dur])
    return [(label, dur) for label, dur in out]


def trajectory_to_csv(traj: Trajectory, fh) -> None:
    """Stream a trajectory as ``t,state`` rows (entry times, full precision)."""
    fh.write("t,state\n")
    t = 0.0
    for state, hold in traj.pairs():
        fh.write(f"{t!r},{state}\n")
        t += hold
