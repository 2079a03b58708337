"""Potential theory of finite-state Markov processes.

Core layers: processes and their derived objects (:mod:`capflow.markov`),
equilibrium potentials and capacities (:mod:`capflow.potential`), the
discrete flow calculus (:mod:`capflow.flows`), variational principles for
the capacity (:mod:`capflow.variational`) and state collapsing
(:mod:`capflow.collapse`).  Model packs: the two-dimensional Ising model
under Metropolis dynamics (:mod:`capflow.ising`) and condensing zero-range
processes on a cycle (:mod:`capflow.zrp`), cross-checked by exact-clock
simulation (:mod:`capflow.montecarlo`).
"""

from .markov import (
    MarkovProcess,
    build_process,
    cycle_walk,
    invariant_measure,
    is_reversible,
    adjoint,
    symmetrize,
    embedded_chain,
    apply_generator,
    inner_product_mu,
    dirichlet_form,
)
from .potential import (
    CapacityReport,
    capacity,
    capacity_via_escape,
    equilibrium_potential,
    equilibrium_measure,
    mean_hitting_functional,
    mean_hitting_time,
)
from .flows import (
    Flow,
    divergence,
    divergence_set,
    flow_from_function,
    flow_inner,
    flow_norm_sq,
    unit_flow,
)

__version__ = "0.1.0"
