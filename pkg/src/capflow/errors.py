"""Exception hierarchy shared by all capflow modules."""


class CapflowError(Exception):
    """Base class for all capflow-specific errors."""


class NegativeRate(CapflowError):
    """A jump rate is negative."""


class NotIrreducible(CapflowError):
    """The positive-rate graph is not strongly connected."""


class SolveFailure(CapflowError):
    """A linear solve did not reach the required residual."""


class OverlappingSets(CapflowError):
    """Source and target sets intersect."""


class EmptySet(CapflowError):
    """A set argument that must be non-empty is empty."""


class ZeroCapacity(CapflowError):
    """A unit flow was requested between sets of zero capacity."""


class NotReversible(CapflowError):
    """Operation requires a reversible process."""


class InfeasibleFunction(CapflowError):
    """Test function violates its declared boundary class."""


class InfeasibleFlow(CapflowError):
    """Test flow violates its declared divergence class."""


class ZeroNormFlow(CapflowError):
    """Flow of zero norm passed where a positive norm is required."""


class EmptyCollapseSet(CapflowError):
    """Collapse set is empty."""


class FullCollapseSet(CapflowError):
    """Collapse set is the whole state space."""


class NonConstantOnCollapseSet(CapflowError):
    """Function to collapse is not constant on the collapsed set."""


class StateSpaceTooLarge(CapflowError):
    """Requested enumeration exceeds the configured budget."""


class CapExceeded(CapflowError):
    """Bottleneck search found no path under the supplied energy cap."""


class DimensionOrder(CapflowError):
    """Lattice dimensions violate the required ordering."""


class FrontierExplosion(CapflowError):
    """A neighborhood enumeration exceeded its configuration budget."""


class ValleysOverlap(CapflowError):
    """Metastable valleys are not disjoint for the chosen width."""


class AlphaOutOfRange(CapflowError):
    """Stickiness parameter outside the supported range."""


class BudgetExceeded(CapflowError):
    """Simulation exceeded its event budget."""


class SimulationBudgetExceeded(BudgetExceeded):
    """An experiment-level simulation budget was exhausted."""
