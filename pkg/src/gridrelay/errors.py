"""Exception types shared across the navigation stack."""


class GridRelayError(Exception):
    """Base class for domain errors."""


class NoPathError(GridRelayError):
    """Planner could not connect start and goal through free space."""


class AgentEmbeddedError(GridRelayError):
    """Reachability query issued from a non-free agent cell."""


class OutOfBoundsError(GridRelayError):
    """World coordinate falls outside the grid extent."""


class UndefinedModularityError(GridRelayError):
    """Modularity requested on a graph with zero total edge weight."""


class GenerationFailedError(GridRelayError):
    """Scenario constraints cannot be satisfied (e.g. too many objects)."""


class InvalidPoseError(GridRelayError):
    """Sensor or actuator invoked from a pose inside an obstacle."""


class NoValidSubgoalError(GridRelayError):
    """Every candidate subgoal was rejected by the validation filter."""


class NoDemoError(GridRelayError):
    """Expert demonstration requested for an unreachable goal."""


class RecoveryExhaustedError(GridRelayError):
    """No admissible anchor remains for recovery replanning."""


class DegenerateEpisodeError(GridRelayError):
    """Episode with zero shortest-path length cannot enter the metrics."""
