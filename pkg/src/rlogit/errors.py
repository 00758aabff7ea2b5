"""Exception types shared across the package.

Numerical failure modes that callers are expected to handle (diverging value
iteration, singular linear systems, infeasible programs) are reported through
status fields on result objects, not exceptions.  Exceptions are reserved for
invalid inputs and broken preconditions.
"""


class RLogitError(Exception):
    """Base class for all package errors."""


# --- network construction -------------------------------------------------

class DuplicateArc(RLogitError):
    """Two arcs share the same (from, to) pair."""


class DanglingEndpoint(RLogitError):
    """An arc references a state id that is not in the state set."""


class DestinationHasSuccessors(RLogitError):
    """The destination must be absorbing (no outgoing arcs)."""


class UnknownState(RLogitError):
    """A state id is not part of the network."""


class UnknownArc(RLogitError):
    """An arc (from, to) is not part of the network."""


class InvalidPenalty(RLogitError):
    """Connectivity-repair penalty must be strictly positive."""


class DisconnectedInstance(RLogitError):
    """A generated instance has no origin-to-destination path; regenerate."""


class InvalidBounds(RLogitError):
    """Composite-choice bounds must satisfy 0 <= L <= U <= m."""


# --- value solving / likelihood ------------------------------------------

class EmptySuccessorSet(RLogitError):
    """A non-destination state has no successors; Bellman value undefined."""


class UnsolvedValueField(RLogitError):
    """Operation requires a value field with status Solved."""


class InvalidPath(RLogitError):
    """A path breaks adjacency or does not end at the destination."""


class StepCapExceeded(RLogitError):
    """Sampled walk exceeded the cycle-safety step cap; caller resamples."""


class ValueSolveFailed(RLogitError):
    """Value function could not be solved for a destination group."""

    def __init__(self, group, message=""):
        self.group = group
        super().__init__(message or f"value solve failed for group {group!r}")


# --- conic build / solve --------------------------------------------------

class UnreachableStateWithoutFix(RLogitError):
    """A state is unreachable from every observed origin (connectivity
    assumption violated); add artificial arcs before building the program."""


class BindingViolation(RLogitError):
    """A Bellman epigraph inequality has slack at a reported optimum."""

    def __init__(self, state, residual):
        self.state = state
        self.residual = residual
        super().__init__(f"Bellman inequality slack {residual:.3e} at state {state!r}")


class NotSuperSolution(RLogitError):
    """Monotone tightening requires V >= T[V] componentwise."""


class UnsupportedHeterogeneousScale(RLogitError):
    """The conic build only supports a uniform unit scale; heterogeneous
    scales make the joint problem non-convex."""


# --- trimming -------------------------------------------------------------

class NoFeasibleReference(RLogitError):
    """No reference parameter on the grid yields a solvable value system."""


class SingularFlowSystem(RLogitError):
    """The flow linear system is singular; flows undefined."""


class OriginTrimmed(RLogitError):
    """Trim threshold removed the origin's whole downstream neighbourhood."""
