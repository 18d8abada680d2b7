"""Exception hierarchy for the tvflow package."""


class TVFlowError(Exception):
    """Base class for all tvflow errors."""


class OutOfDomain(TVFlowError):
    """Abscissa outside the profile domain."""


class EmptyDomain(TVFlowError):
    """Scenario domain is empty or inverted."""


class SchemaError(TVFlowError):
    """Scenario document does not match the expected schema."""


class ContinuityViolation(TVFlowError):
    """Adjacent pieces disagree at a shared breakpoint."""


class DegreeOverflow(TVFlowError):
    """Polynomial degree above the configured maximum, or root isolation failed."""


class NotJRegular(TVFlowError):
    """Profile has too many monotone arcs (fast-oscillation guard)."""


class LevelOutOfRange(TVFlowError):
    """Requested level is not attained on the given arc or flank."""


class DegenerateFacet(TVFlowError):
    """Operation undefined on a zero-width essential facet."""


class NoArcs(TVFlowError):
    """Flux construction needs at least one monotone arc."""


class NoEssentialFacets(TVFlowError):
    """Event detection requires at least one essential facet."""


class EventSkipped(TVFlowError):
    """An event lies strictly inside the requested advance interval."""


class NotConverged(TVFlowError):
    """Iterative scheme failed to reach its tolerance."""


class InvariantViolation(TVFlowError):
    """Internal consistency check failed (reported as exit code 3 by the CLI)."""
