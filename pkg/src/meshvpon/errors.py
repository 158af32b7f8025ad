"""Exception hierarchy for meshvpon."""


class MeshVponError(Exception):
    """Base class for all simulator errors."""


class SchedulingError(MeshVponError):
    """An event was scheduled in the past or the clock was asked to run backwards."""


class SlotStateError(MeshVponError):
    """A NR slot was queried before finalization or its PRB grid is inconsistent."""


class RateModelError(MeshVponError):
    """A rate calculator was called outside its domain."""


class TopologyError(MeshVponError):
    """Invalid MESH-PON topology or slice operation."""


class TimestampOrderError(MeshVponError):
    """Per-packet stage timestamps are out of order."""


class MetricsError(MeshVponError):
    """Duplicate sample, empty series or failed export."""


class ScenarioError(MeshVponError):
    """Scenario file could not be parsed or validated."""
