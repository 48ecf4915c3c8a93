"""Exception hierarchy shared across the package."""


class EdgeRestoreError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(EdgeRestoreError, ValueError):
    pass


class CalibrationError(EdgeRestoreError, ValueError):
    pass


class GraphError(EdgeRestoreError, ValueError):
    """Invalid graph structure or an input that does not fit the graph."""


class ModelFormatError(EdgeRestoreError, ValueError):
    """Model is missing data needed for the requested execution mode."""


class StateError(EdgeRestoreError, RuntimeError):
    pass


class PlanError(EdgeRestoreError, ValueError):
    pass


class DataError(EdgeRestoreError, ValueError):
    pass
