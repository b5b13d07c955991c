"""Exception hierarchy shared across the workbench."""


class GridcastError(Exception):
    """Base class for all workbench errors."""


class PanelError(GridcastError, ValueError):
    """Invalid panel construction, split arithmetic or scaling request."""


class IngestError(GridcastError, ValueError):
    """Malformed price CSV or unrepairable gaps."""


class SynthError(GridcastError, ValueError):
    """Invalid synthetic series specification."""


class StatsError(GridcastError, ValueError):
    pass


class MetricsError(GridcastError, ValueError):
    pass


class ShapeError(GridcastError, ValueError):
    """Operand shapes do not conform for a tensor primitive."""


class TapeError(GridcastError, RuntimeError):
    pass


class ModelError(GridcastError, ValueError):
    """Model contract violation (shape mismatch, bad order, warm-start misuse)."""


class TrainingError(GridcastError, RuntimeError):
    pass


class ProtocolError(GridcastError, RuntimeError):
    """External forecaster violated the line protocol."""


class ExternalTimeout(ProtocolError):
    pass


class ConfigError(GridcastError, ValueError):
    pass
