class SonarContextError(Exception):
    """Base class for all library errors."""

    kind = "error"


class ParameterError(SonarContextError, ValueError):
    kind = "parameter"


class OutOfViewError(SonarContextError, ValueError):
    kind = "out_of_view"


class FormatError(SonarContextError, ValueError):
    kind = "format"


class DegenerateHistogramError(SonarContextError, ValueError):
    kind = "degenerate_histogram"


class DegenerateDatasetError(SonarContextError, ValueError):
    kind = "degenerate_dataset"


class GraphError(SonarContextError, ValueError):
    kind = "graph"


class ConfigError(SonarContextError, ValueError):
    kind = "config"
