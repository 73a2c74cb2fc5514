"""Exception types raised across the package."""


class GNNPlusError(Exception):
    """Base class for all package errors."""


class DimensionError(GNNPlusError, ValueError):
    pass


class ConfigError(GNNPlusError, ValueError):
    pass


class ParseError(GNNPlusError, ValueError):
    pass


class ValidationError(GNNPlusError, ValueError):
    pass


class SchemaError(GNNPlusError, ValueError):
    pass


class StateError(GNNPlusError, RuntimeError):
    pass


class DatasetError(GNNPlusError, ValueError):
    pass


class UndefinedMetricError(GNNPlusError, ValueError):
    pass


class SegmentIndexError(GNNPlusError, IndexError):
    pass
