class RejectedInputError(ValueError):
    """An operation was called with arguments it cannot accept."""


class DatasetError(RejectedInputError):
    """A manifest or a referenced feature file violates the dataset layout."""


class ConfigError(RejectedInputError):
    """A configuration document failed linting."""


class CorruptFileError(RuntimeError):
    """A feature container could not be decoded."""


class UndefinedMetricError(ValueError):
    """A metric is undefined for the given input, e.g. AUC over a single class."""
