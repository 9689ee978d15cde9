"""Exception types shared across the package."""


class ShapeError(ValueError):
    """An input tensor has the wrong rank, dims or channel count."""


class GenotypeError(ValueError):
    """A genotype violates the search-space constraints."""


class GenotypeParseError(ValueError):
    """Genotype text could not be parsed.

    ``position`` is a human-readable location (``line:col`` for syntax
    errors, a field path such as ``forward[2].op`` for semantic ones).
    """

    def __init__(self, message: str, position: str):
        super().__init__(f"{message} (at {position})")
        self.position = position


class StaleStateError(RuntimeError):
    """A simulation was started without resetting membrane/buffer state."""


class TrainingDiverged(RuntimeError):
    """The training loss became non-finite."""


class DataFormatError(ValueError):
    """A dataset file does not have the expected layout."""


class ConfigError(ValueError):
    """A run configuration is invalid."""
