"""Exception types shared across the toolkit."""


class TgsimError(Exception):
    """Base class for all toolkit errors."""


class DimensionError(TgsimError):
    """Operand shapes do not conform for the requested operation."""


class ContractError(TgsimError):
    """A caller violated an operation's precondition."""


class ParseError(TgsimError):
    """A dataset file is malformed; the message names the offending location."""


class AdapterError(TgsimError):
    """A raw dataset file does not match any known published schema."""


class ConfigError(TgsimError):
    """A model or run configuration is internally inconsistent."""


class TrainingError(TgsimError):
    """Training diverged or could not proceed."""
