"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid configuration: bad terrain spec, malformed run config, size mismatch."""


class ContractViolation(RuntimeError):
    """A runtime contract was broken (time regression, NaN state, schema mismatch)."""


class DegenerateDirectionError(ValueError):
    """Waypoint direction requested while standing on the waypoint itself."""
