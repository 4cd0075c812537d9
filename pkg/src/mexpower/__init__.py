"""Multi-target thermal power prediction for a Mars orbiter from raw telemetry."""

from .errors import ConfigError, InputError, MexPowerError, NumericError, SchemaError

__version__ = "0.1.0"

__all__ = ["ConfigError", "InputError", "MexPowerError", "NumericError", "SchemaError",
           "__version__"]
