"""Exception hierarchy; the CLI maps each category to an exit status."""


class MexPowerError(Exception):
    category = "numeric"
    exit_code = 5


class ConfigError(MexPowerError, ValueError):
    category = "config"
    exit_code = 2


class InputError(MexPowerError, OSError):
    category = "io"
    exit_code = 3


class SchemaError(MexPowerError, ValueError):
    category = "schema"
    exit_code = 4


class NumericError(MexPowerError, ValueError):
    category = "numeric"
    exit_code = 5
