"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: configuration problems exit with 2,
data problems with 3, numeric failures with 4, anything else with 1.
"""


class TaenError(Exception):
    exit_code = 1


class ConfigError(TaenError):
    """Bad configuration: invalid values, unknown keys, inconsistent flags."""

    exit_code = 2


class DataError(TaenError):
    """Bad input data: missing/corrupt files, inconsistent manifests."""

    exit_code = 3


class NumericError(TaenError):
    """Numeric failure: non-finite values where finite ones are required."""

    exit_code = 4
