"""Exception hierarchy; each class maps to one CLI exit code."""


class QkswapError(Exception):
    exit_code = 1


class ConfigError(QkswapError):
    """Invalid or inconsistent run configuration."""

    exit_code = 2


class DataError(QkswapError):
    """Unreadable audio, malformed manifest, or unusable dataset."""

    exit_code = 3


class InvariantViolation(QkswapError):
    """An internal contract was broken (leakage, kernel-swap digests, PSD)."""

    exit_code = 4
