"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class PrintIDSError(Exception):
    exit_code = 1


class PcapFormatError(PrintIDSError):
    """Malformed or truncated pcap data."""

    exit_code = 3


class UnsupportedFormatError(PrintIDSError):
    exit_code = 4


class SchemaError(PrintIDSError):
    """CSV header or feature schema does not match what was expected."""

    exit_code = 5


class CsvParseError(PrintIDSError):
    exit_code = 6


class TrainingError(PrintIDSError):
    exit_code = 7


class ContractError(PrintIDSError):
    """A caller broke an operation's precondition."""

    exit_code = 8


class ArgumentError(PrintIDSError, ValueError):
    exit_code = 9


class ModelFormatError(PrintIDSError):
    exit_code = 10
