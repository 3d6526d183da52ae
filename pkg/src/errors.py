EXIT_OK = 0
EXIT_DATA = 1
EXIT_IO = 2
EXIT_USAGE = 3


class PinError(Exception):
    exit_code = EXIT_DATA

    def __init__(self, message, code=None):
        super().__init__(message)
        self.code = code


class DataError(PinError):
    exit_code = EXIT_DATA


class PaginationError(DataError):
    pass


class AssemblyError(DataError):
    pass


class ConversionError(DataError):
    pass


class FetchError(DataError):
    pass


class EnvironmentIOError(PinError):
    exit_code = EXIT_IO


class ConfigError(PinError):
    exit_code = EXIT_USAGE


class UsageError(PinError):
    exit_code = EXIT_USAGE
