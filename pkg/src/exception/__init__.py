import sys
import logging


def error_message_detail(error: Exception, error_detail: sys) -> str:
    """
    Extracts detailed error information including file name, line number, and the error message.

    :param error: The exception (or message) being reported.
    :param error_detail: The sys module to access traceback details.
    :return: A formatted error message string.
    """
    _, _, exc_tb = error_detail.exc_info()

    if exc_tb is not None:
        while exc_tb.tb_next is not None:
            exc_tb = exc_tb.tb_next
        file_name = exc_tb.tb_frame.f_code.co_filename
        line_number = exc_tb.tb_lineno
    else:
        # raised directly, not from an except block: report the raising frame
        frame = sys._getframe(1)
        while frame.f_back is not None and frame.f_code.co_filename == __file__:
            frame = frame.f_back
        file_name = frame.f_code.co_filename
        line_number = frame.f_lineno

    error_message = f"Error occurred in python script: [{file_name}] at line number [{line_number}]: {str(error)}"
    # logged at ERROR by whoever reports the failure
    logging.debug(error_message)
    return error_message


class MyException(Exception):
    """
    Base exception of the package. Carries the location of the failure and the
    process exit code the command line maps it to.
    """
    exit_code: int = 3

    def __init__(self, error_message, error_detail: sys = sys):
        super().__init__(error_message)
        self.reason = str(error_message)
        self.error_message = error_message_detail(error_message, error_detail)

    def __str__(self) -> str:
        return self.error_message


class InputError(MyException):
    """Bad or malformed user input (exit code 2)."""
    exit_code = 2


class ConfigError(InputError):
    pass


class CatalogueError(InputError):
    def __init__(self, error_message, error_detail: sys = sys, diagnostics: list = None):
        self.diagnostics = list(diagnostics or [])
        super().__init__(error_message, error_detail)


class SpectralCurveError(InputError):
    pass


class TimeTagFormatError(InputError):
    pass


class TableError(InputError):
    pass


class GeometryError(InputError):
    pass


class AnalysisError(MyException):
    """An internal invariant or physical precondition failed (exit code 3)."""
    exit_code = 3


class CausalMisalignmentError(AnalysisError):
    pass


class WindowExhaustedError(AnalysisError):
    pass


class NoCorrelationPeakError(AnalysisError):
    pass


class NoPhotonsInBandError(AnalysisError):
    pass


class SingularSystemError(AnalysisError):
    pass


class NegativeStellarRateError(AnalysisError):
    pass


class FullyPredictableCellError(AnalysisError):
    pass


class DegenerateMarginalsError(AnalysisError):
    pass


class EmptyCellError(AnalysisError):
    pass


class InconsistentTablesError(AnalysisError):
    pass
