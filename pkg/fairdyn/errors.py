"""
Exception types raised by fairdyn.

The command line maps these onto exit codes, see cli.EXIT_CODES.
"""


class FairDynError(Exception):
    """ Base class for all fairdyn errors. """

    def details(self) -> dict:
        """ Extra machine readable fields for the error report. """
        return {}


class DomainError(FairDynError, ValueError):
    """ An argument lies outside the domain of the operation. """
    pass


class ParameterBoundError(DomainError):
    """ Fair policy offsets (k1, k2) make a Beta shape non-positive for some group. """
    pass


class ShapeMismatchError(DomainError):
    """ A joint fair policy was applied to groups that do not share c. """
    pass


class GroupCountError(DomainError):
    pass


class DegenerateSelectionError(FairDynError, ArithmeticError):
    """ Mean of the selected population requested while nobody is selected. """
    pass


class DegenerateHistogramError(FairDynError, ValueError):
    """ No Beta distribution matches the histogram moments. """
    pass


class ConvergenceError(FairDynError, ArithmeticError):

    def __init__(self, message: str, iterations: int = None, residual: float = None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual

    def details(self) -> dict:
        result = {}
        if self.iterations is not None:
            result["iterations"] = self.iterations
        if self.residual is not None:
            result["residual"] = self.residual
        return result


class NoSolutionError(FairDynError, ArithmeticError):
    """ Equalized odds has only the trivial solutions s in {0, 1} for these groups. """
    pass


class ScoreTableError(FairDynError, ValueError):
    """
    Problem with an input score table.
    row is the 1-based line number in the source file (header is line 1).
    """

    def __init__(self, message: str, row: int = None, column: str = None):
        location = []
        if row is not None:
            location.append(f"row {row}")
        if column is not None:
            location.append(f"column '{column}'")
        if location:
            message = f"{message} ({', '.join(location)})"
        super().__init__(message)
        self.row = row
        self.column = column

    def details(self) -> dict:
        return {k: v for k, v in [("row", self.row), ("column", self.column)] if v is not None}


class ConfigError(FairDynError, ValueError):
    """ Invalid scenario configuration, field is the dotted path of the offending value. """

    def __init__(self, message: str, field: str = None):
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)
        self.field = field

    def details(self) -> dict:
        return {} if self.field is None else {"field": self.field}
