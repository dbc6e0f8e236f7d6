"""
Exception hierarchy for the patient-aware HetNet allocator
Library modules raise these; main.py maps them to exit codes
"""


class HetNetError(Exception):
    """Base class for every error raised by this package"""
    pass


class DomainError(HetNetError, ValueError):
    """A numeric or categorical input is outside its domain"""
    pass


class ConfigError(HetNetError, ValueError):
    """Scenario or experiment configuration is invalid"""
    pass


class RecordFormatError(HetNetError, ValueError):
    """A medical record file cannot be parsed"""
    pass


class DegenerateTrainingDataError(HetNetError):
    """The classifier cannot produce a posterior from its training data"""
    pass


class ContractViolationError(HetNetError):
    """An operation was called with its precondition broken"""
    pass


class InfeasibleProblemError(HetNetError):
    """No assignment satisfies the allocation constraints"""
    pass


class SearchSpaceTooLargeError(HetNetError):
    """Exhaustive enumeration would exceed its guard"""
    pass


class SolverError(HetNetError):
    """Objective evaluation or an external solver failed"""
    pass


class ExperimentError(HetNetError):
    """A Monte Carlo cell failed; carries the cell identity"""

    def __init__(self, message: str, cell: dict):
        super().__init__(f"{message} (cell: {cell})")
        self.cell = cell
