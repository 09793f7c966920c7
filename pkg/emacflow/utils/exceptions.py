"""
Custom exceptions for the emacflow solver
"""
from typing import Optional


class EmacflowException(Exception):
    """Base exception class"""
    def __init__(self, detail: str):
        self.detail = detail
        super().__init__(self.detail)


class ParameterException(EmacflowException):
    """Raised when a numeric parameter is out of range"""
    pass


class MeshValidationException(ParameterException):
    """Raised when a mesh violates one of its invariants"""
    pass


class UndefinedRateException(ParameterException):
    """Raised when a convergence rate cannot be formed"""
    pass


class ParseException(EmacflowException):
    """Raised when an input file cannot be parsed"""
    def __init__(self, detail: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            detail = f"line {line}: {detail}"
        super().__init__(detail)


class ConfigException(EmacflowException):
    """Raised when a run configuration fails schema validation"""
    pass


class ConfigurationException(EmacflowException):
    """Raised when a problem setup is inconsistent with its mesh"""
    pass


class ConstraintConflictException(ConfigurationException):
    """Raised when two boundary markers prescribe different values at one DOF"""
    pass


class EvaluationException(EmacflowException):
    """Raised when a user function returns non-finite values"""
    pass


class LocationException(EmacflowException):
    """Raised when a point lies outside the mesh"""
    pass


class UsageException(EmacflowException):
    """Raised when an operation is called with insufficient data"""
    pass


class SolverException(EmacflowException):
    """Raised when a linear solve breaks down"""
    pass


class ConvergenceException(SolverException):
    """Raised when Newton's method does not converge"""
    def __init__(self, detail: str, residual: float, iterations: int):
        self.residual = residual
        self.iterations = iterations
        super().__init__(detail)
