"""Exception hierarchy shared by the engine and the command line front end.

Every error carries the process exit code the CLI reports for it.
"""


class DworkError(Exception):
    """Base class for all engine errors"""
    exit_code = 2


class UsageError(DworkError):
    """Malformed input: mismatched orders or sizes, bad flags"""
    exit_code = 2


class ValidationError(UsageError):
    """Invalid family data (n, d, W)"""


class DomainError(UsageError):
    """Input outside the domain of an operation"""


class NonUnitError(DomainError):
    """Inversion of a series with vanishing constant term"""


class OracleResourceError(DworkError):
    """The Griffiths oracle exceeded a configured cap"""
    exit_code = 3


class CyclicBasisFails(DworkError):
    """The Wronskian is singular at 0, so its derivatives do not form a basis there"""
    exit_code = 4

    def __init__(self, message, wronskian=None):
        super().__init__(message)
        self.wronskian = wronskian


class DegenerateParameterError(DworkError):
    """A lower hypergeometric parameter is a nonpositive integer"""
    exit_code = 4


class UnsupportedMonodromy(DworkError):
    """Canonical correction cannot produce an invertible A(0) with nilpotent residue"""
    exit_code = 4
