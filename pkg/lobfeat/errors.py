"""
lobfeat - Error types
"""

from typing import Optional


class LobfeatError(Exception):
    """Base class for every error raised on purpose by lobfeat"""


class ParseError(LobfeatError):
    """A CSV row could not be parsed"""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class ValidationError(LobfeatError):
    """Input parsed fine but breaks a book or stream invariant"""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class ConfigError(LobfeatError):
    pass


class CriterionError(LobfeatError):
    """A selection criterion cannot be evaluated on the given candidate"""


class FormatError(LobfeatError):
    """A stored artifact (feature file, ranking, model) is unreadable"""
