"""
Error types shared by every curvlab module.

All failures raised on purpose by the library are instances of
:class:`WorkbenchError`. The :attr:`WorkbenchError.code` attribute tells
the category apart without parsing the message.
"""

from enum import Enum

__all__ = ['WorkbenchErrorCode', 'WorkbenchError', 'ParseError']


class WorkbenchErrorCode(Enum):
    """Category of a :class:`WorkbenchError`."""
    ParseError = 1
    UnknownIdentifier = 2
    DomainError = 3
    InvalidInput = 4
    SingularSet = 5
    NotInvariant = 6
    ConfigError = 7
    UnknownName = 8
    NoLimit = 9
    OutputError = 10

    def __str__(self) -> str:
        """Return the name of the enum."""
        return self.name


class WorkbenchError(Exception):
    """An error raised by the workbench."""
    def __init__(self, code: WorkbenchErrorCode, msg: str):
        super().__init__(msg)
        self._code = code

    @property
    def code(self) -> WorkbenchErrorCode:
        """Return the error code."""
        return self._code

    def with_context(self, context: str) -> 'WorkbenchError':
        """
        A copy of the error whose message ends with ``context``.

        The copy keeps the subclass and its attributes, so a
        :class:`ParseError` still carries its ``offset``, ``expected`` and
        ``line``.
        """
        err = Exception.__new__(type(self))
        err.__dict__.update(self.__dict__)
        err.args = (f'{self}{context}',)
        return err


class ParseError(WorkbenchError):
    """
    Syntax error in an expression or a configuration source.

    ``offset`` is the byte offset of the failure (expressions) or the column
    (config files, where ``line`` is also set). ``expected`` is the sorted
    tuple of tokens that would have been accepted there.
    """
    def __init__(
            self,
            msg: str,
            offset: int,
            expected=(),
            line: int = None,
            code: WorkbenchErrorCode = WorkbenchErrorCode.ParseError):
        super().__init__(code, msg)
        self.offset = offset
        self.expected = tuple(sorted(expected))
        self.line = line
