from __future__ import annotations

from typing import TYPE_CHECKING, Optional, Sequence

if TYPE_CHECKING:  # pragma: no cover
    from rpnmf.schemas import RunTrace


class RpnmfError(Exception):
    pass


class DimensionMismatchError(RpnmfError, ValueError):
    def __init__(self, operation: str, left: Sequence[int], right: Sequence[int]) -> None:
        self.left = tuple(left)
        self.right = tuple(right)
        super().__init__(f"{operation}: shapes {self.left} and {self.right} do not conform")


class ConfigurationError(RpnmfError, ValueError):
    pass


class InputDataError(RpnmfError, ValueError):
    pass


class MatrixMarketError(InputDataError):
    def __init__(self, message: str, line: Optional[int] = None) -> None:
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NonFiniteError(RpnmfError, ArithmeticError):
    def __init__(self, message: str, trace: "RunTrace") -> None:
        self.trace = trace
        super().__init__(message)
