from typing import Any, Dict, Optional


class DirealError(Exception): ...


class ShapeError(DirealError, ValueError): ...


class UsageError(DirealError): ...


class ConfigurationError(DirealError, ValueError):
    def __init__(self, message: str, *, key: Optional[str] = None, line: Optional[int] = None):
        self.key = key
        self.line = line
        prefix = ""
        if line is not None:
            prefix += f"line {line}: "
        if key is not None:
            prefix += f"`{key}`: "
        super().__init__(f"{prefix}{message}")


class FormatError(DirealError):
    def __init__(self, message: str, *, offset: int):
        self.offset = offset
        super().__init__(f"{message} (at byte offset {offset})")


class NonFiniteLossError(DirealError):
    def __init__(self, message: str, *, state: Dict[str, Any]):
        self.state = state
        super().__init__(message)
