"""Exception types shared across the package."""

from __future__ import annotations


class DomainError(ValueError):
    """A parameter lies outside the domain where a formula or object is defined.

    ``field`` names the offending parameter when there is a single culprit;
    the config loader uses it to point at the right line.
    """

    def __init__(self, message: str, field: str | None = None) -> None:
        super().__init__(message)
        self.field = field


class InsufficientDataError(RuntimeError):
    """A conditional statistic has no samples to condition on."""

    def __init__(self, message: str, setting: tuple[int, int] | None = None) -> None:
        super().__init__(message)
        self.setting = setting


class RestartRequired(RuntimeError):
    """Alice ended the key phase knowing nothing; the run has to be repeated."""


class ConfigError(ValueError):
    """Invalid experiment configuration, optionally tied to a line of the file."""

    def __init__(self, message: str, line: int | None = None, path: str | None = None) -> None:
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)
