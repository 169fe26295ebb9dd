"""Exception hierarchy shared by the library and the CLI."""


class UnmixError(Exception):
    """Base class for every error raised by sparseunmix."""


class ValidationError(UnmixError, ValueError):
    """Input failed a structural or domain check."""


class ParseError(ValidationError):
    """A data file could not be parsed.

    ``line`` is the 1-based line number in the offending file, when known.
    """

    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)


class RangeError(ValidationError):
    """A query point lies outside the sampled domain."""


class IllPosedError(UnmixError):
    """Least squares has no unique solution (more spectra than bands, or singular Gram)."""


class EnsembleError(UnmixError):
    """Every member fit of a model-averaging ensemble failed."""
