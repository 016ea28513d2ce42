"""Exception types shared across the package."""


class InvalidParameter(ValueError):
    """An argument is outside its documented range."""


class WorldFileError(ValueError):
    """A world or mission document failed validation."""


class NoFix(RuntimeError):
    """A GPS operation was attempted without a position fix."""


class InvalidEndpoint(ValueError):
    """A planning endpoint is outside the grid or occupied."""


class NoPath(RuntimeError):
    """No traversable path exists between the requested cells."""


class ArmRefused(RuntimeError):
    """Arming rejected; carries the list of failing pre-arm checks."""

    def __init__(self, failures):
        self.failures = list(failures)
        super().__init__("arm refused: " + ", ".join(self.failures))


class InvalidTransition(RuntimeError):
    """A mission state change outside the allowed graph was attempted."""


class MissionError(RuntimeError):
    """Mission upload or execution request rejected."""


class RecordRejected(ValueError):
    """A geotag record cannot be exported (no position fix)."""


class UndefinedMetric(ArithmeticError):
    """A metric has no defined value for the given inputs."""


class AnnotationFormatError(ValueError):
    """An annotation or prediction file line could not be parsed."""

    def __init__(self, path, line_no, message):
        self.path = str(path)
        self.line_no = line_no
        super().__init__(f"{path}:{line_no}: {message}")
