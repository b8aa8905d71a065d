"""Exception hierarchy shared by every stage of the pipeline."""


class NeuralImplicitError(Exception):
    """Base class; the CLI maps subclasses onto exit codes."""

    exit_code = 3


class InputError(NeuralImplicitError):
    exit_code = 2


class UnreadableFile(InputError):
    pass


class MalformedRecord(InputError):
    def __init__(self, message: str, location=None):
        self.location = location
        if location is not None:
            message = f"{message} (at {location})"
        super().__init__(message)


class EmptyMesh(InputError):
    pass


class EmptyCorpus(InputError):
    pass


class OnSurface(NeuralImplicitError):
    """Query point lies on the mesh; the winding number is undefined there."""


class OracleFailure(NeuralImplicitError):
    pass


class LengthMismatch(NeuralImplicitError, ValueError):
    pass


class NonFiniteLoss(NeuralImplicitError):
    def __init__(self, epoch: int, batch: int, value: float):
        self.epoch, self.batch, self.value = epoch, batch, value
        super().__init__(f"non-finite loss {value!r} at epoch {epoch}, batch {batch}")


class FormatError(InputError):
    pass


class BadMagic(FormatError):
    pass


class UnsupportedVersion(FormatError):
    pass


class TruncatedPayload(FormatError):
    pass


class TrailingBytes(FormatError):
    pass


class UnknownActivationCode(FormatError):
    pass


class SceneParseError(InputError):
    def __init__(self, message: str, offset: int):
        self.offset = offset
        super().__init__(f"{message} at offset {offset}")
