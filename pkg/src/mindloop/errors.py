"""Exception taxonomy shared by all subsystems."""


class LoopError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(LoopError):
    """Tensor or layer dimensions do not agree."""


class ContractError(LoopError):
    """An operation was called outside its contract (bad state, bad seed node, busy session)."""


class FormatError(LoopError):
    """A binary file (checkpoint, IDX, episode cache) is malformed.

    Carries the byte offset at which the problem was detected.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class CodecError(LoopError):
    """Text contains a symbol outside the alphabet."""


class GrammarError(LoopError):
    """A sentence does not parse under any supported syntax."""


class TransformRangeError(LoopError):
    """An image transform parameter is outside its supported range."""


class ConfigError(LoopError):
    """A run configuration is invalid or inconsistent."""


class ConsistencyError(LoopError):
    """Two inputs that must agree (e.g. image and label counts) do not."""
