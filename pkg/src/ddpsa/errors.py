"""Exception taxonomy shared across the package.

Every error raised by ddpsa code derives from DdpsaError, and from a stdlib
exception that matches its nature, so callers can catch either way.
"""


class DdpsaError(Exception):
    """Base class for all ddpsa errors."""


class ConfigurationError(DdpsaError, ValueError):
    """A parameter combination that can never work (bad modulus, bad sizes)."""


class ModulusMismatchError(ConfigurationError):
    """Two field values from different moduli met in one operation."""


class InvalidParameterError(DdpsaError, ValueError):
    """A single argument is out of its documented domain."""


class EncodingRangeError(DdpsaError, ValueError):
    """Value magnitude too large for the fixed-point codec's safe range."""


class IncompleteShareSetError(DdpsaError, ValueError):
    """Reconstruction attempted without exactly one share per server."""


class ProtocolError(DdpsaError, RuntimeError):
    """A message violated the protocol state machine."""


class RoundDesyncError(ProtocolError):
    """A message arrived for a round other than the expected one."""


class IncompleteRoundError(ProtocolError):
    """A round could not complete because expected messages never arrived."""


class WraparoundError(ProtocolError):
    """Decoded aggregate magnitude implies the field sum wrapped around."""


class FrameError(DdpsaError, ValueError):
    """Bytes on the wire did not parse as a valid frame."""


class TransportError(DdpsaError, RuntimeError):
    """Failure in message delivery."""


class ReceiveTimeoutError(TransportError):
    """No message arrived within the receive timeout."""


class UnsupportedOperationError(DdpsaError, RuntimeError):
    """Operation not available on this transport (taps on TCP, for example)."""
