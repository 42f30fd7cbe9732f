"""Round message types and their binary payload codecs.

Every message that crosses a link is one of five tagged payloads. Integers
are big-endian at fixed widths, model coefficients are IEEE-754 binary64
big-endian, and field elements are 16-byte big-endian residues. The frame
header (length + tag byte) lives in the transport module; this module owns
only the payload layouts so the two transports cannot drift apart.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Union

from .errors import FrameError, InvalidParameterError
from .field import DEFAULT_MODULUS, FieldElement, PrimeModulus
from .sharing import ShareVector

MSG_MODEL_BROADCAST = 1
MSG_SHARE_UPLOAD = 2
MSG_PLAIN_GRADIENT_UPLOAD = 3
MSG_PARTIAL_SUM = 4
MSG_ROUND_ACK = 5

_U64_MAX = 2**64 - 1
_U32_MAX = 2**32 - 1
_U16_MAX = 2**16 - 1
_ELEMENT_BYTES = 16


def _check_round_id(round_id: int) -> None:
    if not 0 <= round_id <= _U64_MAX:
        raise InvalidParameterError(f"round_id {round_id} outside uint64")


@dataclass(frozen=True)
class ModelBroadcast:
    """Global model sent from the parameter server to every client."""

    round_id: int
    theta: tuple[float, ...]

    msg_type = MSG_MODEL_BROADCAST

    def __post_init__(self) -> None:
        _check_round_id(self.round_id)
        if len(self.theta) == 0:
            raise InvalidParameterError("theta must be non-empty")
        object.__setattr__(self, "theta", tuple(float(v) for v in self.theta))

    def payload(self) -> bytes:
        d = len(self.theta)
        return struct.pack(f">Q{d}d", self.round_id, *self.theta)

    @classmethod
    def from_payload(cls, payload: bytes) -> "ModelBroadcast":
        if len(payload) < 16 or (len(payload) - 8) % 8 != 0:
            raise FrameError(f"bad ModelBroadcast payload length {len(payload)}")
        d = (len(payload) - 8) // 8
        fields = struct.unpack(f">Q{d}d", payload)
        return cls(round_id=fields[0], theta=tuple(fields[1:]))


@dataclass(frozen=True)
class ShareUpload:
    """One client's share of its encoded gradient, bound for one server."""

    share: ShareVector

    msg_type = MSG_SHARE_UPLOAD

    @property
    def round_id(self) -> int:
        return self.share.round_id

    def payload(self) -> bytes:
        return self.share.to_bytes()

    @classmethod
    def from_payload(cls, payload: bytes, modulus: PrimeModulus) -> "ShareUpload":
        return cls(share=ShareVector.from_bytes(payload, modulus))


@dataclass(frozen=True)
class PlainGradientUpload:
    """Unprotected gradient sent straight to the parameter server."""

    round_id: int
    client_id: int
    gradient: tuple[float, ...]

    msg_type = MSG_PLAIN_GRADIENT_UPLOAD

    def __post_init__(self) -> None:
        _check_round_id(self.round_id)
        if not 0 <= self.client_id <= _U32_MAX:
            raise InvalidParameterError(f"client_id {self.client_id} outside uint32")
        if len(self.gradient) == 0:
            raise InvalidParameterError("gradient must be non-empty")
        object.__setattr__(self, "gradient", tuple(float(v) for v in self.gradient))

    def payload(self) -> bytes:
        d = len(self.gradient)
        return struct.pack(f">QI{d}d", self.round_id, self.client_id, *self.gradient)

    @classmethod
    def from_payload(cls, payload: bytes) -> "PlainGradientUpload":
        if len(payload) < 20 or (len(payload) - 12) % 8 != 0:
            raise FrameError(f"bad PlainGradientUpload payload length {len(payload)}")
        d = (len(payload) - 12) // 8
        fields = struct.unpack(f">QI{d}d", payload)
        return cls(round_id=fields[0], client_id=fields[1], gradient=tuple(fields[2:]))


@dataclass(frozen=True)
class PartialSum:
    """A server's aggregate of one share per client, bound for the PS."""

    round_id: int
    server_index: int
    elements: tuple[FieldElement, ...]

    msg_type = MSG_PARTIAL_SUM

    def __post_init__(self) -> None:
        _check_round_id(self.round_id)
        if not 0 <= self.server_index <= _U16_MAX:
            raise InvalidParameterError(f"server_index {self.server_index} outside uint16")
        if len(self.elements) == 0:
            raise InvalidParameterError("elements must be non-empty")
        mod = self.elements[0].modulus
        if any(e.modulus != mod for e in self.elements[1:]):
            raise InvalidParameterError("partial sum mixes moduli")

    @classmethod
    def from_share_vector(cls, share: ShareVector) -> "PartialSum":
        return cls(
            round_id=share.round_id,
            server_index=share.server_index,
            elements=share.elements,
        )

    def payload(self) -> bytes:
        parts = [struct.pack(">QH", self.round_id, self.server_index)]
        for e in self.elements:
            parts.append(e.value.to_bytes(_ELEMENT_BYTES, "big"))
        return b"".join(parts)

    @classmethod
    def from_payload(cls, payload: bytes, modulus: PrimeModulus) -> "PartialSum":
        if len(payload) < 26 or (len(payload) - 10) % _ELEMENT_BYTES != 0:
            raise FrameError(f"bad PartialSum payload length {len(payload)}")
        round_id, server_index = struct.unpack(">QH", payload[:10])
        elements = []
        for off in range(10, len(payload), _ELEMENT_BYTES):
            value = int.from_bytes(payload[off : off + _ELEMENT_BYTES], "big")
            if value >= modulus.value:
                raise FrameError("partial sum element outside field range")
            elements.append(FieldElement(value, modulus))
        return cls(round_id=round_id, server_index=server_index, elements=tuple(elements))


@dataclass(frozen=True)
class RoundAck:
    """Bare acknowledgement carrying only the round id."""

    round_id: int

    msg_type = MSG_ROUND_ACK

    def __post_init__(self) -> None:
        _check_round_id(self.round_id)

    def payload(self) -> bytes:
        return struct.pack(">Q", self.round_id)

    @classmethod
    def from_payload(cls, payload: bytes) -> "RoundAck":
        if len(payload) != 8:
            raise FrameError(f"bad RoundAck payload length {len(payload)}")
        return cls(round_id=struct.unpack(">Q", payload)[0])


RoundMessage = Union[ModelBroadcast, ShareUpload, PlainGradientUpload, PartialSum, RoundAck]

_DECODERS_PLAIN = {
    MSG_MODEL_BROADCAST: ModelBroadcast.from_payload,
    MSG_PLAIN_GRADIENT_UPLOAD: PlainGradientUpload.from_payload,
    MSG_ROUND_ACK: RoundAck.from_payload,
}
_DECODERS_FIELD = {
    MSG_SHARE_UPLOAD: ShareUpload.from_payload,
    MSG_PARTIAL_SUM: PartialSum.from_payload,
}


def decode_payload(
    msg_type: int, payload: bytes, modulus: PrimeModulus = DEFAULT_MODULUS
) -> RoundMessage:
    """Rebuild a message from its tag and payload bytes."""
    if msg_type in _DECODERS_PLAIN:
        return _DECODERS_PLAIN[msg_type](payload)
    if msg_type in _DECODERS_FIELD:
        return _DECODERS_FIELD[msg_type](payload, modulus)
    raise FrameError(f"unknown message type {msg_type}")
