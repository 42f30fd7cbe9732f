"""Full-threshold additive secret sharing over a prime field.

split draws m-1 share vectors uniformly at random and sets the last share
to secret - sum(others) mod p, coordinate by coordinate. Reconstruction is
the mod-p sum of all m shares; nothing less than the full set carries any
information about the secret, which is what makes a strict subset of the
intermediate servers useless to an attacker.

Shares are additively homomorphic: summing the server-index-k shares of
many clients yields the server-index-k share of the summed secrets. The
aggregation servers exploit exactly that identity.
"""
from __future__ import annotations

import random
import struct
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import (
    IncompleteShareSetError,
    InvalidParameterError,
    ModulusMismatchError,
)
from .field import FieldElement, PrimeModulus, uniform_element

__all__ = [
    "AGGREGATE_CLIENT_ID",
    "ShareVector",
    "ShareSet",
    "split",
    "reconstruct",
    "aggregate_shares",
]

# client_id carried by server-side aggregated shares; real clients must use ids below this
AGGREGATE_CLIENT_ID = 0xFFFFFFFF

_HEADER = struct.Struct(">QIHI")  # round_id, client_id, server_index, d
_ELEMENT_BYTES = 16


@dataclass(frozen=True)
class ShareVector:
    """One server's share of one client's encoded gradient for one round."""

    round_id: int
    client_id: int
    server_index: int
    elements: tuple[FieldElement, ...]

    def __post_init__(self) -> None:
        if not 0 <= self.round_id < 1 << 64:
            raise InvalidParameterError(f"round_id {self.round_id} outside uint64")
        if not 0 <= self.client_id <= AGGREGATE_CLIENT_ID:
            raise InvalidParameterError(f"client_id {self.client_id} outside uint32")
        if not 0 <= self.server_index < 1 << 16:
            raise InvalidParameterError(f"server_index {self.server_index} outside uint16")
        if not self.elements:
            raise InvalidParameterError("share vector must have at least one element")
        mod = self.elements[0].modulus
        for e in self.elements[1:]:
            if e.modulus is not mod and e.modulus != mod:
                raise ModulusMismatchError("share vector mixes moduli")

    @property
    def dimension(self) -> int:
        return len(self.elements)

    @property
    def modulus(self) -> PrimeModulus:
        return self.elements[0].modulus

    def to_bytes(self) -> bytes:
        """Wire form: round_id u64, client_id u32, server_index u16, d u32,
        then d big-endian 16-byte field values."""
        if self.modulus.bit_length > 8 * _ELEMENT_BYTES:
            raise InvalidParameterError(
                f"modulus needs {self.modulus.bit_length} bits, wire format carries 128"
            )
        head = _HEADER.pack(self.round_id, self.client_id, self.server_index, self.dimension)
        body = b"".join(e.value.to_bytes(_ELEMENT_BYTES, "big") for e in self.elements)
        return head + body

    @classmethod
    def from_bytes(cls, data: bytes, modulus: PrimeModulus) -> "ShareVector":
        if len(data) < _HEADER.size:
            raise InvalidParameterError(f"share vector needs >= {_HEADER.size} bytes, got {len(data)}")
        round_id, client_id, server_index, d = _HEADER.unpack_from(data)
        expected = _HEADER.size + d * _ELEMENT_BYTES
        if d == 0 or len(data) != expected:
            raise InvalidParameterError(
                f"share vector length {len(data)} does not match d={d} (expected {expected})"
            )
        elements = []
        for j in range(d):
            off = _HEADER.size + j * _ELEMENT_BYTES
            v = int.from_bytes(data[off:off + _ELEMENT_BYTES], "big")
            if v >= modulus.value:
                raise InvalidParameterError(f"element {v} not reduced mod {modulus.value}")
            elements.append(FieldElement(v, modulus))
        return cls(round_id, client_id, server_index, tuple(elements))


@dataclass(frozen=True)
class ShareSet:
    """All m shares of one client's vector for one round, index order 0..m-1."""

    shares: tuple[ShareVector, ...]

    @property
    def m(self) -> int:
        return len(self.shares)

    @property
    def dimension(self) -> int:
        return self.shares[0].dimension


def split(
    values: Sequence[FieldElement],
    m: int,
    rng: random.Random,
    *,
    round_id: int = 0,
    client_id: int = 0,
) -> ShareSet:
    """Split a field vector into m additive shares.

    Randomness: for each coordinate, shares 0..m-2 are fresh uniform draws
    from rng and share m-1 is the residual. m=1 degenerates to the secret
    itself traveling in the clear.
    """
    if m < 1:
        raise InvalidParameterError(f"m must be >= 1, got {m}")
    if not values:
        raise InvalidParameterError("cannot split an empty vector")
    if client_id >= AGGREGATE_CLIENT_ID:
        raise InvalidParameterError(f"client_id {client_id} is reserved")
    mod = values[0].modulus
    p = mod.value
    rows: list[list[FieldElement]] = [[] for _ in range(m)]
    for v in values:
        if v.modulus is not mod and v.modulus != mod:
            raise ModulusMismatchError("secret vector mixes moduli")
        acc = 0
        for k in range(m - 1):
            r = uniform_element(mod, rng)
            rows[k].append(r)
            acc += r.value
        rows[m - 1].append(FieldElement((v.value - acc) % p, mod))
    return ShareSet(tuple(
        ShareVector(round_id, client_id, k, tuple(rows[k])) for k in range(m)
    ))


def _as_share_list(shares: ShareSet | Iterable[ShareVector]) -> list[ShareVector]:
    if isinstance(shares, ShareSet):
        return list(shares.shares)
    return list(shares)


def reconstruct(
    shares: ShareSet | Iterable[ShareVector],
    m: int | None = None,
) -> tuple[FieldElement, ...]:
    """Mod-p sum of a complete share set.

    Requires exactly one share per server index 0..m-1, all for the same
    round and client and dimension. Anything less is an incomplete set and
    an error: the scheme is full-threshold by design. Pass m when the caller
    knows the expected share count; a bare list whose indices happen to form
    a shorter prefix is otherwise indistinguishable from a complete set,
    which is the secrecy property doing its job.
    """
    vecs = _as_share_list(shares)
    if not vecs:
        raise IncompleteShareSetError("no shares given")
    if m is None:
        m = len(vecs)
    indices = sorted(s.server_index for s in vecs)
    if indices != list(range(m)):
        raise IncompleteShareSetError(
            f"need one share per server index 0..{m - 1}, got indices {indices}"
        )
    first = vecs[0]
    for s in vecs[1:]:
        if s.round_id != first.round_id or s.client_id != first.client_id:
            raise IncompleteShareSetError("shares span different rounds or clients")
        if s.dimension != first.dimension:
            raise IncompleteShareSetError("shares disagree on dimension")
        if s.modulus != first.modulus:
            raise ModulusMismatchError("shares mix moduli")
    p = first.modulus.value
    mod = first.modulus
    d = first.dimension
    totals = [0] * d
    for s in vecs:
        for j, e in enumerate(s.elements):
            totals[j] += e.value
    return tuple(FieldElement(t % p, mod) for t in totals)


def aggregate_shares(shares: Iterable[ShareVector]) -> ShareVector:
    """Elementwise sum of same-server shares from distinct clients.

    This is the intermediate server's entire job: the result is that
    server's share of the summed client secrets, tagged with the aggregate
    client id sentinel.
    """
    vecs = list(shares)
    if not vecs:
        raise InvalidParameterError("nothing to aggregate")
    first = vecs[0]
    seen_clients = set()
    p = first.modulus.value
    totals = [0] * first.dimension
    for s in vecs:
        if s.server_index != first.server_index:
            raise InvalidParameterError(
                f"mixed server indices {first.server_index} and {s.server_index}"
            )
        if s.round_id != first.round_id:
            raise InvalidParameterError("mixed rounds in aggregation")
        if s.dimension != first.dimension:
            raise InvalidParameterError("mixed dimensions in aggregation")
        if s.modulus != first.modulus:
            raise ModulusMismatchError("aggregation mixes moduli")
        if s.client_id in seen_clients:
            raise InvalidParameterError(f"duplicate client {s.client_id} in aggregation")
        seen_clients.add(s.client_id)
        for j, e in enumerate(s.elements):
            totals[j] += e.value
    mod = first.modulus
    return ShareVector(
        first.round_id,
        AGGREGATE_CLIENT_ID,
        first.server_index,
        tuple(FieldElement(t % p, mod) for t in totals),
    )
