"""Prime-field arithmetic and the fixed-point codec.

Aggregation runs over the integers mod p for a large prime p. Real-valued
gradients enter the field through a fixed-point codec: encode multiplies by
a scale factor 10**d_n and rounds half away from zero; negative values are
stored as their additive complement, so decode applies the centered lift
(values above p/2 map to value - p) before dividing the scale back out.
The roundtrip error is at most 1/(2 * 10**d_n) per coordinate.

Field values never touch floating point. Encode works on the exact rational
value of its float argument, which is what makes the roundtrip bound hold
with zero exceptions rather than merely on average.
"""
from __future__ import annotations

import random
from dataclasses import dataclass

from .errors import (
    ConfigurationError,
    EncodingRangeError,
    InvalidParameterError,
    ModulusMismatchError,
)

__all__ = [
    "MERSENNE_127",
    "DEFAULT_MODULUS",
    "PrimeModulus",
    "FieldElement",
    "FixedPointCodec",
    "field_add",
    "uniform_element",
]

MERSENNE_127 = (1 << 127) - 1

_MR_WITNESSES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47)


def _is_prime(n: int) -> bool:
    """Miller-Rabin over a fixed witness schedule.

    Deterministic procedure: the witness list is constant, so the answer for
    a given n never changes. The first thirteen witnesses are known to be
    exact below 3.3e24; the remaining witnesses push the composite escape
    probability below 2**-120 for anything larger.
    """
    if n < 2:
        return False
    for q in _MR_WITNESSES:
        if n == q:
            return True
        if n % q == 0:
            return False
    d = n - 1
    s = 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for a in _MR_WITNESSES:
        x = pow(a, d, n)
        if x == 1 or x == n - 1:
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


@dataclass(frozen=True)
class PrimeModulus:
    """A validated prime modulus.

    Construction runs the primality check, so any PrimeModulus in the system
    is known prime; downstream code relies on that and never re-checks.
    """

    value: int

    def __post_init__(self) -> None:
        if not isinstance(self.value, int) or isinstance(self.value, bool):
            raise ConfigurationError(f"modulus must be an int, got {type(self.value).__name__}")
        if self.value < 2 or not _is_prime(self.value):
            raise ConfigurationError(f"modulus must be prime, got {self.value}")

    @property
    def bit_length(self) -> int:
        return self.value.bit_length()

    def __repr__(self) -> str:
        return f"PrimeModulus({self.value})"


DEFAULT_MODULUS = PrimeModulus(MERSENNE_127)


class FieldElement:
    """An element of Z_p, value always reduced to [0, p).

    Binary operations require both operands to share a modulus; mixing
    moduli is a configuration error, not a silent coercion.
    """

    __slots__ = ("value", "modulus")

    def __init__(self, value: int, modulus: PrimeModulus):
        if not 0 <= value < modulus.value:
            raise InvalidParameterError(
                f"field value {value} outside [0, {modulus.value})"
            )
        self.value = value
        self.modulus = modulus

    def _check(self, other: "FieldElement") -> None:
        if self.modulus is not other.modulus and self.modulus != other.modulus:
            raise ModulusMismatchError(
                f"mixed moduli {self.modulus.value} and {other.modulus.value}"
            )

    def __add__(self, other: "FieldElement") -> "FieldElement":
        if not isinstance(other, FieldElement):
            return NotImplemented
        self._check(other)
        s = self.value + other.value
        p = self.modulus.value
        if s >= p:
            s -= p
        return FieldElement(s, self.modulus)

    def __sub__(self, other: "FieldElement") -> "FieldElement":
        if not isinstance(other, FieldElement):
            return NotImplemented
        self._check(other)
        s = self.value - other.value
        if s < 0:
            s += self.modulus.value
        return FieldElement(s, self.modulus)

    def __neg__(self) -> "FieldElement":
        if self.value == 0:
            return self
        return FieldElement(self.modulus.value - self.value, self.modulus)

    def __eq__(self, other) -> bool:
        if not isinstance(other, FieldElement):
            return NotImplemented
        return self.value == other.value and self.modulus == other.modulus

    def __hash__(self) -> int:
        return hash((self.value, self.modulus.value))

    def __int__(self) -> int:
        return self.value

    def __repr__(self) -> str:
        return f"FieldElement({self.value} mod {self.modulus.value})"


def field_add(a: FieldElement, b: FieldElement) -> FieldElement:
    """Sum in the field; moduli must match."""
    return a + b


def uniform_element(modulus: PrimeModulus, rng: random.Random) -> FieldElement:
    """Uniform draw from [0, p) by rejection on the smallest power of two >= p.

    Rejection keeps the draw exactly uniform; reducing a wider draw mod p
    would bias low values. For the default Mersenne modulus the rejection
    probability is 2**-127 per attempt.
    """
    p = modulus.value
    bits = (p - 1).bit_length()
    while True:
        v = rng.getrandbits(bits)
        if v < p:
            return FieldElement(v, modulus)


class FixedPointCodec:
    """Maps floats to field elements at fixed precision d_n decimal digits.

    encode(x) = round(x * 10**d_n) mod p, rounding half away from zero, with
    the rounding done on the exact rational value of x. The precondition
    |x| < p / (2 * 10**d_n) keeps positive and negative codes disjoint.
    decode applies the centered lift and divides the scale back out.
    """

    __slots__ = ("modulus", "d_n", "scale")

    def __init__(self, modulus: PrimeModulus, d_n: int):
        if not isinstance(d_n, int) or isinstance(d_n, bool) or d_n < 0:
            raise InvalidParameterError(f"d_n must be a nonnegative int, got {d_n!r}")
        self.modulus = modulus
        self.d_n = d_n
        self.scale = 10 ** d_n
        if modulus.value <= 2 * self.scale:
            raise ConfigurationError(
                f"modulus {modulus.value} too small for scale 10**{d_n}"
            )

    def encode(self, x: float) -> FieldElement:
        x = float(x)
        if x != x or x in (float("inf"), float("-inf")):
            raise InvalidParameterError(f"cannot encode non-finite value {x}")
        num, den = x.as_integer_ratio()
        p = self.modulus.value
        # range check |x| < p/(2*scale), done exactly: 2*|num|*scale < p*den
        if 2 * abs(num) * self.scale >= p * den:
            raise EncodingRangeError(
                f"|{x}| >= p/(2*10**{self.d_n}), cannot encode without wraparound"
            )
        a = abs(num) * self.scale
        # round half away from zero on the exact ratio a/den
        q = (2 * a + den) // (2 * den)
        k = q if num >= 0 else -q
        return FieldElement(k % p, self.modulus)

    def decode(self, element: FieldElement) -> float:
        if element.modulus != self.modulus:
            raise ModulusMismatchError(
                f"element modulus {element.modulus.value} != codec modulus {self.modulus.value}"
            )
        lift = self.centered_lift(element)
        return lift / self.scale

    def centered_lift(self, element: FieldElement) -> int:
        """Integer in (-p/2, p/2] congruent to the element."""
        v = element.value
        p = self.modulus.value
        return v - p if 2 * v > p else v

    def headroom_bits(self, n_max: int, v_max: float) -> int:
        """Bits of slack between p and the no-wraparound bound 2*n_max*scale*v_max."""
        bound = self.wraparound_bound(n_max, v_max)
        if self.modulus.value <= bound:
            return 0
        return (self.modulus.value // bound).bit_length() - 1

    def wraparound_bound(self, n_max: int, v_max: float) -> int:
        if n_max < 1:
            raise InvalidParameterError(f"n_max must be >= 1, got {n_max}")
        if not v_max > 0:
            raise InvalidParameterError(f"v_max must be > 0, got {v_max}")
        num, den = float(v_max).as_integer_ratio()
        # ceil of 2*n_max*scale*v_max as an integer bound
        return -((-2 * n_max * self.scale * num) // den)

    def validate_headroom(self, n_max: int, v_max: float) -> None:
        """Raise unless p > 2 * n_max * scale * v_max.

        The bound guarantees that a sum of up to n_max encoded values, each
        of magnitude at most v_max, stays inside the centered range and so
        decodes without wraparound.
        """
        if self.modulus.value <= self.wraparound_bound(n_max, v_max):
            raise ConfigurationError(
                f"p={self.modulus.value} violates no-wraparound bound "
                f"2*{n_max}*10**{self.d_n}*{v_max}"
            )

    def __repr__(self) -> str:
        return f"FixedPointCodec(p={self.modulus.value}, d_n={self.d_n})"
