"""Field arithmetic, uniform sampling, and fixed-point codec tests."""
import math
import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from ddpsa.errors import (
    ConfigurationError,
    EncodingRangeError,
    InvalidParameterError,
    ModulusMismatchError,
)
from ddpsa.field import (
    DEFAULT_MODULUS,
    MERSENNE_127,
    FieldElement,
    FixedPointCodec,
    PrimeModulus,
    field_add,
    uniform_element,
)

P = DEFAULT_MODULUS.value


def fe(v):
    return FieldElement(v, DEFAULT_MODULUS)


def test_default_modulus_is_mersenne_127():
    assert P == (1 << 127) - 1
    assert DEFAULT_MODULUS.bit_length == 127


def test_wraparound_at_p():
    assert (fe(P - 1) + fe(1)).value == 0


def test_subtraction_borrows():
    assert (fe(0) - fe(1)).value == P - 1


def test_negation():
    assert (-fe(5)).value == P - 5
    assert (-fe(0)).value == 0


def test_field_add_function():
    assert field_add(fe(3), fe(4)) == fe(7)


def test_modulus_mismatch_rejected():
    other = PrimeModulus(101)
    with pytest.raises(ModulusMismatchError):
        fe(1) + FieldElement(1, other)
    with pytest.raises(ModulusMismatchError):
        fe(1) - FieldElement(1, other)


def test_value_out_of_range_rejected():
    with pytest.raises(InvalidParameterError):
        fe(P)
    with pytest.raises(InvalidParameterError):
        fe(-1)


def test_composite_modulus_rejected():
    with pytest.raises(ConfigurationError):
        PrimeModulus(100)
    with pytest.raises(ConfigurationError):
        PrimeModulus(1)
    with pytest.raises(ConfigurationError):
        PrimeModulus((1 << 127) - 3)  # not prime


def test_small_primes_accepted():
    for p in (2, 3, 5, 101, 2**61 - 1):
        assert PrimeModulus(p).value == p


@given(st.integers(0, P - 1), st.integers(0, P - 1), st.integers(0, P - 1))
def test_add_associative_commutative(a, b, c):
    x, y, z = fe(a), fe(b), fe(c)
    assert (x + y) + z == x + (y + z)
    assert x + y == y + x


@given(st.integers(0, P - 1))
def test_additive_inverse(a):
    x = fe(a)
    assert (x + (-x)).value == 0
    assert (x - x).value == 0


@given(st.integers(0, P - 1), st.integers(0, P - 1))
def test_sub_is_add_neg(a, b):
    x, y = fe(a), fe(b)
    assert x - y == x + (-y)


# ---------------------------------------------------------------- sampling

def test_uniform_element_in_range_and_deterministic():
    rng = random.Random(123)
    draws = [uniform_element(DEFAULT_MODULUS, rng).value for _ in range(1000)]
    assert all(0 <= v < P for v in draws)
    rng2 = random.Random(123)
    draws2 = [uniform_element(DEFAULT_MODULUS, rng2).value for _ in range(1000)]
    assert draws == draws2


def test_uniform_element_small_modulus_hits_everything():
    mod = PrimeModulus(5)
    rng = random.Random(0)
    seen = {uniform_element(mod, rng).value for _ in range(200)}
    assert seen == {0, 1, 2, 3, 4}


def test_uniform_element_chi_square_256_buckets():
    # 1e6 draws bucketed by value * 256 // p; uniformity at significance 0.01
    rng = random.Random(20240817)
    counts = [0] * 256
    for _ in range(1_000_000):
        v = uniform_element(DEFAULT_MODULUS, rng).value
        counts[v * 256 // P] += 1
    res = stats.chisquare(counts)
    assert res.pvalue > 0.01, f"chi-square p={res.pvalue}"


def test_uniform_element_mean_within_three_standard_errors():
    rng = random.Random(99)
    n = 1_000_000
    total = 0
    for _ in range(n):
        total += uniform_element(DEFAULT_MODULUS, rng).value
    mean = total / n
    se = (P / math.sqrt(12)) / math.sqrt(n)
    assert abs(mean - (P - 1) / 2) <= 3 * se


# ------------------------------------------------------------------ codec

CODEC = FixedPointCodec(DEFAULT_MODULUS, 10)


def test_encode_positive_example():
    assert CODEC.encode(0.5).value == 5_000_000_000


def test_encode_negative_example():
    assert CODEC.encode(-0.3).value == P - 3_000_000_000


def test_decode_negative_roundtrip():
    assert CODEC.decode(CODEC.encode(-0.3)) == -0.3


def test_encode_zero():
    assert CODEC.encode(0.0).value == 0
    assert CODEC.decode(CODEC.encode(0.0)) == 0.0


def test_round_half_away_from_zero():
    c = FixedPointCodec(DEFAULT_MODULUS, 1)
    assert c.encode(0.25).value == 3  # 2.5 rounds away to 3
    assert c.encode(-0.25).value == P - 3
    assert c.encode(0.15).value == 1  # float 0.15 sits just below 3/20, rounds down

    assert c.encode(0.75).value == 8


def test_encode_range_limit():
    limit = P / (2 * 10**10)
    with pytest.raises(EncodingRangeError):
        CODEC.encode(limit * 1.01)
    # far inside the range is fine
    CODEC.encode(limit * 0.5)


def test_encode_rejects_non_finite():
    for bad in (float("nan"), float("inf"), float("-inf")):
        with pytest.raises(InvalidParameterError):
            CODEC.encode(bad)


def test_decode_checks_modulus():
    other = FixedPointCodec(PrimeModulus(2**61 - 1), 10)
    with pytest.raises(ModulusMismatchError):
        other.decode(CODEC.encode(0.5))


def test_d_n_validation():
    with pytest.raises(InvalidParameterError):
        FixedPointCodec(DEFAULT_MODULUS, -1)
    with pytest.raises(ConfigurationError):
        FixedPointCodec(PrimeModulus(101), 10)  # scale dwarfs modulus


@given(st.floats(min_value=-1e6, max_value=1e6, allow_nan=False))
@settings(max_examples=300)
def test_roundtrip_error_bound_exact(x):
    # bound checked in exact rational arithmetic: |lift/scale - x| <= 1/(2*scale)
    e = CODEC.encode(x)
    lift = CODEC.centered_lift(e)
    err = abs(Fraction(lift, CODEC.scale) - Fraction(x))
    assert err <= Fraction(1, 2 * CODEC.scale)


@given(st.floats(min_value=-1e6, max_value=1e6, allow_nan=False),
       st.floats(min_value=-1e6, max_value=1e6, allow_nan=False))
@settings(max_examples=200)
def test_encoded_sum_decodes_to_float_sum_within_bound(x, y):
    # additivity across the codec: enc(x)+enc(y) carries x+y up to 2 rounding errors,
    # verified in exact rational arithmetic
    lift = CODEC.centered_lift(CODEC.encode(x) + CODEC.encode(y))
    err = abs(Fraction(lift, CODEC.scale) - (Fraction(x) + Fraction(y)))
    assert err <= Fraction(2, 2 * CODEC.scale)


def test_centered_lift_edges():
    half = (P - 1) // 2
    assert CODEC.centered_lift(fe(half)) == half
    assert CODEC.centered_lift(fe(half + 1)) == half + 1 - P
    assert CODEC.centered_lift(fe(P - 1)) == -1


def test_headroom_defaults():
    # defaults: n_max 1e4 summands, v_max 1e6 magnitude, > 40 bits to spare
    CODEC.validate_headroom(10**4, 10**6)
    assert CODEC.headroom_bits(10**4, 10**6) > 40


def test_headroom_violation_detected():
    small = FixedPointCodec(PrimeModulus(2**61 - 1), 10)
    with pytest.raises(ConfigurationError):
        small.validate_headroom(10**4, 10**6)


def test_headroom_bad_parameters():
    with pytest.raises(InvalidParameterError):
        CODEC.validate_headroom(0, 1.0)
    with pytest.raises(InvalidParameterError):
        CODEC.validate_headroom(1, 0.0)
