from __future__ import annotations

import random

import numpy as np
import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from hybagg.errors import ContextMismatchError, ParameterError
from hybagg.ring import (
    RingContext,
    add,
    ctx_new,
    is_prime,
    mul,
    neg,
    sub,
    sum_elements,
    to_signed,
)


def schoolbook(a: list[int], b: list[int], q: int) -> list[int]:
    """O(n^2) product modulo X^n + 1: wrapped terms change sign."""
    n = len(a)
    out = [0] * n
    for i in range(n):
        for j in range(n):
            k = i + j
            if k < n:
                out[k] += a[i] * b[j]
            else:
                out[k - n] -= a[i] * b[j]
    return [v % q for v in out]


def rand_elem(ctx: RingContext, rng: random.Random):
    return ctx.from_residues(np.array([[rng.randrange(q) for _ in range(ctx.n)] for q in ctx.moduli], dtype=np.uint64))


def coeffs(e, r: int = 0) -> list[int]:
    return [int(v) for v in e.residues[r]]


@pytest.fixture(scope="module")
def q17():
    return RingContext(4, [17])


# -- construction -------------------------------------------------------------


def test_ctx_new_single_prime():
    ctx = ctx_new(8, 50)
    assert ctx.chain_length == 1
    (p,) = ctx.moduli
    assert p >= 2**50
    assert p % 16 == 1
    assert sympy.isprime(p)


def test_ctx_new_two_primes_checked_by_independent_primality():
    ctx = ctx_new(4096, 100)
    assert ctx.chain_length == 2
    for p in ctx.moduli:
        assert sympy.isprime(p)
        assert p % 8192 == 1
        assert 50 <= p.bit_length() <= 60
    assert ctx.Q >= 2**100
    assert len(set(ctx.moduli)) == 2


def test_ctx_new_takes_largest_candidates():
    ctx = ctx_new(4096, 100)
    top = max(ctx.moduli)
    # Nothing between the chosen prime and the top of its window was skipped.
    for p in range(top + 8192, 1 << top.bit_length(), 8192):
        assert not sympy.isprime(p)


@pytest.mark.parametrize("n", [6, 0, 3, 1 << 20])
def test_bad_degree_rejected(n):
    with pytest.raises(ParameterError):
        ctx_new(n, 50)


def test_bad_moduli_rejected():
    with pytest.raises(ParameterError):
        RingContext(4, [15])  # composite
    with pytest.raises(ParameterError):
        RingContext(4, [13])  # 13 != 1 mod 8
    with pytest.raises(ParameterError):
        RingContext(4, [17, 17])
    with pytest.raises(ParameterError):
        ctx_new(1024, 300)  # more than four primes


def test_is_prime_matches_sympy():
    rng = random.Random(5)
    for _ in range(2000):
        p = rng.randrange(2, 1 << 62)
        assert is_prime(p) == sympy.isprime(p)
    for p in range(200):
        assert is_prime(p) == sympy.isprime(p)


# -- add / sub / neg ------------------------------------------------------------


def test_add_hand_example(q17):
    a = q17.from_signed([1, 2, 3, 4])
    b = q17.from_signed([16, 16, 16, 16])
    assert coeffs(add(a, b)) == [0, 1, 2, 3]


def test_sub_hand_example(q17):
    a = q17.from_signed([1, 0, 0, 0])
    b = q17.from_signed([2, 0, 0, 0])
    assert coeffs(sub(a, b)) == [16, 0, 0, 0]


def test_additive_identities():
    ctx = ctx_new(16, 100)
    rng = random.Random(1)
    for _ in range(50):
        a = rand_elem(ctx, rng)
        assert a + ctx.zero() == a
        assert (a + neg(a)).is_zero()
        assert (a - a).is_zero()
        assert ctx.zero() - a == neg(a)


def test_add_sub_match_bigint_arithmetic():
    ctx = ctx_new(16, 100)
    rng = random.Random(2)
    for _ in range(100):
        a, b = rand_elem(ctx, rng), rand_elem(ctx, rng)
        for r, q in enumerate(ctx.moduli):
            ar, br = coeffs(a, r), coeffs(b, r)
            assert coeffs(a + b, r) == [(x + y) % q for x, y in zip(ar, br)]
            assert coeffs(a - b, r) == [(x - y) % q for x, y in zip(ar, br)]


def test_sum_elements_matches_fold():
    ctx = ctx_new(16, 100)
    rng = random.Random(3)
    elems = [rand_elem(ctx, rng) for _ in range(20)]
    folded = elems[0]
    for e in elems[1:]:
        folded = folded + e
    assert sum_elements(elems) == folded
    with pytest.raises(ValueError):
        sum_elements([])


def test_mixed_contexts_rejected():
    a = ctx_new(16, 50).zero()
    b = ctx_new(16, 100).zero()
    with pytest.raises(ContextMismatchError):
        add(a, b)
    with pytest.raises(ContextMismatchError):
        mul(a, b)


def test_elements_are_immutable():
    e = ctx_new(8, 50).one()
    with pytest.raises(ValueError):
        e.residues[0, 0] = 5


# -- multiplication -------------------------------------------------------------


@pytest.mark.parametrize("n", [4, 8, 16])
def test_ntt_product_equals_schoolbook_single_prime(n):
    ctx = ctx_new(n, 50)
    rng = random.Random(n)
    q = ctx.moduli[0]
    for _ in range(500):
        a, b = rand_elem(ctx, rng), rand_elem(ctx, rng)
        assert coeffs(mul(a, b)) == schoolbook(coeffs(a), coeffs(b), q)


def test_ntt_product_small_primes():
    for ctx in (RingContext(4, [17]), RingContext(8, [17, 97])):
        rng = random.Random(ctx.n)
        for _ in range(200):
            a, b = rand_elem(ctx, rng), rand_elem(ctx, rng)
            prod = mul(a, b)
            for r, q in enumerate(ctx.moduli):
                assert coeffs(prod, r) == schoolbook(coeffs(a, r), coeffs(b, r), q)


def test_ntt_product_multi_prime_large_degree():
    ctx = ctx_new(64, 120)
    rng = random.Random(9)
    for _ in range(20):
        a, b = rand_elem(ctx, rng), rand_elem(ctx, rng)
        prod = mul(a, b)
        for r, q in enumerate(ctx.moduli):
            assert coeffs(prod, r) == schoolbook(coeffs(a, r), coeffs(b, r), q)


def test_multiplicative_identity_and_negacyclic_wrap():
    ctx = ctx_new(16, 100)
    rng = random.Random(4)
    a = rand_elem(ctx, rng)
    assert a * ctx.one() == a
    x = ctx.monomial(1)
    top = ctx.monomial(ctx.n - 1)
    assert x * top == neg(ctx.one())
    assert [int(v) for v in (x * top).residues[:, 0]] == [q - 1 for q in ctx.moduli]


def test_ntt_roundtrip():
    ctx = ctx_new(1024, 100)
    rng = random.Random(6)
    a = rand_elem(ctx, rng)
    assert ctx.ntt_inverse(ctx.ntt_forward(a)) == a


def test_squaring_shortcut_matches_general_product():
    ctx = ctx_new(32, 100)
    rng = random.Random(7)
    a = rand_elem(ctx, rng)
    b = ctx.from_residues(a.residues.copy())
    assert mul(a, a) == mul(a, b)


# -- centered lift ----------------------------------------------------------------


def test_to_signed_boundaries():
    ctx = ctx_new(8, 100)
    assert all(v == 0 for v in to_signed(ctx.zero()))
    top = ctx.from_signed(np.array([ctx.Q - 1] + [0] * 7, dtype=object))
    assert to_signed(top)[0] == -1


def test_to_signed_crt_by_hand():
    ctx = RingContext(8, [17, 97])
    e = ctx.from_residues(np.array([[5] * 8, [5] * 8], dtype=np.uint64))
    assert list(to_signed(e)) == [5] * 8


def test_to_signed_count_prefix():
    ctx = ctx_new(16, 100)
    vals = list(range(-8, 8))
    e = ctx.from_signed(np.array(vals, dtype=np.int64))
    assert list(to_signed(e, 5)) == vals[:5]


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(min_value=-(2**99), max_value=2**99), min_size=8, max_size=8))
def test_signed_roundtrip(vals):
    ctx = ctx_new(8, 100)
    e = ctx.from_signed(np.array(vals, dtype=object))
    assert [int(v) for v in to_signed(e)] == vals


@settings(max_examples=100, deadline=None)
@given(
    st.lists(st.integers(min_value=-(2**30), max_value=2**30), min_size=8, max_size=8),
    st.lists(st.integers(min_value=-(2**30), max_value=2**30), min_size=8, max_size=8),
)
def test_small_products_lift_to_integer_convolution(a, b):
    ctx = ctx_new(8, 100)
    prod = to_signed(ctx.from_signed(np.array(a)) * ctx.from_signed(np.array(b)))
    expect = [0] * 8
    for i in range(8):
        for j in range(8):
            sign = 1 if i + j < 8 else -1
            expect[(i + j) % 8] += sign * a[i] * b[j]
    assert [int(v) for v in prod] == expect


@settings(max_examples=100, deadline=None)
@given(st.integers(min_value=0, max_value=2**32), st.integers(min_value=0, max_value=2**32))
def test_ring_axioms(seed_a, seed_b):
    ctx = ctx_new(16, 100)
    a = rand_elem(ctx, random.Random(seed_a))
    b = rand_elem(ctx, random.Random(seed_b))
    c = rand_elem(ctx, random.Random(seed_a ^ seed_b ^ 0xABC))
    assert a + b == b + a
    assert a * b == b * a
    assert a * (b + c) == a * b + a * c
