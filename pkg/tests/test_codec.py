from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hybagg.codec import ScaleParams, capacity, decode, encode
from hybagg.errors import EncodeError, ParameterError
from hybagg.ring import ctx_new, to_signed

CTX = ctx_new(1024, 100)


def test_zero_vector_roundtrip():
    sp = ScaleParams(delta=2**40, d=16)
    m = encode(np.zeros(16), sp, CTX)
    assert m.is_zero()
    assert np.array_equal(decode(CTX.zero(), sp), np.zeros(16))


def test_small_scale_hand_example():
    sp = ScaleParams(delta=2**10, d=2)
    m = encode([1.5, -0.25], sp, CTX)
    assert [int(v) for v in to_signed(m, 2)] == [1536, -256]
    assert all(v == 0 for v in to_signed(m)[2:])
    assert list(decode(m, sp)) == [1.5, -0.25]


def test_decode_single_coefficient():
    sp = ScaleParams(delta=2**10, d=1)
    assert decode(CTX.from_signed(np.array([-256] + [0] * 1023)), sp)[0] == -0.25


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, 64, elements=st.floats(-1, 1, allow_nan=False)))
def test_roundtrip_within_one_step(x):
    sp = ScaleParams(delta=2**40, d=64)
    y = decode(encode(x, sp, CTX), sp)
    assert np.all(np.abs(y - x) <= 1 / sp.delta)


@settings(max_examples=60, deadline=None)
@given(
    arrays(np.float64, 32, elements=st.floats(-1, 1, allow_nan=False)),
    arrays(np.float64, 32, elements=st.floats(-1, 1, allow_nan=False)),
)
def test_encoding_is_additive(x, y):
    sp = ScaleParams(delta=2**40, d=32)
    s = decode(encode(x, sp, CTX) + encode(y, sp, CTX), sp)
    assert np.all(np.abs(s - (x + y)) <= 2 / sp.delta)


def test_full_capacity_packing():
    sp = ScaleParams(delta=2**30, d=capacity(CTX))
    x = np.linspace(-1, 1, capacity(CTX))
    assert np.all(np.abs(decode(encode(x, sp, CTX), sp) - x) <= 1 / sp.delta)


def test_errors():
    sp = ScaleParams(delta=2**40, d=4)
    with pytest.raises(EncodeError, match="index 2"):
        encode([0.0, 1.0, np.nan, 0.0], sp, CTX)
    with pytest.raises(EncodeError, match=r"x\[1\]"):
        encode([0.0, 2.0**70, 0.0, 0.0], sp, CTX)
    with pytest.raises(EncodeError):
        encode([0.0, 1.0], sp, CTX)
    with pytest.raises(ParameterError):
        encode(np.zeros(2048), ScaleParams(delta=2**40, d=2048), CTX)
    with pytest.raises(ParameterError):
        ScaleParams(delta=3, d=4)


def test_large_scaled_values_take_the_bigint_path():
    sp = ScaleParams(delta=2**62, d=3)
    x = [0.75, -0.5, 1.25]
    assert list(decode(encode(x, sp, CTX), sp)) == x
