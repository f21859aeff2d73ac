"""Fixed-point coefficient packing of real vectors into plaintext polynomials.

Entry ``j`` of the vector becomes the coefficient of ``X^j``, scaled by
``delta`` and floored. Up to ``n`` reals fit in one polynomial.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EncodeError, ParameterError
from .ring import RingContext, RingElement, to_signed

ENCODE_MARGIN = 2
_INT64_SAFE = 2.0**62


@dataclass(frozen=True)
class ScaleParams:
    """Scaling factor, packed dimension and the cohort size sums must fit."""

    delta: int
    d: int
    max_clients: int = 1

    def __post_init__(self) -> None:
        if self.delta < 1 or self.delta & (self.delta - 1):
            raise ParameterError(f"delta={self.delta} must be a power of two")
        if self.d < 1:
            raise ParameterError("dimension d must be positive")
        if self.max_clients < 1:
            raise ParameterError("max_clients must be positive")

    @property
    def delta_bits(self) -> int:
        return self.delta.bit_length() - 1

    def check_context(self, ctx: RingContext) -> None:
        if self.d > capacity(ctx):
            raise ParameterError(f"d={self.d} exceeds capacity {capacity(ctx)} of n={ctx.n}")


def capacity(ctx: RingContext) -> int:
    """Reals packable per plaintext: one per coefficient."""
    return ctx.n


def input_bound(sp: ScaleParams, ctx: RingContext) -> float:
    """Largest |x_j| * delta that still leaves room for a full cohort sum."""
    return ctx.Q / (2 * sp.max_clients * ENCODE_MARGIN)


def encode(x, sp: ScaleParams, ctx: RingContext) -> RingElement:
    """Pack ``x`` as ``sum floor(x_j * delta) X^j``."""
    sp.check_context(ctx)
    vec = np.asarray(x, dtype=np.float64)
    if vec.shape != (sp.d,):
        raise EncodeError(f"expected a vector of length {sp.d}, got shape {vec.shape}")
    if not np.all(np.isfinite(vec)):
        bad = int(np.flatnonzero(~np.isfinite(vec))[0])
        raise EncodeError(f"non-finite input at index {bad}")
    scaled = np.floor(vec * float(sp.delta))
    bound = input_bound(sp, ctx)
    over = np.flatnonzero(np.abs(scaled) >= bound)
    if over.size:
        j = int(over[0])
        raise EncodeError(f"overflow guard: |x[{j}]| * delta = {abs(scaled[j]):.3e} >= {bound:.3e}")
    if scaled.size == 0 or np.max(np.abs(scaled)) < _INT64_SAFE:
        coeffs = np.zeros(ctx.n, dtype=np.int64)
        coeffs[: sp.d] = scaled.astype(np.int64)
    else:
        coeffs = np.zeros(ctx.n, dtype=object)
        coeffs[: sp.d] = [int(v) for v in scaled]
    return ctx.from_signed(coeffs)


def decode(m: RingElement, sp: ScaleParams, ctx: RingContext | None = None) -> np.ndarray:
    """Signed lift of the first ``d`` coefficients divided by ``delta``."""
    if ctx is not None and ctx.key != m.ctx.key:
        raise ParameterError("decode context does not match element context")
    sp.check_context(m.ctx)
    lifted = to_signed(m, sp.d)
    # int / int rounds correctly even past 2^53.
    return np.array([v / sp.delta for v in lifted], dtype=np.float64)
