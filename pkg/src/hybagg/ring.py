"""Negacyclic polynomial ring Z_q[X]/(X^n + 1) over an RNS modulus chain.

Elements are stored residue-major: a ``(k, n)`` uint64 array with row ``r``
holding the coefficients reduced modulo the ``r``-th prime. Coefficient of
``X^j`` sits at column ``j``.

Multiplication runs a negacyclic NTT per prime. The butterflies use 64-bit
Montgomery multiplication compiled with numba, which keeps every product
exact for primes up to 62 bits.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numba
import numpy as np

from .errors import ContextMismatchError, ParameterError

MAX_MODULUS_BITS = 62
MAX_CHAIN_LENGTH = 4
MIN_DEGREE = 2
MAX_DEGREE = 1 << 17

_MR_BASES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41)


def is_prime(p: int) -> bool:
    """Deterministic Miller-Rabin, exact for all p < 3.3e24."""
    if p < 2:
        return False
    for b in _MR_BASES:
        if p % b == 0:
            return p == b
    d, s = p - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for a in _MR_BASES:
        x = pow(a, d, p)
        if x in (1, p - 1):
            continue
        for _ in range(s - 1):
            x = x * x % p
            if x == p - 1:
                break
        else:
            return False
    return True


def _is_power_of_two(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


def _bit_reverse_indices(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n, dtype=np.int64)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------

_M32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_ONE = np.uint64(1)
_ZERO = np.uint64(0)


@numba.njit(cache=True, inline="always")
def _mulhi(a, b):
    a_lo = a & _M32
    a_hi = a >> _S32
    b_lo = b & _M32
    b_hi = b >> _S32
    p0 = a_lo * b_lo
    p1 = a_lo * b_hi
    p2 = a_hi * b_lo
    p3 = a_hi * b_hi
    mid = (p0 >> _S32) + (p1 & _M32) + (p2 & _M32)
    return p3 + (p1 >> _S32) + (p2 >> _S32) + (mid >> _S32)


@numba.njit(cache=True, inline="always")
def _mont_mul(a, b, q, qinv):
    # a * b * 2^-64 mod q, with qinv = -q^-1 mod 2^64 and a, b < q < 2^62.
    hi = _mulhi(a, b)
    lo = a * b
    m = lo * qinv
    carry = _ONE if lo != _ZERO else _ZERO
    t = hi + _mulhi(m, q) + carry
    if t >= q:
        t -= q
    return t


@numba.njit(cache=True, nogil=True)
def _ntt_forward(a, tw, q, qinv):
    k, n = a.shape
    for r in range(k):
        qq = q[r]
        qi = qinv[r]
        t = n
        m = 1
        while m < n:
            t >>= 1
            for i in range(m):
                j1 = 2 * i * t
                s = tw[r, m + i]
                for j in range(j1, j1 + t):
                    u = a[r, j]
                    v = _mont_mul(a[r, j + t], s, qq, qi)
                    x = u + v
                    if x >= qq:
                        x -= qq
                    a[r, j] = x
                    a[r, j + t] = u - v if u >= v else u + qq - v
            m <<= 1


@numba.njit(cache=True, nogil=True)
def _ntt_inverse(a, itw, q, qinv, scale):
    k, n = a.shape
    for r in range(k):
        qq = q[r]
        qi = qinv[r]
        t = 1
        m = n
        while m > 1:
            h = m >> 1
            j1 = 0
            for i in range(h):
                s = itw[r, h + i]
                for j in range(j1, j1 + t):
                    u = a[r, j]
                    v = a[r, j + t]
                    x = u + v
                    if x >= qq:
                        x -= qq
                    a[r, j] = x
                    d = u - v if u >= v else u + qq - v
                    a[r, j + t] = _mont_mul(d, s, qq, qi)
                j1 += 2 * t
            t <<= 1
            m = h
        sc = scale[r]
        for j in range(n):
            a[r, j] = _mont_mul(a[r, j], sc, qq, qi)


@numba.njit(cache=True, nogil=True)
def _pointwise_mont(a, b, q, qinv):
    k, n = a.shape
    out = np.empty_like(a)
    for r in range(k):
        qq = q[r]
        qi = qinv[r]
        for j in range(n):
            out[r, j] = _mont_mul(a[r, j], b[r, j], qq, qi)
    return out


# ---------------------------------------------------------------------------
# Context
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Modulus:
    """An NTT-friendly prime for degree ``n``: prime and ``value % 2n == 1``."""

    value: int
    n: int
    root: int = field(init=False)

    def __post_init__(self) -> None:
        q, n = self.value, self.n
        if not 2 < q < (1 << MAX_MODULUS_BITS) or not is_prime(q):
            raise ParameterError(f"modulus {q} is not an odd prime below 2^{MAX_MODULUS_BITS}")
        if (q - 1) % (2 * n):
            raise ParameterError(f"modulus {q} is not 1 mod 2n = {2 * n}")
        object.__setattr__(self, "root", _primitive_root_2n(q, n))


def _primitive_root_2n(q: int, n: int) -> int:
    exponent = (q - 1) // (2 * n)
    for g in range(2, q):
        psi = pow(g, exponent, q)
        # 2n is a power of two, so psi^n == -1 pins the order at exactly 2n.
        if pow(psi, n, q) == q - 1:
            return psi
    raise ParameterError(f"no primitive {2 * n}-th root of unity mod {q}")


def _montgomery_powers(base: int, n: int, q: int) -> np.ndarray:
    out = np.empty(n, dtype=np.uint64)
    x = (1 << 64) % q
    for j in range(n):
        out[j] = x
        x = x * base % q
    return out


class RingContext:
    """Immutable description of R_q plus its precomputed NTT tables."""

    def __init__(self, n: int, moduli: Iterable[int]):
        if not _is_power_of_two(n) or not MIN_DEGREE <= n <= MAX_DEGREE:
            raise ParameterError(f"degree n={n} must be a power of two in [{MIN_DEGREE}, {MAX_DEGREE}]")
        mods = tuple(Modulus(int(q), n) for q in moduli)
        if not 1 <= len(mods) <= MAX_CHAIN_LENGTH:
            raise ParameterError(f"modulus chain must hold 1..{MAX_CHAIN_LENGTH} primes")
        if len({m.value for m in mods}) != len(mods):
            raise ParameterError("modulus chain contains a repeated prime")
        self.n = n
        self.moduli: tuple[int, ...] = tuple(m.value for m in mods)
        self.roots: tuple[int, ...] = tuple(m.root for m in mods)
        self.Q = math.prod(self.moduli)
        self.key = (n, self.moduli)

        k = len(mods)
        self._q = np.array(self.moduli, dtype=np.uint64)
        self._q_col = self._q.reshape(k, 1)
        self._qinv = np.array([(-pow(q, -1, 1 << 64)) % (1 << 64) for q in self.moduli], dtype=np.uint64)
        rev = _bit_reverse_indices(n)
        tw = np.empty((k, n), dtype=np.uint64)
        itw = np.empty((k, n), dtype=np.uint64)
        scale_plain = np.empty(k, dtype=np.uint64)
        scale_mont = np.empty(k, dtype=np.uint64)
        for r, m in enumerate(mods):
            q, psi = m.value, m.root
            if pow(psi, 2 * n, q) != 1 or pow(psi, n, q) != q - 1:
                raise ParameterError(f"bad root of unity for modulus {q}")
            tw[r] = _montgomery_powers(psi, n, q)[rev]
            itw[r] = _montgomery_powers(pow(psi, -1, q), n, q)[rev]
            n_inv = pow(n, -1, q)
            r_mod = (1 << 64) % q
            scale_plain[r] = n_inv * r_mod % q
            scale_mont[r] = n_inv * r_mod % q * r_mod % q
        self._tw, self._itw = tw, itw
        self._scale_plain, self._scale_mont = scale_plain, scale_mont
        for arr in (self._q, self._q_col, self._qinv, tw, itw, scale_plain, scale_mont):
            arr.flags.writeable = False

        self._half_Q = self.Q // 2
        self._crt_weights = [(self.Q // q) * pow(self.Q // q, -1, q) for q in self.moduli]

    def __repr__(self) -> str:
        return f"RingContext(n={self.n}, moduli={self.moduli})"

    def __eq__(self, other: object) -> bool:
        return isinstance(other, RingContext) and other.key == self.key

    def __hash__(self) -> int:
        return hash(self.key)

    @property
    def chain_length(self) -> int:
        return len(self.moduli)

    # -- constructors ------------------------------------------------------

    def zero(self) -> RingElement:
        return RingElement(self, np.zeros((self.chain_length, self.n), dtype=np.uint64))

    def one(self) -> RingElement:
        return self.monomial(0)

    def monomial(self, j: int, c: int = 1) -> RingElement:
        """``c * X^j`` with the negacyclic sign applied for ``j >= n``."""
        coeffs = np.zeros(self.n, dtype=object)
        wraps, pos = divmod(j, self.n)
        coeffs[pos] = -c if wraps % 2 else c
        return self.from_signed(coeffs)

    def from_residues(self, residues: np.ndarray) -> RingElement:
        arr = np.array(residues, dtype=np.uint64)
        if arr.shape != (self.chain_length, self.n):
            raise ParameterError(f"residue array shape {arr.shape} != {(self.chain_length, self.n)}")
        if np.any(arr >= self._q_col):
            raise ParameterError("residue not reduced below its modulus")
        return RingElement(self, arr)

    def from_signed(self, values: Sequence[int] | np.ndarray) -> RingElement:
        """Reduce a length-n integer vector into every residue ring."""
        arr = np.asarray(values)
        if arr.shape != (self.n,):
            raise ParameterError(f"expected {self.n} coefficients, got shape {arr.shape}")
        out = np.empty((self.chain_length, self.n), dtype=np.uint64)
        if arr.dtype.kind == "i":
            wide = arr.astype(np.int64)
            for r, q in enumerate(self.moduli):
                out[r] = np.mod(wide, np.int64(q)).astype(np.uint64)
        else:
            ints = [int(v) for v in arr.tolist()]
            for r, q in enumerate(self.moduli):
                out[r] = np.array([v % q for v in ints], dtype=np.uint64)
        return RingElement(self, out)

    # -- NTT ---------------------------------------------------------------

    def ntt_forward(self, a: RingElement) -> np.ndarray:
        """Evaluation-form copy of ``a`` (bit-reversed order, per prime)."""
        _same_ctx(a, a, self)
        out = a.residues.copy()
        _ntt_forward(out, self._tw, self._q, self._qinv)
        return out

    def ntt_inverse(self, values: np.ndarray) -> RingElement:
        out = np.array(values, dtype=np.uint64)
        if out.shape != (self.chain_length, self.n):
            raise ParameterError(f"NTT array shape {out.shape} != {(self.chain_length, self.n)}")
        _ntt_inverse(out, self._itw, self._q, self._qinv, self._scale_plain)
        return RingElement(self, out)


class RingElement:
    """Immutable element of R_q. Arithmetic via operators or module functions."""

    __slots__ = ("ctx", "residues")

    def __init__(self, ctx: RingContext, residues: np.ndarray):
        residues.flags.writeable = False
        self.ctx = ctx
        self.residues = residues

    def __add__(self, other: RingElement) -> RingElement:
        return add(self, other)

    def __sub__(self, other: RingElement) -> RingElement:
        return sub(self, other)

    def __mul__(self, other: RingElement) -> RingElement:
        return mul(self, other)

    def __neg__(self) -> RingElement:
        return neg(self)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RingElement):
            return NotImplemented
        return self.ctx.key == other.ctx.key and np.array_equal(self.residues, other.residues)

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        return f"RingElement(n={self.ctx.n}, k={self.ctx.chain_length})"

    def is_zero(self) -> bool:
        return not self.residues.any()

    def to_signed(self, count: int | None = None) -> np.ndarray:
        return to_signed(self, count)


# ---------------------------------------------------------------------------
# Arithmetic
# ---------------------------------------------------------------------------


def _same_ctx(a: RingElement, b: RingElement, ctx: RingContext | None = None) -> RingContext:
    ref = ctx or a.ctx
    for e in (a, b):
        if e.ctx is not ref and e.ctx.key != ref.key:
            raise ContextMismatchError(f"element of {e.ctx!r} used with {ref!r}")
    return ref


def add(a: RingElement, b: RingElement) -> RingElement:
    ctx = _same_ctx(a, b)
    s = a.residues + b.residues
    # Unsigned wraparound makes s - q huge exactly when s < q.
    return RingElement(ctx, np.minimum(s, s - ctx._q_col))


def sub(a: RingElement, b: RingElement) -> RingElement:
    ctx = _same_ctx(a, b)
    d = a.residues - b.residues
    return RingElement(ctx, np.minimum(d, d + ctx._q_col))


def neg(a: RingElement) -> RingElement:
    x = a.residues
    return RingElement(a.ctx, np.where(x == 0, x, a.ctx._q_col - x))


def mul(a: RingElement, b: RingElement) -> RingElement:
    """Negacyclic product via forward NTT, pointwise product, inverse NTT."""
    ctx = _same_ctx(a, b)
    fa = ctx.ntt_forward(a)
    fb = fa if b is a else ctx.ntt_forward(b)
    prod = _pointwise_mont(fa, fb, ctx._q, ctx._qinv)
    # Pointwise Montgomery leaves a 2^-64 factor; the inverse scale restores it.
    _ntt_inverse(prod, ctx._itw, ctx._q, ctx._qinv, ctx._scale_mont)
    return RingElement(ctx, prod)


def sum_elements(elems: Iterable[RingElement]) -> RingElement:
    """Fold ``add`` over a nonempty iterable."""
    it = iter(elems)
    try:
        first = next(it)
    except StopIteration:
        raise ValueError("sum of an empty sequence of ring elements") from None
    ctx = first.ctx
    q = ctx._q_col
    total = first.residues.copy()
    for e in it:
        _same_ctx(first, e)
        reduce_add_inplace(total, e.residues, q)
    return RingElement(ctx, total)


def reduce_add_inplace(total: np.ndarray, x: np.ndarray, q_col: np.ndarray) -> None:
    """``total = (total + x) mod q`` in place; both operands already reduced."""
    total += x
    np.minimum(total, total - q_col, out=total)


def to_signed(a: RingElement, count: int | None = None) -> np.ndarray:
    """Centered lift into (-Q/2, Q/2], as Python ints.

    Only the first ``count`` coefficients are lifted when given.
    """
    ctx = a.ctx
    res = a.residues if count is None else a.residues[:, :count]
    if ctx.chain_length == 1:
        q = ctx.moduli[0]
        r = res[0].astype(object)
    else:
        q = ctx.Q
        r = sum(res[i].astype(object) * w for i, w in enumerate(ctx._crt_weights)) % q
    return np.where(r > ctx._half_Q, r - q, r).astype(object)


def from_signed(ctx: RingContext, values: Sequence[int] | np.ndarray) -> RingElement:
    return ctx.from_signed(values)


# ---------------------------------------------------------------------------
# Modulus-chain generation
# ---------------------------------------------------------------------------


@functools.lru_cache(maxsize=None)
def ctx_new(n: int, bit_budget: int) -> RingContext:
    """Context whose prime chain multiplies to at least ``2**bit_budget``.

    The budget is split evenly over ``k = ceil(bit_budget / 60)`` primes of
    ``b = ceil(bit_budget / k)`` bits target; each prime is the largest
    unused one that is 1 mod 2n and lies in ``[2^b, 2^(b+1))``.
    """
    if not _is_power_of_two(n) or not MIN_DEGREE <= n <= MAX_DEGREE:
        raise ParameterError(f"degree n={n} must be a power of two in [{MIN_DEGREE}, {MAX_DEGREE}]")
    if bit_budget < 1:
        raise ParameterError("bit_budget must be positive")
    k = -(-bit_budget // 60)
    if k > MAX_CHAIN_LENGTH:
        raise ParameterError(f"bit_budget={bit_budget} needs more than {MAX_CHAIN_LENGTH} primes")
    b = -(-bit_budget // k)
    if b + 1 >= MAX_MODULUS_BITS or (1 << b + 1) <= 2 * n:
        raise ParameterError(f"per-prime size 2^{b} incompatible with n={n}")
    primes: list[int] = []
    step = 2 * n
    p = (1 << b + 1) - step + 1
    lo = 1 << b
    while len(primes) < k:
        if p < lo:
            raise ParameterError(f"found only {len(primes)} primes = 1 mod {step} in [2^{b}, 2^{b + 1})")
        if is_prime(p):
            primes.append(p)
        p -= step
    return RingContext(n, primes)
