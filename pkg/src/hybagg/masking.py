"""Pairwise additive masks from X25519 key agreement.

Clients ``i < j`` share ``K_ij`` and expand the same polynomial ``p_ij``
from it each round. Client ``i`` adds ``p_ij`` for every ``j > i`` and
subtracts ``p_ji`` for every ``j < i``, so the masks of a complete cohort
sum to zero.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping

from cryptography.hazmat.primitives.asymmetric.x25519 import X25519PrivateKey, X25519PublicKey
from cryptography.hazmat.primitives.hashes import SHA256
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from .errors import ContextMismatchError, KeyExchangeError, MaskError
from .mkckks import PartialShare
from .ring import RingContext, RingElement, reduce_add_inplace
from .sampling import Prg, uniform_from_key

KEY_BYTES = 32
FIELD_PRIME = 2**255 - 19
PAIR_INFO = b"HYBAGG-PAIR"
MASK_TAG = b"HYBAGG-MASK"


def clamp_scalar(raw: bytes) -> bytes:
    """X25519 scalar clamping: clear the cofactor bits, pin bit 254."""
    k = bytearray(raw)
    k[0] &= 248
    k[31] &= 127
    k[31] |= 64
    return bytes(k)


@dataclass(frozen=True)
class EcdhKeyPair:
    sk: bytes
    pk: bytes

    @cached_property
    def _private(self) -> X25519PrivateKey:
        return X25519PrivateKey.from_private_bytes(self.sk)

    @property
    def scalar(self) -> int:
        return int.from_bytes(self.sk, "little")


def ecdh_keygen(rng: Prg) -> EcdhKeyPair:
    sk = clamp_scalar(rng.read(KEY_BYTES))
    pk = X25519PrivateKey.from_private_bytes(sk).public_key().public_bytes_raw()
    return EcdhKeyPair(sk=sk, pk=pk)


def public_from_secret(sk: bytes) -> bytes:
    return X25519PrivateKey.from_private_bytes(sk).public_key().public_bytes_raw()


def validate_public_key(pk: bytes) -> bytes:
    """Accept only the canonical 32-byte little-endian u-coordinate."""
    if not isinstance(pk, (bytes, bytearray)) or len(pk) != KEY_BYTES:
        raise KeyExchangeError(f"public key must be {KEY_BYTES} bytes")
    if int.from_bytes(pk, "little") >= FIELD_PRIME:
        raise KeyExchangeError("non-canonical public key encoding")
    return bytes(pk)


@dataclass(frozen=True)
class PairSecret:
    k: bytes
    pair: tuple[int, int]


def _sorted_pair(i: int, j: int) -> tuple[int, int]:
    if i == j:
        raise KeyExchangeError(f"pair ids must differ, got ({i}, {j})")
    if i < 0 or j < 0:
        raise KeyExchangeError("client ids must be non-negative")
    return (i, j) if i < j else (j, i)


def derive_pair_secret(my: EcdhKeyPair, their_pk: bytes, pair_ids: tuple[int, int]) -> PairSecret:
    """ECDH then HKDF-SHA256 bound to the sorted pair ids."""
    pair = _sorted_pair(*pair_ids)
    peer = X25519PublicKey.from_public_bytes(validate_public_key(their_pk))
    try:
        raw = my._private.exchange(peer)
    except ValueError as exc:
        raise KeyExchangeError(f"unusable peer public key: {exc}") from exc
    info = PAIR_INFO + struct.pack("<II", *pair)
    k = HKDF(algorithm=SHA256(), length=KEY_BYTES, salt=None, info=info).derive(raw)
    return PairSecret(k=k, pair=pair)


@dataclass(frozen=True)
class MaskPoly:
    p: RingElement
    pair: tuple[int, int]
    round: int


def mask_seed(ks: PairSecret, round_no: int) -> bytes:
    return hashlib.sha256(ks.k + struct.pack("<Q", round_no) + MASK_TAG).digest()


def expand_mask(ks: PairSecret, round_no: int, ctx: RingContext) -> MaskPoly:
    return MaskPoly(p=uniform_from_key(ctx, mask_seed(ks, round_no)), pair=ks.pair, round=round_no)


def net_mask(i: int, masks: Iterable[MaskPoly], n_clients: int) -> RingElement:
    """``r_i = sum_{j>i} p_ij - sum_{j<i} p_ji`` over the full cohort."""
    plus = minus = None
    ctx = None
    round_no = None
    seen: set[int] = set()
    for mp in masks:
        a, b = mp.pair
        if i not in mp.pair:
            raise MaskError(f"mask for pair {mp.pair} does not involve client {i}")
        other = b if a == i else a
        if not 0 <= other < n_clients:
            raise MaskError(f"peer {other} outside cohort of {n_clients}")
        if other in seen:
            raise MaskError(f"duplicate mask for pair {mp.pair}")
        if round_no is None:
            round_no, ctx = mp.round, mp.p.ctx
        elif mp.round != round_no:
            raise MaskError(f"mixed rounds {round_no} and {mp.round}")
        elif mp.p.ctx.key != ctx.key:
            raise ContextMismatchError("masks from different ring contexts")
        seen.add(other)
        res = mp.p.residues
        if other > i:
            if plus is None:
                plus = res.copy()
            else:
                reduce_add_inplace(plus, res, ctx._q_col)
        elif minus is None:
            minus = res.copy()
        else:
            reduce_add_inplace(minus, res, ctx._q_col)
    missing = sorted(set(range(n_clients)) - {i} - seen)
    if missing:
        raise MaskError(f"client {i} lacks masks for peers {missing}")
    if ctx is None:
        raise MaskError("cohort needs at least two clients")
    zero = ctx.zero()
    pos = RingElement(ctx, plus) if plus is not None else zero
    negp = RingElement(ctx, minus) if minus is not None else zero
    return pos - negp


def client_mask(
    i: int,
    my: EcdhKeyPair,
    peer_pks: Mapping[int, bytes],
    round_no: int,
    ctx: RingContext,
    n_clients: int,
) -> RingElement:
    """Derive, expand and combine every pairwise mask for client ``i``."""
    masks = (
        expand_mask(derive_pair_secret(my, pk, (i, j)), round_no, ctx)
        for j, pk in peer_pks.items()
        if j != i
    )
    return net_mask(i, masks, n_clients)


def mask_share(mu: PartialShare | RingElement, r: RingElement) -> RingElement:
    mu_poly = mu.mu if isinstance(mu, PartialShare) else mu
    return mu_poly + r
