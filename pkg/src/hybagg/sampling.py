"""Seeded randomness: uniform ring elements and rounded Gaussians.

Every sampler draws from :class:`Prg`, a ChaCha20 keystream keyed by a
32-byte seed, so a run is reproducible from its seeds alone.
"""

from __future__ import annotations

import hashlib
import math
import os
import struct
from dataclasses import dataclass

import numpy as np
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms

from .errors import ParameterError
from .ring import RingContext, RingElement

SEED_BYTES = 32
TAIL_CUT = 6.0
SMUDGE_FLOOR_BITS = 10

Seed = bytes


def check_seed(seed: bytes) -> bytes:
    if not isinstance(seed, (bytes, bytearray)) or len(seed) != SEED_BYTES:
        raise ParameterError(f"seed must be exactly {SEED_BYTES} bytes")
    return bytes(seed)


def derive_seed(parent: bytes, *labels: bytes | str | int) -> bytes:
    """Domain-separated child seed: SHA-256 over length-prefixed labels."""
    h = hashlib.sha256(b"hybagg/seed\x00")
    h.update(check_seed(parent))
    for label in labels:
        if isinstance(label, int):
            part = label.to_bytes(8, "little", signed=True)
        elif isinstance(label, str):
            part = label.encode()
        else:
            part = bytes(label)
        h.update(struct.pack("<I", len(part)))
        h.update(part)
    return h.digest()


def seed_from_int(value: int) -> bytes:
    """Expand a small integer (e.g. a CLI ``--seed``) into a 32-byte seed."""
    return hashlib.sha256(b"hybagg/int-seed\x00" + value.to_bytes(16, "little", signed=True)).digest()


class Prg:
    """ChaCha20 keystream exposed as a random source.

    ``stream`` selects the 96-bit nonce, giving independent streams under
    one key. Reads consume the keystream in order, so the same sequence
    of calls always returns the same values.
    """

    def __init__(self, seed: bytes, stream: int = 0):
        nonce = (0).to_bytes(4, "little") + stream.to_bytes(12, "little")
        cipher = Cipher(algorithms.ChaCha20(check_seed(seed), nonce), mode=None)
        self._enc = cipher.encryptor()

    @classmethod
    def from_entropy(cls) -> Prg:
        return cls(os.urandom(SEED_BYTES))

    def read(self, nbytes: int) -> bytes:
        return self._enc.update(bytes(nbytes))

    def uint64(self, count: int) -> np.ndarray:
        return np.frombuffer(self.read(8 * count), dtype="<u8").astype(np.uint64)

    def uniform_mod(self, q: int, count: int, out: np.ndarray | None = None) -> np.ndarray:
        """``count`` uniform residues in [0, q) by masked rejection sampling."""
        bits = q.bit_length()
        mask = np.uint64((1 << bits) - 1)
        bound = np.uint64(q)
        accept_rate = q / (1 << bits)
        if out is None:
            out = np.empty(count, dtype=np.uint64)
        filled = 0
        while filled < count:
            need = count - filled
            w = np.frombuffer(self.read(8 * (int(need / accept_rate) + 16)), dtype="<u8") & mask
            w = w[w < bound]
            take = min(need, w.size)
            out[filled : filled + take] = w[:take]
            filled += take
        return out

    def unit_floats(self, count: int) -> np.ndarray:
        """Uniform doubles in (0, 1] with 53 random bits each."""
        w = self.uint64(count) >> np.uint64(11)
        return (w.astype(np.float64) + 1.0) * 2.0**-53

    def normal(self, count: int) -> np.ndarray:
        """Standard normal deviates (Box-Muller)."""
        half = (count + 1) // 2
        u1 = self.unit_floats(half)
        u2 = self.unit_floats(half)
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        return np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:count]


@dataclass(frozen=True)
class NoiseSpec:
    """Widths of the secret, error and smudging distributions."""

    sigma_err: float = 3.2
    sigma_secret: float = 3.2
    sigma_smudge: float = 2.0**SMUDGE_FLOOR_BITS * 3.2

    def __post_init__(self) -> None:
        if min(self.sigma_err, self.sigma_secret, self.sigma_smudge) <= 0:
            raise ParameterError("all noise widths must be positive")
        floor = 2.0**SMUDGE_FLOOR_BITS * self.sigma_err
        if self.sigma_smudge < floor:
            raise ParameterError(
                f"sigma_smudge={self.sigma_smudge} below floor 2^{SMUDGE_FLOOR_BITS}*sigma_err={floor}"
            )

    @classmethod
    def with_smudge_bits(cls, bits: float, sigma_err: float = 3.2, sigma_secret: float = 3.2) -> NoiseSpec:
        return cls(sigma_err=sigma_err, sigma_secret=sigma_secret, sigma_smudge=2.0**bits * sigma_err)

    @property
    def smudge_bits(self) -> float:
        return math.log2(self.sigma_smudge / self.sigma_err)


def _ctx_fingerprint(ctx: RingContext) -> bytes:
    return struct.pack(f"<I{ctx.chain_length}Q", ctx.n, *ctx.moduli)


def uniform_from_key(ctx: RingContext, key: bytes) -> RingElement:
    """Uniform element of R_q expanded from a 32-byte key, primes in chain order."""
    prg = Prg(key)
    out = np.empty((ctx.chain_length, ctx.n), dtype=np.uint64)
    for r, q in enumerate(ctx.moduli):
        prg.uniform_mod(q, ctx.n, out=out[r])
    return RingElement(ctx, out)


def sample_uniform(ctx: RingContext, seed: bytes, domain_tag: bytes) -> RingElement:
    """Deterministic uniform element for ``(seed, domain_tag, ctx)``."""
    h = hashlib.sha256(b"hybagg/uniform\x00")
    h.update(struct.pack("<I", len(domain_tag)) + domain_tag)
    h.update(_ctx_fingerprint(ctx))
    h.update(check_seed(seed))
    return uniform_from_key(ctx, h.digest())


def gaussian_ints(sigma: float, count: int, rng: Prg) -> np.ndarray:
    """Rounded Gaussian integers, resampled wherever |x| > 6 sigma."""
    if sigma == 0:
        return np.zeros(count, dtype=np.int64)
    if sigma < 0:
        raise ParameterError("sigma must be positive")
    cut = math.floor(TAIL_CUT * sigma)
    out = np.rint(rng.normal(count) * sigma)
    bad = np.flatnonzero(np.abs(out) > cut)
    while bad.size:
        out[bad] = np.rint(rng.normal(bad.size) * sigma)
        bad = bad[np.abs(out[bad]) > cut]
    return out.astype(np.int64)


def sample_gaussian(ctx: RingContext, sigma: float, rng: Prg) -> RingElement:
    return ctx.from_signed(gaussian_ints(sigma, ctx.n, rng))


def sample_smudging(ctx: RingContext, spec: NoiseSpec, rng: Prg) -> RingElement:
    return sample_gaussian(ctx, spec.sigma_smudge, rng)
