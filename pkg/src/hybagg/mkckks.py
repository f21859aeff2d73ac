"""Additive multi-key CKKS over a shared uniform element ``a``.

Each client holds ``s`` and publishes ``b = -s*a + e``. A ciphertext of
``m`` is ``(v*b + m + e0, v*a + e1)``; the partial decryption share
``c1*s + e*`` completes decryption of ``c0``. Summing every client's
``c0`` and share yields the plaintext sum plus small noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .errors import ParameterError
from .ring import RingContext, RingElement, sum_elements, to_signed
from .sampling import TAIL_CUT, NoiseSpec, Prg, check_seed, sample_gaussian, sample_smudging, sample_uniform

CRS_TAG = b"CRS"

# Multiplier on the sqrt(n) growth of a product of two bounded Gaussian polynomials.
PRODUCT_HEURISTIC = 1.0


@dataclass(frozen=True)
class CommonRef:
    a: RingElement
    seed: bytes

    @property
    def ctx(self) -> RingContext:
        return self.a.ctx


def crs_generate(ctx: RingContext, seed: bytes) -> CommonRef:
    return CommonRef(sample_uniform(ctx, check_seed(seed), CRS_TAG), bytes(seed))


@dataclass(frozen=True)
class HeKeyPair:
    s: RingElement
    b: RingElement


@dataclass(frozen=True)
class Ciphertext:
    c0: RingElement
    c1: RingElement

    def __post_init__(self) -> None:
        if self.c0.ctx.key != self.c1.ctx.key:
            raise ParameterError("ciphertext halves live in different rings")


@dataclass(frozen=True)
class PartialShare:
    mu: RingElement


def he_keygen(crs: CommonRef, spec: NoiseSpec, rng: Prg) -> HeKeyPair:
    ctx = crs.ctx
    s = sample_gaussian(ctx, spec.sigma_secret, rng)
    e = sample_gaussian(ctx, spec.sigma_err, rng)
    return HeKeyPair(s=s, b=-(s * crs.a) + e)


def verify_keypair(kp: HeKeyPair, crs: CommonRef, spec: NoiseSpec) -> bool:
    """Test harness check that ``b + s*a`` is a tail-cut error polynomial."""
    residual = to_signed(kp.b + kp.s * crs.a)
    return max(abs(int(v)) for v in residual) <= TAIL_CUT * spec.sigma_err


def encrypt(pk: tuple[RingElement, RingElement], m: RingElement, spec: NoiseSpec, rng: Prg) -> Ciphertext:
    """Encrypt plaintext ``m`` under ``pk = (b, a)``."""
    b, a = pk
    ctx = m.ctx
    v = sample_gaussian(ctx, spec.sigma_secret, rng)
    e0 = sample_gaussian(ctx, spec.sigma_err, rng)
    e1 = sample_gaussian(ctx, spec.sigma_err, rng)
    return Ciphertext(c0=v * b + m + e0, c1=v * a + e1)


def reference_decrypt(ct: Ciphertext, s: RingElement) -> RingElement:
    """``c0 + c1*s``. Only for tests and adversary experiments."""
    return ct.c0 + ct.c1 * s


def partial_share(ct: Ciphertext, kp: HeKeyPair, spec: NoiseSpec, rng: Prg) -> PartialShare:
    return PartialShare(ct.c1 * kp.s + sample_smudging(ct.c1.ctx, spec, rng))


def aggregate(c0_list: Sequence[RingElement], share_list: Sequence[RingElement | PartialShare]) -> RingElement:
    """``sum(c0) + sum(shares)``, left undecoded."""
    if not c0_list:
        raise ValueError("aggregate needs at least one ciphertext")
    if len(c0_list) != len(share_list):
        raise ValueError(f"{len(c0_list)} ciphertexts but {len(share_list)} shares")
    shares = [s.mu if isinstance(s, PartialShare) else s for s in share_list]
    return sum_elements(c0_list) + sum_elements(shares)


# ---------------------------------------------------------------------------
# Noise accounting
# ---------------------------------------------------------------------------


def encryption_noise_bound(n: int, spec: NoiseSpec) -> float:
    """Bound on ``v*e + e0 + e1*s`` for one fresh ciphertext."""
    product = TAIL_CUT * spec.sigma_secret * TAIL_CUT * spec.sigma_err * math.sqrt(n) * PRODUCT_HEURISTIC
    return TAIL_CUT * spec.sigma_err + 2 * product


@dataclass(frozen=True)
class NoiseBudget:
    clients: int
    b_enc: float
    b_smudge: float
    b_total: float
    delta: int
    Q: int
    max_abs_input: float
    noise_ok: bool
    capacity_ok: bool

    @property
    def passed(self) -> bool:
        return self.noise_ok and self.capacity_ok

    @property
    def tolerance(self) -> float:
        """Worst-case decode error of an N-client sum, floor rounding included."""
        return (self.b_total + self.clients) / self.delta


def noise_budget_check(params, clients: int, max_abs_input: float | None = None) -> NoiseBudget:
    """Worst-case noise of an N-client aggregate against the decoding limits.

    ``params`` needs ``n``, ``Q``, ``delta`` and ``noise`` attributes; a
    :class:`~hybagg.protocol.ParamSet` qualifies.
    """
    if clients < 1:
        raise ParameterError("client count must be positive")
    if max_abs_input is None:
        max_abs_input = getattr(params, "max_abs_input", 1.0)
    spec: NoiseSpec = params.noise
    b_enc = encryption_noise_bound(params.n, spec)
    b_smudge = TAIL_CUT * spec.sigma_smudge
    b_total = clients * (b_enc + b_smudge)
    delta = int(params.delta)
    return NoiseBudget(
        clients=clients,
        b_enc=b_enc,
        b_smudge=b_smudge,
        b_total=b_total,
        delta=delta,
        Q=int(params.Q),
        max_abs_input=max_abs_input,
        noise_ok=b_total < delta / 2,
        capacity_ok=clients * delta * max_abs_input < params.Q / 2,
    )
