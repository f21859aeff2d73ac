"""One-shot aggregation protocol: setup, client round, server round.

A round costs each client exactly one upload ``(c0, mu_tilde)``. The
server sums all uploads; the pairwise masks cancel and the decryption
shares complete the decryption of the summed ``c0``.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

from .codec import ScaleParams, capacity, decode, encode
from .errors import ParameterError, ProtocolError
from .masking import EcdhKeyPair, client_mask, ecdh_keygen, mask_share, validate_public_key
from .mkckks import CommonRef, HeKeyPair, aggregate, crs_generate, encrypt, he_keygen, noise_budget_check, partial_share
from .ring import MAX_DEGREE, RingContext, RingElement, ctx_new
from .sampling import NoiseSpec, Prg, check_seed, derive_seed

MIN_PARAM_DEGREE = 1 << 10
MIN_DELTA_BITS = 20
DELTA_GUARD_BITS = 20

# Largest log2(Q) giving 128-bit security per ring degree (HE standard table).
SECURITY_MAX_LOGQ_128 = {1024: 27, 2048: 54, 4096: 109, 8192: 218, 16384: 438, 32768: 881}


def _next_pow2(x: int) -> int:
    return 1 << max(0, (x - 1).bit_length())


def select_degree(d: int, bit_budget: int) -> int:
    """Smallest power-of-two n with capacity >= d whose chain is 128-bit secure."""
    n = max(MIN_PARAM_DEGREE, _next_pow2(d))
    while n <= MAX_DEGREE:
        limit = SECURITY_MAX_LOGQ_128.get(n, math.inf)
        if math.log2(ctx_new(n, bit_budget).Q) <= limit and capacity(ctx_new(n, bit_budget)) >= d:
            return n
        n *= 2
    raise ParameterError(f"no ring degree up to {MAX_DEGREE} fits d={d} at bit_budget={bit_budget}")


@dataclass(frozen=True)
class ParamSet:
    """Public parameters of one deployment; the ring degree is derived."""

    d: int
    n_max: int
    delta_bits: int = 40
    bit_budget: int = 100
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    max_abs_input: float = 1.0
    security_level: int = 128
    ctx: RingContext = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.security_level != 128:
            raise ParameterError("only the 128-bit security table is available")
        if self.d < 1 or self.n_max < 2:
            raise ParameterError("need d >= 1 and n_max >= 2")
        ctx = ctx_new(select_degree(self.d, self.bit_budget), self.bit_budget)
        object.__setattr__(self, "ctx", ctx)
        log_q = math.log2(ctx.Q)
        if not MIN_DELTA_BITS <= self.delta_bits <= log_q - DELTA_GUARD_BITS:
            raise ParameterError(
                f"delta=2^{self.delta_bits} outside [2^{MIN_DELTA_BITS}, 2^(log2 Q - {DELTA_GUARD_BITS})]"
            )
        budget = noise_budget_check(self, self.n_max)
        if not budget.passed:
            raise ParameterError(f"noise budget fails for n_max={self.n_max}: {budget}")

    @property
    def n(self) -> int:
        return self.ctx.n

    @property
    def moduli(self) -> tuple[int, ...]:
        return self.ctx.moduli

    @property
    def Q(self) -> int:
        return self.ctx.Q

    @property
    def delta(self) -> int:
        return 1 << self.delta_bits

    @property
    def scale(self) -> ScaleParams:
        return ScaleParams(delta=self.delta, d=self.d, max_clients=self.n_max)


@dataclass(frozen=True)
class ClientKeyring:
    id: int
    he: HeKeyPair
    ecdh: EcdhKeyPair


@dataclass(frozen=True)
class DirectoryEntry:
    id: int
    b: RingElement
    ecdh_pk: bytes


@dataclass(frozen=True)
class KeyAnnouncement:
    """Setup uplink: a client's two public keys."""

    id: int
    b: RingElement
    ecdh_pk: bytes


@dataclass(frozen=True)
class PublicDirectory:
    params: ParamSet
    crs_seed: bytes
    entries: tuple[DirectoryEntry, ...]

    def __post_init__(self) -> None:
        ids = [e.id for e in self.entries]
        if ids != list(range(len(ids))):
            raise ProtocolError(f"directory ids must be 0..N-1 in order, got {ids[:8]}...")
        if len(ids) < 2:
            raise ProtocolError("directory needs at least two clients")

    @property
    def n_clients(self) -> int:
        return len(self.entries)

    @cached_property
    def crs(self) -> CommonRef:
        return crs_generate(self.params.ctx, self.crs_seed)

    @cached_property
    def ecdh_pks(self) -> Mapping[int, bytes]:
        return {e.id: e.ecdh_pk for e in self.entries}


@dataclass(frozen=True)
class ClientUpload:
    round: int
    id: int
    c0: RingElement
    mu_tilde: RingElement


@dataclass(frozen=True, eq=False)
class AggregateResult:
    round: int
    sum_vector: np.ndarray
    recovered_poly: RingElement

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, AggregateResult):
            return NotImplemented
        return (
            self.round == other.round
            and np.array_equal(self.sum_vector, other.sum_vector)
            and self.recovered_poly == other.recovered_poly
        )


def setup(params: ParamSet, n_clients: int, master_seed: bytes) -> tuple[PublicDirectory, list[ClientKeyring]]:
    """Generate every client's keys and the public directory, deterministically."""
    master_seed = check_seed(master_seed)
    if n_clients < 2:
        raise ProtocolError("the protocol needs at least two clients")
    if n_clients > params.n_max:
        raise ProtocolError(f"{n_clients} clients exceed declared n_max={params.n_max}")
    crs_seed = derive_seed(master_seed, "crs")
    crs = crs_generate(params.ctx, crs_seed)
    keyrings = []
    for i in range(n_clients):
        rng = Prg(derive_seed(master_seed, "keygen", i))
        keyrings.append(ClientKeyring(id=i, he=he_keygen(crs, params.noise, rng), ecdh=ecdh_keygen(rng)))
    directory = build_directory(params, crs_seed, [announce(kr) for kr in keyrings])
    return directory, keyrings


def announce(kr: ClientKeyring) -> KeyAnnouncement:
    return KeyAnnouncement(id=kr.id, b=kr.he.b, ecdh_pk=kr.ecdh.pk)


def build_directory(params: ParamSet, crs_seed: bytes, announcements: Sequence[KeyAnnouncement]) -> PublicDirectory:
    """Server side of setup: collect announcements into the directory."""
    by_id = {}
    for a in announcements:
        if a.id in by_id:
            raise ProtocolError(f"duplicate key announcement from client {a.id}")
        validate_public_key(a.ecdh_pk)
        by_id[a.id] = a
    entries = tuple(DirectoryEntry(id=i, b=by_id[i].b, ecdh_pk=by_id[i].ecdh_pk) for i in sorted(by_id))
    return PublicDirectory(params=params, crs_seed=check_seed(crs_seed), entries=entries)


def client_round(
    kr: ClientKeyring,
    directory: PublicDirectory,
    x,
    round_no: int,
    rng: Prg | None = None,
    timings: dict | None = None,
) -> ClientUpload:
    """Encode, encrypt, build the share, mask it. Returns the sole upload.

    ``timings``, when given, receives per-phase wall time in milliseconds.
    """
    params = directory.params
    ctx = params.ctx
    if not 0 <= kr.id < directory.n_clients:
        raise ProtocolError(f"client {kr.id} is not in the directory")
    if round_no < 1:
        raise ProtocolError("rounds are numbered from 1")
    rng = rng or Prg.from_entropy()
    clock = time.perf_counter
    t0 = clock()
    m = encode(x, params.scale, ctx)
    t1 = clock()
    ct = encrypt((kr.he.b, directory.crs.a), m, params.noise, rng)
    t2 = clock()
    mu = partial_share(ct, kr.he, params.noise, rng)
    t3 = clock()
    r = client_mask(kr.id, kr.ecdh, directory.ecdh_pks, round_no, ctx, directory.n_clients)
    mu_tilde = mask_share(mu, r)
    t4 = clock()
    if timings is not None:
        timings.update(
            encode=(t1 - t0) * 1e3,
            encrypt=(t2 - t1) * 1e3,
            share=(t3 - t2) * 1e3,
            mask=(t4 - t3) * 1e3,
            total=(t4 - t0) * 1e3,
        )
    return ClientUpload(round=round_no, id=kr.id, c0=ct.c0, mu_tilde=mu_tilde)


def server_round(
    uploads: Sequence[ClientUpload],
    directory: PublicDirectory,
    timings: dict | None = None,
) -> AggregateResult:
    """Sum every upload and decode. Any missing or duplicate id is fatal."""
    params = directory.params
    if not uploads:
        raise ProtocolError("no uploads received")
    rounds = {u.round for u in uploads}
    if len(rounds) != 1:
        raise ProtocolError(f"uploads span rounds {sorted(rounds)}")
    ids = [u.id for u in uploads]
    if len(set(ids)) != len(ids):
        raise ProtocolError("duplicate upload id")
    expected = set(range(directory.n_clients))
    if set(ids) != expected:
        missing = sorted(expected - set(ids))
        extra = sorted(set(ids) - expected)
        raise ProtocolError(f"incomplete cohort: missing {missing}, unknown {extra}; masks would not cancel")
    clock = time.perf_counter
    t0 = clock()
    poly = aggregate([u.c0 for u in uploads], [u.mu_tilde for u in uploads])
    t1 = clock()
    vec = decode(poly, params.scale)
    t2 = clock()
    if timings is not None:
        timings.update(aggregate=(t1 - t0) * 1e3, decode=(t2 - t1) * 1e3, total=(t2 - t0) * 1e3)
    return AggregateResult(round=rounds.pop(), sum_vector=vec, recovered_poly=poly)
