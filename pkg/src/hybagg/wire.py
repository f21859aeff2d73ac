"""Byte-exact message encoding.

Every message starts with the same 19-byte little-endian header::

    magic "HAGG" | version u8 | msg-type u8 | round u32 | id u32 | n u32 | chain-length u8

Ring elements follow as ``chain-length`` arrays of ``n`` u64 residues,
one array per modulus, coefficients in ascending degree order.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import WireFormatError
from .protocol import (
    AggregateResult,
    ClientUpload,
    DirectoryEntry,
    KeyAnnouncement,
    ParamSet,
    PublicDirectory,
)
from .ring import RingContext, RingElement
from .sampling import NoiseSpec

MAGIC = b"HAGG"
VERSION = 1
MSG_UPLOAD = 1
MSG_DIRECTORY = 2
MSG_RESULT = 3
MSG_KEYS = 4

SERVER_ID = 0xFFFFFFFF
RESIDUE_BYTES = 8
PLAINTEXT_WORD_BYTES = 8
KEY_BYTES = 32
SEED_BYTES = 32

_HEADER = struct.Struct("<4sBBIIIB")
HEADER_BYTES = _HEADER.size
_PARAMS = struct.Struct("<IIBHdddd")
_ENTRY_HEAD = struct.Struct("<I")


@dataclass(frozen=True)
class Header:
    msg_type: int
    round: int
    id: int
    n: int
    chain_length: int


def _pack_header(msg_type: int, round_no: int, ident: int, n: int, k: int) -> bytes:
    return _HEADER.pack(MAGIC, VERSION, msg_type, round_no, ident, n, k)


def parse_header(data: bytes, expect_type: int | None = None) -> Header:
    if len(data) < HEADER_BYTES:
        raise WireFormatError(f"truncated header: {len(data)} < {HEADER_BYTES} bytes")
    magic, version, msg_type, round_no, ident, n, k = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise WireFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise WireFormatError(f"unsupported version {version}")
    if expect_type is not None and msg_type != expect_type:
        raise WireFormatError(f"expected message type {expect_type}, got {msg_type}")
    return Header(msg_type, round_no, ident, n, k)


def poly_bytes(ctx: RingContext) -> int:
    return ctx.chain_length * ctx.n * RESIDUE_BYTES


def _poly_to_bytes(e: RingElement) -> bytes:
    return e.residues.astype("<u8", copy=False).tobytes()


def _poly_from(data: bytes, offset: int, ctx: RingContext) -> tuple[RingElement, int]:
    size = poly_bytes(ctx)
    if len(data) < offset + size:
        raise WireFormatError("truncated ring element")
    arr = np.frombuffer(data, dtype="<u8", count=ctx.chain_length * ctx.n, offset=offset)
    arr = arr.astype(np.uint64).reshape(ctx.chain_length, ctx.n)
    if np.any(arr >= ctx._q_col):
        raise WireFormatError("non-canonical residue (>= modulus)")
    return RingElement(ctx, arr), offset + size


def _check_ring(h: Header, ctx: RingContext) -> None:
    if h.n != ctx.n or h.chain_length != ctx.chain_length:
        raise WireFormatError(f"ring shape (n={h.n}, k={h.chain_length}) does not match {ctx!r}")


def _check_end(data: bytes, offset: int) -> None:
    if offset != len(data):
        raise WireFormatError(f"{len(data) - offset} trailing bytes")


# ---------------------------------------------------------------------------
# ClientUpload
# ---------------------------------------------------------------------------


def serialize_upload(u: ClientUpload) -> bytes:
    ctx = u.c0.ctx
    head = _pack_header(MSG_UPLOAD, u.round, u.id, ctx.n, ctx.chain_length)
    return head + _poly_to_bytes(u.c0) + _poly_to_bytes(u.mu_tilde)


def deserialize_upload(data: bytes, ctx: RingContext) -> ClientUpload:
    h = parse_header(data, MSG_UPLOAD)
    _check_ring(h, ctx)
    c0, off = _poly_from(data, HEADER_BYTES, ctx)
    mu, off = _poly_from(data, off, ctx)
    _check_end(data, off)
    return ClientUpload(round=h.round, id=h.id, c0=c0, mu_tilde=mu)


def upload_size(ctx: RingContext) -> int:
    return HEADER_BYTES + 2 * poly_bytes(ctx)


# ---------------------------------------------------------------------------
# KeyAnnouncement
# ---------------------------------------------------------------------------


def serialize_keys(a: KeyAnnouncement) -> bytes:
    ctx = a.b.ctx
    return _pack_header(MSG_KEYS, 0, a.id, ctx.n, ctx.chain_length) + a.ecdh_pk + _poly_to_bytes(a.b)


def deserialize_keys(data: bytes, ctx: RingContext) -> KeyAnnouncement:
    h = parse_header(data, MSG_KEYS)
    _check_ring(h, ctx)
    off = HEADER_BYTES
    if len(data) < off + KEY_BYTES:
        raise WireFormatError("truncated ECDH key")
    pk = bytes(data[off : off + KEY_BYTES])
    b, off = _poly_from(data, off + KEY_BYTES, ctx)
    _check_end(data, off)
    return KeyAnnouncement(id=h.id, b=b, ecdh_pk=pk)


# ---------------------------------------------------------------------------
# PublicDirectory
# ---------------------------------------------------------------------------


def serialize_directory(directory: PublicDirectory) -> bytes:
    p = directory.params
    ctx = p.ctx
    noise = p.noise
    out = [
        _pack_header(MSG_DIRECTORY, 0, directory.n_clients, ctx.n, ctx.chain_length),
        _PARAMS.pack(
            p.d, p.n_max, p.delta_bits, p.bit_budget,
            noise.sigma_err, noise.sigma_secret, noise.sigma_smudge, p.max_abs_input,
        ),
        struct.pack(f"<{ctx.chain_length}Q", *ctx.moduli),
        directory.crs_seed,
    ]
    for e in directory.entries:
        out += [_ENTRY_HEAD.pack(e.id), e.ecdh_pk, _poly_to_bytes(e.b)]
    return b"".join(out)


def deserialize_directory(data: bytes) -> PublicDirectory:
    h = parse_header(data, MSG_DIRECTORY)
    off = HEADER_BYTES
    if len(data) < off + _PARAMS.size + 8 * h.chain_length + SEED_BYTES:
        raise WireFormatError("truncated parameter block")
    d, n_max, delta_bits, bit_budget, s_err, s_sec, s_smudge, max_abs = _PARAMS.unpack_from(data, off)
    off += _PARAMS.size
    moduli = struct.unpack_from(f"<{h.chain_length}Q", data, off)
    off += 8 * h.chain_length
    try:
        params = ParamSet(
            d=d,
            n_max=n_max,
            delta_bits=delta_bits,
            bit_budget=bit_budget,
            noise=NoiseSpec(sigma_err=s_err, sigma_secret=s_sec, sigma_smudge=s_smudge),
            max_abs_input=max_abs,
        )
    except ValueError as exc:
        raise WireFormatError(f"invalid parameter block: {exc}") from exc
    ctx = params.ctx
    if ctx.moduli != tuple(moduli):
        raise WireFormatError("modulus chain does not match the declared bit budget")
    _check_ring(h, ctx)
    crs_seed = bytes(data[off : off + SEED_BYTES])
    off += SEED_BYTES
    entries = []
    for _ in range(h.id):
        if len(data) < off + _ENTRY_HEAD.size + KEY_BYTES:
            raise WireFormatError("truncated directory entry")
        (ident,) = _ENTRY_HEAD.unpack_from(data, off)
        off += _ENTRY_HEAD.size
        pk = bytes(data[off : off + KEY_BYTES])
        b, off = _poly_from(data, off + KEY_BYTES, ctx)
        entries.append(DirectoryEntry(id=ident, b=b, ecdh_pk=pk))
    _check_end(data, off)
    try:
        return PublicDirectory(params=params, crs_seed=crs_seed, entries=tuple(entries))
    except Exception as exc:
        raise WireFormatError(f"invalid directory: {exc}") from exc


# ---------------------------------------------------------------------------
# AggregateResult (downlink)
# ---------------------------------------------------------------------------


def serialize_result(res: AggregateResult) -> bytes:
    vec = np.asarray(res.sum_vector, dtype="<f8")
    return _pack_header(MSG_RESULT, res.round, SERVER_ID, vec.size, 0) + vec.tobytes()


def deserialize_result_vector(data: bytes) -> tuple[int, np.ndarray]:
    """Round number and summed vector. The polynomial is not transmitted."""
    h = parse_header(data, MSG_RESULT)
    body = len(data) - HEADER_BYTES
    if body != h.n * PLAINTEXT_WORD_BYTES:
        raise WireFormatError(f"result body is {body} bytes, header declares {h.n} doubles")
    return h.round, np.frombuffer(data, dtype="<f8", offset=HEADER_BYTES).astype(np.float64)


# ---------------------------------------------------------------------------
# Accounting
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CommReport:
    n: int
    d: int
    clients: int
    client_uplink_bytes: int
    server_inbound_bytes: int
    downlink_bytes: int
    setup_uplink_bytes: int
    setup_downlink_bytes: int
    plaintext_bytes: int
    expansion_factor: float


def payload_accounting(params: ParamSet, clients: int) -> CommReport:
    """Predicted per-message byte counts from the wire layout alone."""
    ctx = params.ctx
    uplink = upload_size(ctx)
    plaintext = params.d * PLAINTEXT_WORD_BYTES
    setup_up = HEADER_BYTES + KEY_BYTES + poly_bytes(ctx)
    setup_down = (
        HEADER_BYTES + _PARAMS.size + 8 * ctx.chain_length + SEED_BYTES
        + clients * (_ENTRY_HEAD.size + KEY_BYTES + poly_bytes(ctx))
    )
    return CommReport(
        n=ctx.n,
        d=params.d,
        clients=clients,
        client_uplink_bytes=uplink,
        server_inbound_bytes=clients * uplink,
        downlink_bytes=HEADER_BYTES + plaintext,
        setup_uplink_bytes=setup_up,
        setup_downlink_bytes=setup_down,
        plaintext_bytes=plaintext,
        expansion_factor=uplink / plaintext,
    )
