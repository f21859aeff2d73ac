"""In-process cohort: every message crosses a byte boundary and is traced."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

from . import protocol, wire
from .protocol import (
    AggregateResult,
    ClientKeyring,
    ClientUpload,
    ParamSet,
    PublicDirectory,
    announce,
    build_directory,
    client_round,
    server_round,
)
from .sampling import Prg, check_seed, derive_seed

SERVER = -1


@dataclass(frozen=True)
class Message:
    sender: int
    receiver: int
    kind: str
    round: int
    nbytes: int


@dataclass
class RoundRecord:
    result: AggregateResult
    uploads: list[ClientUpload]
    client_timings: list[dict]
    server_timings: dict
    upload_bytes: list[int]


@dataclass
class Cohort:
    """Runs setup once, then any number of aggregation rounds.

    Keyrings live here only because the whole cohort shares one process;
    the server-side path touches nothing but deserialized messages.
    """

    params: ParamSet
    n_clients: int
    master_seed: bytes
    trace: list[Message] = field(default_factory=list)
    directory: PublicDirectory | None = field(default=None, init=False)
    keyrings: list[ClientKeyring] = field(default_factory=list, init=False)

    def __post_init__(self) -> None:
        check_seed(self.master_seed)

    def setup(self) -> PublicDirectory:
        directory, keyrings = protocol.setup(self.params, self.n_clients, self.master_seed)
        ctx = self.params.ctx
        received = []
        for kr in keyrings:
            blob = wire.serialize_keys(announce(kr))
            self.trace.append(Message(kr.id, SERVER, "keys", 0, len(blob)))
            received.append(wire.deserialize_keys(blob, ctx))
        rebuilt = build_directory(self.params, directory.crs_seed, received)
        blob = wire.serialize_directory(rebuilt)
        for kr in keyrings:
            self.trace.append(Message(SERVER, kr.id, "directory", 0, len(blob)))
        self.directory = wire.deserialize_directory(blob)
        self.keyrings = keyrings
        return self.directory

    def run_round(self, xs: Sequence, round_no: int, workers: int = 1) -> RoundRecord:
        """One aggregation round.

        ``workers > 1`` runs the clients on a thread pool. Each client owns
        its keyring and generator, so nothing mutable is shared, but the
        per-phase timings then overlap and are not meaningful.
        """
        if self.directory is None:
            raise RuntimeError("call setup() before running rounds")
        if len(xs) != self.n_clients:
            raise ValueError(f"need one input vector per client ({self.n_clients}), got {len(xs)}")
        ctx = self.params.ctx

        def one(kr: ClientKeyring, x) -> tuple[bytes, dict]:
            rng = Prg(derive_seed(self.master_seed, "round", round_no, kr.id))
            t: dict = {}
            u = client_round(kr, self.directory, x, round_no, rng=rng, timings=t)
            return wire.serialize_upload(u), t

        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                done = list(pool.map(one, self.keyrings, xs))
        else:
            done = [one(kr, x) for kr, x in zip(self.keyrings, xs)]

        uploads, timings, sizes = [], [], []
        for kr, (blob, t) in zip(self.keyrings, done):
            self.trace.append(Message(kr.id, SERVER, "upload", round_no, len(blob)))
            uploads.append(wire.deserialize_upload(blob, ctx))
            timings.append(t)
            sizes.append(len(blob))
        server_t: dict = {}
        result = server_round(uploads, self.directory, timings=server_t)
        down = wire.serialize_result(result)
        for kr in self.keyrings:
            self.trace.append(Message(SERVER, kr.id, "result", round_no, len(down)))
        return RoundRecord(result, uploads, timings, server_t, sizes)

    def messages(self, round_no: int, kind: str | None = None) -> list[Message]:
        return [m for m in self.trace if m.round == round_no and (kind is None or m.kind == kind)]
