"""One-shot secure aggregation: multi-key CKKS plus pairwise ECDH masks."""

from __future__ import annotations

from .errors import (
    ContextMismatchError,
    EncodeError,
    HybAggError,
    KeyExchangeError,
    MaskError,
    ParameterError,
    ProtocolError,
    WireFormatError,
)
from .protocol import (
    AggregateResult,
    ClientKeyring,
    ClientUpload,
    ParamSet,
    PublicDirectory,
    client_round,
    server_round,
    setup,
)
from .ring import RingContext, RingElement, ctx_new
from .sampling import NoiseSpec, Prg
from .simulator import Cohort
from .wire import payload_accounting

__version__ = "0.1.0"

__all__ = [
    "AggregateResult",
    "ClientKeyring",
    "ClientUpload",
    "Cohort",
    "ContextMismatchError",
    "EncodeError",
    "HybAggError",
    "KeyExchangeError",
    "MaskError",
    "NoiseSpec",
    "ParamSet",
    "ParameterError",
    "Prg",
    "ProtocolError",
    "PublicDirectory",
    "RingContext",
    "RingElement",
    "WireFormatError",
    "client_round",
    "ctx_new",
    "payload_accounting",
    "server_round",
    "setup",
]
