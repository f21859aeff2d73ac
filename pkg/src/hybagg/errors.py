"""Exception hierarchy shared by every hybagg module."""

from __future__ import annotations


class HybAggError(Exception):
    """Base class for all library errors."""


class ParameterError(HybAggError, ValueError):
    """Invalid or unattainable parameterization."""


class ContextMismatchError(HybAggError, ValueError):
    """Ring elements from different ring contexts were combined."""


class EncodeError(HybAggError, ValueError):
    """A real vector cannot be packed into a plaintext polynomial."""


class KeyExchangeError(HybAggError, ValueError):
    """Malformed or unusable ECDH public key."""


class MaskError(HybAggError, ValueError):
    """Pairwise mask set is incomplete or inconsistent."""


class ProtocolError(HybAggError):
    """A protocol message sequence violates the round contract."""


class WireFormatError(HybAggError, ValueError):
    """Bytes do not parse as a well-formed protocol message."""
