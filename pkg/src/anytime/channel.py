"""Memoryless erasure channels and binary-input channel parameters."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import UnsupportedOperation

# erased symbols are marked with this value in uint8 output streams
ERASED = 2


@dataclass(frozen=True)
class ChannelSpec:
    kind: str  # "bec" or "bsc"
    epsilon: float
    packet_len: int = 1

    def __post_init__(self):
        if self.kind not in ("bec", "bsc"):
            raise ValueError(f"unknown channel kind {self.kind!r}")
        if not (0.0 <= self.epsilon < 1.0):
            raise ValueError(f"epsilon must lie in [0, 1), got {self.epsilon}")
        if self.packet_len < 1:
            raise ValueError("packet length must be >= 1")

    @classmethod
    def parse(cls, text: str) -> "ChannelSpec":
        """Parse ``bec:0.3``, ``bsc:0.05`` or ``bec:0.3:4`` (packet length 4)."""
        parts = text.lower().split(":")
        if len(parts) not in (2, 3):
            raise ValueError(f"channel must look like 'bec:0.3', got {text!r}")
        L = int(parts[2]) if len(parts) == 3 else 1
        return cls(parts[0], float(parts[1]), L)

    def __str__(self):
        base = f"{self.kind}:{self.epsilon:g}"
        return base if self.packet_len == 1 else f"{base}:{self.packet_len}"


def transmit(spec: ChannelSpec, c, rng: np.random.Generator) -> np.ndarray:
    """Pass ``c`` through the erasure channel.

    Returns a uint8 array of the same length where erased positions hold
    :data:`ERASED`. In packet mode each run of ``packet_len`` consecutive bits
    is erased all-or-none.
    """
    if spec.kind != "bec":
        raise UnsupportedOperation("only the erasure channel can be simulated")
    c = np.asarray(c, dtype=np.uint8)
    L = spec.packet_len
    if len(c) % L:
        raise ValueError(f"packet length {L} does not divide block length {len(c)}")
    lost = rng.random(len(c) // L) < spec.epsilon
    out = c.copy()
    out[np.repeat(lost, L)] = ERASED
    return out


def bhattacharyya(spec: ChannelSpec) -> float:
    if spec.kind == "bec":
        return spec.epsilon
    e = spec.epsilon
    return 2.0 * math.sqrt(e * (1.0 - e))


def capacity(spec: ChannelSpec) -> float:
    from .thresholds import binary_entropy

    if spec.kind == "bec":
        return 1.0 - spec.epsilon
    return 1.0 - binary_entropy(spec.epsilon)
