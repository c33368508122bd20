"""Online maximum-likelihood erasure decoding of Toeplitz codes.

At every step the decoder looks at the window of instants from the oldest
one with an undetermined erasure up to the present. The contribution of all
messages already decoded is removed from the received bits, which leaves a
codeword of the same time-invariant code started at the window's first
instant. Erased positions are then split into an older part, whose values
must be unique, and a newer part that may stay ambiguous:

    [H11   0 ] [z1]   [s1]
    [H21  H22] [z2] = [s2]

``z1`` is recovered from ``[H11; N H21] z1 = [s1; N s2]`` where ``N`` is a
left annihilator of ``H22``, whenever that stacked matrix has full column
rank. The split keeping ``z2`` as small as possible is chosen.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from . import gf2
from .channel import ERASED
from .code import ToeplitzCode
from .errors import InternalCorruption, MemoryOverflow


@dataclass
class DecodeOutcome:
    t: int
    newly_resolved: list[tuple[int, np.ndarray, np.ndarray]] = field(default_factory=list)
    earliest_unresolved_delay: int = 0
    message_estimates: list[tuple[int, np.ndarray]] = field(default_factory=list)
    xor_ops: int = 0


@dataclass
class Cutoff:
    sent_at: int
    cutoff: int
    effective_from: int


def _stacked_columns(code: ToeplitzCode) -> list[int]:
    """Column ``b`` of the block column ``[H_1; H_2; ...; H_D]`` packed as an int."""
    D, nbar, n = code.H_blocks.shape
    stacked = code.H_blocks.reshape(D * nbar, n)
    return gf2.pack_rows(np.ascontiguousarray(stacked.T))


class Decoder:
    """Decoder state for one stream; single owner, mutated by :meth:`decode_step`."""

    def __init__(self, code: ToeplitzCode, trace: io.TextIOBase | None = None, values: bool = True):
        self.code = code
        self.values = values
        self.t = 0
        self.earliest_pending = 1
        self.received: list[np.ndarray] = []
        self.codewords: list[np.ndarray] = []  # fully known c_tau for tau < earliest_pending
        self.messages: list[np.ndarray] = []  # b_hat for tau < earliest_pending
        self.cutoffs: list[tuple[int, int]] = []  # (effective_from, cutoff)
        self.trace = trace
        self._offsets: dict[int, np.ndarray] = {}
        self._cols = _stacked_columns(code)
        self._G = code.G_blocks.astype(np.int64)
        G1 = code.G_blocks[0]
        # left inverse of G_1 for message recovery
        self._G1_left = np.stack(
            [gf2.solve(G1.T, e).x for e in np.eye(code.k, dtype=np.uint8)]
        ).astype(np.int64)
        self._H_cache = np.zeros((0, 0), dtype=np.uint8)

    # -- bookkeeping -----------------------------------------------------
    def cut(self, tau: int) -> int:
        """Oldest message index still feeding the encoder output at time ``tau``."""
        c = 1
        for frm, cutoff in self.cutoffs:
            if frm <= tau:
                c = max(c, cutoff)
        return c

    def _contribution(self, tau: int, js: range) -> np.ndarray:
        lo = max(js.start, self.cut(tau))
        if lo >= js.stop:
            return np.zeros(self.code.n, dtype=np.int64)
        lags = tau - np.arange(lo, js.stop)
        if lags.max() >= self.code.depth:
            raise MemoryOverflow(f"time {tau} needs generator block {lags.max() + 1}")
        B = np.array(self.messages[lo - 1:js.stop - 1])
        return np.einsum("jnk,jk->n", self._G[lags], B) % 2

    def _parity(self, w: int) -> np.ndarray:
        nbar, n = self.code.nbar, self.code.n
        if self._H_cache.shape[0] < w * nbar:
            size = min(self.code.depth, max(w, 2 * self._H_cache.shape[0] // max(nbar, 1), 8))
            self._H_cache = self.code.parity_matrix(size)
        return self._H_cache[: w * nbar, : w * n]

    # -- main step -------------------------------------------------------
    def decode_step(self, z) -> DecodeOutcome:
        code = self.code
        n, nbar = code.n, code.nbar
        z = np.asarray(z, dtype=np.uint8).reshape(-1)
        if len(z) != n:
            raise ValueError(f"expected {n} channel symbols, got {len(z)}")
        self.t += 1
        t = self.t
        self.received.append(z)
        if self.values:
            self._offsets[t] = self._contribution(t, range(1, self.earliest_pending))

        p = self.earliest_pending
        w = t - p + 1
        if w > code.depth:
            raise MemoryOverflow(f"decoding window of {w} instants exceeds code depth {code.depth}")
        rowmask = (1 << (w * nbar)) - 1
        erased: list[np.ndarray] = []
        syndrome = 0
        residual: list[np.ndarray] = []
        for a in range(w):
            tau = p + a
            zt = self.received[tau - 1]
            er = np.flatnonzero(zt == ERASED)
            erased.append(er)
            if self.values:
                r = np.where(zt == ERASED, 0, (zt.astype(np.int64) + self._offsets[tau]) % 2)
                residual.append(r)
                for b in np.flatnonzero(r):
                    syndrome ^= self._cols[b] << (a * nbar)
        syndrome &= rowmask

        # rank of erased columns, adding the newest instants first
        basis = gf2.IncrementalBasis()
        rank_suffix = [0]
        for dprime in range(1, w + 1):
            a = w - dprime
            for b in erased[a]:
                basis.add((self._cols[b] << (a * nbar)) & rowmask)
            rank_suffix.append(basis.rank)
        total = rank_suffix[w]
        counts = [len(e) for e in erased]
        older = np.concatenate([[0], np.cumsum(counts)])  # erasures in offsets < a
        keep = w
        for dprime in range(0, w + 1):
            if total == rank_suffix[dprime] + older[w - dprime]:
                keep = dprime
                break

        out = DecodeOutcome(t, xor_ops=basis.xor_count)
        n_old = w - keep  # instants p .. p+n_old-1 become fully known
        if n_old > 0 and not self.values:
            self.earliest_pending = p + n_old
        elif n_old > 0:
            values = self._solve_older(w, n_old, erased, syndrome)
            pos = 0
            for a in range(n_old):
                r = residual[a].copy()
                er = erased[a]
                r[er] = values[pos:pos + len(er)]
                pos += len(er)
                c = ((r + self._offsets[p + a]) % 2).astype(np.uint8)
                zt = self.received[p + a - 1]
                mask = zt != ERASED
                if np.any(c[mask] != zt[mask]):
                    raise InternalCorruption(f"resolved codeword at {p + a} contradicts channel output")
                self.codewords.append(c)
                if len(er):
                    out.newly_resolved.append((p + a, er, c[er]))
            for a in range(n_old):
                tau = p + a
                b = self._recover_message(tau)
                out.message_estimates.append((tau, b))
            self.earliest_pending = p + n_old
            for tau in range(p, self.earliest_pending):
                self._offsets.pop(tau, None)
        out.earliest_unresolved_delay = t - self.earliest_pending + 1 if self.earliest_pending <= t else 0
        if self.trace is not None:
            n_er = int(np.sum(z == ERASED))
            self.trace.write(f"{t},{n_er},{out.earliest_unresolved_delay},{len(self.codewords) * n}\n")
        return out

    def _solve_older(self, w, n_old, erased, syndrome) -> np.ndarray:
        """Solve for the erasures of the oldest ``n_old`` window instants."""
        n, nbar = self.code.n, self.code.nbar
        if not sum(len(erased[a]) for a in range(n_old)):
            return np.zeros(0, dtype=np.uint8)
        Hw = self._parity(w)
        col_idx = np.concatenate([a * n + erased[a] for a in range(w)]).astype(int)
        HE = Hw[:, col_idx]
        s = gf2.unpack_rows([syndrome], w * nbar)[0]
        e1 = sum(len(erased[a]) for a in range(n_old))
        split = n_old * nbar
        H11 = HE[:split, :e1]
        H21 = HE[split:, :e1]
        H22 = HE[split:, e1:]
        N = gf2.left_annihilator(H22) if H22.shape[0] else np.zeros((0, 0), dtype=np.uint8)
        if N.shape[0]:
            lower = gf2.matmul(N, H21)
            rhs_low = gf2.matmul(N, s[split:].reshape(-1, 1)).reshape(-1)
        else:
            lower = np.zeros((0, e1), dtype=np.uint8)
            rhs_low = np.zeros(0, dtype=np.uint8)
        M = np.vstack([H11, lower]) if e1 else np.zeros((split + len(rhs_low), 0), dtype=np.uint8)
        rhs = np.concatenate([s[:split], rhs_low])
        if e1 == 0:
            return np.zeros(0, dtype=np.uint8)
        res = gf2.solve(M, rhs)
        if res.kind == gf2.INCONSISTENT:
            raise InternalCorruption("erasure system is inconsistent")
        if not res.unique:
            raise InternalCorruption("rank test and elimination disagree")
        return res.x

    def _recover_message(self, tau: int) -> np.ndarray:
        """Invert ``G_1`` after removing the contribution of earlier messages."""
        resid = (self.codewords[tau - 1].astype(np.int64) + self._offsets[tau]) % 2
        b = (self._G1_left @ resid) % 2
        if np.any((self.code.G_blocks[0].astype(np.int64) @ b) % 2 != resid):
            raise InternalCorruption(f"codeword at {tau} is not consistent with earlier messages")
        b = b.astype(np.uint8)
        self.messages.append(b)
        for later, x in self._offsets.items():
            if later > tau and tau >= self.cut(later):
                lag = later - tau
                x += self._G[lag] @ b
                x %= 2
        return b

    # -- feedback ----------------------------------------------------------
    def feedback_report(self, period: int) -> Cutoff | None:
        """At multiples of ``period`` (= 2T) announce a truncation cutoff.

        The cutoff is delivered to the encoder ``T`` steps later; the decoder
        records the same schedule so both sides agree on the generator.
        """
        if period <= 0 or self.t == 0 or self.t % period:
            return None
        cutoff = self.earliest_pending - 1
        if cutoff < 1:
            return None
        rep = Cutoff(self.t, cutoff, self.t + period // 2)
        self.cutoffs.append((rep.effective_from, cutoff))
        return rep


DecoderState = Decoder


def decode_step(state: Decoder, z) -> DecodeOutcome:
    return state.decode_step(z)


def resolve_messages(state: Decoder) -> list[np.ndarray]:
    return list(state.messages)


def feedback_report(state: Decoder, period: int) -> Cutoff | None:
    return state.feedback_report(period)
