"""Time-invariant (Toeplitz) causal linear codes over GF(2).

The parity-check matrix is block lower-triangular with ``H[i, j] = H_{i-j+1}``;
the generator blocks ``G_1..G_D`` are derived from it so that the block
Toeplitz generator is orthogonal to the parity check.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import gf2
from .errors import BudgetExceeded, MemoryOverflow

ENUMERATION_BUDGET = 22


@dataclass(frozen=True, eq=False)
class ToeplitzCode:
    n: int
    k: int
    p: float
    seed: int | None
    H_blocks: np.ndarray  # (D, nbar, n)
    G_blocks: np.ndarray  # (D, n, k)

    @property
    def nbar(self) -> int:
        return self.n - self.k

    @property
    def depth(self) -> int:
        return self.H_blocks.shape[0]

    @property
    def rate(self) -> float:
        return self.k / self.n

    def __eq__(self, other):
        if not isinstance(other, ToeplitzCode):
            return NotImplemented
        return (
            (self.n, self.k, self.p, self.seed) == (other.n, other.k, other.p, other.seed)
            and np.array_equal(self.H_blocks, other.H_blocks)
        )

    def parity_matrix(self, t: int) -> np.ndarray:
        """The ``nbar*t x n*t`` leading principal minor of the parity check."""
        return _block_toeplitz(self.H_blocks, t)

    def generator_matrix(self, t: int) -> np.ndarray:
        """Block lower-triangular map from ``b_1..b_t`` to ``c_1..c_t``."""
        return _block_toeplitz(self.G_blocks, t)


def _block_toeplitz(blocks: np.ndarray, t: int) -> np.ndarray:
    D, r, c = blocks.shape
    if t > D:
        raise MemoryOverflow(f"requested {t} blocks but the code stores only {D}")
    out = np.zeros((r * t, c * t), dtype=np.uint8)
    for i in range(t):
        for j in range(i + 1):
            out[i * r:(i + 1) * r, j * c:(j + 1) * c] = blocks[i - j]
    return out


def first_block(n: int, k: int) -> np.ndarray:
    nbar = n - k
    return np.hstack([np.eye(nbar, dtype=np.uint8), np.zeros((nbar, k), dtype=np.uint8)])


def _check_dims(n, k, depth):
    if not (0 < k < n):
        raise ValueError(f"need 0 < k < n, got n={n}, k={k}")
    if depth < 1:
        raise ValueError(f"depth must be >= 1, got {depth}")


def sample_parity_blocks(n, k, p, depth, rng, fixed_first=True) -> np.ndarray:
    """Draw ``H_1..H_D`` from the Bernoulli(p) Toeplitz ensemble.

    With ``fixed_first`` the first block is ``[I | 0]``; otherwise it is drawn
    like the others (used for ensemble averages over all blocks).
    """
    _check_dims(n, k, depth)
    nbar = n - k
    H = (rng.random((depth, nbar, n)) < p).astype(np.uint8)
    if fixed_first:
        H[0] = first_block(n, k)
    return H


def sample_toeplitz(n: int, k: int, p: float = 0.5, depth: int = 64, seed: int | None = None) -> ToeplitzCode:
    if not (0.0 < p < 1.0):
        raise ValueError(f"need 0 < p < 1, got {p}")
    rng = np.random.default_rng(seed)
    H = sample_parity_blocks(n, k, p, depth, rng)
    return ToeplitzCode(n, k, p, seed, H, derive_generator(H))


def from_parity_blocks(H_blocks, p: float = 0.5, seed: int | None = None) -> ToeplitzCode:
    H = np.asarray(H_blocks, dtype=np.uint8)
    nbar, n = H.shape[1:]
    return ToeplitzCode(n, n - nbar, p, seed, H, derive_generator(H))


def derive_generator(H_blocks) -> np.ndarray:
    """Generator blocks orthogonal to the Toeplitz parity check.

    ``G_1`` spans the null space of ``H_1``; each later block solves
    ``H_1 G_tau = sum_{i>=2} H_i G_{tau-i+1}`` with free variables zeroed.
    """
    H = np.asarray(H_blocks, dtype=np.uint8)
    D, nbar, n = H.shape
    k = n - nbar
    H1 = H[0]
    if gf2.rank(H1) != nbar:
        raise ValueError("H_1 must have full row rank")
    G = np.zeros((D, n, k), dtype=np.uint8)
    G[0] = gf2.null_space(H1).T
    # canonical solve is linear in the right-hand side; tabulate it once
    right_inv = np.stack([gf2.solve(H1, e).x for e in np.eye(nbar, dtype=np.uint8)], axis=1)
    Hi = H.astype(np.int64)
    Gi = G.astype(np.int64)
    for tau in range(1, D):
        rhs = np.einsum("ijk,ikl->jl", Hi[1:tau + 1], Gi[tau - 1::-1]) % 2
        Gi[tau] = (right_inv.astype(np.int64) @ rhs) % 2
    return Gi.astype(np.uint8)


def orthogonality_residual(code: ToeplitzCode) -> int:
    """Number of nonzero entries in ``sum_i H_i G_{tau-i+1}`` over all tau."""
    H = code.H_blocks.astype(np.int64)
    G = code.G_blocks.astype(np.int64)
    bad = 0
    for tau in range(code.depth):
        acc = np.einsum("ijk,ikl->jl", H[:tau + 1], G[tau::-1]) % 2
        bad += int(acc.sum())
    return bad


class Encoder:
    """Streaming encoder ``c_t = sum_j G_{t-j+1} b_j`` over retained messages.

    Times are 1-based. Messages older than the current truncation cutoff no
    longer contribute to outputs.
    """

    def __init__(self, code: ToeplitzCode):
        self.code = code
        self.t = 0
        self.cutoff = 1
        self._messages: list[np.ndarray] = []
        self._G = code.G_blocks.astype(np.int64)

    def encode_step(self, b) -> np.ndarray:
        b = np.asarray(b, dtype=np.int64).reshape(-1) % 2
        if len(b) != self.code.k:
            raise ValueError(f"message must have {self.code.k} bits")
        self.t += 1
        self._messages.append(b)
        span = self.t - self.cutoff + 1
        if span > self.code.depth:
            raise MemoryOverflow(
                f"time {self.t} needs {span} generator blocks; code depth is {self.code.depth}"
            )
        B = np.array(self._messages[self.cutoff - 1:])
        lags = np.arange(span - 1, -1, -1)
        return (np.einsum("jnk,jk->n", self._G[lags], B) % 2).astype(np.uint8)

    def truncate(self, cutoff: int) -> "Encoder":
        if cutoff > self.t + 1:
            raise ValueError(f"cutoff {cutoff} is in the future (t={self.t})")
        self.cutoff = max(self.cutoff, cutoff)
        return self


def encode_step(code: ToeplitzCode, state: Encoder, b) -> np.ndarray:
    return state.encode_step(b)


def truncate_memory(state: Encoder, cutoff_time: int) -> Encoder:
    return state.truncate(cutoff_time)


def encode_stream(code: ToeplitzCode, messages) -> np.ndarray:
    enc = Encoder(code)
    return np.array([enc.encode_step(b) for b in messages])


@dataclass
class DistanceReport:
    d: int
    w_min: int
    counts: dict[int, int] = field(default_factory=dict)

    def N(self, w: int) -> int:
        return self.counts.get(w, 0)


def _pack_columns(M: np.ndarray) -> np.ndarray:
    """Columns of ``M`` as rows of little-endian uint64 words."""
    rows, cols = M.shape
    words = max(1, (rows + 63) // 64)
    padded = np.zeros((words * 64, cols), dtype=np.uint8)
    padded[:rows] = M
    out = np.zeros((cols, words), dtype=np.uint64)
    for w in range(words):
        chunk = padded[w * 64:(w + 1) * 64].astype(np.uint64)
        out[:, w] = (chunk << np.arange(64, dtype=np.uint64)[:, None]).sum(axis=0, dtype=np.uint64)
    return out


def _span_table(cols: np.ndarray) -> np.ndarray:
    """All 2^m XOR combinations of the given packed columns (index = mask)."""
    table = np.zeros((1, cols.shape[1]), dtype=np.uint64)
    for c in cols:
        table = np.concatenate([table, table ^ c])
    return table


def weight_distribution(code: ToeplitzCode, d: int, offset: int = 0) -> DistanceReport:
    """Exact weight distribution of the delay-d codebook ``C_{d,d}``.

    ``offset`` shifts the window to start at logical time ``offset + 1``;
    by time invariance the result does not depend on it.
    """
    k, n = code.k, code.n
    if k * d > ENUMERATION_BUDGET:
        raise BudgetExceeded(f"k*d = {k * d} exceeds the enumeration budget {ENUMERATION_BUDGET}")
    t = offset + d
    Gfull = code.generator_matrix(t)[offset * n:, offset * k:]
    cols = _pack_columns(Gfull)
    # message bits: first k (b_1, must be nonzero) then the rest
    head = _span_table(cols[:k])[1:]
    rest = cols[k:]
    half = len(rest) // 2
    lo = _span_table(rest[:half])
    hi = _span_table(rest[half:])
    counts = np.zeros(n * d + 1, dtype=np.int64)
    for h in head:
        base = lo ^ h
        for row in hi:
            words = base ^ row
            wts = np.bitwise_count(words).sum(axis=1)
            counts += np.bincount(wts, minlength=n * d + 1)
    nz = np.nonzero(counts)[0]
    return DistanceReport(d, int(nz[0]), {int(w): int(counts[w]) for w in nz})


def brute_force_weights(code: ToeplitzCode, d: int) -> dict[int, int]:
    """Reference enumeration with explicit matrix products (small cases only)."""
    k, n = code.k, code.n
    Gfull = code.generator_matrix(d).astype(np.int64)
    counts: dict[int, int] = {}
    for m in range(1 << (k * d)):
        bits = np.array([(m >> i) & 1 for i in range(k * d)], dtype=np.int64)
        if not bits[:k].any():
            continue
        w = int(((Gfull @ bits) % 2).sum())
        counts[w] = counts.get(w, 0) + 1
    return counts


def check_anytime_distance(code: ToeplitzCode, alpha: float, theta_w: float, d_o: int, d_max: int) -> bool:
    """True iff ``w_min(d) >= alpha*n*d`` and ``N_w <= 2^(theta_w*w)`` for all d in [d_o, d_max]."""
    if code.k * d_max > ENUMERATION_BUDGET:
        raise BudgetExceeded(f"k*d_max = {code.k * d_max} exceeds the enumeration budget")
    for d in range(d_o, d_max + 1):
        rep = weight_distribution(code, d)
        if rep.w_min < alpha * code.n * d:
            return False
        if any(cnt > 2.0 ** (theta_w * w) for w, cnt in rep.counts.items()):
            return False
    return True


def lift_packets(code: ToeplitzCode, L: int) -> ToeplitzCode:
    """Replicate every bit of the code into an ``L x L`` identity block.

    The lifted code maps ``k`` packets of ``L`` bits to ``n`` packets; bit
    ``i*L + l`` is lane ``l`` of packet ``i``.
    """
    eye = np.eye(L, dtype=np.uint8)
    H = np.stack([np.kron(h, eye) for h in code.H_blocks])
    G = np.stack([np.kron(g, eye) for g in code.G_blocks])
    return ToeplitzCode(code.n * L, code.k * L, code.p, code.seed, H, G)


def _row_hex(row: np.ndarray) -> str:
    width = (len(row) + 3) // 4
    return format(int("".join(map(str, row.tolist())), 2), f"0{width}x")


def dumps(code: ToeplitzCode) -> str:
    seed = "none" if code.seed is None else str(code.seed)
    lines = [f"{code.n} {code.k} {code.p!r} {code.depth} {seed}"]
    for block in code.H_blocks:
        lines.extend(_row_hex(r) for r in block)
    return "\n".join(lines) + "\n"


def loads(text: str) -> ToeplitzCode:
    lines = [ln.strip() for ln in text.strip().splitlines() if ln.strip()]
    n, k, p, depth, seed = lines[0].split()
    n, k, depth = int(n), int(k), int(depth)
    nbar = n - k
    body = lines[1:]
    if len(body) != depth * nbar:
        raise ValueError(f"expected {depth * nbar} hex rows, found {len(body)}")
    H = np.zeros((depth, nbar, n), dtype=np.uint8)
    for idx, h in enumerate(body):
        bits = format(int(h, 16), f"0{n}b")
        if len(bits) != n:
            raise ValueError(f"row {idx} does not fit in {n} bits")
        H[idx // nbar, idx % nbar] = [int(c) for c in bits]
    return from_parity_blocks(H, float(p), None if seed == "none" else int(seed))


def save(code: ToeplitzCode, path) -> None:
    Path(path).write_text(dumps(code))


def load(path) -> ToeplitzCode:
    return loads(Path(path).read_text())


def expected_weight_count(n: int, k: int, d: int, w: int, fixed_first: bool = True) -> float:
    """Ensemble mean of ``N_{w,d}`` for Bernoulli(1/2) blocks.

    Every word with nonzero first block satisfies each random block row with
    probability 1/2. With ``fixed_first`` the first block is ``[I | 0]``, so
    ``c_1`` must lie in its null space and only ``d - 1`` block rows are random.
    """
    nbar = n - k
    if not fixed_first:
        return (math.comb(n * d, w) - math.comb(n * (d - 1), w)) * 2.0 ** (-nbar * d)
    total = sum(math.comb(k, j) * math.comb(n * (d - 1), w - j) for j in range(1, min(k, w) + 1))
    return total * 2.0 ** (-nbar * (d - 1))
