import io
import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from anytime import code as cd
from anytime.channel import ERASED
from anytime.decoder import Decoder
from anytime.errors import InternalCorruption, MemoryOverflow


def run(code, msgs, erase_mask, values=True, period=0):
    """Feed a stream through encoder, erasure pattern and decoder."""
    enc = cd.Encoder(code)
    dec = Decoder(code, values=values)
    outs, pending = [], []
    for t, b in enumerate(msgs, start=1):
        for frm, cut in list(pending):
            if frm == t:
                enc.truncate(cut)
                pending.remove((frm, cut))
        c = enc.encode_step(b)
        z = np.where(erase_mask[t - 1], ERASED, c).astype(np.uint8)
        outs.append((c, dec.decode_step(z)))
        rep = dec.feedback_report(period) if period else None
        if rep is not None:
            pending.append((rep.effective_from, rep.cutoff))
    return dec, outs


def oracle_first_undetermined(code, msgs, erase_mask, t):
    """Earliest instant whose codeword is not pinned down by the unerased bits."""
    k = code.k
    G = code.generator_matrix(t).astype(int)
    truth = (G @ msgs[:t].reshape(-1)) % 2
    seen = ~erase_mask[:t].reshape(-1)
    consistent = []
    for m in itertools.product([0, 1], repeat=k * t):
        c = (G @ np.array(m)) % 2
        if np.array_equal(c[seen], truth[seen]):
            consistent.append(c)
    C = np.array(consistent).reshape(len(consistent), t, code.n)
    agree = (C == C[0]).all(axis=(0, 2))
    bad = np.flatnonzero(~agree)
    return int(bad[0]) + 1 if len(bad) else t + 1


@pytest.mark.parametrize("n,k,seed", [(2, 1, 0), (2, 1, 1), (3, 1, 2), (4, 2, 3)])
def test_resolution_matches_exhaustive_oracle(n, k, seed):
    rng = np.random.default_rng(seed)
    code = cd.sample_toeplitz(n, k, depth=12, seed=seed)
    horizon = 10 if k == 1 else 6
    for _ in range(15):
        msgs = rng.integers(0, 2, (horizon, k))
        mask = rng.random((horizon, n)) < 0.45
        dec, outs = run(code, msgs, mask)
        enc = cd.Encoder(code)
        for t, (c, out) in enumerate(outs, start=1):
            first = oracle_first_undetermined(code, msgs, mask, t)
            assert out.earliest_unresolved_delay == (t - first + 1 if first <= t else 0)
        assert len(dec.messages) == dec.earliest_pending - 1
        for tau, b in enumerate(dec.messages, start=1):
            assert np.array_equal(b, msgs[tau - 1])
            assert np.array_equal(dec.codewords[tau - 1], enc.encode_step(msgs[tau - 1]))


@given(st.integers(0, 2**31), st.floats(0.0, 0.7))
def test_never_wrong_and_write_once(seed, eps):
    rng = np.random.default_rng(seed)
    code = cd.sample_toeplitz(6, 2, depth=40, seed=seed)
    msgs = rng.integers(0, 2, (30, 2))
    mask = rng.random((30, 6)) < eps
    dec, outs = run(code, msgs, mask)
    seen = set()
    for c_t, out in outs:
        for tau, b in out.message_estimates:
            assert tau not in seen
            seen.add(tau)
            assert np.array_equal(b, msgs[tau - 1])
        for tau, pos, vals in out.newly_resolved:
            assert np.array_equal(vals, cd.encode_stream(code, msgs[:tau])[-1][pos])
    # the resolved prefix only grows
    delays = [out.earliest_unresolved_delay for _, out in outs]
    fronts = [t - d for t, d in enumerate(delays, start=1)]
    assert all(a <= b for a, b in zip(fronts, fronts[1:]))


@given(st.integers(0, 2**31))
def test_rank_only_mode_agrees(seed):
    rng = np.random.default_rng(seed)
    code = cd.sample_toeplitz(5, 2, depth=40, seed=seed)
    msgs = rng.integers(0, 2, (25, 2))
    mask = rng.random((25, 5)) < 0.4
    _, full = run(code, msgs, mask)
    _, fast = run(code, np.zeros_like(msgs), mask, values=False)
    assert [o.earliest_unresolved_delay for _, o in full] == [o.earliest_unresolved_delay for _, o in fast]


def test_no_erasures_decodes_immediately():
    code = cd.sample_toeplitz(4, 2, depth=10, seed=0)
    msgs = np.random.default_rng(0).integers(0, 2, (8, 2))
    _, outs = run(code, msgs, np.zeros((8, 4), bool))
    assert all(o.earliest_unresolved_delay == 0 for _, o in outs)


def test_xor_work_is_cubic_in_window():
    code = cd.sample_toeplitz(6, 2, depth=64, seed=4)
    rng = np.random.default_rng(0)
    mask = np.zeros((60, 6), bool)
    mask[:40] = rng.random((40, 6)) < 0.6
    _, outs = run(code, rng.integers(0, 2, (60, 2)), mask)
    prev = 0
    for _, o in outs:
        w = prev + 1  # window examined during this step
        assert o.xor_ops <= 6 * 4 * w**3
        prev = o.earliest_unresolved_delay


def test_feedback_truncation_keeps_decoding_identical():
    code = cd.sample_toeplitz(6, 2, depth=200, seed=11)
    rng = np.random.default_rng(2)
    msgs = rng.integers(0, 2, (150, 2))
    mask = rng.random((150, 6)) < 0.25
    dec_a, a = run(code, msgs, mask)
    dec_b, b = run(code, msgs, mask, period=16)
    assert dec_b.cutoffs
    assert [o.earliest_unresolved_delay for _, o in a] == [o.earliest_unresolved_delay for _, o in b]
    assert all(np.array_equal(x, y) for x, y in zip(dec_a.messages, dec_b.messages))


def test_window_beyond_depth_overflows():
    code = cd.sample_toeplitz(3, 1, depth=5, seed=0)
    dec = Decoder(code)
    with pytest.raises(MemoryOverflow):
        for _ in range(6):
            dec.decode_step(np.full(3, ERASED, dtype=np.uint8))


def test_contradicting_channel_output_is_detected():
    code = cd.sample_toeplitz(4, 2, depth=10, seed=1)
    dec = Decoder(code)
    c = cd.Encoder(code).encode_step([1, 0])
    bad = c.copy()
    bad[0] ^= 1  # flips a parity bit that should be checked
    with pytest.raises(InternalCorruption):
        for _ in range(3):
            dec.decode_step(bad)
            bad = np.zeros(4, dtype=np.uint8)


def test_trace_lines():
    code = cd.sample_toeplitz(4, 2, depth=10, seed=1)
    buf = io.StringIO()
    dec = Decoder(code, trace=buf)
    dec.decode_step(np.array([ERASED, 0, 0, 0], dtype=np.uint8))
    dec.decode_step(np.zeros(4, dtype=np.uint8))
    lines = buf.getvalue().splitlines()
    assert len(lines) == 2 and lines[0].startswith("1,1,")
