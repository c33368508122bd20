import numpy as np
import pytest
from hypothesis import given, strategies as st

from anytime import code as cd
from anytime import gf2
from anytime.errors import BudgetExceeded, MemoryOverflow


@given(st.integers(2, 7), st.data(), st.integers(0, 2**31))
def test_generator_is_orthogonal(n, data, seed):
    k = data.draw(st.integers(1, n - 1))
    c = cd.sample_toeplitz(n, k, depth=12, seed=seed)
    assert cd.orthogonality_residual(c) == 0
    assert not gf2.matmul(c.parity_matrix(12), c.generator_matrix(12)).any()
    assert gf2.rank(c.G_blocks[0]) == k


@given(st.integers(0, 2**31), st.integers(1, 10))
def test_encoder_output_has_zero_syndrome(seed, t):
    c = cd.sample_toeplitz(5, 2, depth=16, seed=seed)
    rng = np.random.default_rng(seed)
    msgs = rng.integers(0, 2, (t, 2))
    words = cd.encode_stream(c, msgs).reshape(-1)
    assert not gf2.matmul(c.parity_matrix(t), words).any()
    assert np.array_equal(words, gf2.matmul(c.generator_matrix(t), msgs.reshape(-1)))


def test_first_block_is_identity_then_zero():
    c = cd.sample_toeplitz(6, 2, seed=3)
    assert np.array_equal(c.H_blocks[0], np.hstack([np.eye(4), np.zeros((4, 2))]))


def test_same_seed_same_code_and_invalid_dims():
    assert cd.sample_toeplitz(4, 2, seed=9) == cd.sample_toeplitz(4, 2, seed=9)
    assert cd.sample_toeplitz(4, 2, seed=9) != cd.sample_toeplitz(4, 2, seed=10)
    for n, k in [(3, 3), (3, 0), (2, 5)]:
        with pytest.raises(ValueError):
            cd.sample_toeplitz(n, k)
    with pytest.raises(ValueError):
        cd.sample_toeplitz(4, 2, p=0.0)


@pytest.mark.parametrize("n,k,d", [(3, 1, 4), (4, 2, 3), (5, 2, 4), (6, 3, 3)])
def test_weight_distribution_matches_brute_force(n, k, d):
    c = cd.sample_toeplitz(n, k, depth=8, seed=n * 10 + d)
    rep = cd.weight_distribution(c, d)
    assert rep.counts == cd.brute_force_weights(c, d)
    assert rep.w_min == min(rep.counts)
    assert sum(rep.counts.values()) == (2**k - 1) * 2 ** (k * (d - 1))
    # time invariance: the same codebook seen from a later start
    assert cd.weight_distribution(c, d, offset=2).counts == rep.counts


def test_weight_budget():
    c = cd.sample_toeplitz(8, 4, depth=10, seed=1)
    with pytest.raises(BudgetExceeded):
        cd.weight_distribution(c, 6)
    with pytest.raises(BudgetExceeded):
        cd.check_anytime_distance(c, 0.1, 1.0, 1, 6)


def test_anytime_distance_check_is_consistent_with_report():
    c = cd.sample_toeplitz(6, 2, depth=8, seed=5)
    reps = [cd.weight_distribution(c, d) for d in range(2, 5)]
    alpha = min(r.w_min / (6 * r.d) for r in reps)
    assert cd.check_anytime_distance(c, alpha, 2.0, 2, 4)
    assert not cd.check_anytime_distance(c, alpha + 1e-6, 2.0, 2, 4)


def test_ensemble_mean_weight_count():
    # averaged over many codes the count approaches the ensemble formula
    n, k, d = 4, 2, 3
    totals = {}
    trials = 400
    for s in range(trials):
        for w, cnt in cd.weight_distribution(cd.sample_toeplitz(n, k, depth=d, seed=s), d).counts.items():
            totals[w] = totals.get(w, 0) + cnt
    for w in range(1, n * d + 1):
        mean = totals.get(w, 0) / trials
        expect = cd.expected_weight_count(n, k, d, w)
        assert abs(mean - expect) <= 0.15 * expect + 0.2


def test_serialization_roundtrip(tmp_path):
    c = cd.sample_toeplitz(15, 5, depth=20, seed=42)
    path = tmp_path / "code.txt"
    cd.save(c, path)
    again = cd.load(path)
    assert again == c
    assert np.array_equal(again.G_blocks, c.G_blocks)
    assert cd.dumps(again) == path.read_text()
    with pytest.raises(ValueError):
        cd.loads(cd.dumps(c).rsplit("\n", 2)[0])


def test_truncation_drops_old_messages():
    c = cd.sample_toeplitz(4, 2, depth=10, seed=7)
    rng = np.random.default_rng(0)
    msgs = rng.integers(0, 2, (6, 2))
    enc = cd.Encoder(c)
    for b in msgs[:5]:
        enc.encode_step(b)
    enc.truncate(6)
    out = enc.encode_step(msgs[5])
    assert np.array_equal(out, gf2.matmul(c.G_blocks[0], msgs[5]))
    with pytest.raises(ValueError):
        enc.truncate(99)


def test_memory_overflow_without_truncation():
    c = cd.sample_toeplitz(4, 2, depth=3, seed=1)
    enc = cd.Encoder(c)
    for _ in range(3):
        enc.encode_step([1, 0])
    with pytest.raises(MemoryOverflow):
        enc.encode_step([1, 0])
    with pytest.raises(MemoryOverflow):
        c.parity_matrix(4)


def test_lift_packets_acts_lanewise():
    c = cd.sample_toeplitz(4, 2, depth=6, seed=2)
    L = 3
    big = cd.lift_packets(c, L)
    assert (big.n, big.k) == (12, 6)
    assert cd.orthogonality_residual(big) == 0
    rng = np.random.default_rng(1)
    lanes = rng.integers(0, 2, (L, 5, 2))
    words = [cd.encode_stream(c, lanes[l]) for l in range(L)]
    packed = lanes.transpose(1, 2, 0).reshape(5, 2 * L)
    lifted = cd.encode_stream(big, packed).reshape(5, 4, L)
    for l in range(L):
        assert np.array_equal(lifted[:, :, l], words[l])


@given(st.integers(0, 2**31))
def test_encoding_is_linear_and_injective(seed):
    c = cd.sample_toeplitz(5, 2, depth=10, seed=seed)
    rng = np.random.default_rng(seed)
    a, b = rng.integers(0, 2, (2, 8, 2))
    assert np.array_equal(cd.encode_stream(c, a ^ b), cd.encode_stream(c, a) ^ cd.encode_stream(c, b))
    assert gf2.rank(c.generator_matrix(10)) == 2 * 10


def test_anytime_distance_vacuous_bounds():
    c = cd.sample_toeplitz(4, 1, depth=8, seed=0)
    assert cd.check_anytime_distance(c, 0.0, 4.0, 1, 6)
    assert not cd.check_anytime_distance(c, 1.01, 4.0, 1, 6)


def test_full_ensemble_weight_counts():
    # every block random: count weight-w words with c_1 != 0 and zero syndrome
    n, k, d, trials = 2, 1, 3, 20_000
    rng = np.random.default_rng(7)
    words = np.array([[(m >> i) & 1 for i in range(n * d)] for m in range(1 << (n * d))])
    words = words[words[:, :n].any(axis=1)]
    wts = words.sum(axis=1)
    sums = np.zeros(n * d + 1)
    sq = np.zeros(n * d + 1)
    for _ in range(trials):
        H = cd.sample_parity_blocks(n, k, 0.5, d, rng, fixed_first=False)
        ok = ~(gf2.matmul(cd._block_toeplitz(H, d), words.T).any(axis=0))
        cnt = np.bincount(wts[ok], minlength=n * d + 1)
        sums += cnt
        sq += cnt**2
    mean = sums / trials
    se = np.sqrt(np.maximum(sq / trials - mean**2, 1e-12) / trials)
    for w in range(1, n * d + 1):
        expect = cd.expected_weight_count(n, k, d, w, fixed_first=False)
        assert abs(mean[w] - expect) <= 3 * se[w] + 1e-12


def test_acceptance_fraction_grows_with_start_delay():
    from anytime.thresholds import toeplitz_distance_thresholds
    alpha, theta = toeplitz_distance_thresholds(0.25, 0.5)
    codes = [cd.sample_toeplitz(4, 1, depth=12, seed=s) for s in range(60)]
    fracs = [np.mean([cd.check_anytime_distance(c, 0.8 * alpha, theta, d_o, 12) for c in codes])
             for d_o in (1, 4, 8)]
    assert fracs == sorted(fracs)
    assert fracs[-1] > fracs[0]
