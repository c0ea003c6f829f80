import hashlib
import struct
from dataclasses import replace

import numpy as np
import pytest
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from creams import lut

from helpers import small_media


def _sys(**kw):
    return lut.SystemParams(**kw)


# -- fixed point -------------------------------------------------------------

@given(st.integers(-2**40, 2**40), st.integers(0, 12))
def test_rescale_matches_rational_rounding(v, shift):
    from fractions import Fraction
    x = Fraction(v, 1 << shift)
    expect = int(x.numerator * 2 + x.denominator) // (2 * x.denominator) if x >= 0 else -(
        (-x.numerator * 2 + x.denominator) // (2 * x.denominator))
    assert lut.rescale_int(v, shift) == expect
    assert int(lut.rescale(np.array([v]), shift)[0]) == expect


def test_round_half_away():
    assert list(lut.round_half_away([0.5, -0.5, 1.5, -1.5, 0.49])) == [1, -1, 2, -2, 0]


def test_quantize_clips(fp):
    lim = fp.limit(fp.wlut_bits)
    assert lim == 63
    assert list(fp.quantize([0.6, -0.6, 100.0], fp.wlut_bits)) == [10, -10, 63]


def test_system_params_validation():
    with pytest.raises(lut.ParameterError):
        _sys(T=2, S=4)
    with pytest.raises(lut.ParameterError):
        _sys(L=0)
    with pytest.raises(lut.ParameterError):
        _sys(M=10, L=50)
    with pytest.raises(lut.ParameterError):
        _sys(wlut_variance=-1)
    assert _sys(wlut_variance=0.25).w_amplitude == 0.5


# -- generation --------------------------------------------------------------

def test_elut_degenerate_and_deterministic(fp):
    assert not lut.gen_elut(_sys(elut_std=0), fp, np.random.default_rng(0)).values.any()
    a = lut.gen_elut(_sys(), fp, np.random.default_rng(5)).values
    b = lut.gen_elut(_sys(), fp, np.random.default_rng(5)).values
    assert np.array_equal(a, b)


def test_elut_variance(fp):
    v = [np.var(lut.gen_elut(_sys(), fp, np.random.default_rng(s)).values / fp.scale) for s in range(50)]
    assert 0.9e6 <= np.mean(v) <= 1.1e6


def test_encoding_matrix_statistics(fp):
    g1 = lut.gen_encoding_matrix(_sys(T=1000, L=1, S=1), fp, np.random.default_rng(1)).real()
    assert abs(g1.var() - 1.0) < 0.1
    g = lut.gen_encoding_matrix(_sys(), fp, np.random.default_rng(2)).real()
    assert abs((g**2).sum(axis=1).mean() - 1.0) < 0.05
    again = lut.gen_encoding_matrix(_sys(), fp, np.random.default_rng(2)).real()
    assert np.array_equal(g, again)


def _index_oracle(sk_m, M, S, T):
    """Block-at-a-time evaluation of the same keyed PRF."""
    key = hashlib.sha256(b"creams/index/" + sk_m).digest()[:16]
    limit = (2**32 // T) * T
    out = np.empty((M, S), dtype=np.int64)
    for i in range(M):
        for h in range(S):
            j = 0
            while True:
                enc = Cipher(algorithms.AES(key), modes.ECB()).encryptor()
                block = enc.update(struct.pack("<QII", i, h, j)) + enc.finalize()
                x = struct.unpack("<I", block[:4])[0]
                if x < limit:
                    out[i, h] = x % T
                    break
                j += 1
    return out


@pytest.mark.parametrize("T", [1, 7, 1000, 2**31 + 11])
def test_index_table_matches_blockwise_oracle(T):
    idx = lut.gen_index_table(b"media-key", 64, 4, T)
    assert np.array_equal(idx.indices, _index_oracle(b"media-key", 64, 4, T))


def test_index_table_basic_contracts():
    assert not lut.gen_index_table(b"k", 100, 4, 1).indices.any()
    a = lut.gen_index_table(b"k", 100, 4, 1000)
    assert a == lut.gen_index_table(b"k", 100, 4, 1000)
    assert not (a == lut.gen_index_table(b"k2", 100, 4, 1000))


def test_index_table_uniformity():
    T = 1000
    idx = lut.gen_index_table(b"uniformity", 250_000, 4, T)
    counts = np.bincount(idx.indices.ravel(), minlength=T)
    assert stats.chisquare(counts).pvalue > 0.01


def test_duplicate_indices_collapse():
    idx = lut.IndexTable(np.array([[3, 3, 1], [0, 1, 2]]), 4)
    assert idx.matrix.toarray().tolist() == [[0, 1, 0, 1], [1, 1, 1, 0]]
    assert list(idx.gather_sum(np.array([10, 20, 30, 40]))) == [60, 60]


def test_dlut_zero_strength_is_negated_elut(fp):
    r = np.random.default_rng(3)
    e, g = lut.gen_elut(_sys(), fp, r), lut.gen_encoding_matrix(_sys(), fp, r)
    b = lut.gen_fingerprint(50, r)
    assert np.array_equal(lut.gen_dlut(e, g, b, 0.0, fp).values, -e.values)


def test_dlut_bit_flip(fp):
    r = np.random.default_rng(4)
    e, g = lut.gen_elut(_sys(), fp, r), lut.gen_encoding_matrix(_sys(), fp, r)
    b = lut.gen_fingerprint(50, r)
    flipped = lut.Fingerprint(b.bits.copy())
    flipped.bits[7] ^= 1
    a = lut.quantized_amplitude(0.6, fp)
    sign = 1 if b.bits[7] else -1
    d_exact = lut.gen_dlut(e, g, b, 0.6, fp, exact=True).values - lut.gen_dlut(e, g, flipped, 0.6, fp, exact=True).values
    assert np.array_equal(d_exact, sign * 2 * a * g.values[:, 7])
    d = lut.gen_dlut(e, g, b, 0.6, fp).values - lut.gen_dlut(e, g, flipped, 0.6, fp).values
    assert np.abs(d - lut.rescale(sign * 2 * a * g.values[:, 7], fp.frac_bits)).max() <= 1


def test_encrypt_media_forced_forms(fp):
    m = small_media(32, 1)
    idx = lut.gen_index_table(b"k", 32, 4, 1000)
    zero = lut.ELut(np.zeros(1000, dtype=np.int64))
    assert lut.encrypt_media(m, idx, zero, fp) == m
    one = lut.ELut(np.array([123], dtype=np.int64))
    c = lut.encrypt_media(m, lut.gen_index_table(b"k", 32, 1, 1), one, fp)
    assert np.array_equal(c.values, m.values + 123)


def test_encrypt_media_headroom(fp):
    m = small_media(8, 1)
    idx = lut.IndexTable(np.zeros((8, 1), dtype=np.int64), 1)
    with pytest.raises(lut.FixedPointOverflowError):
        lut.encrypt_media(m, idx, lut.ELut(np.array([2**40])), fp)


@pytest.fixture(scope="module")
def instance():
    fp = lut.FpParams()
    sys = _sys()
    r = np.random.default_rng(11)
    M = 4096
    m = small_media(M, 2, fp=fp)
    e, g = lut.gen_elut(sys, fp, r), lut.gen_encoding_matrix(sys, fp, r)
    idx = lut.gen_index_table(b"instance", M, sys.S, sys.T)
    return sys, fp, m, e, g, idx, lut.encrypt_media(m, idx, e, fp)


def test_joint_decryption_zero_strength(instance):
    sys, fp, m, e, g, idx, c = instance
    b = lut.gen_fingerprint(sys.L, np.random.default_rng(0))
    assert lut.joint_decrypt_fingerprint(c, idx, lut.gen_dlut(e, g, b, 0.0, fp)) == m


def test_joint_decryption_zero_media_is_watermark(instance):
    sys, fp, m, e, g, idx, c = instance
    b = lut.gen_fingerprint(sys.L, np.random.default_rng(1))
    zero = lut.MediaVector(np.zeros(len(m), dtype=np.int64))
    c0 = lut.encrypt_media(zero, idx, e, fp)
    mk = lut.joint_decrypt_fingerprint(c0, idx, lut.gen_dlut(e, g, b, 0.6, fp, exact=True))
    # dense reference: B (G w), rounded once from the squared scale
    B = np.zeros((len(m), sys.T), dtype=np.int64)
    for i, row in enumerate(idx.indices):
        B[i, np.unique(row)] = 1
    ref = lut.rescale(B @ (g.values @ lut.watermark_weights(b, 0.6, fp)), fp.frac_bits)
    assert np.array_equal(mk.values, ref)


def test_cancellation_bound(instance):
    sys, fp, m, e, g, idx, c = instance
    b = lut.gen_fingerprint(sys.L, np.random.default_rng(2))
    mk = lut.joint_decrypt_fingerprint(c, idx, lut.gen_dlut(e, g, b, 0.6, fp))
    w2 = idx.gather_sum(g.values @ lut.watermark_weights(b, 0.6, fp))
    assert np.abs(mk.values - m.values - lut.rescale(w2, fp.frac_bits)).max() <= sys.S


def test_gbar_forms(instance):
    sys, fp, m, e, g, idx, c = instance
    gb = lut.gbar(idx, g)
    w = lut.watermark_weights(lut.gen_fingerprint(sys.L, np.random.default_rng(3)), 0.6, fp)
    direct = np.array([sum(g.values[t] @ w for t in set(row)) for row in idx.indices[:200]])
    assert np.array_equal((gb.values @ w)[:200], direct)
    assert np.array_equal(gb.values @ w, idx.gather_sum(g.values @ w))
    lazy = lut.gbar(idx, g, dense=False)
    assert np.allclose(lazy.matvec(w), gb.matvec(w)) and np.allclose(lazy.gram(), gb.gram())
    assert lazy.digest() == gb.digest()

    one = lut.gen_index_table(b"s1", 50, 1, sys.T)
    assert np.array_equal(lut.gbar(one, g).values, g.values[one.indices[:, 0]])
    same = lut.IndexTable(np.full((20, 4), 9), sys.T)
    assert (lut.gbar(same, g).values == g.values[9]).all()


def test_detectors_on_exact_watermark(instance):
    sys, fp, m, e, g, idx, c = instance
    gb = lut.gbar(idx, g)
    orig = lut.MediaVector(np.zeros(len(m), dtype=np.int64))
    ones = lut.MediaVector(gb.values @ np.ones(sys.L, dtype=np.int64), gb.frac_bits)
    assert lut.detect_mf(ones, orig, gb).bits.all()
    r = np.random.default_rng(5)
    for _ in range(10):
        b = lut.gen_fingerprint(sys.L, r)
        w = 2.0 * b.bits - 1
        delta = lut.MediaVector(gb.values @ w.astype(np.int64), gb.frac_bits)
        assert lut.detect_pinv(delta, orig, gb) == b


def test_pinv_rank_deficiency(instance):
    sys, fp, m, e, g, idx, c = instance
    same = lut.IndexTable(np.full((len(m), 4), 9), sys.T)
    with pytest.raises(lut.DecoderError):
        lut.detect_pinv(m, m, lut.gbar(same, g))
    with pytest.raises(lut.DecoderError):
        lut.detect_mf(m, lut.MediaVector(m.values[:-1]), lut.gbar(idx, g))


def test_sign_of_zero_is_zero(instance):
    sys, fp, m, e, g, idx, c = instance
    assert not lut.detect_mf(m, m, lut.gbar(idx, g)).bits.any()


def test_noiseless_decoding_full_size(fp):
    sys = _sys()
    M = 262_144
    r = np.random.default_rng(21)
    m = small_media(M, 3, fp=fp)
    e, g = lut.gen_elut(sys, fp, r), lut.gen_encoding_matrix(sys, fp, r)
    idx = lut.gen_index_table(b"full-size", M, sys.S, sys.T)
    c = lut.encrypt_media(m, idx, e, fp)
    gb = lut.gbar(idx, g, dense=False)
    ok_mf = ok_pinv = 0
    for _ in range(100):
        b = lut.gen_fingerprint(sys.L, r)
        mk = lut.joint_decrypt_fingerprint(c, idx, lut.gen_dlut(e, g, b, sys.w_amplitude, fp))
        ok_mf += lut.detect_mf(mk, m, gb) == b
        ok_pinv += lut.detect_pinv(mk, m, gb) == b
    assert ok_mf == ok_pinv == 100


def test_add_noise(fp):
    m = lut.MediaVector(np.zeros(262_144, dtype=np.int64))
    assert lut.add_noise(m, 0.0, np.random.default_rng(0)) == m
    sys = _sys(noise_variance=0.5)
    n = lut.add_noise(m, sys.noise_std, np.random.default_rng(1)).real()
    assert abs(n.var() - 0.5) < 0.01
    r = np.random.default_rng(2)
    assert not (lut.add_noise(m, 1.0, r) == lut.add_noise(m, 1.0, r))


@pytest.mark.parametrize("make", [
    lambda r, fp: lut.gen_elut(_sys(T=30, S=1), fp, r),
    lambda r, fp: lut.gen_encoding_matrix(_sys(T=30, L=5, S=1), fp, r),
    lambda r, fp: lut.gen_fingerprint(9, r),
    lambda r, fp: lut.gen_index_table(b"ser", 10, 3, 77),
    lambda r, fp: lut.DLut(np.arange(-5, 5)),
    lambda r, fp: lut.WLut(np.arange(4), 8),
    lambda r, fp: small_media(16, 0, fp=fp),
])
def test_serialization_round_trip(make, fp):
    obj = make(np.random.default_rng(0), fp)
    data = lut.to_bytes(obj, fp)
    back = lut.from_bytes(data)
    assert type(back) is type(obj) and lut.to_bytes(back, fp) == data


def test_serialization_rejects_bad_blobs(fp):
    data = lut.to_bytes(lut.DLut(np.arange(4)), fp)
    with pytest.raises(ValueError):
        lut.from_bytes(b"XXXX" + data[4:])
    with pytest.raises(ValueError):
        lut.from_bytes(data[:-1])


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), strength=st.sampled_from([0.0, 0.1, 0.3162, 0.7746, 1.5]))
def test_property_exact_and_rounded_dlut_agree(seed, strength):
    fp = lut.FpParams()
    sys = replace(_sys(), T=64, L=8)
    r = np.random.default_rng(seed)
    e, g, b = lut.gen_elut(sys, fp, r), lut.gen_encoding_matrix(sys, fp, r), lut.gen_fingerprint(sys.L, r)
    exact = lut.gen_dlut(e, g, b, strength, fp, exact=True)
    assert exact.frac_bits == 2 * fp.frac_bits
    assert np.array_equal(lut.rescale(exact.values, fp.frac_bits), lut.gen_dlut(e, g, b, strength, fp).values)
