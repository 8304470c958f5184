import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sqkd.attacks import general_unitary, UnitaryAttackParams
from sqkd.postproc import (KeyMaterial, Origin, parity_block_reconcile, privacy_amplify,
                           recommend_output_length, toeplitz_matrix)
from sqkd.protocol import ProtocolConfig, run_protocol


def km(bits, origin=Origin.RAW_ALICE):
    return KeyMaterial(np.array(bits, dtype=np.uint8), origin)


def residual_rate(e, k):
    """Per-bit disagreement among bits in kept (even-error) blocks of size k."""
    q = 1 - 2 * e
    return e * (1 - q ** (k - 1)) / (1 + q ** k)


class TestReconcile:
    @pytest.mark.parametrize("block", [1, 3, 8, 64])
    def test_identical_keys(self, block):
        bits = np.random.default_rng(0).integers(0, 2, 50)
        a2, b2 = parity_block_reconcile(km(bits), km(bits, Origin.RAW_BOB), block, np.random.default_rng(1))
        assert len(a2) == 50
        np.testing.assert_array_equal(a2.bits, b2.bits)
        assert a2.leaked_bits == b2.leaked_bits == math.ceil(50 / block)
        assert a2.origin is Origin.CORRECTED

    def test_single_error_discards_one_block(self):
        a = np.zeros(8, dtype=np.uint8)
        b = a.copy()
        b[5] = 1
        a2, b2 = parity_block_reconcile(km(a), km(b), 4, np.random.default_rng(2))
        assert len(a2) == len(b2) == 4
        np.testing.assert_array_equal(a2.bits, b2.bits)

    def test_even_errors_survive(self):
        a = np.zeros(8, dtype=np.uint8)
        b = a.copy()
        b[[0, 1]] = 1
        # block size covering the whole key makes the two errors share a block
        a2, b2 = parity_block_reconcile(km(a), km(b), 8, np.random.default_rng(3))
        assert len(a2) == 8
        assert int(np.sum(a2.bits != b2.bits)) == 2

    def test_log_and_leak_accounting(self):
        rng = np.random.default_rng(4)
        a = rng.integers(0, 2, 37)
        b = a ^ (rng.random(37) < 0.1)
        log = []
        a2, b2 = parity_block_reconcile(km(a), km(b), 5, np.random.default_rng(5), log=log)
        assert a2.leaked_bits == len(log) == 8
        kept = sum(min(5, 37 - 5 * e["block"]) for e in log if e["kept"])
        assert len(a2) == kept

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            parity_block_reconcile(km([0, 1]), km([0]))

    def test_residual_formula_enumeration(self):
        # the closed form against brute-force enumeration of every error pattern
        for k in (2, 4, 8):
            for e in (0.01, 0.05, 0.2):
                kept = wrong = 0.0
                for pattern in itertools.product((0, 1), repeat=k):
                    w = sum(pattern)
                    p = e ** w * (1 - e) ** (k - w)
                    if w % 2 == 0:
                        kept += p * k
                        wrong += p * w
                assert wrong / kept == pytest.approx(residual_rate(e, k), rel=1e-12)

    @pytest.mark.parametrize("e", [0.01, 0.03, 0.05])
    def test_residual_error_simulated(self, e):
        rng = np.random.default_rng(int(e * 1000))
        k, n = 8, 80_000
        a = rng.integers(0, 2, n).astype(np.uint8)
        b = a ^ (rng.random(n) < e).astype(np.uint8)
        a2, b2 = parity_block_reconcile(km(a), km(b), k, rng)
        m = len(a2)
        rate = np.sum(a2.bits != b2.bits) / m
        r = residual_rate(e, k)
        # errors cluster in pairs within blocks, so allow for the block-level variance
        sd = math.sqrt(r * (1 - r) / m * k)
        assert abs(rate - r) <= 4 * sd + 1e-12


class TestPrivacyAmplify:
    def test_identity_seed(self):
        key = km([1, 0, 1, 1, 0])
        n = len(key)
        seed = np.zeros(2 * n - 1, dtype=np.uint8)
        seed[n - 1] = 1
        out = privacy_amplify(key, n, seed)
        np.testing.assert_array_equal(out.bits, key.bits)
        assert out.origin is Origin.FINAL

    def test_toeplitz_structure(self):
        rng = np.random.default_rng(0)
        seed = rng.integers(0, 2, 10)
        T = toeplitz_matrix(seed, 6, 5)
        for i in range(1, 5):
            for j in range(1, 6):
                assert T[i, j] == T[i - 1, j - 1]
        np.testing.assert_array_equal(T[:, 0], seed[5:])
        np.testing.assert_array_equal(T[0, :], seed[5::-1])

    def test_matches_gf2_product(self):
        rng = np.random.default_rng(1)
        key = km(rng.integers(0, 2, 20))
        seed = rng.integers(0, 2, 20 + 7 - 1)
        out = privacy_amplify(key, 7, seed)
        for i in range(7):
            bit = 0
            for j in range(20):
                bit ^= int(seed[i - j + 19]) & int(key.bits[j])
            assert out.bits[i] == bit

    def test_deterministic(self):
        rng = np.random.default_rng(2)
        key = km(rng.integers(0, 2, 30))
        seed = rng.integers(0, 2, 39)
        a, b = privacy_amplify(key, 10, seed), privacy_amplify(key, 10, seed)
        np.testing.assert_array_equal(a.bits, b.bits)

    def test_length_errors(self):
        key = km([0, 1, 1])
        with pytest.raises(ValueError):
            privacy_amplify(key, 4, np.zeros(6))
        with pytest.raises(ValueError):
            privacy_amplify(key, 2, np.zeros(3))
        assert len(privacy_amplify(key, 0, np.zeros(0))) == 0


class TestOutputLength:
    @pytest.mark.parametrize("args, out", [((100, 25, 8), 67), ((10, 20, 8), 0), ((64, 0, 8), 56)])
    def test_examples(self, args, out):
        assert recommend_output_length(*args) == out

    def test_default_margin(self):
        assert recommend_output_length(64, 0) == 56

    def test_negative(self):
        with pytest.raises(ValueError):
            recommend_output_length(-1, 0)


class TestEndToEnd:
    @settings(max_examples=25, deadline=None)
    @given(st.integers(10, 300), st.integers(0, 2**32), st.sampled_from([1, 4, 8, 16]))
    def test_honest_final_keys(self, n, seed, block):
        cfg = ProtocolConfig(n, seed=seed, block_size=block)
        r = run_protocol(cfg)
        np.testing.assert_array_equal(r.alice_final_key, r.bob_final_key)
        raw = r.alice_raw_key.size
        blocks = math.ceil(raw / block)
        assert r.leaked_bits == blocks
        assert r.alice_final_key.size == recommend_output_length(raw, blocks, cfg.safety_margin)

    def test_attacked_run_keeps_lengths_equal(self):
        cfg = ProtocolConfig(400, seed=3, ctrl_error_threshold=1.0, sift_error_threshold=1.0)
        r = run_protocol(cfg, general_unitary(UnitaryAttackParams.from_angle(0.2)))
        assert r.passed
        assert r.alice_final_key.size == r.bob_final_key.size
