import math
import warnings

import numpy as np
import pytest
from scipy.stats import binom, binomtest

from sqkd import qcore
from sqkd.analysis import (CtrlExpansionCoeffs, FormulaDomainWarning, compare_theory, ctrl_state,
                           estimate_rate, exact_ctrl_error, exact_unitary_rates,
                           extract_ctrl_coeffs, predict_ctrl_error_orthogonal, predict_sift_error,
                           theory_predictions, wilson_interval)
from sqkd.attacks import (UnitaryAttackParams, attack_none, bell_substitution, general_unitary,
                          intercept_resend_z, two_stage_unitary)
from sqkd.protocol import ProtocolConfig, Variant, run_protocol
from sqkd.qcore import BellKind, Role

S = 1 / math.sqrt(2)


def random_unit(rng, d):
    v = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return v / np.linalg.norm(v)


def random_orthonormal(rng, d, k):
    q, _ = np.linalg.qr(rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d)))
    return [q[:, i] for i in range(k)]


def sift_mismatch_oracle(alpha, beta, beta_p, alpha_p, probes):
    """P(A != B) on the forward state, built with plain numpy (no qcore)."""
    e00, e01, e10, e11 = probes
    psi = S * (np.kron(qcore.ket("00"), alpha * e00) + np.kron(qcore.ket("01"), beta * e01)
               + np.kron(qcore.ket("10"), beta_p * e10) + np.kron(qcore.ket("11"), alpha_p * e11))
    m = psi.reshape(4, -1)
    p = np.sum(np.abs(m) ** 2, axis=1)
    return p[1] + p[2]


def expansion_group(gamma, delta, delta_p, gamma_p, probes):
    """Pair-plus-probe group for the CTRL expansion with the given coefficients."""
    e00, e01, e10, e11 = probes
    psi = S * (np.kron(qcore.ket("00"), gamma * e00) + np.kron(qcore.ket("01"), delta * e01)
               + np.kron(qcore.ket("10"), delta_p * e10) + np.kron(qcore.ket("11"), gamma_p * e11))
    k = int(math.log2(e00.size))
    g = qcore.new_group([Role.A, Role.B] + [Role.EVE] * k, psi)
    return g, g.registers[0], g.registers[1]


def random_coeffs(rng):
    c = random_unit(rng, 4) * math.sqrt(2)
    return tuple(c)


class TestPredictSift:
    def test_examples(self):
        assert predict_sift_error(UnitaryAttackParams.identity()) == (0.0, False)
        assert predict_sift_error(UnitaryAttackParams.from_angle(math.pi / 4)).value == pytest.approx(0.5, abs=1e-12)
        p = UnitaryAttackParams.from_angle(math.pi / 8)
        assert p.beta == pytest.approx(0.3826834323650898)
        assert predict_sift_error(p).value == pytest.approx(0.14644660940672624, abs=1e-12)

    def test_asymmetric_flagged(self):
        a, b = 0.8, 0.6
        p = UnitaryAttackParams(a, b, 0.0, 1.0)
        pred = predict_sift_error(p)
        assert pred.flagged
        assert pred.value == pytest.approx(sift_mismatch_oracle(a, b, 0, 1, np.eye(4)), abs=1e-12)

    def test_oracle_agreement_random_draws(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            probes = random_orthonormal(rng, 4, 4)
            t, u = rng.uniform(0, math.pi / 2, 2)
            ph = np.exp(1j * rng.uniform(0, 2 * math.pi, 4))
            args = (math.cos(t) * ph[0], math.sin(t) * ph[1], math.sin(u) * ph[2], math.cos(u) * ph[3])
            p = UnitaryAttackParams(*args, probes=np.array(probes))
            oracle = sift_mismatch_oracle(*args, probes)
            assert abs(predict_sift_error(p).value - oracle) < 1e-9
            assert abs(exact_unitary_rates(p)["sift_error"] - oracle) < 1e-9


class TestPredictCtrl:
    def test_formula_examples(self):
        assert predict_ctrl_error_orthogonal(CtrlExpansionCoeffs(1, 0, 0, 1)).value == 0.5
        assert predict_ctrl_error_orthogonal(CtrlExpansionCoeffs(math.sqrt(2), 0, 0, 0)).value == pytest.approx(0.5)

    def test_sqrt2_zero_exact(self):
        g, a, b = expansion_group(math.sqrt(2), 0, 0, 0, np.eye(4))
        assert exact_ctrl_error(g, a, b) == pytest.approx(0.5, abs=1e-12)

    def test_identical_probes_flagged(self):
        g, a, b = expansion_group(1, 0, 0, 1, [qcore.ket("00")] * 4)
        assert exact_ctrl_error(g, a, b) == pytest.approx(0.0, abs=1e-12)
        coeffs = extract_ctrl_coeffs(g, a, b)
        assert coeffs.probe_overlap_00_11 == pytest.approx(1)
        with pytest.warns(FormulaDomainWarning):
            pred = predict_ctrl_error_orthogonal(coeffs)
        assert pred == (0.5, True)

    def test_no_warning_on_orthogonal(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            assert predict_ctrl_error_orthogonal(CtrlExpansionCoeffs(1, 0, 0, 1)).flagged is False

    def test_coefficient_normalization(self):
        with pytest.raises(ValueError):
            CtrlExpansionCoeffs(1, 0, 0, 0)

    def test_exact_examples(self):
        g = qcore.new_bell_pair(BellKind.PHI_PLUS, 0)
        assert exact_ctrl_error(g, *g.registers) == pytest.approx(0.0, abs=1e-12)
        ghz = np.zeros(8, dtype=complex)
        ghz[0] = ghz[7] = S
        g = qcore.new_group([Role.A, Role.B, Role.EVE], ghz)
        assert exact_ctrl_error(g, g.registers[0], g.registers[1]) == pytest.approx(0.5, abs=1e-12)

    def test_orthogonal_agreement_random(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            coeffs = random_coeffs(rng)
            probes = random_orthonormal(rng, 4, 2)
            # only <e00|e11> matters; e01 and e10 are arbitrary
            probes = [probes[0], random_unit(rng, 4), random_unit(rng, 4), probes[1]]
            g, a, b = expansion_group(*coeffs, probes)
            pred = predict_ctrl_error_orthogonal(CtrlExpansionCoeffs(*coeffs))
            assert abs(pred.value - exact_ctrl_error(g, a, b)) < 1e-9

    def test_discrepancy_nonorthogonal(self):
        rng = np.random.default_rng(2)
        for _ in range(200):
            coeffs = random_coeffs(rng)
            probes = [random_unit(rng, 4) for _ in range(4)]
            g, a, b = expansion_group(*coeffs, probes)
            gamma, gamma_p = coeffs[0], coeffs[3]
            overlap = np.vdot(probes[0], probes[3])
            expected = abs(2 * (np.conj(gamma) * gamma_p * overlap).real) / 4
            formula = 1 - (abs(gamma) ** 2 + abs(gamma_p) ** 2) / 4
            assert abs(abs(formula - exact_ctrl_error(g, a, b)) - expected) < 1e-9


class TestExtract:
    def test_fixed_probe(self):
        g = qcore.merge_groups(qcore.new_bell_pair(BellKind.PHI_PLUS, 0),
                               qcore.new_group([Role.EVE], qcore.ket("0")))
        c = extract_ctrl_coeffs(g, g.registers[0], g.registers[1])
        assert (c.gamma, c.delta, c.delta_p, c.gamma_p) == pytest.approx((1, 0, 0, 1))
        assert c.probe_overlap_00_11 == pytest.approx(1)
        assert c.degenerate is False

    def test_ghz(self):
        ghz = np.zeros(8, dtype=complex)
        ghz[0] = ghz[7] = S
        g = qcore.new_group([Role.A, Role.B, Role.EVE], ghz)
        c = extract_ctrl_coeffs(g, g.registers[0], g.registers[1])
        assert (c.gamma, c.gamma_p) == pytest.approx((1, 1))
        assert c.probe_overlap_00_11 == 0

    def test_degenerate(self):
        g, a, b = expansion_group(math.sqrt(2), 0, 0, 0, np.eye(4))
        c = extract_ctrl_coeffs(g, a, b)
        assert c.degenerate and c.probe_overlap_00_11 == 0

    def test_requires_probe(self):
        g = qcore.new_bell_pair(BellKind.PHI_PLUS, 0)
        with pytest.raises(ValueError):
            extract_ctrl_coeffs(g, *g.registers)

    def test_round_trip(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            coeffs = random_coeffs(rng)
            probes = [random_unit(rng, 4) for _ in range(4)]
            g, a, b = expansion_group(*coeffs, probes)
            c = extract_ctrl_coeffs(g, a, b)
            got = np.abs([c.gamma, c.delta, c.delta_p, c.gamma_p])
            np.testing.assert_allclose(got, np.abs(coeffs), atol=1e-9)
            # the overlap is gauge dependent only through the phases of e00 and e11
            assert abs(abs(c.probe_overlap_00_11) - abs(np.vdot(probes[0], probes[3]))) < 1e-9
            # the reconstructed state is the original
            n = [p / p[np.flatnonzero(np.abs(p) > 1e-9)[0]] * abs(p[np.flatnonzero(np.abs(p) > 1e-9)[0]])
                 for p in probes]
            g2, _, _ = expansion_group(c.gamma, c.delta, c.delta_p, c.gamma_p, n)
            np.testing.assert_allclose(g2.state, g.state, atol=1e-9)

    def test_unitary_attack_coeffs(self):
        # CNOT copy onto a fresh orthogonal probe: gamma = gamma' = 1
        g, a, b = ctrl_state(UnitaryAttackParams.identity(), UnitaryAttackParams(1, 0, 0, 1))
        c = extract_ctrl_coeffs(g, a, b)
        assert abs(c.gamma - 1) < 1e-9 and abs(c.gamma_p - 1) < 1e-9
        assert abs(c.probe_overlap_00_11) < 1e-12


class TestWilson:
    @pytest.mark.parametrize("k, n", [(0, 100), (50, 100), (100, 100), (1, 3), (17, 250), (499, 1000)])
    def test_matches_scipy(self, k, n):
        ref = binomtest(k, n).proportion_ci(confidence_level=0.95, method="wilson")
        lo, hi = wilson_interval(k, n)
        assert lo == pytest.approx(ref.low, abs=1e-9)
        assert hi == pytest.approx(ref.high, abs=1e-9)

    def test_examples(self):
        e = estimate_rate(0, 100)
        assert e.point == 0 and e.ci_high < 0.05
        e = estimate_rate(50, 100)
        assert e.point == 0.5 and (e.ci_low + e.ci_high) / 2 == pytest.approx(0.5)
        e = estimate_rate(100, 100)
        assert e.point == 1 and e.ci_low > 0.95

    @pytest.mark.parametrize("k, n", [(0, 0), (-1, 5), (6, 5)])
    def test_invalid(self, k, n):
        with pytest.raises(ValueError):
            estimate_rate(k, n)

    @pytest.mark.parametrize("p", [0.05, 0.25, 0.5])
    def test_coverage(self, p):
        # exact coverage oscillates with n; at n = 1000 it is within [0.946, 0.951] for these p
        n, reps = 1000, 10_000
        ks = np.random.default_rng(int(p * 100)).binomial(n, p, size=reps)
        hits = sum(lo <= p <= hi for lo, hi in (wilson_interval(int(k), n) for k in ks))
        assert 0.94 <= hits / reps <= 0.96
        exact = sum(binom.pmf(k, n, p) for k in range(n + 1)
                    if wilson_interval(k, n)[0] <= p <= wilson_interval(k, n)[1])
        assert 0.94 <= exact <= 0.96


class TestCompareTheory:
    def _runs(self, attack, n=200, trials=10, **kw):
        return [run_protocol(ProtocolConfig(n, seed=s, **kw), attack) for s in range(trials)]

    def test_no_attack_all_pass(self):
        rep = compare_theory(self._runs(attack_none()), attack_none())
        assert rep.passed
        assert {r.claim for r in rep.rows} == {"ctrl_error", "sift_error"}
        assert all(r.predicted == 0 and r.verdict == "pass" for r in rep.rows)

    def test_intercept_resend(self):
        a = intercept_resend_z()
        rep = compare_theory(self._runs(a), a)
        assert rep.row("ctrl_error").predicted == 0.5
        assert rep.passed

    def test_bell_substitution(self):
        a = bell_substitution()
        rep = compare_theory(self._runs(a, variant=Variant.MEASURE_RESEND), a)
        assert rep.row("eve_sift_identification").predicted == 0.25
        assert rep.passed

    def test_wrong_prediction_fails(self):
        # intercept-resend runs judged against the no-attack predictions
        runs = self._runs(intercept_resend_z())
        for r in runs:
            r.attack_name = "none"
        rep = compare_theory(runs, attack_none())
        assert rep.row("ctrl_error").verdict == "fail" and not rep.passed

    def test_mixed_rejected(self):
        a = attack_none()
        runs = self._runs(a, trials=2) + [run_protocol(ProtocolConfig(100, seed=1), a)]
        with pytest.raises(ValueError, match="mix"):
            compare_theory(runs, a)
        with pytest.raises(ValueError):
            compare_theory([], a)

    def test_no_data(self):
        a = intercept_resend_z()
        runs = [run_protocol(ProtocolConfig(1, seed=0), a, forced_actions=["CTRL"])]
        rep = compare_theory(runs, a)
        assert rep.row("sift_error").verdict == "no-data"
        assert rep.passed

    def test_table_and_json(self):
        a = attack_none()
        rep = compare_theory(self._runs(a, trials=2), a)
        assert "ctrl_error" in rep.to_table()
        assert '"verdict": "pass"' in rep.to_json()

    def test_randomization_bell_substitution_predictions(self):
        cfg = ProtocolConfig(4)
        pred = theory_predictions(bell_substitution(), cfg)
        assert pred["ctrl_error"] == pytest.approx(0.75 * 0.75)
        assert pred["eve_sift_identification"] == pytest.approx(1 / 16 + 3 / 32)
        a = bell_substitution()
        rep = compare_theory(self._runs(a, n=4, trials=600), a)
        assert rep.passed, rep.to_table()

    def test_unitary_predictions_exact(self):
        p = UnitaryAttackParams.from_angle(0.4)
        pred = theory_predictions(general_unitary(p), ProtocolConfig(10))
        assert pred["sift_error"] == pytest.approx(math.sin(0.4) ** 2, abs=1e-12)
        copy = UnitaryAttackParams(1, 0, 0, 1)
        pred = theory_predictions(two_stage_unitary(UnitaryAttackParams.identity(), copy), ProtocolConfig(10))
        assert pred["ctrl_error"] == pytest.approx(0.5, abs=1e-12)
        assert pred["sift_error"] == pytest.approx(0.0, abs=1e-12)
