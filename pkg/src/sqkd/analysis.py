"""Closed-form error predictions and the estimators that test them.

The CTRL-check formula ``1 - (|gamma|^2 + |gamma_p|^2)/4`` silently assumes
the probe states attached to ``|00>`` and ``|11>`` are orthogonal. The
exact value is ``1 - |gamma e00 + gamma_p e11|^2 / 4``; both are provided and
the formula warns when it is used outside its domain.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from statistics import NormalDist
from typing import NamedTuple

import numpy as np

from . import qcore
from .attacks import (AttackModel, GeneralUnitary, TwoStageUnitary, UnitaryAttackParams,
                      eve_identification_outcome)
from .qcore import BellKind, Role

Z95 = NormalDist().inv_cdf(0.975)
VERDICT_TOLERANCE = 0.02


class FormulaDomainWarning(UserWarning):
    pass


class Prediction(NamedTuple):
    value: float
    flagged: bool


@dataclass(frozen=True)
class CtrlExpansionCoeffs:
    gamma: complex
    delta: complex
    delta_p: complex
    gamma_p: complex
    probe_overlap_00_11: complex = 0j
    degenerate: bool = False

    def __post_init__(self):
        s = sum(abs(c) ** 2 for c in (self.gamma, self.delta, self.delta_p, self.gamma_p))
        if abs(s - 2) > qcore.TOL:
            raise ValueError(f"|gamma|^2 + |delta|^2 + |delta_p|^2 + |gamma_p|^2 = {s!r}, must be 2")


@dataclass(frozen=True)
class ErrorRateEstimate:
    point: float
    ci_low: float
    ci_high: float
    n_samples: int


def predict_sift_error(params: UnitaryAttackParams) -> Prediction:
    """Mismatch probability on SIFT pairs for a forward-only unitary attack.

    ``|beta|^2`` when the two flip amplitudes agree in magnitude; otherwise
    their average, with the flag set.
    """
    b, bp = abs(params.beta) ** 2, abs(params.beta_p) ** 2
    if abs(b - bp) <= qcore.TOL:
        return Prediction(b, False)
    return Prediction((b + bp) / 2, True)


def predict_ctrl_error_orthogonal(coeffs: CtrlExpansionCoeffs) -> Prediction:
    value = 1 - (abs(coeffs.gamma) ** 2 + abs(coeffs.gamma_p) ** 2) / 4
    off_domain = abs(coeffs.probe_overlap_00_11) > qcore.TOL
    if off_domain:
        warnings.warn(
            f"probe overlap <e00|e11> = {coeffs.probe_overlap_00_11:.3g} is nonzero; "
            "the orthogonal-probe CTRL formula is not exact here",
            FormulaDomainWarning, stacklevel=2)
    return Prediction(value, off_domain)


def exact_ctrl_error(group, a, b, expected: BellKind = BellKind.PHI_PLUS) -> float:
    return 1 - qcore.born_distribution(group, [a, b], "Bell")[expected]


def extract_ctrl_coeffs(group, a, b) -> CtrlExpansionCoeffs:
    """Read gamma, delta, delta_p, gamma_p off a pair-plus-probe state.

    Each coefficient is sqrt(2) times the conditional probe vector's norm,
    with the phase of that vector's first nonzero amplitude moved onto the
    coefficient so the normalized probe starts real and positive.
    """
    if group.n_qubits < 3:
        raise ValueError("group must hold at least one probe register besides a and b")
    ia, ib = group.index(a), group.index(b)
    m = np.moveaxis(group.tensor(), [ia, ib], [0, 1]).reshape(4, -1)
    coeffs, probes = [], []
    degenerate = False
    for row in m:
        norm = np.linalg.norm(row)
        if norm <= qcore.TOL:
            coeffs.append(0j)
            probes.append(None)
            continue
        first = row[np.flatnonzero(np.abs(row) > qcore.TOL)[0]]
        phase = first / abs(first)
        coeffs.append(math.sqrt(2) * norm * phase)
        probes.append(row / (norm * phase))
    if probes[0] is None or probes[3] is None:
        overlap = 0j
        degenerate = True
    else:
        overlap = complex(np.vdot(probes[0], probes[3]))
    g, d, dp, gp = coeffs
    return CtrlExpansionCoeffs(g, d, dp, gp, overlap, degenerate)


def wilson_interval(successes: int, trials: int, z: float = Z95) -> tuple[float, float]:
    p = successes / trials
    denom = 1 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    return max(0.0, min(p, center - half)), min(1.0, max(p, center + half))


def estimate_rate(successes: int, trials: int) -> ErrorRateEstimate:
    if trials < 1:
        raise ValueError("need at least one trial")
    if not 0 <= successes <= trials:
        raise ValueError(f"successes {successes} outside [0, {trials}]")
    lo, hi = wilson_interval(successes, trials)
    return ErrorRateEstimate(successes / trials, lo, hi, trials)


# ---------------------------------------------------------------------------
# exact predictions for attacks


def _forward_state(kind, fwd: UnitaryAttackParams):
    g = qcore.new_bell_pair(kind, 0)
    a, b = g.registers
    probe = qcore.new_group([Role.EVE] * fwd.probe_qubits, qcore.ket("0" * fwd.probe_qubits))
    g = qcore.merge_groups(g, probe)
    qcore.apply_unitary(g, [b, *probe.registers], fwd.unitary())
    return g, a, b


def _apply_backward(g, b, bwd: UnitaryAttackParams | None):
    if bwd is None:
        return g
    probe = qcore.new_group([Role.EVE] * bwd.probe_qubits, qcore.ket("0" * bwd.probe_qubits))
    g = qcore.merge_groups(g, probe)
    qcore.apply_unitary(g, [b, *probe.registers], bwd.unitary())
    return g


def ctrl_state(fwd: UnitaryAttackParams, bwd: UnitaryAttackParams | None = None,
               kind: BellKind = BellKind.PHI_PLUS):
    """(group, a, b) for a CTRL pair after the forward and backward unitaries."""
    g, a, b = _forward_state(kind, fwd)
    return _apply_backward(g, b, bwd), a, b


def exact_unitary_rates(fwd: UnitaryAttackParams, bwd: UnitaryAttackParams | None = None,
                        kind: BellKind = BellKind.PHI_PLUS) -> dict:
    """Exact CTRL and SIFT error probabilities by Born-rule branch enumeration."""
    g, a, b = ctrl_state(fwd, bwd, kind)
    ctrl = exact_ctrl_error(g, a, b, kind)

    flip = int(kind.z_anticorrelated)
    sift = 0.0
    base, _, _ = _forward_state(kind, fwd)
    for bob_bit in (0, 1):
        g = base.clone()
        ga, gb = g.registers[0], g.registers[1]
        dist = qcore.born_distribution(g, [gb], "Z")
        if dist[str(bob_bit)] <= 0:
            continue
        p_bob = qcore.project_z(g, gb, bob_bit)
        g = gb.group if gb.group is ga.group else qcore.ensure_joint([ga, gb])
        g = _apply_backward(g, gb, bwd)
        z = qcore.born_distribution(g, [ga, gb], "Z")
        ok = f"{bob_bit ^ flip}{bob_bit}"
        sift += p_bob * (1 - z[ok])
    return {"ctrl_error": ctrl, "sift_error": sift}


def theory_predictions(attack: AttackModel, config) -> dict:
    """Predicted value of every claim that applies to ``attack`` under ``config``."""
    from .protocol import Variant

    name = attack.name
    kind = config.bell_kind
    if name == "none":
        return {"ctrl_error": 0.0, "sift_error": 0.0}
    if name in ("intercept_resend_z", "cnot_ancilla"):
        return {"ctrl_error": 0.5, "sift_error": 0.0, "eve_key_accuracy": 1.0}
    if name == "bell_substitution":
        if config.variant is Variant.MEASURE_RESEND:
            return {"ctrl_error": 0.0, "sift_error": 0.5,
                    "eve_sift_identification": 0.25, "eve_false_positive": 0.0}
        # returned particle sits at its own position with probability 1/n;
        # otherwise every mismatched pairing is maximally mixed
        f = 1 / config.n_pairs
        return {"ctrl_error": (1 - f) * 0.75,
                "sift_error": f * 0.5 + (1 - f) * 0.75,
                "eve_sift_identification": f / 4 + (1 - f) / 8,
                "eve_false_positive": (1 - f) / 8}
    if isinstance(attack, GeneralUnitary):
        bwd = attack.backward if isinstance(attack, TwoStageUnitary) else None
        return exact_unitary_rates(attack.forward, bwd, kind)
    raise ValueError(f"no theory for attack {name!r}")


def _observed(results) -> dict:
    """Pooled (successes, trials) per claim."""
    from .protocol import BobAction

    c = {"ctrl_error": [0, 0], "sift_error": [0, 0], "eve_sift_identification": [0, 0],
         "eve_false_positive": [0, 0], "eve_key_accuracy": [0, 0]}
    for r in results:
        c["ctrl_error"][0] += r.counts["ctrl_errors"]
        c["ctrl_error"][1] += r.counts["n_ctrl"]
        c["sift_error"][0] += r.counts["sift_check_errors"]
        c["sift_error"][1] += r.counts["n_sift_checked"]
        truth = [rec.bob_action for rec in r.records]
        t = r.eve_transcript
        if t.labels is not None:
            out = eve_identification_outcome(t, truth)
            c["eve_sift_identification"][0] += out.correct_sift_ids
            c["eve_false_positive"][0] += out.false_positives
            c["eve_sift_identification"][1] += len(truth)
            c["eve_false_positive"][1] += len(truth)
        if t.key_bits is not None:
            for rec, bit in zip(r.records, t.key_bits):
                if rec.bob_action is BobAction.SIFT and bit is not None:
                    c["eve_key_accuracy"][0] += bit == rec.bob_result
                    c["eve_key_accuracy"][1] += 1
    return c


@dataclass(frozen=True)
class ClaimRow:
    claim: str
    predicted: float
    estimate: ErrorRateEstimate | None
    verdict: str

    def to_dict(self):
        e = self.estimate
        return {
            "claim": self.claim,
            "predicted": self.predicted,
            "estimated": None if e is None else e.point,
            "ci": None if e is None else [e.ci_low, e.ci_high],
            "n_samples": 0 if e is None else e.n_samples,
            "verdict": self.verdict,
        }


@dataclass(frozen=True)
class TheoryReport:
    attack: str
    variant: str
    rows: tuple

    @property
    def passed(self) -> bool:
        return all(r.verdict != "fail" for r in self.rows)

    def row(self, claim) -> ClaimRow:
        for r in self.rows:
            if r.claim == claim:
                return r
        raise KeyError(claim)

    def to_dict(self):
        return {"attack": self.attack, "variant": self.variant,
                "rows": [r.to_dict() for r in self.rows], "passed": self.passed}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_table(self) -> str:
        header = ("claim", "predicted", "estimated", "ci", "verdict")
        lines = [header]
        for r in self.rows:
            e = r.estimate
            lines.append((
                r.claim,
                f"{r.predicted:.4f}",
                "-" if e is None else f"{e.point:.4f}",
                "-" if e is None else f"[{e.ci_low:.4f}, {e.ci_high:.4f}]",
                r.verdict,
            ))
        widths = [max(len(row[i]) for row in lines) for i in range(len(header))]
        return "\n".join("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip()
                         for row in lines)


def _homogeneous_key(config):
    d = config.to_dict()
    d.pop("seed")
    return d


def compare_theory(run_results, attack: AttackModel,
                   tolerance: float = VERDICT_TOLERANCE) -> TheoryReport:
    """Pool the runs and test every applicable prediction.

    A claim passes when its prediction lies in the 95% Wilson interval
    widened by ``tolerance`` on both sides; claims with no samples are
    reported as ``no-data``.
    """
    run_results = list(run_results)
    if not run_results:
        raise ValueError("no runs to compare")
    ref = _homogeneous_key(run_results[0].config)
    for r in run_results:
        if _homogeneous_key(r.config) != ref or r.attack_name != attack.name:
            raise ValueError("runs mix configurations or attacks")
    config = run_results[0].config
    predictions = theory_predictions(attack, config)
    observed = _observed(run_results)
    rows = []
    for claim, predicted in predictions.items():
        k, n = observed[claim]
        if n == 0:
            rows.append(ClaimRow(claim, predicted, None, "no-data"))
            continue
        est = estimate_rate(k, n)
        ok = est.ci_low - tolerance <= predicted <= est.ci_high + tolerance
        rows.append(ClaimRow(claim, predicted, est, "pass" if ok else "fail"))
    return TheoryReport(attack.name, config.variant.value, tuple(rows))
