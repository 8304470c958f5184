"""Simulation of semiquantum key distribution with Bell pairs.

Quantum Alice shares a key with classical Bob, who can only measure in the
computational basis, reflect particles, and reorder them.
"""

from .analysis import (compare_theory, estimate_rate, exact_ctrl_error, extract_ctrl_coeffs,
                       predict_ctrl_error_orthogonal, predict_sift_error)
from .attacks import (attack_none, bell_substitution, build_attack, cnot_ancilla,
                      eve_identification_outcome, general_unitary, intercept_resend_z,
                      two_stage_unitary, UnitaryAttackParams)
from .experiment import ExperimentConfig, run_experiment
from .protocol import BobAction, ProtocolConfig, RunResult, Variant, run_protocol
from .qcore import BellKind

__version__ = "0.1.0"
