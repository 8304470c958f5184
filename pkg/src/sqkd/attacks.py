"""Eavesdropper strategies.

An attack sees the channel through an :class:`EveContext`. The context hands
out opaque :class:`Handle` tokens for the particle currently on the wire
and for registers Eve creates herself; every quantum operation goes through
the context and is refused for anything else. Alice's retained particles
never travel on the wire, so no handle to them can exist.

Attack objects are stateless and shareable. Per-trial state lives in
``ctx.memory``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import qcore
from .qcore import BellKind, Role


class CapabilityError(PermissionError):
    pass


class AttackError(RuntimeError):
    pass


class AttackParameterError(ValueError):
    pass


class ProtocolOrderError(RuntimeError):
    """Public information was requested before it was announced."""


class Handle:
    __slots__ = ("_key",)

    def __init__(self, key: int):
        self._key = key

    def __repr__(self):
        return f"<qubit {self._key}>"


class PublicChannel:
    """Classical announcements, released in protocol order.

    Reading an attribute before its announcement raises
    :class:`ProtocolOrderError`.
    """

    def __init__(self, n_pairs: int):
        self.n_pairs = n_pairs
        self._receipt_confirmed = False
        self._actions = None
        self._permutation = None
        self._sift_check = None
        self._bob_check_results = None

    @property
    def receipt_confirmed(self) -> bool:
        return self._receipt_confirmed

    def confirm_receipt(self):
        self._receipt_confirmed = True

    def announce_bob(self, actions, permutation):
        if not self._receipt_confirmed:
            raise ProtocolOrderError("Bob may not announce before Alice confirms receipt")
        self._actions = tuple(actions)
        self._permutation = np.array(permutation, dtype=np.int64)
        self._permutation.setflags(write=False)

    def announce_sift_check(self, indices, bob_results):
        if self._actions is None:
            raise ProtocolOrderError("SIFT check subset announced before Bob's announcement")
        self._sift_check = tuple(indices)
        self._bob_check_results = dict(bob_results)

    def _get(self, name, value):
        if value is None:
            raise ProtocolOrderError(f"{name} has not been announced yet")
        return value

    @property
    def actions(self):
        return self._get("Bob's actions", self._actions)

    @property
    def permutation(self):
        return self._get("Bob's permutation", self._permutation)

    @property
    def sift_check_indices(self):
        return self._get("the SIFT check subset", self._sift_check)

    @property
    def bob_check_results(self):
        return self._get("Bob's check results", self._bob_check_results)


class EveContext:
    def __init__(self, rng, public: PublicChannel):
        self.rng = rng
        self.public = public
        self.memory: dict = {}
        self._regs: dict[int, qcore.Register] = {}
        self._keys: dict[int, int] = {}
        self._next = 0

    # protocol-side ------------------------------------------------------

    def _admit(self, reg: qcore.Register) -> Handle:
        if reg.role is Role.A:
            raise CapabilityError("Alice's retained particle never reaches the channel")
        key = self._keys.get(id(reg))
        if key is None:
            key = self._new_key(reg)
        return Handle(key)

    def _resolve(self, handle) -> qcore.Register:
        return self._lookup(handle)

    # Eve-side -----------------------------------------------------------

    def _new_key(self, reg):
        key = self._next
        self._next += 1
        self._regs[key] = reg
        self._keys[id(reg)] = key
        return key

    def _lookup(self, handle) -> qcore.Register:
        if not isinstance(handle, Handle) or handle._key not in self._regs:
            raise CapabilityError(f"{handle!r} is not a register Eve holds")
        return self._regs[handle._key]

    def new_qubits(self, k: int = 1) -> list[Handle]:
        """Fresh Eve registers, jointly in ``|0...0>``."""
        g = qcore.new_group([Role.EVE] * k, qcore.ket("0" * k))
        return [Handle(self._new_key(r)) for r in g.registers]

    def new_bell_pair(self, kind: BellKind = BellKind.PHI_PLUS) -> tuple[Handle, Handle]:
        g = qcore.new_group([Role.EVE, Role.EVE], kind.vector)
        e, e_prime = (Handle(self._new_key(r)) for r in g.registers)
        return e, e_prime

    def apply_unitary(self, targets, U):
        regs = [self._lookup(h) for h in targets]
        group = qcore.ensure_joint(regs)
        qcore.apply_unitary(group, regs, U)

    def measure_z(self, handle) -> int:
        reg = self._lookup(handle)
        return qcore.measure_z(reg.group, reg, self.rng)

    def measure_bell(self, h1, h2) -> BellKind:
        r1, r2 = self._lookup(h1), self._lookup(h2)
        group = qcore.ensure_joint([r1, r2])
        return qcore.measure_bell(group, r1, r2, self.rng)


class EveLabel(Enum):
    SIFT = "InferredSIFT"
    CTRL = "InferredCTRL"
    INDETERMINATE = "Indeterminate"


@dataclass
class EveTranscript:
    """Eve's conclusions, indexed by pair index."""

    labels: list | None = None
    key_bits: list | None = None
    bell_outcomes: list | None = None
    probe_outcomes: list | None = None

    def to_dict(self):
        return {
            "labels": None if self.labels is None else [l.value for l in self.labels],
            "key_bits": self.key_bits,
            "bell_outcomes": None
            if self.bell_outcomes is None
            else [None if b is None else b.value for b in self.bell_outcomes],
            "probe_outcomes": self.probe_outcomes,
        }


@dataclass(frozen=True)
class IdentificationOutcome:
    correct_sift_ids: int
    false_positives: int
    indeterminate: int


def eve_identification_outcome(transcript: EveTranscript, truth) -> IdentificationOutcome:
    from .protocol import BobAction

    truth = list(truth)
    labels = transcript.labels
    if labels is None:
        labels = [EveLabel.INDETERMINATE] * len(truth)
    if len(labels) != len(truth):
        raise ValueError(f"transcript has {len(labels)} labels for {len(truth)} particles")
    correct = fp = indet = 0
    for label, action in zip(labels, truth):
        if label is EveLabel.SIFT:
            if action is BobAction.SIFT:
                correct += 1
            else:
                fp += 1
        elif label is EveLabel.INDETERMINATE:
            indet += 1
    return IdentificationOutcome(correct, fp, indet)


# ---------------------------------------------------------------------------
# unitary attack parameters


def _probe_preset(name: str, dim: int) -> np.ndarray:
    eye = np.eye(dim, dtype=complex)
    if name == "orthogonal":
        if dim < 4:
            raise AttackParameterError("orthogonal probes need dimension >= 4")
        return eye[:4].copy()
    if name == "identical":
        return np.tile(eye[0], (4, 1))
    raise AttackParameterError(f"unknown probe preset {name!r}")


@dataclass(frozen=True, eq=False)
class UnitaryAttackParams:
    """Amplitudes and probe states of a single-particle entangling attack.

    ``E|0,ref> = alpha|0,probe00> + beta|1,probe01>`` and
    ``E|1,ref> = beta_p|0,probe10> + alpha_p|1,probe11>``, where ``ref`` is
    the probe register's ``|0...0>`` state. ``probes`` rows are
    (probe00, probe01, probe10, probe11).
    """

    alpha: complex
    beta: complex
    beta_p: complex
    alpha_p: complex
    probes: np.ndarray = field(default_factory=lambda: _probe_preset("orthogonal", 4))

    def __post_init__(self):
        for name in ("alpha", "beta", "beta_p", "alpha_p"):
            object.__setattr__(self, name, complex(getattr(self, name)))
        probes = np.array(self.probes, dtype=complex)
        if probes.ndim != 2 or probes.shape[0] != 4:
            raise AttackParameterError("probes must be four vectors of equal length")
        dim = probes.shape[1]
        if dim < 1 or dim & (dim - 1):
            raise AttackParameterError(f"probe dimension {dim} is not a power of two")
        probes.setflags(write=False)
        object.__setattr__(self, "probes", probes)

        for lhs, (a, b) in (("|alpha|^2 + |beta|^2", (self.alpha, self.beta)),
                            ("|beta_p|^2 + |alpha_p|^2", (self.beta_p, self.alpha_p))):
            s = abs(a) ** 2 + abs(b) ** 2
            if abs(s - 1) > qcore.TOL:
                raise AttackParameterError(f"{lhs} = {s!r}, must be 1")
        for i, label in enumerate(("00", "01", "10", "11")):
            n = np.vdot(probes[i], probes[i]).real
            if abs(n - 1) > qcore.TOL:
                raise AttackParameterError(f"probe {label} has norm^2 {n!r}")
        overlap = (np.conj(self.alpha) * self.beta_p * np.vdot(probes[0], probes[2])
                   + np.conj(self.beta) * self.alpha_p * np.vdot(probes[1], probes[3]))
        if abs(overlap) > qcore.TOL:
            raise AttackParameterError(
                "images of |0,ref> and |1,ref> are not orthogonal "
                f"(overlap {overlap:.3e}); no unitary realizes these parameters"
            )

    @classmethod
    def from_angle(cls, theta: float, probes="orthogonal", probe_dim: int = 4):
        c, s = math.cos(theta), math.sin(theta)
        if isinstance(probes, str):
            probes = _probe_preset(probes, probe_dim)
        return cls(c, s, s, c, probes)

    @classmethod
    def identity(cls, probe_dim: int = 4):
        return cls(1, 0, 0, 1, _probe_preset("identical", probe_dim))

    @property
    def probe_dim(self) -> int:
        return self.probes.shape[1]

    @property
    def probe_qubits(self) -> int:
        return self.probe_dim.bit_length() - 1

    def unitary(self) -> np.ndarray:
        """Full unitary on (wire, probe), wire most significant.

        The two prescribed columns are completed to an orthonormal basis by
        Gram-Schmidt over the standard basis in index order.
        """
        d = self.probe_dim
        img0 = np.concatenate([self.alpha * self.probes[0], self.beta * self.probes[1]])
        img1 = np.concatenate([self.beta_p * self.probes[2], self.alpha_p * self.probes[3]])
        fixed = {0: img0, d: img1}
        basis = [img0, img1]
        fill = []
        for e in np.eye(2 * d, dtype=complex):
            if len(basis) == 2 * d:
                break
            v = e.copy()
            for _ in range(2):
                for b in basis:
                    v -= np.vdot(b, v) * b
            n = np.linalg.norm(v)
            if n > 1e-6:
                v /= n
                basis.append(v)
                fill.append(v)
        U = np.empty((2 * d, 2 * d), dtype=complex)
        free = iter(fill)
        for col in range(2 * d):
            U[:, col] = fixed[col] if col in fixed else next(free)
        return U

    def to_dict(self):
        def c(z):
            return [z.real, z.imag]

        return {
            "alpha": c(self.alpha), "beta": c(self.beta),
            "beta_p": c(self.beta_p), "alpha_p": c(self.alpha_p),
            "probes": [[c(complex(z)) for z in row] for row in self.probes],
        }


def _parse_complex(value, name):
    if isinstance(value, (list, tuple)):
        if len(value) != 2:
            raise AttackParameterError(f"{name}: complex pairs are [re, im]")
        return complex(float(value[0]), float(value[1]))
    if isinstance(value, str):
        try:
            return complex(value.replace(" ", ""))
        except ValueError as exc:
            raise AttackParameterError(f"{name}: cannot read {value!r} as complex") from exc
    return complex(value)


def params_from_mapping(m: dict) -> UnitaryAttackParams:
    """Build parameters from a config mapping.

    Accepts either ``theta`` (symmetric cos/sin amplitudes) or explicit
    ``alpha``, ``beta``, ``beta_p``, ``alpha_p``. ``probes`` is a preset name
    (``orthogonal``, ``identical``) or four vectors of ``[re, im]`` pairs.
    """
    m = dict(m)
    probes = m.pop("probes", "orthogonal")
    dim = int(m.pop("probe_dim", 4))
    if isinstance(probes, str):
        probes = _probe_preset(probes, dim)
    else:
        try:
            probes = [[_parse_complex(z, "probes") for z in vec] for vec in probes]
        except TypeError as exc:
            raise AttackParameterError("probes must be a list of four vectors") from exc
    if "theta" in m:
        theta = float(m.pop("theta"))
        extra = set(m) & {"alpha", "beta", "beta_p", "alpha_p"}
        if extra:
            raise AttackParameterError(f"theta conflicts with {sorted(extra)}")
        c, s = math.cos(theta), math.sin(theta)
        amps = dict(alpha=c, beta=s, beta_p=s, alpha_p=c)
    else:
        missing = {"alpha", "beta", "beta_p", "alpha_p"} - set(m)
        if missing:
            raise AttackParameterError(f"missing amplitudes {sorted(missing)} (or give theta)")
        amps = {k: _parse_complex(m.pop(k), k) for k in ("alpha", "beta", "beta_p", "alpha_p")}
    if m:
        raise AttackParameterError(f"unknown parameters {sorted(m)}")
    return UnitaryAttackParams(probes=np.array(probes, dtype=complex), **amps)


# ---------------------------------------------------------------------------
# the catalog


class AttackModel:
    """Honest channel. Subclasses override the hooks they need."""

    name = "none"
    applies_to = ("randomization", "measure-resend")

    def on_forward(self, ctx: EveContext, position: int, wire: Handle) -> Handle:
        return wire

    def on_backward(self, ctx: EveContext, position: int, wire: Handle) -> Handle:
        return wire

    def infer(self, ctx: EveContext) -> EveTranscript:
        return EveTranscript()

    def params(self) -> dict:
        return {}

    def __repr__(self):
        return f"{type(self).__name__}({self.params()})"


class InterceptResendZ(AttackModel):
    name = "intercept_resend_z"

    def on_forward(self, ctx, position, wire):
        ctx.memory.setdefault("bits", {})[position] = ctx.measure_z(wire)
        return wire

    def infer(self, ctx):
        bits = ctx.memory.get("bits", {})
        return EveTranscript(key_bits=[bits.get(i) for i in range(ctx.public.n_pairs)])


class CnotAncilla(AttackModel):
    name = "cnot_ancilla"

    CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)

    def on_forward(self, ctx, position, wire):
        (probe,) = ctx.new_qubits(1)
        ctx.apply_unitary([wire, probe], self.CNOT)
        ctx.memory.setdefault("probes", {})[position] = probe
        return wire

    def infer(self, ctx):
        probes = ctx.memory.get("probes", {})
        bits = [ctx.measure_z(probes[i]) if i in probes else None
                for i in range(ctx.public.n_pairs)]
        return EveTranscript(key_bits=bits)


class BellSubstitution(AttackModel):
    """Swap the wire particle for half of Eve's own Bell pair.

    On the way back Eve Bell-measures her kept half with whatever returns at
    that wire position and forwards the genuine particle she stored for the
    same position. Outcome ``phi-`` proves Bob measured.
    """

    name = "bell_substitution"
    applies_to = ("measure-resend",)

    def on_forward(self, ctx, position, wire):
        e, e_prime = ctx.new_bell_pair(BellKind.PHI_PLUS)
        ctx.memory.setdefault("stored", {})[position] = (wire, e)
        return e_prime

    def on_backward(self, ctx, position, wire):
        stored = ctx.memory.get("stored", {})
        if position not in stored:
            raise AttackError(
                f"no stored particle for return position {position}: "
                "more returns than substitutions"
            )
        genuine, e = stored.pop(position)
        ctx.memory.setdefault("outcomes", {})[position] = ctx.measure_bell(e, wire)
        return genuine

    def infer(self, ctx):
        n = ctx.public.n_pairs
        outcomes = ctx.memory.get("outcomes", {})
        perm = ctx.public.permutation
        labels = [EveLabel.INDETERMINATE] * n
        bell = [None] * n
        for pos, kind in outcomes.items():
            pair = int(perm[pos])
            bell[pair] = kind
            if kind is BellKind.PHI_MINUS:
                labels[pair] = EveLabel.SIFT
        return EveTranscript(labels=labels, bell_outcomes=bell)


class GeneralUnitary(AttackModel):
    name = "general_unitary"

    def __init__(self, params: UnitaryAttackParams, probe_basis: str | None = None):
        if probe_basis not in (None, "Z"):
            raise AttackParameterError(f"unsupported probe basis {probe_basis!r}")
        self.forward = params
        self.probe_basis = probe_basis
        self._U = params.unitary()

    def on_forward(self, ctx, position, wire):
        probes = ctx.new_qubits(self.forward.probe_qubits)
        ctx.apply_unitary([wire, *probes], self._U)
        ctx.memory.setdefault("probes", {})[position] = probes
        return wire

    def _measure_probes(self, ctx, key):
        found = ctx.memory.get(key, {})
        out = []
        for i in range(ctx.public.n_pairs):
            if i not in found:
                out.append(None)
                continue
            v = 0
            for h in found[i]:
                v = (v << 1) | ctx.measure_z(h)
            out.append(v)
        return out

    def infer(self, ctx):
        if self.probe_basis is None:
            return EveTranscript()
        return EveTranscript(probe_outcomes=self._measure_probes(ctx, "probes"))

    def params(self):
        p = {"forward": self.forward.to_dict()}
        if self.probe_basis:
            p["probe_basis"] = self.probe_basis
        return p


class TwoStageUnitary(GeneralUnitary):
    """Entangle on the way to Bob, and again with fresh probes on the way back."""

    name = "two_stage_unitary"

    def __init__(self, params_fwd, params_bwd, probe_basis=None):
        super().__init__(params_fwd, probe_basis)
        self.backward = params_bwd
        self._U_bwd = params_bwd.unitary()

    def on_backward(self, ctx, position, wire):
        probes = ctx.new_qubits(self.backward.probe_qubits)
        ctx.apply_unitary([wire, *probes], self._U_bwd)
        ctx.memory.setdefault("back_probes", {})[position] = probes
        return wire

    def params(self):
        p = super().params()
        p["backward"] = self.backward.to_dict()
        return p


def attack_none() -> AttackModel:
    return AttackModel()


def intercept_resend_z() -> AttackModel:
    return InterceptResendZ()


def cnot_ancilla() -> AttackModel:
    return CnotAncilla()


def bell_substitution() -> AttackModel:
    return BellSubstitution()


def general_unitary(params: UnitaryAttackParams, probe_basis=None) -> AttackModel:
    return GeneralUnitary(params, probe_basis)


def two_stage_unitary(params_fwd, params_bwd, probe_basis=None) -> AttackModel:
    return TwoStageUnitary(params_fwd, params_bwd, probe_basis)


_UNITARY_SCHEMA = {
    "theta": "real; sets alpha = alpha_p = cos(theta), beta = beta_p = sin(theta)",
    "alpha, beta, beta_p, alpha_p": "complex ('a+bj' or [re, im]); "
                                    "|alpha|^2 + |beta|^2 = 1 and |beta_p|^2 + |alpha_p|^2 = 1",
    "probes": "'orthogonal' (default), 'identical', or four probe vectors of [re, im] pairs",
    "probe_dim": "power of two, default 4",
}

CATALOG = {
    "none": {
        "schema": {},
        "predictions": "CTRL error 0, SIFT error 0",
        "variants": AttackModel.applies_to,
    },
    "intercept_resend_z": {
        "schema": {},
        "predictions": "CTRL error 1/2, SIFT error 0, Eve's key bit = Bob's on every SIFT particle",
        "variants": InterceptResendZ.applies_to,
    },
    "cnot_ancilla": {
        "schema": {},
        "predictions": "CTRL error 1/2, SIFT error 0, Eve's probe bit = Bob's on every SIFT particle",
        "variants": CnotAncilla.applies_to,
    },
    "bell_substitution": {
        "schema": {},
        "predictions": "measure-resend only: CTRL error 0, SIFT error 1/2, Eve identifies "
                       "SIFT particles at rate 1/4 with no false positives; under "
                       "randomization the identification collapses to chance",
        "variants": BellSubstitution.applies_to,
    },
    "general_unitary": {
        "schema": {**_UNITARY_SCHEMA, "probe_basis": "optional 'Z': Eve measures her probes"},
        "predictions": "SIFT error |beta|^2 (=(|beta|^2+|beta_p|^2)/2 if asymmetric)",
        "variants": GeneralUnitary.applies_to,
    },
    "two_stage_unitary": {
        "schema": {"forward": _UNITARY_SCHEMA, "backward": _UNITARY_SCHEMA,
                   "probe_basis": "optional 'Z'"},
        "predictions": "CTRL error 1 - (|gamma|^2 + |gamma_p|^2)/4 when the final probe "
                       "states for |00> and |11> are orthogonal",
        "variants": TwoStageUnitary.applies_to,
    },
}


def build_attack(name: str, params: dict | None = None) -> AttackModel:
    """Construct a catalog attack from a config mapping."""
    params = dict(params or {})
    if name not in CATALOG:
        raise AttackParameterError(f"unknown attack {name!r}; choose from {sorted(CATALOG)}")
    if name in ("none", "intercept_resend_z", "cnot_ancilla", "bell_substitution"):
        if params:
            raise AttackParameterError(f"{name} takes no parameters, got {sorted(params)}")
        return {"none": attack_none, "intercept_resend_z": intercept_resend_z,
                "cnot_ancilla": cnot_ancilla, "bell_substitution": bell_substitution}[name]()
    basis = params.pop("probe_basis", None)
    if name == "general_unitary":
        inner = params.pop("forward", None)
        if inner is not None and params:
            raise AttackParameterError(f"unknown parameters {sorted(params)}")
        return general_unitary(params_from_mapping(inner if inner is not None else params), basis)
    try:
        fwd = params.pop("forward")
        bwd = params.pop("backward")
    except KeyError as exc:
        raise AttackParameterError(f"two_stage_unitary needs '{exc.args[0]}' parameters") from None
    if params:
        raise AttackParameterError(f"unknown parameters {sorted(params)}")
    return two_stage_unitary(params_from_mapping(fwd), params_from_mapping(bwd), basis)
