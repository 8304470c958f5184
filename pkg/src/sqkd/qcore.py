"""Exact state-vector mechanics for small groups of qubit registers.

Every live register belongs to exactly one :class:`SystemGroup`. A group
holds the joint pure state of its registers; register order is tensor-factor
order, most significant qubit first. Groups are merged lazily when an
operation spans registers of different groups, and measured registers are
split back out after the collapse (the post-measurement state factorizes
exactly there, so the split is invisible to any observable).
"""

from __future__ import annotations

import itertools
from enum import Enum

import numpy as np

TOL = 1e-9

_SQ = 1 / np.sqrt(2)


class QCoreError(ValueError):
    pass


class NonUnitaryError(QCoreError):
    pass


class Role(Enum):
    A = "A"
    B = "B"
    EVE = "EveProbe"


class BellKind(Enum):
    PHI_PLUS = "phi+"
    PHI_MINUS = "phi-"
    PSI_PLUS = "psi+"
    PSI_MINUS = "psi-"

    @property
    def vector(self) -> np.ndarray:
        return _BELL_VECTORS[self].copy()

    @property
    def z_anticorrelated(self) -> bool:
        """True for the psi states, whose two Z outcomes always differ."""
        return self in (BellKind.PSI_PLUS, BellKind.PSI_MINUS)


_BELL_VECTORS = {
    BellKind.PHI_PLUS: np.array([_SQ, 0, 0, _SQ], dtype=complex),
    BellKind.PHI_MINUS: np.array([_SQ, 0, 0, -_SQ], dtype=complex),
    BellKind.PSI_PLUS: np.array([0, _SQ, _SQ, 0], dtype=complex),
    BellKind.PSI_MINUS: np.array([0, _SQ, -_SQ, 0], dtype=complex),
}
BELL_ORDER = tuple(BellKind)

_ids = itertools.count()


class Register:
    """A single qubit register. Its state lives in ``self.group``."""

    __slots__ = ("id", "role", "pair_index", "_group")

    def __init__(self, role: Role, pair_index: int = -1):
        self.id = next(_ids)
        self.role = role
        self.pair_index = pair_index
        self._group: SystemGroup | None = None

    @property
    def group(self) -> SystemGroup:
        return self._group

    def __repr__(self):
        return f"Register({self.role.value}, pair={self.pair_index}, id={self.id})"


class SystemGroup:
    """Registers sharing one normalized state vector."""

    def __init__(self, registers, state):
        registers = list(registers)
        state = np.asarray(state, dtype=complex).reshape(-1)
        if len(set(map(id, registers))) != len(registers):
            raise QCoreError("duplicate register in group")
        if state.size != 2 ** len(registers):
            raise QCoreError(
                f"state has {state.size} amplitudes, expected {2 ** len(registers)}"
            )
        norm = np.vdot(state, state).real
        if abs(norm - 1) > TOL:
            raise QCoreError(f"state not normalized (norm^2 = {norm!r})")
        self.registers = registers
        self.state = state
        self.retired = False
        for r in registers:
            r._group = self

    @property
    def n_qubits(self) -> int:
        return len(self.registers)

    def index(self, reg: Register) -> int:
        for i, r in enumerate(self.registers):
            if r is reg:
                return i
        raise QCoreError(f"{reg!r} is not in this group")

    def norm(self) -> float:
        return float(np.vdot(self.state, self.state).real)

    def tensor(self) -> np.ndarray:
        return self.state.reshape((2,) * self.n_qubits)

    def clone(self) -> SystemGroup:
        """Deep copy with fresh registers; registers correspond by position."""
        regs = [Register(r.role, r.pair_index) for r in self.registers]
        return SystemGroup(regs, self.state.copy())

    def _check_live(self):
        if self.retired:
            raise QCoreError("group was merged away and is no longer live")

    def __repr__(self):
        roles = ",".join(r.role.value for r in self.registers)
        return f"SystemGroup([{roles}], dim={self.state.size})"


def ket(bits: str) -> np.ndarray:
    """Computational basis vector, e.g. ``ket("01")``."""
    v = np.zeros(2 ** len(bits), dtype=complex)
    v[int(bits, 2) if bits else 0] = 1
    return v


def new_group(roles, state, pair_index: int = -1) -> SystemGroup:
    regs = [Register(role, pair_index) for role in roles]
    return SystemGroup(regs, state)


def new_bell_pair(kind: BellKind, pair_index: int) -> SystemGroup:
    return new_group([Role.A, Role.B], kind.vector, pair_index)


def merge_groups(g1: SystemGroup, g2: SystemGroup) -> SystemGroup:
    if g1 is g2:
        raise QCoreError("cannot merge a group with itself")
    g1._check_live()
    g2._check_live()
    merged = SystemGroup(g1.registers + g2.registers,
                         np.multiply.outer(g1.state, g2.state).reshape(-1))
    g1.retired = g2.retired = True
    return merged


def ensure_joint(registers) -> SystemGroup:
    """Merge (in order of first appearance) the groups holding ``registers``."""
    group = None
    for r in registers:
        if group is None:
            group = r.group
        elif r.group is not group:
            group = merge_groups(group, r.group)
    return group


def unitarity_defect(U) -> float:
    U = np.asarray(U, dtype=complex)
    return float(np.max(np.abs(U.conj().T @ U - np.eye(U.shape[0]))))


def _axes(group, targets):
    axes = [group.index(t) for t in targets]
    if len(set(axes)) != len(axes):
        raise QCoreError("repeated target register")
    return axes


def apply_unitary(group: SystemGroup, targets, U) -> None:
    group._check_live()
    targets = list(targets)
    axes = _axes(group, targets)
    k = len(axes)
    U = np.asarray(U, dtype=complex)
    if U.shape != (2**k, 2**k):
        raise QCoreError(f"matrix shape {U.shape} does not act on {k} qubit(s)")
    defect = unitarity_defect(U)
    if defect > TOL:
        raise NonUnitaryError(f"matrix is not unitary: max |(U^dag U - I)_jk| = {defect:.3e}")
    psi = group.tensor()
    out = np.tensordot(U.reshape((2,) * (2 * k)), psi, axes=(list(range(k, 2 * k)), axes))
    group.state = np.moveaxis(out, list(range(k)), axes).reshape(-1)


def _front(group, axes):
    """State as a (2**k, rest) matrix with the given axes leading."""
    psi = np.moveaxis(group.tensor(), axes, list(range(len(axes))))
    return psi.reshape(2 ** len(axes), -1)


def _split_off(group: SystemGroup, axes, local_state, rest) -> None:
    """Replace ``group`` by (measured registers in ``local_state``) x (rest)."""
    measured = [group.registers[a] for a in axes]
    others = [r for i, r in enumerate(group.registers) if i not in axes]
    if not others:
        group.state = np.asarray(local_state, dtype=complex)
        group.registers = measured
        return
    group.registers = others
    group.state = rest / np.linalg.norm(rest)
    SystemGroup(measured, local_state)


def measure_z(group: SystemGroup, target: Register, rng) -> int:
    """Projective Z measurement; the register stays live in ``|bit>``."""
    group._check_live()
    axis = group.index(target)
    m = _front(group, [axis])
    p1 = float(np.vdot(m[1], m[1]).real)
    bit = int(rng.random() < p1)
    _split_off(group, [axis], ket(str(bit)), m[bit])
    return bit


def measure_bell(group: SystemGroup, r1: Register, r2: Register, rng) -> BellKind:
    if r1 is r2:
        raise QCoreError("Bell measurement needs two distinct registers")
    group._check_live()
    axes = _axes(group, [r1, r2])
    m = _front(group, axes)
    branches = [_BELL_VECTORS[k].conj() @ m for k in BELL_ORDER]
    probs = np.array([np.vdot(b, b).real for b in branches])
    u = rng.random() * probs.sum()
    idx = int(np.searchsorted(np.cumsum(probs), u, side="right"))
    idx = min(idx, 3)
    while probs[idx] == 0:  # guard against u landing on a zero-width bin edge
        idx -= 1
    kind = BELL_ORDER[idx]
    _split_off(group, axes, _BELL_VECTORS[kind], branches[idx])
    return kind


def project_z(group: SystemGroup, target: Register, bit: int) -> float:
    """Post-select ``target`` on ``bit``; returns the branch probability.

    Deterministic counterpart of :func:`measure_z` for exact branch
    enumeration.
    """
    group._check_live()
    axis = group.index(target)
    m = _front(group, [axis])
    p = float(np.vdot(m[bit], m[bit]).real)
    if p <= 0:
        raise QCoreError(f"outcome {bit} has zero probability")
    _split_off(group, [axis], ket(str(bit)), m[bit])
    return p


def born_distribution(group: SystemGroup, targets, basis: str = "Z") -> dict:
    """Exact outcome probabilities, without touching the state.

    Z-basis keys are bit strings in ``targets`` order; Bell-basis keys are
    :class:`BellKind` members.
    """
    targets = list(targets)
    axes = _axes(group, targets)
    m = _front(group, axes)
    if basis == "Z":
        probs = np.einsum("ij,ij->i", m.conj(), m).real
        k = len(targets)
        return {format(i, f"0{k}b"): float(p) for i, p in enumerate(probs)}
    if basis == "Bell":
        if len(targets) != 2:
            raise QCoreError("Bell basis needs exactly two target registers")
        out = {}
        for kind in BELL_ORDER:
            b = _BELL_VECTORS[kind].conj() @ m
            out[kind] = float(np.vdot(b, b).real)
        return out
    raise QCoreError(f"unknown basis {basis!r}")


def state_of(registers) -> np.ndarray:
    """Joint state vector of ``registers`` in the given order.

    The registers must exactly cover the groups they live in, since a pure
    state of a strict subset is not defined.
    """
    registers = list(registers)
    groups = []
    for r in registers:
        if not any(g is r.group for g in groups):
            groups.append(r.group)
    covered = [r for g in groups for r in g.registers]
    if len(covered) != len(registers) or {id(r) for r in covered} != {id(r) for r in registers}:
        raise QCoreError("registers do not exactly cover their groups")
    psi = np.array([1], dtype=complex)
    for g in groups:
        psi = np.kron(psi, g.state)
    n = len(covered)
    order = [next(i for i, c in enumerate(covered) if c is r) for r in registers]
    return np.transpose(psi.reshape((2,) * n), order).reshape(-1)
