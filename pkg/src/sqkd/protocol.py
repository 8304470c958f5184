"""The two protocol variants as a sequential state machine.

Flow of :func:`run_protocol`: Alice prepares Bell pairs and sends the B
halves; the attack sees each particle on the forward leg; Bob SIFTs or
CTRLs each particle (and, in the randomization variant, shuffles them); the
attack sees each returning wire position; Alice confirms receipt; Bob
announces; Alice runs the Bell-basis check on CTRL pairs and the Z-basis
check on a random subset of SIFT pairs; surviving SIFT bits are the raw key,
which is reconciled and hashed when both checks pass.

Each party draws from its own PCG64 stream spawned from ``config.seed``, so
a run is a pure function of (config, attack).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from enum import Enum

import numpy as np

from . import postproc, qcore
from .attacks import AttackModel, EveContext, EveTranscript, PublicChannel
from .qcore import BellKind


class ConfigError(ValueError):
    pass


class Variant(Enum):
    RANDOMIZATION = "randomization"
    MEASURE_RESEND = "measure-resend"


class BobAction(Enum):
    SIFT = "SIFT"
    CTRL = "CTRL"


@dataclass(frozen=True)
class ProtocolConfig:
    n_pairs: int
    variant: Variant = Variant.RANDOMIZATION
    bell_kind: BellKind = BellKind.PHI_PLUS
    sift_check_fraction: float = 0.5
    ctrl_error_threshold: float = 0.0
    sift_error_threshold: float = 0.0
    seed: int = 0
    block_size: int = 8
    safety_margin: int = 8

    def __post_init__(self):
        if isinstance(self.variant, str):
            object.__setattr__(self, "variant", Variant(self.variant))
        if isinstance(self.bell_kind, str):
            object.__setattr__(self, "bell_kind", BellKind(self.bell_kind))
        if not isinstance(self.n_pairs, (int, np.integer)) or self.n_pairs < 1:
            raise ConfigError(f"n_pairs must be a positive integer, got {self.n_pairs!r}")
        if not 0 < self.sift_check_fraction <= 1:
            raise ConfigError(f"sift_check_fraction must be in (0, 1], got {self.sift_check_fraction!r}")
        for name in ("ctrl_error_threshold", "sift_error_threshold"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ConfigError(f"{name} must be in [0, 1], got {v!r}")
        if not isinstance(self.seed, (int, np.integer)) or not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")
        if self.block_size < 1:
            raise ConfigError("block_size must be positive")
        if self.safety_margin < 0:
            raise ConfigError("safety_margin must be non-negative")

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["variant"] = self.variant.value
        d["bell_kind"] = self.bell_kind.value
        return d


@dataclass
class ParticleRecord:
    pair_index: int
    bob_action: BobAction
    bob_result: int | None = None
    forward_position: int = -1
    return_position: int = -1
    alice_bell_outcome: BellKind | None = None
    alice_a_bit: int | None = None
    alice_b_bit: int | None = None
    in_sift_check: bool = False

    def to_dict(self):
        return {
            "pair_index": self.pair_index,
            "bob_action": self.bob_action.value,
            "bob_result": self.bob_result,
            "forward_position": self.forward_position,
            "return_position": self.return_position,
            "alice_bell_outcome": None if self.alice_bell_outcome is None
            else self.alice_bell_outcome.value,
            "alice_a_bit": self.alice_a_bit,
            "alice_b_bit": self.alice_b_bit,
            "in_sift_check": self.in_sift_check,
        }


@dataclass
class BobOutput:
    actions: list
    results: list
    permutation: np.ndarray
    outgoing: list


@dataclass
class RunResult:
    config: ProtocolConfig
    attack_name: str
    ctrl_error_rate: float
    sift_check_error_rate: float
    first_check_passed: bool
    second_check_passed: bool
    alice_raw_key: np.ndarray
    bob_raw_key: np.ndarray
    alice_final_key: np.ndarray
    bob_final_key: np.ndarray
    leaked_bits: int
    eve_transcript: EveTranscript
    counts: dict
    records: list = field(repr=False)
    degenerate: tuple = ()

    @property
    def passed(self) -> bool:
        return self.first_check_passed and self.second_check_passed

    def summary(self) -> dict:
        return {
            "seed": self.config.seed,
            "ctrl_error_rate": self.ctrl_error_rate,
            "sift_check_error_rate": self.sift_check_error_rate,
            "first_check_passed": self.first_check_passed,
            "second_check_passed": self.second_check_passed,
            **self.counts,
            "raw_key_length": int(self.alice_raw_key.size),
            "raw_keys_equal": bool(np.array_equal(self.alice_raw_key, self.bob_raw_key)),
            "final_key_length": int(self.alice_final_key.size),
            "final_keys_equal": bool(np.array_equal(self.alice_final_key, self.bob_final_key)),
            "alice_final_key_hex": _hex(self.alice_final_key),
            "bob_final_key_hex": _hex(self.bob_final_key),
            "leaked_bits": self.leaked_bits,
            "degenerate": list(self.degenerate),
        }


def _hex(bits) -> str:
    return np.packbits(np.asarray(bits, dtype=np.uint8)).tobytes().hex()


def _emit(trace, trial, event, pair_index=None, position=None, **payload):
    if trace is not None:
        trace.append({"trial": trial, "event": event, "pair_index": pair_index,
                      "position": position, "payload": payload})


def party_streams(seed: int):
    """Independent generators for Alice, Bob, Eve and public randomness."""
    children = np.random.SeedSequence(seed).spawn(4)
    return [np.random.Generator(np.random.PCG64(s)) for s in children]


def alice_prepare(config: ProtocolConfig):
    """One Bell-pair group per pair index; registers are (A, B)."""
    return [qcore.new_bell_pair(config.bell_kind, i) for i in range(config.n_pairs)]


def _bob_common(incoming, rng, forced):
    n = len(incoming)
    if forced is None:
        actions = [BobAction.SIFT if u < 0.5 else BobAction.CTRL for u in rng.random(n)]
    else:
        actions = [BobAction(a) if isinstance(a, str) else a for a in forced]
        if len(actions) != n:
            raise ValueError(f"{len(actions)} forced actions for {n} particles")
    results = []
    for reg, act in zip(incoming, actions):
        results.append(qcore.measure_z(reg.group, reg, rng) if act is BobAction.SIFT else None)
    return actions, results


def bob_process_randomization(incoming, rng, forced=None) -> BobOutput:
    """SIFT/CTRL each particle, then return all of them in a uniformly random order.

    ``outgoing[j] = incoming[permutation[j]]``.
    """
    actions, results = _bob_common(incoming, rng, forced)
    perm = rng.permutation(len(incoming))
    return BobOutput(actions, results, perm, [incoming[k] for k in perm])


def bob_process_measure_resend(incoming, rng, forced=None) -> BobOutput:
    actions, results = _bob_common(incoming, rng, forced)
    return BobOutput(actions, results, np.arange(len(incoming)), list(incoming))


def invert_permutation(perm) -> np.ndarray:
    perm = np.asarray(perm)
    inv = np.empty_like(perm)
    inv[perm] = np.arange(perm.size)
    return inv


def _rate(errors, total):
    return errors / total if total else 0.0


def alice_first_check(ctrl_records, pairs, expected: BellKind, rng) -> float:
    """Bell-measure each CTRL pair; errors are outcomes other than ``expected``.

    ``pairs`` maps pair index to (Alice's A register, the register matched
    to it from the return leg).
    """
    errors = 0
    for rec in ctrl_records:
        a, b = pairs[rec.pair_index]
        group = qcore.ensure_joint([a, b])
        rec.alice_bell_outcome = qcore.measure_bell(group, a, b, rng)
        errors += rec.alice_bell_outcome is not expected
    return _rate(errors, len(ctrl_records))


def check_subset_size(n_sift: int, fraction: float) -> int:
    if n_sift == 0:
        return 0
    return min(n_sift, max(1, math.floor(fraction * n_sift + 0.5)))


def _sift_error(rec, flip):
    b = rec.alice_b_bit
    return rec.bob_result != b or rec.alice_a_bit != b ^ flip


def alice_second_check(sift_records, pairs, sift_check_fraction, rng,
                       bell_kind: BellKind = BellKind.PHI_PLUS) -> float:
    """Z-measure A and B of every SIFT pair, then compare a random subset with Bob.

    An error is Alice's B bit differing from Bob's, or her A bit breaking the
    Z correlation of ``bell_kind`` (equal for phi, opposite for psi).
    """
    for rec in sift_records:
        a, b = pairs[rec.pair_index]
        rec.alice_a_bit = qcore.measure_z(a.group, a, rng)
        rec.alice_b_bit = qcore.measure_z(b.group, b, rng)
    k = check_subset_size(len(sift_records), sift_check_fraction)
    chosen = rng.choice(len(sift_records), size=k, replace=False) if k else []
    flip = int(bell_kind.z_anticorrelated)
    errors = 0
    for idx in sorted(int(i) for i in chosen):
        rec = sift_records[idx]
        rec.in_sift_check = True
        errors += _sift_error(rec, flip)
    return _rate(errors, k)


def run_protocol(config: ProtocolConfig, attack: AttackModel | None = None, *,
                 trial: int = 0, trace: list | None = None,
                 forced_actions=None) -> RunResult:
    attack = AttackModel() if attack is None else attack
    n = config.n_pairs
    alice_rng, bob_rng, eve_rng, public_rng = party_streams(config.seed)
    public = PublicChannel(n)
    ctx = EveContext(eve_rng, public)

    # step 1: prepare and send
    groups = alice_prepare(config)
    a_regs = [g.registers[0] for g in groups]
    _emit(trace, trial, "prepare", n_pairs=n, bell_kind=config.bell_kind.value)
    arriving = []
    for i, g in enumerate(groups):
        wire = attack.on_forward(ctx, i, ctx._admit(g.registers[1]))
        arriving.append(ctx._resolve(wire))
        _emit(trace, trial, "forward", pair_index=i, position=i)

    # step 2 / 2'
    if config.variant is Variant.RANDOMIZATION:
        bob = bob_process_randomization(arriving, bob_rng, forced_actions)
    else:
        bob = bob_process_measure_resend(arriving, bob_rng, forced_actions)
    for i, (act, res) in enumerate(zip(bob.actions, bob.results)):
        _emit(trace, trial, "bob-action", pair_index=i, position=i,
              action=act.value, result=res)

    delivered = []
    for j, reg in enumerate(bob.outgoing):
        wire = attack.on_backward(ctx, j, ctx._admit(reg))
        delivered.append(ctx._resolve(wire))
        _emit(trace, trial, "return", pair_index=int(bob.permutation[j]), position=j)

    # step 3 / 3'
    public.confirm_receipt()
    public.announce_bob(bob.actions, bob.permutation)
    _emit(trace, trial, "announce",
          actions=[a.value for a in bob.actions],
          permutation=[int(k) for k in bob.permutation])
    transcript = attack.infer(ctx)

    inverse = invert_permutation(bob.permutation)
    records = [
        ParticleRecord(i, bob.actions[i], bob.results[i], forward_position=i,
                       return_position=int(inverse[i]))
        for i in range(n)
    ]
    pairs = {i: (a_regs[i], delivered[inverse[i]]) for i in range(n)}
    ctrl = [r for r in records if r.bob_action is BobAction.CTRL]
    sift = [r for r in records if r.bob_action is BobAction.SIFT]

    # step 4
    ctrl_rate = alice_first_check(ctrl, pairs, config.bell_kind, alice_rng)
    ctrl_errors = sum(r.alice_bell_outcome is not config.bell_kind for r in ctrl)
    first_ok = ctrl_rate <= config.ctrl_error_threshold
    _emit(trace, trial, "check", check="ctrl", samples=len(ctrl), errors=ctrl_errors,
          rate=ctrl_rate, passed=first_ok)

    # step 5
    sift_rate = alice_second_check(sift, pairs, config.sift_check_fraction, alice_rng,
                                   config.bell_kind)
    checked = [r for r in sift if r.in_sift_check]
    flip = int(config.bell_kind.z_anticorrelated)
    sift_errors = sum(_sift_error(r, flip) for r in checked)
    public.announce_sift_check([r.pair_index for r in checked],
                               {r.pair_index: r.bob_result for r in checked})
    second_ok = sift_rate <= config.sift_error_threshold
    _emit(trace, trial, "check", check="sift", samples=len(checked), errors=sift_errors,
          rate=sift_rate, passed=second_ok, subset=[r.pair_index for r in checked])

    degenerate = tuple(name for name, k in (("ctrl", len(ctrl)), ("sift", len(checked))) if k == 0)

    # raw key from unchecked SIFT pairs, in pair order
    key_recs = [r for r in sift if not r.in_sift_check]
    passed = first_ok and second_ok
    if passed:
        alice_raw = np.array([r.alice_b_bit for r in key_recs], dtype=np.uint8)
        bob_raw = np.array([r.bob_result for r in key_recs], dtype=np.uint8)
    else:
        alice_raw = bob_raw = np.zeros(0, dtype=np.uint8)
    _emit(trace, trial, "key", raw_length=int(alice_raw.size), aborted=not passed)

    # step 6
    alice_final = bob_final = np.zeros(0, dtype=np.uint8)
    leaked = 0
    if passed and alice_raw.size:
        log = []
        ka, kb = postproc.parity_block_reconcile(
            postproc.KeyMaterial(alice_raw, postproc.Origin.RAW_ALICE),
            postproc.KeyMaterial(bob_raw, postproc.Origin.RAW_BOB),
            config.block_size, public_rng, log)
        leaked = ka.leaked_bits
        m = postproc.recommend_output_length(len(ka), leaked, config.safety_margin)
        seed_bits = public_rng.integers(0, 2, size=max(len(ka) + m - 1, 0), dtype=np.uint8)
        alice_final = postproc.privacy_amplify(ka, m, seed_bits).bits
        bob_final = postproc.privacy_amplify(kb, m, seed_bits).bits
        _emit(trace, trial, "key", stage="reconcile", blocks=log,
              corrected_length=len(ka), leaked_bits=leaked)
        _emit(trace, trial, "key", stage="privacy-amplification",
              hash_seed=_hex(seed_bits), hash_seed_bits=int(seed_bits.size),
              final_length=int(m))

    counts = {
        "n_ctrl": len(ctrl),
        "n_sift": len(sift),
        "n_sift_checked": len(checked),
        "ctrl_errors": int(ctrl_errors),
        "sift_check_errors": int(sift_errors),
    }
    return RunResult(
        config=config,
        attack_name=attack.name,
        ctrl_error_rate=ctrl_rate,
        sift_check_error_rate=sift_rate,
        first_check_passed=first_ok,
        second_check_passed=second_ok,
        alice_raw_key=alice_raw,
        bob_raw_key=bob_raw,
        alice_final_key=alice_final,
        bob_final_key=bob_final,
        leaked_bits=leaked,
        eve_transcript=transcript,
        counts=counts,
        records=records,
        degenerate=degenerate,
    )
