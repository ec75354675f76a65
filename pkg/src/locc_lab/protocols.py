"""Nonlocal-gate and communication protocols run inside a LoccSession.

Session-level functions take a session (plus qubit labels or messages) and
return output labels or decoded bits; the caller grants any nonlocal gate
the protocol spends.  Labels follow the spin names used throughout (A, a,
B, b, b1, b2) and fall back to fresh names when already taken.

Two-bit messages are ``(z_bit, x_bit)``: the first bit selects a sigma_z
factor and the second a sigma_x factor, so (0,0), (0,1), (1,0), (1,1) are
encoded by 1, sigma_x, sigma_z, sigma_y and land on Phi+, Psi+, Phi-, Psi-.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import statevec as sv
from .locc import (A_TO_B, B_TO_A, EnumerateAll, LoccSession, Party,
                   ResourceLedger, Sample, receiver, run_branches, sender)

ALICE, BOB = Party.ALICE, Party.BOB

BELL_DECODE = {"Phi+": (0, 0), "Psi+": (0, 1), "Phi-": (1, 0), "Psi-": (1, 1)}
BELL_ENCODE = {(0, 0): sv.I, (0, 1): sv.X, (1, 0): sv.Z, (1, 1): sv.Y}
MESSAGES_2BIT = tuple(BELL_ENCODE)

# Alice's disentangling maps on (A, a) after the parity measurement.
# even branch: up,up -> up,up ; down,down -> down,up   (a CNOT)
# odd branch:  up,down -> up,up ; down,up -> down,up   (NOT on a unless A is down)
DISENTANGLE_EVEN = sv.custom_gate("DISENTANGLE_EVEN", sv.CNOT.matrix)
DISENTANGLE_ODD = sv.custom_gate(
    "DISENTANGLE_ODD", [[0, 1, 0, 0], [1, 0, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1]]
)
ZZ = sv.kron_gates("ZZ", sv.Z, sv.Z)
XX = sv.kron_gates("XX", sv.X, sv.X)

Guess = Callable[[int], int]


def _name(sess: LoccSession, want: str) -> str:
    return want if want not in sess.ownership else sess.fresh_label(want + "_")


def _check_msg(msg) -> tuple[int, int]:
    msg = tuple(int(b) for b in msg)
    if msg not in BELL_ENCODE:
        raise ValueError(f"two-bit message expected, got {msg}")
    return msg


def _transmit(sess: LoccSession, direction: str, bits, guess: Optional[Guess]) -> list[int]:
    """Send ``bits`` and return what the receiver reads.

    With ``guess`` the channel is skipped and the receiver uses
    ``guess(true_bit)`` instead; nothing is metered.
    """
    if guess is not None:
        return [int(guess(b)) for b in bits]
    for b in bits:
        sess.send_bit(direction, b)
    return [sess.receive_bit(receiver(direction)) for _ in bits]


# --- teleportation and gate implementation ----------------------------------

def teleport(sess: LoccSession, source: str, direction: str = A_TO_B,
             guess: Optional[Guess] = None) -> str:
    """Teleport ``source`` to a fresh qubit of the receiver; returns its label.

    Spends 1 e-bit and 2 bits in ``direction``.
    """
    snd = sender(direction)
    rcv = snd.other
    near = sess.fresh_label("tx")
    far = sess.fresh_label("rx")
    if snd is ALICE:
        sess.allocate_ebit(near, far)
    else:
        sess.allocate_ebit(far, near)
    outcome = sess.local_measure(snd, sv.BELL, [source, near])
    z_bit, x_bit = _transmit(sess, direction, BELL_DECODE[outcome], guess)
    if x_bit:
        sess.local_gate(rcv, sv.X, [far])
    if z_bit:
        sess.local_gate(rcv, sv.Z, [far])
    return far


def implement_gate_via_teleportation(sess: LoccSession, gate: sv.GateSpec,
                                     alice_q: str, bob_q: str,
                                     guess: Optional[Guess] = None) -> tuple[str, str]:
    """Teleport Alice's qubit to Bob, apply ``gate`` locally, teleport back.

    ``gate`` acts on (Alice's qubit, Bob's qubit).  Returns the labels now
    holding those two slots.  Costs 2 e-bits and 2 bits each way.
    """
    moved = teleport(sess, alice_q, A_TO_B, guess)
    sess.local_gate(BOB, gate, [moved, bob_q])
    back = teleport(sess, moved, B_TO_A, guess)
    return back, bob_q


def remote_cnot(sess: LoccSession, control: str, target: str) -> tuple[str, str]:
    """CNOT from Alice's ``control`` onto Bob's ``target``.

    One e-bit, one bit each way.  The ancillas end as up (Alice) and +/- (Bob).
    """
    a = _name(sess, "a")
    b = _name(sess, "b")
    sess.allocate_ebit(a, b)

    parity = sess.local_measure(ALICE, sv.Z_PARITY, [control, a])
    sess.local_gate(ALICE, DISENTANGLE_EVEN if parity == 0 else DISENTANGLE_ODD, [control, a])
    sess.send_bit(A_TO_B, parity)
    if sess.receive_bit(BOB):
        sess.local_gate(BOB, sv.X, [b])

    sess.local_gate(BOB, sv.CNOT, [b, target])

    x = sess.local_measure(BOB, sv.X_BASIS, [b])
    sess.send_bit(B_TO_A, x)
    if sess.receive_bit(ALICE):
        sess.local_gate(ALICE, sv.PHASE_PI, [control])
    return control, target


def teleport_via_nonlocal_cnot(sess: LoccSession, source: str,
                               direction: str = A_TO_B) -> str:
    """Move ``source`` to a fresh receiver qubit with 1 CNOT and 1 bit."""
    snd = sender(direction)
    rcv = snd.other
    dest = sess.fresh_label("cx")
    sess.prepare_local(rcv, sv.basis_state("0", [dest]))
    sess.use_nonlocal_gate(sv.CNOT, [source, dest])
    m = sess.local_measure(snd, sv.X_BASIS, [source])
    sess.send_bit(direction, m)
    if sess.receive_bit(rcv):
        sess.local_gate(rcv, sv.PHASE_PI, [dest])
    return dest


def swap_from_two_cnots(sess: LoccSession, alice_q: str, bob_q: str) -> tuple[str, str]:
    """SWAP as two CNOT-teleportations; returns (Alice's output, Bob's output)."""
    bob_out = teleport_via_nonlocal_cnot(sess, alice_q, A_TO_B)
    alice_out = teleport_via_nonlocal_cnot(sess, bob_q, B_TO_A)
    return alice_out, bob_out


# --- entanglement generation ------------------------------------------------

def cnot_creates_ebit(sess: LoccSession) -> tuple[str, str]:
    A, B = _name(sess, "A"), _name(sess, "B")
    sess.prepare_local(ALICE, sv.qubit(1, 1, A))
    sess.prepare_local(BOB, sv.basis_state("0", [B]))
    sess.use_nonlocal_gate(sv.CNOT, [A, B])
    return A, B


def _two_local_pairs_then(sess: LoccSession, gate: sv.GateSpec) -> tuple[str, ...]:
    A, a, B, b = (_name(sess, x) for x in ("A", "a", "B", "b"))
    sess.prepare_local(ALICE, sv.phi_plus(A, a))
    sess.prepare_local(BOB, sv.phi_plus(B, b))
    sess.use_nonlocal_gate(gate, [A, B])
    return A, a, B, b


def swap_generates_two_ebits(sess: LoccSession) -> tuple[str, ...]:
    return _two_local_pairs_then(sess, sv.SWAP)


def dcnot_creates_two_ebits(sess: LoccSession) -> tuple[str, ...]:
    return _two_local_pairs_then(sess, sv.DCNOT)


# --- communication ----------------------------------------------------------

def _encode(sess: LoccSession, party: Party, qubit: str, msg) -> None:
    gate = BELL_ENCODE[_check_msg(msg)]
    if gate is not sv.I:
        sess.local_gate(party, gate, [qubit])


def _bell_read(sess: LoccSession, party: Party, pair) -> tuple[int, int]:
    return BELL_DECODE[sess.local_measure(party, sv.BELL, list(pair))]


def swap_superdense_bidirectional(sess: LoccSession, alice_msg, bob_msg):
    """2 bits each way through one SWAP and two shared e-bits.

    Returns ``(bob_received, alice_received)``.
    """
    A, B, a, b = (_name(sess, x) for x in ("A", "B", "a", "b"))
    sess.allocate_ebit(A, B)
    sess.allocate_ebit(a, b)
    _encode(sess, ALICE, A, alice_msg)
    _encode(sess, BOB, b, bob_msg)
    sess.use_nonlocal_gate(sv.SWAP, [A, b])
    bob_received = _bell_read(sess, BOB, (b, B))
    alice_received = _bell_read(sess, ALICE, (a, A))
    return bob_received, alice_received


def cnot_bidirectional_bits(sess: LoccSession, a_bit: int, b_bit: int,
                            pair: Optional[tuple[str, str]] = None):
    """1 bit each way through one CNOT and one e-bit.

    ``pair`` reuses an existing Phi+ pair (Alice's half first) instead of
    allocating a fresh e-bit.  Returns ``(bob_received, alice_received)``.
    """
    if pair is None:
        a, b = _name(sess, "a"), _name(sess, "b")
        sess.allocate_ebit(a, b)
    else:
        a, b = pair
    if a_bit:
        sess.local_gate(ALICE, sv.X, [a])
    if b_bit:
        sess.local_gate(BOB, sv.PHASE_PI, [b])
    sess.use_nonlocal_gate(sv.CNOT, [a, b])
    bob_received = sess.local_measure(BOB, sv.Z_BASIS, [b])
    alice_received = sess.local_measure(ALICE, sv.X_BASIS, [a])
    return bob_received, alice_received


def dcnot_bidirectional_bits(sess: LoccSession, alice_msg, bob_msg):
    """2 bits each way through one DCNOT and two e-bits.

    The e-bits are shared as (a, B) and (A, b); Alice's local CNOT a->A turns
    them into up-up-up-up + down-up-up-down + down-down-down-up +
    up-down-down-down on (A, a, B, b).  Returns ``(bob_received, alice_received)``.
    """
    alice_msg, bob_msg = _check_msg(alice_msg), _check_msg(bob_msg)
    A, a, B, b = (_name(sess, x) for x in ("A", "a", "B", "b"))
    sess.allocate_ebit(a, B)
    sess.allocate_ebit(A, b)
    sess.local_gate(ALICE, sv.CNOT, [a, A])

    if alice_msg[0]:
        sess.local_gate(ALICE, ZZ, [A, a])
    if alice_msg[1]:
        sess.local_gate(ALICE, sv.X, [A])
    if bob_msg[0]:
        sess.local_gate(BOB, sv.Z, [B])
    if bob_msg[1]:
        sess.local_gate(BOB, XX, [B, b])

    sess.use_nonlocal_gate(sv.DCNOT, [A, B])
    bob_received = _bell_read(sess, BOB, (B, b))
    alice_received = _bell_read(sess, ALICE, (A, a))
    return bob_received, alice_received


def catalysed_two_bits_via_swap(sess: LoccSession, alice_msg):
    """Alice sends 2 bits with 1 SWAP; the shared e-bit survives on (A, b2)."""
    A, b1, B, b2 = (_name(sess, x) for x in ("A", "b1", "B", "b2"))
    sess.allocate_ebit(A, b1)
    sess.prepare_local(BOB, sv.phi_plus(B, b2))
    _encode(sess, ALICE, A, alice_msg)
    sess.use_nonlocal_gate(sv.SWAP, [A, B])
    return _bell_read(sess, BOB, (B, b1))


def cnot_sends_bit(sess: LoccSession, direction: str, bit: int) -> int:
    """One bit through one CNOT (control on Alice, target on Bob)."""
    c, t = _name(sess, "A"), _name(sess, "B")
    if direction == A_TO_B:
        sess.prepare_local(ALICE, sv.basis_state(str(int(bit)), [c]))
        sess.prepare_local(BOB, sv.basis_state("0", [t]))
        sess.use_nonlocal_gate(sv.CNOT, [c, t])
        return sess.local_measure(BOB, sv.Z_BASIS, [t])
    if direction == B_TO_A:
        # phase kickback: target |->  flips the control |+> to |->
        sess.prepare_local(ALICE, sv.qubit(1, 1, c))
        sess.prepare_local(BOB, sv.qubit(1, -1 if bit else 1, t))
        sess.use_nonlocal_gate(sv.CNOT, [c, t])
        return sess.local_measure(ALICE, sv.X_BASIS, [c])
    raise ValueError(f"unknown direction {direction!r}")


def two_cnots_bits_via_ebit(sess: LoccSession, a_bit: int, b_bit: int):
    """The composed route: one CNOT makes an e-bit, the other carries 1+1 bits."""
    pair = cnot_creates_ebit(sess)
    return cnot_bidirectional_bits(sess, a_bit, b_bit, pair=pair)


# --- guessing experiment ----------------------------------------------------

def guessing_swap_trial(rng: np.random.Generator, force_correct: bool = False) -> bool:
    """One instantaneous double-teleportation SWAP with guessed corrections."""
    sess = LoccSession(Sample(int(rng.integers(2**32))))
    psi = sv.random_state(["A"], rng)
    phi = sv.random_state(["B"], rng)
    sess.prepare_local(ALICE, psi)
    sess.prepare_local(BOB, phi)
    if force_correct:
        guess = lambda true_bit: true_bit
    else:
        guess = lambda true_bit: int(rng.integers(2))
    alice_out, bob_out = implement_gate_via_teleportation(sess, sv.SWAP, "A", "B", guess=guess)
    got = sv.factor_out(sess.state, [alice_out, bob_out])
    want = sv.tensor(sv.relabel(phi, {"B": alice_out}), sv.relabel(psi, {"A": bob_out}))
    return sv.equal_up_to_global_phase(got, want)


def guessing_swap_experiment(trials: int, seed: int = 0, force_correct: bool = False) -> float:
    """Fraction of guessed-bit SWAP runs that still match the ideal SWAP."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    wins = sum(guessing_swap_trial(rng, force_correct) for _ in range(trials))
    return wins / trials


# --- reports ----------------------------------------------------------------

@dataclass
class ProtocolReport:
    name: str
    ledger: ResourceLedger
    final_entropy_across_cut: Optional[float]
    success: bool
    branches_checked: int
    decoded_bits: Optional[list] = None
    notes: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "type": "ProtocolReport",
            "name": self.name,
            "decoded_bits": self.decoded_bits,
            "final_entropy_across_cut": self.final_entropy_across_cut,
            "ledger": self.ledger.to_dict(),
            "success": self.success,
            "branches_checked": self.branches_checked,
            "notes": list(self.notes),
        }

    @classmethod
    def from_json(cls, d: dict) -> "ProtocolReport":
        return cls(d["name"], ResourceLedger.from_dict(d["ledger"]),
                   d["final_entropy_across_cut"], d["success"], d["branches_checked"],
                   d.get("decoded_bits"), list(d.get("notes", [])))


def run_report(name: str, body: Callable[[LoccSession], object],
               check: Callable[[object, LoccSession], bool],
               policy=EnumerateAll(), decoded: Optional[list] = None) -> ProtocolReport:
    """Run ``body`` under ``policy``; success iff ``check`` holds on every branch
    and all branches agree on the ledger."""
    branches = run_branches(body, policy)
    ledgers = [b.session.ledger for b in branches]
    ok = all(check(b.result, b.session) for b in branches)
    notes = []
    if any(led != ledgers[0] for led in ledgers):
        ok = False
        notes.append("ledger differs between branches")
    total_p = sum(b.probability for b in branches)
    if isinstance(policy, EnumerateAll) and abs(total_p - 1) > 1e-10:
        ok = False
        notes.append(f"branch probabilities sum to {total_p}")
    return ProtocolReport(
        name=name,
        ledger=ledgers[0],
        final_entropy_across_cut=branches[0].session.cut_entropy(),
        success=bool(ok),
        branches_checked=len(branches),
        decoded_bits=decoded,
    )
