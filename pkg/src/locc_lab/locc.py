"""Two-party LOCC sessions with metered resources and a replayable trace.

A session owns one global pure state.  Every qubit belongs to Alice, Bob,
or (for equivalence checking only) to an inert reference system that
neither party may touch.  Local gates and measurements are checked against
ownership; classical bits, e-bits and granted nonlocal gates are counted on
the ledger and recorded in the trace.

Measurement branching: under ``Sample(seed)`` one outcome is drawn with its
Born probability.  Under ``EnumerateAll()`` a protocol is re-executed once
per outcome path by :func:`run_branches`; each execution follows a forced
path of choices, so the same protocol function covers both policies.
"""
from __future__ import annotations

import enum
import json
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable, ClassVar, Optional, Sequence

import numpy as np

from . import statevec as sv
from .statevec import GateSpec, PureState


class Party(str, enum.Enum):
    ALICE = "Alice"
    BOB = "Bob"

    @property
    def other(self) -> "Party":
        return Party.BOB if self is Party.ALICE else Party.ALICE


REFERENCE = "Reference"

A_TO_B = "A->B"
B_TO_A = "B->A"
DIRECTIONS = (A_TO_B, B_TO_A)


def sender(direction: str) -> Party:
    return {A_TO_B: Party.ALICE, B_TO_A: Party.BOB}[direction]


def receiver(direction: str) -> Party:
    return sender(direction).other


def direction_from(party: Party) -> str:
    return A_TO_B if party is Party.ALICE else B_TO_A


class LoccError(Exception):
    pass


class LocalityViolation(LoccError):
    """A party tried to act on a qubit it does not own."""


class NoGrant(LoccError):
    """A nonlocal gate was used without an unconsumed grant."""


class NoMessage(LoccError):
    """A party tried to read a classical bit that was never sent to it."""


# --- policies ---------------------------------------------------------------

@dataclass(frozen=True)
class EnumerateAll:
    name: ClassVar[str] = "all"


@dataclass(frozen=True)
class Sample:
    seed: int = 0
    name: ClassVar[str] = "sample"


BranchPolicy = EnumerateAll | Sample


# --- ledger and trace -------------------------------------------------------

@dataclass
class ResourceLedger:
    ebits_consumed: int = 0
    bits_a_to_b: int = 0
    bits_b_to_a: int = 0
    nonlocal_gate_uses: dict[str, int] = field(default_factory=dict)

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.ebits_consumed, self.bits_a_to_b, self.bits_b_to_a)

    def to_dict(self) -> dict:
        return {
            "type": "ledger",
            "ebits_consumed": self.ebits_consumed,
            "bits_a_to_b": self.bits_a_to_b,
            "bits_b_to_a": self.bits_b_to_a,
            "nonlocal_gate_uses": dict(sorted(self.nonlocal_gate_uses.items())),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ResourceLedger":
        return cls(
            d["ebits_consumed"], d["bits_a_to_b"], d["bits_b_to_a"],
            dict(d.get("nonlocal_gate_uses", {})),
        )

    def __eq__(self, other):
        if not isinstance(other, ResourceLedger):
            return NotImplemented
        strip = lambda m: {k: v for k, v in m.items() if v}
        return (self.as_tuple() == other.as_tuple()
                and strip(self.nonlocal_gate_uses) == strip(other.nonlocal_gate_uses))

    def __str__(self):
        gates = ", ".join(f"{k}x{v}" for k, v in sorted(self.nonlocal_gate_uses.items()) if v)
        return (f"ebits={self.ebits_consumed} A->B={self.bits_a_to_b} "
                f"B->A={self.bits_b_to_a} gates=[{gates}]")


@dataclass(frozen=True)
class Event:
    type: ClassVar[str] = "event"

    def to_json(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class StatePrepared(Event):
    party: str
    labels: tuple[str, ...]
    state: PureState
    # per-qubit owners, only for reference-pair inputs that straddle owners
    owners: Optional[tuple[str, ...]] = None
    type: ClassVar[str] = "StatePrepared"

    def to_json(self):
        d = {"type": self.type, "party": self.party, "targets": list(self.labels)}
        if self.owners is not None:
            d["owners"] = list(self.owners)
        return d


@dataclass(frozen=True)
class EbitAllocated(Event):
    labels: tuple[str, str]
    type: ClassVar[str] = "EbitAllocated"

    def to_json(self):
        return {"type": self.type, "targets": list(self.labels)}


@dataclass(frozen=True)
class LocalGate(Event):
    party: str
    gate: GateSpec
    targets: tuple[str, ...]
    type: ClassVar[str] = "LocalGate"

    def to_json(self):
        return {"type": self.type, "party": self.party, "gate": self.gate.name,
                "targets": list(self.targets)}


@dataclass(frozen=True)
class NonlocalGate(Event):
    gate: GateSpec
    targets: tuple[str, ...]
    type: ClassVar[str] = "NonlocalGate"

    def to_json(self):
        return {"type": self.type, "gate": self.gate.name, "targets": list(self.targets)}


@dataclass(frozen=True)
class Measure(Event):
    party: str
    kind: str
    targets: tuple[str, ...]
    outcome: Any
    probability: float
    type: ClassVar[str] = "Measure"

    def to_json(self):
        return {"type": self.type, "party": self.party, "gate": self.kind,
                "targets": list(self.targets), "outcome": self.outcome,
                "probability": self.probability}


@dataclass(frozen=True)
class ClassicalMessage(Event):
    direction: str
    bit: int
    type: ClassVar[str] = "ClassicalMessage"

    def to_json(self):
        return {"type": self.type, "direction": self.direction, "bit": self.bit}


def ledger_from_trace(trace: Sequence[Event]) -> ResourceLedger:
    led = ResourceLedger()
    for ev in trace:
        if isinstance(ev, EbitAllocated):
            led.ebits_consumed += 1
        elif isinstance(ev, ClassicalMessage):
            if ev.direction == A_TO_B:
                led.bits_a_to_b += 1
            else:
                led.bits_b_to_a += 1
        elif isinstance(ev, NonlocalGate):
            led.nonlocal_gate_uses[ev.gate.name] = led.nonlocal_gate_uses.get(ev.gate.name, 0) + 1
    return led


def replay(trace: Sequence[Event]) -> PureState:
    """Rebuild the final state from the empty register by re-applying events."""
    state = sv.empty_state()
    for ev in trace:
        state = _replay_step(state, ev)
    return state


def _replay_step(state: PureState, ev: Event) -> PureState:
    if isinstance(ev, StatePrepared):
        return sv.tensor(state, ev.state)
    if isinstance(ev, EbitAllocated):
        return sv.tensor(state, sv.phi_plus(*ev.labels))
    if isinstance(ev, (LocalGate, NonlocalGate)):
        return sv.apply_gate(state, ev.gate, ev.targets)
    if isinstance(ev, Measure):
        return sv.project(state, ev.kind, ev.targets, ev.outcome).post_state
    return state


def replay_states(trace: Sequence[Event]):
    """Yield ``(event, state_after_event)`` pairs."""
    state = sv.empty_state()
    for ev in trace:
        state = _replay_step(state, ev)
        yield ev, state


def owners_from_trace(trace: Sequence[Event]) -> dict[str, str]:
    owners = {}
    for ev in trace:
        if isinstance(ev, StatePrepared):
            parties = ev.owners or (ev.party,) * len(ev.labels)
            owners.update(zip(ev.labels, parties))
        elif isinstance(ev, EbitAllocated):
            owners[ev.labels[0]] = Party.ALICE.value
            owners[ev.labels[1]] = Party.BOB.value
    return owners


def cut_entropy(state: PureState, owners: dict[str, str]) -> float:
    """Entropy of Alice's qubits, i.e. across the Alice | everyone-else cut."""
    part = [lab for lab in state.labels if owners.get(lab) == Party.ALICE.value]
    if not part or len(part) == state.n:
        return 0.0
    return sv.entanglement_entropy(state, part)


# --- JSON lines -------------------------------------------------------------

def to_jsonl(trace: Sequence[Event], ledger: ResourceLedger) -> str:
    lines = [json.dumps(ev.to_json()) for ev in trace]
    lines.append(json.dumps(ledger.to_dict()))
    return "\n".join(lines) + "\n"


def parse_jsonl(text: str) -> tuple[list[dict], ResourceLedger]:
    records = [json.loads(line) for line in text.splitlines() if line.strip()]
    if not records or records[-1].get("type") != "ledger":
        raise ValueError("stream must end with a ledger record")
    return records[:-1], ResourceLedger.from_dict(records[-1])


# --- session ----------------------------------------------------------------

class LoccSession:
    """One run of a two-party protocol.

    Use :func:`new_session` to make a standalone session; under
    ``EnumerateAll`` a standalone session follows the first branch of every
    measurement, and :func:`run_branches` drives the full enumeration.
    """

    def __init__(self, policy: BranchPolicy = EnumerateAll(), forced_path: Sequence[int] = ()):
        self.policy = policy
        self.state = sv.empty_state()
        self.ownership: dict[str, str] = {}
        self.ledger = ResourceLedger()
        self.trace: list[Event] = []
        self.probability = 1.0
        self.rng = np.random.default_rng(policy.seed) if isinstance(policy, Sample) else None
        self._forced = list(forced_path)
        self._depth = 0
        self.fanout: list[tuple[int, int]] = []
        self._grants: dict[str, int] = {}
        self._inbox = {Party.ALICE: deque(), Party.BOB: deque()}
        self._counter = 0

    # bookkeeping
    def owner(self, label: str) -> str:
        try:
            return self.ownership[label]
        except KeyError:
            raise sv.StateError(f"unknown qubit {label!r}") from None

    def qubits_of(self, party: Party) -> list[str]:
        return [lab for lab in self.state.labels if self.ownership[lab] == party.value]

    def fresh_label(self, prefix: str) -> str:
        while True:
            self._counter += 1
            lab = f"{prefix}{self._counter}"
            if lab not in self.ownership:
                return lab

    def cut_entropy(self) -> float:
        return cut_entropy(self.state, self.ownership)

    def _add(self, state: PureState, owners: dict[str, str]):
        self.state = sv.tensor(self.state, state)
        self.ownership.update(owners)

    def _check_owned(self, party: Party, targets: Sequence[str]):
        for t in targets:
            if self.owner(t) != party.value:
                raise LocalityViolation(
                    f"{party.value} cannot act on {t!r} (owned by {self.ownership[t]})"
                )

    def _choose(self, table) -> int:
        """Index into a ``_branch_table`` according to the policy."""
        if isinstance(self.policy, Sample):
            u = self.rng.random() * sum(p for _, p, _ in table)
            pick = len(table) - 1
            for i, (_, p, _) in enumerate(table):
                u -= p
                if u < 0:
                    pick = i
                    break
        elif self._depth < len(self._forced):
            pick = self._forced[self._depth]
        else:
            pick = 0
            self.fanout.append((self._depth, len(table)))
        self._depth += 1
        return pick

    # operations
    def prepare_local(self, party: Party, state: PureState) -> None:
        party = Party(party)
        self._add(state, {lab: party.value for lab in state.labels})
        self.trace.append(StatePrepared(party.value, state.labels, state))

    def prepare_reference(self, state: PureState, owners: dict[str, Party]) -> None:
        """Prepare a state shared between the inert reference and the parties.

        Labels missing from ``owners`` go to the reference.  Not metered:
        this models inputs handed to the protocol, not a resource it spends.
        """
        mapping = {lab: Party(owners[lab]).value if lab in owners else REFERENCE
                   for lab in state.labels}
        self._add(state, mapping)
        self.trace.append(StatePrepared(REFERENCE, state.labels, state,
                                        tuple(mapping[lab] for lab in state.labels)))

    def allocate_ebit(self, label_a: str, label_b: str) -> None:
        self._add(sv.phi_plus(label_a, label_b),
                  {label_a: Party.ALICE.value, label_b: Party.BOB.value})
        self.ledger.ebits_consumed += 1
        self.trace.append(EbitAllocated((label_a, label_b)))

    def local_gate(self, party: Party, gate: GateSpec, targets: Sequence[str]) -> None:
        party = Party(party)
        targets = tuple(targets)
        self._check_owned(party, targets)
        self.state = sv.apply_gate(self.state, gate, targets)
        self.trace.append(LocalGate(party.value, gate, targets))

    def local_measure(self, party: Party, kind: str, targets: Sequence[str]):
        party = Party(party)
        targets = tuple(targets)
        self._check_owned(party, targets)
        table = sv._branch_table(self.state, kind, targets)
        token, p, build = table[self._choose(table)]
        self.state = build()
        self.probability *= p
        self.trace.append(Measure(party.value, kind, targets, token, p))
        return token

    def send_bit(self, direction: str, bit: int) -> None:
        if direction not in DIRECTIONS:
            raise LoccError(f"unknown direction {direction!r}")
        bit = int(bit)
        if direction == A_TO_B:
            self.ledger.bits_a_to_b += 1
        else:
            self.ledger.bits_b_to_a += 1
        self._inbox[receiver(direction)].append(bit)
        self.trace.append(ClassicalMessage(direction, bit))

    def receive_bit(self, party: Party) -> int:
        box = self._inbox[Party(party)]
        if not box:
            raise NoMessage(f"no classical bit has been sent to {Party(party).value}")
        return box.popleft()

    def grant_nonlocal_gate(self, gate: GateSpec, count: int = 1) -> None:
        self._grants[gate.name] = self._grants.get(gate.name, 0) + count

    def use_nonlocal_gate(self, gate: GateSpec, targets: Sequence[str]) -> None:
        if self._grants.get(gate.name, 0) < 1:
            raise NoGrant(f"no unconsumed grant for {gate.name}")
        targets = tuple(targets)
        for t in targets:
            if self.owner(t) == REFERENCE:
                raise LocalityViolation(f"reference qubit {t!r} is not addressable")
        self.state = sv.apply_gate(self.state, gate, targets)
        self._grants[gate.name] -= 1
        uses = self.ledger.nonlocal_gate_uses
        uses[gate.name] = uses.get(gate.name, 0) + 1
        self.trace.append(NonlocalGate(gate, targets))


def new_session(policy: BranchPolicy = EnumerateAll()) -> LoccSession:
    return LoccSession(policy)


# module-level aliases mirroring the session methods
def prepare_local(sess: LoccSession, party: Party, state: PureState) -> None:
    sess.prepare_local(party, state)


def allocate_ebit(sess: LoccSession, label_a: str, label_b: str) -> None:
    sess.allocate_ebit(label_a, label_b)


def local_gate(sess: LoccSession, party: Party, gate: GateSpec, targets: Sequence[str]) -> None:
    sess.local_gate(party, gate, targets)


def local_measure(sess: LoccSession, party: Party, kind: str, targets: Sequence[str]):
    return sess.local_measure(party, kind, targets)


def send_bit(sess: LoccSession, direction: str, bit: int) -> None:
    sess.send_bit(direction, bit)


def grant_nonlocal_gate(sess: LoccSession, gate: GateSpec, count: int = 1) -> None:
    sess.grant_nonlocal_gate(gate, count)


def use_nonlocal_gate(sess: LoccSession, gate: GateSpec, targets: Sequence[str]) -> None:
    sess.use_nonlocal_gate(gate, targets)


# --- branch driver ----------------------------------------------------------

@dataclass
class Branch:
    session: LoccSession
    result: Any
    path: tuple[int, ...]

    @property
    def probability(self) -> float:
        return self.session.probability


def run_branches(protocol: Callable[[LoccSession], Any],
                 policy: BranchPolicy = EnumerateAll()) -> list[Branch]:
    """Run ``protocol`` on fresh sessions, once per measurement branch.

    Under ``Sample`` this is a single run.  Under ``EnumerateAll`` the
    protocol is re-executed along every outcome path (depth first); the
    returned path probabilities sum to one.
    """
    if isinstance(policy, Sample):
        sess = LoccSession(policy)
        return [Branch(sess, protocol(sess), ())]
    out = []
    stack: list[tuple[int, ...]] = [()]
    while stack:
        path = stack.pop()
        sess = LoccSession(policy, forced_path=path)
        result = protocol(sess)
        out.append(Branch(sess, result, path + tuple(0 for _ in sess.fanout)))
        for depth, count in sess.fanout:
            prefix = path + (0,) * (depth - len(path))
            for j in range(count - 1, 0, -1):
                stack.append(prefix + (j,))
    out.sort(key=lambda b: b.path)
    return out
