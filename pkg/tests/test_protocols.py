import itertools

import numpy as np
import pytest

from locc_lab import protocols as pr
from locc_lab import statevec as sv
from locc_lab.locc import (A_TO_B, B_TO_A, EnumerateAll, LoccSession, Party, Sample,
                           replay_states, run_branches)

import oracles

ALICE, BOB = Party.ALICE, Party.BOB
CNOT_M = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]])
SWAP_M = np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]])


def state_after(trace, event_type, nth=0):
    """State right after the ``nth`` event of ``event_type``."""
    seen = 0
    for ev, state in replay_states(trace):
        if ev.type == event_type:
            if seen == nth:
                return state
            seen += 1
    raise LookupError(event_type)


def vec_on(state, labels):
    """Amplitudes of the factor on ``labels`` (in that order)."""
    return sv.permute(sv.factor_out(state, labels), labels).amplitudes


def run_two_qubit(runner, psi, phi, grants=()):
    def body(sess):
        for g in grants:
            sess.grant_nonlocal_gate(g)
        sess.prepare_local(ALICE, sv.PureState(psi, ("A",)))
        sess.prepare_local(BOB, sv.PureState(phi, ("B",)))
        return runner(sess, "A", "B")
    return run_branches(body, EnumerateAll())


def assert_gate_on_every_branch(branches, matrix, psi, phi):
    want = matrix @ np.kron(psi, phi)
    assert sum(b.probability for b in branches) == pytest.approx(1.0, abs=1e-12)
    for br in branches:
        got = vec_on(br.session.state, list(br.result))
        assert oracles.phase_equal(got, want), br.path


# --- teleportation ----------------------------------------------------------

@pytest.mark.parametrize("direction, sender", [(A_TO_B, ALICE), (B_TO_A, BOB)])
def test_teleport_random_state_every_branch(rng, direction, sender):
    psi = oracles.random_vec(1, rng)

    def body(sess):
        sess.prepare_local(sender, sv.PureState(psi, ("q",)))
        return pr.teleport(sess, "q", direction)
    branches = run_branches(body)
    assert len(branches) == 4
    for br in branches:
        assert br.session.owner(br.result) == sender.other.value
        assert oracles.phase_equal(vec_on(br.session.state, [br.result]), psi)
        want = (1, 2, 0) if direction == A_TO_B else (1, 0, 2)
        assert br.session.ledger.as_tuple() == want


def test_teleport_preserves_entanglement_with_stay_behind():
    def body(sess):
        sess.prepare_reference(sv.phi_plus("R", "q"), {"q": ALICE})
        return pr.teleport(sess, "q", A_TO_B)
    for br in run_branches(body):
        pair = vec_on(br.session.state, ["R", br.result])
        assert oracles.phase_equal(pair, oracles.spin_state({"00": 1, "11": 1}, "Rq"))


def test_teleport_up_stays_up():
    sess = LoccSession()
    sess.prepare_local(ALICE, sv.basis_state("0", ["q"]))
    far = pr.teleport(sess, "q", A_TO_B)
    np.testing.assert_allclose(np.abs(vec_on(sess.state, [far])), [1, 0], atol=1e-12)


# --- double teleportation ---------------------------------------------------

@pytest.mark.parametrize("gate, matrix", [(sv.SWAP, SWAP_M), (sv.CNOT, CNOT_M)])
def test_double_teleportation_matches_gate(rng, gate, matrix):
    psi, phi = oracles.random_vec(1, rng), oracles.random_vec(1, rng)
    runner = lambda s, a, b: pr.implement_gate_via_teleportation(s, gate, a, b)
    branches = run_two_qubit(runner, psi, phi)
    assert len(branches) == 16
    assert_gate_on_every_branch(branches, matrix, psi, phi)
    assert {b.session.ledger.as_tuple() for b in branches} == {(2, 2, 2)}


def test_double_teleportation_identity_still_costs_full(rng):
    psi, phi = oracles.random_vec(1, rng), oracles.random_vec(1, rng)
    ident = sv.kron_gates("I2", sv.I, sv.I)
    runner = lambda s, a, b: pr.implement_gate_via_teleportation(s, ident, a, b)
    branches = run_two_qubit(runner, psi, phi)
    assert_gate_on_every_branch(branches, np.eye(4), psi, phi)
    assert {b.session.ledger.as_tuple() for b in branches} == {(2, 2, 2)}


# --- remote CNOT ------------------------------------------------------------

@pytest.mark.parametrize("inp, out", [("00", "00"), ("10", "11"), ("01", "01"), ("11", "10")])
def test_remote_cnot_basis_inputs(inp, out):
    psi = sv.basis_state(inp[0], ["A"]).amplitudes
    phi = sv.basis_state(inp[1], ["B"]).amplitudes
    for br in run_two_qubit(pr.remote_cnot, psi, phi):
        got = vec_on(br.session.state, ["A", "B"])
        assert oracles.phase_equal(got, sv.basis_state(out, ["A", "B"]).amplitudes)


def test_remote_cnot_random_inputs_all_branches(rng):
    psi, phi = oracles.random_vec(1, rng), oracles.random_vec(1, rng)
    branches = run_two_qubit(pr.remote_cnot, psi, phi)
    assert len(branches) == 4
    outcomes = {tuple(ev.outcome for ev in b.session.trace if ev.type == "Measure") for b in branches}
    assert outcomes == set(itertools.product((0, 1), (0, 1)))
    assert_gate_on_every_branch(branches, CNOT_M, psi, phi)
    for br in branches:
        s = br.session
        assert s.ledger.as_tuple() == (1, 1, 1)
        # ancillas end in product form: a is up, b is |+> or |->
        a = vec_on(s.state, ["a"])
        b = vec_on(s.state, ["b"])
        assert oracles.phase_equal(a, [1, 0])
        assert abs(abs(b[0]) - abs(b[1])) < 1e-12


# --- entanglement generation ------------------------------------------------

def granted(gate, fn, n=1):
    sess = LoccSession()
    sess.grant_nonlocal_gate(gate, n)
    return sess, fn(sess)


def test_cnot_creates_ebit():
    sess, (A, B) = granted(sv.CNOT, pr.cnot_creates_ebit)
    assert sess.cut_entropy() == pytest.approx(1.0, abs=1e-10)
    assert sv.schmidt_rank(sess.state, [A]) == 2
    assert sess.ledger.as_tuple() == (0, 0, 0)
    assert sess.ledger.nonlocal_gate_uses == {"CNOT": 1}


def test_swap_generates_two_ebits_state():
    sess, _ = granted(sv.SWAP, pr.swap_generates_two_ebits)
    assert sess.cut_entropy() == pytest.approx(2.0, abs=1e-10)
    want = oracles.spin_state({"0000": 1, "0011": 1, "1100": 1, "1111": 1}, "BaAb")
    assert oracles.phase_equal(sv.permute(sess.state, ["B", "a", "A", "b"]).amplitudes, want)
    assert sess.ledger.as_tuple() == (0, 0, 0)
    assert sess.ledger.nonlocal_gate_uses == {"SWAP": 1}


def test_dcnot_creates_two_ebits_state():
    sess, _ = granted(sv.DCNOT, pr.dcnot_creates_two_ebits)
    assert sv.schmidt_rank(sess.state, ["A", "a"]) == 4
    assert sess.cut_entropy() == pytest.approx(2.0, abs=1e-10)
    want = oracles.spin_state({"0000": 1, "1011": 1, "0110": 1, "1101": 1}, "AaBb")
    assert oracles.phase_equal(sv.permute(sess.state, ["A", "a", "B", "b"]).amplitudes, want)
    assert sess.ledger.nonlocal_gate_uses == {"DCNOT": 1}


# --- superdense protocols ---------------------------------------------------

def decode_all(gate, fn, messages, n_grants=1):
    out = {}
    for msg in messages:
        def body(sess, msg=msg):
            sess.grant_nonlocal_gate(gate, n_grants)
            return fn(sess, *msg)
        out[msg] = run_branches(body)
    return out


@pytest.mark.parametrize("gate, fn", [(sv.SWAP, pr.swap_superdense_bidirectional),
                                      (sv.DCNOT, pr.dcnot_bidirectional_bits)])
def test_two_plus_two_bit_protocols_decode_all_16(gate, fn):
    msgs = list(itertools.product(pr.MESSAGES_2BIT, pr.MESSAGES_2BIT))
    results = decode_all(gate, fn, msgs)
    assert len(results) == 16
    for (am, bm), branches in results.items():
        for br in branches:
            assert br.result == (am, bm)
            assert br.session.ledger.as_tuple() == (2, 0, 0)
            assert br.session.ledger.nonlocal_gate_uses == {gate.name: 1}


def test_swap_superdense_identity_path_is_deterministic():
    (branches,) = decode_all(sv.SWAP, pr.swap_superdense_bidirectional, [((0, 0), (0, 0))]).values()
    assert len(branches) == 1
    assert [ev.outcome for ev in branches[0].session.trace if ev.type == "Measure"] == ["Phi+", "Phi+"]


def test_dcnot_shared_state_after_local_cnot():
    (branches,) = decode_all(sv.DCNOT, pr.dcnot_bidirectional_bits, [((0, 0), (0, 0))]).values()
    prepared = state_after(branches[0].session.trace, "LocalGate")
    want = oracles.spin_state({"0000": 1, "1001": 1, "1110": 1, "0111": 1}, "AaBb")
    assert oracles.phase_equal(sv.permute(prepared, ["A", "a", "B", "b"]).amplitudes, want)
    # both sides then hold Phi+ with certainty
    assert len(branches) == 1
    assert [ev.outcome for ev in branches[0].session.trace if ev.type == "Measure"] == ["Phi+", "Phi+"]


# post-CNOT states for (a_bit, b_bit) on (a, b)
POST_CNOT = {
    (0, 0): {"00": 1, "10": 1},
    (1, 0): {"01": 1, "11": 1},
    (0, 1): {"00": 1, "10": -1},
    (1, 1): {"11": 1, "01": -1},
}


def test_cnot_bidirectional_decodes_all_4():
    results = decode_all(sv.CNOT, pr.cnot_bidirectional_bits, list(POST_CNOT))
    for msg, branches in results.items():
        for br in branches:
            assert br.result == msg
            assert br.session.ledger.as_tuple() == (1, 0, 0)
        after = state_after(branches[0].session.trace, "NonlocalGate")
        assert oracles.phase_equal(sv.permute(after, ["a", "b"]).amplitudes,
                                   oracles.spin_state(POST_CNOT[msg], "ab"))


def test_two_cnots_route_decodes_all_4():
    results = decode_all(sv.CNOT, pr.two_cnots_bits_via_ebit, list(POST_CNOT), n_grants=2)
    for msg, branches in results.items():
        assert all(br.result == msg for br in branches)
        assert all(br.session.ledger.as_tuple() == (0, 0, 0) for br in branches)
        assert all(br.session.ledger.nonlocal_gate_uses == {"CNOT": 2} for br in branches)


@pytest.mark.parametrize("direction", [A_TO_B, B_TO_A])
@pytest.mark.parametrize("bit", [0, 1])
def test_cnot_sends_bit(direction, bit):
    (branches,) = decode_all(sv.CNOT, pr.cnot_sends_bit, [(direction, bit)]).values()
    assert [br.result for br in branches] == [bit]
    assert branches[0].session.ledger.as_tuple() == (0, 0, 0)


def test_cnot_sends_bit_a_to_b_flips_target():
    sess, got = granted(sv.CNOT, lambda s: pr.cnot_sends_bit(s, A_TO_B, 1))
    after = state_after(sess.trace, "NonlocalGate")
    np.testing.assert_allclose(np.abs(after.amplitudes), [0, 0, 0, 1], atol=1e-12)


def test_cnot_sends_bit_bad_direction():
    sess = LoccSession()
    with pytest.raises(ValueError):
        pr.cnot_sends_bit(sess, "sideways", 1)


# --- catalysis ---------------------------------------------------------------

def test_catalysis_decodes_and_keeps_ebit():
    for msg in pr.MESSAGES_2BIT:
        def body(sess, msg=msg):
            sess.grant_nonlocal_gate(sv.SWAP)
            return pr.catalysed_two_bits_via_swap(sess, msg)
        for br in run_branches(body):
            s = br.session
            assert br.result == msg
            assert s.ledger.as_tuple() == (1, 0, 0)
            assert s.cut_entropy() == pytest.approx(1.0, abs=1e-10)
            assert sv.entanglement_entropy(sv.factor_out(s.state, ["A", "b2"]), ["A"]) == \
                pytest.approx(1.0, abs=1e-10)


def test_catalysis_identity_swaps_pairs():
    sess, _ = granted(sv.SWAP, lambda s: pr.catalysed_two_bits_via_swap(s, (0, 0)))
    after = state_after(sess.trace, "NonlocalGate")
    want = oracles.spin_state({"0000": 1, "0011": 1, "1100": 1, "1111": 1}, "ABCD")
    assert oracles.phase_equal(sv.permute(after, ["B", "b1", "A", "b2"]).amplitudes, want)


def test_bad_message_rejected():
    sess = LoccSession()
    sess.grant_nonlocal_gate(sv.SWAP)
    with pytest.raises(ValueError):
        pr.catalysed_two_bits_via_swap(sess, (2, 0))


# --- CNOT teleportation ------------------------------------------------------

@pytest.mark.parametrize("direction, sender", [(A_TO_B, ALICE), (B_TO_A, BOB)])
def test_teleport_via_nonlocal_cnot(rng, direction, sender):
    psi = oracles.random_vec(1, rng)

    def body(sess):
        sess.grant_nonlocal_gate(sv.CNOT)
        sess.prepare_local(sender, sv.PureState(psi, ("q",)))
        return pr.teleport_via_nonlocal_cnot(sess, "q", direction)
    branches = run_branches(body)
    assert len(branches) == 2
    for br in branches:
        s = br.session
        assert oracles.phase_equal(vec_on(s.state, [br.result]), psi)
        assert s.owner(br.result) == sender.other.value
        assert s.ledger.as_tuple() == ((0, 1, 0) if direction == A_TO_B else (0, 0, 1))
        assert s.ledger.nonlocal_gate_uses == {"CNOT": 1}
    # state right after the CNOT: alpha up up + beta down down
    after = state_after(branches[0].session.trace, "NonlocalGate")
    np.testing.assert_allclose(after.amplitudes, [psi[0], 0, 0, psi[1]], atol=1e-12)


def test_minus_branch_needs_phase_fix(rng):
    psi = oracles.random_vec(1, rng)

    def body(sess):
        sess.grant_nonlocal_gate(sv.CNOT)
        sess.prepare_local(ALICE, sv.PureState(psi, ("q",)))
        return pr.teleport_via_nonlocal_cnot(sess, "q")
    minus = [b for b in run_branches(body) if b.path == (1,)][0]
    fixes = [ev for ev in minus.session.trace if ev.type == "LocalGate"]
    assert [ev.gate.name for ev in fixes] == [sv.PHASE_PI.name]
    unfixed = state_after(minus.session.trace, "Measure")
    bare = vec_on(unfixed, [minus.result])
    assert not oracles.phase_equal(bare, psi)


def test_cnot_teleport_of_up():
    sess, dest = granted(sv.CNOT, lambda s: (s.prepare_local(ALICE, sv.basis_state("0", ["q"])),
                                             pr.teleport_via_nonlocal_cnot(s, "q"))[1])
    np.testing.assert_allclose(np.abs(vec_on(sess.state, [dest])), [1, 0], atol=1e-12)


def test_swap_from_two_cnots(rng):
    psi, phi = oracles.random_vec(1, rng), oracles.random_vec(1, rng)
    branches = run_two_qubit(pr.swap_from_two_cnots, psi, phi, grants=(sv.CNOT, sv.CNOT))
    assert len(branches) == 4
    assert_gate_on_every_branch(branches, SWAP_M, psi, phi)
    for br in branches:
        assert br.session.ledger.as_tuple() == (0, 1, 1)
        assert br.session.ledger.nonlocal_gate_uses == {"CNOT": 2}


def test_swap_from_two_cnots_basis():
    up, down = np.array([1, 0]), np.array([0, 1])
    for br in run_two_qubit(pr.swap_from_two_cnots, up, down, grants=(sv.CNOT, sv.CNOT)):
        got = vec_on(br.session.state, list(br.result))
        np.testing.assert_allclose(np.abs(got), [0, 0, 1, 0], atol=1e-12)


# --- sampling agrees with enumeration ---------------------------------------

@pytest.mark.parametrize("seed", [0, 1, 7])
def test_sampled_run_is_an_enumerated_branch(rng, seed):
    psi, phi = oracles.random_vec(1, rng), oracles.random_vec(1, rng)

    def body(sess):
        sess.prepare_local(ALICE, sv.PureState(psi, ("A",)))
        sess.prepare_local(BOB, sv.PureState(phi, ("B",)))
        return pr.remote_cnot(sess, "A", "B")
    (sampled,) = run_branches(body, Sample(seed))
    key = lambda s: tuple(ev.outcome for ev in s.trace if ev.type == "Measure")
    match = [b for b in run_branches(body) if key(b.session) == key(sampled.session)]
    assert len(match) == 1
    assert match[0].probability == pytest.approx(sampled.probability, abs=1e-12)
    np.testing.assert_allclose(match[0].session.state.amplitudes,
                               sampled.session.state.amplitudes, atol=1e-12)


# --- guessing ---------------------------------------------------------------

def test_guessing_forced_correct_always_succeeds():
    assert pr.guessing_swap_experiment(200, seed=3, force_correct=True) == 1.0


def test_guessing_rejects_zero_trials():
    with pytest.raises(ValueError):
        pr.guessing_swap_experiment(0)


def test_guessing_is_seeded():
    assert pr.guessing_swap_experiment(300, seed=5) == pr.guessing_swap_experiment(300, seed=5)


def test_guessing_wins_only_when_all_guesses_match():
    rng = np.random.default_rng(9)
    for _ in range(100):
        record = []

        def guess(true_bit):
            g = int(rng.integers(2))
            record.append(g == true_bit)
            return g
        sess = LoccSession(Sample(int(rng.integers(2**31))))
        psi, phi = sv.random_state(["A"], rng), sv.random_state(["B"], rng)
        sess.prepare_local(ALICE, psi)
        sess.prepare_local(BOB, phi)
        a_out, b_out = pr.implement_gate_via_teleportation(sess, sv.SWAP, "A", "B", guess=guess)
        got = sv.factor_out(sess.state, [a_out, b_out])
        want = sv.tensor(sv.relabel(phi, {"B": a_out}), sv.relabel(psi, {"A": b_out}))
        assert sv.equal_up_to_global_phase(got, want) == all(record)
        assert sess.ledger.as_tuple() == (2, 0, 0)
