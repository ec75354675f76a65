"""Dense state-vector core.

Qubit ordering is big-endian: register position 0 is the most significant
bit of the amplitude index, so ``|q0 q1 ... q(n-1)>`` has index
``q0 * 2**(n-1) + ... + q(n-1)``.  ``0`` is spin up and ``1`` is spin down.

States are immutable values; every operation returns a new state.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence, Union

import numpy as np

NORM_TOL = 1e-10
UNITARY_TOL = 1e-12
SCHMIDT_TOL = 1e-9
PRUNE_TOL = 1e-12


class StateError(ValueError):
    """Malformed state, register or gate request."""


@dataclass(frozen=True)
class QubitId:
    index: int
    label: str


Target = Union[str, QubitId]


def _label(t: Target) -> str:
    return t.label if isinstance(t, QubitId) else t


@dataclass(frozen=True, eq=False)
class PureState:
    """Normalized amplitude vector over a labelled qubit register."""

    amplitudes: np.ndarray
    labels: tuple[str, ...]

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        labels = tuple(self.labels)
        if len(set(labels)) != len(labels):
            raise StateError(f"duplicate labels in register {labels}")
        if amps.size != 2 ** len(labels):
            raise StateError(
                f"{amps.size} amplitudes do not fit a {len(labels)}-qubit register"
            )
        norm = np.sqrt(np.vdot(amps, amps).real)
        if abs(norm - 1.0) > NORM_TOL:
            raise StateError(f"state is not normalized (norm={norm:.3e})")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def register(self) -> tuple[QubitId, ...]:
        return tuple(QubitId(i, lab) for i, lab in enumerate(self.labels))

    def index_of(self, target: Target) -> int:
        lab = _label(target)
        try:
            return self.labels.index(lab)
        except ValueError:
            raise StateError(f"unknown qubit {lab!r}") from None

    def tensor_view(self) -> np.ndarray:
        return self.amplitudes.reshape((2,) * self.n)

    def __repr__(self):
        return f"PureState(labels={self.labels}, amplitudes={np.round(self.amplitudes, 6)})"


def _trusted(amps: np.ndarray, labels: tuple[str, ...]) -> PureState:
    """Wrap amplitudes produced by a norm-preserving kernel, skipping validation."""
    amps = np.ascontiguousarray(amps, dtype=complex).reshape(-1)
    amps.setflags(write=False)
    out = object.__new__(PureState)
    object.__setattr__(out, "amplitudes", amps)
    object.__setattr__(out, "labels", labels)
    return out


def _normalized(vec: np.ndarray, labels: Sequence[str]) -> PureState:
    vec = np.asarray(vec, dtype=complex).reshape(-1)
    norm = np.sqrt(np.vdot(vec, vec).real)
    if norm == 0:
        raise StateError("zero vector cannot be normalized")
    return PureState(vec / norm, tuple(labels))


# --- constructors -----------------------------------------------------------

def empty_state() -> PureState:
    return PureState(np.ones(1, dtype=complex), ())


def basis_state(bits: str, labels: Sequence[str]) -> PureState:
    """``basis_state("01", ["A", "B"])`` is up on A, down on B."""
    if len(bits) != len(labels) or set(bits) - {"0", "1"}:
        raise StateError(f"bad basis string {bits!r} for {len(labels)} qubits")
    vec = np.zeros(2 ** len(bits), dtype=complex)
    vec[int(bits, 2) if bits else 0] = 1.0
    return PureState(vec, tuple(labels))


def qubit(alpha: complex, beta: complex, label: str) -> PureState:
    """alpha|up> + beta|down>, normalized."""
    return _normalized(np.array([alpha, beta]), [label])


def from_terms(terms: Mapping[str, complex], labels: Sequence[str]) -> PureState:
    """Build a normalized state from ``{"0101": amplitude, ...}``.

    Handy for transcribing unnormalized spin expressions.
    """
    vec = np.zeros(2 ** len(labels), dtype=complex)
    for bits, amp in terms.items():
        if len(bits) != len(labels):
            raise StateError(f"term {bits!r} does not match {len(labels)} labels")
        vec[int(bits, 2)] += amp
    return _normalized(vec, labels)


def phi_plus(l0: str, l1: str) -> PureState:
    return bell_state("Phi+", l0, l1)


BELL_TERMS = {
    "Phi+": {"00": 1, "11": 1},
    "Phi-": {"00": 1, "11": -1},
    "Psi+": {"01": 1, "10": 1},
    "Psi-": {"01": 1, "10": -1},
}
BELL_NAMES = ("Phi+", "Psi+", "Phi-", "Psi-")


def bell_state(name: str, l0: str, l1: str) -> PureState:
    try:
        return from_terms(BELL_TERMS[name], [l0, l1])
    except KeyError:
        raise StateError(f"unknown Bell state {name!r}") from None


def random_state(labels: Sequence[str], rng: np.random.Generator) -> PureState:
    """Haar-random pure state."""
    dim = 2 ** len(labels)
    vec = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return _normalized(vec, labels)


# --- gates ------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GateSpec:
    name: str
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 2:
            raise StateError(f"gate {self.name}: matrix must be square, got {m.shape}")
        k = int(round(np.log2(m.shape[0])))
        if 2 ** k != m.shape[0]:
            raise StateError(f"gate {self.name}: dimension {m.shape[0]} is not 2^k")
        if not np.allclose(m.conj().T @ m, np.eye(m.shape[0]), rtol=0, atol=UNITARY_TOL):
            raise StateError(f"gate {self.name} is not unitary")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def arity(self) -> int:
        return int(round(np.log2(self.matrix.shape[0])))

    def __repr__(self):
        return f"GateSpec({self.name!r}, arity={self.arity})"


_s = 1 / np.sqrt(2)
I = GateSpec("I", np.eye(2))
X = GateSpec("X", [[0, 1], [1, 0]])
Y = GateSpec("Y", [[0, -1j], [1j, 0]])
Z = GateSpec("Z", [[1, 0], [0, -1]])
H = GateSpec("H", [[_s, _s], [_s, -_s]])
PHASE_PI = Z
CNOT = GateSpec("CNOT", [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]])
SWAP = GateSpec("SWAP", [[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]])
# CNOT(1->2) then CNOT(2->1)
_CNOT_21 = np.array([[1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0], [0, 1, 0, 0]])
DCNOT = GateSpec("DCNOT", _CNOT_21 @ CNOT.matrix)

STANDARD_GATES = {g.name: g for g in (I, X, Y, Z, H, CNOT, SWAP, DCNOT)}
STANDARD_GATES["PHASE_PI"] = PHASE_PI


def custom_gate(name: str, matrix) -> GateSpec:
    return GateSpec(name, matrix)


def kron_gates(name: str, *gates: GateSpec) -> GateSpec:
    m = np.ones((1, 1), dtype=complex)
    for g in gates:
        m = np.kron(m, g.matrix)
    return GateSpec(name, m)


def random_unitary(k: int, rng: np.random.Generator, name: str = "U") -> GateSpec:
    """Haar-random unitary on k qubits (QR with phase fix)."""
    dim = 2 ** k
    z = (rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return GateSpec(name, q * (d / np.abs(d)))


# --- core operations --------------------------------------------------------

def tensor(a: PureState, b: PureState) -> PureState:
    clash = set(a.labels) & set(b.labels)
    if clash:
        raise StateError(f"duplicate labels {sorted(clash)}")
    return _trusted(np.outer(a.amplitudes, b.amplitudes), a.labels + b.labels)


def _target_axes(s: PureState, targets: Sequence[Target]) -> list[int]:
    axes = [s.index_of(t) for t in targets]
    if len(set(axes)) != len(axes):
        raise StateError(f"repeated target in {[_label(t) for t in targets]}")
    return axes


def _front(s: PureState, axes: Sequence[int]) -> tuple[np.ndarray, list[int]]:
    """Amplitudes as a (2^k, rest) matrix with ``axes`` first, plus the axis order."""
    order = list(axes) + [i for i in range(s.n) if i not in axes]
    return np.transpose(s.tensor_view(), order).reshape(2 ** len(axes), -1), order


def _back(mat: np.ndarray, order: list[int]) -> np.ndarray:
    inverse = [0] * len(order)
    for pos, ax in enumerate(order):
        inverse[ax] = pos
    return mat.reshape((2,) * len(order)).transpose(inverse).reshape(-1)


def _apply_matrix(s: PureState, matrix: np.ndarray, axes: Sequence[int]) -> np.ndarray:
    """Unnormalized ``matrix`` (on ``axes``) times the amplitude vector."""
    mat, order = _front(s, axes)
    return _back(matrix @ mat, order)


def apply_gate(s: PureState, g: GateSpec, targets: Sequence[Target]) -> PureState:
    if len(targets) != g.arity:
        raise StateError(f"{g.name} acts on {g.arity} qubits, got {len(targets)} targets")
    axes = _target_axes(s, targets)
    return _trusted(_apply_matrix(s, g.matrix, axes), s.labels)


# --- measurement ------------------------------------------------------------

Z_BASIS, X_BASIS, Z_PARITY, BELL = "Z", "X", "ZPARITY", "BELL"
MEASUREMENT_KINDS = (Z_BASIS, X_BASIS, Z_PARITY, BELL)


def _bases(kind: str) -> tuple[np.ndarray, list[tuple[object, list[int]]]]:
    """Orthonormal basis rows and the rows spanning each outcome subspace."""
    if kind == Z_BASIS:
        return np.eye(2, dtype=complex), [(0, [0]), (1, [1])]
    if kind == X_BASIS:
        return np.array([[1, 1], [1, -1]], dtype=complex) * _s, [(0, [0]), (1, [1])]
    if kind == Z_PARITY:
        # 0: even {00, 11} ("total spin one"), 1: odd {01, 10} ("total spin zero")
        return np.eye(4, dtype=complex), [(0, [0, 3]), (1, [1, 2])]
    if kind == BELL:
        rows = []
        for name in BELL_NAMES:
            v = np.zeros(4, dtype=complex)
            for bits, amp in BELL_TERMS[name].items():
                v[int(bits, 2)] = amp
            rows.append(v / np.linalg.norm(v))
        return np.array(rows), [(name, [i]) for i, name in enumerate(BELL_NAMES)]
    raise StateError(f"unknown measurement kind {kind!r}")


_BASES = {kind: _bases(kind) for kind in MEASUREMENT_KINDS}
_KIND_ARITY = {Z_BASIS: 1, X_BASIS: 1, Z_PARITY: 2, BELL: 2}


@dataclass(frozen=True)
class MeasurementOutcome:
    kind: str
    result: object
    probability: float
    post_state: PureState


def _branch_table(s: PureState, kind: str, targets: Sequence[Target]):
    """``[(token, probability, build_post_state)]`` for the unpruned outcomes."""
    if kind not in _BASES:
        raise StateError(f"unknown measurement kind {kind!r}")
    if len(targets) != _KIND_ARITY[kind]:
        raise StateError(f"{kind} measurement needs {_KIND_ARITY[kind]} targets")
    basis, groups = _BASES[kind]
    mat, order = _front(s, _target_axes(s, targets))
    coeffs = basis.conj() @ mat
    table = []
    for token, rows in groups:
        part = coeffs[rows]
        p = float(np.vdot(part, part).real)
        if p < PRUNE_TOL:
            continue

        def build(rows=rows, part=part, p=p):
            return _trusted(_back(basis[rows].T @ part, order) / np.sqrt(p), s.labels)
        table.append((token, p, build))
    return table


def measure(s: PureState, kind: str, targets: Sequence[Target]) -> list[MeasurementOutcome]:
    """All branches of a projective measurement with probability above 1e-12.

    Outcome tokens: Z and X give 0/1 (up/+ is 0), Z-parity gives 0 for the
    even subspace and 1 for the odd one, Bell gives one of ``BELL_NAMES``.
    """
    return [MeasurementOutcome(kind, token, p, build())
            for token, p, build in _branch_table(s, kind, targets)]


def project(s: PureState, kind: str, targets: Sequence[Target], result) -> MeasurementOutcome:
    """The single branch of ``measure`` with the given outcome token."""
    for branch in measure(s, kind, targets):
        if branch.result == result:
            return branch
    raise StateError(f"outcome {result!r} has zero probability")


# --- bipartite structure ----------------------------------------------------

def _split(s: PureState, part: Iterable[Target]) -> tuple[np.ndarray, list[int], list[int]]:
    idx = sorted({s.index_of(t) for t in part})
    if not idx or len(idx) == s.n:
        raise StateError("part must be a nonempty proper subset of the register")
    rest = [i for i in range(s.n) if i not in idx]
    mat = np.transpose(s.tensor_view(), idx + rest).reshape(2 ** len(idx), 2 ** len(rest))
    return mat, idx, rest


def schmidt_coefficients(s: PureState, part: Iterable[Target]) -> np.ndarray:
    mat, _, _ = _split(s, part)
    return np.linalg.svd(mat, compute_uv=False)


def entanglement_entropy(s: PureState, part: Iterable[Target]) -> float:
    """Von Neumann entropy (bits) of the reduced state on ``part``."""
    p = schmidt_coefficients(s, part) ** 2
    p = p[p > 1e-300]
    return float(max(0.0, -np.sum(p * np.log2(p))))


def schmidt_rank(s: PureState, part: Iterable[Target]) -> int:
    return int(np.sum(schmidt_coefficients(s, part) > SCHMIDT_TOL))


def reduced_density_matrix(s: PureState, keep: Sequence[Target]) -> np.ndarray:
    """Density matrix on ``keep``, in the order given."""
    idx = [s.index_of(t) for t in keep]
    if len(set(idx)) != len(idx):
        raise StateError("repeated qubit in keep")
    rest = [i for i in range(s.n) if i not in idx]
    mat = np.transpose(s.tensor_view(), idx + rest).reshape(2 ** len(idx), -1)
    return mat @ mat.conj().T


def factor_out(s: PureState, keep: Sequence[Target], tol: float = 1e-9) -> PureState:
    """Pure state of ``keep`` (in the given order) when it is a product factor.

    Raises StateError if ``keep`` is entangled with the rest of the register.
    """
    labels = [_label(t) for t in keep]
    if len(labels) == s.n:
        return permute(s, labels)
    idx = [s.index_of(t) for t in keep]
    rest = [i for i in range(s.n) if i not in idx]
    mat = np.transpose(s.tensor_view(), idx + rest).reshape(2 ** len(idx), -1)
    u, sv, _ = np.linalg.svd(mat, full_matrices=False)
    if sv.size > 1 and sv[1] > tol:
        raise StateError(f"qubits {labels} are entangled with the rest (s2={sv[1]:.2e})")
    return _normalized(u[:, 0], labels)


def permute(s: PureState, order: Sequence[Target]) -> PureState:
    labels = [_label(t) for t in order]
    if sorted(labels) != sorted(s.labels):
        raise StateError(f"{labels} is not a reordering of {s.labels}")
    axes = [s.index_of(lab) for lab in labels]
    return PureState(np.transpose(s.tensor_view(), axes).reshape(-1), tuple(labels))


def relabel(s: PureState, mapping: Mapping[str, str]) -> PureState:
    return PureState(s.amplitudes, tuple(mapping.get(lab, lab) for lab in s.labels))


def overlap(a: PureState, b: PureState) -> complex:
    if a.n != b.n:
        raise StateError(f"dimension mismatch: {a.n} vs {b.n} qubits")
    if a.labels != b.labels and set(a.labels) == set(b.labels):
        b = permute(b, a.labels)
    return complex(np.vdot(a.amplitudes, b.amplitudes))


def fidelity(a: PureState, b: PureState) -> float:
    return abs(overlap(a, b)) ** 2


def equal_up_to_global_phase(a: PureState, b: PureState, tol: float = NORM_TOL) -> bool:
    return abs(overlap(a, b)) >= 1 - tol
