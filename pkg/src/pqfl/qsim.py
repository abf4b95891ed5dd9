"""Dense statevector simulator for small qubit registers.

Qubit 0 is the leftmost ket position and the most significant bit of the
amplitude index, so ``|q0 q1 ... q(n-1)>`` maps to index
``q0 * 2**(n-1) + ... + q(n-1)``.

Rotation angles are full angles: ``RY(theta)`` has entries
``[[cos(theta/2), -sin(theta/2)], [sin(theta/2), cos(theta/2)]]`` and
``RZ(lam) = diag(1, exp(1j*lam))``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

MAX_QUBITS = 12

_SQRT1_2 = 1.0 / np.sqrt(2.0)

_FIXED = {
    "H": np.array([[1.0, 1.0], [1.0, -1.0]]) * _SQRT1_2,
    "X": np.array([[0.0, 1.0], [1.0, 0.0]]),
    "Z": np.array([[1.0, 0.0], [0.0, -1.0]]),
    # control is the more significant of the two local bits
    "CNOT": np.array(
        [
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
            [0.0, 0.0, 1.0, 0.0],
        ]
    ),
}

GATE_KINDS = ("H", "X", "Z", "RY", "RZ", "CNOT")
_ARITY = {"H": 1, "X": 1, "Z": 1, "RY": 1, "RZ": 1, "CNOT": 2}
_PARAMETRIC = {"RY", "RZ"}


class QubitIndexError(IndexError):
    pass


def ry_matrix(angle: float) -> np.ndarray:
    c, s = np.cos(angle / 2.0), np.sin(angle / 2.0)
    return np.array([[c, -s], [s, c]])


def rz_matrix(angle: float) -> np.ndarray:
    return np.array([[1.0, 0.0], [0.0, np.exp(1j * angle)]])


@dataclass(frozen=True)
class GateOp:
    kind: str
    targets: tuple[int, ...]
    angle: float | None = None

    def __post_init__(self):
        if self.kind not in _ARITY:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        object.__setattr__(self, "targets", tuple(int(t) for t in self.targets))
        if len(self.targets) != _ARITY[self.kind]:
            raise ValueError(f"{self.kind} acts on {_ARITY[self.kind]} qubit(s), got {self.targets}")
        if len(set(self.targets)) != len(self.targets):
            raise ValueError(f"repeated target in {self.targets}")
        if (self.kind in _PARAMETRIC) != (self.angle is not None):
            raise ValueError(f"{self.kind}: angle must be given exactly for RY/RZ")

    @property
    def matrix(self) -> np.ndarray:
        if self.kind == "RY":
            return ry_matrix(self.angle)
        if self.kind == "RZ":
            return rz_matrix(self.angle)
        return _FIXED[self.kind]

    def inverse(self) -> "GateOp":
        if self.kind in _PARAMETRIC:
            return GateOp(self.kind, self.targets, -self.angle)
        return self


def H(q: int) -> GateOp:
    return GateOp("H", (q,))


def X(q: int) -> GateOp:
    return GateOp("X", (q,))


def Z(q: int) -> GateOp:
    return GateOp("Z", (q,))


def RY(q: int, angle: float) -> GateOp:
    return GateOp("RY", (q,), float(angle))


def RZ(q: int, angle: float) -> GateOp:
    return GateOp("RZ", (q,), float(angle))


def CNOT(control: int, target: int) -> GateOp:
    return GateOp("CNOT", (control, target))


@dataclass(frozen=True)
class Statevector:
    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.shape != (2**self.n_qubits,):
            raise ValueError(f"expected {2**self.n_qubits} amplitudes, got shape {amps.shape}")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    def __len__(self):
        return self.amplitudes.size

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


def _check_register(n_qubits: int) -> None:
    if not 1 <= n_qubits <= MAX_QUBITS:
        raise ValueError(f"qubit count must be in [1, {MAX_QUBITS}], got {n_qubits}")


def _check_qubit(qubit: int, n_qubits: int) -> None:
    if not 0 <= qubit < n_qubits:
        raise QubitIndexError(f"qubit {qubit} out of range for {n_qubits}-qubit register")


def new_statevector(n_qubits: int) -> Statevector:
    _check_register(n_qubits)
    amps = np.zeros(2**n_qubits, dtype=complex)
    amps[0] = 1.0
    return Statevector(n_qubits, amps)


def set_amplitudes(state: Statevector, values: Sequence[float]) -> Statevector:
    """Replace the register contents with ``values`` normalized to unit length."""
    values = np.asarray(values)
    if values.shape != (2**state.n_qubits,):
        raise ValueError(f"expected {2**state.n_qubits} values, got shape {values.shape}")
    norm = np.linalg.norm(values)
    if not norm > 0:
        raise ValueError("cannot normalize a zero-norm amplitude vector")
    return Statevector(state.n_qubits, values / norm)


def apply_matrix(amps: np.ndarray, local: np.ndarray, targets: Sequence[int], n_qubits: int) -> np.ndarray:
    """Apply a ``2**k x 2**k`` matrix on ``targets`` along the last axis of ``amps``.

    Leading axes of ``amps`` are treated as a batch, so a stack of states (or
    the rows of an identity matrix) can be pushed through in one call.
    """
    k = len(targets)
    batch = amps.shape[:-1]
    psi = amps.reshape((-1,) + (2,) * n_qubits)
    src = [1 + t for t in targets]
    psi = np.moveaxis(psi, src, list(range(1, 1 + k)))
    moved_shape = psi.shape
    psi = psi.reshape(psi.shape[0], 2**k, -1)
    psi = np.einsum("ij,bjr->bir", local, psi)
    psi = np.moveaxis(psi.reshape(moved_shape), list(range(1, 1 + k)), src)
    return psi.reshape(batch + (2**n_qubits,))


def apply_gate(state: Statevector, gate: GateOp) -> Statevector:
    for t in gate.targets:
        _check_qubit(t, state.n_qubits)
    amps = apply_matrix(state.amplitudes, gate.matrix, gate.targets, state.n_qubits)
    return Statevector(state.n_qubits, amps)


def apply_circuit(state: Statevector, gates: Sequence[GateOp]) -> Statevector:
    for gate in gates:
        state = apply_gate(state, gate)
    return state


def embed(gate: GateOp, n_qubits: int) -> np.ndarray:
    """Full ``2**n x 2**n`` matrix of ``gate`` acting on an ``n_qubits`` register."""
    for t in gate.targets:
        _check_qubit(t, n_qubits)
    local = gate.matrix
    # rows of the identity are basis states; each output row is U e_j
    cols = apply_matrix(np.eye(2**n_qubits, dtype=local.dtype), local, gate.targets, n_qubits)
    return cols.T


def circuit_unitary(gates: Sequence[GateOp], n_qubits: int) -> np.ndarray:
    _check_register(n_qubits)
    dtype = np.result_type(*(g.matrix.dtype for g in gates)) if gates else float
    cols = np.eye(2**n_qubits, dtype=dtype)
    for g in gates:
        for t in g.targets:
            _check_qubit(t, n_qubits)
        cols = apply_matrix(cols, g.matrix, g.targets, n_qubits)
    return cols.T


def z_signs(n_qubits: int, qubit: int) -> np.ndarray:
    """Eigenvalue of Pauli-Z on ``qubit`` for every basis index (+1 for bit 0)."""
    _check_qubit(qubit, n_qubits)
    bits = (np.arange(2**n_qubits) >> (n_qubits - 1 - qubit)) & 1
    return 1.0 - 2.0 * bits


def qubit_probabilities(state: Statevector, qubit: int) -> tuple[float, float]:
    """Return ``(p0, p1)`` for a computational-basis measurement of ``qubit``.

    Both are summed directly from the amplitudes rather than one being
    derived as the complement of the other.
    """
    _check_qubit(qubit, state.n_qubits)
    probs = np.abs(state.amplitudes) ** 2
    one = z_signs(state.n_qubits, qubit) < 0
    return float(probs[~one].sum()), float(probs[one].sum())


def prob_zero(state: Statevector, qubit: int) -> float:
    return qubit_probabilities(state, qubit)[0]


def expectation_pauli_z(state: Statevector, qubit: int) -> float:
    p0, p1 = qubit_probabilities(state, qubit)
    return p0 - p1


def sample_bit(state: Statevector, qubit: int, rng: np.random.Generator) -> int:
    return int(rng.random() >= prob_zero(state, qubit))


def sample_counts(state: Statevector, qubit: int, shots: int, rng: np.random.Generator) -> int:
    """Number of zeros in ``shots`` independent measurements of ``qubit``.

    Each shot measures a freshly prepared copy of ``state``, so the count is
    binomial and is drawn in one call.
    """
    if shots < 1:
        raise ValueError("shots must be positive")
    p0 = min(max(prob_zero(state, qubit), 0.0), 1.0)
    return int(rng.binomial(shots, p0))
