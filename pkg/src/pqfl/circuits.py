"""Encoder, base layer, personalized layer and the composed classifiers.

Parameters are consumed in the order their RY gates appear in the circuit.
Within one base-layer slice that is the single-qubit column first (two RY
per qubit, qubit-major), then the ring entangler: for each ``i`` with
``j = (i + 1) % n`` the block ``CNOT(i, j) RY(j) RY((j + 1) % n) CNOT(i, j)``.
The client circuit is ``k`` base slices followed by the personalized layer,
so the flat client parameter vector is ``[theta_b, theta_p]``.

Class scores are the Pauli-Z expectations of qubits 0 and 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import qsim
from .qsim import CNOT, RY, GateOp, Statevector

READOUT_QUBITS = (0, 1)


@dataclass(frozen=True)
class ModelParams:
    """Base-layer angles (length ``4nk``) and personalized angles (``2n``).

    An empty ``theta_p`` describes a model without a personalized layer.
    """

    theta_b: np.ndarray
    theta_p: np.ndarray = field(default_factory=lambda: np.zeros(0))
    n: int = 4
    k: int = 3

    def __post_init__(self):
        tb = np.array(self.theta_b, dtype=float)
        tp = np.array(self.theta_p, dtype=float)
        if tb.shape != (4 * self.n * self.k,):
            raise ValueError(f"theta_b must have length 4nk={4 * self.n * self.k}, got {tb.shape}")
        if tp.shape not in ((0,), (2 * self.n,)):
            raise ValueError(f"theta_p must have length 2n={2 * self.n} (or 0), got {tp.shape}")
        if not (np.all(np.isfinite(tb)) and np.all(np.isfinite(tp))):
            raise ValueError("angles must be finite")
        object.__setattr__(self, "theta_b", tb)
        object.__setattr__(self, "theta_p", tp)

    @property
    def personalized(self) -> bool:
        return self.theta_p.size > 0

    @property
    def size(self) -> int:
        return self.theta_b.size + self.theta_p.size

    def vector(self) -> np.ndarray:
        return np.concatenate([self.theta_b, self.theta_p])

    def with_vector(self, vec) -> "ModelParams":
        vec = np.asarray(vec, dtype=float)
        nb = self.theta_b.size
        if vec.shape != (self.size,):
            raise ValueError(f"expected {self.size} parameters, got {vec.shape}")
        return ModelParams(vec[:nb], vec[nb:], self.n, self.k)

    def with_base(self, theta_b) -> "ModelParams":
        return ModelParams(theta_b, self.theta_p, self.n, self.k)


def amplitude_encode(features, n: int) -> Statevector:
    features = np.asarray(features, dtype=float)
    if features.shape != (2**n,):
        raise ValueError(f"expected {2**n} features for {n} qubits, got shape {features.shape}")
    return qsim.set_amplitudes(qsim.new_statevector(n), features)


def base_layer_circuit(theta_b_slice, n: int) -> list[GateOp]:
    """One repetition of the base layer; ``theta_b_slice`` has ``4n`` angles."""
    s = np.asarray(theta_b_slice, dtype=float)
    if s.shape != (4 * n,):
        raise ValueError(f"base slice needs {4 * n} angles, got {s.shape}")
    gates = []
    for q in range(n):
        gates += [RY(q, s[2 * q]), RY(q, s[2 * q + 1])]
    off = 2 * n
    for i in range(n):
        j = (i + 1) % n
        gates += [
            CNOT(i, j),
            RY(j, s[off + 2 * i]),
            RY((j + 1) % n, s[off + 2 * i + 1]),
            CNOT(i, j),
        ]
    return gates


def base_layer(theta_b, n: int, k: int) -> list[GateOp]:
    theta_b = np.asarray(theta_b, dtype=float)
    if theta_b.shape != (4 * n * k,):
        raise ValueError(f"base layer needs 4nk={4 * n * k} angles, got {theta_b.shape}")
    gates = []
    for z in range(k):
        gates += base_layer_circuit(theta_b[4 * n * z : 4 * n * (z + 1)], n)
    return gates


def personal_layer_circuit(theta_p, n: int) -> list[GateOp]:
    theta_p = np.asarray(theta_p, dtype=float)
    if theta_p.shape != (2 * n,):
        raise ValueError(f"personalized layer needs {2 * n} angles, got {theta_p.shape}")
    return [RY(q, theta_p[2 * q + r]) for q in range(n) for r in (0, 1)]


def client_circuit(params: ModelParams) -> list[GateOp]:
    gates = base_layer(params.theta_b, params.n, params.k)
    if params.personalized:
        gates += personal_layer_circuit(params.theta_p, params.n)
    return gates


def server_circuit(theta_b, n: int, k: int) -> list[GateOp]:
    return base_layer(theta_b, n, k)


def class_scores(state: Statevector) -> tuple[float, float]:
    return tuple(qsim.expectation_pauli_z(state, q) for q in READOUT_QUBITS)


def run_client_model(features, params: ModelParams) -> tuple[float, float]:
    state = amplitude_encode(features, params.n)
    return class_scores(qsim.apply_circuit(state, client_circuit(params)))


def run_server_model(features, theta_b, n: int, k: int) -> tuple[float, float]:
    state = amplitude_encode(features, n)
    return class_scores(qsim.apply_circuit(state, server_circuit(theta_b, n, k)))


def readout_matrix(n: int) -> np.ndarray:
    """``(2**n, 2)`` matrix mapping basis probabilities to class scores."""
    return np.stack([qsim.z_signs(n, q) for q in READOUT_QUBITS], axis=1)


def batch_scores(unitary: np.ndarray, features: np.ndarray) -> np.ndarray:
    """Class scores for a batch of normalized feature rows under ``unitary``.

    ``unitary`` may carry leading axes (a stack of circuits); the result
    then has shape ``unitary.shape[:-2] + (batch, 2)``.
    """
    n = int(np.log2(unitary.shape[-1]))
    amps = np.matmul(features, np.swapaxes(unitary, -1, -2))
    return (np.abs(amps) ** 2) @ readout_matrix(n)


def model_scores(params: ModelParams, features: np.ndarray) -> np.ndarray:
    return batch_scores(qsim.circuit_unitary(client_circuit(params), params.n), features)


def predict(scores: np.ndarray) -> np.ndarray:
    """Argmax over the two class scores; ties go to class 0."""
    scores = np.asarray(scores)
    return (scores[..., 1] > scores[..., 0]).astype(int)


def parameter_count(n: int, k: int, personalized: bool = True) -> int:
    return 4 * n * k + (2 * n if personalized else 0)


def circuit_depth(k: int, personalized: bool) -> int:
    """Depth counted in layer repetitions: ``k`` base slices plus one personal layer."""
    return k + 1 if personalized else k
