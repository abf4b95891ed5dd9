"""Loss, parameter-shift gradients, Adam and the per-client local epoch loop."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import log_softmax, softmax

from . import qsim
from .circuits import ModelParams, batch_scores, client_circuit

# RY(theta) = exp(-i theta Y / 2): E'(theta) = [E(theta + s) - E(theta - s)] / 2 with s = pi/2
SHIFT = np.pi / 2


@dataclass
class Batch:
    inputs: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        self.labels = np.asarray(self.labels, dtype=int).reshape(-1)
        if len(self.inputs) != len(self.labels):
            raise ValueError("inputs and labels differ in length")
        if len(self.labels) == 0:
            raise ValueError("empty batch")

    def __len__(self):
        return len(self.labels)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def zeros(cls, size: int, lr: float = 0.01, **kw) -> "AdamState":
        return cls(np.zeros(size), np.zeros(size), 0, lr, **kw)


def cross_entropy_loss(scores, labels) -> float:
    scores = np.atleast_2d(np.asarray(scores, dtype=float))
    labels = np.asarray(labels, dtype=int).reshape(-1)
    if len(labels) == 0:
        raise ValueError("empty batch")
    if scores.shape != (len(labels), 2):
        raise ValueError(f"need one score pair per label, got {scores.shape}")
    logp = log_softmax(scores, axis=1)
    return float(-logp[np.arange(len(labels)), labels].mean())


@lru_cache(maxsize=None)
def _fixed_embed(gate: qsim.GateOp, n: int) -> np.ndarray:
    return qsim.embed(gate, n)


@lru_cache(maxsize=None)
def _ry_generator(q: int, n: int) -> np.ndarray:
    # RY(a) on qubit q equals cos(a/2) I + sin(a/2) G with G = embed([[0, -1], [1, 0]])
    return qsim.embed(qsim.RY(q, np.pi), n)


def _full(gate: qsim.GateOp, n: int) -> np.ndarray:
    if gate.kind == "RY":
        half = gate.angle / 2.0
        return np.cos(half) * np.eye(2**n) + np.sin(half) * _ry_generator(gate.targets[0], n)
    return _fixed_embed(gate, n)


def _shifted_unitaries(params: ModelParams) -> tuple[np.ndarray, np.ndarray]:
    """Client unitary and the ``(P, 2, d, d)`` stack with parameter ``p`` shifted by +/- SHIFT."""
    n = params.n
    gates = client_circuit(params)
    full = [_full(g, n) for g in gates]
    dim = 2**n
    prefix = [np.eye(dim)]
    for g in full:
        prefix.append(g @ prefix[-1])
    suffix = [np.eye(dim)] * (len(full) + 1)
    for idx in range(len(full) - 1, -1, -1):
        suffix[idx] = suffix[idx + 1] @ full[idx]
    # RY(a + s) = RY(s) RY(a), so the shifted circuit is
    # (gates after idx) RY_q(+-s) (gates up to and including idx)
    kick = {
        (q, sign): _full(qsim.RY(q, sign * SHIFT), n) for q in range(n) for sign in (1.0, -1.0)
    }
    out = []
    for idx, g in enumerate(gates):
        if g.kind != "RY":
            continue
        q = g.targets[0]
        out.append([suffix[idx + 1] @ kick[q, sign] @ prefix[idx + 1] for sign in (1.0, -1.0)])
    return prefix[-1], np.array(out)


def loss_and_gradient(params: ModelParams, batch: Batch) -> tuple[float, np.ndarray]:
    unitary, shifted_u = _shifted_unitaries(params)
    scores = batch_scores(unitary, batch.inputs)
    loss = cross_entropy_loss(scores, batch.labels)

    onehot = np.eye(2)[batch.labels]
    dscores = (softmax(scores, axis=1) - onehot) / len(batch)

    shifted = batch_scores(shifted_u, batch.inputs)  # (P, 2, B, 2)
    dE = 0.5 * (shifted[:, 0] - shifted[:, 1])  # (P, B, 2)
    grad = np.einsum("pbj,bj->p", dE, dscores)
    return loss, grad


def loss_gradient(params: ModelParams, batch: Batch) -> np.ndarray:
    return loss_and_gradient(params, batch)[1]


def adam_step(state: AdamState, params, grads) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam update. ``state`` is advanced in place and returned."""
    params = np.asarray(params, dtype=float)
    grads = np.asarray(grads, dtype=float)
    if not (params.shape == grads.shape == state.m.shape):
        raise ValueError(f"shape mismatch: params {params.shape}, grads {grads.shape}, state {state.m.shape}")
    state.t += 1
    state.m = state.beta1 * state.m + (1 - state.beta1) * grads
    state.v = state.beta2 * state.v + (1 - state.beta2) * grads**2
    m_hat = state.m / (1 - state.beta1**state.t)
    v_hat = state.v / (1 - state.beta2**state.t)
    return params - state.lr * m_hat / (np.sqrt(v_hat) + state.epsilon), state


@dataclass
class LocalTrainResult:
    params: ModelParams
    epoch_losses: list[float] = field(default_factory=list)
    n_projected: int = 0


def local_train(
    features,
    labels,
    params: ModelParams,
    epochs: int,
    batch_size: int,
    adam: AdamState,
    rng: np.random.Generator,
    base_bounds: tuple[float, float] | None = None,
) -> LocalTrainResult:
    """Run ``epochs`` shuffled passes of Adam over one client's data.

    Both layers are updated. With ``base_bounds`` the base-layer angles are
    clipped into that interval after every step; the number of clipped
    coordinates is reported. The epoch loss is the sample-weighted mean of
    the batch losses evaluated before each update.
    """
    features = np.asarray(features, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if len(labels) == 0:
        raise ValueError("client dataset is empty")
    nb = params.theta_b.size
    vec = params.vector()
    losses, n_projected = [], 0
    for _ in range(epochs):
        order = rng.permutation(len(labels))
        total = 0.0
        for start in range(0, len(order), batch_size):
            idx = order[start : start + batch_size]
            loss, grad = loss_and_gradient(params.with_vector(vec), Batch(features[idx], labels[idx]))
            total += loss * len(idx)
            vec, adam = adam_step(adam, vec, grad)
            if base_bounds is not None:
                lo, hi = base_bounds
                base = vec[:nb]
                n_projected += int(np.count_nonzero((base < lo) | (base > hi)))
                vec[:nb] = np.clip(base, lo, hi)
        losses.append(total / len(labels))
    return LocalTrainResult(params.with_vector(vec), losses, n_projected)
