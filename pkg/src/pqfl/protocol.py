"""Simulated quantum channel for parameter exchange.

Uplink: one M-qubit GHZ register per base-layer parameter. Client ``m``
phase-rotates its own qubit by ``F_m * theta_{m,i}``; the server undoes the
preparation circuit and reads qubit 0, whose zero-probability is
``(1 + cos S) / 2`` for the weighted sum ``S``. Downlink: the server sends
each client a ``|+>`` qubit rotated by ``RZ(theta_i)``, measured in the X
basis. Both directions recover angles only on ``[0, pi]``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import qsim
from .qsim import CNOT, RZ, H, Statevector

MAX_CLIENTS = 10
RANGE_TOL = 1e-12


class ProtocolRangeError(ValueError):
    """An encoded angle falls outside the recoverable interval [0, pi]."""


class TranscriptLeakError(RuntimeError):
    """A private (personalized) value showed up in an uplink transcript."""


@dataclass(frozen=True)
class ChannelConfig:
    mode: str = "ideal"
    shots: int = 1000
    seed: int = 0
    strict: bool = True

    def __post_init__(self):
        if self.mode not in ("ideal", "sampled"):
            raise ValueError(f"channel mode must be 'ideal' or 'sampled', got {self.mode!r}")
        if self.mode == "sampled" and self.shots < 1:
            raise ValueError("sampled channel needs at least one shot")


@dataclass(frozen=True)
class WeightedScores:
    F: np.ndarray
    counts: np.ndarray


def weighted_scores(counts: Sequence[int]) -> WeightedScores:
    counts = np.asarray(counts, dtype=int)
    if counts.size == 0 or np.any(counts <= 0):
        raise ValueError(f"sample counts must all be positive, got {counts.tolist()}")
    return WeightedScores(counts / counts.sum(), counts)


def ghz_circuit(M: int) -> list[qsim.GateOp]:
    return [H(0)] + [CNOT(m - 1, m) for m in range(1, M)]


def ghz_prepare(M: int) -> Statevector:
    if not 1 <= M <= MAX_CLIENTS:
        raise ValueError(f"GHZ register size must be in [1, {MAX_CLIENTS}], got {M}")
    return qsim.apply_circuit(qsim.new_statevector(M), ghz_circuit(M))


def encode_phases(ghz: Statevector, payloads: Sequence[float]) -> Statevector:
    payloads = np.asarray(payloads, dtype=float)
    if payloads.shape != (ghz.n_qubits,):
        raise ValueError(f"{ghz.n_qubits}-qubit register needs {ghz.n_qubits} payloads, got {payloads.shape}")
    return qsim.apply_circuit(ghz, [RZ(m, p) for m, p in enumerate(payloads)])


def decode_ghz(state: Statevector) -> Statevector:
    """Inverse of the preparation circuit: CNOT chain from the last pair down, then H on qubit 0."""
    return qsim.apply_circuit(state, [g.inverse() for g in reversed(ghz_circuit(state.n_qubits))])


def estimate_angle(p0: float, p1: float | None = None) -> float:
    """``arccos(2*p0 - 1)``, with tiny excursions outside [0, 1] clamped.

    Evaluated as ``2*atan2(sqrt(p1), sqrt(p0))``, which is the same function
    but stays accurate near 0 and pi when ``p1`` is supplied separately.
    """
    p0 = min(max(float(p0), 0.0), 1.0)
    p1 = 1.0 - p0 if p1 is None else min(max(float(p1), 0.0), 1.0)
    return float(2.0 * np.arctan2(np.sqrt(p1), np.sqrt(p0)))


def _check_range(value: float, what: str, channel: ChannelConfig) -> None:
    if channel.strict and not (-RANGE_TOL <= value <= np.pi + RANGE_TOL):
        raise ProtocolRangeError(f"{what} = {value!r} is outside [0, pi]")


def _measure(state: Statevector, channel: ChannelConfig, rng) -> tuple[float, float]:
    """Estimated (p0, p1) of qubit 0: exact in ideal mode, shot frequencies otherwise."""
    if channel.mode == "ideal":
        return qsim.qubit_probabilities(state, 0)
    zeros = qsim.sample_counts(state, 0, channel.shots, rng)
    return zeros / channel.shots, (channel.shots - zeros) / channel.shots


@dataclass
class ParameterRecord:
    round: int
    index: int
    payloads: list[float]
    p0: float
    estimate: float


@dataclass
class AggregationTranscript:
    """Uplink audit log: per-parameter payloads, measured frequency, estimate."""

    records: list[ParameterRecord] = field(default_factory=list)

    def to_jsonl(self, fh) -> None:
        for rec in self.records:
            fh.write(json.dumps(asdict(rec)) + "\n")

    @staticmethod
    def read_jsonl(fh) -> "AggregationTranscript":
        return AggregationTranscript([ParameterRecord(**json.loads(line)) for line in fh if line.strip()])


def aggregate_uplink(
    client_thetas,
    scores: WeightedScores,
    channel: ChannelConfig = ChannelConfig(),
    rng: np.random.Generator | None = None,
    round_index: int = 0,
) -> tuple[np.ndarray, AggregationTranscript]:
    """Weighted average of the clients' base-layer vectors through GHZ registers."""
    thetas = np.asarray(client_thetas, dtype=float)
    if thetas.ndim != 2:
        raise ValueError("client_thetas must be an (M, K) array")
    M, K = thetas.shape
    if scores.F.shape != (M,):
        raise ValueError(f"{M} clients but {scores.F.size} weighted scores")
    if rng is None:
        rng = np.random.default_rng(channel.seed)
    payloads = scores.F[:, None] * thetas
    ghz = ghz_prepare(M)
    out = np.empty(K)
    transcript = AggregationTranscript()
    for i in range(K):
        _check_range(float(payloads[:, i].sum()), f"uplink phase sum for parameter {i}", channel)
        state = decode_ghz(encode_phases(ghz, payloads[:, i]))
        p0, p1 = _measure(state, channel, rng)
        out[i] = estimate_angle(p0, p1)
        transcript.records.append(ParameterRecord(round_index, i, payloads[:, i].tolist(), float(p0), float(out[i])))
    return out, transcript


def broadcast_downlink(
    theta_b,
    M: int,
    channel: ChannelConfig = ChannelConfig(),
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Per-client estimates of ``theta_b``; returns an ``(M, K)`` array."""
    theta_b = np.asarray(theta_b, dtype=float)
    if rng is None:
        rng = np.random.default_rng(channel.seed)
    out = np.empty((M, theta_b.size))
    plus = qsim.apply_gate(qsim.new_statevector(1), H(0))
    for i, theta in enumerate(theta_b):
        _check_range(float(theta), f"downlink parameter {i}", channel)
        # X-basis readout realized as H then a computational-basis measurement
        state = qsim.apply_circuit(plus, [RZ(0, theta), H(0)])
        for m in range(M):
            out[m, i] = estimate_angle(*_measure(state, channel, rng))
    return out


def reduced_density(state: Statevector, qubit: int) -> np.ndarray:
    """2x2 density matrix of ``qubit`` with every other qubit traced out."""
    n = state.n_qubits
    if not 0 <= qubit < n:
        raise qsim.QubitIndexError(f"qubit {qubit} out of range for {n}-qubit register")
    psi = np.moveaxis(state.amplitudes.reshape((2,) * n), qubit, 0).reshape(2, -1)
    return psi @ psi.conj().T


def check_transcript_hygiene(transcript: AggregationTranscript, n_base: int, M: int, private_values=(),
                             expected_payloads=None) -> None:
    """Raise unless the transcript holds exactly one M-payload record per base parameter
    and carries nothing but weighted base-layer values.

    ``expected_payloads`` is the ``(n_base, M)`` table of ``F_m * theta_{m,i}``; when
    given, every payload must match it bit for bit. A value from ``private_values``
    is a leak only where it is not also the legitimate base payload in that slot
    (a base angle and a personalized angle can coincide, e.g. two adjacent RY
    gates on one qubit started from the same value follow the same trajectory).
    """
    indices = sorted(r.index for r in transcript.records)
    if indices != list(range(n_base)):
        raise TranscriptLeakError(f"transcript covers parameters {indices}, expected 0..{n_base - 1}")
    records = sorted(transcript.records, key=lambda r: r.index)
    payloads = np.array([r.payloads for r in records], dtype=float)
    if payloads.shape != (n_base, M):
        raise TranscriptLeakError(f"payload table has shape {payloads.shape}, expected {(n_base, M)}")
    suspect = np.ones_like(payloads, dtype=bool)
    if expected_payloads is not None:
        expected = np.asarray(expected_payloads, dtype=float)
        bad = payloads != expected
        if bad.any():
            i, m = np.argwhere(bad)[0]
            raise TranscriptLeakError(f"payload of client {m} for parameter {i} is not its weighted base-layer angle")
        suspect = bad
    private = np.asarray(list(private_values), dtype=float).ravel()
    if private.size and (np.isin(payloads, private) & suspect).any():
        raise TranscriptLeakError("a personalized parameter value appears in the uplink transcript")


def estimator_variance(true_sum: float, shots: int, reps: int, M: int, rng: np.random.Generator) -> float:
    """Sample variance of the sampled-channel uplink estimate of ``true_sum``."""
    scores = weighted_scores([1] * M)
    thetas = np.full((M, 1), true_sum)  # weighted mean of equal values is the value itself
    channel = ChannelConfig("sampled", shots=shots, strict=True)
    est = [aggregate_uplink(thetas, scores, channel, rng)[0][0] for _ in range(reps)]
    return float(np.var(est, ddof=1))


def shot_noise_slope(shots_grid=(100, 1000, 10000), reps: int = 200, true_sum: float = np.pi / 2,
                     M: int = 2, seed: int = 0) -> tuple[float, list[float]]:
    """Log-log slope of estimator variance against shot count, plus the variances."""
    rng = np.random.default_rng(seed)
    variances = [estimator_variance(true_sum, R, reps, M, rng) for R in shots_grid]
    slope = np.polyfit(np.log10(shots_grid), np.log10(variances), 1)[0]
    return float(slope), variances


def max_mixedness_deviation(payload_sets) -> float:
    """Largest entry-wise deviation from I/2 over all single-qubit marginals of encoded GHZ states."""
    worst = 0.0
    for payloads in payload_sets:
        state = encode_phases(ghz_prepare(len(payloads)), payloads)
        for q in range(state.n_qubits):
            worst = max(worst, float(np.abs(reduced_density(state, q) - np.eye(2) / 2).max()))
    return worst
