"""Federated training loop, evaluation, metrics output and overhead accounting."""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import data as pdata
from . import protocol
from .circuits import ModelParams, circuit_depth, model_scores, predict
from .protocol import ChannelConfig
from .training import AdamState, cross_entropy_loss, local_train

log = logging.getLogger(__name__)

# seconds per encode/decode operation and per qubit transmission
T_C = 2.5e-8
T_N = 1e-3

# seed stream tags
_PARTITION, _CAP, _SERVER_INIT, _CLIENT_INIT, _SHUFFLE, _CHANNEL, _TEST_CAP = range(1, 8)


def _rng(seed: int, *tags: int) -> np.random.Generator:
    return np.random.default_rng([seed, *tags])


@dataclass
class FedConfig:
    clients: int = 2
    alpha: float = 100.0
    rounds: int = 100
    local_epochs: int = 1
    n_qubits: int = 4
    base_layers: int = 3
    lr: float = 0.01
    batch_size: int = 50
    personalized: bool = True
    seed: int = 0
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    data_root: str | None = None
    class_a: int = pdata.TROUSER
    class_b: int = pdata.ANKLE_BOOT
    sample_cap: int | None = None
    test_cap: int | None = None
    # base-layer angles are kept in [0, pi - margin]
    margin: float = 0.05
    # "zeros" starts every personalized layer at the identity; "uniform" draws from [0, pi - margin]
    personal_init: str = "zeros"
    workers: int = 1

    def __post_init__(self):
        if isinstance(self.channel, dict):
            self.channel = ChannelConfig(**self.channel)
        for name in ("clients", "rounds", "n_qubits", "base_layers", "batch_size", "workers"):
            if getattr(self, name) < (0 if name == "rounds" else 1):
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.local_epochs < 0:
            raise ValueError("local_epochs must be non-negative")
        if not self.alpha > 0 or not self.lr > 0:
            raise ValueError("alpha and lr must be positive")
        if self.n_qubits % 2 or 28 % self.image_side:
            raise ValueError(f"{self.n_qubits} qubits do not amplitude-encode a pooled 28x28 image")
        if self.personal_init not in ("zeros", "uniform"):
            raise ValueError(f"personal_init must be 'zeros' or 'uniform', got {self.personal_init!r}")
        if not 0 <= self.margin < np.pi:
            raise ValueError("margin must lie in [0, pi)")

    @property
    def image_side(self) -> int:
        return 2 ** (self.n_qubits // 2)

    @property
    def base_bounds(self) -> tuple[float, float]:
        return 0.0, np.pi - self.margin

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["channel"] = dataclasses.asdict(self.channel)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FedConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def replace(self, **changes) -> "FedConfig":
        return dataclasses.replace(self, **changes)


@dataclass
class FederatedData:
    client_features: list[np.ndarray]
    client_labels: list[np.ndarray]
    test_features: np.ndarray
    test_labels: np.ndarray
    partition: pdata.PartitionMatrix

    @property
    def client_sizes(self) -> list[int]:
        return [len(y) for y in self.client_labels]


def _features(ds: pdata.RawDataset, side: int) -> np.ndarray:
    feats = pdata.pool(ds.images, side).reshape(len(ds), -1)
    norms = np.linalg.norm(feats, axis=1)
    if np.any(norms == 0):
        raise ValueError("dataset contains all-zero images")
    return feats / norms[:, None]


def prepare_data(config: FedConfig, train: pdata.RawDataset | None = None, test: pdata.RawDataset | None = None) -> FederatedData:
    """Load, binary-filter, partition, cap and preprocess the client and test sets."""
    if train is None:
        train = pdata.load_split("train", config.data_root)
    if test is None:
        test = pdata.load_split("test", config.data_root)
    train = pdata.filter_binary(train, config.class_a, config.class_b)
    test = pdata.filter_binary(test, config.class_a, config.class_b)

    D = pdata.sample_partition_matrix(config.alpha, 2, config.clients, _rng(config.seed, _PARTITION))
    parts = pdata.partition(train, D, _rng(config.seed, _PARTITION, 1))
    parts = [pdata.subsample(p, config.sample_cap, _rng(config.seed, _CAP, m)) for m, p in enumerate(parts)]
    empty = [m for m, p in enumerate(parts) if len(p) == 0]
    if empty:
        raise ValueError(f"clients {empty} received no samples (alpha={config.alpha}, M={config.clients})")
    test = pdata.subsample(test, config.test_cap, _rng(config.seed, _TEST_CAP))
    side = config.image_side
    return FederatedData(
        [_features(p, side) for p in parts],
        [p.labels.astype(int) for p in parts],
        _features(test, side),
        test.labels.astype(int),
        D,
    )


@dataclass
class RoundMetrics:
    round: int
    server_acc: float
    client_acc: list[float]
    client_loss: list[float]
    global_objective: float
    n_projected: int = 0

    @property
    def mean_client_acc(self) -> float:
        return float(np.mean(self.client_acc))


@dataclass
class OverheadReport:
    t_down: float
    t_up: float
    server_storage: int
    client_storage: int
    server_depth: int
    client_depth: int
    circuit_qubits: int
    t_c: float = T_C
    t_n: float = T_N


@dataclass
class FedResult:
    config: FedConfig
    metrics: list[RoundMetrics]
    initial_theta_b: np.ndarray
    server_theta_b: np.ndarray
    clients: list[ModelParams]
    client_sizes: list[int]
    uploads: list[np.ndarray] = field(default_factory=list)
    transcripts: list[protocol.AggregationTranscript] = field(default_factory=list)


def global_objective(client_losses) -> float:
    losses = np.asarray(client_losses, dtype=float)
    if losses.size == 0:
        raise ValueError("no client losses")
    return float(losses.mean())


def evaluate(params: ModelParams, features, labels) -> float:
    """Fraction of samples whose argmax class score (ties -> 0) matches the label."""
    labels = np.asarray(labels, dtype=int)
    if labels.size == 0:
        raise ValueError("empty test set")
    return float(np.mean(predict(model_scores(params, np.asarray(features, dtype=float))) == labels))


def server_model(theta_b, config: FedConfig) -> ModelParams:
    return ModelParams(theta_b, np.zeros(0), config.n_qubits, config.base_layers)


def overhead_report(config: FedConfig) -> OverheadReport:
    n, k, R, M = config.n_qubits, config.base_layers, config.rounds, config.clients
    per_round = 4 * n * k
    return OverheadReport(
        t_down=per_round * R * T_C * (M + 1) + R * T_N,
        t_up=8 * n * k * R * T_C + R * T_N,
        server_storage=per_round * R * M,
        client_storage=per_round * R,
        server_depth=circuit_depth(k, personalized=False),
        client_depth=circuit_depth(k, personalized=config.personalized),
        circuit_qubits=2 * int(np.log2(config.image_side)),
    )


def init_personal(config: FedConfig, m: int) -> np.ndarray:
    """Client ``m``'s starting personalized angles (empty without the layer)."""
    if not config.personalized:
        return np.zeros(0)
    if config.personal_init == "zeros":
        return np.zeros(2 * config.n_qubits)
    return _rng(config.seed, _CLIENT_INIT, m).uniform(*config.base_bounds, 2 * config.n_qubits)


def run_federated(config: FedConfig, fed_data: FederatedData | None = None) -> FedResult:
    if fed_data is None:
        fed_data = prepare_data(config)
    n, k, M = config.n_qubits, config.base_layers, config.clients
    if len(fed_data.client_labels) != M:
        raise ValueError(f"data prepared for {len(fed_data.client_labels)} clients, config has {M}")
    lo, hi = config.base_bounds
    n_base = 4 * n * k

    theta_b = _rng(config.seed, _SERVER_INIT).uniform(lo, hi, n_base)
    initial = theta_b.copy()
    clients = []
    for m in range(M):
        tp = init_personal(config, m)
        clients.append(ModelParams(theta_b, tp, n, k))
    adams = [AdamState.zeros(c.size, lr=config.lr) for c in clients]
    scores = protocol.weighted_scores(fed_data.client_sizes)
    channel_rng = _rng(config.seed, _CHANNEL, config.channel.seed)

    result = FedResult(config, [], initial, theta_b, clients, fed_data.client_sizes)

    def train_client(m: int, received: np.ndarray, r: int):
        return local_train(
            fed_data.client_features[m],
            fed_data.client_labels[m],
            clients[m].with_base(received),
            config.local_epochs,
            config.batch_size,
            adams[m],
            _rng(config.seed, _SHUFFLE, m, r),
            base_bounds=config.base_bounds,
        )

    pool = ThreadPoolExecutor(config.workers) if config.workers > 1 else None
    try:
        for r in range(1, config.rounds + 1):
            received = protocol.broadcast_downlink(theta_b, M, config.channel, channel_rng)
            if pool is None:
                outs = [train_client(m, received[m], r) for m in range(M)]
            else:
                outs = list(pool.map(train_client, range(M), received, [r] * M))
            clients = [o.params for o in outs]

            upload = np.array([c.theta_b for c in clients])
            theta_b, transcript = protocol.aggregate_uplink(upload, scores, config.channel, channel_rng, r)
            private = [c.theta_p for c in clients] + [f * c.theta_p for f, c in zip(scores.F, clients)]
            protocol.check_transcript_hygiene(
                transcript, n_base, M, np.concatenate(private), expected_payloads=(scores.F[:, None] * upload).T
            )

            losses = [
                o.epoch_losses[-1] if o.epoch_losses else _eval_loss(c, fed_data.client_features[m], fed_data.client_labels[m])
                for m, (o, c) in enumerate(zip(outs, clients))
            ]
            metrics = RoundMetrics(
                round=r,
                server_acc=evaluate(server_model(theta_b, config), fed_data.test_features, fed_data.test_labels),
                client_acc=[evaluate(c, fed_data.test_features, fed_data.test_labels) for c in clients],
                client_loss=losses,
                global_objective=global_objective(losses),
                n_projected=sum(o.n_projected for o in outs),
            )
            result.metrics.append(metrics)
            result.uploads.append(upload)
            result.transcripts.append(transcript)
            log.info(
                "round %d: server_acc=%.4f mean_client_acc=%.4f objective=%.5f",
                r, metrics.server_acc, metrics.mean_client_acc, metrics.global_objective,
            )
    finally:
        if pool is not None:
            pool.shutdown()

    result.server_theta_b = theta_b
    result.clients = clients
    return result


def _eval_loss(params: ModelParams, features, labels) -> float:
    return cross_entropy_loss(model_scores(params, features), labels)


def run_centralized(config: FedConfig, fed_data: FederatedData | None = None) -> list[float]:
    """Base-layer-only model trained on the pooled client data, one epoch per round.

    Returns the per-round training loss (the "no federation" reference curve).
    """
    if fed_data is None:
        fed_data = prepare_data(config)
    n, k = config.n_qubits, config.base_layers
    feats = np.concatenate(fed_data.client_features)
    labels = np.concatenate(fed_data.client_labels)
    params = server_model(_rng(config.seed, _SERVER_INIT).uniform(*config.base_bounds, 4 * n * k), config)
    adam = AdamState.zeros(params.size, lr=config.lr)
    losses = []
    for r in range(1, config.rounds + 1):
        out = local_train(feats, labels, params, config.local_epochs, config.batch_size, adam,
                          _rng(config.seed, _SHUFFLE, 0, r))
        params = out.params
        losses.append(out.epoch_losses[-1] if out.epoch_losses else _eval_loss(params, feats, labels))
    return losses


def metrics_header(M: int) -> list[str]:
    return ["round", "server_acc"] + [f"client_{m}_acc" for m in range(M)] + ["mean_client_acc", "global_objective"]


def write_metrics_csv(metrics: list[RoundMetrics], M: int, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(metrics_header(M))
        for rm in metrics:
            w.writerow([rm.round, repr(rm.server_acc), *map(repr, rm.client_acc),
                        repr(rm.mean_client_acc), repr(rm.global_objective)])


def summary(result: FedResult) -> dict:
    last = result.metrics[-1] if result.metrics else None
    return {
        "config": result.config.to_dict(),
        "client_sizes": result.client_sizes,
        "rounds_completed": len(result.metrics),
        "final_server_acc": last.server_acc if last else None,
        "final_client_acc": last.client_acc if last else None,
        "final_mean_client_acc": last.mean_client_acc if last else None,
        "final_global_objective": last.global_objective if last else None,
        "projected_coordinates": sum(m.n_projected for m in result.metrics),
        "overhead": dataclasses.asdict(overhead_report(result.config)),
    }


def write_artifacts(result: FedResult, out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "metrics": out / "metrics.csv",
        "summary": out / "summary.json",
        "transcript": out / "transcript.jsonl",
    }
    write_metrics_csv(result.metrics, result.config.clients, paths["metrics"])
    paths["summary"].write_text(json.dumps(summary(result), indent=2) + "\n")
    with open(paths["transcript"], "w") as fh:
        for t in result.transcripts:
            t.to_jsonl(fh)
    return paths
