"""Command-line entry point: ``pqfl {train,sweep,overhead,protocol-check,partition-stats}``."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import yaml

from . import data as pdata
from . import protocol
from .orchestrator import FedConfig, overhead_report, prepare_data, run_centralized, run_federated, write_artifacts
from .protocol import ChannelConfig

log = logging.getLogger("pqfl")

SWEEP_DEFAULTS = {"alphas": [1.0, 10.0, 100.0], "clients": [2, 4, 8], "workers": 1}
TABLE_COLUMNS = ["alpha", "M", "personalized", "server_acc", "mean_client_acc"]


class CliError(Exception):
    pass


def load_config(path) -> tuple[FedConfig, dict]:
    """Read a YAML config; returns the run config and the (optional) sweep section."""
    if path is None:
        return FedConfig(), dict(SWEEP_DEFAULTS)
    path = Path(path)
    if not path.is_file():
        raise CliError(f"config file {path} not found")
    raw = yaml.safe_load(path.read_text()) or {}
    sweep = {**SWEEP_DEFAULTS, **(raw.pop("sweep", None) or {})}
    return FedConfig.from_dict(raw), sweep


def dump_config(config: FedConfig, path, sweep: dict | None = None) -> None:
    d = config.to_dict()
    if sweep is not None:
        d["sweep"] = sweep
    Path(path).write_text(yaml.safe_dump(d, sort_keys=False))


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x]


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x]


def apply_overrides(config: FedConfig, args) -> FedConfig:
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.rounds is not None:
        changes["rounds"] = args.rounds
    if args.sample_cap is not None:
        changes["sample_cap"] = args.sample_cap
    if args.test_cap is not None:
        changes["test_cap"] = args.test_cap
    if args.no_personalized:
        changes["personalized"] = False
    if args.data_root is not None:
        changes["data_root"] = args.data_root
    channel = config.channel
    if args.channel is not None:
        channel = dataclasses.replace(channel, mode=args.channel)
    if args.shots is not None:
        channel = dataclasses.replace(channel, shots=args.shots)
    changes["channel"] = channel
    if config.data_root is None and "data_root" not in changes and os.environ.get(pdata.DATA_ROOT_ENV):
        changes["data_root"] = os.environ[pdata.DATA_ROOT_ENV]
    return config.replace(**changes)


def cmd_train(args) -> int:
    config, _ = load_config(args.config)
    config = apply_overrides(config, args)
    if args.clients is not None:
        config = config.replace(clients=_ints(args.clients)[0])
    if args.alpha is not None:
        config = config.replace(alpha=_floats(args.alpha)[0])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dump_config(config, out / "config.yaml")
    result = run_federated(config)
    paths = write_artifacts(result, out)
    last = result.metrics[-1] if result.metrics else None
    if last:
        print(f"round {last.round}: server_acc={last.server_acc:.4f} mean_client_acc={last.mean_client_acc:.4f}")
    print(f"wrote {', '.join(str(p) for p in paths.values())}")
    return 0


def _run_cell(config: FedConfig, out_dir: str) -> dict:
    """One (alpha, M) cell: personalized and plain federated runs plus the centralized reference."""
    rows, curves = [], []
    fed_data = prepare_data(config)
    for personalized in (True, False):
        cfg = config.replace(personalized=personalized)
        result = run_federated(cfg, fed_data)
        write_artifacts(result, Path(out_dir) / ("personalized" if personalized else "plain"))
        last = result.metrics[-1] if result.metrics else None
        rows.append({
            "alpha": cfg.alpha, "M": cfg.clients, "personalized": personalized,
            "server_acc": last.server_acc if last else "",
            "mean_client_acc": last.mean_client_acc if last else "",
        })
        scenario = "personalized" if personalized else "no_personalized"
        curves += [(cfg.alpha, cfg.clients, scenario, m.round, m.global_objective) for m in result.metrics]
    losses = run_centralized(config.replace(personalized=False), fed_data)
    curves += [(config.alpha, config.clients, "no_federation", r, v) for r, v in enumerate(losses, 1)]
    return {"rows": rows, "curves": curves}


def cmd_sweep(args) -> int:
    base, sweep = load_config(args.config)
    base = apply_overrides(base, args)
    alphas = _floats(args.alpha) if args.alpha else [float(a) for a in sweep["alphas"]]
    Ms = _ints(args.clients) if args.clients else [int(m) for m in sweep["clients"]]
    workers = args.workers or int(sweep.get("workers", 1))
    if not alphas or not Ms:
        raise CliError("sweep grid is empty")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dump_config(base, out / "config.yaml", {"alphas": alphas, "clients": Ms, "workers": workers})

    cells = [(a, m) for a in alphas for m in Ms]
    jobs = [(base.replace(alpha=a, clients=m), str(out / f"alpha{a:g}_M{m}")) for a, m in cells]
    results, failures = {}, {}
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            futures = {cell: ex.submit(_run_cell, *job) for cell, job in zip(cells, jobs)}
            for cell, fut in futures.items():
                try:
                    results[cell] = fut.result()
                except Exception as exc:  # reported per cell
                    failures[cell] = repr(exc)
    else:
        for cell, job in zip(cells, jobs):
            try:
                results[cell] = _run_cell(*job)
            except Exception as exc:
                failures[cell] = repr(exc)

    with open(out / "table.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, TABLE_COLUMNS, lineterminator="\n")
        w.writeheader()
        for cell in cells:
            if cell in results:
                w.writerows(results[cell]["rows"])
            else:
                for pers in (True, False):
                    w.writerow({"alpha": cell[0], "M": cell[1], "personalized": pers, "server_acc": "", "mean_client_acc": ""})
    with open(out / "loss_curves.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["alpha", "M", "scenario", "round", "loss"])
        for cell in cells:
            if cell in results:
                w.writerows(results[cell]["curves"])
    if failures:
        (out / "failures.json").write_text(json.dumps({f"alpha={a:g},M={m}": e for (a, m), e in failures.items()}, indent=2))
        for (a, m), e in failures.items():
            print(f"cell alpha={a:g} M={m} failed: {e}", file=sys.stderr)
        return 1
    print(f"wrote {out / 'table.csv'} and {out / 'loss_curves.csv'} ({len(cells) * 2} rows)")
    return 0


def cmd_overhead(args) -> int:
    config, _ = load_config(args.config)
    config = apply_overrides(config, args)
    if args.clients is not None:
        config = config.replace(clients=_ints(args.clients)[0])
    print(json.dumps(dataclasses.asdict(overhead_report(config)), indent=2))
    return 0


def cmd_protocol_check(args) -> int:
    rng = np.random.default_rng(args.seed if args.seed is not None else 0)
    channel = ChannelConfig("ideal")
    lines, ok = [], True

    def report(name, passed, detail):
        nonlocal ok
        ok &= passed
        lines.append(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")

    worst = 0.0
    for _ in range(100):
        M = int(rng.choice([2, 4, 8]))
        F = protocol.weighted_scores(rng.integers(1, 1000, size=M))
        thetas = rng.uniform(0, np.pi - 0.05, size=(M, 48))
        agg, _ = protocol.aggregate_uplink(thetas, F, channel, rng)
        worst = max(worst, float(np.abs(agg - F.F @ thetas).max()))
    report("uplink ideal round-trip", worst < 1e-9, f"max error {worst:.3e} (tol 1e-9)")

    theta = rng.uniform(0, np.pi, 48)
    down = protocol.broadcast_downlink(theta, 4, channel, rng)
    err = float(np.abs(down - theta).max())
    report("downlink ideal round-trip", err < 1e-9, f"max error {err:.3e} (tol 1e-9)")

    dev = protocol.max_mixedness_deviation(
        rng.uniform(0, 2 * np.pi, size=M) for M in rng.choice([2, 4, 8], size=50)
    )
    report("single-qubit marginals are I/2", dev < 1e-10, f"max deviation {dev:.3e} (tol 1e-10)")

    grid = _ints(args.shots_grid)
    slope, variances = protocol.shot_noise_slope(grid, reps=args.reps, seed=int(rng.integers(2**31)))
    detail = ", ".join(f"R={R}: {v:.3e}" for R, v in zip(grid, variances))
    report("shot-noise variance slope", abs(slope + 1) <= 0.2, f"slope {slope:.3f} (target -1 +/- 0.2); {detail}")

    print("\n".join(lines))
    return 0 if ok else 1


def cmd_partition_stats(args) -> int:
    config, _ = load_config(args.config)
    config = apply_overrides(config, args)
    alphas = _floats(args.alpha) if args.alpha else [1.0, 10.0, 100.0]
    Ms = _ints(args.clients) if args.clients else [2, 4, 8]
    train = pdata.filter_binary(pdata.load_split("train", config.data_root), config.class_a, config.class_b)
    print("alpha,M,seeds,conserved,mean_max_skew,client_label_counts(seed0)")
    for a in alphas:
        for M in Ms:
            skews, conserved = [], True
            for s in range(args.seeds):
                rng = np.random.default_rng([config.seed, s])
                D = pdata.sample_partition_matrix(a, 2, M, rng)
                idx = pdata.partition_indices(train.labels, D, rng)
                conserved &= sum(len(i) for i in idx) == len(train)
                shares = [np.mean(train.labels[i] == 0) if len(i) else 0.5 for i in idx]
                skews.append(max(abs(x - 0.5) for x in shares))
                if s == 0:
                    counts = [np.bincount(train.labels[i], minlength=2).tolist() for i in idx]
            print(f"{a:g},{M},{args.seeds},{conserved},{np.mean(skews):.4f},\"{counts}\"")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pqfl", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out=False):
        p.add_argument("--config", help="YAML config file")
        if out:
            p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int)
        p.add_argument("--clients", help="client count (comma list for sweep)")
        p.add_argument("--alpha", help="Dirichlet concentration (comma list for sweep)")
        p.add_argument("--rounds", type=int)
        p.add_argument("--channel", choices=["ideal", "sampled"])
        p.add_argument("--shots", type=int)
        p.add_argument("--no-personalized", action="store_true")
        p.add_argument("--sample-cap", type=int, help="max training samples per client")
        p.add_argument("--test-cap", type=int, help="max shared test samples")
        p.add_argument("--data-root", help=f"IDX directory (falls back to ${pdata.DATA_ROOT_ENV}, then bundled data)")

    common(sub.add_parser("train", help="run one federated experiment"), out=True)
    p = sub.add_parser("sweep", help="run the alpha x M x personalization grid")
    common(p, out=True)
    p.add_argument("--workers", type=int)
    common(sub.add_parser("overhead", help="print communication/computation overhead"))
    p = sub.add_parser("protocol-check", help="run the channel self-checks")
    p.add_argument("--seed", type=int)
    p.add_argument("--shots-grid", default="100,1000,10000")
    p.add_argument("--reps", type=int, default=200)
    p = sub.add_parser("partition-stats", help="Dirichlet partition statistics")
    common(p)
    p.add_argument("--seeds", type=int, default=200)
    return parser


COMMANDS = {
    "train": cmd_train,
    "sweep": cmd_sweep,
    "overhead": cmd_overhead,
    "protocol-check": cmd_protocol_check,
    "partition-stats": cmd_partition_stats,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (CliError, FileNotFoundError, pdata.IdxFormatError, protocol.ProtocolRangeError,
            protocol.TranscriptLeakError, ValueError) as exc:
        print(f"pqfl {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
