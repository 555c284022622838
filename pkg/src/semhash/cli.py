"""Command-line entry point wiring the whole pipeline.

Subcommands: synth, train, encode, query, eval, sweep, gradcheck, bench.
Every run echoes its fully resolved configuration as key=value lines
before executing, so any artifact can be reproduced from its log alone.
Exit codes: 0 success, 1 runtime failure, 2 bad usage.

Training settings resolve with precedence
built-in defaults < config file (key=value lines) < command-line flags.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import fields as dataclass_fields
from pathlib import Path

import numpy as np

from . import featureio, gradcheck, hamming, synth, trainer
from .featureio import FormatError, read_codebook, read_features, write_codebook, write_features
from .head import forward, load_head, save_head
from .losses import LossWeights
from .trainer import TrainConfig, TrainingError

_TRAIN_KEYS = {
    "k": int, "rho": float, "lr": float, "momentum": float,
    "epochs_stage1": int, "epochs_stage2": int, "batch_size": int, "seed": int,
    "w_sem": float, "alpha": float, "beta": float, "gamma": float,
    "rotation_angles": str,
}


def _train_defaults() -> dict:
    cfg = TrainConfig()
    out = {name: getattr(cfg, name)
           for name in ("k", "rho", "lr", "momentum", "epochs_stage1",
                        "epochs_stage2", "batch_size", "seed")}
    for name in ("w_sem", "alpha", "beta", "gamma"):
        out[name] = getattr(cfg.weights, name)
    out["rotation_angles"] = ""
    return out


def _parse_config_file(path) -> dict:
    entries = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in _TRAIN_KEYS:
            raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
        entries[key] = _TRAIN_KEYS[key](value.strip())
    return entries


def _resolve_train_config(args) -> TrainConfig:
    resolved = _train_defaults()
    if getattr(args, "config", None):
        resolved.update(_parse_config_file(args.config))
    overrides = {
        "k": args.bits, "rho": args.rho, "lr": args.lr, "momentum": args.momentum,
        "epochs_stage1": args.epochs1, "epochs_stage2": args.epochs2,
        "batch_size": args.batch_size, "seed": args.seed,
        "w_sem": args.w_sem, "alpha": args.alpha, "beta": args.beta, "gamma": args.gamma,
    }
    for key, value in overrides.items():
        if value is not None:
            resolved[key] = value
    angles = resolved.pop("rotation_angles")
    if isinstance(angles, str):
        angles = tuple(float(a) for a in angles.split(",") if a.strip())
    weights = LossWeights(w_sem=resolved.pop("w_sem"), alpha=resolved.pop("alpha"),
                          beta=resolved.pop("beta"), gamma=resolved.pop("gamma"))
    return TrainConfig(weights=weights, rotation_angles=tuple(angles), **resolved)


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.12g}"
    if isinstance(value, (tuple, list)):
        return ",".join(_fmt(v) for v in value)
    return str(value)


def _echo_config(command: str, settings: dict) -> None:
    print(f"command={command}")
    for key in sorted(settings):
        if settings[key] is not None:
            print(f"{key}={_fmt(settings[key])}")


def _config_settings(cfg: TrainConfig) -> dict:
    out = {name.name: getattr(cfg, name.name) for name in dataclass_fields(cfg)
           if name.name != "weights"}
    for name in ("w_sem", "alpha", "beta", "gamma"):
        out[name] = getattr(cfg.weights, name)
    return out


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--bits", type=int, default=None, help="code length k")
    p.add_argument("--config", default=None, help="key=value config file")
    p.add_argument("--rho", type=float, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--momentum", type=float, default=None)
    p.add_argument("--epochs1", type=int, default=None, help="stage-1 epochs")
    p.add_argument("--epochs2", type=int, default=None,
                   help="stage-2 epochs (rotation stage; needs R>0 features)")
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--w-sem", type=float, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--gamma", type=float, default=None)


def cmd_synth(args) -> int:
    settings = dict(out=args.out, n=args.n, d=args.d, clusters=args.clusters,
                    separation=args.separation, std=args.std, seed=args.seed,
                    holdout=args.holdout, holdout_out=args.holdout_out,
                    augment_orthogonal=args.augment_orthogonal)
    _echo_config("synth", settings)
    fs = synth.make_clusters(args.n, args.d, args.clusters,
                             separation=args.separation, std=args.std, seed=args.seed)
    if args.augment_orthogonal:
        fs = synth.augment_with_orthogonal(fs, args.seed)
    manifest = {key: _fmt(value) for key, value in settings.items()
                if value is not None and key not in ("out", "holdout_out")}
    manifest["generator"] = "gaussian-mixture"
    manifest["rotation_angles"] = "orthogonal" if args.augment_orthogonal else ""
    if args.holdout:
        db_fs, query_fs = synth.holdout_split(fs, args.holdout, args.seed)
        query_path = args.holdout_out or str(Path(args.out).with_suffix("")) + ".queries.usdf"
        write_features(db_fs, args.out)
        write_features(query_fs, query_path)
        featureio.write_manifest(args.out, manifest)
        featureio.write_manifest(query_path, manifest)
        print(f"wrote {args.out} (n={db_fs.n}) and {query_path} (n={query_fs.n})")
    else:
        write_features(fs, args.out)
        featureio.write_manifest(args.out, manifest)
        print(f"wrote {args.out} (n={fs.n}, d={fs.d}, R={fs.rotations})")
    return 0


def cmd_train(args) -> int:
    cfg = _resolve_train_config(args)
    log_path = args.log or args.out + ".log"
    settings = _config_settings(cfg)
    settings.update(features=args.features, out=args.out, log=log_path)
    _echo_config("train", settings)
    fs = read_features(args.features)

    lines = []

    def log(line):
        lines.append(line)
        print(line)

    trace = trainer.train(fs, cfg, log=log)
    save_head(trace.params, args.out)
    Path(log_path).write_text("\n".join(lines) + ("\n" if lines else ""))
    print(f"wrote {args.out} and {log_path} ({len(trace.reports)} epochs)")
    return 0


def cmd_encode(args) -> int:
    _echo_config("encode", dict(features=args.features, params=args.params,
                                out=args.out, block=args.block))
    fs = read_features(args.features)
    params = load_head(args.params)
    if params.d != fs.d:
        raise ValueError(f"dimension mismatch: head expects d={params.d}, features have d={fs.d}")
    if not 0 <= args.block <= fs.rotations:
        raise ValueError(f"block {args.block} out of range (file has R={fs.rotations})")
    cb = trainer.encode_block(params, fs, args.block)
    write_codebook(cb, args.out)
    print(f"wrote {args.out} (n={cb.n}, k={cb.k})")
    return 0


def _query_bits(args, k: int) -> np.ndarray:
    if args.code is not None:
        bits = np.array([int(ch) for ch in args.code.strip()], dtype=np.uint8)
        if bits.size != k or not np.all((bits == 0) | (bits == 1)):
            raise ValueError(f"--code must be a {k}-character string of 0s and 1s")
        return bits[None, :]
    if not (args.features and args.params):
        raise ValueError("provide either --code or both --features and --params")
    fs = read_features(args.features)
    params = load_head(args.params)
    codes = hamming.binarize(forward(params, fs.block(0)).b)
    if args.row is not None:
        if not 0 <= args.row < fs.n:
            raise ValueError(f"--row {args.row} out of range (n={fs.n})")
        return codes[args.row:args.row + 1]
    return codes


def cmd_query(args) -> int:
    _echo_config("query", dict(index=args.index, code=args.code, features=args.features,
                               params=args.params, row=args.row, k=args.k))
    index = read_codebook(args.index)
    queries = _query_bits(args, index.k)
    for row in range(queries.shape[0]):
        if queries.shape[0] > 1:
            print(f"row={row}")
        for item_id, dist in hamming.query(index, queries[row], args.k):
            print(f"{item_id}\t{dist}")
    return 0


def cmd_eval(args) -> int:
    csv_path = args.csv or "eval_per_query.csv"
    _echo_config("eval", dict(index=args.index, queries=args.queries,
                              db_labels=args.db_labels, query_labels=args.query_labels,
                              k=args.k, csv=csv_path))
    index = read_codebook(args.index)
    query_cb = read_codebook(args.queries)
    if query_cb.k != index.k:
        raise ValueError(f"code length mismatch: index k={index.k}, queries k={query_cb.k}")
    db_fs = read_features(args.db_labels)
    query_fs = read_features(args.query_labels)
    if db_fs.labels is None or query_fs.labels is None:
        raise ValueError("both label files must carry labels")
    db_labels = db_fs.labels[index.ids]
    query_labels = query_fs.labels[query_cb.ids]
    query_bits = hamming.unpack_codes(query_cb.codes, query_cb.k)
    report = hamming.evaluate_map(index, query_bits, query_labels, db_labels,
                                  args.k, query_ids=query_cb.ids)
    print(f"k={report.k}")
    print(f"queries={len(report.aps)}")
    print(f"map_at_k={report.map_at_k:.6f}")
    rows = "\n".join(f"{qid},{ap:.6f}" for qid, ap in zip(report.query_ids, report.aps))
    Path(csv_path).write_text("query_id,ap\n" + rows + "\n")
    print(f"wrote {csv_path}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _resolve_train_config(args)
    rho_list = [float(r) for r in args.rho_list.split(",") if r.strip()]
    settings = _config_settings(cfg)
    settings.update(features=args.features, rho_list=tuple(rho_list),
                    holdout=args.holdout, k_eval=args.k_eval)
    _echo_config("sweep", settings)
    fs = read_features(args.features)
    rows = trainer.rho_sweep(fs, cfg, rho_list, n_queries=args.holdout, eval_k=args.k_eval)
    print(trainer.format_sweep_table(rows, args.k_eval))
    return 0


def cmd_gradcheck(args) -> int:
    tolerance = args.tolerance
    if tolerance is None:
        tolerance = 1e-6 if args.loss in ("j3", "j4") else 1e-4
    _echo_config("gradcheck", dict(loss=args.loss, trials=args.trials,
                                   eps=args.eps, seed=args.seed, tolerance=tolerance))
    report = gradcheck.run_trials(args.loss, args.trials, seed=args.seed, eps=args.eps)
    print(f"loss={report.loss}")
    print(f"trials={args.trials}")
    print(f"max_rel_error={report.max_rel_error:.3e}")
    if report.max_rel_error >= tolerance:
        print(f"FAIL: exceeds tolerance {tolerance:g}", file=sys.stderr)
        return 1
    print(f"ok: below tolerance {tolerance:g}")
    return 0


def cmd_bench(args) -> int:
    _echo_config("bench", dict(n=args.n, bits=args.bits, queries=args.queries,
                               seed=args.seed, check=args.check))
    rng = np.random.default_rng(args.seed)
    bits = rng.integers(0, 2, size=(args.n, args.bits), dtype=np.uint8)
    index = hamming.build_index(bits, np.arange(args.n, dtype=np.uint64))
    queries = rng.integers(0, 2, size=(args.queries, args.bits), dtype=np.uint8)

    started = time.perf_counter()
    for qi in range(queries.shape[0]):
        hamming.hamming_distances(index, queries[qi])
    elapsed = time.perf_counter() - started
    rate = args.n * queries.shape[0] / elapsed if elapsed > 0 else float("inf")

    for qi in range(min(args.check, queries.shape[0])):
        fast = hamming.query(index, queries[qi], 100)
        slow = hamming.naive_query(bits, index.ids, queries[qi], 100)
        if fast != slow:
            print(f"FAIL: packed scan disagrees with brute force on query {qi}",
                  file=sys.stderr)
            return 1
    print(f"codes_per_second={rate:.0f}")
    print(f"brute_force_parity=ok ({min(args.check, queries.shape[0])} queries)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="semhash",
        description="Train compact binary codes, index them, and search in Hamming space")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a labeled Gaussian-mixture feature file")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=600)
    p.add_argument("--d", type=int, default=64)
    p.add_argument("--clusters", type=int, default=3)
    p.add_argument("--separation", type=float, default=6.0)
    p.add_argument("--std", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--holdout", type=int, default=0,
                   help="also write this many rows to a query file")
    p.add_argument("--holdout-out", default=None)
    p.add_argument("--augment-orthogonal", action="store_true",
                   help="append one orthogonally transformed block (R=1)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a hashing head on a feature file")
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True, help="output head-parameter file")
    p.add_argument("--log", default=None, help="training log path (default: <out>.log)")
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("encode", help="binarize a feature file with a trained head")
    p.add_argument("--features", required=True)
    p.add_argument("--params", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--block", type=int, default=0, help="feature block to encode")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("query", help="top-K Hamming search against a codebook")
    p.add_argument("--index", required=True)
    p.add_argument("--code", default=None, help="query as a bit string")
    p.add_argument("--features", default=None)
    p.add_argument("--params", default=None)
    p.add_argument("--row", type=int, default=None, help="query only this feature row")
    p.add_argument("--k", type=int, default=10)
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("eval", help="MAP@K of a query codebook against an index")
    p.add_argument("--index", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--db-labels", required=True, help="feature file carrying database labels")
    p.add_argument("--query-labels", required=True, help="feature file carrying query labels")
    p.add_argument("--k", type=int, default=100)
    p.add_argument("--csv", default=None, help="per-query AP output (default eval_per_query.csv)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="train and evaluate once per rho value")
    p.add_argument("--features", required=True)
    p.add_argument("--rho-list", required=True, help="comma-separated rho values")
    p.add_argument("--holdout", type=int, default=60)
    p.add_argument("--k-eval", type=int, default=100)
    _add_train_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gradcheck", help="finite-difference check of a loss gradient")
    p.add_argument("--loss", required=True, choices=gradcheck.LOSS_NAMES)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--tolerance", type=float, default=None,
                   help="override the default tolerance (1e-6 smooth, 1e-4 otherwise)")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("bench", help="packed-scan throughput plus brute-force parity")
    p.add_argument("--n", type=int, default=100000)
    p.add_argument("--bits", type=int, default=64)
    p.add_argument("--queries", type=int, default=10)
    p.add_argument("--check", type=int, default=3, help="queries to verify against brute force")
    p.add_argument("--seed", type=int, default=42)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (FormatError, TrainingError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
