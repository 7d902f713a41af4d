"""Command-line entry point for reproducible runs.

Commands: ``train``, ``eval-nmi``, ``eval-rec``, ``ablate`` and
``export-embeddings``.  Every run writes a frozen key-value copy of its
resolved configuration into the output directory, sufficient to reproduce
the run bit-exactly with a single worker.  Flags override config-file
values, which override defaults; the seed is mandatory and never defaults
to the clock.

Exit codes: 0 success, 2 configuration or input error, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import os
import statistics
import sys
from pathlib import Path

import numpy as np

from . import evaluation, report
from .data import load_ratings, read_entity_index, split_dataset, write_entity_index
from .errors import (
    ConfigError,
    DataFormatError,
    DataValidationError,
    MetricRecError,
    NumericalError,
    TrainingDiverged,
)
from .losses import Hyperparams, RANK_WEIGHT_MODES, VARIANTS
from .synthetic import read_labels_file
from .trainer import TrainConfig, load_checkpoint, train

OUT_DIR_ENV = "METRICREC_OUT"

CHECKPOINT_FILE = "checkpoint.bin"
TRAINING_LOG_FILE = "training_log.tsv"
FROZEN_CONFIG_FILE = "frozen_config.txt"
ENTITY_INDEX_FILE = "entity_index.tsv"
NMI_RESULTS_FILE = "nmi_results.tsv"
REC_RESULTS_FILE = "rec_results.tsv"
ABLATION_RESULTS_FILE = "ablation_results.tsv"
FIGURES_DIR = "figures"

RESULT_COLUMNS = ("metric", "k", "value", "std", "n_evaluated", "seed")


# ----------------------------------------------------------------------
# Config-file plumbing: flat `key = value` lines, diffable, re-loadable.

def _as_str(text):
    return text


def _as_int(text):
    return int(text)


def _as_float(text):
    return float(text)


def _as_bool(text):
    lowered = text.strip().lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _as_int_list(text):
    return [int(v) for v in text.split()]


def _as_float_list(text):
    return [float(v) for v in text.split()]


def parse_config_file(path):
    values = {}
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file does not exist: {path}")
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}: line {lineno}: expected `key = value`")
            key, value = line.split("=", 1)
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def write_frozen_config(path, command, resolved):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"command = {command}\n")
        for key in sorted(resolved):
            value = resolved[key]
            if value is None:
                continue
            if isinstance(value, bool):
                text = "true" if value else "false"
            elif isinstance(value, (list, tuple)):
                text = " ".join(str(v) for v in value)
            else:
                text = str(value)
            fh.write(f"{key} = {text}\n")


def _resolve(args, schema):
    """Merge flag values, config-file values and defaults, in that order."""
    file_values = {}
    if getattr(args, "config", None):
        file_values = parse_config_file(args.config)
    resolved = {}
    for key, (convert, default) in schema.items():
        flag = getattr(args, key, None)
        if flag is not None:
            resolved[key] = flag
        elif key in file_values:
            try:
                resolved[key] = convert(file_values[key])
            except ValueError as exc:
                raise ConfigError(f"config key {key}: {exc}") from exc
        else:
            resolved[key] = default
    return resolved


def _require(resolved, key, hint):
    if resolved.get(key) is None:
        raise ConfigError(f"{hint} is required (flag --{key.replace('_', '-')})")
    return resolved[key]


def _require_path(value, what):
    path = Path(value)
    if not path.exists():
        raise ConfigError(f"{what} does not exist: {path}")
    return path


def _out_dir(resolved):
    out = resolved.get("out") or os.environ.get(OUT_DIR_ENV)
    if not out:
        raise ConfigError(
            f"output directory is required (--out or ${OUT_DIR_ENV})")
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    resolved["out"] = str(path)
    return path


def _figures_dir(out_dir):
    path = out_dir / FIGURES_DIR
    path.mkdir(exist_ok=True)
    return path


def _write_results(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(RESULT_COLUMNS) + "\n")
        for row in rows:
            std = "" if row.get("std") is None else f"{row['std']:.10g}"
            fh.write(f"{row['metric']}\t{row['k']}\t{row['value']:.10g}\t"
                     f"{std}\t{row['n_evaluated']}\t{row['seed']}\n")


# ----------------------------------------------------------------------
# Shared flag schemas.

_DATA_SCHEMA = {
    "data": (_as_str, None),
    "format": (_as_str, "tsv"),
    "threshold": (_as_float, 3.0),
    "ratios": (_as_float_list, [0.6, 0.2, 0.2]),
}

_HYPER_SCHEMA = {
    "dim": (_as_int, 32),
    "batch_size": (_as_int, 512),
    "learning_rate": (_as_float, 0.02),
    "alpha": (_as_float, 0.7),
    "lam": (_as_float, 0.5),
    "theta": (_as_float, 0.3),
    "omega_p": (_as_float, 0.03),
    "omega_r": (_as_float, 0.03),
    "variant": (_as_str, "mml"),
    "candidates": (_as_int, 10),
    "rank_weight": (_as_str, "warp"),
    "covariance_squared": (_as_bool, False),
    "epochs": (_as_int, 30),
    "tolerance": (_as_float, 1e-4),
    "patience": (_as_int, 3),
}

_COMMON_SCHEMA = {
    "seed": (_as_int, None),
    "out": (_as_str, None),
    "workers": (_as_int, 1),
    "figures": (_as_bool, None),
}


def _hyper_from(resolved):
    hyper = Hyperparams(
        alpha=resolved["alpha"], lam=resolved["lam"], theta=resolved["theta"],
        omega_p=resolved["omega_p"], omega_r=resolved["omega_r"],
        learning_rate=resolved["learning_rate"], dim=resolved["dim"],
        batch_size=resolved["batch_size"], variant=resolved["variant"],
        rank_weight_mode=resolved["rank_weight"],
        covariance_squared=resolved["covariance_squared"],
    )
    try:
        hyper.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return hyper


def _load_split(resolved):
    data_path = _require_path(_require(resolved, "data", "a dataset path"),
                              "data file")
    dataset = load_ratings(data_path, format=resolved["format"],
                           threshold=resolved["threshold"])
    try:
        split = split_dataset(dataset, ratios=tuple(resolved["ratios"]),
                              seed=resolved["seed"])
    except DataValidationError as exc:
        raise ConfigError(str(exc)) from exc
    return dataset, split


# ----------------------------------------------------------------------
# Commands.

def _run_training(resolved, split, out_dir, variant=None):
    hyper = _hyper_from(resolved)
    if variant is not None:
        hyper.variant = variant
    config = TrainConfig(
        hyper=hyper,
        max_epochs=resolved["epochs"],
        tolerance=resolved["tolerance"],
        patience=resolved["patience"],
        num_candidates=resolved["candidates"],
        checkpoint_path=str(out_dir / CHECKPOINT_FILE),
        seed=resolved["seed"],
    )
    log_path = out_dir / TRAINING_LOG_FILE
    if log_path.exists():
        log_path.unlink()
    state, log_rows = train(split, config, log_path=str(log_path))
    return state, log_rows


def cmd_train(args):
    schema = {**_COMMON_SCHEMA, **_DATA_SCHEMA, **_HYPER_SCHEMA}
    resolved = _resolve(args, schema)
    _require(resolved, "seed", "a seed")
    out_dir = _out_dir(resolved)
    dataset, split = _load_split(resolved)

    state, log_rows = _run_training(resolved, split, out_dir)

    write_entity_index(dataset, out_dir / ENTITY_INDEX_FILE)
    write_frozen_config(out_dir / FROZEN_CONFIG_FILE, "train", resolved)
    if resolved["figures"]:
        report.render_training_curves(
            log_rows, _figures_dir(out_dir) / "training_loss.png")
    final = log_rows[-1] if log_rows else {"epoch": 0, "objective": float("nan")}
    print(f"trained {resolved['variant']} for {final['epoch']} epoch(s); "
          f"final objective {final['objective']:.6g}")
    print(f"checkpoint: {out_dir / CHECKPOINT_FILE}")
    return 0


def _load_labeled_items(resolved, state):
    labels_path = _require_path(
        _require(resolved, "labels", "an item label file"), "label file")
    index_path = resolved.get("index")
    if index_path is None:
        index_path = Path(resolved["checkpoint"]).parent / ENTITY_INDEX_FILE
    index_path = _require_path(index_path, "entity index file")
    _, item_ids = read_entity_index(index_path)
    token_labels = read_labels_file(labels_path, format=resolved["format"])

    item_rows, labels = [], []
    for token, label in token_labels.items():
        if token in item_ids:
            item_rows.append(item_ids[token])
            labels.append(label)
    if not item_rows:
        raise ConfigError("no labeled item token matches the entity index")
    order = np.argsort(item_rows)
    item_rows = np.asarray(item_rows, dtype=np.int64)[order]
    labels = np.asarray(labels)[order]
    if item_rows[-1] >= state.embeddings.num_items:
        raise ConfigError("label file references items beyond the checkpoint")
    return item_rows, labels


def _nmi_rows(state, item_rows, labels, cluster_counts, seeds, out_dir=None):
    item_vectors = state.embeddings.item_matrix()
    raw_rows, summary_rows = [], []
    for k in cluster_counts:
        values = []
        for seed in seeds:
            assignment = evaluation.spherical_kmeans(item_vectors, k, seed)
            clusters = assignment.clusters[item_rows]
            value = evaluation.nmi_score(labels, clusters)
            values.append(value)
            raw_rows.append({"metric": "nmi", "k": k, "value": value,
                             "std": None, "n_evaluated": labels.size,
                             "seed": seed})
            if out_dir is not None:
                _write_contingency(out_dir, k, seed, labels, clusters)
        summary_rows.append({
            "metric": "nmi_mean", "k": k,
            "value": statistics.fmean(values),
            "std": statistics.pstdev(values) if len(values) > 1 else 0.0,
            "n_evaluated": labels.size,
            "seed": f"{seeds[0]}..{seeds[-1]}" if len(seeds) > 1 else seeds[0],
        })
    return summary_rows, raw_rows


def _write_contingency(out_dir, k, seed, labels, clusters):
    label_values, cluster_values, table = evaluation.contingency_table(
        labels, clusters)
    path = out_dir / f"nmi_contingency_k{k}_seed{seed}.tsv"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("label\\cluster\t" + "\t".join(str(c) for c in cluster_values) + "\n")
        for value, row in zip(label_values, table):
            fh.write(str(value) + "\t" + "\t".join(str(n) for n in row) + "\n")


def cmd_eval_nmi(args):
    schema = {
        **_COMMON_SCHEMA,
        "checkpoint": (_as_str, None),
        "labels": (_as_str, None),
        "index": (_as_str, None),
        "format": (_as_str, "tsv"),
        "clusters": (_as_int_list, [10, 20]),
        "cluster_seeds": (_as_int, 5),
    }
    resolved = _resolve(args, schema)
    base_seed = _require(resolved, "seed", "a seed")
    out_dir = _out_dir(resolved)
    checkpoint = _require_path(
        _require(resolved, "checkpoint", "a checkpoint"), "checkpoint")
    state = load_checkpoint(checkpoint)
    item_rows, labels = _load_labeled_items(resolved, state)

    seeds = list(range(base_seed, base_seed + resolved["cluster_seeds"]))
    summary_rows, raw_rows = _nmi_rows(
        state, item_rows, labels, resolved["clusters"], seeds, out_dir)

    _write_results(out_dir / NMI_RESULTS_FILE, summary_rows + raw_rows)
    write_frozen_config(out_dir / FROZEN_CONFIG_FILE, "eval-nmi", resolved)
    if resolved["figures"] is not False:
        report.render_metric_bars(summary_rows,
                                  _figures_dir(out_dir) / "nmi.png",
                                  title="clustering NMI (mean over seeds)")
    for row in summary_rows:
        print(f"nmi k={row['k']}: {row['value']:.4f} +/- {row['std']:.4f} "
              f"({row['n_evaluated']} labeled items)")
    return 0


def _rec_rows(state, split, modes, k_rec_list, k_nn, workers, seed):
    rows = []
    top = max(k_rec_list)
    for mode in modes:
        results, skipped = evaluation.evaluate_rankings(
            state, split.train, split.test, mode=mode, k_rec=top,
            k_nn=k_nn, workers=workers)
        for k in k_rec_list:
            rows.append({"metric": f"{mode}_hr", "k": k,
                         "value": evaluation.hit_ratio_at_k(results, k),
                         "std": None, "n_evaluated": len(results),
                         "seed": seed})
            rows.append({"metric": f"{mode}_recall", "k": k,
                         "value": evaluation.recall_at_k(results, k),
                         "std": None, "n_evaluated": len(results),
                         "seed": seed})
        if skipped:
            print(f"{mode}: skipped {skipped} cold user(s)", file=sys.stderr)
    return rows


def cmd_eval_rec(args):
    schema = {
        **_COMMON_SCHEMA, **_DATA_SCHEMA,
        "checkpoint": (_as_str, None),
        "mode": (_as_str, "both"),
        "k_rec": (_as_int_list, [10, 50]),
        "k_nn": (_as_int, evaluation.DEFAULT_NEIGHBORS),
    }
    resolved = _resolve(args, schema)
    _require(resolved, "seed", "a seed")
    out_dir = _out_dir(resolved)
    checkpoint = _require_path(
        _require(resolved, "checkpoint", "a checkpoint"), "checkpoint")
    state = load_checkpoint(checkpoint)
    dataset, split = _load_split(resolved)
    if (state.embeddings.num_users != dataset.num_users
            or state.embeddings.num_items != dataset.num_items):
        raise ConfigError(
            f"checkpoint shape ({state.embeddings.num_users} users, "
            f"{state.embeddings.num_items} items) does not match the dataset "
            f"({dataset.num_users} users, {dataset.num_items} items)")

    modes = list(evaluation.RECOMMEND_MODES) if resolved["mode"] == "both" \
        else [resolved["mode"]]
    for mode in modes:
        if mode not in evaluation.RECOMMEND_MODES:
            raise ConfigError(f"unknown recommendation mode {mode!r}")
    rows = _rec_rows(state, split, modes, resolved["k_rec"], resolved["k_nn"],
                     resolved["workers"], resolved["seed"])

    _write_results(out_dir / REC_RESULTS_FILE, rows)
    write_frozen_config(out_dir / FROZEN_CONFIG_FILE, "eval-rec", resolved)
    if resolved["figures"] is not False:
        report.render_metric_bars(rows, _figures_dir(out_dir) / "rec_metrics.png",
                                  title="top-k recommendation quality")
    for row in rows:
        print(f"{row['metric']}@{row['k']}: {row['value']:.4f} "
              f"({row['n_evaluated']} users)")
    return 0


def cmd_ablate(args):
    schema = {
        **_COMMON_SCHEMA, **_DATA_SCHEMA, **_HYPER_SCHEMA,
        "labels": (_as_str, None),
        "index": (_as_str, None),
        "clusters": (_as_int_list, [10]),
        "k_rec": (_as_int_list, [10]),
        "k_nn": (_as_int, evaluation.DEFAULT_NEIGHBORS),
        "mode": (_as_str, "ubcf"),
    }
    resolved = _resolve(args, schema)
    _require(resolved, "seed", "a seed")
    _require_path(_require(resolved, "labels", "an item label file"), "label file")
    out_dir = _out_dir(resolved)
    dataset, split = _load_split(resolved)

    table = []
    metric_names = [f"nmi_{k}" for k in resolved["clusters"]] + \
                   [f"hr_{k}" for k in resolved["k_rec"]]
    for variant in VARIANTS:
        run_dir = out_dir / variant
        run_dir.mkdir(exist_ok=True)
        row = {"variant": variant, "status": "ok"}
        try:
            state, _ = _run_training(resolved, split, run_dir, variant=variant)
            write_entity_index(dataset, run_dir / ENTITY_INDEX_FILE)

            local = dict(resolved)
            local["checkpoint"] = str(run_dir / CHECKPOINT_FILE)
            item_rows, labels = _load_labeled_items(local, state)
            for k in resolved["clusters"]:
                assignment = evaluation.spherical_kmeans(
                    state.embeddings.item_matrix(), k, resolved["seed"])
                row[f"nmi_{k}"] = evaluation.nmi_score(
                    labels, assignment.clusters[item_rows])
            results, _ = evaluation.evaluate_rankings(
                state, split.train, split.test, mode=resolved["mode"],
                k_rec=max(resolved["k_rec"]), k_nn=resolved["k_nn"],
                workers=resolved["workers"])
            for k in resolved["k_rec"]:
                row[f"hr_{k}"] = evaluation.hit_ratio_at_k(results, k)
        except MetricRecError as exc:
            row["status"] = f"failed: {exc}"
            print(f"variant {variant} failed: {exc}", file=sys.stderr)
        table.append(row)

    with open(out_dir / ABLATION_RESULTS_FILE, "w", encoding="utf-8") as fh:
        fh.write("variant\tstatus\t" + "\t".join(metric_names) + "\n")
        for row in table:
            cells = [row["variant"], row["status"]]
            for name in metric_names:
                value = row.get(name)
                cells.append("" if value is None else f"{value:.10g}")
            fh.write("\t".join(cells) + "\n")
    write_frozen_config(out_dir / FROZEN_CONFIG_FILE, "ablate", resolved)
    if resolved["figures"] is not False:
        report.render_ablation_bars(table, metric_names,
                                    _figures_dir(out_dir) / "ablation.png")
    for row in table:
        summary = " ".join(
            f"{name}={row[name]:.4f}" for name in metric_names if name in row)
        print(f"{row['variant']}: {row['status']} {summary}")
    return 0


def cmd_export_embeddings(args):
    schema = {
        "checkpoint": (_as_str, None),
        "index": (_as_str, None),
        "out_file": (_as_str, None),
        "config": (_as_str, None),
    }
    resolved = _resolve(args, schema)
    checkpoint = _require_path(
        _require(resolved, "checkpoint", "a checkpoint"), "checkpoint")
    out_file = _require(resolved, "out_file", "an output file")
    index_path = resolved.get("index") or Path(checkpoint).parent / ENTITY_INDEX_FILE
    index_path = _require_path(index_path, "entity index file")

    state = load_checkpoint(checkpoint)
    user_ids, item_ids = read_entity_index(index_path)
    if (len(user_ids) != state.embeddings.num_users
            or len(item_ids) != state.embeddings.num_items):
        raise ConfigError("entity index does not match the checkpoint shape")
    users = sorted(user_ids.items(), key=lambda kv: kv[1])
    items = sorted(item_ids.items(), key=lambda kv: kv[1])
    with open(out_file, "w", encoding="utf-8") as fh:
        for token, uid in users:
            vec = state.embeddings.user_vec(uid)
            fh.write("user\t" + token + "\t"
                     + "\t".join(f"{v:.17g}" for v in vec) + "\n")
        for token, iid in items:
            vec = state.embeddings.item_vec(iid)
            fh.write("item\t" + token + "\t"
                     + "\t".join(f"{v:.17g}" for v in vec) + "\n")
    print(f"wrote {len(users) + len(items)} embedding rows to {out_file}")
    return 0


# ----------------------------------------------------------------------
# Parser.

def _add_common(parser):
    parser.add_argument("--seed", type=int, default=None,
                        help="run seed (mandatory; no wall-clock default)")
    parser.add_argument("--out", default=None,
                        help=f"output directory (default ${OUT_DIR_ENV})")
    parser.add_argument("--config", default=None,
                        help="key-value config file; flags override it")
    parser.add_argument("--workers", type=int, default=None,
                        help="internal parallelism (default 1, deterministic)")
    parser.add_argument("--figures", action=argparse.BooleanOptionalAction,
                        default=None, help="render figures next to reports")


def _add_data(parser):
    parser.add_argument("--data", default=None, help="interaction file")
    parser.add_argument("--format", choices=("tsv", "csv"), default=None)
    parser.add_argument("--threshold", type=float, default=None,
                        help="positivity threshold on ratings (default 3)")
    parser.add_argument("--ratios", type=float, nargs=3, default=None,
                        metavar=("TRAIN", "VAL", "TEST"))


def _add_hyper(parser):
    parser.add_argument("--dim", type=int, default=None)
    parser.add_argument("--batch-size", type=int, default=None, dest="batch_size")
    parser.add_argument("--learning-rate", type=float, default=None,
                        dest="learning_rate")
    parser.add_argument("--alpha", type=float, default=None,
                        help="explicit/latent loss mix")
    parser.add_argument("--lambda", type=float, default=None, dest="lam",
                        help="user/item balance in the explicit loss")
    parser.add_argument("--theta", type=float, default=None,
                        help="Jaccard similarity threshold")
    parser.add_argument("--omega-p", type=float, default=None, dest="omega_p")
    parser.add_argument("--omega-r", type=float, default=None, dest="omega_r")
    parser.add_argument("--variant", choices=VARIANTS, default=None)
    parser.add_argument("--candidates", type=int, default=None,
                        help="negative candidate pool size per draw")
    parser.add_argument("--rank-weight", choices=RANK_WEIGHT_MODES,
                        default=None, dest="rank_weight")
    parser.add_argument("--covariance-squared", action=argparse.BooleanOptionalAction,
                        default=None, dest="covariance_squared")
    parser.add_argument("--epochs", type=int, default=None)
    parser.add_argument("--tolerance", type=float, default=None)
    parser.add_argument("--patience", type=int, default=None)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="metricrec",
        description="Train and evaluate weighted-metric rating embeddings.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model on a rating file")
    _add_common(p_train)
    _add_data(p_train)
    _add_hyper(p_train)
    p_train.set_defaults(func=cmd_train)

    p_nmi = sub.add_parser("eval-nmi", help="cluster item embeddings and score NMI")
    _add_common(p_nmi)
    p_nmi.add_argument("--checkpoint", default=None)
    p_nmi.add_argument("--labels", default=None, help="item_token<delim>label file")
    p_nmi.add_argument("--index", default=None,
                       help="entity index (default: next to the checkpoint)")
    p_nmi.add_argument("--format", choices=("tsv", "csv"), default=None)
    p_nmi.add_argument("--clusters", type=int, nargs="+", default=None)
    p_nmi.add_argument("--cluster-seeds", type=int, default=None,
                       dest="cluster_seeds", help="number of k-means seeds")
    p_nmi.set_defaults(func=cmd_eval_nmi)

    p_rec = sub.add_parser("eval-rec", help="score top-k recommendations")
    _add_common(p_rec)
    _add_data(p_rec)
    p_rec.add_argument("--checkpoint", default=None)
    p_rec.add_argument("--mode", choices=("ubcf", "ibcf", "both"), default=None)
    p_rec.add_argument("--k-rec", type=int, nargs="+", default=None, dest="k_rec")
    p_rec.add_argument("--k-nn", type=int, default=None, dest="k_nn")
    p_rec.set_defaults(func=cmd_eval_rec)

    p_ablate = sub.add_parser("ablate", help="train and score every variant")
    _add_common(p_ablate)
    _add_data(p_ablate)
    _add_hyper(p_ablate)
    p_ablate.add_argument("--labels", default=None)
    p_ablate.add_argument("--index", default=None)
    p_ablate.add_argument("--clusters", type=int, nargs="+", default=None)
    p_ablate.add_argument("--k-rec", type=int, nargs="+", default=None, dest="k_rec")
    p_ablate.add_argument("--k-nn", type=int, default=None, dest="k_nn")
    p_ablate.add_argument("--mode", choices=("ubcf", "ibcf"), default=None)
    p_ablate.set_defaults(func=cmd_ablate)

    p_export = sub.add_parser("export-embeddings",
                              help="dump embeddings as delimited text")
    p_export.add_argument("--checkpoint", default=None)
    p_export.add_argument("--index", default=None)
    p_export.add_argument("--out-file", default=None, dest="out_file")
    p_export.add_argument("--config", default=None)
    p_export.set_defaults(func=cmd_export_embeddings)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except TrainingDiverged as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        if exc.checkpoint_path:
            print(f"last good checkpoint: {exc.checkpoint_path}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, DataFormatError, DataValidationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
