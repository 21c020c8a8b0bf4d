"""Command-line interface: ``spcmh {synth,train,encode,retrieve,eval}``.

Modality ``x`` is treated as the image side and ``y`` as the text side, so
``i2t`` queries with ``x`` codes against a database of ``y`` codes.
"""

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .dataio import assign_split, load_dataset, normalize_center, save_dataset, synth_clusters
from .evaluation import evaluate_retrieval, write_metrics_json, write_pr_csv
from .exceptions import MissingLabelsError, ParameterError, SPCMHError
from .hashing import encode, load_codes, rank_all, save_codes
from .model import Hyperparams, load_model, save_model, train

logger = logging.getLogger("spcmh")

TASKS = {
    "i2t": ("x", "y"),
    "t2i": ("y", "x"),
    "i2i": ("x", "x"),
    "t2t": ("y", "y"),
}

# (flag, Hyperparams field, type, help)
HYPERPARAM_FLAGS = [
    ("--lambda-x", "lambda_x", float, "factorization weight of modality x (default 0.5)"),
    ("--lambda-y", "lambda_y", float, "factorization weight of modality y (default 0.5)"),
    ("--alpha", "alpha", float, "local-affinity weight (default 100)"),
    ("--beta", "beta", float, "distant-repulsion weight (default 1)"),
    ("--mu", "mu", float, "projection weight (default 100)"),
    ("--gamma", "gamma", float, "regularizer weight (default 0.01)"),
    ("--k", "k", int, "nearest neighbours in the affinity graph (default 5)"),
    ("--bandwidth", "bandwidth", float, "affinity kernel bandwidth (default 1.0)"),
    ("--bits", "H", int, "hash code length H (default 32)"),
    ("--max-iters", "max_iters", int, "iteration cap (default 200)"),
    ("--rel-tol", "rel_tol", float, "relative objective change that stops training (default 1e-4)"),
    ("--seed", "seed", int, "random seed, unsigned (default 0)"),
]


def _add_hyperparams(p):
    p.add_argument("--config", type=Path, help="JSON file with Hyperparams fields; flags override it")
    for flag, dest, typ, text in HYPERPARAM_FLAGS:
        p.add_argument(flag, dest=dest, type=typ, default=None, help=text)


def _require_exists(path, what):
    if path is None:
        raise ParameterError(f"{what} path is required")
    if not Path(path).exists():
        raise FileNotFoundError(f"{what} not found: {path}")
    return Path(path)


def resolve_hyperparams(args):
    values = {}
    if getattr(args, "config", None) is not None:
        cfg_path = _require_exists(args.config, "config file")
        with open(cfg_path, encoding="utf-8") as fh:
            try:
                values.update(json.load(fh))
            except json.JSONDecodeError as exc:
                raise ParameterError(f"{cfg_path}: invalid JSON ({exc})") from None
    for _, dest, _, _ in HYPERPARAM_FLAGS:
        v = getattr(args, dest, None)
        if v is not None:
            values[dest] = v
    return Hyperparams.from_dict(values)


def _effective_config(args, hp=None):
    cfg = {}
    for key, value in sorted(vars(args).items()):
        if key in ("func",) or key in {f.name for f in dataclasses.fields(Hyperparams)}:
            continue
        cfg[key] = str(value) if isinstance(value, Path) else value
    if hp is not None:
        cfg["hyperparams"] = hp.to_dict()
    return cfg


def _write_json(doc, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _fit(data, hp):
    train_idx = data.train_idx
    prepped, stats = normalize_center(data, train_idx)
    model, report = train(
        prepped.X[:, train_idx], prepped.Y[:, train_idx], hp, mean_x=stats.mean_x, mean_y=stats.mean_y
    )
    return model, report


def _codes(model, data, modality, idx):
    if modality == "x":
        return encode(model.P_x, model.mean_x, data.X[:, idx], model.norm_mode)
    return encode(model.P_y, model.mean_y, data.Y[:, idx], model.norm_mode)


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args):
    data = synth_clusters(args.clusters, args.per_cluster, args.dx, args.dy, args.noise, args.seed)
    if args.n_query:
        data = assign_split(data, args.n_query, seed=args.seed)
    save_dataset(data, args.out, fmt=args.format)
    logger.info("wrote %d paired samples to %s", data.n_samples, args.out)
    return 0


def cmd_train(args):
    hp = resolve_hyperparams(args)
    data = load_dataset(_require_exists(args.data, "dataset"))
    model, report = _fit(data, hp)
    save_model(model, args.out)
    report_path = args.report or Path(str(args.out) + ".report.json")
    _write_json({**report.to_dict(), "config": _effective_config(args, hp)}, report_path)
    logger.info(
        "trained %d-bit model: %d iterations, converged=%s, objective %.6g",
        model.H,
        report.iterations_run,
        report.converged,
        report.final_objective,
    )
    return 0


def _subset_idx(data, subset):
    if subset == "all":
        return np.arange(data.n_samples)
    if subset == "train":
        return data.train_idx
    if subset == "database":
        return data.database_idx
    return data.query_idx


def cmd_encode(args):
    model = load_model(_require_exists(args.model, "model"))
    data = load_dataset(_require_exists(args.data, "dataset"))
    codes = _codes(model, data, args.modality, _subset_idx(data, args.subset))
    save_codes(codes, args.out)
    logger.info("wrote %d %d-bit codes to %s", codes.N, codes.H, args.out)
    return 0


def cmd_retrieve(args):
    queries = load_codes(_require_exists(args.queries, "query codes"))
    db = load_codes(_require_exists(args.database, "database codes"))
    ranked = rank_all(queries, db)
    cut = args.cutoff
    doc = {
        "config": _effective_config(args),
        "rankings": [
            {
                "query": r.query_id,
                "indices": r.indices[:cut].tolist(),
                "distances": r.distances[:cut].tolist(),
            }
            for r in ranked
        ],
    }
    _write_json(doc, args.out)
    return 0


def _labels_for(data, idx, what):
    if data.labels is None:
        raise MissingLabelsError(f"dataset has no labels.csv; {what} labels are required for evaluation")
    return data.labels[idx]


def _evaluate_model(model, data, tasks, cutoff):
    q_idx, db_idx = data.query_idx, data.database_idx
    q_labels = _labels_for(data, q_idx, "query")
    db_labels = _labels_for(data, db_idx, "database")
    out = {}
    for task in tasks:
        q_mod, db_mod = TASKS[task]
        out[task] = evaluate_retrieval(
            _codes(model, data, q_mod, q_idx), _codes(model, data, db_mod, db_idx), q_labels, db_labels, cutoff
        )
    return out


def cmd_eval(args):
    tasks = args.task or list(TASKS)
    data = load_dataset(_require_exists(args.data, "dataset"))
    if data.labels is None:
        raise MissingLabelsError("evaluation requires class labels (labels.csv in the dataset directory)")
    hp = None

    if args.queries is not None or args.database is not None:
        if len(tasks) != 1:
            raise ParameterError("evaluating precomputed code files needs exactly one --task")
        queries = load_codes(_require_exists(args.queries, "query codes"))
        db = load_codes(_require_exists(args.database, "database codes"))
        results = {
            tasks[0]: evaluate_retrieval(
                queries,
                db,
                _labels_for(data, data.query_idx, "query"),
                _labels_for(data, data.database_idx, "database"),
                args.cutoff,
            )
        }
    elif args.model is not None:
        model = load_model(_require_exists(args.model, "model"))
        results = _evaluate_model(model, data, tasks, args.cutoff)
    else:
        hp = resolve_hyperparams(args)
        if args.runs < 1:
            raise ParameterError("--runs must be at least 1")
        runs = []
        for r in range(args.runs):
            run_hp = hp.replace(seed=hp.seed + r)
            model, report = _fit(data, run_hp)
            logger.info("run %d (seed %d): %d iterations", r, run_hp.seed, report.iterations_run)
            runs.append(_evaluate_model(model, data, tasks, args.cutoff))
        results = {}
        for task in tasks:
            maps = np.array([run[task]["map"] for run in runs])
            results[task] = {
                "map": float(maps.mean()),
                "map_std": float(maps.std()),
                "map_runs": maps,
                "seeds": [hp.seed + r for r in range(args.runs)],
                "ap": np.mean([run[task]["ap"] for run in runs], axis=0),
                "pr_curve": type(runs[0][task]["pr_curve"])(
                    recall=runs[0][task]["pr_curve"].recall,
                    precision=np.mean([run[task]["pr_curve"].precision for run in runs], axis=0),
                ),
            }

    write_metrics_json(results, args.out, config=_effective_config(args, hp))
    pr_path = args.pr_csv or Path(str(args.out) + ".pr.csv")
    write_pr_csv({task: res["pr_curve"] for task, res in results.items()}, pr_path)
    for task, res in results.items():
        print(f"{task}\tMAP={res['map']:.4f}")
    return 0


# ---------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(
        prog="spcmh",
        description="Structure-preserving collective matrix factorization hashing for cross-modal retrieval.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="increase log verbosity")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic paired cluster dataset")
    p.add_argument("--out", type=Path, required=True, help="output dataset directory")
    p.add_argument("--clusters", type=int, default=10, help="number of clusters / classes (default 10)")
    p.add_argument("--per-cluster", type=int, default=80, help="samples per cluster (default 80)")
    p.add_argument("--dx", type=int, default=20, help="dimension of modality x (default 20)")
    p.add_argument("--dy", type=int, default=30, help="dimension of modality y (default 30)")
    p.add_argument("--noise", type=float, default=0.1, help="within-cluster noise sigma (default 0.1)")
    p.add_argument("--n-query", type=int, default=200, help="columns tagged as queries; 0 disables (default 200)")
    p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    p.add_argument("--format", choices=["spcx", "csv"], default="spcx", help="feature file format (default spcx)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model on the training split of a dataset")
    p.add_argument("--data", type=Path, required=True, help="dataset directory")
    p.add_argument("--out", type=Path, required=True, help="output model file (SPCM)")
    p.add_argument("--report", type=Path, help="training report JSON (default OUT.report.json)")
    _add_hyperparams(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("encode", help="hash one modality of a dataset with a trained model")
    p.add_argument("--model", type=Path, required=True, help="model file (SPCM)")
    p.add_argument("--data", type=Path, required=True, help="dataset directory")
    p.add_argument("--modality", choices=["x", "y"], required=True, help="x (image side) or y (text side)")
    p.add_argument(
        "--subset",
        choices=["all", "train", "database", "query"],
        default="all",
        help="which columns to encode (default all)",
    )
    p.add_argument("--out", type=Path, required=True, help="output code file (SPCH)")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("retrieve", help="rank database codes for each query code by Hamming distance")
    p.add_argument("--queries", type=Path, required=True, help="query code file (SPCH)")
    p.add_argument("--database", type=Path, required=True, help="database code file (SPCH)")
    p.add_argument("--cutoff", type=int, default=None, help="keep only the top R results per query")
    p.add_argument("--out", type=Path, required=True, help="output ranked-list JSON")
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("eval", help="compute MAP and precision-recall curves")
    p.add_argument("--data", type=Path, required=True, help="dataset directory with labels.csv and split.csv")
    p.add_argument(
        "--task", choices=list(TASKS), action="append", help="retrieval task; repeatable (default: all four)"
    )
    p.add_argument("--model", type=Path, help="evaluate this model instead of training")
    p.add_argument("--queries", type=Path, help="precomputed query codes (SPCH), with --database")
    p.add_argument("--database", type=Path, help="precomputed database codes (SPCH), with --queries")
    p.add_argument("--runs", type=int, default=1, help="train with seeds SEED..SEED+N-1 and average (default 1)")
    p.add_argument("--cutoff", type=int, default=None, help="MAP@R cutoff; full ranking when omitted")
    p.add_argument("--out", type=Path, required=True, help="output metrics JSON")
    p.add_argument("--pr-csv", type=Path, help="precision-recall CSV (default OUT.pr.csv)")
    _add_hyperparams(p)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        return args.func(args)
    except SPCMHError as exc:
        print(f"spcmh {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"spcmh {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
