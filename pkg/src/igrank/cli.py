"""Command-line entry point binding the modules into reproducible pipelines.

Subcommands: forge, featurize, sample, split, train-clf, train-reg, predict,
threshold, eval.  Every run writes a resolved-config snapshot next to its
outputs; all randomness flows from --seed through named sub-streams, and all
emitted paths are relative, so fixed-seed runs are bytewise reproducible.

Training options resolve in three layers: shipped defaults, then the
--config JSON file (sections "model", "train", "featurizer", "sampler",
"loss_weights"), then explicitly passed flags.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np
import torch

from . import __version__, evalkit, net, pipeline, trainer
from .decoyforge import write_fixture_set
from .errors import (
    ConfigError,
    DataError,
    IgrankError,
    NumericError,
    ShapeError,
    UnscorableSampleError,
)
from .featurize import FeaturizerConfig, assemble_node_features, build_graph
from .manifest import read_manifest, write_manifest
from .objectives import LossWeights
from .structio import apply_cdr_annotation, assign_roles, parse_pdb, read_cdr_annotation
from .subgraph import SEED_MODES, SamplerConfig
from .trainer import TrainConfig

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

logger = logging.getLogger("igrank")


def _default_out() -> str:
    return os.environ.get("IGRANK_OUT", ".")


def _write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_jsonl(path: Path, rows: list[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True))
            fh.write("\n")


def _read_jsonl(path: Path) -> list[dict]:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows


def _snapshot(out_dir: Path, subcommand: str, args: argparse.Namespace, resolved: dict) -> None:
    payload = {
        "version": __version__,
        "subcommand": subcommand,
        "args": {k: v for k, v in sorted(vars(args).items()) if k != "func"},
        "resolved": resolved,
    }
    _write_json(out_dir / "run_config.json", payload)


def default_run_config() -> dict:
    """The shipped defaults for every stage, as one resolved snapshot."""
    return {
        "featurizer": asdict(FeaturizerConfig()),
        "sampler": asdict(SamplerConfig()),
        "model": asdict(net.ModelConfig()),
        "train": asdict(TrainConfig()),
        "loss_weights": asdict(LossWeights()),
        "dockq_positive_threshold": evalkit.DOCKQ_POSITIVE_THRESHOLD,
        "split_ratios": list(evalkit.SPLIT_RATIOS),
    }


# --------------------------------------------------------------- resolution

def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(payload, dict):
        raise ConfigError(f"{path}: config file must hold a JSON object")
    known = {"model", "train", "featurizer", "sampler", "loss_weights"}
    unknown = set(payload) - known
    if unknown:
        raise ConfigError(f"{path}: unknown config sections {sorted(unknown)}")
    return payload


def _merge(defaults: dict, file_section: dict, flags: dict) -> dict:
    """defaults < config-file section < explicitly passed flags."""
    merged = dict(defaults)
    unknown = set(file_section) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    merged.update(file_section)
    merged.update({k: v for k, v in flags.items() if v is not None})
    return merged


def _resolve_featurizer(args, file_cfg: dict) -> FeaturizerConfig:
    rbf_range = None
    if args.rbf_lo is not None or args.rbf_hi is not None:
        lo = args.rbf_lo if args.rbf_lo is not None else FeaturizerConfig().rbf_range[0]
        hi = args.rbf_hi if args.rbf_hi is not None else FeaturizerConfig().rbf_range[1]
        rbf_range = (lo, hi)
    merged = _merge(asdict(FeaturizerConfig()), file_cfg.get("featurizer", {}), {
        "tau_intra": args.tau_intra,
        "tau_inter": args.tau_inter,
        "rbf_count": args.rbf_count,
        "rbf_range": rbf_range,
    })
    merged["rbf_range"] = tuple(merged["rbf_range"])
    return FeaturizerConfig(**merged)


def _resolve_sampler(args, file_cfg: dict) -> SamplerConfig | None:
    if getattr(args, "no_subgraph", False):
        return None
    merged = _merge(asdict(SamplerConfig()), file_cfg.get("sampler", {}), {
        "k": args.k,
        "n_max": args.max_nodes,
        "seed_mode": args.seed_mode,
    })
    return SamplerConfig(**merged)


def _resolve_model(args, file_cfg: dict, head: str, fcfg: FeaturizerConfig) -> net.ModelConfig:
    merged = _merge(asdict(net.ModelConfig()), file_cfg.get("model", {}), {
        "hidden_dim": args.hidden_dim,
        "layers": args.layers,
        "dropout": args.dropout,
        "pooling": args.pooling,
    })
    merged["head_mode"] = head
    merged["edge_feat_dim"] = fcfg.edge_feat_dim
    return net.ModelConfig(**merged)


def _resolve_train(args, file_cfg: dict) -> TrainConfig:
    weights = None
    if args.weight_negative is not None or args.weight_positive is not None:
        default = TrainConfig().sampler_weights
        weights = (
            args.weight_negative if args.weight_negative is not None else default[0],
            args.weight_positive if args.weight_positive is not None else default[1],
        )
    merged = _merge(asdict(TrainConfig()), file_cfg.get("train", {}), {
        "lr_init": args.lr_init,
        "lr_final": args.lr_final,
        "max_epochs": args.max_epochs,
        "batch_size": args.batch_size,
        "patience": args.patience,
        "sampler_weights": weights,
        "seed": args.seed,
    })
    merged["sampler_weights"] = tuple(merged["sampler_weights"])
    return TrainConfig(**merged)


def _resolve_loss_weights(file_cfg: dict) -> LossWeights:
    merged = _merge(asdict(LossWeights()), file_cfg.get("loss_weights", {}), {})
    return LossWeights(**merged)


def _parse_role_pairs(text: str) -> dict[str, str]:
    mapping = {}
    for pair in text.split(","):
        pair = pair.strip()
        if not pair:
            continue
        if "=" not in pair:
            raise ConfigError(f"role mapping entries look like CHAIN=role, got {pair!r}")
        chain, role = pair.split("=", 1)
        mapping[chain.strip()] = role.strip()
    if not mapping:
        raise ConfigError("empty role mapping")
    return mapping


def _load_graph_cache(args, records) -> dict | None:
    if not getattr(args, "graph_dir", None):
        return None
    cache = {}
    for record in records:
        path = Path(args.graph_dir) / f"{record.id}.graph"
        if not path.exists():
            raise DataError(f"graph cache missing for record {record.id!r}: {path}")
        cache[record.id] = pipeline.load_graph(path)
    return cache


# --------------------------------------------------------------- subcommands

def cmd_forge(args) -> int:
    out = Path(args.out)
    records = write_fixture_set(
        out, n_ig=args.n_ig, n_ag=args.n_ag, n_near=args.n_near, n_far=args.n_far,
        seed=args.seed, val_fraction=args.val_fraction, test_fraction=args.test_fraction,
        with_embeddings=args.embeddings,
    )
    _snapshot(out, "forge", args, {"records": len(records)})
    logger.info("forged %d decoys into %s", len(records), out)
    return EXIT_OK


def cmd_featurize(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    file_cfg = _load_config_file(args.config)
    fcfg = _resolve_featurizer(args, file_cfg)
    if bool(args.manifest) == bool(args.structure):
        raise ConfigError("featurize needs exactly one of --manifest or --structure")

    if args.structure:
        if not args.roles:
            raise ConfigError("--structure mode needs --roles CHAIN=role[,CHAIN=role...]")
        complex_id = args.id or Path(args.structure).stem
        c = parse_pdb(Path(args.structure).read_text(encoding="utf-8"), complex_id)
        c = assign_roles(c, _parse_role_pairs(args.roles))
        if args.cdr:
            c = apply_cdr_annotation(c, read_cdr_annotation(Path(args.cdr).read_text(encoding="utf-8")))
        graph = build_graph(c, assemble_node_features(c, None), fcfg)
        pipeline.save_graph(out / f"{complex_id}.graph", graph)
        _snapshot(out, "featurize", args, {"featurizer": asdict(fcfg), "records": 1})
        return EXIT_OK

    records = read_manifest(args.manifest)
    base = Path(args.manifest).parent

    def work(record):
        graph = pipeline.build_record_graph(record, fcfg, base)
        pipeline.save_graph(out / f"{record.id}.graph", graph)
        return record.id

    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            list(pool.map(work, records))
    else:
        for record in records:
            work(record)
    _snapshot(out, "featurize", args, {"featurizer": asdict(fcfg), "records": len(records)})
    return EXIT_OK


def cmd_sample(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    records = read_manifest(args.manifest)
    scfg = SamplerConfig(k=args.k, n_max=args.max_nodes, seed_mode=args.seed_mode)
    skipped = []
    for record in records:
        graph = pipeline.load_graph(Path(args.graph_dir) / f"{record.id}.graph")
        try:
            sub = pipeline.prepare_graph(graph, scfg, allow_nondocking=args.allow_nondocking)
        except UnscorableSampleError as exc:
            logger.warning("skipping %s: %s", record.id, exc)
            skipped.append(record.id)
            continue
        pipeline.save_graph(out / f"{record.id}.graph", sub)
    _snapshot(out, "sample", args, {"sampler": asdict(scfg), "skipped": skipped})
    return EXIT_OK


def cmd_split(args) -> int:
    records = read_manifest(args.manifest)
    ratios = tuple(float(x) for x in args.ratios.split(","))
    tagged = evalkit.split_by_cluster(records, ratios, args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_manifest(out, tagged)
    counts = {tag: sum(1 for r in tagged if r.split == tag) for tag in ("train", "validation", "test")}
    _write_json(out.parent / "split_report.json",
                {"ratios": list(ratios), "counts": counts, "total": len(tagged)})
    return EXIT_OK


def _train_common(args, head: str) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    records = read_manifest(args.manifest)
    base = Path(args.manifest).parent
    file_cfg = _load_config_file(args.config)
    fcfg = _resolve_featurizer(args, file_cfg)
    scfg = _resolve_sampler(args, file_cfg)
    train_cfg = _resolve_train(args, file_cfg)
    loss_weights = _resolve_loss_weights(file_cfg)
    graphs = _load_graph_cache(args, records)

    if head == "classifier":
        model_cfg = _resolve_model(args, file_cfg, "classifier", fcfg)
        result = trainer.train_classifier(
            records, model_cfg, train_cfg, fcfg, scfg,
            allow_nondocking=args.allow_nondocking, base_dir=base, graphs=graphs,
            loss_weights=loss_weights,
        )
    else:
        clf_params = clf_cfg = None
        if args.from_checkpoint:
            clf_params, clf_cfg, _ = net.load_checkpoint(args.from_checkpoint)
        result = trainer.finetune_regressor(
            records, classifier_params=clf_params, classifier_cfg=clf_cfg,
            model_cfg=None if clf_params is not None else _resolve_model(args, file_cfg, "regressor", fcfg),
            train_cfg=train_cfg, featurizer_cfg=fcfg, sampler_cfg=scfg,
            allow_nondocking=args.allow_nondocking, base_dir=base, graphs=graphs,
        )
    net.save_checkpoint(out / "model.ckpt", result.params, result.model_config, train_cfg.seed)
    _write_json(out / "history.json", result.history)
    _write_json(out / "training_summary.json", {
        "mode": result.mode,
        "best_epoch": result.best_epoch,
        "best_metric": result.best_metric,
        "best_threshold": result.best_threshold,
        "epochs_run": len(result.history),
        "skipped": result.skipped,
    })
    _snapshot(out, f"train-{head}", args, {
        "featurizer": asdict(fcfg),
        "sampler": None if scfg is None else asdict(scfg),
        "model": asdict(result.model_config),
        "train": asdict(result.train_config),
        "loss_weights": asdict(loss_weights),
    })
    return EXIT_OK


def cmd_train_clf(args) -> int:
    return _train_common(args, "classifier")


def cmd_train_reg(args) -> int:
    if args.from_checkpoint and args.from_scratch:
        raise ConfigError("--from-checkpoint and --from-scratch are mutually exclusive")
    if not args.from_checkpoint and not args.from_scratch:
        raise ConfigError("choose --from-checkpoint PATH (transfer) or --from-scratch")
    return _train_common(args, "regressor")


def cmd_predict(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    records = read_manifest(args.manifest)
    base = Path(args.manifest).parent
    file_cfg = _load_config_file(args.config)
    fcfg = _resolve_featurizer(args, file_cfg)
    scfg = _resolve_sampler(args, file_cfg)
    graphs = _load_graph_cache(args, records)

    loaded = []
    for path in args.checkpoint:
        params, cfg, seed = net.load_checkpoint(path)
        if args.pooling:
            from dataclasses import replace
            cfg = replace(cfg, pooling=args.pooling)
        loaded.append((params, cfg))
    head_modes = {cfg.head_mode for _, cfg in loaded}
    if len(head_modes) != 1:
        raise ConfigError(f"checkpoints mix head modes {sorted(head_modes)}")
    head = head_modes.pop()
    if args.ensemble_weights:
        weights = [float(x) for x in args.ensemble_weights.split(",")]
    else:
        weights = [1.0 / len(loaded)] * len(loaded)
    if len(weights) != len(loaded):
        raise ConfigError(f"{len(weights)} ensemble weights for {len(loaded)} checkpoints")

    def score_one(record) -> dict:
        row = {"id": record.id, "label": record.label, "dockq": record.dockq}
        try:
            graph = pipeline.prepare_record(record, fcfg, scfg, args.allow_nondocking,
                                            base, graph=(graphs or {}).get(record.id))
            values = []
            for params, cfg in loaded:
                output = net.forward(graph, params, cfg, mode="infer")
                values.append(float(output.class_probs[1]) if head == "classifier"
                              else float(output.reg_score))
            combined = net.ensemble_combine(values, weights)
        except UnscorableSampleError as exc:
            row["unscorable"] = str(exc)
            return row
        row["class_prob" if head == "classifier" else "reg_score"] = combined
        return row

    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(score_one, records))
    else:
        rows = [score_one(r) for r in records]
    _write_jsonl(out / "predictions.jsonl", rows)
    _snapshot(out, "predict", args, {
        "head": head, "weights": weights,
        "checkpoints": list(args.checkpoint),
        "featurizer": asdict(fcfg),
        "sampler": None if scfg is None else asdict(scfg),
    })
    return EXIT_OK


def _scores_and_labels(rows: list[dict], score_field: str):
    scored = [r for r in rows if r.get(score_field) is not None and r.get("label") is not None]
    scores = np.array([r[score_field] for r in scored], dtype=np.float64)
    labels = np.array([r["label"] for r in scored], dtype=np.int64)
    return scored, scores, labels


def cmd_threshold(args) -> int:
    rows = _read_jsonl(Path(args.predictions))
    _, scores, labels = _scores_and_labels(rows, "class_prob")
    if scores.size == 0:
        raise DataError("predictions carry no (class_prob, label) pairs")
    tau, score = evalkit.select_threshold_fbeta(scores, labels, args.beta)
    out = Path(args.out)
    _write_json(out / "threshold.json", {"threshold": tau, "fbeta": score, "beta": args.beta})
    _snapshot(out, "threshold", args, {"beta": args.beta})
    return EXIT_OK


def cmd_eval(args) -> int:
    rows = _read_jsonl(Path(args.predictions))
    scored, scores, labels = _scores_and_labels(rows, "class_prob")
    if scores.size == 0:
        raise DataError("predictions carry no (class_prob, label) pairs")
    reg_scores = None
    if args.rank_predictions:
        rank_rows = {r["id"]: r for r in _read_jsonl(Path(args.rank_predictions))}
        reg = [rank_rows.get(r["id"], {}).get("reg_score") for r in scored]
        if any(v is None for v in reg):
            missing = [r["id"] for r, v in zip(scored, reg) if v is None]
            raise DataError(f"rank predictions missing reg_score for {missing[:5]}...")
        reg_scores = np.array(reg, dtype=np.float64)
    dockq = None
    if scored and all(r.get("dockq") is not None for r in scored):
        dockq = np.array([r["dockq"] for r in scored], dtype=np.float64)
    threshold = None if args.threshold == "auto" else float(args.threshold)
    ks = [int(x) for x in args.ks.split(",")]
    report = evalkit.build_report(scores, labels, reg_scores=reg_scores, dockq=dockq,
                                  threshold=threshold, ks=ks)
    out = Path(args.out)
    _write_json(out / "report.json", report.to_dict())
    _snapshot(out, "eval", args, {"ks": ks, "threshold": args.threshold})
    return EXIT_OK


# --------------------------------------------------------------- parser

def _add_featurizer_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tau-intra", type=float, default=None, help="intra-partner cutoff (A)")
    p.add_argument("--tau-inter", type=float, default=None, help="cross-partner cutoff (A)")
    p.add_argument("--rbf-count", type=int, default=None, help="Gaussian RBF center count")
    p.add_argument("--rbf-lo", type=float, default=None)
    p.add_argument("--rbf-hi", type=float, default=None)
    p.add_argument("--config", default=None, help="JSON config file (sections: model, "
                                                  "train, featurizer, sampler, loss_weights)")


def _add_sampler_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--k", type=int, default=None, help="hop count")
    p.add_argument("--max-nodes", type=int, default=None, help="subgraph node budget")
    p.add_argument("--seed-mode", choices=SEED_MODES, default=None)
    p.add_argument("--no-subgraph", action="store_true", help="skip k-hop sampling")


def _add_scoring_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--allow-nondocking", action="store_true",
                   help="accept graphs without inter edges (ablation fixtures)")
    p.add_argument("--graph-dir", default=None,
                   help="read cached <id>.graph files instead of featurizing")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="igrank",
        description="Immunoglobulin-antigen pose classification and quality scoring.",
    )
    parser.add_argument("--version", action="version", version=f"igrank {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p, jobs=False):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=_default_out(), help="output directory")
        p.add_argument("-v", "--verbose", action="store_true")
        if jobs:
            p.add_argument("--jobs", type=int, default=1, help="parallel sample fan-out")

    p = sub.add_parser("forge", help="generate a synthetic decoy fixture set")
    common(p)
    p.add_argument("--n-ig", type=int, default=8)
    p.add_argument("--n-ag", type=int, default=6)
    p.add_argument("--n-near", type=int, default=8)
    p.add_argument("--n-far", type=int, default=8)
    p.add_argument("--val-fraction", type=float, default=0.25)
    p.add_argument("--test-fraction", type=float, default=0.0)
    p.add_argument("--embeddings", action="store_true", help="emit per-chain embedding files")
    p.set_defaults(func=cmd_forge)

    p = sub.add_parser("featurize", help="structures -> serialized residue graphs")
    common(p, jobs=True)
    p.add_argument("--manifest", default=None)
    p.add_argument("--structure", default=None, help="single structure file instead of a manifest")
    p.add_argument("--roles", default=None, help="chain roles as CHAIN=role[,CHAIN=role...]")
    p.add_argument("--cdr", default=None, help="CDR annotation file for --structure mode")
    p.add_argument("--id", default=None, help="graph id for --structure mode")
    _add_featurizer_flags(p)
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("sample", help="k-hop subgraph extraction over cached graphs")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--graph-dir", required=True)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--max-nodes", type=int, default=600)
    p.add_argument("--seed-mode", choices=SEED_MODES, default="interface")
    p.add_argument("--allow-nondocking", action="store_true")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("split", help="cluster-stratified split tagging")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--ratios", default="0.6,0.2,0.2")
    p.set_defaults(func=cmd_split)

    for name, fn, is_reg in (("train-clf", cmd_train_clf, False),
                             ("train-reg", cmd_train_reg, True)):
        p = sub.add_parser(name, help=f"{name.replace('-', ' ')} on a manifest")
        common(p)
        p.add_argument("--manifest", required=True)
        _add_featurizer_flags(p)
        _add_sampler_flags(p)
        _add_scoring_flags(p)
        p.add_argument("--hidden-dim", type=int, default=None)
        p.add_argument("--layers", type=int, default=None)
        p.add_argument("--dropout", type=float, default=None)
        p.add_argument("--pooling", choices=net.POOLING_STRATEGIES, default=None)
        p.add_argument("--lr-init", type=float, default=None)
        p.add_argument("--lr-final", type=float, default=None)
        p.add_argument("--max-epochs", type=int, default=None)
        p.add_argument("--batch-size", type=int, default=None)
        p.add_argument("--patience", type=int, default=None)
        p.add_argument("--weight-negative", type=float, default=None)
        p.add_argument("--weight-positive", type=float, default=None)
        if is_reg:
            p.add_argument("--from-checkpoint", default=None,
                           help="classifier checkpoint to transfer from")
            p.add_argument("--from-scratch", action="store_true")
        p.set_defaults(func=fn)

    p = sub.add_parser("predict", help="score a manifest with checkpoint(s)")
    common(p, jobs=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--checkpoint", action="append", required=True,
                   help="repeatable; all checkpoints must share a head mode")
    p.add_argument("--ensemble-weights", default=None,
                   help="comma-separated convex weights (default: uniform)")
    p.add_argument("--pooling", choices=net.POOLING_STRATEGIES, default=None,
                   help="override the checkpoints' pooling strategy")
    _add_featurizer_flags(p)
    _add_sampler_flags(p)
    _add_scoring_flags(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("threshold", help="F-beta threshold scan over predictions")
    common(p)
    p.add_argument("--predictions", required=True)
    p.add_argument("--beta", type=float, default=0.25)
    p.set_defaults(func=cmd_threshold)

    p = sub.add_parser("eval", help="metrics report over predictions")
    common(p)
    p.add_argument("--predictions", required=True)
    p.add_argument("--rank-predictions", default=None,
                   help="regressor predictions used for candidate ranking")
    p.add_argument("--threshold", default="auto")
    p.add_argument("--ks", default="10,20,50,100")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    torch.set_num_threads(1)  # run-to-run bytewise reproducibility
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if getattr(args, "verbose", False) else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except (ConfigError, ShapeError) as exc:
        print(f"error[config]: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"error[numeric]: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, IgrankError, OSError) as exc:
        print(f"error[data]: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
