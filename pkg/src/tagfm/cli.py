"""Command-line surface: ingest, embed-fallback, split, train, eval,
finetune, ablate, inspect-context.

Exit codes: 0 success, 1 validation failure, 2 runtime failure. Validation
failures print one machine-parsable line to stderr. All randomness flows
from --seed via stable hashing; every artifact embeds the config hash.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import autodiff as ad
from .config import RunConfig, derive_seed
from .context_sampler import sample_context
from .feature_space import (LABEL_TEXT, META_RELATION, NODE_TEXT,
                            build_fallback_table, build_meta_relation_texts,
                            load_embeddings, save_embeddings)
from .graph_store import (GraphFormatError, build_lp_splits, build_nc_splits,
                          export_graph, ingest_graph, load_splits, save_splits)
from .model import DatasetBundle, apply_precision, embed_nodes
from .trainer import (TrainingJob, ablation_config, cotrain, evaluate,
                      finetune, load_checkpoint, save_checkpoint)

_CONFIG_FLAGS = ("d", "hidden", "layers", "n_walks", "l_max", "n_experts", "k",
                 "lr", "dropout", "batch", "seed", "precision", "max_epochs",
                 "patience")


def _load_graph_dir(path: str):
    return ingest_graph(os.path.join(path, "nodes.jsonl"),
                        os.path.join(path, "edges.jsonl"),
                        os.path.join(path, "meta.json"))


def _load_bundle(dataset_id: str, graph_dir: str, emb_dir: str) -> DatasetBundle:
    g = _load_graph_dir(graph_dir)
    vocab = build_meta_relation_texts(g)
    with open(os.path.join(emb_dir, "manifest.json"), "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    dim = int(manifest["dim"])
    node_t = load_embeddings(os.path.join(emb_dir, "nodes.vec"), g.n_nodes, dim, NODE_TEXT)
    rel_t = load_embeddings(os.path.join(emb_dir, "relations.vec"), len(vocab), dim, META_RELATION)
    label_t = load_embeddings(os.path.join(emb_dir, "labels.vec"), len(g.label_texts), dim, LABEL_TEXT)
    return DatasetBundle(dataset_id, g, node_t, rel_t, label_t, vocab)


def _load_jobs_manifest(path: str, config: RunConfig):
    with open(path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    bundles = {}
    for ds_id, loc in manifest["datasets"].items():
        base = os.path.dirname(os.path.abspath(path))
        graph_dir = os.path.join(base, loc["graph"])
        emb_dir = os.path.join(base, loc["embeddings"])
        bundles[ds_id] = _load_bundle(ds_id, graph_dir, emb_dir)
    jobs = []
    for j in manifest["jobs"]:
        base = os.path.dirname(os.path.abspath(path))
        split = load_splits(os.path.join(base, j["split"]))
        jobs.append(TrainingJob(j["dataset"], j["task"], split))
    return jobs, bundles


def _config_from_args(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig()
    overrides = {}
    for name in _CONFIG_FLAGS:
        val = getattr(args, name, None)
        if val is not None:
            overrides[name] = val
    return cfg.replace(**overrides) if overrides else cfg


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--d", type=int)
    p.add_argument("--hidden", type=int)
    p.add_argument("--layers", type=int)
    p.add_argument("--n-walks", dest="n_walks", type=int)
    p.add_argument("--l-max", dest="l_max", type=int)
    p.add_argument("--n-experts", dest="n_experts", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--dropout", type=float)
    p.add_argument("--batch", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--precision", choices=["f32", "f64"])
    p.add_argument("--max-epochs", dest="max_epochs", type=int)
    p.add_argument("--patience", type=int)


def _write_run_manifest(out_dir: str, state, extra=None) -> None:
    named = state.named_params()
    manifest = {
        "config": state.config.to_dict(),
        "config_hash": state.config.content_hash(),
        "param_count": state.param_count(),
        "n_experts": state.config.n_experts,
        "params": sorted(named),
        "trained_datasets": state.trained_datasets,
    }
    manifest.update(extra or {})
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_ingest(args) -> int:
    g = ingest_graph(args.nodes, args.edges, args.meta)
    os.makedirs(args.out, exist_ok=True)
    export_graph(g, os.path.join(args.out, "nodes.jsonl"),
                 os.path.join(args.out, "edges.jsonl"),
                 os.path.join(args.out, "meta.json"))
    print(json.dumps({"nodes": g.n_nodes, "edges": g.n_edges, "kind": g.kind,
                      "node_types": len(g.node_type_names),
                      "edge_types": len(g.edge_type_names)}))
    return 0


def cmd_embed_fallback(args) -> int:
    config = _config_from_args(args)
    g = _load_graph_dir(args.graph)
    vocab = build_meta_relation_texts(g)
    os.makedirs(args.out, exist_ok=True)
    seed = derive_seed(config.seed, "fallback-embed")
    tables = {
        "nodes.vec": build_fallback_table([n.text for n in g.nodes], config.d, seed, NODE_TEXT),
        "relations.vec": build_fallback_table(vocab.texts, config.d, seed, META_RELATION),
        "labels.vec": build_fallback_table(g.label_texts, config.d, seed, LABEL_TEXT),
    }
    counts = {}
    for name, table in tables.items():
        save_embeddings(os.path.join(args.out, name), table.vectors)
        counts[name] = len(table)
    with open(os.path.join(args.out, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump({"dim": config.d, "counts": counts, "encoder": "fallback-hash",
                   "config_hash": config.content_hash()}, fh, indent=2)
        fh.write("\n")
    print(json.dumps({"dim": config.d, "counts": counts}))
    return 0


def cmd_split(args) -> int:
    config = _config_from_args(args)
    g = _load_graph_dir(args.graph)
    ratios = tuple(float(x) for x in args.ratios.split(","))
    if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError("ratios must be three comma-separated values summing to 1")
    seed = args.seed if args.seed is not None else config.seed
    if args.task == "NC":
        split = build_nc_splits(g, ratios, seed, args.cap_train, args.cap_eval)
    else:
        split = build_lp_splits(g, ratios, seed, args.cap_train, args.cap_eval)
    save_splits(split, args.out, config.content_hash())
    print(json.dumps({"task": split.task, "train": len(split.train),
                      "valid": len(split.valid), "test": len(split.test)}))
    return 0


def cmd_train(args) -> int:
    config = _config_from_args(args)
    jobs, bundles = _load_jobs_manifest(args.data, config)
    os.makedirs(args.out, exist_ok=True)
    config.save(os.path.join(args.out, "config.json"))
    metrics_path = os.path.join(args.out, "metrics.jsonl")
    if os.path.exists(metrics_path):
        os.remove(metrics_path)
    state, records = cotrain(jobs, bundles, config, metrics_path=metrics_path)
    save_checkpoint(os.path.join(args.out, "checkpoint.bin"), state)
    _write_run_manifest(args.out, state, {"epochs_run": len(records)})
    print(json.dumps({"epochs": len(records), "param_count": state.param_count(),
                      "config_hash": config.content_hash()}))
    return 0


def cmd_eval(args) -> int:
    expected = RunConfig.load(args.config) if args.config else None
    state, _ = load_checkpoint(args.checkpoint, expected)
    bundle = _load_bundle(args.dataset, args.graph, args.embeddings)
    split = load_splits(args.split)
    job = TrainingJob(args.dataset, args.task, split)
    mode = "zero_shot" if args.mode == "zero-shot" else args.mode
    report = evaluate(state, job, bundle, mode)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")
    print(json.dumps(report, sort_keys=True))
    return 0


def cmd_finetune(args) -> int:
    expected = RunConfig.load(args.config) if args.config else None
    state, _ = load_checkpoint(args.checkpoint, expected)
    config = state.config
    for name in _CONFIG_FLAGS:
        val = getattr(args, name, None)
        if val is not None:
            config = config.replace(**{name: val})
    bundle = _load_bundle(args.dataset, args.graph, args.embeddings)
    split = load_splits(args.split)
    job = TrainingJob(args.dataset, args.task, split)
    os.makedirs(args.out, exist_ok=True)
    metrics_path = os.path.join(args.out, "metrics.jsonl")
    if os.path.exists(metrics_path):
        os.remove(metrics_path)
    state, records = finetune(state, job, bundle, config,
                              head_only=args.head_only, metrics_path=metrics_path)
    save_checkpoint(os.path.join(args.out, "checkpoint.bin"), state)
    _write_run_manifest(args.out, state, {"epochs_run": len(records), "finetuned_on": job.name})
    print(json.dumps({"epochs": len(records), "config_hash": config.content_hash()}))
    return 0


def cmd_ablate(args) -> int:
    config = _config_from_args(args)
    delta = ablation_config(args.name)
    config = config.replace(**delta)
    jobs, bundles = _load_jobs_manifest(args.data, config)
    os.makedirs(args.out, exist_ok=True)
    config.save(os.path.join(args.out, "config.json"))
    metrics_path = os.path.join(args.out, "metrics.jsonl")
    state, records = cotrain(jobs, bundles, config, metrics_path=metrics_path)
    save_checkpoint(os.path.join(args.out, "checkpoint.bin"), state)
    _write_run_manifest(args.out, state, {"ablation": args.name, "epochs_run": len(records)})
    print(json.dumps({"ablation": args.name, "delta": delta,
                      "n_experts": config.n_experts}))
    return 0


def cmd_inspect_context(args) -> int:
    config = _config_from_args(args)
    g = _load_graph_dir(args.graph)
    vocab = build_meta_relation_texts(g)
    from .feature_space import relation_ids_per_slot
    rel_of_slot = relation_ids_per_slot(g, vocab)
    seed = derive_seed(config.seed, "inspect")
    dump = []
    for target in args.target:
        ctx = sample_context(g, target, config.n_walks, config.l_max, seed, rel_of_slot)
        dump.append({
            "target": ctx.target,
            "neighbors": [{"node": nid, "length": p.length,
                           "relation_ids": list(p.relation_ids),
                           "relations": [vocab.texts[r] for r in p.relation_ids]}
                          for nid, p in ctx.neighbors],
        })
    payload = {"config_hash": config.content_hash(), "contexts": dump}
    if args.checkpoint:
        state, _ = load_checkpoint(args.checkpoint)
        bundle = _load_bundle("inspect", args.graph, args.embeddings)
        trace = []
        embed_nodes(state, bundle, list(args.target), train=False,
                    seed=seed, trace=trace)
        payload["attention_trace"] = trace
    text = json.dumps(payload, indent=2)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return 0


# ---------------------------------------------------------------------------
# parser / entry
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tagfm", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate a graph and write its normalized store")
    p.add_argument("--nodes", required=True)
    p.add_argument("--edges", required=True)
    p.add_argument("--meta", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("embed-fallback", help="write hash-embedder vector files")
    p.add_argument("--graph", required=True)
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(fn=cmd_embed_fallback)

    p = sub.add_parser("split", help="build and save task splits")
    p.add_argument("--graph", required=True)
    p.add_argument("--task", choices=["NC", "LP"], required=True)
    p.add_argument("--ratios", default="0.8,0.1,0.1")
    p.add_argument("--cap-train", dest="cap_train", type=int)
    p.add_argument("--cap-eval", dest="cap_eval", type=int)
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(fn=cmd_split)

    p = sub.add_parser("train", help="co-train over all jobs in a data manifest")
    p.add_argument("--data", required=True, help="jobs manifest JSON")
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on one job")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--graph", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--task", choices=["NC", "LP"], required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--mode", choices=["test", "zero-shot"], default="test")
    p.add_argument("--config", help="refuse checkpoints whose config hash differs")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("finetune", help="continue training a checkpoint on one job")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--graph", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--task", choices=["NC", "LP"], required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--head-only", action="store_true")
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(fn=cmd_finetune)

    p = sub.add_parser("ablate", help="apply a named config delta, then train")
    p.add_argument("--name", choices=["no_context_graph", "no_cgt", "no_moe"],
                   required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(fn=cmd_ablate)

    p = sub.add_parser("inspect-context", help="dump sampled context graphs as JSON")
    p.add_argument("--graph", required=True)
    p.add_argument("--target", type=int, nargs="+", required=True)
    p.add_argument("--checkpoint", help="also export attention traces")
    p.add_argument("--embeddings", help="required with --checkpoint")
    p.add_argument("--out")
    _add_config_flags(p)
    p.set_defaults(fn=cmd_inspect_context)
    return ap


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, GraphFormatError, FileNotFoundError, KeyError) as exc:
        print(f"error: validation: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - single runtime failure surface
        print(f"error: runtime: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
