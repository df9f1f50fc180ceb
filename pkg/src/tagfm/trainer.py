"""Multi-job training: round-robin mini-batches over (dataset, task) jobs.

Every epoch interleaves one batch per job until the largest job is
exhausted (smaller jobs cycle), applies Adam after each batch, evaluates
validation metrics, and appends one metrics line. Zero-shot evaluation and
fine-tuning reuse the same machinery on held-out datasets.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Adam, Tape, load_archive, save_archive
from .config import RunConfig, derive_seed
from .graph_store import LP, NC, SplitSet, lp_train_subgraph
from .model import (DatasetBundle, ModelState, apply_precision, embed_nodes,
                    init_model, trainable_params, with_graph)
from .task_heads import (accuracy, auc_roc, lp_logits, mb_loss, nc_logits)

logger = logging.getLogger(__name__)


@dataclass
class TrainingJob:
    dataset_id: str
    task: str               # NC or LP
    split: SplitSet
    batch: int | None = None

    def __post_init__(self):
        if self.task not in (NC, LP):
            raise ValueError(f"unknown task {self.task!r}")
        if self.task != self.split.task:
            raise ValueError("job task does not match split task")
        if not self.split.train:
            raise ValueError(f"job {self.dataset_id}/{self.task} has an empty train split")

    @property
    def name(self) -> str:
        return f"{self.dataset_id}/{self.task}"


@dataclass
class JobRuntime:
    job: TrainingJob
    bundle: DatasetBundle           # LP jobs carry the train-edge subgraph
    labels: np.ndarray | None = None

    @classmethod
    def build(cls, job: TrainingJob, bundle: DatasetBundle) -> "JobRuntime":
        if job.task == LP:
            bundle = with_graph(bundle, lp_train_subgraph(bundle.graph, job.split))
            return cls(job, bundle)
        labels = np.array([bundle.graph.nodes[i].label_id for i in range(bundle.graph.n_nodes)],
                          dtype=object)
        return cls(job, bundle, labels)


def build_schedule(jobs, batch_size: int, seed: int):
    """Round-robin batch schedule; smaller jobs cycle until the largest ends."""
    per_job = []
    for j, job in enumerate(jobs):
        rng = np.random.Generator(np.random.PCG64(derive_seed(seed, "shuffle", job.name)))
        items = list(job.split.train)
        order = rng.permutation(len(items))
        bs = job.batch or batch_size
        batches = [[items[i] for i in order[s:s + bs]]
                   for s in range(0, len(items), bs)]
        per_job.append(batches)
    rounds = max(len(b) for b in per_job)
    schedule = []
    for r in range(rounds):
        for j, batches in enumerate(per_job):
            schedule.append((j, batches[r % len(batches)]))
    return schedule


def _batch_loss(state: ModelState, rt: JobRuntime, items, *, train: bool,
                seed: int, counters=None):
    if rt.job.task == NC:
        ids = np.asarray(items, dtype=np.int64)
        h = embed_nodes(state, rt.bundle, ids, train=train, seed=seed, counters=counters)
        logits = nc_logits(h, rt.bundle.label_vecs, state.nc_head)
        y = np.array([rt.labels[i] for i in ids], dtype=np.int64)
        return mb_loss(NC, logits, y)
    # LP: positives plus their aligned fixed negatives
    pos = [tuple(p) for p in items]
    neg = _aligned_negatives(rt.job.split, "train", pos)
    pairs = pos + neg
    y = np.array([1] * len(pos) + [0] * len(neg))
    uniq, inv = np.unique(np.asarray(pairs, dtype=np.int64).reshape(-1), return_inverse=True)
    h = embed_nodes(state, rt.bundle, uniq, train=train, seed=seed, counters=counters)
    inv = inv.reshape(-1, 2)
    logits = lp_logits(ad.gather_rows(h, inv[:, 0]), ad.gather_rows(h, inv[:, 1]),
                       state.lp_head)
    return mb_loss(LP, logits, y)


def _aligned_negatives(split: SplitSet, name: str, pos_pairs):
    pool = split.negatives.get(name, [])
    index = {}
    for p, n in zip(split.split(name), pool):
        index.setdefault(tuple(p), []).append(tuple(n))
    out = []
    for p in pos_pairs:
        cands = index.get(tuple(p))
        if not cands:
            raise ValueError(f"no negative recorded for positive pair {p}")
        out.append(cands[0])
    return out


def _eval_metric(state: ModelState, rt: JobRuntime, split_name: str, seed: int) -> float:
    job = rt.job
    items = job.split.split(split_name)
    if not items:
        return float("nan")
    bs = job.batch or state.config.batch
    if job.task == NC:
        correct = 0
        for s in range(0, len(items), bs):
            ids = np.asarray(items[s:s + bs], dtype=np.int64)
            h = embed_nodes(state, rt.bundle, ids, train=False,
                            seed=derive_seed(seed, split_name, s))
            logits = nc_logits(h, rt.bundle.label_vecs, state.nc_head)
            pred = logits.values.argmax(axis=1)
            y = np.array([rt.labels[i] for i in ids], dtype=np.int64)
            correct += int((pred == y).sum())
        return correct / len(items)
    pos = [tuple(p) for p in items]
    neg = _aligned_negatives(job.split, split_name, pos)
    scores, labels = [], []
    pairs = pos + neg
    y = [1] * len(pos) + [0] * len(neg)
    for s in range(0, len(pairs), bs):
        chunk = pairs[s:s + bs]
        uniq, inv = np.unique(np.asarray(chunk, dtype=np.int64).reshape(-1),
                              return_inverse=True)
        h = embed_nodes(state, rt.bundle, uniq, train=False,
                        seed=derive_seed(seed, split_name, s))
        inv = inv.reshape(-1, 2)
        logits = lp_logits(ad.gather_rows(h, inv[:, 0]), ad.gather_rows(h, inv[:, 1]),
                           state.lp_head)
        scores.extend(ad.sigmoid(logits).values.reshape(-1).tolist())
        labels.extend(y[s:s + bs])
    return auc_roc(scores, labels)


def train_loop(state: ModelState, optimizer: Adam, runtimes, config: RunConfig, *,
               start_epoch: int = 0, epochs: int, metrics_path: str | None = None,
               eval_split: str = "valid") -> list:
    """Run `epochs` epochs; returns one metrics record per epoch."""
    records = []
    best_metric, best_epoch = -np.inf, start_epoch
    fh = open(metrics_path, "a", encoding="utf-8") if metrics_path else None
    try:
        for epoch in range(start_epoch, start_epoch + epochs):
            t0 = time.perf_counter()
            sched_epoch = 0 if config.frozen_sampling else epoch
            schedule = build_schedule([rt.job for rt in runtimes], config.batch,
                                      derive_seed(config.seed, "schedule", sched_epoch))
            losses = {rt.job.name: [] for rt in runtimes}
            counters = {}
            for b, (j, items) in enumerate(schedule):
                rt = runtimes[j]
                seed = derive_seed(config.seed, "batch", rt.job.name, sched_epoch, b)
                with Tape() as tape:
                    loss = _batch_loss(state, rt, items, train=True, seed=seed,
                                       counters=counters)
                    tape.backward(loss)
                optimizer.step()
                optimizer.zero_grad()
                state.step += 1
                losses[rt.job.name].append(loss.item())
            val = {rt.job.name: _eval_metric(state, rt, eval_split,
                                             derive_seed(config.seed, "val", epoch))
                   for rt in runtimes}
            record = {
                "epoch": epoch,
                "loss": {k: float(np.mean(v)) for k, v in losses.items()},
                "val": val,
                "gate_load": counters.get("gate_load", np.zeros(0)).tolist(),
                "seconds": round(time.perf_counter() - t0, 6),
            }
            records.append(record)
            if fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")
                fh.flush()
            mean_val = float(np.nanmean(list(val.values()))) if val else float("nan")
            if mean_val > best_metric + 1e-12:
                best_metric, best_epoch = mean_val, epoch
            if config.patience > 0 and epoch - best_epoch >= config.patience:
                logger.info("early stop at epoch %d (best %d)", epoch, best_epoch)
                break
    finally:
        if fh:
            fh.close()
    return records


def cotrain(jobs, bundles: dict, config: RunConfig, seed: int | None = None,
            metrics_path: str | None = None, epochs: int | None = None):
    """Co-train a fresh model over all jobs; returns (state, metrics)."""
    if seed is not None:
        config = config.replace(seed=seed)
    apply_precision(config)
    state = init_model(config)
    runtimes = [JobRuntime.build(job, bundles[job.dataset_id]) for job in jobs]
    state.trained_datasets = sorted({job.dataset_id for job in jobs})
    optimizer = Adam(trainable_params(state), lr=config.lr)
    logger.info("trainable parameters: %d", state.param_count())
    records = train_loop(state, optimizer, runtimes, config,
                         epochs=epochs if epochs is not None else config.max_epochs,
                         metrics_path=metrics_path)
    return state, records


def evaluate(state: ModelState, job: TrainingJob, bundle: DatasetBundle,
             mode: str = "test") -> dict:
    """Test or zero-shot metrics for one job; no parameter updates."""
    if mode not in ("test", "zero_shot"):
        raise ValueError(f"unknown evaluation mode {mode!r}")
    if mode == "zero_shot" and job.dataset_id in state.trained_datasets:
        raise ValueError(f"dataset {job.dataset_id!r} was seen in training; "
                         "zero-shot requires an unseen dataset")
    rt = JobRuntime.build(job, bundle)
    metric = _eval_metric(state, rt, "test", derive_seed(state.config.seed, "eval", job.name))
    return {
        "dataset": job.dataset_id,
        "task": job.task,
        "mode": mode,
        "metric": "ACC" if job.task == NC else "AUC",
        "value": float(metric),
        "n": len(job.split.test),
        "seed": state.config.seed,
        "config_hash": state.config.content_hash(),
    }


def finetune(state: ModelState, job: TrainingJob, bundle: DatasetBundle,
             config: RunConfig | None = None, head_only: bool = False,
             epochs: int | None = None, metrics_path: str | None = None):
    """Continue training the given state on a single job."""
    config = config or state.config
    apply_precision(config)
    state.config = config
    rt = JobRuntime.build(job, bundle)
    if job.dataset_id not in state.trained_datasets:
        state.trained_datasets.append(job.dataset_id)
        state.trained_datasets.sort()
    optimizer = Adam(trainable_params(state, head_only=head_only), lr=config.lr)
    records = train_loop(state, optimizer, [rt], config,
                         epochs=epochs if epochs is not None else config.max_epochs,
                         metrics_path=metrics_path)
    return state, records


def ablation_config(name: str) -> dict:
    """Config delta for a named ablation switch."""
    deltas = {
        "no_context_graph": {"l_max": 1},
        "no_cgt": {"freeze_film_wp": True},
        "no_moe": {"n_experts": 1, "k": 1},
    }
    if name not in deltas:
        raise ValueError(f"unknown ablation {name!r}")
    return dict(deltas[name])


# ---------------------------------------------------------------------------
# checkpointing
# ---------------------------------------------------------------------------

def save_checkpoint(path: str, state: ModelState, optimizer: Adam | None = None) -> None:
    arrays = {name: p.values for name, p in state.named_params().items()}
    meta = {
        "config": state.config.to_dict(),
        "config_hash": state.config.content_hash(),
        "trained_datasets": state.trained_datasets,
        "step": state.step,
        "opt_t": optimizer.t if optimizer else 0,
        "param_count": state.param_count(),
    }
    if optimizer is not None:
        arrays.update(optimizer.state_arrays())
    save_archive(path, arrays, meta)


def load_checkpoint(path: str, expected_config: RunConfig | None = None):
    """Rebuild (state, optimizer) from an archive; refuses config mismatch."""
    arrays, meta = load_archive(path)
    config = RunConfig.from_dict(meta["config"])
    if expected_config is not None and expected_config.content_hash() != meta["config_hash"]:
        raise ValueError("checkpoint config hash does not match the provided config")
    apply_precision(config)
    state = init_model(config)
    for name, p in state.named_params().items():
        p.values = arrays[name].astype(p.values.dtype, copy=True)
    state.trained_datasets = list(meta.get("trained_datasets", []))
    state.step = int(meta.get("step", 0))
    optimizer = Adam(trainable_params(state), lr=config.lr)
    if any(k.startswith("opt.m.") for k in arrays):
        opt_arrays = {k: v for k, v in arrays.items() if k.startswith("opt.")}
        needed = {}
        for name in optimizer.params:
            needed[f"opt.m.{name}"] = opt_arrays[f"opt.m.{name}"]
            needed[f"opt.v.{name}"] = opt_arrays[f"opt.v.{name}"]
        optimizer.load_state_arrays(needed, int(meta.get("opt_t", 0)))
    return state, optimizer
