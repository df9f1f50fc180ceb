"""Task predictors and losses.

Node classification scores a node against every candidate label text with
one shared MLP, so the label set may change freely between datasets; link
prediction scores node pairs through an MLP over concatenation plus the
elementwise product.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .cgt_layer import glorot
from .feature_space import EmbeddingTable


@dataclass
class NcHead:
    W1: Tensor   # hidden x (d_node + d_label)
    b1: Tensor
    W2: Tensor   # 1 x hidden
    b2: Tensor
    slope: float = 0.01

    def named(self, prefix: str = "nc_head.") -> dict:
        return {f"{prefix}W1": self.W1, f"{prefix}b1": self.b1,
                f"{prefix}W2": self.W2, f"{prefix}b2": self.b2}


@dataclass
class LpHead:
    W1: Tensor   # hidden x 3d
    b1: Tensor
    W2: Tensor
    b2: Tensor
    slope: float = 0.01

    def named(self, prefix: str = "lp_head.") -> dict:
        return {f"{prefix}W1": self.W1, f"{prefix}b1": self.b1,
                f"{prefix}W2": self.W2, f"{prefix}b2": self.b2}


def init_nc_head(rng: np.random.Generator, d_node: int, d_label: int,
                 hidden: int, slope: float = 0.01) -> NcHead:
    return NcHead(ad.param(glorot(rng, hidden, d_node + d_label)),
                  ad.param(np.zeros(hidden)),
                  ad.param(glorot(rng, 1, hidden)),
                  ad.param(np.zeros(1)), slope)


def init_lp_head(rng: np.random.Generator, d: int, hidden: int,
                 slope: float = 0.01) -> LpHead:
    return LpHead(ad.param(glorot(rng, hidden, 3 * d)),
                  ad.param(np.zeros(hidden)),
                  ad.param(glorot(rng, 1, hidden)),
                  ad.param(np.zeros(1)), slope)


def _mlp(head, x: Tensor) -> Tensor:
    hidden = ad.leaky_relu(ad.add(ad.matmul(x, ad.transpose(head.W1)), head.b1), head.slope)
    return ad.add(ad.matmul(hidden, ad.transpose(head.W2)), head.b2)


def nc_logits(h_u, label_vectors, head: NcHead) -> Tensor:
    """Per-class logits [B, C] for any number of candidate labels."""
    h_u = ad.as_tensor(h_u)
    labels = ad.as_tensor(label_vectors)
    B, C = h_u.shape[0], labels.shape[0]
    if C == 0:
        raise ValueError("label table is empty")
    rep_u = np.repeat(np.arange(B), C)
    rep_c = np.tile(np.arange(C), B)
    x = ad.concat([ad.gather_rows(h_u, rep_u), ad.gather_rows(labels, rep_c)], axis=1)
    return ad.reshape(_mlp(head, x), (B, C))


def nc_scores(h_u, label_table: EmbeddingTable, head: NcHead) -> np.ndarray:
    """Probability over candidate labels for one node embedding."""
    logits = nc_logits(np.asarray(h_u)[None, :], label_table.vectors, head)
    return ad.softmax(logits, axis=1).values[0]


def lp_logits(h_u, h_v, head: LpHead) -> Tensor:
    """Pair logits [P, 1] from [h_u, h_v, h_u * h_v]."""
    h_u, h_v = ad.as_tensor(h_u), ad.as_tensor(h_v)
    x = ad.concat([h_u, h_v, ad.mul(h_u, h_v)], axis=1)
    return _mlp(head, x)


def lp_score(h_u, h_v, head: LpHead) -> float:
    logits = lp_logits(np.asarray(h_u)[None, :], np.asarray(h_v)[None, :], head)
    return float(ad.sigmoid(logits).values[0, 0])


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

def nc_cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean multi-class cross-entropy from raw logits (shift-stabilized)."""
    labels = np.asarray(labels, dtype=np.int64)
    B, C = logits.shape
    if B == 0:
        raise ValueError("empty batch")
    shift = logits.values.max(axis=1, keepdims=True)
    z = ad.exp(ad.sub(logits, Tensor(shift)))
    lse = ad.add(ad.log(ad.tsum(z, axis=1, keepdims=True)), Tensor(shift))
    flat = ad.reshape(logits, (B * C,))
    true = ad.gather_rows(flat, np.arange(B) * C + labels)
    return ad.mean(ad.sub(ad.reshape(lse, (B,)), true))


def lp_binary_cross_entropy(logits: Tensor, targets) -> Tensor:
    """Mean binary cross-entropy from pair logits, computed stably."""
    y = np.asarray(targets, dtype=np.float64).reshape(-1, 1)
    if y.size == 0:
        raise ValueError("empty batch")
    return ad.mean(ad.sub(ad.softplus(logits), ad.mul(Tensor(y), logits)))


def mb_loss(task: str, logits: Tensor, targets) -> Tensor:
    """Per-mini-batch loss: NC cross-entropy or LP binary cross-entropy."""
    if task == "NC":
        return nc_cross_entropy(logits, targets)
    if task == "LP":
        return lp_binary_cross_entropy(logits, targets)
    raise ValueError(f"unknown task {task!r}")


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def accuracy(pred_classes, labels) -> float:
    pred = np.asarray(pred_classes)
    labels = np.asarray(labels)
    if pred.size == 0:
        return 0.0
    return float((pred == labels).mean())


def auc_roc(scores, labels) -> float:
    """Exact AUC by the rank statistic, with tied scores averaged."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both positive and negative examples")
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(len(scores), dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j < len(scores) and sorted_scores[j] == sorted_scores[i]:
            j += 1
        ranks[order[i:j]] = 0.5 * (i + j - 1) + 1.0
        i = j
    rank_sum = ranks[labels == 1].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))
