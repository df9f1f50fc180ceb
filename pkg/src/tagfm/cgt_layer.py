"""Context-adaptive graph transformer layer.

Attention scores concatenate projected target, neighbor, and meta-path
embeddings; neighbor messages are FiLM-modulated by the path embedding and
aggregated with a residual target projection. The batched entry point is
the single implementation; per-target helpers wrap it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .config import derive_seed


@dataclass
class CgtDims:
    d_in: int      # incoming node / path embedding dimension
    hidden: int    # attention projection dimension
    d_out: int     # layer output dimension


@dataclass
class CgtParams:
    """Learnable tensors of one layer; film_* start at zero so the layer
    begins as a plain graph transformer."""

    W_q: Tensor
    W_k: Tensor
    W_p: Tensor
    W_a: Tensor
    W_v: Tensor
    W_u: Tensor
    film_gamma_w: Tensor
    film_gamma_b: Tensor
    film_eta_w: Tensor
    film_eta_b: Tensor

    def named(self, prefix: str = "") -> dict:
        return {
            f"{prefix}W_q": self.W_q, f"{prefix}W_k": self.W_k,
            f"{prefix}W_p": self.W_p, f"{prefix}W_a": self.W_a,
            f"{prefix}W_v": self.W_v, f"{prefix}W_u": self.W_u,
            f"{prefix}film_gamma_w": self.film_gamma_w,
            f"{prefix}film_gamma_b": self.film_gamma_b,
            f"{prefix}film_eta_w": self.film_eta_w,
            f"{prefix}film_eta_b": self.film_eta_b,
        }


@dataclass
class LayerOutput:
    h: Tensor                      # [B, d_out]
    attention: np.ndarray | None   # per-neighbor weights (inspection only)
    seg: np.ndarray | None


def glorot(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


def init_cgt_params(rng: np.random.Generator, dims: CgtDims) -> CgtParams:
    return CgtParams(
        W_q=ad.param(glorot(rng, dims.hidden, dims.d_in)),
        W_k=ad.param(glorot(rng, dims.hidden, dims.d_in)),
        W_p=ad.param(glorot(rng, dims.hidden, dims.d_in)),
        W_a=ad.param(glorot(rng, 1, 3 * dims.hidden)),
        W_v=ad.param(glorot(rng, dims.d_out, dims.d_in)),
        W_u=ad.param(glorot(rng, dims.d_out, dims.d_in)),
        film_gamma_w=ad.param(np.zeros((dims.d_out, dims.d_in))),
        film_gamma_b=ad.param(np.zeros(dims.d_out)),
        film_eta_w=ad.param(np.zeros((dims.d_out, dims.d_in))),
        film_eta_b=ad.param(np.zeros(dims.d_out)),
    )


def _segment_softmax(e: Tensor, seg: np.ndarray, num_segments: int) -> Tensor:
    """Softmax of [M, 1] scores within each segment (shift-invariant)."""
    shift = np.zeros((num_segments, 1), dtype=e.values.dtype)
    np.maximum.at(shift, seg, e.values)
    z = ad.exp(ad.sub(e, Tensor(shift[seg])))
    denom = ad.segment_sum(z, seg, num_segments)
    return ad.div(z, ad.gather_rows(denom, seg))


def attention_weights(params: CgtParams, h_u, h_v, h_p, seg: np.ndarray,
                      n_targets: int, slope: float = 0.01) -> Tensor:
    """Per-neighbor attention weights [M, 1], softmaxed within each target."""
    h_u, h_v, h_p = ad.as_tensor(h_u), ad.as_tensor(h_v), ad.as_tensor(h_p)
    q = ad.matmul(h_u, ad.transpose(params.W_q))
    k = ad.matmul(h_v, ad.transpose(params.W_k))
    p = ad.matmul(h_p, ad.transpose(params.W_p))
    att_in = ad.concat([ad.gather_rows(q, seg), k, p], axis=1)
    scores = ad.leaky_relu(ad.matmul(att_in, ad.transpose(params.W_a)), slope)
    return _segment_softmax(scores, seg, n_targets)


def cgt_forward(params: CgtParams, h_u, h_v, h_p, seg: np.ndarray, n_targets: int,
                slope: float = 0.01, dropout_rate: float = 0.0, train: bool = False,
                seed: int = 0, counters: dict | None = None) -> LayerOutput:
    """One layer over a flattened neighbor batch.

    h_u: [B, d_in] target embeddings; h_v / h_p: [M, d_in] neighbor and path
    embeddings with seg[j] naming each row's target. Targets without rows
    reduce to the residual projection alone.
    """
    h_u, h_v, h_p = ad.as_tensor(h_u), ad.as_tensor(h_v), ad.as_tensor(h_p)
    seg = np.asarray(seg, dtype=np.int64)
    if counters is not None:
        counters["neighbor_messages"] = counters.get("neighbor_messages", 0) + len(seg)

    alpha = attention_weights(params, h_u, h_v, h_p, seg, n_targets, slope)
    alpha = ad.dropout(alpha, dropout_rate, train, derive_seed(seed, "att"))

    messages = film_messages(h_v, h_p, params, slope)
    agg = ad.segment_sum(ad.mul(alpha, messages), seg, n_targets)
    res = ad.matmul(h_u, ad.transpose(params.W_u))
    h = ad.leaky_relu(ad.add(agg, res), slope)
    h = ad.dropout(h, dropout_rate, train, derive_seed(seed, "out"))
    return LayerOutput(h, alpha.values.reshape(-1).copy(), seg)


def film_messages(h_v, h_p, params: CgtParams, slope: float = 0.01) -> Tensor:
    """FiLM-modulated neighbor values: (gamma + 1) * W_v h_v + eta."""
    h_v, h_p = ad.as_tensor(h_v), ad.as_tensor(h_p)
    v = ad.matmul(h_v, ad.transpose(params.W_v))
    gamma = ad.leaky_relu(
        ad.add(ad.matmul(h_p, ad.transpose(params.film_gamma_w)), params.film_gamma_b), slope)
    eta = ad.leaky_relu(
        ad.add(ad.matmul(h_p, ad.transpose(params.film_eta_w)), params.film_eta_b), slope)
    return ad.add(ad.mul(ad.add(gamma, Tensor(np.ones(1))), v), eta)


# ---------------------------------------------------------------------------
# single-target surfaces
# ---------------------------------------------------------------------------

def _stack_neighbors(neighbors):
    h_vs = np.stack([np.asarray(hv) for hv, _ in neighbors])
    h_ps = np.stack([np.asarray(hp) for _, hp in neighbors])
    return h_vs, h_ps


def attention_scores(h_u, neighbors, params: CgtParams, slope: float = 0.01) -> np.ndarray:
    """Attention weights of one target over its neighbor list."""
    if not neighbors:
        return np.zeros(0, dtype=ad.default_dtype())
    h_vs, h_ps = _stack_neighbors(neighbors)
    seg = np.zeros(len(neighbors), dtype=np.int64)
    alpha = attention_weights(params, np.asarray(h_u)[None, :], h_vs, h_ps, seg, 1, slope)
    return alpha.values.reshape(-1)


def film_message(h_v, h_p, params: CgtParams, slope: float = 0.01) -> np.ndarray:
    """Message of one neighbor given its meta-path embedding."""
    out = film_messages(np.asarray(h_v)[None, :], np.asarray(h_p)[None, :], params, slope)
    return out.values[0]


def aggregate(h_u, neighbors, params: CgtParams, slope: float = 0.01,
              dropout_rate: float = 0.0, train: bool = False, seed: int = 0,
              counters: dict | None = None) -> LayerOutput:
    """Full single-target layer: attention, FiLM messages, residual."""
    h_u = np.asarray(h_u)[None, :]
    if neighbors:
        neighbors = sorted(neighbors, key=_canonical_key)
        h_vs, h_ps = _stack_neighbors(neighbors)
        seg = np.zeros(len(neighbors), dtype=np.int64)
    else:
        h_vs = np.zeros((0, h_u.shape[1]))
        h_ps = np.zeros((0, h_u.shape[1]))
        seg = np.zeros(0, dtype=np.int64)
    return cgt_forward(params, h_u, h_vs, h_ps, seg, 1, slope,
                       dropout_rate, train, seed, counters)


def _canonical_key(neighbor):
    """Stable neighbor ordering so floating-point reduction is deterministic."""
    h_v, h_p = neighbor
    return (tuple(np.asarray(h_v).reshape(-1).tolist()),
            tuple(np.asarray(h_p).reshape(-1).tolist()))
