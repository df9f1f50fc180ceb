"""Sparse mixture of CGT experts with noisy top-k gating.

Gate logits get a learnable Gaussian noise term during training; only the
top k logits survive, the rest are masked to -inf before the softmax, so
exactly k experts carry weight and only those experts execute.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .cgt_layer import CgtDims, CgtParams, cgt_forward, glorot, init_cgt_params
from .config import derive_seed

_MASK = -1e30  # finite stand-in for -inf; exp underflows to exactly 0


@dataclass
class GateParams:
    W_g: Tensor
    W_eps: Tensor
    n: int
    k: int

    def named(self, prefix: str = "") -> dict:
        return {f"{prefix}W_g": self.W_g, f"{prefix}W_eps": self.W_eps}


@dataclass
class ExpertSet:
    experts: list  # CgtParams, independently initialized

    def __len__(self):
        return len(self.experts)

    def named(self, prefix: str = "") -> dict:
        out = {}
        for i, e in enumerate(self.experts):
            out.update(e.named(f"{prefix}expert{i}."))
        return out


def init_gate(rng: np.random.Generator, n: int, k: int, d_in: int) -> GateParams:
    if not (1 <= k <= n):
        raise ValueError("need 1 <= k <= n")
    return GateParams(ad.param(glorot(rng, n, d_in)),
                      ad.param(glorot(rng, n, d_in)), n, k)


def init_expert_set(rng: np.random.Generator, n: int, dims: CgtDims) -> ExpertSet:
    return ExpertSet([init_cgt_params(rng, dims) for _ in range(n)])


def topk_indices(values: np.ndarray, k: int) -> np.ndarray:
    """Per-row top-k column indices; ties broken toward the lower index."""
    order = np.argsort(-values, axis=-1, kind="stable")
    return np.sort(order[..., :k], axis=-1)


def gate_batch(h_u, params: GateParams, train: bool, seed: int):
    """Sparse gate weights for a batch.

    Returns (weights Tensor [B, n] with exactly k positives per row summing
    to one, selected index array [B, k]).
    """
    h_u = ad.as_tensor(h_u)
    logits = ad.matmul(h_u, ad.transpose(params.W_g))
    if train:
        rng = np.random.Generator(np.random.PCG64(derive_seed(seed, "gate-noise")))
        eps = rng.standard_normal(size=(h_u.shape[0], params.n))
        noise = ad.mul(Tensor(eps), ad.softplus(ad.matmul(h_u, ad.transpose(params.W_eps))))
        logits = ad.add(logits, noise)
    selected = topk_indices(logits.values, params.k)
    offset = np.full(logits.shape, _MASK, dtype=logits.values.dtype)
    np.put_along_axis(offset, selected, 0.0, axis=1)
    weights = ad.softmax(ad.add(logits, Tensor(offset)), axis=1)
    return weights, selected


def gate(h_u, params: GateParams, train: bool = False, seed: int = 0) -> np.ndarray:
    """Gate one target; dense weight vector with exactly k nonzeros."""
    weights, _ = gate_batch(np.asarray(h_u)[None, :], params, train, seed)
    return weights.values[0]


def mixture_forward(h_u, neighbors_h_v, neighbors_h_p, experts: ExpertSet,
                    gate_params: GateParams, slope: float = 0.01,
                    train: bool = False, seed: int = 0,
                    dropout_rate: float = 0.0, counters: dict | None = None) -> Tensor:
    """Gated sum of the selected experts' layer outputs for one target.

    Unselected experts never execute, so their parameters stay off the tape
    and receive zero gradient.
    """
    h_u = np.asarray(h_u)[None, :]
    weights, selected = gate_batch(h_u, gate_params, train, seed)
    h_v = np.stack(neighbors_h_v) if len(neighbors_h_v) else np.zeros((0, h_u.shape[1]))
    h_p = np.stack(neighbors_h_p) if len(neighbors_h_p) else np.zeros((0, h_u.shape[1]))
    seg = np.zeros(len(h_v), dtype=np.int64)
    out = None
    for i in (int(x) for x in selected[0]):
        if counters is not None:
            counters["expert_runs"] = counters.get("expert_runs", 0) + 1
        layer = cgt_forward(experts.experts[i], h_u, h_v, h_p, seg, 1, slope,
                            dropout_rate, train, derive_seed(seed, "expert", i))
        g_i = ad.slice_axis(weights, 1, i, i + 1)       # [1, 1]
        term = ad.mul(g_i, layer.h)
        out = term if out is None else ad.add(out, term)
    return out
