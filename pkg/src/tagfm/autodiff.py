"""Minimal reverse-mode differentiation on dense numpy arrays.

A Tape records executed operations in order; backward() replays the tape in
reverse and accumulates exact gradients into every tensor that requires
them. Training runs in 32-bit by default; a global precision switch moves
all computation to 64-bit for finite-difference verification.
"""

from __future__ import annotations

import hashlib
import json
import struct
from contextlib import contextmanager

import numpy as np

_DTYPE = np.float32
_CHECKED = False
_ACTIVE_TAPE = None

_ARCHIVE_MAGIC = b"H2GC"
_ARCHIVE_VERSION = 1


def default_dtype():
    return _DTYPE


def set_default_dtype(dtype) -> None:
    global _DTYPE
    if dtype not in (np.float32, np.float64):
        raise ValueError("dtype must be float32 or float64")
    _DTYPE = dtype


def set_checked(flag: bool) -> None:
    """Enable per-op finiteness and domain checks (slow, for tests)."""
    global _CHECKED
    _CHECKED = bool(flag)


@contextmanager
def precision(mode: str):
    """Temporarily switch compute precision; 'f64' also enables checks."""
    global _DTYPE, _CHECKED
    prev = (_DTYPE, _CHECKED)
    _DTYPE = np.float64 if mode == "f64" else np.float32
    _CHECKED = mode == "f64"
    try:
        yield
    finally:
        _DTYPE, _CHECKED = prev


class Tensor:
    """Dense array with an optional gradient accumulator."""

    __slots__ = ("values", "grad", "requires_grad")

    def __init__(self, values, requires_grad: bool = False):
        self.values = np.asarray(values, dtype=_DTYPE)
        self.grad = None
        self.requires_grad = requires_grad
        if _CHECKED and not np.all(np.isfinite(self.values)):
            raise FloatingPointError("non-finite tensor values")

    @property
    def shape(self):
        return self.values.shape

    def item(self) -> float:
        return float(self.values.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.values)
        self.grad += g

    def __repr__(self):
        return f"Tensor(shape={self.values.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def param(values) -> Tensor:
    return Tensor(values, requires_grad=True)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class Tape:
    """Ordered record of executed ops; backward traverses it in reverse."""

    def __init__(self):
        self._nodes = []  # (out, inputs, backward_fn)

    def record(self, out: Tensor, inputs, backward_fn) -> None:
        self._nodes.append((out, inputs, backward_fn))

    def __len__(self):
        return len(self._nodes)

    def __enter__(self):
        global _ACTIVE_TAPE
        self._prev = _ACTIVE_TAPE
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, *exc):
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = self._prev
        return False

    def backward(self, loss: Tensor) -> None:
        if loss.values.size != 1:
            raise ValueError("backward target must be scalar")
        loss.accumulate(np.ones_like(loss.values))
        for out, inputs, backward_fn in reversed(self._nodes):
            if out.grad is None:
                continue
            grads = backward_fn(out.grad)
            for inp, g in zip(inputs, grads):
                if g is None or not inp.requires_grad:
                    continue
                inp.accumulate(g)


def active_tape():
    return _ACTIVE_TAPE


def backward(loss: Tensor) -> None:
    if _ACTIVE_TAPE is None:
        raise RuntimeError("backward() requires an active Tape")
    _ACTIVE_TAPE.backward(loss)


def _record(out_values, inputs, backward_fn) -> Tensor:
    requires = any(i.requires_grad for i in inputs)
    out = Tensor(out_values, requires_grad=requires and _ACTIVE_TAPE is not None)
    if out.requires_grad:
        _ACTIVE_TAPE.record(out, inputs, backward_fn)
    return out


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Reduce a broadcast gradient back to the operand's shape."""
    if g.shape == tuple(shape):
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise and linear-algebra ops
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.values + b.values

    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _record(out, (a, b), bwd)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.values - b.values

    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _record(out, (a, b), bwd)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.values * b.values

    def bwd(g):
        return (_unbroadcast(g * b.values, a.shape),
                _unbroadcast(g * a.values, b.shape))

    return _record(out, (a, b), bwd)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.values / b.values

    def bwd(g):
        return (_unbroadcast(g / b.values, a.shape),
                _unbroadcast(-g * a.values / (b.values * b.values), b.shape))

    return _record(out, (a, b), bwd)


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    c = float(c)
    out = a.values * c

    def bwd(g):
        return (g * c,)

    return _record(out, (a,), bwd)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.values.ndim != 2 or b.values.ndim != 2:
        raise ValueError("matmul expects 2-D operands")
    if a.values.shape[1] != b.values.shape[0]:
        raise ValueError(f"matmul shape mismatch {a.shape} @ {b.shape}")
    out = a.values @ b.values

    def bwd(g):
        return g @ b.values.T, a.values.T @ g

    return _record(out, (a, b), bwd)


def transpose(a) -> Tensor:
    a = as_tensor(a)
    out = a.values.T

    def bwd(g):
        return (g.T,)

    return _record(out, (a,), bwd)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    out = a.values.reshape(shape)

    def bwd(g):
        return (g.reshape(a.shape),)

    return _record(out, (a,), bwd)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = np.concatenate([t.values for t in tensors], axis=axis)
    sizes = [t.values.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        return tuple(np.split(g, splits, axis=axis))

    return _record(out, tuple(tensors), bwd)


def slice_axis(a, axis: int, start: int, stop: int) -> Tensor:
    a = as_tensor(a)
    index = [slice(None)] * a.values.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)
    out = a.values[index]

    def bwd(g):
        full = np.zeros_like(a.values)
        full[index] = g
        return (full,)

    return _record(out, (a,), bwd)


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = a.values.sum(axis=axis, keepdims=keepdims)

    def bwd(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, a.shape).copy(),)

    return _record(out, (a,), bwd)


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    n = a.values.size if axis is None else a.values.shape[axis]
    return scale(tsum(a, axis=axis, keepdims=keepdims), 1.0 / n)


# ---------------------------------------------------------------------------
# nonlinearities
# ---------------------------------------------------------------------------

def leaky_relu(a, slope: float = 0.01) -> Tensor:
    a = as_tensor(a)
    out = np.where(a.values > 0, a.values, slope * a.values)

    def bwd(g):
        return (g * np.where(a.values > 0, 1.0, slope),)

    return _record(out, (a,), bwd)


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    x = a.values
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)

    def bwd(g):
        return (g * out * (1.0 - out),)

    return _record(out, (a,), bwd)


def softplus(a) -> Tensor:
    a = as_tensor(a)
    out = np.logaddexp(0.0, a.values)

    def bwd(g):
        x = a.values
        s = np.empty_like(x)
        pos = x >= 0
        s[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        s[~pos] = ex / (1.0 + ex)
        return (g * s,)

    return _record(out, (a,), bwd)


def log(a) -> Tensor:
    a = as_tensor(a)
    if _CHECKED and np.any(a.values <= 0):
        raise FloatingPointError("log of non-positive value")
    out = np.log(a.values)

    def bwd(g):
        return (g / a.values,)

    return _record(out, (a,), bwd)


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.values)

    def bwd(g):
        return (g * out,)

    return _record(out, (a,), bwd)


def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    shifted = a.values - a.values.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def bwd(g):
        inner = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - inner),)

    return _record(out, (a,), bwd)


def dropout(a, rate: float, train: bool, seed: int) -> Tensor:
    """Inverted dropout; identity when not training or rate is zero."""
    a = as_tensor(a)
    if not train or rate == 0.0:
        return a
    rng = np.random.Generator(np.random.PCG64(seed))
    keep = (rng.random(a.values.shape) >= rate).astype(a.values.dtype)
    factor = keep / (1.0 - rate)
    out = a.values * factor

    def bwd(g):
        return (g * factor,)

    return _record(out, (a,), bwd)


# ---------------------------------------------------------------------------
# indexed ops (row gather / segment reduction)
# ---------------------------------------------------------------------------

def gather_rows(a, idx) -> Tensor:
    a = as_tensor(a)
    idx = np.asarray(idx, dtype=np.int64)
    out = a.values[idx]

    def bwd(g):
        full = np.zeros_like(a.values)
        np.add.at(full, idx, g)
        return (full,)

    return _record(out, (a,), bwd)


def segment_sum(a, seg, num_segments: int) -> Tensor:
    """Sum rows of `a` into `num_segments` buckets given per-row segment ids."""
    a = as_tensor(a)
    seg = np.asarray(seg, dtype=np.int64)
    out = np.zeros((num_segments,) + a.values.shape[1:], dtype=a.values.dtype)
    np.add.at(out, seg, a.values)

    def bwd(g):
        return (g[seg],)

    return _record(out, (a,), bwd)


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------

class Adam:
    """Adam with bias correction; moment state persists per parameter."""

    def __init__(self, params: dict, lr: float = 0.001,
                 betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = dict(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = {name: np.zeros_like(p.values) for name, p in self.params.items()}
        self.v = {name: np.zeros_like(p.values) for name, p in self.params.items()}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * (g * g)
            mhat = m / (1 - b1 ** self.t)
            vhat = v / (1 - b2 ** self.t)
            p.values -= self.lr * mhat / (np.sqrt(vhat) + self.eps)

    def state_arrays(self) -> dict:
        out = {}
        for name in self.params:
            out[f"opt.m.{name}"] = self.m[name]
            out[f"opt.v.{name}"] = self.v[name]
        return out

    def load_state_arrays(self, arrays: dict, t: int) -> None:
        self.t = t
        for name in self.params:
            self.m[name] = arrays[f"opt.m.{name}"].copy()
            self.v[name] = arrays[f"opt.v.{name}"].copy()


def adam_step(optimizer: Adam) -> None:
    optimizer.step()


# ---------------------------------------------------------------------------
# named-tensor checkpoint archive
# ---------------------------------------------------------------------------

_DTYPE_TAGS = {"f32": np.float32, "f64": np.float64}


def save_archive(path: str, arrays: dict, meta: dict | None = None) -> None:
    """Write a named-tensor archive: manifest JSON plus raw payloads.

    Payloads keep their in-memory dtype so 64-bit runs reload bit-exactly.
    """
    entries = []
    blobs = []
    offset = 0
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        tag = "f64" if arr.dtype == np.float64 else "f32"
        raw = arr.astype(_DTYPE_TAGS[tag], copy=False).tobytes()
        entries.append({"name": name, "shape": list(arr.shape),
                        "dtype": tag, "offset": offset, "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    payload = b"".join(blobs)
    manifest = {
        "entries": entries,
        "meta": meta or {},
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
    }
    mblob = json.dumps(manifest, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_ARCHIVE_MAGIC)
        fh.write(struct.pack("<IQ", _ARCHIVE_VERSION, len(mblob)))
        fh.write(mblob)
        fh.write(payload)


def load_archive(path: str):
    """Read a named-tensor archive; returns (name -> array, meta)."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _ARCHIVE_MAGIC:
            raise ValueError(f"bad archive magic {magic!r}")
        version, mlen = struct.unpack("<IQ", fh.read(12))
        if version != _ARCHIVE_VERSION:
            raise ValueError(f"unsupported archive version {version}")
        manifest = json.loads(fh.read(mlen).decode("utf-8"))
        payload = fh.read()
    if hashlib.sha256(payload).hexdigest() != manifest["payload_sha256"]:
        raise ValueError("archive payload hash mismatch")
    arrays = {}
    for ent in manifest["entries"]:
        dt = _DTYPE_TAGS[ent["dtype"]]
        start, nbytes = ent["offset"], ent["nbytes"]
        arr = np.frombuffer(payload[start:start + nbytes], dtype=dt)
        arrays[ent["name"]] = arr.reshape(ent["shape"]).copy()
    return arrays, manifest["meta"]
