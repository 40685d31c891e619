"""Dense float64 tensors with tape-based reverse-mode differentiation.

Everything here is desk-scale (subgraphs of a few hundred nodes, hidden
widths under a few hundred), so values are materialized eagerly as float64
numpy arrays. numpy supplies the dense arithmetic; the tape records one
backward closure per operation and replays them in reverse.

Gradients for row-gather operations are kept sparse (index/rows pairs)
until someone asks for the dense array, which keeps backward cheap when a
small subgraph reads a large embedding table.
"""

from __future__ import annotations

import os
import struct
from typing import Callable, Iterable, Mapping

import numpy as np

from . import _kernels

LAYER_NORM_EPS = 1e-5
PROB_EPS = 1e-7
_GELU_A = 0.044715
_GELU_C = 0.7978845608028654  # sqrt(2/pi)


class TensorError(ValueError):
    """Shape or value violation in a tensor operation."""


class TapeError(RuntimeError):
    """Tape misuse, e.g. running backward twice."""


class Tensor:
    """A dense float64 array, optionally attached to a tape by the op that made it."""

    __slots__ = ("data",)

    def __init__(self, data):
        arr = np.asarray(data, dtype=np.float64)
        self.data = arr

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def copy(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self):
        return f"Tensor(shape={self.data.shape})"


def _dense_of(entry, shape) -> np.ndarray:
    """Materialize a gradient entry (dense array or list of sparse rows)."""
    if isinstance(entry, np.ndarray):
        return entry if entry.shape == shape else entry.reshape(shape)
    if not isinstance(entry, list):
        return np.asarray(entry, dtype=np.float64).reshape(shape)
    out = np.zeros(shape, dtype=np.float64)
    for idx, rows in entry:
        _kernels.index_add_rows(out, idx, rows)
    return out


class Tape:
    """Ordered record of executed operations for one forward pass.

    `backward` may run once; afterwards `grad` returns the gradient of the
    loss with respect to any tensor that took part (zeros if it did not).
    """

    __slots__ = ("_ops", "_grads", "_done")

    def __init__(self):
        self._ops: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []
        self._grads: dict[int, object] = {}
        self._done = False

    def record(self, out: Tensor, inputs: tuple[Tensor, ...], backward: Callable) -> None:
        self._ops.append((out, inputs, backward))

    def backward(self, loss: Tensor) -> None:
        if self._done:
            raise TapeError("backward already ran on this tape")
        self._done = True
        if loss.data.size != 1:
            raise TensorError("backward expects a scalar loss")
        self._grads[id(loss)] = np.ones_like(loss.data)
        for out, inputs, bwd in reversed(self._ops):
            entry = self._grads.get(id(out))
            if entry is None:
                continue
            gout = _dense_of(entry, out.data.shape)
            self._grads[id(out)] = gout
            for t, g in zip(inputs, bwd(gout)):
                if g is None:
                    continue
                self._accumulate(t, g)

    def _accumulate(self, t: Tensor, g) -> None:
        key = id(t)
        current = self._grads.get(key)
        if isinstance(g, tuple):  # sparse: (idx, rows)
            if current is None:
                self._grads[key] = [g]
            elif isinstance(current, list):
                current.append(g)
            else:
                _kernels.index_add_rows(current, g[0], g[1])
        else:
            g = np.asarray(g, dtype=np.float64).reshape(t.data.shape)
            if current is None:
                self._grads[key] = g.copy()
            elif isinstance(current, list):
                dense = _dense_of(current, t.data.shape)
                dense += g
                self._grads[key] = dense
            else:
                current += g

    def grad(self, t: Tensor) -> np.ndarray:
        """Gradient of the loss w.r.t. `t`; zeros if `t` is off the loss path."""
        if not self._done:
            raise TapeError("grad requested before backward")
        entry = self._grads.get(id(t))
        if entry is None:
            return np.zeros_like(t.data)
        dense = _dense_of(entry, t.data.shape)
        self._grads[id(t)] = dense
        return dense

    def raw_grad(self, t: Tensor):
        """Gradient as stored: dense array, list of sparse (idx, rows), or None."""
        if not self._done:
            raise TapeError("grad requested before backward")
        return self._grads.get(id(t))


def check_finite(t: Tensor, label: str = "tensor") -> None:
    if not np.all(np.isfinite(t.data)):
        raise TensorError(f"{label} contains NaN/Inf")


# ---------------------------------------------------------------------------
# operations


def matmul(a: Tensor, b: Tensor, tape: Tape | None = None) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise TensorError(
            f"matmul shape mismatch: {a.data.shape} x {b.data.shape}"
        )
    out = Tensor(a.data @ b.data)
    if tape is not None:
        def bwd(g, a=a, b=b):
            return (g @ b.data.T, a.data.T @ g)
        tape.record(out, (a, b), bwd)
    return out


def add(a: Tensor, b: Tensor, tape: Tape | None = None) -> Tensor:
    if a.data.shape != b.data.shape:
        raise TensorError(f"add shape mismatch: {a.data.shape} vs {b.data.shape}")
    out = Tensor(a.data + b.data)
    if tape is not None:
        tape.record(out, (a, b), lambda g: (g, g))
    return out


def scale(a: Tensor, c: float, tape: Tape | None = None) -> Tensor:
    out = Tensor(a.data * c)
    if tape is not None:
        tape.record(out, (a,), lambda g, c=c: (g * c,))
    return out


def tsum(a: Tensor, tape: Tape | None = None) -> Tensor:
    out = Tensor(np.sum(a.data))
    if tape is not None:
        def bwd(g, a=a):
            return (np.full_like(a.data, float(g)),)
        tape.record(out, (a,), bwd)
    return out


def gather_rows(x: Tensor, idx: np.ndarray, tape: Tape | None = None) -> Tensor:
    """Select rows `x[idx]`; the gradient stays sparse on the input side."""
    idx = np.asarray(idx, dtype=np.int64)
    out = Tensor(x.data[idx])
    if tape is not None:
        def bwd(g, idx=idx):
            return ((idx, g),)
        tape.record(out, (x,), bwd)
    return out


def take_row(x: Tensor, i: int, tape: Tape | None = None) -> Tensor:
    out = Tensor(x.data[i].copy())
    if tape is not None:
        def bwd(g, i=i):
            return ((np.asarray([i], dtype=np.int64), g[None, :].copy()),)
        tape.record(out, (x,), bwd)
    return out


def add_rows_at(
    base: Tensor,
    idx: np.ndarray,
    rows: Tensor,
    tape: Tape | None = None,
    assume_unique: bool = False,
) -> Tensor:
    """`out = base; out[idx] += rows` as a differentiable op."""
    idx = np.asarray(idx, dtype=np.int64)
    data = base.data.copy()
    if assume_unique:
        data[idx] += rows.data
    else:
        _kernels.index_add_rows(data, idx, rows.data)
    out = Tensor(data)
    if tape is not None:
        def bwd(g, idx=idx):
            return (g, g[idx])
        tape.record(out, (base, rows), bwd)
    return out


def segment_mean(
    values: Tensor, seg: np.ndarray, num_segments: int, tape: Tape | None = None
) -> Tensor:
    """Row s of the output is the mean of value rows with segment-id s.

    Empty segments produce zero rows; backward splits each output row's
    gradient evenly over the segment members.
    """
    seg = np.asarray(seg, dtype=np.int64)
    if seg.size and (seg.min() < 0 or seg.max() >= num_segments):
        raise IndexError("segment id out of range")
    if values.data.ndim != 2 or seg.shape[0] != values.data.shape[0]:
        raise TensorError("segment_mean expects one segment id per value row")
    counts = np.bincount(seg, minlength=num_segments).astype(np.float64)
    sums = _kernels.segment_sum(values.data, seg, num_segments)
    out = Tensor(sums / np.maximum(counts, 1.0)[:, None])
    if tape is not None:
        def bwd(g, seg=seg, counts=counts):
            return (g[seg] / counts[seg][:, None],)
        tape.record(out, (values,), bwd)
    return out


def ln_forward(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray):
    """Raw layer-norm forward; returns (out, xhat, inv) for the backward pass."""
    mu = x.mean(axis=1, keepdims=True)
    xc = x - mu
    var = np.mean(xc * xc, axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LAYER_NORM_EPS)
    xhat = xc * inv
    return xhat * gamma + beta, xhat, inv


def ln_backward_x(g: np.ndarray, xhat: np.ndarray, inv: np.ndarray, gamma: np.ndarray):
    """Input gradient only; `gamma` may be per-row (same shape as g) or (d,)."""
    dxhat = g * gamma
    return inv * (
        dxhat
        - dxhat.mean(axis=1, keepdims=True)
        - xhat * np.mean(dxhat * xhat, axis=1, keepdims=True)
    )


def ln_backward(g: np.ndarray, xhat: np.ndarray, inv: np.ndarray, gamma: np.ndarray):
    dgamma = np.sum(g * xhat, axis=0)
    dbeta = np.sum(g, axis=0)
    return ln_backward_x(g, xhat, inv, gamma), dgamma, dbeta


def gelu_forward(v: np.ndarray):
    """tanh-form GELU; returns (out, tanh term) for the backward pass."""
    t = np.tanh(_GELU_C * (v + _GELU_A * v**3))
    return 0.5 * v * (1.0 + t), t


def gelu_backward(g: np.ndarray, v: np.ndarray, t: np.ndarray) -> np.ndarray:
    dt = (1.0 - t * t) * _GELU_C * (1.0 + 3.0 * _GELU_A * v * v)
    return g * (0.5 * (1.0 + t) + 0.5 * v * dt)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, tape: Tape | None = None) -> Tensor:
    """Per-row normalization with population variance and eps=1e-5."""
    if x.data.ndim != 2:
        raise TensorError("layer_norm expects a 2-D input")
    d = x.data.shape[1]
    if gamma.data.shape != (d,) or beta.data.shape != (d,):
        raise TensorError("layer_norm gain/bias must match the row width")
    out_data, xhat, inv = ln_forward(x.data, gamma.data, beta.data)
    out = Tensor(out_data)
    if tape is not None:
        def bwd(g, xhat=xhat, inv=inv, gamma=gamma):
            return ln_backward(g, xhat, inv, gamma.data)
        tape.record(out, (x, gamma, beta), bwd)
    return out


def gelu(x: Tensor, tape: Tape | None = None) -> Tensor:
    """tanh-form GELU: 0.5*x*(1 + tanh(sqrt(2/pi)*(x + 0.044715*x^3)))."""
    v = x.data
    out_data, t = gelu_forward(v)
    out = Tensor(out_data)
    if tape is not None:
        def bwd(g, v=v, t=t):
            return (gelu_backward(g, v, t),)
        tape.record(out, (x,), bwd)
    return out


def cosine(a: Tensor, b: Tensor, tape: Tape | None = None) -> Tensor:
    """Cosine similarity of two vectors; zero (with zero gradient) if either is zero."""
    if a.data.ndim != 1 or a.data.shape != b.data.shape:
        raise TensorError("cosine expects two vectors of equal length")
    na = float(np.linalg.norm(a.data))
    nb = float(np.linalg.norm(b.data))
    if na == 0.0 or nb == 0.0:
        out = Tensor(0.0)
        if tape is not None:
            tape.record(out, (a, b), lambda g: (np.zeros_like(a.data), np.zeros_like(b.data)))
        return out
    s = float(a.data @ b.data) / (na * nb)
    out = Tensor(s)
    if tape is not None:
        def bwd(g, a=a, b=b, na=na, nb=nb, s=s):
            gs = float(g)
            da = gs * (b.data / (na * nb) - s * a.data / (na * na))
            db = gs * (a.data / (na * nb) - s * b.data / (nb * nb))
            return (da, db)
        tape.record(out, (a, b), bwd)
    return out


def score_to_prob(s: Tensor, tape: Tape | None = None) -> Tensor:
    """Map a cosine score in [-1, 1] to a probability: clamp((1+s)/2)."""
    raw = (1.0 + s.data) / 2.0
    clipped = np.clip(raw, PROB_EPS, 1.0 - PROB_EPS)
    out = Tensor(clipped)
    if tape is not None:
        inside = (raw > PROB_EPS) & (raw < 1.0 - PROB_EPS)
        def bwd(g, inside=inside):
            return (g * 0.5 * inside,)
        tape.record(out, (s,), bwd)
    return out


def bce(p: Tensor, y: float, tape: Tape | None = None) -> Tensor:
    """Binary cross entropy on a scalar probability, clamped before the logs."""
    if p.data.size != 1:
        raise TensorError("bce expects a scalar probability")
    pc = float(np.clip(p.data, PROB_EPS, 1.0 - PROB_EPS))
    loss = -(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc))
    out = Tensor(loss)
    if tape is not None:
        inside = bool(PROB_EPS < float(p.data) < 1.0 - PROB_EPS)
        def bwd(g, p=p, pc=pc, y=y, inside=inside):
            if not inside:
                return (np.zeros_like(p.data),)
            dp = float(g) * (-y / pc + (1.0 - y) / (1.0 - pc))
            return (np.full_like(p.data, dp),)
        tape.record(out, (p,), bwd)
    return out


# ---------------------------------------------------------------------------
# Adam


class AdamState:
    """Per-parameter Adam moments plus the shared hyperparameters.

    Weight decay is added to the gradient (g <- g + wd * theta) before the
    moment updates; bias correction is the standard 1/(1-beta^t) form.
    """

    def __init__(
        self,
        lr: float = 1e-5,
        weight_decay: float = 1e-4,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}


def adam_step(
    params: Mapping[str, Tensor],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
) -> None:
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        if g.shape != p.data.shape:
            raise TensorError(f"gradient shape mismatch for {name}")
        if state.weight_decay:
            g = g + state.weight_decay * p.data
        m = state.m.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            state.m[name] = m
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p.data -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


# ---------------------------------------------------------------------------
# flat tensor archive


ARCHIVE_MAGIC = b"JRTA"
ARCHIVE_VERSION = 1


class ArchiveFormatError(ValueError):
    """Bad magic, version, or truncation in a tensor archive."""


def save_tensors(path: str, tensors: Mapping[str, Tensor | np.ndarray]) -> None:
    """Write a flat (name, shape, little-endian float64) archive atomically."""
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as f:
        f.write(ARCHIVE_MAGIC)
        f.write(struct.pack("<II", ARCHIVE_VERSION, len(tensors)))
        for name, t in tensors.items():
            arr = t.data if isinstance(t, Tensor) else np.asarray(t, dtype=np.float64)
            nb = name.encode("utf-8")
            f.write(struct.pack("<I", len(nb)))
            f.write(nb)
            f.write(struct.pack("<B", arr.ndim))
            for dim in arr.shape:
                f.write(struct.pack("<Q", dim))
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    os.replace(tmp, path)


def load_tensors(path: str) -> dict[str, np.ndarray]:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != ARCHIVE_MAGIC:
        raise ArchiveFormatError("not a tensor archive (bad magic)")
    try:
        version, count = struct.unpack_from("<II", blob, 4)
        if version != ARCHIVE_VERSION:
            raise ArchiveFormatError(f"unsupported archive version {version}")
        pos = 12
        out: dict[str, np.ndarray] = {}
        for _ in range(count):
            (nlen,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            name = blob[pos : pos + nlen].decode("utf-8")
            pos += nlen
            (ndim,) = struct.unpack_from("<B", blob, pos)
            pos += 1
            shape = struct.unpack_from(f"<{ndim}Q", blob, pos) if ndim else ()
            pos += 8 * ndim
            size = int(np.prod(shape)) if ndim else 1
            arr = np.frombuffer(blob, dtype="<f8", count=size, offset=pos).reshape(shape)
            pos += 8 * size
            out[name] = arr.astype(np.float64)
        if pos != len(blob):
            raise ArchiveFormatError("trailing bytes after last entry")
        return out
    except (struct.error, ValueError, UnicodeDecodeError) as exc:
        if isinstance(exc, ArchiveFormatError):
            raise
        raise ArchiveFormatError("truncated or corrupt tensor archive") from exc
