"""Reverse-mode automatic differentiation over dense float64 arrays.

Ops executed inside a `Tape` context record backward closures onto the
tape in creation order (a topological order by construction); outside a
tape they only compute values, which keeps inference allocation-free.
`backward` sweeps the tape in reverse, accumulating gradients additively
across fan-out into leaf tensors created with requires_grad=True.
"""

from __future__ import annotations

import numpy as np

from .errors import LabelOutOfRange, NonFiniteValue, NotScalar, ShapeMismatch

# Debug toggle: scan every op output for NaN/Inf.
CHECK_FINITE = False

_ACTIVE_TAPE = None


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(()))

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


class Tape:
    """Records op outputs in creation order for one backward sweep."""

    __slots__ = ("nodes", "_previous")

    def __init__(self):
        self.nodes = []
        self._previous = None

    def __enter__(self):
        global _ACTIVE_TAPE
        self._previous = _ACTIVE_TAPE
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, exc_type, exc, tb):
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = self._previous
        return False


def _finite_check(arr):
    if CHECK_FINITE and not np.all(np.isfinite(arr)):
        raise NonFiniteValue("op produced NaN or Inf")


def _result(data, parents, backward_fn) -> Tensor:
    """Wrap an op result, recording it if a tape is active and any parent
    participates in differentiation."""
    _finite_check(data)
    out = Tensor(data)
    tape = _ACTIVE_TAPE
    if tape is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
        tape.nodes.append(out)
    return out


def _accumulate(t: Tensor, grad, own: bool = False):
    """Add a gradient contribution. `own=True` promises `grad` is a freshly
    allocated array no one else holds, letting the first contribution be
    adopted without a defensive copy."""
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = grad if own else np.array(grad, dtype=np.float64)
    else:
        t.grad += grad


def backward(loss: Tensor, tape: Tape):
    """Reverse sweep over the tape, seeding d(loss)/d(loss) = 1."""
    if loss.size != 1:
        raise NotScalar(f"loss has shape {loss.shape}")
    loss.grad = np.ones_like(loss.data)
    for node in reversed(tape.nodes):
        if node.grad is not None and node._backward is not None:
            node._backward(node.grad)


# ---------------------------------------------------------------------------
# primitive ops


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeMismatch(f"add {a.shape} vs {b.shape}")

    def backward_fn(g):
        _accumulate(a, g)
        _accumulate(b, g)

    return _result(a.data + b.data, (a, b), backward_fn)


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeMismatch(f"mul {a.shape} vs {b.shape}")

    def backward_fn(g):
        _accumulate(a, g * b.data, own=True)
        _accumulate(b, g * a.data, own=True)

    return _result(a.data * b.data, (a, b), backward_fn)


def scale(x: Tensor, factor: float) -> Tensor:
    factor = float(factor)

    def backward_fn(g):
        _accumulate(x, g * factor, own=True)

    return _result(x.data * factor, (x,), backward_fn)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeMismatch(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"matmul inner extents differ: {a.shape} x {b.shape}")

    def backward_fn(g):
        _accumulate(a, g @ b.data.T, own=True)
        _accumulate(b, a.data.T @ g, own=True)

    return _result(a.data @ b.data, (a, b), backward_fn)


def transpose(x: Tensor) -> Tensor:
    if x.ndim != 2:
        raise ShapeMismatch(f"transpose needs a matrix, got {x.shape}")

    def backward_fn(g):
        _accumulate(x, g.T)

    return _result(x.data.T, (x,), backward_fn)


def reshape(x: Tensor, shape) -> Tensor:
    original = x.shape

    def backward_fn(g):
        _accumulate(x, g.reshape(original))

    return _result(x.data.reshape(shape), (x,), backward_fn)


def slice_cols(x: Tensor, lo: int, hi: int) -> Tensor:
    if x.ndim != 2 or not (0 <= lo < hi <= x.shape[1]):
        raise ShapeMismatch(f"cannot slice columns [{lo}:{hi}] of {x.shape}")

    def backward_fn(g):
        full = np.zeros(x.shape)
        full[:, lo:hi] = g
        _accumulate(x, full, own=True)

    return _result(x.data[:, lo:hi].copy(), (x,), backward_fn)


def concat_cols(parts) -> Tensor:
    parts = list(parts)
    rows = parts[0].shape[0]
    if any(p.ndim != 2 or p.shape[0] != rows for p in parts):
        raise ShapeMismatch("concat_cols needs matrices with equal row counts")
    widths = [p.shape[1] for p in parts]

    def backward_fn(g):
        offset = 0
        for p, w in zip(parts, widths):
            _accumulate(p, g[:, offset:offset + w])
            offset += w

    return _result(np.concatenate([p.data for p in parts], axis=1), tuple(parts), backward_fn)


def relu(x: Tensor) -> Tensor:
    # subgradient 0 at exactly 0
    value = np.maximum(x.data, 0.0)

    def backward_fn(g):
        _accumulate(x, g * (x.data > 0), own=True)

    return _result(value, (x,), backward_fn)


def affine(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """W·x + b for a vector x, or x·Wᵀ + b row-wise for a matrix x."""
    if weight.ndim != 2:
        raise ShapeMismatch(f"weight must be a matrix, got {weight.shape}")
    out_dim, in_dim = weight.shape
    if bias is not None and bias.shape != (out_dim,):
        raise ShapeMismatch(f"bias {bias.shape} vs weight {weight.shape}")

    if x.ndim == 1:
        if x.shape[0] != in_dim:
            raise ShapeMismatch(f"affine {x.shape} x {weight.shape}")
        value = weight.data @ x.data
        if bias is not None:
            value = value + bias.data

        def backward_fn(g):
            _accumulate(x, weight.data.T @ g, own=True)
            _accumulate(weight, np.outer(g, x.data), own=True)
            if bias is not None:
                _accumulate(bias, g)

    elif x.ndim == 2:
        if x.shape[1] != in_dim:
            raise ShapeMismatch(f"affine {x.shape} x {weight.shape}")
        value = x.data @ weight.data.T
        if bias is not None:
            value = value + bias.data

        def backward_fn(g):
            _accumulate(x, g @ weight.data, own=True)
            _accumulate(weight, g.T @ x.data, own=True)
            if bias is not None:
                _accumulate(bias, g.sum(axis=0), own=True)

    else:
        raise ShapeMismatch(f"affine input must be 1-D or 2-D, got {x.shape}")

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _result(value, parents, backward_fn)


def _recording(parents) -> bool:
    return _ACTIVE_TAPE is not None and any(p.requires_grad for p in parents)


def conv2d(x: Tensor, kernels: Tensor, bias: Tensor) -> Tensor:
    """3x3 cross-correlation, zero padding 1, stride 1, plus channel bias.

    Accepts [C,H,W] or batched [N,C,H,W] input; output keeps the spatial
    size. Internally builds NHWC im2col columns ordered (offset, channel)
    and runs one GEMM per pass, which is what a single core does fastest.
    """
    squeeze = x.ndim == 3
    data = x.data[None] if squeeze else x.data
    if data.ndim != 4:
        raise ShapeMismatch(f"conv2d input must be [N,C,H,W] or [C,H,W], got {x.shape}")
    n, c_in, h, w = data.shape
    if kernels.ndim != 4 or kernels.shape[1:] != (c_in, 3, 3):
        raise ShapeMismatch(f"kernels {kernels.shape} vs input channels {c_in}")
    c_out = kernels.shape[0]
    if bias.shape != (c_out,):
        raise ShapeMismatch(f"bias {bias.shape} vs {c_out} output channels")

    padded = np.pad(data.transpose(0, 2, 3, 1), ((0, 0), (1, 1), (1, 1), (0, 0)))
    # column order (di, dj, channel) matches kernels transposed to [3,3,c,o]
    kmat = np.ascontiguousarray(kernels.data.transpose(2, 3, 1, 0)).reshape(9 * c_in, c_out)
    if c_in < 4:
        # few channels: gathering via sliding windows is slower than 9 block fills
        cols = np.empty((n, h, w, 9, c_in))
        for k in range(9):
            di, dj = divmod(k, 3)
            cols[:, :, :, k, :] = padded[:, di:di + h, dj:dj + w, :]
        cols = cols.reshape(n * h * w, 9 * c_in)
    else:
        windows = np.lib.stride_tricks.sliding_window_view(padded, (3, 3), axis=(1, 2))
        cols = np.ascontiguousarray(windows.transpose(0, 1, 2, 4, 5, 3))
        cols = cols.reshape(n * h * w, 9 * c_in)
    out2 = cols @ kmat
    out2 += bias.data
    value = np.ascontiguousarray(out2.reshape(n, h, w, c_out).transpose(0, 3, 1, 2))

    def backward_fn(g):
        if squeeze:
            g = g[None]
        g2 = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(n * h * w, c_out)
        gkmat = cols.T @ g2
        _accumulate(kernels,
                    np.ascontiguousarray(
                        gkmat.reshape(3, 3, c_in, c_out).transpose(3, 2, 0, 1)),
                    own=True)
        _accumulate(bias, g2.sum(axis=0), own=True)
        if x.requires_grad:
            gcols = (g2 @ kmat.T).reshape(n, h, w, 9, c_in)
            gpad = np.zeros_like(padded)
            for k in range(9):
                di, dj = divmod(k, 3)
                gpad[:, di:di + h, dj:dj + w, :] += gcols[:, :, :, k, :]
            gx = np.ascontiguousarray(gpad[:, 1:-1, 1:-1, :].transpose(0, 3, 1, 2))
            _accumulate(x, gx[0] if squeeze else gx, own=True)

    return _result(value[0] if squeeze else value, (x, kernels, bias), backward_fn)


def maxpool2d(x: Tensor) -> Tensor:
    """2x2 max pooling with stride 2; trailing odd row/column dropped.

    Gradient routes to the first maximum in row-major window order.
    """
    squeeze = x.ndim == 3
    data = x.data[None] if squeeze else x.data
    if data.ndim != 4:
        raise ShapeMismatch(f"maxpool2d input must be [N,C,H,W] or [C,H,W], got {x.shape}")
    n, c, h, w = data.shape
    if h < 2 or w < 2:
        raise ShapeMismatch(f"maxpool2d needs spatial extents >= 2, got {h}x{w}")
    h2, w2 = h // 2, w // 2
    blocks = data[:, :, :h2 * 2, :w2 * 2].reshape(n, c, h2, 2, w2, 2)

    if _recording((x,)):
        quads = np.ascontiguousarray(blocks.transpose(0, 1, 2, 4, 3, 5)).reshape(n, c, h2, w2, 4)
        winners = quads.argmax(axis=-1)  # first occurrence on ties
        value = np.take_along_axis(quads, winners[..., None], axis=-1)[..., 0]
    else:
        winners = None
        value = blocks.max(axis=(3, 5))

    def backward_fn(g):
        if squeeze:
            g = g[None]
        routed = np.zeros((n, c, h2, w2, 4))
        np.put_along_axis(routed, winners[..., None], g[..., None], axis=-1)
        gx = np.zeros_like(data)
        gx[:, :, :h2 * 2, :w2 * 2] = (
            routed.reshape(n, c, h2, w2, 2, 2)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(n, c, h2 * 2, w2 * 2)
        )
        _accumulate(x, gx[0] if squeeze else gx)

    return _result(value[0] if squeeze else value, (x,), backward_fn)


def softmax(x: Tensor) -> Tensor:
    """Stabilized softmax along the last axis (vector or row-wise matrix)."""
    if x.ndim not in (1, 2):
        raise ShapeMismatch(f"softmax input must be 1-D or 2-D, got {x.shape}")
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    value = exp / exp.sum(axis=-1, keepdims=True)

    def backward_fn(g):
        inner = (g * value).sum(axis=-1, keepdims=True)
        _accumulate(x, value * (g - inner), own=True)

    return _result(value, (x,), backward_fn)


def cross_entropy(logits: Tensor, label: int) -> Tensor:
    """-log softmax(logits)[label]; backward is softmax(logits) - one_hot."""
    if logits.ndim != 1:
        raise ShapeMismatch(f"logits must be 1-D, got {logits.shape}")
    n = logits.shape[0]
    if not 0 <= label < n:
        raise LabelOutOfRange(f"label {label} outside [0, {n})")
    shifted = logits.data - logits.data.max()
    exp = np.exp(shifted)
    total = exp.sum()
    loss = np.log(total) - shifted[label]
    probs = exp / total

    def backward_fn(g):
        grad = probs.copy()
        grad[label] -= 1.0
        _accumulate(logits, grad * g.reshape(()), own=True)

    return _result(np.asarray(loss), (logits,), backward_fn)


def mean_rows(x: Tensor) -> Tensor:
    """Mean over axis 0 of a matrix."""
    if x.ndim != 2:
        raise ShapeMismatch(f"mean_rows needs a matrix, got {x.shape}")
    rows = x.shape[0]

    def backward_fn(g):
        _accumulate(x, np.broadcast_to(g / rows, x.shape))

    return _result(x.data.mean(axis=0), (x,), backward_fn)


def sum_all(x: Tensor) -> Tensor:
    shape = x.shape

    def backward_fn(g):
        _accumulate(x, np.full(shape, g.reshape(())), own=True)

    return _result(np.asarray(x.data.sum()), (x,), backward_fn)
