"""Dense tensors with reverse-mode differentiation on top of numpy.

Operations are recorded only while a :class:`Tape` is active and at least one
input requires a gradient. Image tensors are laid out as (batch, channel,
height, width).
"""

from __future__ import annotations

import contextlib
import threading
from typing import Callable, Iterator, Sequence

import numpy as np


class ShapeError(ValueError):
    pass


class TapeError(RuntimeError):
    pass


_local = threading.local()


def _tape_stack() -> list:
    if not hasattr(_local, "tapes"):
        _local.tapes = []
    return _local.tapes


def get_default_dtype() -> np.dtype:
    return getattr(_local, "dtype", np.dtype(np.float32))


@contextlib.contextmanager
def default_dtype(dtype) -> Iterator[None]:
    """Temporarily change the dtype used for new tensors (e.g. float64 for gradient checks)."""
    previous = get_default_dtype()
    _local.dtype = np.dtype(dtype)
    try:
        yield
    finally:
        _local.dtype = previous


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Suspend recording on every active tape of this thread."""
    previous = getattr(_local, "grad_disabled", False)
    _local.grad_disabled = True
    try:
        yield
    finally:
        _local.grad_disabled = previous


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_node", "name")

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: str | None = None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data)
        if dtype is not None:
            target = np.dtype(dtype)
        elif arr.dtype == np.float32 or arr.dtype == get_default_dtype():
            target = arr.dtype
        else:
            target = get_default_dtype()
        self.data = np.ascontiguousarray(arr, dtype=target)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._node: _Node | None = None
        self.name = name

    # -- basic properties -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _raise_not_scalar(self)

    def detach(self) -> Tensor:
        return Tensor(self.data, dtype=self.dtype)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def backward(self) -> None:
        if self._node is None:
            raise TapeError("tensor was not produced by a recorded operation")
        self._node.tape.backward(self)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    # -- operator sugar ---------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return add(neg(self), other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scalar_mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("division by a tensor is not supported")
        return scalar_mul(self, 1.0 / other)

    def __neg__(self):
        return neg(self)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self):
        return tsum(self)

    def mean(self):
        return tmean(self)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def _raise_not_scalar(t: Tensor):
    raise ShapeError(f"item() needs a single-element tensor, got shape {t.shape}")


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x, dtype=dtype)


class _Node:
    __slots__ = ("tape", "inputs", "out", "backward_fn", "op")

    def __init__(self, tape, inputs, out, backward_fn, op):
        self.tape = tape
        self.inputs = inputs
        self.out = out
        self.backward_fn = backward_fn
        self.op = op


class Tape:
    """Ordered record of executed operations.

    Use as a context manager; operations executed inside the block whose inputs
    need gradients are appended in execution order, so the reversed record is a
    valid reverse topological order.
    """

    def __init__(self):
        self.nodes: list[_Node] = []
        self.consumed = False

    def __enter__(self) -> Tape:
        if self.consumed:
            raise TapeError("tape has already been replayed; record on a new tape")
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        stack = _tape_stack()
        if stack and stack[-1] is self:
            stack.pop()

    def __len__(self) -> int:
        return len(self.nodes)

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(leaf) into ``.grad`` of every leaf requiring a gradient."""
        if self.consumed:
            raise TapeError("backward already called on this tape")
        if loss.size != 1:
            raise TapeError(f"loss must be a scalar, got shape {loss.shape}")
        if loss._node is None or loss._node.tape is not self:
            if loss.requires_grad and loss._node is None:
                _accumulate_leaf(loss, np.ones_like(loss.data))
                self.consumed = True
                return
            raise TapeError("loss was not recorded on this tape")
        self.consumed = True

        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        leaves: dict[int, Tensor] = {}
        for node in reversed(self.nodes):
            for t in node.inputs:
                if t.requires_grad and t._node is None:
                    leaves[id(t)] = t
            g = grads.pop(id(node.out), None)
            if g is None:
                continue
            in_grads = node.backward_fn(g)
            for t, gi in zip(node.inputs, in_grads):
                if gi is None or not t.requires_grad:
                    continue
                if t._node is None:
                    _accumulate_leaf(t, gi)
                    continue
                key = id(t)
                if key in grads:
                    grads[key] = grads[key] + gi
                else:
                    grads[key] = gi
        # leaves on the tape that the loss does not reach get an explicit zero
        for t in leaves.values():
            if t.grad is None:
                t.grad = np.zeros_like(t.data)
        for node in self.nodes:
            node.out._node = None
        self.nodes.clear()


def _accumulate_leaf(t: Tensor, g: np.ndarray) -> None:
    g = np.asarray(g, dtype=t.dtype).reshape(t.shape)
    if t.grad is None:
        t.grad = g.copy()
    else:
        t.grad = t.grad + g


def _recording_tape() -> Tape | None:
    if getattr(_local, "grad_disabled", False):
        return None
    stack = _tape_stack()
    return stack[-1] if stack else None


def _make(out_data: np.ndarray, inputs: Sequence[Tensor], backward_fn: Callable, op: str) -> Tensor:
    out = Tensor(out_data, dtype=out_data.dtype)
    tape = _recording_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        node = _Node(tape, tuple(inputs), out, backward_fn, op)
        out._node = node
        tape.nodes.append(node)
    return out


def _check_same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


# -- elementwise --------------------------------------------------------------

def add(a, b) -> Tensor:
    if not isinstance(b, Tensor):
        a = as_tensor(a)
        return _make(a.data + a.dtype.type(b), (a,), lambda g: (g,), "add_scalar")
    a = as_tensor(a, dtype=b.dtype)
    _check_same_shape(a, b, "add")
    return _make(a.data + b.data, (a, b), lambda g: (g, g), "add")


def sub(a, b) -> Tensor:
    if not isinstance(b, Tensor):
        return add(a, -b)
    a = as_tensor(a, dtype=b.dtype)
    _check_same_shape(a, b, "sub")
    return _make(a.data - b.data, (a, b), lambda g: (g, -g), "sub")


def neg(a: Tensor) -> Tensor:
    return _make(-a.data, (a,), lambda g: (-g,), "neg")


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "mul")
    ad, bd = a.data, b.data
    return _make(ad * bd, (a, b), lambda g: (g * bd, g * ad), "mul")


def scalar_mul(a: Tensor, c: float) -> Tensor:
    c = a.dtype.type(c)
    return _make(a.data * c, (a,), lambda g: (g * c,), "scalar_mul")


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _make(np.where(mask, a.data, 0).astype(a.dtype), (a,), lambda g: (g * mask,), "relu")


def tabs(a: Tensor) -> Tensor:
    s = np.sign(a.data)
    return _make(np.abs(a.data), (a,), lambda g: (g * s,), "abs")


# -- reductions and reshaping -------------------------------------------------

def tsum(a: Tensor) -> Tensor:
    shape = a.shape
    return _make(np.asarray(a.data.sum(), dtype=a.dtype), (a,),
                 lambda g: (np.broadcast_to(g, shape).astype(g.dtype),), "sum")


def tmean(a: Tensor) -> Tensor:
    shape, n = a.shape, a.size
    inv = a.dtype.type(1.0 / n)
    return _make(np.asarray(a.data.mean(), dtype=a.dtype), (a,),
                 lambda g: (np.full(shape, g * inv, dtype=a.dtype),), "mean")


def reshape(a: Tensor, shape) -> Tensor:
    old = a.shape
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),), "reshape")


def getitem(a: Tensor, index) -> Tensor:
    shape = a.shape

    def backward(g):
        full = np.zeros(shape, dtype=g.dtype)
        np.add.at(full, index, g) if _fancy(index) else full.__setitem__(index, g)
        return (full,)

    return _make(np.ascontiguousarray(a.data[index]), (a,), backward, "getitem")


def _fancy(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return any(isinstance(i, (list, np.ndarray)) for i in items)


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    """Concatenate along ``axis`` (channels by default)."""
    if not tensors:
        raise ShapeError("concat of an empty sequence")
    ref = tensors[0].shape
    for t in tensors[1:]:
        if t.ndim != len(ref) or any(s != r for k, (s, r) in enumerate(zip(t.shape, ref)) if k != axis % len(ref)):
            raise ShapeError(f"concat: incompatible shapes {ref} and {t.shape}")
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.ascontiguousarray(p) for p in np.split(g, splits, axis=axis))

    return _make(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), backward, "concat")


def add_n(tensors: Sequence[Tensor]) -> Tensor:
    """Sum of equally shaped tensors."""
    for t in tensors[1:]:
        _check_same_shape(tensors[0], t, "add_n")
    out = tensors[0].data.copy()
    for t in tensors[1:]:
        out += t.data
    return _make(out, tuple(tensors), lambda g: tuple(g for _ in tensors), "add_n")


# -- convolution -----------------------------------------------------------------

# im2col buffers above this many elements fall back to a per-offset loop
_IM2COL_LIMIT = 16 * 1024 * 1024


def _pad_nhwc(a: np.ndarray, ph: int, pw: int) -> np.ndarray:
    n, h, w, c = a.shape
    out = np.zeros((n, h + 2 * ph, w + 2 * pw, c), dtype=a.dtype)
    out[:, ph:ph + h, pw:pw + w, :] = a
    return out


def _correlate_nhwc(xp: np.ndarray, wd: np.ndarray, ho: int, wo: int, keep_cols: bool = False):
    """Valid cross-correlation of padded NHWC ``xp`` with (Cout, Cin, kh, kw) kernels.

    Returns the (n*ho*wo, Cout) result and, when requested and affordable, the
    im2col matrix with columns ordered (kh, kw, Cin).
    """
    n, _, _, cin = xp.shape
    cout, _, kh, kw = wd.shape
    m = n * ho * wo
    if m * kh * kw * cin <= _IM2COL_LIMIT or kh * kw == 1:
        win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(1, 2))
        cols = np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3)).reshape(m, kh * kw * cin)
        wmat = np.ascontiguousarray(wd.transpose(2, 3, 1, 0)).reshape(kh * kw * cin, cout)
        return cols @ wmat, (cols if keep_cols else None)
    out = np.zeros((m, cout), dtype=xp.dtype)
    for i in range(kh):
        for j in range(kw):
            patch = np.ascontiguousarray(xp[:, i:i + ho, j:j + wo, :]).reshape(m, cin)
            out += patch @ wd[:, :, i, j].T
    return out, None


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, pad=None) -> Tensor:
    """Cross-correlation with zero padding; ``pad=None`` means "same" for odd kernels."""
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeError(f"conv2d expects 4-d input and kernels, got {x.shape} and {weight.shape}")
    n, cin, h, w = x.shape
    cout, cin_k, kh, kw = weight.shape
    if cin != cin_k:
        raise ShapeError(f"conv2d: input has {cin} channels, kernels expect {cin_k}")
    if bias is not None and bias.shape != (cout,):
        raise ShapeError(f"conv2d: bias shape {bias.shape} does not match {cout} output channels")
    if pad is None:
        if kh % 2 == 0 or kw % 2 == 0:
            raise ShapeError("conv2d: 'same' padding needs odd kernel sizes")
        ph, pw = kh // 2, kw // 2
    elif isinstance(pad, int):
        ph = pw = pad
    else:
        ph, pw = pad
    ho, wo = h + 2 * ph - kh + 1, w + 2 * pw - kw + 1
    if ho < 1 or wo < 1:
        raise ShapeError("conv2d: kernel larger than padded input")

    xp = _pad_nhwc(x.data.transpose(0, 2, 3, 1), ph, pw)
    wd = weight.data
    m = n * ho * wo
    out, cols = _correlate_nhwc(xp, wd, ho, wo, keep_cols=weight.requires_grad)
    if bias is not None:
        out += bias.data
    out_data = np.ascontiguousarray(out.reshape(n, ho, wo, cout).transpose(0, 3, 1, 2))

    def backward(grad):
        gt = np.ascontiguousarray(grad.transpose(0, 2, 3, 1))
        g2 = gt.reshape(m, cout)
        gb = g2.sum(axis=0) if bias is not None else None
        gx = gw = None
        if weight.requires_grad:
            if cols is not None:
                gw = np.ascontiguousarray((cols.T @ g2).reshape(kh, kw, cin, cout).transpose(3, 2, 0, 1))
            else:
                gw = np.zeros_like(wd)
                for i in range(kh):
                    for j in range(kw):
                        patch = np.ascontiguousarray(xp[:, i:i + ho, j:j + wo, :]).reshape(m, cin)
                        gw[:, :, i, j] = g2.T @ patch
        if x.requires_grad:
            # input gradient = correlation of the padded output gradient with flipped, transposed kernels
            gp = _pad_nhwc(gt, kh - 1, kw - 1)
            wflip = np.ascontiguousarray(wd[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
            hp, wp = h + 2 * ph, w + 2 * pw
            gfull, _ = _correlate_nhwc(gp, wflip, hp, wp)
            gx = gfull.reshape(n, hp, wp, cin)[:, ph:ph + h, pw:pw + w, :]
            gx = np.ascontiguousarray(gx.transpose(0, 3, 1, 2))
        return (gx, gw, gb) if bias is not None else (gx, gw)

    inputs = (x, weight, bias) if bias is not None else (x, weight)
    return _make(out_data, inputs, backward, "conv2d")


# -- rank-one building blocks ---------------------------------------------------

def avg_pool_to_column(x: Tensor) -> Tensor:
    """Mean over the width axis: (N, C, H, W) -> (N, C, H, 1)."""
    if x.ndim != 4:
        raise ShapeError(f"avg_pool_to_column expects a 4-d tensor, got {x.shape}")
    w = x.shape[3]
    inv = x.dtype.type(1.0 / w)
    shape = x.shape
    return _make(x.data.mean(axis=3, keepdims=True).astype(x.dtype), (x,),
                 lambda g: (np.broadcast_to(g * inv, shape).copy(),), "avg_pool_to_column")


def avg_pool_to_row(x: Tensor) -> Tensor:
    """Mean over the height axis: (N, C, H, W) -> (N, C, 1, W)."""
    if x.ndim != 4:
        raise ShapeError(f"avg_pool_to_row expects a 4-d tensor, got {x.shape}")
    h = x.shape[2]
    inv = x.dtype.type(1.0 / h)
    shape = x.shape
    return _make(x.data.mean(axis=2, keepdims=True).astype(x.dtype), (x,),
                 lambda g: (np.broadcast_to(g * inv, shape).copy(),), "avg_pool_to_row")


def outer_product(col: Tensor, row: Tensor) -> Tensor:
    """(N, C, H, 1) x (N, C, 1, W) -> (N, C, H, W); every (n, c) slice has rank <= 1."""
    if col.ndim != 4 or row.ndim != 4 or col.shape[3] != 1 or row.shape[2] != 1:
        raise ShapeError(f"outer_product expects (N,C,H,1) and (N,C,1,W), got {col.shape} and {row.shape}")
    if col.shape[:2] != row.shape[:2]:
        raise ShapeError(f"outer_product: batch/channel mismatch {col.shape[:2]} vs {row.shape[:2]}")
    cd, rd = col.data, row.data

    def backward(g):
        return (g * rd).sum(axis=3, keepdims=True), (g * cd).sum(axis=2, keepdims=True)

    return _make(cd * rd, (col, row), backward, "outer_product")


# -- pixel shuffle -------------------------------------------------------------

def _shuffle(a: np.ndarray, r: int) -> np.ndarray:
    n, c, h, w = a.shape
    oc = c // (r * r)
    return np.ascontiguousarray(a.reshape(n, oc, r, r, h, w).transpose(0, 1, 4, 2, 5, 3)).reshape(n, oc, h * r, w * r)


def _unshuffle(a: np.ndarray, r: int) -> np.ndarray:
    n, c, h, w = a.shape
    return np.ascontiguousarray(
        a.reshape(n, c, h // r, r, w // r, r).transpose(0, 1, 3, 5, 2, 4)
    ).reshape(n, c * r * r, h // r, w // r)


def pixel_shuffle(x: Tensor, r: int) -> Tensor:
    """Depth-to-space: (N, C*r*r, H, W) -> (N, C, r*H, r*W)."""
    if x.ndim != 4 or x.shape[1] % (r * r):
        raise ShapeError(f"pixel_shuffle: channels {x.shape[1] if x.ndim == 4 else x.shape} not divisible by {r * r}")
    return _make(_shuffle(x.data, r), (x,), lambda g: (_unshuffle(g, r),), "pixel_shuffle")


def pixel_unshuffle(x: Tensor, r: int) -> Tensor:
    if x.ndim != 4 or x.shape[2] % r or x.shape[3] % r:
        raise ShapeError(f"pixel_unshuffle: spatial dims of {x.shape} not divisible by {r}")
    return _make(_unshuffle(x.data, r), (x,), lambda g: (_shuffle(g, r),), "pixel_unshuffle")


# -- batch normalization -------------------------------------------------------

BN_MOMENTUM = 0.9
BN_EPS = 1e-5


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, running_mean: Tensor, running_var: Tensor,
               training: bool, momentum: float = BN_MOMENTUM, eps: float = BN_EPS) -> Tensor:
    """Per-channel normalization of an (N, C, H, W) tensor.

    In training mode the batch statistics are used and the running statistics
    are updated in place as ``running = momentum * running + (1 - momentum) * batch``.
    """
    if x.ndim != 4:
        raise ShapeError(f"batch_norm expects a 4-d tensor, got {x.shape}")
    c = x.shape[1]
    for p in (gamma, beta, running_mean, running_var):
        if p.shape != (c,):
            raise ShapeError(f"batch_norm: parameter shape {p.shape} does not match {c} channels")
    axes = (0, 2, 3)
    count = x.shape[0] * x.shape[2] * x.shape[3]
    dt = x.dtype.type
    if training:
        if count < 2:
            raise ShapeError("batch_norm in training mode needs at least two values per channel")
        mean = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        running_mean.data[...] = momentum * running_mean.data + (1 - momentum) * mean
        running_var.data[...] = momentum * running_var.data + (1 - momentum) * var * (count / (count - 1))
    else:
        mean = running_mean.data.astype(x.dtype)
        var = running_var.data.astype(x.dtype)
    inv_std = (1.0 / np.sqrt(var + dt(eps))).astype(x.dtype)
    xhat = (x.data - mean[None, :, None, None]) * inv_std[None, :, None, None]
    gd = gamma.data
    out = xhat * gd[None, :, None, None] + beta.data[None, :, None, None]

    def backward(g):
        gbeta = g.sum(axis=axes)
        ggamma = (g * xhat).sum(axis=axes)
        gxhat = g * gd[None, :, None, None]
        if training:
            gx = (inv_std[None, :, None, None] / count) * (
                count * gxhat
                - gxhat.sum(axis=axes)[None, :, None, None]
                - xhat * (gxhat * xhat).sum(axis=axes)[None, :, None, None]
            )
        else:
            gx = gxhat * inv_std[None, :, None, None]
        return gx.astype(x.dtype), ggamma, gbeta

    return _make(out.astype(x.dtype), (x, gamma, beta), backward, "batch_norm")


# -- losses --------------------------------------------------------------------

def loss_norm(x: Tensor, y: Tensor, alpha: int = 2) -> Tensor:
    """Mean of |x - y| ** alpha over all elements (alpha in {1, 2})."""
    if alpha not in (1, 2):
        raise ValueError(f"alpha must be 1 or 2, got {alpha}")
    y = as_tensor(y, dtype=x.dtype)
    _check_same_shape(x, y, "loss_norm")
    diff = x.data - y.data
    n = diff.size
    if alpha == 2:
        value = np.mean(diff * diff)
        scale = x.dtype.type(2.0 / n)

        def backward(g):
            gd = diff * (g * scale)
            return gd, -gd
    else:
        value = np.mean(np.abs(diff))
        scale = x.dtype.type(1.0 / n)

        def backward(g):
            gd = np.sign(diff) * (g * scale)
            return gd, -gd

    return _make(np.asarray(value, dtype=x.dtype), (x, y), backward, f"loss_l{alpha}")


# -- gradient checking -----------------------------------------------------------

def numerical_grad(fn: Callable[[], float], arr: np.ndarray, step: float) -> np.ndarray:
    """Central finite differences of a scalar function with respect to ``arr`` (modified in place)."""
    grad = np.zeros(arr.shape, dtype=np.float64)
    flat = arr.reshape(-1)
    gflat = grad.reshape(-1)
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + step
        fp = fn()
        flat[k] = orig - step
        fm = fn()
        flat[k] = orig
        gflat[k] = (fp - fm) / (2 * step)
    return grad


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)


def gradcheck(fn: Callable[..., Tensor], inputs: Sequence[np.ndarray], dtype=np.float32,
              step: float | None = None, seed: int = 918273) -> list[float]:
    """Compare reverse-mode gradients of ``fn`` against central differences.

    ``fn`` maps tensors to a tensor; it is reduced to a scalar with a fixed
    random projection so every output element contributes. Analytic gradients
    are taken at ``dtype``; finite differences are always evaluated in float64,
    so one small default step serves both precisions (a coarse step would
    straddle relu kinks in deep compositions). Returns the norm-wise relative
    error per input.
    """
    rng = np.random.default_rng(seed)
    step = 1e-6 if step is None else step

    with default_dtype(np.float64):
        probe = fn(*[Tensor(np.asarray(a, dtype=np.float64)) for a in inputs])
    proj = rng.standard_normal(probe.shape)

    with default_dtype(dtype):
        leaves = [Tensor(np.asarray(a, dtype=dtype), requires_grad=True) for a in inputs]
        with Tape() as tape:
            out = fn(*leaves)
            loss = tsum(mul(out, Tensor(proj.astype(dtype))))
        tape.backward(loss)

    errors = []
    work = [np.array(a, dtype=np.float64) for a in inputs]
    for k, leaf in enumerate(leaves):

        def scalar() -> float:
            with default_dtype(np.float64), no_grad():
                return float(np.sum(fn(*[Tensor(w) for w in work]).data * proj))

        num = numerical_grad(scalar, work[k], step)
        errors.append(relative_error(leaf.grad, num))
    return errors
