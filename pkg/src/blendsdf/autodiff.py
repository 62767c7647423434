"""Reverse-mode automatic differentiation over numpy arrays.

A Tape records operations in execution order; backward() replays them in
reverse, accumulating cotangents. Training runs in float32; gradient
verification rebuilds the same computation in float64 and compares against
central finite differences (grad_check).

Conventions:
- Ops preserve the dtype of their inputs. Binary ops require both Value
  operands to share a dtype; raw numbers/arrays are cast to match.
- backward() is idempotent: every call resets node gradients and recomputes
  them from scratch, so repeated calls are bit-identical.
- Intermediate .grad buffers may alias each other after backward; only leaf
  and parameter gradients are part of the contract.
"""

import numpy as np


class TapeError(RuntimeError):
    """Backward requested in an invalid state (nothing recorded)."""


class Param:
    """Named trainable tensor: persistent values plus a gradient buffer."""

    __slots__ = ("name", "values", "grad")

    def __init__(self, name, values):
        self.name = name
        self.values = np.ascontiguousarray(values)
        self.grad = np.zeros_like(self.values)

    @property
    def shape(self):
        return self.values.shape

    def __repr__(self):
        return f"Param({self.name!r}, shape={self.values.shape}, dtype={self.values.dtype})"


class Value:
    """One node of a taped computation."""

    __slots__ = ("data", "grad", "tape", "param", "_bwd")

    def __init__(self, data, tape, param=None):
        self.data = data
        self.grad = None
        self.tape = tape
        self.param = param
        self._bwd = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    # -- operator sugar -------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_coerce(other, self), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(_coerce(other, self), self)

    def __neg__(self):
        return neg(self)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None):
        return mean_(self, axis=axis)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) != 1 else shape[0])


class Tape:
    """Execution-ordered op recorder."""

    def __init__(self):
        self._nodes = []
        self._leaves = []
        self._watched = {}  # id(Param) -> leaf Value

    def constant(self, arr, dtype=None):
        """Untracked input: participates in forward, receives no gradient."""
        a = np.asarray(arr, dtype=dtype)
        return Value(a, self)

    def leaf(self, arr, dtype=None):
        """Tracked input: .grad is populated by backward()."""
        v = Value(np.asarray(arr, dtype=dtype), self)
        self._leaves.append(v)
        return v

    def watch(self, param):
        """Leaf bound to a Param; one leaf per param per tape."""
        v = self._watched.get(id(param))
        if v is None:
            v = Value(param.values, self, param=param)
            self._watched[id(param)] = v
            self._leaves.append(v)
        return v

    def _record(self, data, bwd):
        v = Value(data, self)
        v._bwd = bwd
        self._nodes.append(v)
        return v

    def backward(self, root, seed=None):
        """Accumulate d(root)/d(everything); repeated calls are identical."""
        if not self._nodes:
            raise TapeError("backward called before any op was recorded")
        for v in self._nodes:
            v.grad = None
        for v in self._leaves:
            v.grad = None
        root.grad = np.ones_like(root.data) if seed is None else np.asarray(seed, root.dtype)
        for v in reversed(self._nodes):
            if v.grad is None or v._bwd is None:
                continue
            v._bwd(v.grad)
            # reverse order means no later node reads this cotangent again
            if v is not root:
                v.grad = None

    def write_param_grads(self):
        """Copy leaf gradients into the bound Params' .grad buffers."""
        for leaf in self._watched.values():
            p = leaf.param
            if leaf.grad is None:
                p.grad[...] = 0.0
            else:
                p.grad[...] = leaf.grad

    def release(self):
        """Sever the recorded graph so its arrays free by refcount alone.

        The Value <-> Tape cycles otherwise wait for the cycle collector,
        which tracks object counts, not the gigabytes behind them. Outputs
        keep their .data, but released nodes no longer propagate gradient.
        """
        for v in self._nodes:
            v._bwd = None
            v.grad = None
        self._nodes.clear()
        self._leaves.clear()
        self._watched.clear()

    def accumulate_param_grads(self):
        """Add leaf gradients onto the bound Params' .grad buffers.

        Used when one optimization step is split over several tapes; the
        caller zeroes the buffers once up front.
        """
        for leaf in self._watched.values():
            if leaf.grad is not None:
                leaf.param.grad += leaf.grad

    def param_grads(self):
        """dict Param -> gradient array (zeros if unused in the graph)."""
        out = {}
        for leaf in self._watched.values():
            g = leaf.grad
            out[leaf.param] = np.zeros_like(leaf.param.values) if g is None else g
        return out


def _accum(v, g):
    if v.grad is None:
        v.grad = g if getattr(g, "flags", None) is None or g.flags.writeable else g.copy()
    else:
        v.grad = v.grad + g if not v.grad.flags.writeable else _iadd(v.grad, g)


def _iadd(buf, g):
    buf += g
    return buf


def _unbroadcast(g, shape):
    """Sum g down to `shape` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _coerce(x, like):
    if isinstance(x, Value):
        return x
    return like.tape.constant(np.asarray(x, dtype=like.dtype))


def _check_dtypes(a, b):
    if a.dtype != b.dtype:
        raise TypeError(f"dtype mismatch in op: {a.dtype} vs {b.dtype}")
    if a.tape is not b.tape:
        raise TapeError("operands were recorded on different tapes")


# ---------------------------------------------------------------------------
# primitive ops
# ---------------------------------------------------------------------------


def add(a, b):
    b = _coerce(b, a)
    _check_dtypes(a, b)
    out = a.data + b.data

    def bwd(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))

    return a.tape._record(out, bwd)


def sub(a, b):
    b = _coerce(b, a)
    _check_dtypes(a, b)
    out = a.data - b.data

    def bwd(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(-g, b.data.shape))

    return a.tape._record(out, bwd)


def mul(a, b):
    b = _coerce(b, a)
    _check_dtypes(a, b)
    out = a.data * b.data

    def bwd(g):
        _accum(a, _unbroadcast(g * b.data, a.data.shape))
        _accum(b, _unbroadcast(g * a.data, b.data.shape))

    return a.tape._record(out, bwd)


def div(a, b):
    b = _coerce(b, a)
    _check_dtypes(a, b)
    out = a.data / b.data

    def bwd(g):
        _accum(a, _unbroadcast(g / b.data, a.data.shape))
        _accum(b, _unbroadcast(-g * out / b.data, b.data.shape))

    return a.tape._record(out, bwd)


def neg(a):
    def bwd(g):
        _accum(a, -g)

    return a.tape._record(-a.data, bwd)


def exp(a):
    out = np.exp(a.data)

    def bwd(g):
        _accum(a, g * out)

    return a.tape._record(out, bwd)


def log(a):
    out = np.log(a.data)

    def bwd(g):
        _accum(a, g / a.data)

    return a.tape._record(out, bwd)


def sqrt(a):
    out = np.sqrt(a.data)

    def bwd(g):
        _accum(a, g * (0.5 / out))

    return a.tape._record(out, bwd)


def square(a):
    out = a.data * a.data

    def bwd(g):
        _accum(a, g * (2.0 * a.data))

    return a.tape._record(out, bwd)


def absolute(a):
    out = np.abs(a.data)

    def bwd(g):
        _accum(a, g * np.sign(a.data))

    return a.tape._record(out, bwd)


def relu(a):
    mask = a.data > 0
    out = np.where(mask, a.data, 0.0).astype(a.dtype)

    def bwd(g):
        _accum(a, g * mask)

    return a.tape._record(out, bwd)


def sigmoid(a):
    # stable two-sided form
    x = a.data
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)

    def bwd(g):
        _accum(a, g * (out * (1.0 - out)))

    return a.tape._record(out, bwd)


def sin(a):
    out = np.sin(a.data)

    def bwd(g):
        _accum(a, g * np.cos(a.data))

    return a.tape._record(out, bwd)


def cos(a):
    out = np.cos(a.data)

    def bwd(g):
        _accum(a, g * -np.sin(a.data))

    return a.tape._record(out, bwd)


def matmul(a, b):
    _check_dtypes(a, b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError("matmul expects 2-D operands")
    out = a.data @ b.data

    def bwd(g):
        _accum(a, g @ b.data.T)
        _accum(b, a.data.T @ g)

    return a.tape._record(out, bwd)


def affine(x, w, b, act=None):
    """Fused dense layer: x @ w + b, optionally relu'd, as one node.

    One stored output instead of three keeps the tape small on the hot path.
    act: None or "relu".
    """
    _check_dtypes(x, w)
    _check_dtypes(x, b)
    out = x.data @ w.data
    out += b.data
    if act == "relu":
        np.maximum(out, 0.0, out=out)
    elif act is not None:
        raise ValueError(f"unknown activation {act!r}")

    def bwd(g):
        # relu(z) > 0 exactly when z > 0, so the output doubles as the mask
        gp = g * (out > 0) if act == "relu" else g
        _accum(x, gp @ w.data.T)
        _accum(w, x.data.T @ gp)
        _accum(b, gp.sum(axis=0))

    return x.tape._record(out, bwd)


def scale_blocks(a, m, k):
    """Multiply each of k stacked row-blocks of a (k*N, F) by constant m (N, F)."""
    m = np.asarray(m, dtype=a.dtype)
    n = m.shape[0]
    out = (a.data.reshape(k, n, -1) * m).reshape(a.data.shape)

    def bwd(g):
        _accum(a, (g.reshape(k, n, -1) * m).reshape(g.shape))

    return a.tape._record(out, bwd)


def bmatvec(a, v):
    """Batched matrix-vector product: (N,F,3) taped x (N,3) constant -> (N,F)."""
    v = np.asarray(v, dtype=a.dtype)
    out = np.einsum("nfa,na->nf", a.data, v)

    def bwd(g):
        _accum(a, g[:, :, None] * v[:, None, :])

    return a.tape._record(out, bwd)


def sum_(a, axis=None, keepdims=False):
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def bwd(g):
        if axis is None:
            _accum(a, np.broadcast_to(g, a.data.shape))
        else:
            gg = g if keepdims else np.expand_dims(g, axis)
            _accum(a, np.broadcast_to(gg, a.data.shape))

    return a.tape._record(np.asarray(out), bwd)


def mean_(a, axis=None):
    out = a.data.mean(axis=axis)
    count = a.data.size if axis is None else a.data.shape[axis]

    def bwd(g):
        scale = np.asarray(1.0 / count, a.dtype)
        if axis is None:
            _accum(a, np.broadcast_to(g * scale, a.data.shape))
        else:
            _accum(a, np.broadcast_to(np.expand_dims(g * scale, axis), a.data.shape))

    return a.tape._record(np.asarray(out), bwd)


def cumsum_exclusive(a, axis=-1):
    """out[..., i] = sum of a[..., :i]. Only the last axis is supported."""
    if axis != -1:
        raise ValueError("cumsum_exclusive supports axis=-1 only")
    c = np.cumsum(a.data, axis=-1)
    out = np.zeros_like(c)
    out[..., 1:] = c[..., :-1]

    def bwd(g):
        s = np.flip(np.cumsum(np.flip(g, -1), -1), -1)
        _accum(a, s - g)

    return a.tape._record(out, bwd)


def concat(values, axis=-1):
    datas = [v.data for v in values]
    for v in values[1:]:
        _check_dtypes(values[0], v)
    out = np.concatenate(datas, axis=axis)
    sizes = [d.shape[axis] for d in datas]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        for v, lo, hi in zip(values, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            _accum(v, g[tuple(sl)])

    return values[0].tape._record(out, bwd)


def rows(a, i0, i1):
    """Slice along axis 0."""
    out = a.data[i0:i1]

    def bwd(g):
        full = np.zeros_like(a.data)
        full[i0:i1] = g
        _accum(a, full)

    return a.tape._record(out, bwd)


def cols(a, j0, j1):
    """Slice along the last axis."""
    out = a.data[..., j0:j1]

    def bwd(g):
        full = np.zeros_like(a.data)
        full[..., j0:j1] = g
        _accum(a, full)

    return a.tape._record(out, bwd)


def reshape(a, shape):
    out = a.data.reshape(shape)

    def bwd(g):
        _accum(a, g.reshape(a.data.shape))

    return a.tape._record(out, bwd)


def transpose(a, axes):
    out = np.transpose(a.data, axes)
    inv = np.argsort(axes)

    def bwd(g):
        _accum(a, np.transpose(g, inv))

    return a.tape._record(out, bwd)


def select(mask, a, b):
    """Elementwise where() with a constant boolean mask."""
    b = _coerce(b, a)
    _check_dtypes(a, b)
    mask = np.asarray(mask, bool)
    out = np.where(mask, a.data, b.data)

    def bwd(g):
        _accum(a, _unbroadcast(np.where(mask, g, 0.0).astype(a.dtype), a.data.shape))
        _accum(b, _unbroadcast(np.where(mask, 0.0, g).astype(b.dtype), b.data.shape))

    return a.tape._record(out, bwd)


def detach(a):
    """Forward the values, block the gradient."""
    return a.tape.constant(a.data)


def custom(tape, data, parents, bwd):
    """Record an op with a user-supplied backward.

    bwd(g) must return one gradient per parent (None to skip). Gradients are
    accumulated into the parents by the tape.
    """

    def closure(g):
        gs = bwd(g)
        for p, gp in zip(parents, gs):
            if gp is not None:
                _accum(p, gp)

    return tape._record(data, closure)


# ---------------------------------------------------------------------------
# verification
# ---------------------------------------------------------------------------


def grad_check(build, inputs, eps=1e-4, floor=1e-6, max_entries=None, rng=None):
    """Compare taped gradients against central finite differences.

    build(tape, *leaves) must return a scalar Value. inputs are arrays
    (promoted to float64). Steps are eps scaled by entry magnitude. Returns
    the max over all entries of |analytic - numeric| / max(|numeric|, floor).
    For large inputs pass max_entries to probe a random subset of entries.
    """
    inputs = [np.asarray(a, np.float64) for a in inputs]

    tape = Tape()
    leaves = [tape.leaf(a.copy()) for a in inputs]
    out = build(tape, *leaves)
    if out.data.shape != ():
        raise ValueError("grad_check target must be scalar")
    tape.backward(out)
    analytic = [
        leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data) for leaf in leaves
    ]

    def forward_only(arrs):
        t = Tape()
        ls = [t.leaf(a) for a in arrs]
        return float(build(t, *ls).data)

    worst = 0.0
    work = [a.copy() for a in inputs]
    for which, a in enumerate(work):
        flat = a.reshape(-1)
        gflat = analytic[which].reshape(-1)
        if max_entries is not None and flat.size > max_entries:
            r = rng if rng is not None else np.random.default_rng(0)
            idxs = r.choice(flat.size, size=max_entries, replace=False)
        else:
            idxs = range(flat.size)
        for i in idxs:
            orig = flat[i]
            h = eps * max(1.0, abs(orig))
            flat[i] = orig + h
            f_hi = forward_only(work)
            flat[i] = orig - h
            f_lo = forward_only(work)
            flat[i] = orig
            numeric = (f_hi - f_lo) / (2.0 * h)
            err = abs(gflat[i] - numeric) / max(abs(numeric), floor)
            worst = max(worst, err)
    return worst
