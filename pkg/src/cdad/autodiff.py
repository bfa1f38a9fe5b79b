"""Minimal dense-array autodiff: forward primitives, reverse-mode gradients,
SGD with momentum, and a text checkpoint format.

Everything is float64 and deterministic. Arrays are plain numpy; a Tensor
wraps one array plus the closure needed to push gradients to its parents.
Parameters keep a persistent ``.grad`` buffer that accumulates across
backward calls until ``zero_gradients``.
"""

from __future__ import annotations

import numpy as np

# Every op output is checked for NaN/Inf unless disabled (costs a few percent).
CHECK_FINITE = True


class NonFiniteError(FloatingPointError):
    """An operation produced NaN or Inf."""


def _as_array(x) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    return a


def _check(a: np.ndarray, op: str) -> np.ndarray:
    if CHECK_FINITE and not np.all(np.isfinite(a)):
        raise NonFiniteError(f"non-finite values produced by {op}")
    return a


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape` (the pre-broadcast operand shape)."""
    if grad.shape == shape:
        return grad
    # collapse extra leading axes
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "name", "is_param", "_parents", "_backward")

    def __init__(self, data, parents=(), backward=None, name=None, is_param=False):
        self.data = _as_array(data)
        self.name = name
        self.is_param = is_param
        self.grad = np.zeros_like(self.data) if is_param else None
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}{tag})"

    # convenience operators (constants auto-wrap, no gradient)
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


class Parameter(Tensor):
    """A named leaf with a persistent gradient buffer."""

    def __init__(self, name: str, data):
        super().__init__(data, name=name, is_param=True)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def constant(x) -> Tensor:
    return Tensor(x)


# ---------------------------------------------------------------- primitives


def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out_data = _check(a.data + b.data, "add")

    def bwd(g, acc):
        acc(a, _unbroadcast(g, a.data.shape))
        acc(b, _unbroadcast(g, b.data.shape))

    return Tensor(out_data, (a, b), bwd)


def sub(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out_data = _check(a.data - b.data, "sub")

    def bwd(g, acc):
        acc(a, _unbroadcast(g, a.data.shape))
        acc(b, _unbroadcast(-g, b.data.shape))

    return Tensor(out_data, (a, b), bwd)


def neg(a) -> Tensor:
    a = _wrap(a)

    def bwd(g, acc):
        acc(a, -g)

    return Tensor(-a.data, (a,), bwd)


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out_data = _check(a.data * b.data, "mul")
    ad, bd = a.data, b.data

    def bwd(g, acc):
        acc(a, _unbroadcast(g * bd, ad.shape))
        acc(b, _unbroadcast(g * ad, bd.shape))

    return Tensor(out_data, (a, b), bwd)


def div(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    with np.errstate(divide="ignore", invalid="ignore"):
        out_data = _check(a.data / b.data, "div")
    ad, bd = a.data, b.data

    def bwd(g, acc):
        acc(a, _unbroadcast(g / bd, ad.shape))
        acc(b, _unbroadcast(-g * ad / (bd * bd), bd.shape))

    return Tensor(out_data, (a, b), bwd)


def matmul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out_data = _check(a.data @ b.data, "matmul")
    ad, bd = a.data, b.data

    def bwd(g, acc):
        if ad.ndim == 1 and bd.ndim == 1:
            acc(a, g * bd)
            acc(b, g * ad)
            return
        ga = g @ np.swapaxes(bd, -1, -2) if bd.ndim > 1 else np.outer(g, bd).reshape(ad.shape)
        gb = np.swapaxes(ad, -1, -2) @ g if ad.ndim > 1 else np.outer(ad, g).reshape(bd.shape)
        acc(a, _unbroadcast(ga, ad.shape))
        acc(b, _unbroadcast(gb, bd.shape))

    return Tensor(out_data, (a, b), bwd)


def relu(a) -> Tensor:
    a = _wrap(a)
    mask = a.data > 0

    def bwd(g, acc):
        acc(a, g * mask)

    return Tensor(a.data * mask, (a,), bwd)


def leaky_relu(a, slope: float = 0.2) -> Tensor:
    a = _wrap(a)
    mask = a.data > 0
    scale = np.where(mask, 1.0, slope)

    def bwd(g, acc):
        acc(a, g * scale)

    return Tensor(a.data * scale, (a,), bwd)


def abs_(a) -> Tensor:
    a = _wrap(a)
    sign = np.sign(a.data)  # subgradient 0 at exact zeros

    def bwd(g, acc):
        acc(a, g * sign)

    return Tensor(np.abs(a.data), (a,), bwd)


def exp(a) -> Tensor:
    a = _wrap(a)
    out_data = _check(np.exp(a.data), "exp")

    def bwd(g, acc):
        acc(a, g * out_data)

    return Tensor(out_data, (a,), bwd)


def sqrt(a) -> Tensor:
    a = _wrap(a)
    out_data = _check(np.sqrt(a.data), "sqrt")

    def bwd(g, acc):
        acc(a, g * 0.5 / out_data)

    return Tensor(out_data, (a,), bwd)


def sum_(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _wrap(a)
    out_data = a.data.sum(axis=axis, keepdims=keepdims)
    in_shape = a.data.shape

    def bwd(g, acc):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        acc(a, np.broadcast_to(g, in_shape).copy())

    return Tensor(out_data, (a,), bwd)


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _wrap(a)
    n = a.data.size if axis is None else a.data.shape[axis]
    return mul(sum_(a, axis=axis, keepdims=keepdims), 1.0 / n)


def reshape(a, shape) -> Tensor:
    a = _wrap(a)
    in_shape = a.data.shape

    def bwd(g, acc):
        acc(a, g.reshape(in_shape))

    return Tensor(a.data.reshape(shape), (a,), bwd)


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [_wrap(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]

    def bwd(g, acc):
        pieces = np.split(g, np.cumsum(sizes)[:-1], axis=axis)
        for t, piece in zip(tensors, pieces):
            acc(t, piece)

    return Tensor(out_data, tuple(tensors), bwd)


def narrow(a, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice of `length` entries along `axis`."""
    a = _wrap(a)
    idx = [slice(None)] * a.data.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)
    in_shape = a.data.shape

    def bwd(g, acc):
        full = np.zeros(in_shape)
        full[idx] = g
        acc(a, full)

    return Tensor(a.data[idx], (a,), bwd)


def softmax(a, axis: int = -1) -> Tensor:
    """Shift-stabilized softmax along `axis`."""
    a = _wrap(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=axis, keepdims=True)

    def bwd(g, acc):
        dot = (g * out_data).sum(axis=axis, keepdims=True)
        acc(a, out_data * (g - dot))

    return Tensor(out_data, (a,), bwd)


def dropout(a, p: float, rng: np.random.Generator | None, train: bool) -> Tensor:
    """Inverted dropout; exact identity when p == 0 or not training."""
    if p < 0 or p >= 1:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    a = _wrap(a)
    if not train or p == 0.0:
        return a
    mask = (rng.random(a.data.shape) >= p) / (1.0 - p)

    def bwd(g, acc):
        acc(a, g * mask)

    return Tensor(a.data * mask, (a,), bwd)


def mean_absolute_error(pred, actual) -> Tensor:
    pred, actual = _wrap(pred), _wrap(actual)
    if pred.data.shape != actual.data.shape:
        raise ValueError(
            f"shape mismatch: predictions {pred.data.shape} vs actuals {actual.data.shape}"
        )
    return mean(abs_(sub(pred, actual)))


class BatchNorm:
    """Per-feature normalization over the batch axis with running statistics.

    Train mode normalizes by the current batch's mean/variance and updates
    running stats (momentum 0.1); inference mode uses the running stats.
    """

    EPS = 1e-5
    MOMENTUM = 0.1

    def __init__(self, name: str, num_features: int):
        self.gamma = Parameter(f"{name}.gamma", np.ones(num_features))
        self.beta = Parameter(f"{name}.beta", np.zeros(num_features))
        self.running_mean = np.zeros(num_features)
        self.running_var = np.ones(num_features)

    def __call__(self, x: Tensor, train: bool) -> Tensor:
        if train:
            mu = mean(x, axis=0, keepdims=True)
            xc = sub(x, mu)
            var = mean(mul(xc, xc), axis=0, keepdims=True)
            xhat = div(xc, sqrt(add(var, self.EPS)))
            m = self.MOMENTUM
            self.running_mean = (1 - m) * self.running_mean + m * mu.data.ravel()
            self.running_var = (1 - m) * self.running_var + m * var.data.ravel()
        else:
            xhat = mul(sub(x, self.running_mean), 1.0 / np.sqrt(self.running_var + self.EPS))
        return add(mul(xhat, self.gamma), self.beta)

    def params(self):
        return [self.gamma, self.beta]


# ------------------------------------------------------------------ backward


def backward(loss: Tensor, accumulate: bool = True) -> dict:
    """Reverse-mode sweep from a scalar loss.

    Accumulates d(loss)/d(p) into each reachable Parameter's ``.grad``
    (repeated calls keep accumulating until ``zero_gradients``). Returns the
    full tensor -> gradient map for inspection.
    """
    if loss.data.size != 1:
        raise ValueError(f"loss must be scalar, got shape {loss.data.shape}")

    order = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    by_id = {id(loss): loss}

    def acc(t, g):
        key = id(t)
        by_id[key] = t
        if key in grads:
            grads[key] = grads[key] + g
        else:
            grads[key] = g

    for node in reversed(order):
        g = grads.get(id(node))
        if g is None or node._backward is None:
            continue
        node._backward(g, acc)

    if accumulate:
        for key, g in grads.items():
            t = by_id[key]
            if t.is_param:
                t.grad += g
    return {key: g for key, g in grads.items()}


def zero_gradients(params) -> None:
    for p in params:
        p.grad[...] = 0.0


# ----------------------------------------------------------------- optimizer


class SGDMomentum:
    """value <- value - lr * buffer, buffer <- mu * buffer + grad."""

    def __init__(self, params, lr: float, momentum: float = 0.9):
        if lr <= 0:
            raise ValueError("learning rate must be positive")
        if not 0 <= momentum < 1:
            raise ValueError("momentum must be in [0, 1)")
        self.params = list(params)
        self.lr = lr
        self.momentum = momentum
        self.buffers = {p.name: np.zeros_like(p.data) for p in self.params}

    def step(self) -> None:
        for p in self.params:
            _check(p.grad, f"gradient of {p.name}")
            buf = self.buffers[p.name]
            buf *= self.momentum
            buf += p.grad
            p.data -= self.lr * buf
            p.grad[...] = 0.0

    def step_with(self, overrides: dict) -> None:
        """Step using `overrides[name]` as the gradient where present."""
        for p in self.params:
            g = overrides.get(p.name, p.grad)
            _check(g, f"gradient of {p.name}")
            buf = self.buffers[p.name]
            buf *= self.momentum
            buf += g
            p.data -= self.lr * buf
            p.grad[...] = 0.0


# ---------------------------------------------------------------- checkpoint

CHECKPOINT_HEADER = "cdad-params v1"


def save_params(path, params, extra_lines=()) -> None:
    """Text checkpoint: name, shape, then values at 17 significant digits
    (lossless for float64)."""
    with open(path, "w") as f:
        f.write(CHECKPOINT_HEADER + "\n")
        for line in extra_lines:
            f.write(f"# {line}\n")
        for p in params:
            shape = ",".join(str(d) for d in p.data.shape)
            f.write(f"param {p.name} {shape or 'scalar'}\n")
            f.write(" ".join(f"{v:.17g}" for v in p.data.ravel()) + "\n")


def load_params(path) -> dict[str, np.ndarray]:
    with open(path) as f:
        header = f.readline().rstrip("\n")
        if header != CHECKPOINT_HEADER:
            raise ValueError(f"unrecognized checkpoint header: {header!r}")
        out: dict[str, np.ndarray] = {}
        for line in f:
            if line.startswith("#"):
                continue
            if not line.startswith("param "):
                raise ValueError(f"malformed checkpoint line: {line!r}")
            _, name, shape_s = line.rstrip("\n").split(" ")
            shape = () if shape_s == "scalar" else tuple(int(d) for d in shape_s.split(","))
            values = np.array(f.readline().split(), dtype=np.float64)
            out[name] = values.reshape(shape)
    return out
