"""Dense numeric kernel: float64 arrays, a reverse-mode tape, seeded RNG.

The tape is define-by-run: every ``Tensor`` op records its parents and a
closure that propagates the output gradient back to them. ``backward`` walks
the graph once in reverse topological order. Everything is double precision
and reduction orders are fixed, so a pinned seed reproduces training bit for
bit on a given install.

Gradients flow only into tensors created with ``requires_grad=True`` (or
downstream of one); data enters the graph as constants.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ConfigError, NumericFault, ShapeError

Array = np.ndarray


# ---------------------------------------------------------------------------
# plain-array helpers


def as_matrix(data) -> Array:
    """Validate and return a 2-D float64 matrix; entries must be finite."""
    a = np.asarray(data, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"matrix must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NumericFault("matrix contains non-finite entries")
    return a


def matmul(a: Array, b: Array) -> Array:
    """Matrix product with explicit shape checking.

    Accepts stacked (batched) operands with identical leading dimensions.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs >=2-D operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    with np.errstate(over="ignore", invalid="ignore"):
        out = a @ b
    if not np.all(np.isfinite(out)):
        raise NumericFault("matmul produced non-finite entries")
    return out


def assert_finite(name: str, a: Array) -> Array:
    if not np.all(np.isfinite(a)):
        raise NumericFault(f"non-finite values in {name}")
    return a


# ---------------------------------------------------------------------------
# reverse-mode tape


def _unbroadcast(grad: Array, shape: tuple) -> Array:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    g = grad
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


class Tensor:
    """A node on the tape: a float64 array plus gradient plumbing."""

    __slots__ = ("value", "grad", "requires_grad", "_parents", "_vjp")

    def __init__(
        self,
        value,
        requires_grad: bool = False,
        _parents: tuple = (),
        _vjp: Callable[[Array], None] | None = None,
    ):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad: Array | None = None
        self.requires_grad = bool(requires_grad) or any(
            p.requires_grad for p in _parents
        )
        self._parents = _parents
        self._vjp = _vjp

    @property
    def shape(self) -> tuple:
        return self.value.shape

    def _accumulate(self, g: Array) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        self.grad += g

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other: "Tensor | float") -> "Tensor":
        other = _as_tensor(other)
        out_val = self.value + other.value

        def vjp(g: Array) -> None:
            if self.requires_grad:
                self._accumulate(_unbroadcast(g, self.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g, other.shape))

        return Tensor(out_val, _parents=(self, other), _vjp=vjp)

    def __sub__(self, other: "Tensor | float") -> "Tensor":
        return self + (_as_tensor(other) * -1.0)

    def __mul__(self, other: "Tensor | float") -> "Tensor":
        other = _as_tensor(other)
        out_val = self.value * other.value

        def vjp(g: Array) -> None:
            if self.requires_grad:
                self._accumulate(_unbroadcast(g * other.value, self.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g * self.value, other.shape))

        return Tensor(out_val, _parents=(self, other), _vjp=vjp)

    def __truediv__(self, other: "Tensor | float") -> "Tensor":
        other = _as_tensor(other)
        return self * other ** -1.0

    def __pow__(self, exponent: float) -> "Tensor":
        e = float(exponent)
        out_val = self.value**e

        def vjp(g: Array) -> None:
            if self.requires_grad:
                self._accumulate(g * e * self.value ** (e - 1.0))

        return Tensor(out_val, _parents=(self,), _vjp=vjp)

    def __neg__(self) -> "Tensor":
        return self * -1.0

    def __radd__(self, other):
        return self + other

    def __rmul__(self, other):
        return self * other

    def __rsub__(self, other):
        return _as_tensor(other) - self

    def matmul(self, other: "Tensor") -> "Tensor":
        if self.value.shape[-1] != other.value.shape[-2]:
            raise ShapeError(
                f"matmul shape mismatch: {self.value.shape} @ {other.value.shape}"
            )
        out_val = self.value @ other.value

        def vjp(g: Array) -> None:
            if self.requires_grad:
                self._accumulate(
                    _unbroadcast(g @ np.swapaxes(other.value, -1, -2), self.shape)
                )
            if other.requires_grad:
                other._accumulate(
                    _unbroadcast(np.swapaxes(self.value, -1, -2) @ g, other.shape)
                )

        return Tensor(out_val, _parents=(self, other), _vjp=vjp)

    __matmul__ = matmul

    # -- elementwise nonlinearities ----------------------------------------

    def exp(self) -> "Tensor":
        out_val = np.exp(self.value)

        def vjp(g: Array) -> None:
            if self.requires_grad:
                self._accumulate(g * out_val)

        return Tensor(out_val, _parents=(self,), _vjp=vjp)

    def log(self) -> "Tensor":
        out_val = np.log(self.value)

        def vjp(g: Array) -> None:
            if self.requires_grad:
                self._accumulate(g / self.value)

        return Tensor(out_val, _parents=(self,), _vjp=vjp)

    def relu(self) -> "Tensor":
        mask = self.value > 0.0
        out_val = np.where(mask, self.value, 0.0)

        def vjp(g: Array) -> None:
            if self.requires_grad:
                self._accumulate(g * mask)

        return Tensor(out_val, _parents=(self,), _vjp=vjp)

    def sigmoid(self) -> "Tensor":
        s = _sigmoid_np(self.value)

        def vjp(g: Array) -> None:
            if self.requires_grad:
                self._accumulate(g * s * (1.0 - s))

        return Tensor(s, _parents=(self,), _vjp=vjp)

    def silu(self) -> "Tensor":
        s = _sigmoid_np(self.value)
        out_val = self.value * s

        def vjp(g: Array) -> None:
            if self.requires_grad:
                self._accumulate(g * (s + self.value * s * (1.0 - s)))

        return Tensor(out_val, _parents=(self,), _vjp=vjp)

    # -- reductions and shaping ---------------------------------------------

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        out_val = self.value.sum(axis=axis, keepdims=keepdims)

        def vjp(g: Array) -> None:
            if not self.requires_grad:
                return
            if axis is None:
                self._accumulate(np.broadcast_to(g, self.shape).copy())
            else:
                g_exp = g if keepdims else np.expand_dims(g, axis)
                self._accumulate(np.broadcast_to(g_exp, self.shape).copy())

        return Tensor(out_val, _parents=(self,), _vjp=vjp)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        n = self.value.size if axis is None else self.value.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def reshape(self, *shape) -> "Tensor":
        out_val = self.value.reshape(*shape)

        def vjp(g: Array) -> None:
            if self.requires_grad:
                self._accumulate(g.reshape(self.shape))

        return Tensor(out_val, _parents=(self,), _vjp=vjp)

    def swapaxes(self, a: int, b: int) -> "Tensor":
        out_val = np.swapaxes(self.value, a, b)

        def vjp(g: Array) -> None:
            if self.requires_grad:
                self._accumulate(np.swapaxes(g, a, b))

        return Tensor(out_val, _parents=(self,), _vjp=vjp)

    def take_rows(self, idx: Array) -> "Tensor":
        """Row gather (embedding lookup); gradient scatter-adds."""
        idx = np.asarray(idx, dtype=np.int64)
        out_val = self.value[idx]

        def vjp(g: Array) -> None:
            if self.requires_grad:
                acc = np.zeros_like(self.value)
                np.add.at(acc, idx, g)
                self._accumulate(acc)

        return Tensor(out_val, _parents=(self,), _vjp=vjp)

    def __getitem__(self, key) -> "Tensor":
        out_val = self.value[key]

        def vjp(g: Array) -> None:
            if self.requires_grad:
                acc = np.zeros_like(self.value)
                acc[key] = g
                self._accumulate(acc)

        return Tensor(out_val, _parents=(self,), _vjp=vjp)

    # -- composites ----------------------------------------------------------

    def softmax(self, axis: int = -1) -> "Tensor":
        # detached max keeps the exponentials bounded without touching grads
        shift = self - Tensor(self.value.max(axis=axis, keepdims=True))
        e = shift.exp()
        return e / e.sum(axis=axis, keepdims=True)

    def logsumexp(self, axis: int = -1) -> "Tensor":
        m = Tensor(self.value.max(axis=axis, keepdims=True))
        out = (self - m).exp().sum(axis=axis, keepdims=True).log() + m
        return out

    def item(self) -> float:
        return float(self.value)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _sigmoid_np(x: Array) -> Array:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = list(tensors)
    out_val = np.concatenate([t.value for t in tensors], axis=axis)
    sizes = [t.value.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def vjp(g: Array) -> None:
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                t._accumulate(g[tuple(sl)])

    return Tensor(out_val, _parents=tuple(tensors), _vjp=vjp)


def backward(out: Tensor) -> None:
    """Populate ``grad`` on every reachable ``requires_grad`` leaf.

    ``out`` must be scalar; each node's closure runs exactly once, in reverse
    topological order.
    """
    if out.value.size != 1:
        raise ShapeError(f"backward needs a scalar output, got shape {out.shape}")

    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(out, False)]
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
            if id(p) not in seen and p.requires_grad:
                stack.append((p, False))

    for node in order:
        node.grad = None
    out.grad = np.ones_like(out.value)
    for node in reversed(order):
        if node._vjp is not None and node.grad is not None:
            node._vjp(node.grad)


# ---------------------------------------------------------------------------
# finite differences


def fd_check(
    f: Callable[[Tensor], Tensor],
    point: Array,
    eps: float = 1e-6,
    indices: Iterable[int] | None = None,
) -> float:
    """Max relative error between tape gradients and central differences.

    ``f`` maps a 1-D parameter tensor to a scalar tensor. The relative error
    denominator is ``max(|analytic|, |numeric|, 1e-8)`` per coordinate.
    ``indices`` restricts the check to a coordinate subset (all by default).
    """
    point = np.asarray(point, dtype=np.float64).ravel()
    leaf = Tensor(point.copy(), requires_grad=True)
    out = f(leaf)
    backward(out)
    analytic = np.zeros_like(point) if leaf.grad is None else leaf.grad.copy()

    coords = range(point.size) if indices is None else indices
    worst = 0.0
    for i in coords:
        shifted = point.copy()
        shifted[i] += eps
        hi = float(f(Tensor(shifted)).value)
        shifted[i] = point[i] - eps
        lo = float(f(Tensor(shifted)).value)
        numeric = (hi - lo) / (2.0 * eps)
        denom = max(abs(analytic[i]), abs(numeric), 1e-8)
        worst = max(worst, abs(analytic[i] - numeric) / denom)
    return worst


# ---------------------------------------------------------------------------
# deterministic RNG


class Rng:
    """Seeded PCG64 stream; identical seeds give identical draws everywhere.

    Child streams (per tree, per worker, ...) derive from the parent seed and
    an integer key path, so parallel layouts cannot change the numbers.
    """

    ALGORITHM = "PCG64"

    def __init__(self, seed: int, _key: tuple = ()):
        self.seed = int(seed)
        self._key = _key
        self._gen = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(entropy=self.seed, spawn_key=_key))
        )

    def child(self, *key: int) -> "Rng":
        return Rng(self.seed, _key=self._key + tuple(int(k) for k in key))

    def normal(self, loc=0.0, scale=1.0, size=None) -> Array:
        return self._gen.normal(loc, scale, size)

    def uniform(self, low=0.0, high=1.0, size=None) -> Array:
        return self._gen.uniform(low, high, size)

    def integers(self, low, high=None, size=None) -> Array:
        return self._gen.integers(low, high, size)

    def permutation(self, n: int) -> Array:
        return self._gen.permutation(n)

    def choice(self, a, size=None, replace=True) -> Array:
        return self._gen.choice(a, size=size, replace=replace)

    def shuffle(self, a) -> None:
        self._gen.shuffle(a)


def parameter(rng: Rng, shape: tuple, scale: float) -> Tensor:
    """Gaussian-initialised trainable tensor."""
    if scale < 0:
        raise ConfigError(f"init scale must be >= 0, got {scale}")
    return Tensor(rng.normal(0.0, scale, size=shape), requires_grad=True)
