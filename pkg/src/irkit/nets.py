"""Neural models on the reverse-mode tape: linear, MLP, and transformers.

Four interchangeable architectures share one interface (``forward`` to
logits, ``predict`` to probabilities or values):

``linear``
    one-hot categoricals plus raw numerics through a single affine map.
``mlp``
    small categorical embeddings concatenated with numerics, two hidden
    ReLU layers.
``tab_transformer``
    categorical embeddings contextualised by pre-norm transformer blocks;
    numerics are layer-normed and joined at the head.
``tab_kanet``
    every numeric feature becomes a token through a learned spline unit
    (B-spline basis expansion plus a SiLU skip), categorical embeddings
    supply the remaining tokens, and all tokens pass through the same
    transformer stack before mean pooling.

Spline tokens use quadratic B-splines on a fixed grid. Outside the grid the
curve continues linearly with the edge slope:

    S(x) = sum_i c_i * (B_i(clip(x)) + B_i'(clip(x)) * (x - clip(x)))

The basis values are constants on the tape; gradients flow only into the
coefficients, so standardized inputs never move the grid.

Every forward pass checks activations for non-finite values and names the
failing stage, turning silent NaN propagation into a diagnosable fault.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigError, DomainError, NumericFault, ShapeError
from .numcore import Rng, Tensor, concat, parameter, _sigmoid_np


# ---------------------------------------------------------------------------
# B-spline basis


def _knots(grid_min: float, grid_max: float, n_intervals: int, order: int) -> np.ndarray:
    d = order - 1
    h = (grid_max - grid_min) / n_intervals
    return grid_min + h * np.arange(-d, n_intervals + d + 1)


def _cox_de_boor(x: np.ndarray, t: np.ndarray, order: int) -> np.ndarray:
    """Order-k bases over knot vector t; shape (len(x), len(t) - order)."""
    B = ((x[:, None] >= t[None, :-1]) & (x[:, None] < t[None, 1:])).astype(np.float64)
    for k in range(2, order + 1):
        nb = t.size - k
        ti = t[:nb]
        ti1 = t[1 : 1 + nb]
        tik1 = t[k - 1 : k - 1 + nb]
        tik = t[k : k + nb]
        left = (x[:, None] - ti) / (tik1 - ti) * B[:, :nb]
        right = (tik - x[:, None]) / (tik - ti1) * B[:, 1 : nb + 1]
        B = left + right
    return B


def _check_grid(grid_min: float, grid_max: float, n_intervals: int, order: int) -> None:
    if order < 1:
        raise ConfigError(f"order must be >= 1, got {order}")
    if n_intervals < 1 or not grid_max > grid_min:
        raise ConfigError(f"bad grid ({grid_min}, {grid_max}, {n_intervals})")


def bspline_basis(
    x,
    grid_min: float = -3.0,
    grid_max: float = 3.0,
    n_intervals: int = 8,
    order: int = 3,
) -> np.ndarray:
    """Uniform B-spline basis values, shape (len(x), n_intervals + order - 1).

    Order counts like spline order: 1 is the interval indicator, 2 the hat
    function, 3 the quadratic. The basis partitions unity on the grid.
    """
    _check_grid(grid_min, grid_max, n_intervals, order)
    x = np.asarray(x, dtype=np.float64).ravel()
    t = _knots(grid_min, grid_max, n_intervals, order)
    B = _cox_de_boor(x, t, order)
    if order == 1:
        # no knot extension at order 1: close the right edge by hand
        B[x == grid_max, -1] = 1.0
    return B


def bspline_basis_and_deriv(
    x,
    grid_min: float = -3.0,
    grid_max: float = 3.0,
    n_intervals: int = 8,
    order: int = 3,
) -> tuple[np.ndarray, np.ndarray]:
    """Basis values and their first derivatives at x."""
    B = bspline_basis(x, grid_min, grid_max, n_intervals, order)
    if order == 1:
        return B, np.zeros_like(B)
    x = np.asarray(x, dtype=np.float64).ravel()
    t = _knots(grid_min, grid_max, n_intervals, order)
    # d/dx B_{i,k} = (k-1) * (B_{i,k-1}/(t_{i+k-1}-t_i) - B_{i+1,k-1}/(t_{i+k}-t_{i+1}))
    # with the lower-order bases taken over the same extended knot vector
    lower = _cox_de_boor(x, t, order - 1)
    nb = t.size - order
    i = np.arange(nb)
    den1 = t[i + order - 1] - t[i]
    den2 = t[i + order] - t[i + 1]
    d = (order - 1) * (lower[:, :nb] / den1 - lower[:, 1 : nb + 1] / den2)
    return B, d


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class NetConfig:
    embed_dim: int = 64
    heads: int = 8
    layers: int = 3
    ff_mult: int = 4
    mlp_hidden: int = 64
    mlp_cat_dim: int = 8
    grid_min: float = -3.0
    grid_max: float = 3.0
    grid_size: int = 8
    spline_order: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.embed_dim < 1 or self.heads < 1 or self.layers < 1:
            raise ConfigError("embed_dim, heads and layers must be positive")
        if self.embed_dim % self.heads != 0:
            raise ConfigError(
                f"heads must divide embed_dim, got {self.heads} and {self.embed_dim}"
            )
        if self.grid_size < 1 or not self.grid_max > self.grid_min:
            raise ConfigError("spline grid must have positive width and size")
        if self.spline_order < 1:
            raise ConfigError(f"spline_order must be >= 1, got {self.spline_order}")


NET_KINDS = ("linear", "mlp", "tab_transformer", "tab_kanet")


def _finite(stage: str, t: Tensor) -> Tensor:
    if not np.all(np.isfinite(t.value)):
        raise NumericFault(f"non-finite activations in {stage}")
    return t


def _zeros(shape) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)


def _ones(shape) -> Tensor:
    return Tensor(np.ones(shape), requires_grad=True)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    m = x.mean(axis=-1, keepdims=True)
    d = x - m
    v = (d * d).mean(axis=-1, keepdims=True)
    return d / ((v + eps) ** 0.5) * gamma + beta


class _ParamStore:
    """Ordered named parameters; order fixes the serialized layout."""

    def __init__(self, seed: int):
        self._rng = Rng(seed)
        self._counter = 0
        self.named: list[tuple[str, Tensor]] = []

    def new(self, name: str, shape: tuple, scale: float) -> Tensor:
        t = parameter(self._rng.child(self._counter), shape, scale)
        self._counter += 1
        self.named.append((name, t))
        return t

    def add(self, name: str, t: Tensor) -> Tensor:
        self._counter += 1
        self.named.append((name, t))
        return t


class _Linear:
    def __init__(self, store: _ParamStore, prefix: str, d_in: int, d_out: int):
        self.w = store.new(f"{prefix}.w", (d_in, d_out), 1.0 / np.sqrt(d_in))
        self.b = store.add(f"{prefix}.b", _zeros((d_out,)))

    def __call__(self, x: Tensor) -> Tensor:
        return x.matmul(self.w) + self.b


class TransformerBlock:
    """Pre-norm residual block: attention then a 4x feed-forward."""

    def __init__(self, store: _ParamStore, prefix: str, dim: int, heads: int, ff_mult: int):
        self.dim = dim
        self.heads = heads
        self.head_dim = dim // heads
        self.ln1_g = store.add(f"{prefix}.ln1.g", _ones((dim,)))
        self.ln1_b = store.add(f"{prefix}.ln1.b", _zeros((dim,)))
        self.wq = _Linear(store, f"{prefix}.q", dim, dim)
        self.wk = _Linear(store, f"{prefix}.k", dim, dim)
        self.wv = _Linear(store, f"{prefix}.v", dim, dim)
        self.wo = _Linear(store, f"{prefix}.o", dim, dim)
        self.ln2_g = store.add(f"{prefix}.ln2.g", _ones((dim,)))
        self.ln2_b = store.add(f"{prefix}.ln2.b", _zeros((dim,)))
        self.ff1 = _Linear(store, f"{prefix}.ff1", dim, ff_mult * dim)
        self.ff2 = _Linear(store, f"{prefix}.ff2", ff_mult * dim, dim)
        self.last_attn: np.ndarray | None = None

    def _split(self, t: Tensor, n: int, tokens: int) -> Tensor:
        return t.reshape(n, tokens, self.heads, self.head_dim).swapaxes(1, 2)

    def __call__(self, x: Tensor) -> Tensor:
        n, tokens, _ = x.shape
        h = layer_norm(x, self.ln1_g, self.ln1_b)
        q = self._split(self.wq(h), n, tokens)
        k = self._split(self.wk(h), n, tokens)
        v = self._split(self.wv(h), n, tokens)
        scores = q.matmul(k.swapaxes(2, 3)) * (1.0 / np.sqrt(self.head_dim))
        attn = scores.softmax(axis=-1)
        self.last_attn = attn.value
        ctx = attn.matmul(v).swapaxes(1, 2).reshape(n, tokens, self.dim)
        x = x + self.wo(ctx)
        h2 = layer_norm(x, self.ln2_g, self.ln2_b)
        return x + self.ff2(self.ff1(h2).relu())


class Net:
    """Shared surface: named parameters, logits, and scalar predictions."""

    kind: str = ""

    def __init__(self, k_num: int, cat_cards: tuple[int, ...], out_dim: int, config: NetConfig):
        if k_num < 1:
            raise ConfigError("need at least one numeric feature")
        if out_dim not in (1, 2):
            raise ConfigError(f"out_dim must be 1 or 2, got {out_dim}")
        if any(c < 1 for c in cat_cards):
            raise ConfigError(f"cat_cards must be positive, got {cat_cards}")
        self.k_num = k_num
        self.cat_cards = tuple(int(c) for c in cat_cards)
        self.out_dim = out_dim
        self.config = config
        self.store = _ParamStore(config.seed)

    # -- parameter access ----------------------------------------------------

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.store.named]

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        return list(self.store.named)

    def n_parameters(self) -> int:
        return sum(t.value.size for t in self.parameters())

    # -- data validation -----------------------------------------------------

    def _check_batch(self, num, cat) -> tuple[np.ndarray, np.ndarray]:
        num = np.asarray(num, dtype=np.float64)
        cat = np.asarray(cat, dtype=np.int64)
        if num.ndim != 2 or num.shape[1] != self.k_num:
            raise ShapeError(f"numerics must be (n, {self.k_num}), got {num.shape}")
        if cat.ndim != 2 or cat.shape[1] != len(self.cat_cards):
            raise ShapeError(
                f"categoricals must be (n, {len(self.cat_cards)}), got {cat.shape}"
            )
        if num.shape[0] != cat.shape[0]:
            raise ShapeError(f"batch sizes differ: {num.shape[0]} vs {cat.shape[0]}")
        if not np.all(np.isfinite(num)):
            raise DomainError("non-finite numeric inputs")
        for j, card in enumerate(self.cat_cards):
            if cat.shape[0] and (cat[:, j].min() < 0 or cat[:, j].max() >= card):
                raise DomainError(f"categorical column {j} outside [0, {card})")
        return num, cat

    def forward(self, num, cat) -> Tensor:
        raise NotImplementedError

    def predict(self, num, cat) -> np.ndarray:
        """Positive-class probability (out_dim 2) or raw value (out_dim 1)."""
        logits = self.forward(num, cat).value
        if self.out_dim == 1:
            return logits.ravel()
        z = logits - logits.max(axis=-1, keepdims=True)
        e = np.exp(z)
        return e[:, 1] / e.sum(axis=-1)


class LinearNet(Net):
    kind = "linear"

    def __init__(self, k_num, cat_cards, out_dim, config):
        super().__init__(k_num, cat_cards, out_dim, config)
        d_in = k_num + sum(self.cat_cards)
        self.affine = _Linear(self.store, "affine", d_in, out_dim)

    def forward(self, num, cat) -> Tensor:
        num, cat = self._check_batch(num, cat)
        n = num.shape[0]
        cols = [num]
        for j, card in enumerate(self.cat_cards):
            onehot = np.zeros((n, card))
            onehot[np.arange(n), cat[:, j]] = 1.0
            cols.append(onehot)
        x = Tensor(np.concatenate(cols, axis=1))
        return _finite("affine", self.affine(x))


class MlpNet(Net):
    kind = "mlp"

    def __init__(self, k_num, cat_cards, out_dim, config):
        super().__init__(k_num, cat_cards, out_dim, config)
        d_cat = config.mlp_cat_dim
        self.tables = [
            self.store.new(f"embed.{j}", (card, d_cat), 1.0 / np.sqrt(d_cat))
            for j, card in enumerate(self.cat_cards)
        ]
        d_in = k_num + d_cat * len(self.cat_cards)
        self.l1 = _Linear(self.store, "hidden1", d_in, config.mlp_hidden)
        self.l2 = _Linear(self.store, "hidden2", config.mlp_hidden, config.mlp_hidden)
        self.head = _Linear(self.store, "head", config.mlp_hidden, out_dim)

    def forward(self, num, cat) -> Tensor:
        num, cat = self._check_batch(num, cat)
        parts = [Tensor(num)]
        for j, table in enumerate(self.tables):
            parts.append(table.take_rows(cat[:, j]))
        x = concat(parts, axis=-1) if len(parts) > 1 else parts[0]
        h = _finite("hidden1", self.l1(x).relu())
        h = _finite("hidden2", self.l2(h).relu())
        return _finite("head", self.head(h))


class _TokenTransformer(Net):
    """Common transformer stack and categorical token embeddings."""

    def __init__(self, k_num, cat_cards, out_dim, config):
        super().__init__(k_num, cat_cards, out_dim, config)
        dim = config.embed_dim
        self.cat_tables = [
            self.store.new(f"token.{j}", (card, dim), 1.0 / np.sqrt(dim))
            for j, card in enumerate(self.cat_cards)
        ]
        self.blocks = [
            TransformerBlock(self.store, f"block.{i}", dim, config.heads, config.ff_mult)
            for i in range(config.layers)
        ]

    def _cat_tokens(self, cat: np.ndarray) -> list[Tensor]:
        n = cat.shape[0]
        dim = self.config.embed_dim
        return [
            table.take_rows(cat[:, j]).reshape(n, 1, dim)
            for j, table in enumerate(self.cat_tables)
        ]

    def _run_blocks(self, x: Tensor) -> Tensor:
        for i, block in enumerate(self.blocks):
            x = _finite(f"block.{i}", block(x))
        return x


class TabTransformerNet(_TokenTransformer):
    kind = "tab_transformer"

    def __init__(self, k_num, cat_cards, out_dim, config):
        super().__init__(k_num, cat_cards, out_dim, config)
        self.num_ln_g = self.store.add("num_ln.g", _ones((k_num,)))
        self.num_ln_b = self.store.add("num_ln.b", _zeros((k_num,)))
        d_head = k_num + config.embed_dim * len(self.cat_cards)
        self.h1 = _Linear(self.store, "head1", d_head, config.mlp_hidden)
        self.h2 = _Linear(self.store, "head2", config.mlp_hidden, out_dim)

    def forward(self, num, cat) -> Tensor:
        num, cat = self._check_batch(num, cat)
        n = num.shape[0]
        parts = []
        if self.cat_cards:
            x = concat(self._cat_tokens(cat), axis=1)
            x = self._run_blocks(x)
            parts.append(x.reshape(n, self.config.embed_dim * len(self.cat_cards)))
        parts.append(layer_norm(Tensor(num), self.num_ln_g, self.num_ln_b))
        joined = concat(parts, axis=-1) if len(parts) > 1 else parts[0]
        h = _finite("head1", self.h1(joined).relu())
        return _finite("head2", self.h2(h))


class TabKanNet(_TokenTransformer):
    kind = "tab_kanet"

    def __init__(self, k_num, cat_cards, out_dim, config):
        super().__init__(k_num, cat_cards, out_dim, config)
        dim = config.embed_dim
        nb = config.grid_size + config.spline_order - 1
        self.n_basis = nb
        self.kan_c = self.store.new("kan.c", (k_num, nb, dim), 0.1 / np.sqrt(nb))
        self.kan_wb = self.store.add("kan.wb", _ones((k_num, 1, dim)))
        self.kan_ws = self.store.add("kan.ws", _ones((k_num, 1, dim)))
        self.h1 = _Linear(self.store, "head1", dim, config.mlp_hidden)
        self.h2 = _Linear(self.store, "head2", config.mlp_hidden, out_dim)

    def numeric_tokens(self, num: np.ndarray) -> Tensor:
        """(n, k_num, dim) tokens; basis values are tape constants."""
        cfg = self.config
        cols = num.T  # (k, n)
        flat = cols.ravel()
        clipped = np.clip(flat, cfg.grid_min, cfg.grid_max)
        B, dB = bspline_basis_and_deriv(
            clipped, cfg.grid_min, cfg.grid_max, cfg.grid_size, cfg.spline_order
        )
        # linear continuation outside the grid, exact basis inside
        Beff = B + dB * (flat - clipped)[:, None]
        Beff = Beff.reshape(self.k_num, -1, self.n_basis)
        spline = Tensor(Beff).matmul(self.kan_c) * self.kan_ws  # (k, n, dim)
        su = (flat * _sigmoid_np(flat)).reshape(self.k_num, -1, 1)
        tokens = spline + Tensor(su) * self.kan_wb
        return tokens.swapaxes(0, 1)  # (n, k, dim)

    def forward(self, num, cat) -> Tensor:
        num, cat = self._check_batch(num, cat)
        tokens = [_finite("kan_tokens", self.numeric_tokens(num))]
        if self.cat_cards:
            tokens.extend(self._cat_tokens(cat))
        x = concat(tokens, axis=1) if len(tokens) > 1 else tokens[0]
        x = self._run_blocks(x)
        pooled = x.mean(axis=1)
        h = _finite("head1", self.h1(pooled).relu())
        return _finite("head2", self.h2(h))

    @property
    def token_count(self) -> int:
        return self.k_num + len(self.cat_cards)


_KIND_TO_CLASS = {
    "linear": LinearNet,
    "mlp": MlpNet,
    "tab_transformer": TabTransformerNet,
    "tab_kanet": TabKanNet,
}


def build_model(
    kind: str,
    k_num: int,
    cat_cards: tuple[int, ...],
    out_dim: int,
    config: NetConfig = NetConfig(),
) -> Net:
    if kind not in _KIND_TO_CLASS:
        raise ConfigError(f"unknown model kind {kind!r}; choose from {NET_KINDS}")
    return _KIND_TO_CLASS[kind](k_num, cat_cards, out_dim, config)


# ---------------------------------------------------------------------------
# serialization: one JSON header line, then raw float64 parameter bytes


def save_net(net: Net, path) -> None:
    header = {
        "kind": net.kind,
        "k_num": net.k_num,
        "cat_cards": list(net.cat_cards),
        "out_dim": net.out_dim,
        "config": asdict(net.config),
        "params": [
            {"name": name, "shape": list(t.shape)} for name, t in net.named_parameters()
        ],
        "dtype": "float64",
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        for _, t in net.named_parameters():
            fh.write(np.ascontiguousarray(t.value).tobytes())


def load_net(path) -> Net:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        blob = fh.read()
    net = build_model(
        header["kind"],
        header["k_num"],
        tuple(header["cat_cards"]),
        header["out_dim"],
        NetConfig(**header["config"]),
    )
    stored = {p["name"]: tuple(p["shape"]) for p in header["params"]}
    ours = {name: t for name, t in net.named_parameters()}
    if list(stored) != list(ours):
        raise ConfigError(f"{path}: parameter layout does not match {header['kind']}")
    offset = 0
    for name, t in net.named_parameters():
        size = t.value.size * 8
        chunk = blob[offset : offset + size]
        if len(chunk) != size:
            raise ConfigError(f"{path}: truncated parameter blob at {name}")
        t.value = np.frombuffer(chunk, dtype=np.float64).reshape(t.shape).copy()
        offset += size
    if offset != len(blob):
        raise ConfigError(f"{path}: {len(blob) - offset} trailing bytes in blob")
    return net
