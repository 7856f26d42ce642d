"""Dense float64 tensors with reverse-mode automatic differentiation.

Define-by-run: every operation records its inputs and a vector-Jacobian
closure on the output tensor, so the graph is rebuilt on each forward pass.
`backward(loss)` topologically sorts the recorded graph from a scalar root
and accumulates adjoints into `.grad` (a plain numpy array) of every tensor
that requires one.

Broadcasting is deliberately restricted to bias-addition over the last
dimension; everything else is same-shape.
"""

from __future__ import annotations

import numpy as np

from .errors import GraphError, NumericError, ShapeError

# Additive mask fill whose exp underflows to exactly 0.0 in float64.
NEG_FILL = -1.0e30


class Tensor:
    """A numpy-backed n-d array of float64 plus autodiff bookkeeping."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_vjps", "_op")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.ascontiguousarray(data, dtype=np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._vjps = ()
        self._op = "leaf"

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a scalar, got shape {self.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self):
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def _result(op: str, data: np.ndarray, parents, vjps) -> Tensor:
    """Build an op output, keeping vjp closures only for grad-requiring parents."""
    if not np.isfinite(data).all():
        raise NumericError(f"{op} produced non-finite values")
    out = Tensor(data)
    kept_parents = []
    kept_vjps = []
    for p, vjp in zip(parents, vjps):
        if p.requires_grad:
            kept_parents.append(p)
            kept_vjps.append(vjp)
    if kept_parents:
        out.requires_grad = True
        out._parents = tuple(kept_parents)
        out._vjps = tuple(kept_vjps)
        out._op = op
    return out


class Graph:
    """Operation records of one forward pass, in topological order.

    Built lazily from a scalar root when `backward` is called; runs the
    adjoint accumulation exactly once.
    """

    def __init__(self, root: Tensor):
        self.root = root
        self.nodes = self._toposort(root)
        self._consumed = False

    @staticmethod
    def _toposort(root: Tensor):
        order = []
        visited = set()
        stack = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
        return order

    def run_backward(self):
        if self._consumed:
            raise GraphError("backward already ran on this graph; rebuild the forward pass first")
        self._consumed = True
        adjoint = {id(self.root): np.ones_like(self.root.data)}
        for node in reversed(self.nodes):
            out_grad = adjoint.pop(id(node), None)
            if out_grad is None:
                continue
            if node.requires_grad and not node._parents:
                # Leaf: accumulate across graphs until the caller resets it.
                if node.grad is None:
                    node.grad = out_grad.copy()
                else:
                    node.grad += out_grad
                continue
            for parent, vjp in zip(node._parents, node._vjps):
                contrib = vjp(out_grad)
                slot = adjoint.get(id(parent))
                if slot is None:
                    adjoint[id(parent)] = contrib
                else:
                    # Out-of-place: vjps may hand back aliases of out_grad.
                    adjoint[id(parent)] = slot + contrib


def backward(loss: Tensor) -> Graph:
    """Accumulate d(loss)/d(leaf) into `.grad` of every grad-requiring leaf.

    `loss` must be a scalar. Calling backward twice on the same forward
    pass is an error; the graph is single-use.
    """
    if loss.data.size != 1:
        raise GraphError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss._op == "backward-done":
        raise GraphError("backward already called on this loss")
    graph = Graph(loss)
    graph.run_backward()
    loss._op = "backward-done"
    return graph


# ---------------------------------------------------------------------------
# Random numbers


class SeededRng:
    """Deterministic random source (PCG64); same seed, same draws, any platform."""

    ALGORITHM = "pcg64"

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def uniform(self, low: float, high: float, shape) -> np.ndarray:
        return self._gen.uniform(low, high, size=shape)

    def normal(self, mean: float, sigma: float, shape) -> np.ndarray:
        return self._gen.normal(mean, sigma, size=shape)

    def integers(self, low: int, high: int, shape=None):
        return self._gen.integers(low, high, size=shape)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def fork(self, offset: int) -> "SeededRng":
        """Independent child stream, reproducible from (seed, offset)."""
        return SeededRng(self.seed * 1_000_003 + offset)


# ---------------------------------------------------------------------------
# Operations


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Standard 2-d matrix product [m,k] @ [k,n] -> [m,n]."""
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul needs 2-d operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.shape} vs {b.shape}")
    out = a.data @ b.data
    return _result(
        "matmul",
        out,
        (a, b),
        (lambda g: g @ b.data.T, lambda g: a.data.T @ g),
    )


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"transpose needs a 2-d tensor, got {a.shape}")
    return _result("transpose", a.data.T.copy(), (a,), (lambda g: g.T,))


def reshape(a: Tensor, shape) -> Tensor:
    old = a.shape
    return _result(
        "reshape",
        a.data.reshape(shape).copy(),
        (a,),
        (lambda g: g.reshape(old),),
    )


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; `b` may also be a 1-d bias broadcast over the last dim."""
    if a.shape == b.shape:
        return _result("add", a.data + b.data, (a, b), (lambda g: g, lambda g: g))
    if b.data.ndim == 1 and a.shape and a.shape[-1] == b.shape[0]:
        lead = tuple(range(a.data.ndim - 1))
        return _result(
            "add-bias",
            a.data + b.data,
            (a, b),
            (lambda g: g, lambda g: g.sum(axis=lead) if lead else g),
        )
    raise ShapeError(f"add shapes incompatible: {a.shape} vs {b.shape}")


def sub(a: Tensor, b: Tensor) -> Tensor:
    return add(a, scale(b, -1.0))


def mul(a: Tensor, b) -> Tensor:
    """Elementwise product of same-shape tensors, or tensor * python scalar."""
    if isinstance(b, Tensor):
        if a.shape != b.shape:
            raise ShapeError(f"mul shapes differ: {a.shape} vs {b.shape}")
        return _result(
            "mul",
            a.data * b.data,
            (a, b),
            (lambda g: g * b.data, lambda g: g * a.data),
        )
    return scale(a, float(b))


def scale(a: Tensor, s: float) -> Tensor:
    s = float(s)
    return _result("scale", a.data * s, (a,), (lambda g: g * s,))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _result("tanh", out, (a,), (lambda g: g * (1.0 - out * out),))


def sigmoid(a: Tensor) -> Tensor:
    # 0.5*(1+tanh(x/2)) is the stable logistic identity.
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _result("sigmoid", out, (a,), (lambda g: g * out * (1.0 - out),))


def relu(a: Tensor) -> Tensor:
    out = np.maximum(a.data, 0.0)
    return _result("relu", out, (a,), (lambda g: g * (a.data > 0.0),))


_GELU_C = np.sqrt(2.0 / np.pi)
_GELU_A = 0.044715


def gelu(a: Tensor) -> Tensor:
    """GELU, tanh approximation (the GPT-2 variant)."""
    x = a.data
    inner = _GELU_C * (x + _GELU_A * x**3)
    t = np.tanh(inner)
    out = 0.5 * x * (1.0 + t)

    def vjp(g):
        dinner = _GELU_C * (1.0 + 3.0 * _GELU_A * x * x)
        return g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner)

    return _result("gelu", out, (a,), (vjp,))


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0.0):
        raise NumericError("log needs strictly positive inputs")
    return _result("log", np.log(a.data), (a,), (lambda g: g / a.data,))


def clamp_min(a: Tensor, floor: float) -> Tensor:
    """max(a, floor); gradient passes where the input was not clamped."""
    floor = float(floor)
    keep = a.data >= floor
    return _result("clamp_min", np.maximum(a.data, floor), (a,), (lambda g: g * keep,))


def tsum(a: Tensor) -> Tensor:
    """Sum of all entries, as a scalar tensor."""
    shape = a.shape
    return _result(
        "sum",
        np.asarray(a.data.sum()),
        (a,),
        (lambda g: np.broadcast_to(g, shape).copy() if shape else g,),
    )


def softmax_lastdim(a: Tensor) -> Tensor:
    """Softmax along the last dimension, computed with max-subtraction."""
    if a.data.ndim == 0 or a.shape[-1] < 1:
        raise ShapeError(f"softmax needs a non-empty last dimension, got {a.shape}")
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        dot = (g * out).sum(axis=-1, keepdims=True)
        return out * (g - dot)

    return _result("softmax", out, (a,), (vjp,))


def log_softmax_lastdim(a: Tensor) -> Tensor:
    """Log-softmax along the last dimension via max-shifted log-sum-exp."""
    if a.data.ndim == 0 or a.shape[-1] < 1:
        raise ShapeError(f"log_softmax needs a non-empty last dimension, got {a.shape}")
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    out = shifted - lse

    def vjp(g):
        return g - np.exp(out) * g.sum(axis=-1, keepdims=True)

    return _result("log_softmax", out, (a,), (vjp,))


def layer_norm(a: Tensor, gain: Tensor, bias: Tensor, eps: float) -> Tensor:
    """Normalize each last-dim slice to zero mean / unit variance, then affine."""
    if a.data.ndim == 0 or a.shape[-1] < 1:
        raise ShapeError(f"layer_norm needs a non-empty last dimension, got {a.shape}")
    n = a.shape[-1]
    if gain.shape != (n,) or bias.shape != (n,):
        raise ShapeError(
            f"layer_norm gain/bias must match last dim {n}, got {gain.shape}/{bias.shape}"
        )
    mu = a.data.mean(axis=-1, keepdims=True)
    centered = a.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv
    out = xhat * gain.data + bias.data

    lead = tuple(range(a.data.ndim - 1))

    def vjp_a(g):
        gy = g * gain.data
        term = gy - gy.mean(axis=-1, keepdims=True) - xhat * (gy * xhat).mean(axis=-1, keepdims=True)
        return term * inv

    def vjp_gain(g):
        d = g * xhat
        return d.sum(axis=lead) if lead else d

    def vjp_bias(g):
        return g.sum(axis=lead) if lead else g

    return _result("layer_norm", out, (a, gain, bias), (vjp_a, vjp_gain, vjp_bias))


def causal_mask(length: int) -> np.ndarray:
    """Boolean [L,L] keep-mask: position i may see positions j <= i."""
    return np.tril(np.ones((length, length), dtype=bool))


def masked_fill(scores: Tensor, keep: np.ndarray) -> Tensor:
    """Replace score entries where `keep` is False with a -inf sentinel.

    The sentinel is a large negative constant whose exp underflows to
    exactly 0.0, so softmax assigns masked positions zero weight.
    """
    if scores.data.ndim < 2 or scores.shape[-1] != scores.shape[-2]:
        raise ShapeError(f"masked_fill needs square last-two dims, got {scores.shape}")
    if keep.shape != scores.shape[-2:]:
        raise ShapeError(f"mask shape {keep.shape} does not match scores {scores.shape}")
    out = np.where(keep, scores.data, NEG_FILL)
    return _result("masked_fill", out, (scores,), (lambda g: g * keep,))


def concat_lastdim(parts) -> Tensor:
    parts = list(parts)
    if not parts:
        raise ShapeError("concat_lastdim needs at least one tensor")
    lead = parts[0].shape[:-1]
    for p in parts:
        if p.shape[:-1] != lead:
            raise ShapeError(f"concat_lastdim leading dims differ: {[p.shape for p in parts]}")
    out = np.concatenate([p.data for p in parts], axis=-1)
    vjps = []
    start = 0
    for p in parts:
        width = p.shape[-1]
        vjps.append(lambda g, s=start, w=width: g[..., s : s + w])
        start += width
    return _result("concat_lastdim", out, tuple(parts), tuple(vjps))


def concat_rows(parts) -> Tensor:
    """Concatenate 2-d tensors along the first dimension."""
    parts = list(parts)
    if not parts:
        raise ShapeError("concat_rows needs at least one tensor")
    for p in parts:
        if p.data.ndim != 2 or p.shape[1] != parts[0].shape[1]:
            raise ShapeError(f"concat_rows needs matching 2-d tensors: {[p.shape for p in parts]}")
    out = np.concatenate([p.data for p in parts], axis=0)
    vjps = []
    start = 0
    for p in parts:
        height = p.shape[0]
        vjps.append(lambda g, s=start, h=height: g[s : s + h])
        start += height
    return _result("concat_rows", out, tuple(parts), tuple(vjps))


def slice_rows(a: Tensor, start: int, stop: int) -> Tensor:
    """First-dim slice of a 2-d tensor."""
    if a.data.ndim != 2:
        raise ShapeError(f"slice_rows needs a 2-d tensor, got {a.shape}")
    n = a.shape[0]
    if not (0 <= start < stop <= n):
        raise ShapeError(f"row slice [{start}:{stop}] out of range for {n} rows")
    pre, post = start, n - stop

    def vjp(g):
        return np.pad(g, ((pre, post), (0, 0)))

    return _result("slice_rows", a.data[start:stop].copy(), (a,), (vjp,))


def slice_lastdim(a: Tensor, start: int, stop: int) -> Tensor:
    width = a.shape[-1]
    if not (0 <= start < stop <= width):
        raise ShapeError(f"slice [{start}:{stop}] out of range for last dim {width}")
    pre = start
    post = width - stop

    def vjp(g):
        pad = [(0, 0)] * (g.ndim - 1) + [(pre, post)]
        return np.pad(g, pad)

    return _result("slice_lastdim", a.data[..., start:stop].copy(), (a,), (vjp,))


def embedding_lookup(table: Tensor, ids) -> Tensor:
    """Gather rows of a [V,E] table; row n of the result is table[ids[n]]."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim != 1 or ids.size == 0:
        raise ShapeError(f"embedding_lookup needs a non-empty 1-d id list, got shape {ids.shape}")
    vocab = table.shape[0]
    if ids.min() < 0 or ids.max() >= vocab:
        bad = int(ids[(ids < 0) | (ids >= vocab)][0])
        raise IndexError(f"token id {bad} out of range for table with {vocab} rows")

    def vjp(g):
        acc = np.zeros_like(table.data)
        np.add.at(acc, ids, g)
        return acc

    return _result("embedding_lookup", table.data[ids].copy(), (table,), (vjp,))


def gather_lastdim(a: Tensor, ids) -> Tensor:
    """Pick a[i, ids[i]] from a 2-d tensor, producing a 1-d result."""
    ids = np.asarray(ids, dtype=np.int64)
    if a.data.ndim != 2 or ids.shape != (a.shape[0],):
        raise ShapeError(f"gather_lastdim needs [N,C] and N ids, got {a.shape} and {ids.shape}")
    if ids.min() < 0 or ids.max() >= a.shape[1]:
        raise IndexError("gather index out of range")
    rows = np.arange(a.shape[0])

    def vjp(g):
        acc = np.zeros_like(a.data)
        acc[rows, ids] = g
        return acc

    return _result("gather_lastdim", a.data[rows, ids].copy(), (a,), (vjp,))
