"""Tensores densos em float64 com diferenciação automática em modo reverso.

A fita (Tape) grava cada operação de forma ansiosa, na ordem em que é
executada; `backward` percorre a fita de trás para frente uma única vez.
Tensores são imutáveis; uma fita não deve ser usada por duas threads ao
mesmo tempo.
"""

import numpy as np

from engine.errors import DomainError, ShapeMismatchError


class Tensor:
    """Array float64 (ndim >= 1) opcionalmente ligado a um nó da fita"""

    __slots__ = ("data", "tape", "node_id")

    def __init__(self, data, tape=None, node_id=None):
        data = np.asarray(data, dtype=np.float64)
        if data.ndim == 0:
            data = data.reshape(1)
        self.data = data
        self.tape = tape
        self.node_id = node_id

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    @property
    def tracked(self):
        return self.tape is not None

    def item(self):
        return float(self.data.reshape(-1)[0])

    def __repr__(self):
        status = f"node={self.node_id}" if self.tracked else "const"
        return f"Tensor(shape={self.shape}, {status})"

    # Açúcar sintático sobre `apply`
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, other)
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self):
        return transpose(self)


class Node:
    __slots__ = ("node_id", "kind", "inputs", "shape", "saved")

    def __init__(self, node_id, kind, inputs, shape, saved):
        self.node_id = node_id
        self.kind = kind
        self.inputs = inputs
        self.shape = shape
        self.saved = saved


class Tape:
    """Lista topológica de operações gravadas"""

    def __init__(self):
        self.nodes = []

    def __len__(self):
        return len(self.nodes)

    def _record(self, kind, inputs, shape, saved):
        node = Node(len(self.nodes), kind, tuple(inputs), shape, saved)
        self.nodes.append(node)
        return node.node_id

    def leaf(self, array):
        """Registra uma folha (parâmetro ou entrada diferenciável)"""
        data = np.asarray(array, dtype=np.float64)
        tensor = Tensor(data)
        tensor.tape = self
        tensor.node_id = self._record("leaf", (), tensor.shape, None)
        return tensor

    def bind(self, params):
        """Cria uma folha por parâmetro, preservando a ordem de declaração"""
        return {name: self.leaf(value) for name, value in params.items()}


def constant(array):
    return Tensor(array)


def as_tensor(value):
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def detach(tensor):
    """Mesmo valor, sem caminho de gradiente"""
    return Tensor(as_tensor(tensor).data)


# ---------------------------------------------------------------------------
# Regras de forward e de vector-Jacobian por tipo de operação
# ---------------------------------------------------------------------------

def _unbroadcast(grad, shape):
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def _broadcast_shape(kind, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatchError(kind, a.shape, b.shape) from None


def _check_axis(kind, x, axis):
    if axis is not None and not -x.ndim <= axis < x.ndim:
        raise ShapeMismatchError(f"{kind}(axis={axis})", x.shape)


def _fwd_matmul(xs, attrs):
    a, b = xs
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatchError("matmul", a.shape, b.shape)
    return a @ b, {"a": a, "b": b}


def _vjp_matmul(g, saved):
    return g @ saved["b"].T, saved["a"].T @ g


def _fwd_add(xs, attrs):
    a, b = xs
    _broadcast_shape("add", a, b)
    return a + b, {"shapes": (a.shape, b.shape)}


def _vjp_add(g, saved):
    sa, sb = saved["shapes"]
    return _unbroadcast(g, sa), _unbroadcast(g, sb)


def _fwd_sub(xs, attrs):
    a, b = xs
    _broadcast_shape("sub", a, b)
    return a - b, {"shapes": (a.shape, b.shape)}


def _vjp_sub(g, saved):
    sa, sb = saved["shapes"]
    return _unbroadcast(g, sa), -_unbroadcast(g, sb)


def _fwd_mul(xs, attrs):
    a, b = xs
    _broadcast_shape("mul", a, b)
    return a * b, {"a": a, "b": b}


def _vjp_mul(g, saved):
    a, b = saved["a"], saved["b"]
    return _unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)


def _fwd_scale(xs, attrs):
    factor = float(attrs["factor"])
    return xs[0] * factor, {"factor": factor}


def _vjp_scale(g, saved):
    return (g * saved["factor"],)


def _fwd_relu(xs, attrs):
    x = xs[0]
    mask = x > 0
    return np.where(mask, x, 0.0), {"mask": mask}


def _vjp_relu(g, saved):
    return (g * saved["mask"],)


def _fwd_exp(xs, attrs):
    out = np.exp(xs[0])
    return out, {"out": out}


def _vjp_exp(g, saved):
    return (g * saved["out"],)


def _fwd_log(xs, attrs):
    x = xs[0]
    if np.any(x <= 0):
        raise DomainError(f"log: entrada não positiva (mínimo {x.min():.6g})")
    return np.log(x), {"x": x}


def _vjp_log(g, saved):
    return (g / saved["x"],)


def _fwd_softmax(xs, attrs):
    x = xs[0]
    axis = attrs.get("axis", -1)
    _check_axis("softmax", x, axis)
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)
    return out, {"out": out, "axis": axis}


def _vjp_softmax(g, saved):
    s, axis = saved["out"], saved["axis"]
    return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)


def _fwd_l2_normalize(xs, attrs):
    x = xs[0]
    axis = attrs.get("axis", -1)
    _check_axis("l2_normalize", x, axis)
    norm = np.sqrt((x * x).sum(axis=axis, keepdims=True))
    if np.any(norm == 0):
        raise DomainError("l2_normalize: vetor nulo não pode ser normalizado")
    out = x / norm
    return out, {"out": out, "norm": norm, "axis": axis}


def _vjp_l2_normalize(g, saved):
    y, norm, axis = saved["out"], saved["norm"], saved["axis"]
    return ((g - y * (g * y).sum(axis=axis, keepdims=True)) / norm,)


def _reduce(kind, x, axis, fn):
    _check_axis(kind, x, axis)
    if axis is None:
        keep = (1,) * x.ndim
        out = np.array([fn(x)])
    else:
        keep = list(x.shape)
        keep[axis] = 1
        keep = tuple(keep)
        out = fn(x, axis=axis)
    count = x.size if axis is None else x.shape[axis]
    return out, {"in_shape": x.shape, "keep": keep, "count": count}


def _fwd_sum(xs, attrs):
    return _reduce("sum", xs[0], attrs.get("axis"), np.sum)


def _vjp_sum(g, saved):
    return (np.broadcast_to(g.reshape(saved["keep"]), saved["in_shape"]).copy(),)


def _fwd_mean(xs, attrs):
    return _reduce("mean", xs[0], attrs.get("axis"), np.mean)


def _vjp_mean(g, saved):
    grad = np.broadcast_to(g.reshape(saved["keep"]), saved["in_shape"]) / saved["count"]
    return (grad,)


def _fwd_transpose(xs, attrs):
    x = xs[0]
    axes = attrs.get("axes")
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    if sorted(axes) != list(range(x.ndim)):
        raise ShapeMismatchError(f"transpose(axes={axes})", x.shape)
    return np.transpose(x, axes).copy(), {"axes": tuple(axes)}


def _vjp_transpose(g, saved):
    return (np.transpose(g, np.argsort(saved["axes"])),)


def _fwd_concat(xs, attrs):
    axis = attrs.get("axis", 0)
    first = xs[0]
    for other in xs[1:]:
        same_rank = other.ndim == first.ndim
        rest_ok = same_rank and all(
            other.shape[d] == first.shape[d] for d in range(first.ndim) if d != axis % first.ndim
        )
        if not rest_ok:
            raise ShapeMismatchError(f"concat(axis={axis})", *(x.shape for x in xs))
    sizes = [x.shape[axis] for x in xs]
    return np.concatenate(xs, axis=axis), {"sizes": sizes, "axis": axis}


def _vjp_concat(g, saved):
    cuts = np.cumsum(saved["sizes"])[:-1]
    return tuple(np.split(g, cuts, axis=saved["axis"]))


def _fwd_slice(xs, attrs):
    x = xs[0]
    index = attrs["index"]
    try:
        raw = np.array(x[index], dtype=np.float64)
    except IndexError:
        raise ShapeMismatchError(f"slice({index!r})", x.shape) from None
    return raw.reshape(raw.shape or (1,)), {"in_shape": x.shape, "index": index, "raw_shape": raw.shape}


def _vjp_slice(g, saved):
    grad = np.zeros(saved["in_shape"])
    np.add.at(grad, saved["index"], g.reshape(saved["raw_shape"]))
    return (grad,)


def _fwd_reshape(xs, attrs):
    x = xs[0]
    shape = tuple(attrs["shape"])
    try:
        out = x.reshape(shape)
    except ValueError:
        raise ShapeMismatchError(f"reshape({shape})", x.shape) from None
    return out.copy(), {"in_shape": x.shape}


def _vjp_reshape(g, saved):
    return (g.reshape(saved["in_shape"]),)


_RULES = {
    "matmul": (_fwd_matmul, _vjp_matmul),
    "add": (_fwd_add, _vjp_add),
    "sub": (_fwd_sub, _vjp_sub),
    "mul": (_fwd_mul, _vjp_mul),
    "scale": (_fwd_scale, _vjp_scale),
    "relu": (_fwd_relu, _vjp_relu),
    "exp": (_fwd_exp, _vjp_exp),
    "log": (_fwd_log, _vjp_log),
    "softmax": (_fwd_softmax, _vjp_softmax),
    "l2_normalize": (_fwd_l2_normalize, _vjp_l2_normalize),
    "sum": (_fwd_sum, _vjp_sum),
    "mean": (_fwd_mean, _vjp_mean),
    "transpose": (_fwd_transpose, _vjp_transpose),
    "concat": (_fwd_concat, _vjp_concat),
    "slice": (_fwd_slice, _vjp_slice),
    "reshape": (_fwd_reshape, _vjp_reshape),
}


def apply(kind, inputs, attrs=None):
    """Executa `kind` sobre `inputs`; grava na fita se alguma entrada for rastreada"""
    if kind not in _RULES:
        raise ValueError(f"operação desconhecida: {kind}")
    attrs = attrs or {}
    inputs = [as_tensor(t) for t in inputs]
    tapes = {id(t.tape): t.tape for t in inputs if t.tape is not None}
    if len(tapes) > 1:
        raise ValueError(f"{kind}: entradas pertencem a fitas diferentes")

    forward, _ = _RULES[kind]
    out, saved = forward([t.data for t in inputs], attrs)
    result = Tensor(out)
    if tapes:
        tape = next(iter(tapes.values()))
        result.tape = tape
        result.node_id = tape._record(kind, [t.node_id for t in inputs], result.shape, saved)
    return result


def backward(tape, root):
    """d(root)/d(folha) para todas as folhas da fita; fan-out acumula por soma"""
    root = as_tensor(root)
    if root.size != 1:
        raise ShapeMismatchError("backward (raiz não escalar)", root.shape)
    grads = {}
    if root.tape is tape and root.node_id is not None:
        grads[root.node_id] = np.ones(root.shape)
        for node in reversed(tape.nodes[: root.node_id + 1]):
            if node.kind == "leaf":
                continue
            g = grads.pop(node.node_id, None)
            if g is None:
                continue
            _, vjp = _RULES[node.kind]
            for input_id, input_grad in zip(node.inputs, vjp(g, node.saved)):
                if input_id is None:
                    continue
                if input_id in grads:
                    grads[input_id] = grads[input_id] + input_grad
                else:
                    grads[input_id] = np.array(input_grad, dtype=np.float64)

    return {
        node.node_id: grads.get(node.node_id, np.zeros(node.shape))
        for node in tape.nodes
        if node.kind == "leaf"
    }


def grad_check(f, x, eps=1e-6):
    """Erro relativo máximo entre o gradiente da fita e diferenças centrais"""
    x = np.asarray(x, dtype=np.float64)
    tape = Tape()
    xt = tape.leaf(x)
    out = as_tensor(f(xt))
    if not np.all(np.isfinite(out.data)):
        raise DomainError("grad_check: f(x) não é finita")
    analytic = backward(tape, out)[xt.node_id]

    numeric = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        plus = x.copy()
        minus = x.copy()
        plus[idx] += eps
        minus[idx] -= eps
        f_plus = as_tensor(f(Tensor(plus))).item()
        f_minus = as_tensor(f(Tensor(minus))).item()
        numeric[idx] = (f_plus - f_minus) / (2.0 * eps)

    if x.size == 0:
        return 0.0
    return float(np.max(np.abs(analytic - numeric) / np.maximum(1.0, np.abs(numeric))))


# ---------------------------------------------------------------------------
# Atalhos
# ---------------------------------------------------------------------------

def matmul(a, b):
    return apply("matmul", [a, b])


def add(a, b):
    return apply("add", [a, b])


def sub(a, b):
    return apply("sub", [a, b])


def mul(a, b):
    return apply("mul", [a, b])


def scale(a, factor):
    return apply("scale", [a], {"factor": factor})


def relu(a):
    return apply("relu", [a])


def exp(a):
    return apply("exp", [a])


def log(a):
    return apply("log", [a])


def softmax(a, axis=-1):
    return apply("softmax", [a], {"axis": axis})


def l2_normalize(a, axis=-1):
    return apply("l2_normalize", [a], {"axis": axis})


def sum(a, axis=None):  # noqa: A001 - espelha o nome da operação
    return apply("sum", [a], {"axis": axis})


def mean(a, axis=None):
    return apply("mean", [a], {"axis": axis})


def transpose(a, axes=None):
    return apply("transpose", [a], {"axes": axes})


def concat(tensors, axis=0):
    return apply("concat", list(tensors), {"axis": axis})


def slice(a, index):  # noqa: A001
    return apply("slice", [a], {"index": index})


def reshape(a, shape):
    return apply("reshape", [a], {"shape": shape})
