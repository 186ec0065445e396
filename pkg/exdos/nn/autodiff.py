"""最小反向模式自动微分（numpy float64）。

说明：
- 每个算子把 (输入, 输出, 反传函数) 记到输出张量上；Tape 上下文激活时同时追加到 tape.records
- backward 从损失出发收集可达记录，按记录序号倒序各执行一次
- 每个算子结果都做有限性检查，NaN/Inf 直接抛 NumericFaultError
- 广播只支持行向量偏置（add/sub）和列向量缩放（mul），其余要求形状一致
- tape 是线程内对象：不同线程各用各的 tape，互不干扰
"""
from __future__ import annotations

import itertools
import threading
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Iterator, Sequence

import numpy as np

from exdos.utils.errors import NumericFaultError, ShapeError


_SEQ = itertools.count()
_LOCAL = threading.local()

BackwardFn = Callable[[np.ndarray], Sequence[np.ndarray | None]]


@dataclass
class _Record:
    seq: int
    op: str
    inputs: tuple["Tensor", ...]
    output: "Tensor"
    backward: BackwardFn


class Tape:
    """记录算子的上下文管理器；退出后记录仍挂在输出张量上，可以照常 backward。"""

    def __init__(self) -> None:
        self.records: list[_Record] = []

    def __enter__(self) -> "Tape":
        _stack().append(self)
        return self

    def __exit__(self, *exc: object) -> None:
        _stack().pop()

    def __len__(self) -> int:
        return len(self.records)


def _stack() -> list[Tape]:
    if not hasattr(_LOCAL, "tapes"):
        _LOCAL.tapes = []
    return _LOCAL.tapes


def _grad_enabled() -> bool:
    return getattr(_LOCAL, "grad_enabled", True)


@contextmanager
def no_grad() -> Iterator[None]:
    previous = _grad_enabled()
    _LOCAL.grad_enabled = False
    try:
        yield
    finally:
        _LOCAL.grad_enabled = previous


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name", "_record")

    def __init__(self, data: object, *, requires_grad: bool = False, name: str = "") -> None:
        arr = np.array(data, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise NumericFaultError(f"non-finite value in tensor {name or '<anonymous>'}")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.name = name
        self._record: _Record | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def size(self) -> int:
        return int(self.data.size)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.size != 1:
            raise ShapeError("item", self.shape, ())
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False, name=self.name)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        return mul(self, other)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def as_tensor(value: object) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _result(op: str, value: np.ndarray, inputs: tuple[Tensor, ...], backward_fn: BackwardFn) -> Tensor:
    if not np.all(np.isfinite(value)):
        raise NumericFaultError(f"non-finite value produced by {op}")
    out = Tensor.__new__(Tensor)
    out.data = value
    out.grad = None
    out.name = op
    out._record = None
    out.requires_grad = _grad_enabled() and any(t.requires_grad for t in inputs)
    if out.requires_grad:
        record = _Record(next(_SEQ), op, inputs, out, backward_fn)
        out._record = record
        stack = _stack()
        if stack:
            stack[-1].records.append(record)
    return out


def backward(loss: Tensor) -> None:
    """从标量损失反传，把梯度累加到所有可达叶子张量的 grad 上。"""

    if loss.size != 1:
        raise ShapeError("backward (loss must be scalar)", loss.shape, ())
    if loss._record is None:
        if loss.requires_grad:
            loss.grad = np.ones_like(loss.data) if loss.grad is None else loss.grad + 1.0
        return

    records: dict[int, _Record] = {}
    stack = [loss._record]
    while stack:
        rec = stack.pop()
        if rec.seq in records:
            continue
        records[rec.seq] = rec
        stack.extend(t._record for t in rec.inputs if t._record is not None and t._record.seq not in records)

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for seq in sorted(records, reverse=True):
        rec = records[seq]
        g_out = grads.pop(id(rec.output), None)
        if g_out is None:
            continue
        for tensor, g in zip(rec.inputs, rec.backward(g_out)):
            if g is None or not tensor.requires_grad:
                continue
            if g.shape != tensor.data.shape:
                g = g.reshape(tensor.data.shape)
            if tensor._record is None:
                tensor.grad = g.copy() if tensor.grad is None else tensor.grad + g
            else:
                key = id(tensor)
                grads[key] = grads[key] + g if key in grads else g


# ---------------------------------------------------------------------------
# 基本算子
# ---------------------------------------------------------------------------


def _require_2d(op: str, *tensors: Tensor) -> None:
    for t in tensors:
        if t.data.ndim != 2:
            raise ShapeError(op, *(x.shape for x in tensors))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    _require_2d("matmul", a, b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", a.shape, b.shape)
    return _result("matmul", a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


def _row_broadcast(op: str, a: Tensor, b: Tensor) -> bool:
    """b 是否为按行广播的偏置（(m,) 或 (1, m) 对应 (n, m)）。"""

    if a.shape == b.shape:
        return False
    if a.data.ndim == 2 and b.size == a.shape[1] and b.shape in {(a.shape[1],), (1, a.shape[1])}:
        return True
    raise ShapeError(op, a.shape, b.shape)


def add(a: Tensor, b: Tensor) -> Tensor:
    if _row_broadcast("add", a, b):
        value = a.data + b.data.reshape(1, -1)
        return _result("add", value, (a, b), lambda g: (g, g.sum(axis=0)))
    return _result("add", a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    if _row_broadcast("sub", a, b):
        value = a.data - b.data.reshape(1, -1)
        return _result("sub", value, (a, b), lambda g: (g, -g.sum(axis=0)))
    return _result("sub", a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    """逐元素乘；b 可以是与 a 同行数的列向量 (n, 1)。"""

    if a.shape == b.shape:
        return _result("mul", a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))
    if a.data.ndim == 2 and b.shape == (a.shape[0], 1):
        return _result(
            "mul",
            a.data * b.data,
            (a, b),
            lambda g: (g * b.data, (g * a.data).sum(axis=1, keepdims=True)),
        )
    raise ShapeError("mul", a.shape, b.shape)


def scale(a: Tensor, factor: float) -> Tensor:
    c = float(factor)
    return _result("scale", a.data * c, (a,), lambda g: (g * c,))


def tanh(a: Tensor) -> Tensor:
    value = np.tanh(a.data)
    return _result("tanh", value, (a,), lambda g: (g * (1.0 - value * value),))


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)

    def _back(g: np.ndarray) -> tuple[np.ndarray]:
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)

    return _result("softmax", s, (a,), _back)


def row_sum(a: Tensor) -> Tensor:
    """(n, m) -> (n, 1)。"""

    _require_2d("row_sum", a)
    m = a.shape[1]
    return _result("row_sum", a.data.sum(axis=1, keepdims=True), (a,), lambda g: (np.repeat(g, m, axis=1),))


def sum(a: Tensor, axis: int | None = None) -> Tensor:  # noqa: A001
    if axis is None:
        return _result("sum", np.array(a.data.sum()), (a,), lambda g: (np.full(a.shape, float(g)),))
    value = a.data.sum(axis=axis, keepdims=True)
    return _result("sum", value, (a,), lambda g: (np.broadcast_to(g, a.shape).copy(),))


def mean(a: Tensor, axis: int | None = None) -> Tensor:
    count = a.size if axis is None else a.shape[axis]
    if count == 0:
        raise ShapeError("mean of empty tensor", a.shape)
    return scale(sum(a, axis=axis), 1.0 / count)


def reduce_max(a: Tensor, axis: int = 0) -> Tensor:
    if a.shape[axis] == 0:
        raise ShapeError("reduce_max of empty tensor", a.shape)
    idx = np.argmax(a.data, axis=axis)
    value = a.data.max(axis=axis, keepdims=True)

    def _back(g: np.ndarray) -> tuple[np.ndarray]:
        out = np.zeros_like(a.data)
        expanded = np.expand_dims(idx, axis=axis)
        np.put_along_axis(out, expanded, g, axis=axis)
        return (out,)

    return _result("reduce_max", value, (a,), _back)


def squared_l2_diff(a: Tensor, b: Tensor) -> Tensor:
    """sum((a - b)^2)，标量。"""

    if a.shape != b.shape:
        raise ShapeError("squared_l2_diff", a.shape, b.shape)
    diff = a.data - b.data
    return _result(
        "squared_l2_diff",
        np.array(float(np.sum(diff * diff))),
        (a, b),
        lambda g: (2.0 * float(g) * diff, -2.0 * float(g) * diff),
    )


def cross_entropy_with_softmax(logits: Tensor, target: object) -> Tensor:
    """softmax 交叉熵（按行取平均）；target 为同形状 one-hot。"""

    y = np.asarray(target.data if isinstance(target, Tensor) else target, dtype=np.float64)
    z = logits.data.reshape(1, -1) if logits.data.ndim == 1 else logits.data
    y2 = y.reshape(z.shape) if y.size == z.size else None
    if y2 is None:
        raise ShapeError("cross_entropy_with_softmax", logits.shape, y.shape)
    shifted = z - z.max(axis=1, keepdims=True)
    log_s = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    rows = z.shape[0]
    loss = -float(np.sum(y2 * log_s)) / rows
    probs = np.exp(log_s)
    return _result(
        "cross_entropy_with_softmax",
        np.array(max(loss, 0.0)),
        (logits,),
        lambda g: ((float(g) * (probs - y2) / rows).reshape(logits.shape),),
    )


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    if not tensors:
        raise ShapeError("concat of nothing")
    _require_2d("concat", *tensors)
    other = 1 - axis
    if len({t.shape[other] for t in tensors}) != 1:
        raise ShapeError("concat", *(t.shape for t in tensors))
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    value = np.concatenate([t.data for t in tensors], axis=axis)
    return _result("concat", value, tuple(tensors), lambda g: tuple(np.split(g, splits, axis=axis)))


def index_rows(a: Tensor, idx: Sequence[int] | np.ndarray) -> Tensor:
    rows = np.asarray(idx, dtype=np.int64).reshape(-1)
    if rows.size and (rows.min() < 0 or rows.max() >= a.shape[0]):
        raise ShapeError("index_rows (index out of range)", a.shape, rows.shape)

    def _back(g: np.ndarray) -> tuple[np.ndarray]:
        out = np.zeros_like(a.data)
        np.add.at(out, rows, g)
        return (out,)

    return _result("index_rows", a.data[rows], (a,), _back)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    try:
        value = a.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError("reshape", a.shape, tuple(shape)) from exc
    return _result("reshape", value, (a,), lambda g: (g.reshape(a.shape),))


def segment_sum(a: Tensor, segment_ids: Sequence[int] | np.ndarray, num_segments: int) -> Tensor:
    """按 segment_ids 把行累加到 num_segments 行。"""

    _require_2d("segment_sum", a)
    seg = np.asarray(segment_ids, dtype=np.int64).reshape(-1)
    if seg.shape[0] != a.shape[0]:
        raise ShapeError("segment_sum", a.shape, seg.shape)
    out = np.zeros((num_segments, a.shape[1]))
    np.add.at(out, seg, a.data)
    return _result("segment_sum", out, (a,), lambda g: (g[seg],))


def segment_softmax(a: Tensor, segment_ids: Sequence[int] | np.ndarray, num_segments: int) -> Tensor:
    """(E, 1) 列向量在每个 segment 内做 softmax。"""

    if a.data.ndim != 2 or a.shape[1] != 1:
        raise ShapeError("segment_softmax (expects a column)", a.shape)
    seg = np.asarray(segment_ids, dtype=np.int64).reshape(-1)
    if seg.shape[0] != a.shape[0]:
        raise ShapeError("segment_softmax", a.shape, seg.shape)
    col = a.data[:, 0]
    seg_max = np.full(num_segments, -np.inf)
    np.maximum.at(seg_max, seg, col)
    e = np.exp(col - seg_max[seg])
    denom = np.zeros(num_segments)
    np.add.at(denom, seg, e)
    s = (e / denom[seg]).reshape(-1, 1)

    def _back(g: np.ndarray) -> tuple[np.ndarray]:
        gs = (g * s)[:, 0]
        acc = np.zeros(num_segments)
        np.add.at(acc, seg, gs)
        return (s * (g - acc[seg].reshape(-1, 1)),)

    return _result("segment_softmax", s, (a,), _back)


def signed_power(x: Tensor, p: Tensor) -> Tensor:
    """sign(x) * |x|^p，对 x 和标量指数 p 都可导（x = 0 处导数取 0）。"""

    if p.size != 1:
        raise ShapeError("signed_power (exponent must be scalar)", x.shape, p.shape)
    exponent = float(p.data.reshape(-1)[0])
    absx = np.abs(x.data)
    nonzero = absx > 0
    safe = np.where(nonzero, absx, 1.0)
    powered = np.where(nonzero, safe**exponent, 0.0)
    value = np.sign(x.data) * powered

    def _back(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        dx = np.where(nonzero, exponent * safe ** (exponent - 1.0), 0.0)
        dp = np.where(nonzero, value * np.log(safe), 0.0)
        return g * dx, np.array(float(np.sum(g * dp))).reshape(p.shape)

    return _result("signed_power", value, (x, p), _back)


def reciprocal(a: Tensor) -> Tensor:
    if np.any(a.data == 0):
        raise NumericFaultError("reciprocal of zero")
    value = 1.0 / a.data
    return _result("reciprocal", value, (a,), lambda g: (-g * value * value,))


# ---------------------------------------------------------------------------
# 测试辅助
# ---------------------------------------------------------------------------


def numeric_gradient(
    fn: Callable[[], Tensor | float],
    tensor: Tensor,
    *,
    h: float = 1e-5,
) -> np.ndarray:
    """中心差分数值梯度（逐个扁平坐标）。"""

    flat = tensor.data.reshape(-1)
    grad = np.zeros_like(flat)
    with no_grad():
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + h
            plus = fn()
            flat[i] = original - h
            minus = fn()
            flat[i] = original
            plus_v = plus.item() if isinstance(plus, Tensor) else float(plus)
            minus_v = minus.item() if isinstance(minus, Tensor) else float(minus)
            grad[i] = (plus_v - minus_v) / (2.0 * h)
    return grad.reshape(tensor.shape)
