"""Dense 2-D tensors with reverse-mode differentiation.

Every trainable quantity in the pipeline is a 2-D float64 ``Tensor``.
Operations executed inside a ``Tape`` context record themselves; a single
backward sweep over the recorded ops (in exact reverse order) accumulates
gradients into ``Tensor.grad`` buffers.  Outside a tape the same functions
run as plain numpy evaluations, which is what the finite-difference probes
use.

Piecewise ops (relu, minimum, clamp_min, reduce_min/max) are differentiated
with one-sided subgradients; they publish their branch decisions through
``note_pattern`` so the finite-difference harness can exclude probe points
that straddle a kink.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import ContractError, DomainError, NumericError, ShapeError

Array = np.ndarray

_ACTIVE_TAPE: "Tape | None" = None
_PATTERN_SINK: "list[Array] | None" = None


class Tensor:
    """A 2-D float64 array, optionally tracked for differentiation."""

    __slots__ = ("values", "requires_grad", "grad")

    def __init__(self, values, requires_grad: bool = False):
        arr = np.atleast_2d(np.asarray(values, dtype=np.float64))
        if arr.ndim != 2:
            raise ShapeError(f"tensors are 2-D, got ndim={arr.ndim}")
        _check_finite(arr, "tensor construction")
        self.values = np.ascontiguousarray(arr)
        self.requires_grad = bool(requires_grad)
        self.grad: Array | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape  # type: ignore[return-value]

    def item(self) -> float:
        if self.values.size != 1:
            raise ContractError(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self.values[0, 0])

    def accumulate_grad(self, g: Array) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.values)
        self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # Small operator sugar; everything routes through the module functions.
    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        return mul(self, other)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)


def constant(values) -> Tensor:
    return Tensor(values, requires_grad=False)


@dataclass
class _Node:
    out: Tensor
    backward: Callable[[Array], None]


class Tape:
    """Ordered record of differentiable ops; replayed in reverse on backward."""

    def __init__(self):
        self._nodes: list[_Node] = []
        self._prev: Tape | None = None

    def __enter__(self) -> "Tape":
        global _ACTIVE_TAPE
        self._prev = _ACTIVE_TAPE
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, *exc) -> None:
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = self._prev
        self._prev = None

    def __len__(self) -> int:
        return len(self._nodes)

    def record(self, out: Tensor, backward: Callable[[Array], None]) -> None:
        self._nodes.append(_Node(out, backward))

    def clear(self) -> None:
        self._nodes.clear()

    def backward(self, loss: Tensor, params: Mapping[str, Tensor] | None = None) -> dict[str, Array]:
        """Accumulate d(loss)/d(leaf) into grad buffers.

        Repeated calls without ``zero_grad`` keep accumulating.  Parameters
        that never touched the tape receive zero gradients so the returned
        map always covers ``params``.
        """
        if loss.shape != (1, 1):
            raise ContractError(f"backward needs a scalar loss, got {loss.shape}")
        loss.accumulate_grad(np.ones((1, 1)))
        for node in reversed(self._nodes):
            g = node.out.grad
            if g is None:
                continue
            node.backward(g)
        # Only leaves keep gradients across calls; op outputs are transient,
        # otherwise a second backward would compound stale buffers.
        for node in self._nodes:
            node.out.grad = None
        grads: dict[str, Array] = {}
        if params is not None:
            for name, p in params.items():
                if p.grad is None:
                    p.grad = np.zeros_like(p.values)
                grads[name] = p.grad
        return grads


@contextlib.contextmanager
def record_patterns(sink: list[Array]):
    """Collect branch decisions of piecewise ops into ``sink``."""
    global _PATTERN_SINK
    prev = _PATTERN_SINK
    _PATTERN_SINK = sink
    try:
        yield sink
    finally:
        _PATTERN_SINK = prev


def note_pattern(bits) -> None:
    """Publish a branch decision (any array) for kink detection."""
    if _PATTERN_SINK is not None:
        _PATTERN_SINK.append(np.asarray(bits).copy().ravel())


def _check_finite(arr: Array, what: str) -> None:
    if not np.isfinite(arr).all():
        raise NumericError(f"non-finite values produced by {what}")


def _result(values: Array, what: str, inputs: Sequence[Tensor],
            backward: Callable[[Tensor, Array], None]) -> Tensor:
    """Wrap an op result; record on the active tape when gradients are needed."""
    _check_finite(values, what)
    out = Tensor.__new__(Tensor)
    out.values = np.ascontiguousarray(np.atleast_2d(values))
    out.grad = None
    out.requires_grad = _ACTIVE_TAPE is not None and any(t.requires_grad for t in inputs)
    if out.requires_grad:
        assert _ACTIVE_TAPE is not None
        _ACTIVE_TAPE.record(out, lambda g: backward(out, g))
    return out


def _unbroadcast(g: Array, shape: tuple[int, int]) -> Array:
    if g.shape == shape:
        return g
    out = g
    if shape[0] == 1 and g.shape[0] != 1:
        out = out.sum(axis=0, keepdims=True)
    if shape[1] == 1 and g.shape[1] != 1:
        out = out.sum(axis=1, keepdims=True)
    if out.shape != shape:
        raise ShapeError(f"cannot reduce grad {g.shape} to {shape}")
    return out


def _binary_shapes(a: Tensor, b: Tensor, op: str) -> None:
    ra, ca = a.shape
    rb, cb = b.shape
    if (ra != rb and 1 not in (ra, rb)) or (ca != cb and 1 not in (ca, cb)):
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not align")


# ---------------------------------------------------------------------------
# primitives


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: {a.shape} x {b.shape}")
    av, bv = a.values, b.values

    def bwd(out: Tensor, g: Array) -> None:
        if a.requires_grad:
            a.accumulate_grad(g @ bv.T)
        if b.requires_grad:
            b.accumulate_grad(av.T @ g)

    return _result(av @ bv, "matmul", (a, b), bwd)


def transpose(t: Tensor) -> Tensor:
    def bwd(out: Tensor, g: Array) -> None:
        t.accumulate_grad(g.T)

    return _result(t.values.T.copy(), "transpose", (t,), bwd)


def add(a: Tensor, b: Tensor) -> Tensor:
    _binary_shapes(a, b, "add")

    def bwd(out: Tensor, g: Array) -> None:
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g, b.shape))

    return _result(a.values + b.values, "add", (a, b), bwd)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _binary_shapes(a, b, "sub")

    def bwd(out: Tensor, g: Array) -> None:
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(-g, b.shape))

    return _result(a.values - b.values, "sub", (a, b), bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _binary_shapes(a, b, "mul")
    av, bv = a.values, b.values

    def bwd(out: Tensor, g: Array) -> None:
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g * bv, a.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g * av, b.shape))

    return _result(av * bv, "mul", (a, b), bwd)


def div(a: Tensor, b: Tensor) -> Tensor:
    _binary_shapes(a, b, "div")
    if np.any(b.values == 0.0):
        raise DomainError("div: zero denominator")
    av, bv = a.values, b.values

    def bwd(out: Tensor, g: Array) -> None:
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g / bv, a.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(-g * av / (bv * bv), b.shape))

    return _result(av / bv, "div", (a, b), bwd)


def minimum(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise min; ties route the subgradient to ``a``."""
    _binary_shapes(a, b, "minimum")
    take_a = a.values <= b.values
    note_pattern(a.values < b.values)

    def bwd(out: Tensor, g: Array) -> None:
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g * take_a, a.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g * ~take_a, b.shape))

    return _result(np.minimum(a.values, b.values), "minimum", (a, b), bwd)


def scale(t: Tensor, s: float) -> Tensor:
    s = float(s)

    def bwd(out: Tensor, g: Array) -> None:
        t.accumulate_grad(g * s)

    return _result(t.values * s, "scale", (t,), bwd)


def relu(t: Tensor) -> Tensor:
    """max(0, x); the subgradient at 0 is 0."""
    pos = t.values > 0
    note_pattern(pos)

    def bwd(out: Tensor, g: Array) -> None:
        t.accumulate_grad(g * pos)

    return _result(np.maximum(t.values, 0.0), "relu", (t,), bwd)


def exp(t: Tensor) -> Tensor:
    with np.errstate(over="ignore"):  # overflow surfaces as NumericError below
        out_v = np.exp(t.values)

    def bwd(out: Tensor, g: Array) -> None:
        t.accumulate_grad(g * out_v)

    return _result(out_v, "exp", (t,), bwd)


def log(t: Tensor) -> Tensor:
    if np.any(t.values <= 0.0):
        raise DomainError("log: operand must be strictly positive")
    tv = t.values

    def bwd(out: Tensor, g: Array) -> None:
        t.accumulate_grad(g / tv)

    return _result(np.log(tv), "log", (t,), bwd)


def sqrt(t: Tensor) -> Tensor:
    if np.any(t.values < 0.0):
        raise DomainError("sqrt: operand must be nonnegative")
    out_v = np.sqrt(t.values)

    def bwd(out: Tensor, g: Array) -> None:
        # Derivative blows up at 0; callers guard with an epsilon shift.
        t.accumulate_grad(g * (0.5 / out_v))

    return _result(out_v, "sqrt", (t,), bwd)


def sigmoid(t: Tensor) -> Tensor:
    x = t.values
    out_v = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                     np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))

    def bwd(out: Tensor, g: Array) -> None:
        t.accumulate_grad(g * out_v * (1.0 - out_v))

    return _result(out_v, "sigmoid", (t,), bwd)


def softplus(t: Tensor) -> Tensor:
    """log(1 + e^x), computed without overflow."""
    x = t.values
    out_v = np.log1p(np.exp(-np.abs(x))) + np.maximum(x, 0.0)
    sig = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                   np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))

    def bwd(out: Tensor, g: Array) -> None:
        t.accumulate_grad(g * sig)

    return _result(out_v, "softplus", (t,), bwd)


def clamp_min(t: Tensor, floor: float) -> Tensor:
    """max(x, floor); the subgradient is zero on the clamped side."""
    keep = t.values > floor
    note_pattern(keep)

    def bwd(out: Tensor, g: Array) -> None:
        t.accumulate_grad(g * keep)

    return _result(np.maximum(t.values, floor), "clamp_min", (t,), bwd)


def tsum(t: Tensor, axis: int | None = None) -> Tensor:
    """Sum over all entries (1x1), rows (axis=1 -> nx1) or columns (axis=0 -> 1xm)."""
    if t.values.size == 0:
        raise ContractError("sum of an empty tensor")
    if axis is None:
        out_v = t.values.sum().reshape(1, 1)
    elif axis in (0, 1):
        out_v = t.values.sum(axis=axis, keepdims=True)
    else:
        raise ContractError(f"sum: bad axis {axis}")

    def bwd(out: Tensor, g: Array) -> None:
        t.accumulate_grad(np.broadcast_to(g, t.shape).copy() if g.shape != t.shape else g)

    return _result(out_v, "sum", (t,), bwd)


def tmean(t: Tensor) -> Tensor:
    return scale(tsum(t), 1.0 / t.values.size)


def row_logsumexp(t: Tensor, mask: Array | None = None) -> Tensor:
    """Per-row log-sum-exp with max-subtraction; nx1 output.

    With ``mask`` (0/1 array, same shape) only masked entries enter the sum,
    but the shift stays the full-row max so that masked and unmasked results
    share one shift and their difference is exact.
    """
    if t.values.size == 0:
        raise ContractError("logsumexp of an empty tensor")
    x = t.values
    m = x.max(axis=1, keepdims=True)
    e = np.exp(x - m)
    if mask is not None:
        if mask.shape != x.shape:
            raise ShapeError(f"logsumexp mask {mask.shape} vs {x.shape}")
        e = e * mask
    z = e.sum(axis=1, keepdims=True)
    if np.any(z <= 0.0):
        raise DomainError("logsumexp: masked row sums to zero")
    out_v = m + np.log(z)
    soft = e / z

    def bwd(out: Tensor, g: Array) -> None:
        t.accumulate_grad(g * soft)

    return _result(out_v, "row_logsumexp", (t,), bwd)


def row_softmax(t: Tensor) -> Tensor:
    x = t.values
    e = np.exp(x - x.max(axis=1, keepdims=True))
    s = e / e.sum(axis=1, keepdims=True)

    def bwd(out: Tensor, g: Array) -> None:
        dot = (g * s).sum(axis=1, keepdims=True)
        t.accumulate_grad((g - dot) * s)

    return _result(s, "row_softmax", (t,), bwd)


def take_rows(t: Tensor, idx) -> Tensor:
    idx = np.asarray(idx, dtype=np.intp)
    if idx.ndim != 1:
        raise ContractError("take_rows: index list must be 1-D")
    if idx.size and (idx.min() < 0 or idx.max() >= t.shape[0]):
        raise ShapeError("take_rows: index out of range")

    def bwd(out: Tensor, g: Array) -> None:
        buf = np.zeros_like(t.values)
        np.add.at(buf, idx, g)
        t.accumulate_grad(buf)

    return _result(t.values[idx], "take_rows", (t,), bwd)


def take_diag(t: Tensor) -> Tensor:
    n, m = t.shape
    if n != m:
        raise ShapeError(f"take_diag needs a square tensor, got {t.shape}")

    def bwd(out: Tensor, g: Array) -> None:
        buf = np.zeros_like(t.values)
        np.fill_diagonal(buf, g[:, 0])
        t.accumulate_grad(buf)

    return _result(np.diag(t.values).reshape(n, 1), "take_diag", (t,), bwd)


def _reduce_extremum(t: Tensor, use_min: bool) -> Tensor:
    if t.values.size == 0:
        raise ContractError("reduce over an empty tensor")
    flat = t.values.ravel()
    k = int(np.argmin(flat) if use_min else np.argmax(flat))
    note_pattern(np.array([k]))

    def bwd(out: Tensor, g: Array) -> None:
        buf = np.zeros_like(t.values)
        buf.ravel()[k] = g[0, 0]
        t.accumulate_grad(buf)

    name = "reduce_min" if use_min else "reduce_max"
    return _result(np.array([[flat[k]]]), name, (t,), bwd)


def reduce_min(t: Tensor) -> Tensor:
    """Global minimum (1x1); subgradient routed to the first minimizer."""
    return _reduce_extremum(t, use_min=True)


def reduce_max(t: Tensor) -> Tensor:
    """Global maximum (1x1); subgradient routed to the first maximizer."""
    return _reduce_extremum(t, use_min=False)


def scatter_pairs(values: Tensor, pairs: Array, n: int) -> Tensor:
    """Build a symmetric n x n matrix from per-edge values.

    ``pairs`` is an (E, 2) index array with i < j; entry e lands at both
    (i, j) and (j, i).  The gradient of each edge value is the sum of the
    two mirrored output gradients.
    """
    pairs = np.asarray(pairs, dtype=np.intp)
    if values.shape != (len(pairs), 1):
        raise ShapeError(f"scatter_pairs: values {values.shape} vs {len(pairs)} pairs")
    out_v = np.zeros((n, n))
    i, j = pairs[:, 0], pairs[:, 1]
    out_v[i, j] = values.values[:, 0]
    out_v[j, i] = values.values[:, 0]

    def bwd(out: Tensor, g: Array) -> None:
        values.accumulate_grad((g[i, j] + g[j, i]).reshape(-1, 1))

    return _result(out_v, "scatter_pairs", (values,), bwd)


# ---------------------------------------------------------------------------
# finite-difference checking


@dataclass
class FiniteDiffReport:
    """Result of a central-difference sweep over every parameter entry.

    ``excluded_kink`` counts probe points whose two evaluations took
    different branches somewhere; ``excluded_noise`` counts entries whose
    analytic and numeric derivatives both sit below what float64 central
    differences can resolve for this objective.
    """

    max_rel_error: float
    per_param: dict[str, float] = field(default_factory=dict)
    checked: int = 0
    excluded_kink: int = 0
    excluded_noise: int = 0

    @property
    def excluded(self) -> int:
        return self.excluded_kink + self.excluded_noise

    def worst(self) -> str:
        items = sorted(self.per_param.items(), key=lambda kv: -kv[1])
        return ", ".join(f"{k}={v:.3e}" for k, v in items[:4])


def _eval_scalar(f: Callable[[Mapping[str, Tensor]], Tensor],
                 params: Mapping[str, Tensor],
                 sink: list[Array] | None = None) -> float:
    with record_patterns(sink if sink is not None else []):
        out = f(params)
    v = out.item()
    if not np.isfinite(v):
        raise NumericError("finite_diff_check: objective is not finite")
    return v


def _patterns_equal(a: list[Array], b: list[Array]) -> bool:
    if len(a) != len(b):
        return False
    return all(np.array_equal(x, y) for x, y in zip(a, b))


def finite_diff_check(f: Callable[[Mapping[str, Tensor]], Tensor],
                      params: Mapping[str, Tensor],
                      step: float = 1e-5) -> FiniteDiffReport:
    """Compare tape gradients of ``f`` against central differences.

    ``f`` must rebuild its whole computation from ``params`` on every call
    (any sampling must be frozen by the caller).  The relative error
    denominator is max(|analytic|, |numeric|, 1e-8).

    Two kinds of entries are excluded instead of checked: probe pairs
    whose evaluations disagree on a branch decision (the probe straddles a
    kink), and entries where analytic and numeric derivatives both fall
    under the float64 cancellation floor eps * |f| / step, below which a
    central difference carries no information.  A large analytic gradient
    opposite a tiny numeric one (or vice versa) is never excluded.
    """
    if step <= 0:
        raise ContractError("finite_diff_check: step must be positive")
    for p in params.values():
        p.zero_grad()
    with Tape() as tape:
        loss = f(params)
        base = loss.item()
        if not np.isfinite(base):
            raise NumericError("finite_diff_check: objective is not finite")
        grads = tape.backward(loss, params)
    noise_floor = 64.0 * np.finfo(np.float64).eps * max(1.0, abs(base)) / step

    report = FiniteDiffReport(max_rel_error=0.0)
    for name, p in params.items():
        worst = 0.0
        flat = p.values.ravel()
        gflat = grads[name].ravel()
        for k in range(flat.size):
            orig = flat[k]
            pat_hi: list[Array] = []
            pat_lo: list[Array] = []
            flat[k] = orig + step
            hi = _eval_scalar(f, params, pat_hi)
            flat[k] = orig - step
            lo = _eval_scalar(f, params, pat_lo)
            flat[k] = orig
            if not _patterns_equal(pat_hi, pat_lo):
                report.excluded_kink += 1
                continue
            numeric = (hi - lo) / (2.0 * step)
            if abs(gflat[k]) < noise_floor and abs(numeric) < noise_floor:
                report.excluded_noise += 1
                continue
            rel = abs(gflat[k] - numeric) / max(abs(gflat[k]), abs(numeric), 1e-8)
            worst = max(worst, rel)
            report.checked += 1
        report.per_param[name] = worst
        report.max_rel_error = max(report.max_rel_error, worst)
    return report
