"""Scalar reverse-mode automatic differentiation on a dynamic tape.

This is the reference gradient engine: every model family can be rolled out
on this tape and differentiated exactly, which is what the fast batched
kernels are validated against. The op set is deliberately small (arithmetic,
sin/cos/atan2, relu, sqrt, square, gradient truncation); anything a model
needs must be expressed in these ops so that one finite-difference harness
covers the whole surface.

Forward values are checked for finiteness as they are produced and domain
violations (division by a vanishing denominator, sqrt of a negative,
atan2 at the origin) raise :class:`~wheeldyn.errors.NumericError` instead of
propagating garbage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericError

_DIV_EPS = 1e-12


def _finite(data, op):
    if not math.isfinite(data):
        raise NumericError(f"non-finite result from '{op}': {data!r}")
    return data


class Value:
    """One scalar node on the tape."""

    __slots__ = ("data", "grad", "_prev", "_backward")

    def __init__(self, data, _prev=(), _op="leaf"):
        self.data = _finite(float(data), _op)
        self.grad = 0.0
        self._prev = _prev
        self._backward = None

    def __repr__(self):
        return f"Value({self.data}, grad={self.grad})"

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other):
        other = other if isinstance(other, Value) else Value(other)
        out = Value(self.data + other.data, (self, other), "add")

        def _bw():
            self.grad += out.grad
            other.grad += out.grad
        out._backward = _bw
        return out

    __radd__ = __add__

    def __neg__(self):
        out = Value(-self.data, (self,), "neg")

        def _bw():
            self.grad -= out.grad
        out._backward = _bw
        return out

    def __sub__(self, other):
        other = other if isinstance(other, Value) else Value(other)
        out = Value(self.data - other.data, (self, other), "sub")

        def _bw():
            self.grad += out.grad
            other.grad -= out.grad
        out._backward = _bw
        return out

    def __rsub__(self, other):
        return Value(other).__sub__(self)

    def __mul__(self, other):
        other = other if isinstance(other, Value) else Value(other)
        out = Value(self.data * other.data, (self, other), "mul")

        def _bw():
            self.grad += other.data * out.grad
            other.grad += self.data * out.grad
        out._backward = _bw
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = other if isinstance(other, Value) else Value(other)
        if abs(other.data) < _DIV_EPS:
            raise NumericError(f"division by near-zero value {other.data!r}")
        out = Value(self.data / other.data, (self, other), "div")
        inv = 1.0 / other.data

        def _bw():
            self.grad += inv * out.grad
            other.grad -= out.data * inv * out.grad
        out._backward = _bw
        return out

    def __rtruediv__(self, other):
        return Value(other).__truediv__(self)

    # -- graph traversal ----------------------------------------------------

    def backward(self):
        """Accumulate d(self)/d(node) into ``grad`` for every reachable node.

        Grads of the reachable subgraph are zeroed first, so repeated calls
        do not mix gradients from different roots.
        """
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for child in node._prev:
                if id(child) not in visited:
                    stack.append((child, False))
        for node in topo:
            node.grad = 0.0
        self.grad = 1.0
        for node in reversed(topo):
            if node._backward is not None:
                node._backward()


def as_value(x):
    return x if isinstance(x, Value) else Value(x)


# ---------------------------------------------------------------------------
# Unary / binary functions that work on both Value nodes and plain floats, so
# the same model code can run on and off the tape.
# ---------------------------------------------------------------------------

def sin(x):
    if not isinstance(x, Value):
        return math.sin(x)
    out = Value(math.sin(x.data), (x,), "sin")
    c = math.cos(x.data)

    def _bw():
        x.grad += c * out.grad
    out._backward = _bw
    return out


def cos(x):
    if not isinstance(x, Value):
        return math.cos(x)
    out = Value(math.cos(x.data), (x,), "cos")
    s = math.sin(x.data)

    def _bw():
        x.grad -= s * out.grad
    out._backward = _bw
    return out


def atan2(y, x):
    if not isinstance(y, Value) and not isinstance(x, Value):
        return math.atan2(y, x)
    y, x = as_value(y), as_value(x)
    r2 = x.data * x.data + y.data * y.data
    if r2 < _DIV_EPS * _DIV_EPS:
        raise NumericError("atan2 is undefined at the origin")
    out = Value(math.atan2(y.data, x.data), (y, x), "atan2")

    def _bw():
        out_grad = out.grad
        y.grad += (x.data / r2) * out_grad
        x.grad -= (y.data / r2) * out_grad
    out._backward = _bw
    return out


def relu(x):
    if not isinstance(x, Value):
        return x if x > 0.0 else 0.0
    out = Value(x.data if x.data > 0.0 else 0.0, (x,), "relu")
    active = 1.0 if x.data > 0.0 else 0.0

    def _bw():
        x.grad += active * out.grad
    out._backward = _bw
    return out


def sqrt(x):
    if not isinstance(x, Value):
        if x < 0.0:
            raise NumericError(f"sqrt of negative value {x!r}")
        return math.sqrt(x)
    if x.data < 0.0:
        raise NumericError(f"sqrt of negative value {x.data!r}")
    out = Value(math.sqrt(x.data), (x,), "sqrt")

    def _bw():
        if out.data < _DIV_EPS:
            raise NumericError("sqrt gradient is unbounded at zero")
        x.grad += 0.5 / out.data * out.grad
    out._backward = _bw
    return out


def square(x):
    if not isinstance(x, Value):
        return x * x
    out = Value(x.data * x.data, (x,), "square")
    two_x = 2.0 * x.data

    def _bw():
        x.grad += two_x * out.grad
    out._backward = _bw
    return out


def truncate_gradient(x):
    """Identity in the forward pass; blocks gradient flow in the backward pass.

    Used to cut backpropagation-through-time chains at a fixed depth: the
    returned node is a fresh leaf carrying the same value.
    """
    if not isinstance(x, Value):
        return x
    return Value(x.data, (), "truncate")


def mean(values):
    """Arithmetic mean of a sequence of Values (or floats)."""
    values = list(values)
    if not values:
        raise NumericError("mean of an empty sequence")
    total = values[0]
    for v in values[1:]:
        total = total + v
    return total * (1.0 / len(values))


# ---------------------------------------------------------------------------
# Finite-difference verification.
# ---------------------------------------------------------------------------

@dataclass
class GradCheckResult:
    ok: bool
    analytic: np.ndarray
    numeric: np.ndarray
    max_abs_err: float
    max_rel_err: float

    def __bool__(self):
        return self.ok


def finite_difference(f, xs, step=1e-5, step_floor=1e-8):
    """Central-difference gradient of ``f`` (floats in, float out) at ``xs``.

    The step is relative to each coordinate's magnitude with an absolute
    floor, which keeps the truncation and round-off errors balanced across
    wildly different parameter scales.
    """
    xs = [float(x) for x in xs]
    grads = np.zeros(len(xs))
    for i in range(len(xs)):
        h = max(abs(xs[i]) * step, step_floor)
        hi = list(xs)
        lo = list(xs)
        hi[i] += h
        lo[i] -= h
        f_hi = f(hi)
        f_lo = f(lo)
        f_hi = f_hi.data if isinstance(f_hi, Value) else float(f_hi)
        f_lo = f_lo.data if isinstance(f_lo, Value) else float(f_lo)
        grads[i] = (f_hi - f_lo) / (2.0 * h)
    return grads


def check_gradients(f, xs, rel_tol=1e-4, abs_tol=1e-7, step=1e-5):
    """Compare tape gradients of ``f`` against central finite differences.

    ``f`` must accept a list of scalars (Values when taping, floats when
    estimating) and return a scalar. A coordinate passes when the analytic
    and numeric gradients agree within ``rel_tol`` relatively or ``abs_tol``
    absolutely.
    """
    leaves = [as_value(x) for x in xs]
    out = f(leaves)
    if not isinstance(out, Value):
        raise NumericError("function under test returned a constant; nothing to check")
    out.backward()
    analytic = np.array([leaf.grad for leaf in leaves])
    numeric = finite_difference(f, [leaf.data for leaf in leaves], step=step)
    abs_err = np.abs(analytic - numeric)
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    rel_err = abs_err / np.maximum(scale, 1e-300)
    ok = bool(np.all((abs_err <= abs_tol) | (rel_err <= rel_tol)))
    return GradCheckResult(ok=ok, analytic=analytic, numeric=numeric,
                           max_abs_err=float(abs_err.max(initial=0.0)),
                           max_rel_err=float(rel_err[abs_err > abs_tol].max(initial=0.0)))
