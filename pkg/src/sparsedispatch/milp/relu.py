"""Exact MILP encoding of the ReLU degradation network.

Every active hidden neuron gets a pre-activation variable ``x`` whose
interval comes from interval arithmetic over the input box.  Neurons whose
interval does not straddle zero are linear and need no binary; the rest get
the four big-M rows with a per-neuron ``M`` pair taken from the interval.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import EncodingError
from ..network import LAYERS, SparseNet
from .model import LinExpr, MilpModel

_BOX_SLACK = 1e-9


@dataclass(frozen=True)
class BoundBox:
    """Pre-activation intervals, one (n, 2) array per layer after the input."""

    layer1: np.ndarray
    layer2: np.ndarray
    output: np.ndarray

    def layers(self):
        return self.layer1, self.layer2, self.output


@dataclass(frozen=True)
class ReluEncoding:
    layer: int
    neuron: int
    x: str
    a: str
    delta: str
    lb: float
    ub: float

    @property
    def m_minus(self):
        return max(0.0, -self.lb)

    @property
    def m_plus(self):
        return max(0.0, self.ub)


def _affine_interval(W, bias, lo, hi):
    Wp = np.maximum(W, 0.0)
    Wn = np.minimum(W, 0.0)
    return np.stack([bias + Wp @ lo + Wn @ hi, bias + Wp @ hi + Wn @ lo], axis=1)


def propagate_bounds(net: SparseNet, input_box) -> BoundBox:
    """Interval arithmetic through the network; masked neurons get [0, 0]."""
    box = np.asarray(input_box, dtype=float).reshape(LAYERS[0], 2)
    if np.any(box[:, 0] < -_BOX_SLACK) or np.any(box[:, 1] > 1 + _BOX_SLACK) or np.any(box[:, 0] > box[:, 1]):
        raise EncodingError(f"input box must lie inside [0, 1]^5, got {box.tolist()}")
    lo, hi = box[:, 0], box[:, 1]
    out = []
    for layer in range(2):
        iv = _affine_interval(net.weights[layer], net.biases[layer], lo, hi)
        iv[~net.masks[layer]] = 0.0
        out.append(iv)
        lo, hi = np.maximum(iv[:, 0], 0.0), np.maximum(iv[:, 1], 0.0)
    out.append(_affine_interval(net.weights[2], net.biases[2], lo, hi))
    return BoundBox(*out)


def encode_network(model: MilpModel, net: SparseNet, input_vars, prefix="nn", encodings=None,
                   eliminate_stable=True):
    """Embed ``net`` into ``model`` and return its output variable.

    ``input_vars`` are five model variables holding the normalized features;
    their declared bounds define the interval box.  The returned variable is
    the network output in scaled target units (multiply by
    ``net.normalization.target_scale`` for delta_soh).  Each unstable neuron
    appends a ReluEncoding to ``encodings`` when a list is supplied.

    With ``eliminate_stable=False`` every active neuron keeps its binary and
    four rows even when its interval does not straddle zero; the big-M pair
    then has a zero entry and the rows still pin ``a = max(0, x)``.
    """
    if len(input_vars) != LAYERS[0]:
        raise EncodingError(f"expected {LAYERS[0]} input variables, got {len(input_vars)}")
    box = []
    for v in input_vars:
        if not (math.isfinite(v.lb) and math.isfinite(v.ub)):
            raise EncodingError(f"input variable {v.name!r} is unbounded")
        box.append((v.lb, v.ub))
    bounds = propagate_bounds(net, box)

    prev = [LinExpr({v.name: 1.0}) for v in input_vars]
    for layer in range(2):
        W, b, mask = net.weights[layer], net.biases[layer], net.masks[layer]
        iv = bounds.layers()[layer]
        cur = []
        for j in range(LAYERS[layer + 1]):
            if not mask[j]:
                cur.append(None)
                continue
            lb, ub = float(iv[j, 0]), float(iv[j, 1])
            if ub <= 0.0 and eliminate_stable:
                # dead on the whole box
                cur.append(None)
                continue
            stem = f"{prefix}_{layer + 1}_{j}"
            x = model.add_var(f"{stem}_x", lb, ub)
            pre = LinExpr(const=float(b[j]))
            for i, src in enumerate(prev):
                if src is not None and W[j, i] != 0.0:
                    pre.iadd(src, float(W[j, i]))
            model.add_constr(x - pre, "=", 0.0, name=f"{stem}_pre", role=f"relu_pre@{prefix}")
            if lb >= 0.0 and eliminate_stable:
                # always active: a = x
                cur.append(LinExpr({x.name: 1.0}))
                continue
            a = model.add_var(f"{stem}_a", 0.0, max(0.0, ub))
            d = model.add_binary(f"{stem}_d")
            m_minus, m_plus = max(0.0, -lb), max(0.0, ub)
            role = f"relu@{prefix}"
            model.add_constr(a - x + m_minus * d, "<=", m_minus, name=f"{stem}_r1", role=role)
            model.add_constr(a - x, ">=", 0.0, name=f"{stem}_r2", role=role)
            model.add_constr(a - m_plus * d, "<=", 0.0, name=f"{stem}_r3", role=role)
            model.add_constr(LinExpr({a.name: 1.0}), ">=", 0.0, name=f"{stem}_r4", role=role)
            if encodings is not None:
                encodings.append(ReluEncoding(layer + 1, j, x.name, a.name, d.name, lb, ub))
            cur.append(LinExpr({a.name: 1.0}))
        prev = cur

    lo, hi = bounds.output[0]
    y = model.add_var(f"{prefix}_out", float(lo), float(hi))
    expr = LinExpr(const=float(net.biases[2][0]))
    for i, src in enumerate(prev):
        if src is not None and net.weights[2][0, i] != 0.0:
            expr.iadd(src, float(net.weights[2][0, i]))
    model.add_constr(y - expr, "=", 0.0, name=f"{prefix}_outdef", role=f"relu_out@{prefix}")
    return y


def count_relu_binaries(model: MilpModel, prefix="nn"):
    return sum(1 for v in model.binaries() if v.name.startswith(prefix + "_") and v.name.endswith("_d"))
