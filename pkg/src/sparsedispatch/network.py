"""The 5-20-10-1 ReLU degradation predictor with structured neuron masks.

Parameters live in plain numpy arrays.  Hidden neuron ``j`` of layer ``l``
owns row ``j`` of ``W[l]``, entry ``j`` of ``b[l]`` and column ``j`` of
``W[l+1]``; masking a neuron zeroes all three.
"""
from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .errors import ConfigurationError, DivergenceError, NetParseError, StructuralError
from .oracle import FEATURES, TARGET, Normalization, SamplingPlan

LAYERS = (5, 20, 10, 1)
N_HIDDEN = LAYERS[1] + LAYERS[2]
TOLERANCES = (0.05, 0.10, 0.15)
ACCURACY_FLOOR = 1e-7


def default_normalization():
    box = SamplingPlan().box()
    return Normalization(box[:, 0], box[:, 1], 1.0)


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class SparseNet:
    weights: tuple  # (W1 (20,5), W2 (10,20), W3 (1,10))
    biases: tuple  # (b1 (20,), b2 (10,), b3 (1,))
    masks: tuple  # (m1 (20,), m2 (10,)) of 0/1
    sparsity: float = 0.0
    normalization: Normalization = field(default_factory=default_normalization)

    def __post_init__(self):
        W = tuple(_frozen(w) for w in self.weights)
        b = tuple(_frozen(v) for v in self.biases)
        m = tuple(_frozen(np.asarray(v) != 0, bool) for v in self.masks)
        if len(W) != 3 or len(b) != 3 or len(m) != 2:
            raise StructuralError("expected 3 weight matrices, 3 bias vectors and 2 masks")
        for i in range(3):
            want = (LAYERS[i + 1], LAYERS[i])
            if W[i].shape != want or b[i].shape != (LAYERS[i + 1],):
                raise StructuralError(f"layer {i + 1}: got W{W[i].shape} b{b[i].shape}, want W{want}")
        for i in range(2):
            if m[i].shape != (LAYERS[i + 1],):
                raise StructuralError(f"mask {i + 1} has shape {m[i].shape}")
        object.__setattr__(self, "weights", W)
        object.__setattr__(self, "biases", b)
        object.__setattr__(self, "masks", m)

    @property
    def n_active(self):
        return int(self.masks[0].sum() + self.masks[1].sum())

    @property
    def realized_sparsity(self):
        return (N_HIDDEN - self.n_active) / N_HIDDEN

    def params(self):
        """Mutable copies of (W, b)."""
        return [w.copy() for w in self.weights], [v.copy() for v in self.biases]

    def masked_parameters_are_zero(self):
        W, b = self.weights, self.biases
        for layer in range(2):
            off = ~self.masks[layer]
            if np.any(W[layer][off]) or np.any(b[layer][off]) or np.any(W[layer + 1][:, off]):
                return False
        return True

    def equals(self, other):
        return (
            all(np.array_equal(a, c) for a, c in zip(self.weights, other.weights))
            and all(np.array_equal(a, c) for a, c in zip(self.biases, other.biases))
            and all(np.array_equal(a, c) for a, c in zip(self.masks, other.masks))
            and self.sparsity == other.sparsity
            and self.normalization == other.normalization
        )


def random_net(seed, sparsity=0.0, normalization=None, scale=0.5):
    """Seeded uniform(-scale, scale) network, pruned to ``sparsity`` by magnitude."""
    rng = np.random.default_rng(seed)
    W = [rng.uniform(-scale, scale, size=(LAYERS[i + 1], LAYERS[i])) for i in range(3)]
    b = [rng.uniform(-scale, scale, size=LAYERS[i + 1]) for i in range(3)]
    m1, m2 = _mask_from_params(W, b, sparsity)
    _apply_mask(W, b, (m1, m2))
    return SparseNet(W, b, (m1, m2), sparsity, normalization or default_normalization())


# ---------------------------------------------------------------- forward


def _check_input(x):
    x = np.asarray(x, dtype=float)
    if x.ndim not in (1, 2) or x.shape[-1] != LAYERS[0]:
        raise StructuralError(f"expected input of length {LAYERS[0]}, got shape {x.shape}")
    return x


def hidden_activations(net: SparseNet, x):
    """Pre- and post-activation values of both hidden layers and the raw output."""
    x = np.atleast_2d(_check_input(x))
    (W1, W2, W3), (b1, b2, b3) = net.weights, net.biases
    m1, m2 = net.masks
    z1 = x @ W1.T + b1
    a1 = np.maximum(z1, 0.0) * m1
    z2 = a1 @ W2.T + b2
    a2 = np.maximum(z2, 0.0) * m2
    out = a2 @ W3.T + b3
    return z1, a1, z2, a2, out[:, 0]


def forward_scaled(net: SparseNet, x):
    """Network output in target-scale units (before denormalization)."""
    x = _check_input(x)
    out = hidden_activations(net, x)[-1]
    return out if x.ndim == 2 else float(out[0])


def forward(net: SparseNet, x):
    """Predicted delta_soh for normalized input(s) ``x``."""
    return forward_scaled(net, x) * net.normalization.target_scale


def predict_raw(net: SparseNet, raw):
    """Predicted delta_soh for raw (unnormalized) feature rows."""
    raw = np.atleast_2d(np.asarray(raw, dtype=float))
    return forward(net, net.normalization.transform(raw))


# ---------------------------------------------------------------- pruning


def _neuron_scores(W, b):
    s1 = np.abs(W[0]).sum(axis=1) + np.abs(W[1]).sum(axis=0) + np.abs(b[0])
    s2 = np.abs(W[1]).sum(axis=1) + np.abs(W[2]).sum(axis=0) + np.abs(b[1])
    return s1, s2


def n_pruned(sparsity):
    if not 0.0 <= sparsity < 1.0:
        raise ConfigurationError(f"sparsity must lie in [0, 1), got {sparsity}")
    # tolerate float noise such as 0.3 * 30 = 9.000000000000002
    return int(math.ceil(sparsity * N_HIDDEN - 1e-9))


def _mask_from_params(W, b, sparsity):
    k = n_pruned(sparsity)
    s1, s2 = _neuron_scores(W, b)
    m1 = np.ones(LAYERS[1], dtype=bool)
    m2 = np.ones(LAYERS[2], dtype=bool)
    if k == 0:
        return m1, m2
    if k > N_HIDDEN - 2:
        raise ConfigurationError(f"sparsity {sparsity} prunes {k} of {N_HIDDEN} neurons and would empty a hidden layer")
    # the best neuron of each layer is protected so neither layer can be emptied
    keep1 = max(range(LAYERS[1]), key=lambda j: (s1[j], -j))
    keep2 = max(range(LAYERS[2]), key=lambda j: (s2[j], -j))
    candidates = [(s1[j], 1, j) for j in range(LAYERS[1]) if j != keep1]
    candidates += [(s2[j], 2, j) for j in range(LAYERS[2]) if j != keep2]
    candidates.sort()
    for _, layer, j in candidates[:k]:
        (m1 if layer == 1 else m2)[j] = False
    return m1, m2


def _apply_mask(W, b, masks):
    for layer, m in enumerate(masks):
        off = ~np.asarray(m, dtype=bool)
        W[layer][off, :] = 0.0
        b[layer][off] = 0.0
        W[layer + 1][:, off] = 0.0


def prune_mask(net: SparseNet, sparsity):
    """Masks that drop the ceil(sparsity*30) least important hidden neurons.

    Importance is the L1 norm of the neuron's incoming row plus its outgoing
    column plus |bias|, ranked jointly over both hidden layers; ties go to
    the lower layer, then the lower index.
    """
    W, b = net.params()
    return _mask_from_params(W, b, sparsity)


def apply_mask(net: SparseNet, masks, sparsity=None):
    W, b = net.params()
    _apply_mask(W, b, masks)
    return SparseNet(W, b, masks, net.sparsity if sparsity is None else sparsity, net.normalization)


# ---------------------------------------------------------------- training


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 300
    batch_size: int = 32
    learning_rate: float = 0.003
    seed: int = 1
    sparsity: float = 0.0
    momentum: float = 0.9
    optimizer: str = "adam"
    lr_decay: float = 0.99  # multiplicative per-epoch learning-rate decay

    def validate(self):
        if self.epochs < 1:
            raise ConfigurationError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if not 0.0 < self.learning_rate < 1.0:
            raise ConfigurationError("learning_rate must lie in (0, 1)")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigurationError("momentum must lie in [0, 1)")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigurationError(f"unknown optimizer {self.optimizer!r}")
        if not 0.0 < self.lr_decay <= 1.0:
            raise ConfigurationError("lr_decay must lie in (0, 1]")
        n_pruned(self.sparsity)
        return self


def mse_and_grads(W, b, masks, X, t):
    """Mean squared error on (X, t) and its gradients w.r.t. every parameter.

    ``X`` is normalized input, ``t`` the target in scaled units.  Gradients of
    masked parameters are zero.
    """
    m1, m2 = masks
    z1 = X @ W[0].T + b[0]
    a1 = np.maximum(z1, 0.0) * m1
    z2 = a1 @ W[1].T + b[1]
    a2 = np.maximum(z2, 0.0) * m2
    out = (a2 @ W[2].T + b[2])[:, 0]
    err = out - t
    n = len(t)
    loss = float(err @ err / n)

    d_out = (2.0 / n) * err[:, None]
    gW3 = d_out.T @ a2
    gb3 = d_out.sum(axis=0)
    d_z2 = (d_out @ W[2]) * ((z2 > 0) & m2)
    gW2 = d_z2.T @ a1
    gb2 = d_z2.sum(axis=0)
    d_z1 = (d_z2 @ W[1]) * ((z1 > 0) & m1)
    gW1 = d_z1.T @ X
    gb1 = d_z1.sum(axis=0)
    grads_W = [gW1, gW2, gW3]
    grads_b = [gb1, gb2, gb3]
    _apply_mask(grads_W, grads_b, masks)
    return loss, grads_W, grads_b


EpochLog = Callable[[int, float, Optional[float], int], None]


def stdout_log(stream=None):
    """Epoch logger writing ``epoch,train_mse,test_mse,active_neurons`` lines."""
    stream = stream or sys.stdout

    def log(epoch, train_mse, test_mse, active):
        test = "" if test_mse is None else repr(test_mse)
        stream.write(f"{epoch},{train_mse!r},{test},{active}\n")

    return log


@dataclass
class TrainHistory:
    rows: list = field(default_factory=list)
    masks_stable_from: Optional[int] = None


def _scaled_split(data, which):
    X, y = data.split(which)
    return data.normalization.transform(X), y / data.normalization.target_scale


class _Momentum:
    """Heavy-ball mini-batch gradient descent."""

    def __init__(self, W, b, cfg):
        self.mu = cfg.momentum
        self.vel = [np.zeros_like(p) for p in (*W, *b)]

    def __call__(self, W, b, gW, gb, lr):
        for i, (p, g) in enumerate(zip((*W, *b), (*gW, *gb))):
            self.vel[i] = self.mu * self.vel[i] - lr * g
            p += self.vel[i]


class _Adam:
    """Mini-batch gradient descent with Adam moment scaling."""

    def __init__(self, W, b, cfg, beta1=0.9, beta2=0.999, eps=1e-8):
        self.b1, self.b2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in (*W, *b)]
        self.v = [np.zeros_like(p) for p in (*W, *b)]
        self.t = 0

    def __call__(self, W, b, gW, gb, lr):
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for i, (p, g) in enumerate(zip((*W, *b), (*gW, *gb))):
            self.m[i] = self.b1 * self.m[i] + (1.0 - self.b1) * g
            self.v[i] = self.b2 * self.v[i] + (1.0 - self.b2) * g * g
            p -= lr * (self.m[i] / c1) / (np.sqrt(self.v[i] / c2) + self.eps)


def _fit(W, b, data, cfg: TrainConfig, log: Optional[EpochLog], history: Optional[TrainHistory], epoch0=0):
    Xtr, ttr = _scaled_split(data, "train")
    Xte, tte = _scaled_split(data, "test") if len(data.test_idx) else (None, None)
    if len(ttr) == 0:
        raise ConfigurationError("training split is empty")
    rng = np.random.default_rng([cfg.seed, epoch0])
    step = _Adam(W, b, cfg) if cfg.optimizer == "adam" else _Momentum(W, b, cfg)
    prev = None
    masks = None
    lr = cfg.learning_rate
    for epoch in range(1, cfg.epochs + 1):
        masks = _mask_from_params(W, b, cfg.sparsity)
        _apply_mask(W, b, masks)
        if prev is not None and history is not None:
            same = all(np.array_equal(p, m) for p, m in zip(prev, masks))
            if not same:
                history.masks_stable_from = None
            elif history.masks_stable_from is None:
                history.masks_stable_from = epoch0 + epoch
        prev = masks
        perm = rng.permutation(len(ttr))
        for start in range(0, len(perm), cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            _, gW, gb = mse_and_grads(W, b, masks, Xtr[idx], ttr[idx])
            step(W, b, gW, gb, lr)
            _apply_mask(W, b, masks)
        lr *= cfg.lr_decay
        train_mse = mse_and_grads(W, b, masks, Xtr, ttr)[0]
        if not math.isfinite(train_mse):
            raise DivergenceError(epoch0 + epoch, train_mse)
        test_mse = mse_and_grads(W, b, masks, Xte, tte)[0] if Xte is not None else None
        active = int(masks[0].sum() + masks[1].sum())
        if history is not None:
            history.rows.append((epoch0 + epoch, train_mse, test_mse, active))
        if log is not None:
            log(epoch0 + epoch, train_mse, test_mse, active)
    return masks


def init_params(seed):
    rng = np.random.default_rng(seed)
    W = [rng.uniform(-0.5, 0.5, size=(LAYERS[i + 1], LAYERS[i])) for i in range(3)]
    b = [rng.uniform(-0.5, 0.5, size=LAYERS[i + 1]) for i in range(3)]
    return W, b


def train_cold(data, cfg: TrainConfig, log: Optional[EpochLog] = None, history: Optional[TrainHistory] = None) -> SparseNet:
    """Train a sparse net from seeded uniform(-0.5, 0.5) weights."""
    cfg.validate()
    if len(data) == 0:
        raise ConfigurationError("dataset is empty")
    W, b = init_params(cfg.seed)
    masks = _fit(W, b, data, cfg, log, history)
    return SparseNet(W, b, masks, cfg.sparsity, data.normalization)


def train_warm(dense: SparseNet, data, cfg: TrainConfig, log: Optional[EpochLog] = None,
               history: Optional[TrainHistory] = None, epoch0=0) -> SparseNet:
    """Prune and fine-tune a trained dense net to ``cfg.sparsity``."""
    cfg.validate()
    if dense.n_active != N_HIDDEN:
        raise ConfigurationError("warm start needs a dense (unpruned) starting network")
    W, b = dense.params()
    masks = _fit(W, b, data, cfg, log, history, epoch0=epoch0)
    return SparseNet(W, b, masks, cfg.sparsity, data.normalization)


# ---------------------------------------------------------------- accuracy


@dataclass(frozen=True)
class AccuracyReport:
    fractions: dict  # tolerance -> fraction of accurate test samples
    mse: float  # in scaled target units
    n: int

    def at(self, tol):
        return self.fractions[tol]


def accuracy_fractions(pred, actual, tolerances=TOLERANCES, floor=ACCURACY_FLOOR):
    pred = np.asarray(pred, dtype=float)
    actual = np.asarray(actual, dtype=float)
    denom = np.maximum(actual, floor)
    err = np.abs(pred - actual)
    return {tol: float(np.mean(err <= tol * denom)) for tol in sorted(tolerances)}


def evaluate_accuracy(net: SparseNet, X_raw, y, tolerances=TOLERANCES) -> AccuracyReport:
    """Share of samples predicted within each relative tolerance, plus MSE."""
    y = np.asarray(y, dtype=float)
    if len(y) == 0:
        raise ConfigurationError("test split is empty")
    pred = predict_raw(net, X_raw)
    scale = net.normalization.target_scale
    mse = float(np.mean((pred / scale - y / scale) ** 2))
    return AccuracyReport(accuracy_fractions(pred, y, tolerances), mse, len(y))


# ---------------------------------------------------------------- file format

_MAGIC = "sparse-net v1"


def _fmt(values):
    return " ".join(repr(float(v)) for v in np.ravel(values))


def dumps_net(net: SparseNet) -> str:
    lines = [_MAGIC, "layers " + " ".join(str(n) for n in LAYERS), f"sparsity {net.sparsity!r}"]
    norm = net.normalization
    for name, lo, hi in zip(FEATURES, norm.lo, norm.hi):
        lines.append(f"norm {name} {lo!r} {hi!r}")
    lines.append(f"norm {TARGET} 0.0 {norm.target_scale!r}")
    for i, m in enumerate(net.masks, start=1):
        lines.append(f"mask {i} " + " ".join("1" if v else "0" for v in m))
    for i in range(3):
        for r, row in enumerate(net.weights[i]):
            lines.append(f"W {i + 1} {r} {_fmt(row)}")
        lines.append(f"b {i + 1} {_fmt(net.biases[i])}")
    lines.append("end")
    return "\n".join(lines) + "\n"


def save_net(net: SparseNet, path):
    Path(path).write_text(dumps_net(net))


class _Lines:
    def __init__(self, text):
        self.lines = text.splitlines()
        self.pos = 0

    def take(self, key, n_fields=None):
        lineno = self.pos + 1
        if self.pos >= len(self.lines):
            raise NetParseError(f"unexpected end of file, expected {key!r}", line=lineno, field=key)
        parts = self.lines[self.pos].split()
        self.pos += 1
        if not parts or parts[0] != key:
            raise NetParseError(f"expected {key!r}, got {parts[0] if parts else 'blank line'!r}", line=lineno, field=key)
        rest = parts[1:]
        if n_fields is not None and len(rest) != n_fields:
            raise NetParseError(f"expected {n_fields} values, got {len(rest)}", line=lineno, field=key)
        return lineno, rest

    def floats(self, key, values, lineno):
        try:
            return [float(v) for v in values]
        except ValueError as exc:
            raise NetParseError(str(exc), line=lineno, field=key) from None


def loads_net(text: str) -> SparseNet:
    src = _Lines(text)
    if not src.lines or src.lines[0].strip() != _MAGIC:
        raise NetParseError("missing header", line=1, field="header")
    src.pos = 1
    lineno, dims = src.take("layers", 4)
    if tuple(int(d) for d in dims) != LAYERS:
        raise NetParseError(f"unsupported architecture {dims}", line=lineno, field="layers")
    lineno, (sp,) = src.take("sparsity", 1)
    sparsity = src.floats("sparsity", [sp], lineno)[0]
    norm = {}
    for name in FEATURES + (TARGET,):
        lineno, rest = src.take("norm", 3)
        if rest[0] != name:
            raise NetParseError(f"expected normalization for {name!r}", line=lineno, field=f"norm {name}")
        norm[name] = src.floats(name, rest[1:], lineno)
    masks = []
    for i in (1, 2):
        lineno, rest = src.take("mask", LAYERS[i] + 1)
        if rest[0] != str(i) or any(v not in ("0", "1") for v in rest[1:]):
            raise NetParseError("bad mask line", line=lineno, field=f"mask {i}")
        masks.append(np.array([v == "1" for v in rest[1:]]))
    W, b = [], []
    for i in range(3):
        rows = []
        for r in range(LAYERS[i + 1]):
            lineno, rest = src.take("W", LAYERS[i] + 2)
            if rest[:2] != [str(i + 1), str(r)]:
                raise NetParseError(f"expected W {i + 1} {r}", line=lineno, field="W")
            rows.append(src.floats("W", rest[2:], lineno))
        W.append(np.array(rows))
        lineno, rest = src.take("b", LAYERS[i + 1] + 1)
        if rest[0] != str(i + 1):
            raise NetParseError(f"expected b {i + 1}", line=lineno, field="b")
        b.append(np.array(src.floats("b", rest[1:], lineno)))
    src.take("end", 0)
    try:
        normalization = Normalization.from_dict(norm)
    except ValueError as exc:
        raise NetParseError(str(exc), field="norm") from None
    net = SparseNet(W, b, masks, sparsity, normalization)
    if not net.masked_parameters_are_zero():
        raise NetParseError("masked neuron carries nonzero parameters", field="mask")
    return net


def load_net(path) -> SparseNet:
    return loads_net(Path(path).read_text())


def with_normalization(net: SparseNet, normalization: Normalization) -> SparseNet:
    return replace(net, normalization=normalization)
