"""Synthetic cycle-aging oracle and the degradation dataset built from it.

The oracle is a fixed closed form so that every number downstream
(training accuracy, scheduling costs) can be reproduced bit for bit.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, FeatureRangeError, InputDomainError

FEATURES = ("soc_start", "dod", "temp_c", "c_rate", "soh")
TARGET = "delta_soh"

# closed-form aging constants
A = 2.5e-5
P_DOD = 1.6
ALPHA_TEMP = 0.06
BETA_CRATE = 0.3
GAMMA_SOH = 1.0
DELTA_SOC = 2.0

_ROUND_TRIP_SLACK = 1e-12


@dataclass(frozen=True)
class CycleFeatures:
    soc_start: float
    dod: float
    temp_c: float
    c_rate: float
    soh: float

    def as_array(self):
        return np.array([self.soc_start, self.dod, self.temp_c, self.c_rate, self.soh], dtype=float)

    @classmethod
    def from_array(cls, values):
        values = [float(v) for v in values]
        if len(values) != 5:
            raise InputDomainError(f"expected 5 feature values, got {len(values)}")
        return cls(*values)

    def check(self):
        """Raise InputDomainError unless the features describe a physical cycle."""
        vals = self.as_array()
        if not np.all(np.isfinite(vals)):
            raise InputDomainError(f"non-finite feature in {self}")
        if not 0.0 <= self.soc_start <= 1.0:
            raise InputDomainError(f"soc_start={self.soc_start} outside [0, 1]")
        if not 0.0 < self.dod <= 1.0:
            raise InputDomainError(f"dod={self.dod} outside (0, 1]")
        if self.soc_start - self.dod < -_ROUND_TRIP_SLACK:
            raise InputDomainError(f"cycle discharges below zero SOC (soc_start={self.soc_start}, dod={self.dod})")
        if self.c_rate <= 0.0:
            raise InputDomainError(f"c_rate={self.c_rate} must be positive")
        if not 0.0 < self.soh <= 1.0:
            raise InputDomainError(f"soh={self.soh} outside (0, 1]")
        return self


@dataclass(frozen=True)
class DegradationSample:
    features: CycleFeatures
    delta_soh: float


def cycle_degradation(f: CycleFeatures) -> float:
    """SOH lost over one cycle with the given features."""
    f.check()
    soc_mid = f.soc_start - f.dod / 2.0
    return (
        A
        * f.dod**P_DOD
        * math.exp(ALPHA_TEMP * (f.temp_c - 25.0))
        * (1.0 + BETA_CRATE * max(0.0, f.c_rate - 1.0))
        * (1.0 + GAMMA_SOH * (1.0 - f.soh))
        * (1.0 + DELTA_SOC * (soc_mid - 0.5) ** 2)
    )


def cycle_degradation_batch(X):
    """Vectorised oracle over an (n, 5) array of raw features; no domain checks."""
    X = np.asarray(X, dtype=float)
    soc, dod, temp, crate, soh = X.T
    soc_mid = soc - dod / 2.0
    return (
        A
        * dod**P_DOD
        * np.exp(ALPHA_TEMP * (temp - 25.0))
        * (1.0 + BETA_CRATE * np.maximum(0.0, crate - 1.0))
        * (1.0 + GAMMA_SOH * (1.0 - soh))
        * (1.0 + DELTA_SOC * (soc_mid - 0.5) ** 2)
    )


@dataclass(frozen=True)
class Normalization:
    """Per-feature affine maps onto [0, 1] plus a multiplicative target scale.

    Networks are trained on ``delta_soh / target_scale``; the sidecar stores
    the target as the pair ``[0, target_scale]``.
    """

    lo: tuple
    hi: tuple
    target_scale: float

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        if len(lo) != 5 or len(hi) != 5:
            raise ConfigurationError("normalization needs exactly 5 (lo, hi) pairs")
        for name, a, b in zip(FEATURES, lo, hi):
            if not (math.isfinite(a) and math.isfinite(b)) or b <= a:
                raise ConfigurationError(f"degenerate normalization range for {name}: [{a}, {b}]")
        if not (math.isfinite(self.target_scale) and self.target_scale > 0):
            raise ConfigurationError(f"target scale must be positive, got {self.target_scale}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "target_scale", float(self.target_scale))

    @property
    def lo_array(self):
        return np.array(self.lo)

    @property
    def span(self):
        return np.array(self.hi) - np.array(self.lo)

    def check_range(self, raw):
        raw = np.atleast_2d(np.asarray(raw, dtype=float))
        for j, name in enumerate(FEATURES):
            col = raw[:, j]
            bad = (col < self.lo[j] - _ROUND_TRIP_SLACK) | (col > self.hi[j] + _ROUND_TRIP_SLACK) | ~np.isfinite(col)
            if bad.any():
                raise FeatureRangeError(name, float(col[bad][0]), self.lo[j], self.hi[j])

    def transform(self, raw):
        """Map raw features (n, 5) into the unit box. Out-of-range values raise."""
        raw = np.asarray(raw, dtype=float)
        self.check_range(raw)
        return (raw - self.lo_array) / self.span

    def inverse_transform(self, unit):
        return np.asarray(unit, dtype=float) * self.span + self.lo_array

    def to_dict(self):
        pairs = {name: [lo, hi] for name, lo, hi in zip(FEATURES, self.lo, self.hi)}
        pairs[TARGET] = [0.0, self.target_scale]
        return pairs

    @classmethod
    def from_dict(cls, d):
        try:
            lo = [d[name][0] for name in FEATURES]
            hi = [d[name][1] for name in FEATURES]
            t_lo, t_hi = d[TARGET]
        except (KeyError, IndexError, TypeError) as exc:
            raise ConfigurationError(f"incomplete normalization record: {exc}") from exc
        if t_lo != 0.0:
            raise ConfigurationError("target range must start at 0")
        return cls(lo, hi, t_hi)


def normalize(f: CycleFeatures, n: Normalization):
    """Affine-map one feature record to a length-5 vector in [0, 1]."""
    return n.transform(f.as_array()[None, :])[0]


def denormalize(x, n: Normalization) -> CycleFeatures:
    return CycleFeatures.from_array(n.inverse_transform(np.asarray(x, dtype=float)))


@dataclass(frozen=True)
class SamplingPlan:
    """Uniform sampling box for the cycling experiments."""

    n_samples: int = 5000
    soc_start: tuple = (0.0, 1.0)
    dod: tuple = (0.0, 1.0)
    temp_c: tuple = (0.0, 45.0)
    c_rate: tuple = (0.0, 2.0)
    soh: tuple = (0.8, 1.0)
    test_fraction: float = 0.2

    def box(self):
        return np.array([self.soc_start, self.dod, self.temp_c, self.c_rate, self.soh], dtype=float)

    def validate(self):
        if self.n_samples < 1000:
            raise ConfigurationError(f"n_samples must be at least 1000, got {self.n_samples}")
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigurationError("test_fraction must lie in (0, 1)")
        box = self.box()
        for name, (lo, hi) in zip(FEATURES, box):
            if not hi > lo:
                raise ConfigurationError(f"empty or degenerate range for {name}: [{lo}, {hi}]")
        domain = {"soc_start": (0, 1), "dod": (0, 1), "c_rate": (0, math.inf), "soh": (0, 1)}
        for name, (lo, hi) in zip(FEATURES, box):
            if name in domain and (lo < domain[name][0] or hi > domain[name][1]):
                raise ConfigurationError(f"range for {name} leaves the feature domain {domain[name]}")
        # soc_start - dod >= 0 must be reachable
        if self.soc_start[1] < max(self.dod[0], 0.0) or self.soc_start[1] <= 0.0:
            raise ConfigurationError(
                f"no feasible (soc_start, dod) pair: soc_start <= {self.soc_start[1]} but dod >= {self.dod[0]}"
            )


@dataclass
class Dataset:
    X: np.ndarray  # raw features, (n, 5)
    y: np.ndarray  # delta_soh, (n,)
    normalization: Normalization
    train_idx: np.ndarray
    test_idx: np.ndarray
    seed: int
    plan: SamplingPlan = field(default_factory=SamplingPlan)

    def __len__(self):
        return len(self.y)

    @property
    def samples(self):
        return [DegradationSample(CycleFeatures.from_array(x), float(t)) for x, t in zip(self.X, self.y)]

    def split(self, which="train"):
        idx = self.train_idx if which == "train" else self.test_idx
        return self.X[idx], self.y[idx]

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(FEATURES + (TARGET,))
        for x, t in zip(self.X, self.y):
            w.writerow([repr(float(v)) for v in x] + [repr(float(t))])
        return buf.getvalue()

    def sidecar(self):
        return {
            "normalization": self.normalization.to_dict(),
            "seed": self.seed,
            "test_idx": [int(i) for i in self.test_idx],
        }

    def save(self, path):
        path = Path(path)
        path.write_text(self.to_csv())
        sidecar_path(path).write_text(json.dumps(self.sidecar(), indent=1, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path):
        path = Path(path)
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or tuple(rows[0]) != FEATURES + (TARGET,):
            raise ConfigurationError(f"{path}: unexpected header {rows[0] if rows else None}")
        data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
        meta = json.loads(sidecar_path(path).read_text())
        test_idx = np.array(meta["test_idx"], dtype=int)
        mask = np.ones(len(data), dtype=bool)
        mask[test_idx] = False
        return cls(
            X=data[:, :5],
            y=data[:, 5],
            normalization=Normalization.from_dict(meta["normalization"]),
            train_idx=np.flatnonzero(mask),
            test_idx=test_idx,
            seed=int(meta["seed"]),
        )


def sidecar_path(path):
    path = Path(path)
    return path.with_name(path.name + ".norm.json")


def generate_dataset(plan: SamplingPlan, seed: int) -> Dataset:
    """Draw a seeded uniform design over the plan box and label it with the oracle.

    Pairs with ``soc_start < dod`` are rejected and redrawn, as are zero
    ``dod``/``c_rate`` draws. Normalization spans the plan box itself, so a
    zero-throughput interval (``dod = c_rate = 0``) is representable.  The
    target scale is the standard deviation of delta_soh, so scaled targets
    have unit spread; see ``Normalization`` for how it is used.
    """
    plan.validate()
    rng = np.random.default_rng(seed)
    box = plan.box()
    rows = []
    need = plan.n_samples
    while need > 0:
        draw = rng.uniform(box[:, 0], box[:, 1], size=(2 * need + 16, 5))
        ok = (draw[:, 0] - draw[:, 1] >= 0.0) & (draw[:, 1] > 0.0) & (draw[:, 3] > 0.0) & (draw[:, 4] > 0.0)
        take = draw[ok][:need]
        rows.append(take)
        need -= len(take)
    X = np.concatenate(rows)
    y = np.array([cycle_degradation(CycleFeatures.from_array(x)) for x in X])

    perm = rng.permutation(len(X))
    n_test = max(1, int(round(plan.test_fraction * len(X))))
    test_idx = np.sort(perm[:n_test])
    train_idx = np.sort(perm[n_test:])
    norm = Normalization(box[:, 0], box[:, 1], float(y.std()))
    return Dataset(X, y, norm, train_idx, test_idx, seed, plan)
