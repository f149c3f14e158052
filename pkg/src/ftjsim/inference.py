"""Neural-network inference on simulated crossbars.

Weights map to differential conductance pairs with one endpoint pinned at the
HRS; inputs are amplitude-encoded at a single read voltage inside the Ohmic
regime so the analog read stays exactly linear.  Accuracy is always reported
against the floating-point forward pass of the same weights.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .crossbar import BiasScheme, Crossbar, program_open_loop, program_write_verify, read_vmm
from .device import DeviceParams, UpdateScheme
from .errors import ConfigError
from .variability import VariabilityParams, derive_seed


@dataclass(frozen=True)
class WeightMapping:
    """Conversion between one weight matrix and its conductance pair."""

    scale: float   # siemens per unit weight
    v_read: float  # V, input amplitude encoding

    def __post_init__(self) -> None:
        if self.scale <= 0:
            raise ValueError(f"scale must be > 0, got {self.scale}")
        if self.v_read <= 0:
            raise ValueError(f"v_read must be > 0, got {self.v_read}")


@dataclass(frozen=True)
class MLPSpec:
    """Layer widths of a rectifier network with argmax readout."""

    layer_sizes: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.layer_sizes) < 2:
            raise ValueError("need at least input and output widths")
        if any(s < 1 for s in self.layer_sizes):
            raise ValueError("layer sizes must be >= 1")


def map_weights(
    w: np.ndarray, params: DeviceParams, v_read: float = 0.1
) -> tuple[np.ndarray, np.ndarray, WeightMapping]:
    """Differential target conductances (G+, G-) for one weight matrix.

    Positive weights raise G+ above the HRS with G- pinned there; negative
    weights mirror.  The largest weight magnitude lands exactly on the LRS.
    """
    if v_read > params.conduction.v_ohmic_max:
        raise ConfigError(
            f"v_read {v_read} V exceeds the Ohmic regime edge "
            f"{params.conduction.v_ohmic_max} V; the analog read would not be linear"
        )
    w = np.asarray(w, dtype=float)
    if not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite")
    span = params.g_lrs - params.g_hrs
    w_max = float(np.max(np.abs(w)))
    scale = span / w_max if w_max > 0 else span
    g_pos = params.g_hrs + np.clip(w, 0.0, None) * scale
    g_neg = params.g_hrs + np.clip(-w, 0.0, None) * scale
    return g_pos, g_neg, WeightMapping(scale=scale, v_read=v_read)


def unmap_weights(g_pos: np.ndarray, g_neg: np.ndarray, mapping: WeightMapping) -> np.ndarray:
    """Inverse of map_weights on (possibly re-read) conductance pairs."""
    return (np.asarray(g_pos, float) - np.asarray(g_neg, float)) / mapping.scale


@dataclass
class AnalogLayer:
    pos: Crossbar
    neg: Crossbar
    mapping: WeightMapping


class AnalogNetwork:
    """A stack of differential crossbar layers with rectifiers in between."""

    def __init__(self, layers: list[AnalogLayer]):
        if not layers:
            raise ValueError("network needs at least one layer")
        self.layers = layers

    def forward(self, x: np.ndarray, t: float | None = None) -> np.ndarray:
        """Class scores for one sample (1-D) or a batch (2-D, samples first).

        Each layer's inputs are rescaled to the read voltage, pushed through
        both crossbars, and the differential currents are decoded back into
        weight units; the rescaling cancels exactly in the linear regime.
        """
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        y = x[None, :] if single else x
        for i, layer in enumerate(self.layers):
            if i > 0:
                y = np.maximum(y, 0.0)
            # Per-sample amplitude normalization keeps voltages in range.
            m = np.maximum(1.0, np.max(np.abs(y), axis=1, keepdims=True))
            v = layer.mapping.v_read * (y / m)
            i_pos = read_vmm(layer.pos, v, t)
            i_neg = read_vmm(layer.neg, v, t)
            y = (i_pos - i_neg) / (layer.mapping.scale * layer.mapping.v_read) * m
        return y[0] if single else y


def float_forward(weights: Sequence[np.ndarray], x: np.ndarray) -> np.ndarray:
    """Reference forward pass: x @ W per layer with rectifiers in between."""
    y = np.asarray(x, dtype=float)
    for i, w in enumerate(weights):
        if i > 0:
            y = np.maximum(y, 0.0)
        y = y @ w
    return y


def program_network(
    weights: Sequence[np.ndarray],
    params: DeviceParams,
    vp: VariabilityParams,
    mode: str = "open_loop",
    v_read: float = 0.1,
    scheme: UpdateScheme = UpdateScheme.AMPLITUDE_RAMP,
    tol: float = 0.05,
    max_iters: int = 200,
) -> AnalogNetwork:
    """Map and program every layer onto a differential crossbar pair.

    ``mode`` selects continuous (idealized), open-loop or write-verify
    programming.  Each crossbar draws its own population from a sub-seed of
    ``vp.seed`` so layers are statistically independent but reproducible.
    """
    if mode not in ("continuous", "open_loop", "write_verify"):
        raise ValueError(f"unknown programming mode {mode!r}")
    bias = BiasScheme(v_write_pot=params.v_set_full, v_write_dep=params.v_reset_full)
    layers = []
    for li, w in enumerate(weights):
        g_pos, g_neg, mapping = map_weights(w, params, v_read=v_read)
        halves = []
        for hi, target in enumerate((g_pos, g_neg)):
            sub_vp = VariabilityParams(
                sigma_c2c=vp.sigma_c2c,
                sigma_d2d_hrs=vp.sigma_d2d_hrs,
                sigma_d2d_lrs=vp.sigma_d2d_lrs,
                drift_per_decade=vp.drift_per_decade,
                seed=derive_seed(vp.seed, 2 * li + hi),
            )
            xbar = Crossbar.create(w.shape[0], w.shape[1], params, sub_vp, bias, scheme)
            if mode == "continuous":
                xbar.set_conductances(target)
            elif mode == "open_loop":
                program_open_loop(xbar, target)
            else:
                program_write_verify(xbar, target, tol=tol, max_iters=max_iters)
            halves.append(xbar)
        layers.append(AnalogLayer(pos=halves[0], neg=halves[1], mapping=mapping))
    return AnalogNetwork(layers)


# ---------------------------------------------------------------------------
# Datasets and training of the float baseline


DATASET_LABEL_COLUMN = "label"


def make_blobs_dataset(
    n_samples: int = 512,
    n_features: int = 16,
    n_classes: int = 4,
    seed: int = 7,
    spread: float = 1.3,
) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic Gaussian-blob classification set, features in [-1, 1]."""
    rng = np.random.default_rng(seed)
    centers = rng.normal(0.0, 1.0, size=(n_classes, n_features))
    labels = np.arange(n_samples) % n_classes
    x = centers[labels] + spread * rng.standard_normal((n_samples, n_features))
    x = x / np.max(np.abs(x))
    perm = rng.permutation(n_samples)
    return x[perm], labels[perm]


def save_dataset_csv(path: str | Path, x: np.ndarray, y: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"feature_{i}" for i in range(x.shape[1])] + [DATASET_LABEL_COLUMN])
        for xi, yi in zip(x, y):
            writer.writerow([f"{v:.17g}" for v in xi] + [int(yi)])


def load_dataset_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[-1] != DATASET_LABEL_COLUMN or not header[0].startswith("feature_"):
            raise ValueError(f"unexpected dataset header {header!r}")
        rows = [row for row in reader if row]
    x = np.array([[float(v) for v in row[:-1]] for row in rows])
    y = np.array([int(row[-1]) for row in rows])
    return x, y


def train_mlp(
    x: np.ndarray,
    y: np.ndarray,
    spec: MLPSpec,
    seed: int = 0,
    epochs: int = 400,
    lr: float = 1.0,
) -> list[np.ndarray]:
    """Full-batch softmax-regression training of the float baseline weights."""
    n_classes = spec.layer_sizes[-1]
    if x.shape[1] != spec.layer_sizes[0]:
        raise ValueError(f"dataset has {x.shape[1]} features, spec expects {spec.layer_sizes[0]}")
    rng = np.random.default_rng(seed)
    weights = [
        rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out))
        for fan_in, fan_out in zip(spec.layer_sizes[:-1], spec.layer_sizes[1:])
    ]
    onehot = np.eye(n_classes)[y]
    n = x.shape[0]
    for _ in range(epochs):
        acts = [x]
        for i, w in enumerate(weights):
            pre = (np.maximum(acts[-1], 0.0) if i > 0 else acts[-1]) @ w
            acts.append(pre)
        logits = acts[-1]
        logits = logits - logits.max(axis=1, keepdims=True)
        p = np.exp(logits)
        p /= p.sum(axis=1, keepdims=True)
        grad = (p - onehot) / n
        for i in reversed(range(len(weights))):
            inp = acts[i] if i == 0 else np.maximum(acts[i], 0.0)
            weights[i] -= lr * (inp.T @ grad)
            if i > 0:
                grad = (grad @ weights[i].T) * (acts[i] > 0)
    return weights


# ---------------------------------------------------------------------------
# Accuracy evaluation


@dataclass
class EvalReport:
    analog_accuracy: float
    baseline_accuracy: float
    degradation_points: float          # baseline - analog, in percentage points
    per_class_analog: np.ndarray
    per_class_baseline: np.ndarray


def _accuracy(scores: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean(np.argmax(scores, axis=1) == y))


def _per_class_accuracy(scores: np.ndarray, y: np.ndarray, n_classes: int) -> np.ndarray:
    pred = np.argmax(scores, axis=1)
    return np.array([
        float(np.mean(pred[y == k] == k)) if np.any(y == k) else np.nan
        for k in range(n_classes)
    ])


def evaluate(
    net: AnalogNetwork,
    x: np.ndarray,
    y: np.ndarray,
    baseline_weights: Sequence[np.ndarray],
) -> EvalReport:
    """Classification accuracy of the analog network against its float twin."""
    n_classes = baseline_weights[-1].shape[1]
    analog_scores = net.forward(x)
    float_scores = float_forward(baseline_weights, x)
    acc_a = _accuracy(analog_scores, y)
    acc_f = _accuracy(float_scores, y)
    return EvalReport(
        analog_accuracy=acc_a,
        baseline_accuracy=acc_f,
        degradation_points=100.0 * (acc_f - acc_a),
        per_class_analog=_per_class_accuracy(analog_scores, y, n_classes),
        per_class_baseline=_per_class_accuracy(float_scores, y, n_classes),
    )
