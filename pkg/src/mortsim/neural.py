"""Sliding-window dense cell: forward pass, recursive rollout, BPTT, RMSProp.

The cell maps N consecutive log-rates to the next one through K layers
(ReLU on hidden layers, identity on the scalar output). Multi-step
extrapolation feeds every prediction back into the window and drops the
oldest entry. Everything is float64 numpy; batches are rows.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CheckpointMismatch, EmptyBatch, InvalidSpec, ShapeMismatch

CHECKPOINT_FORMAT = "mortsim-dense-cell"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class CellSpec:
    input_size: int
    depth: int
    hidden_width: int

    def __post_init__(self):
        if self.depth < 2 or self.input_size < 1 or self.hidden_width < 1:
            raise InvalidSpec(f"need K >= 2, N >= 1, H >= 1; got {self}")

    @property
    def dims(self) -> list[int]:
        return [self.input_size] + [self.hidden_width] * (self.depth - 2) + [1]

    @property
    def n_params(self) -> int:
        d = self.dims
        return sum(d[k] * d[k - 1] + d[k] for k in range(1, len(d)))


@dataclass
class DenseCell:
    """Weights ``W[k]`` of shape (D_{k+1}, D_k) and biases ``b[k]`` of length D_{k+1}.

    Index k=0 is the map from the input window to the first hidden layer.
    """

    spec: CellSpec
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        d = self.spec.dims
        if len(self.weights) != len(d) - 1 or len(self.biases) != len(d) - 1:
            raise ShapeMismatch("wrong number of layers for spec")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (d[k + 1], d[k]) or b.shape != (d[k + 1],):
                raise ShapeMismatch(
                    f"layer {k + 1}: got W{w.shape}, b{b.shape}, expected W{(d[k + 1], d[k])}"
                )

    def copy(self) -> "DenseCell":
        return DenseCell(self.spec, [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def params(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases]

    def flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params()])

    def with_flat(self, theta: np.ndarray) -> "DenseCell":
        out = self.copy()
        i = 0
        for p in out.params():
            p[...] = theta[i:i + p.size].reshape(p.shape)
            i += p.size
        return out


@dataclass
class Gradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def params(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases]

    def flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params()])

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.params())


def _truncated_normal(rng: np.random.Generator, sigma: float, shape) -> np.ndarray:
    out = rng.normal(0.0, sigma, size=shape)
    bad = np.abs(out) > 2 * sigma
    while bad.any():
        out[bad] = rng.normal(0.0, sigma, size=int(bad.sum()))
        bad = np.abs(out) > 2 * sigma
    return out


def init_cell(spec: CellSpec, b_init: float, sigma_init: float, seed: int) -> DenseCell:
    """Constant biases, weights from N(0, sigma) redrawn until within two sigma."""
    if b_init <= 0 or sigma_init <= 0:
        raise InvalidSpec("b_init and sigma_init must be positive")
    rng = np.random.default_rng(seed)
    d = spec.dims
    weights = [_truncated_normal(rng, sigma_init, (d[k + 1], d[k])) for k in range(len(d) - 1)]
    biases = [np.full(d[k + 1], float(b_init)) for k in range(len(d) - 1)]
    return DenseCell(spec, weights, biases)


def _as_windows(cell: DenseCell, xi) -> tuple[np.ndarray, bool]:
    xi = np.asarray(xi, dtype=float)
    single = xi.ndim == 1
    if single:
        xi = xi[None, :]
    if xi.ndim != 2 or xi.shape[1] != cell.spec.input_size:
        raise ShapeMismatch(f"expected windows of length {cell.spec.input_size}, got {xi.shape}")
    return xi, single


def _forward_layers(cell: DenseCell, z: np.ndarray):
    """Pre-activations of every layer for a (B, N) batch; last entry is the output."""
    pre = []
    last = len(cell.weights) - 1
    for k, (w, b) in enumerate(zip(cell.weights, cell.biases)):
        a = z @ w.T + b
        pre.append(a)
        z = a if k == last else np.maximum(a, 0.0)
    return pre


def forward(cell: DenseCell, xi):
    """Next log-rate for one window (scalar) or a (B, N) batch (vector)."""
    z, single = _as_windows(cell, xi)
    out = _forward_layers(cell, z)[-1][:, 0]
    return float(out[0]) if single else out


def _rollout_cached(cell: DenseCell, windows: np.ndarray, k: int):
    outs = np.empty((windows.shape[0], k))
    cache = []
    w = windows
    for j in range(k):
        pre = _forward_layers(cell, w)
        cache.append((w, pre))
        outs[:, j] = pre[-1][:, 0]
        w = np.concatenate([w[:, 1:], outs[:, j:j + 1]], axis=1)
    return outs, cache


def rollout(cell: DenseCell, xi, k: int) -> np.ndarray:
    """Apply the cell recursively ``k`` times; returns (k,) or (B, k)."""
    if k < 1:
        raise ShapeMismatch("rollout needs k >= 1")
    z, single = _as_windows(cell, xi)
    outs, _ = _rollout_cached(cell, z, k)
    return outs[0] if single else outs


def _check_batch(cell: DenseCell, windows, targets):
    windows = np.asarray(windows, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if windows.ndim != 2 or windows.shape[0] == 0:
        raise EmptyBatch("batch is empty")
    if targets.ndim != 2 or targets.shape[0] != windows.shape[0] or targets.shape[1] < 1:
        raise ShapeMismatch(f"targets {targets.shape} do not match windows {windows.shape}")
    if windows.shape[1] != cell.spec.input_size:
        raise ShapeMismatch(f"expected windows of length {cell.spec.input_size}, got {windows.shape}")
    return windows, targets


def loss(cell: DenseCell, windows, targets) -> float:
    """Mean over the batch of the squared distance between rollout and target."""
    windows, targets = _check_batch(cell, windows, targets)
    outs = rollout(cell, windows, targets.shape[1])
    return float(np.mean(np.sum((outs - targets) ** 2, axis=1)))


def backward(cell: DenseCell, windows, targets, stop_gradient: bool = False) -> tuple[float, Gradients]:
    """Loss and its exact gradient, back-propagated through the rollout.

    With ``stop_gradient`` the re-fed predictions are treated as constants,
    so each step contributes only its direct single-step gradient.
    """
    windows, targets = _check_batch(cell, windows, targets)
    n_batch, n_steps = targets.shape
    n_in = cell.spec.input_size
    outs, cache = _rollout_cached(cell, windows, n_steps)
    resid = outs - targets
    value = float(np.mean(np.sum(resid ** 2, axis=1)))

    gw = [np.zeros_like(w) for w in cell.weights]
    gb = [np.zeros_like(b) for b in cell.biases]
    n_layers = len(cell.weights)
    # gradients arriving from later steps: w.r.t. window_j and w.r.t. output_j
    carry_win = np.zeros((n_batch, n_in))
    carry_out = np.zeros((n_batch, 1))
    for j in range(n_steps - 1, -1, -1):
        w_in, pre = cache[j]
        delta = (2.0 / n_batch) * resid[:, j:j + 1] + carry_out
        for k in range(n_layers - 1, -1, -1):
            below = w_in if k == 0 else np.maximum(pre[k - 1], 0.0)
            gw[k] += delta.T @ below
            gb[k] += delta.sum(axis=0)
            if k > 0:
                delta = (delta @ cell.weights[k]) * (pre[k - 1] > 0)
        if stop_gradient or j == 0:
            continue
        d_window = delta @ cell.weights[0] + carry_win
        # window_j = [window_{j-1}[1:], output_{j-1}]
        carry_win = np.zeros_like(carry_win)
        carry_win[:, 1:] = d_window[:, :n_in - 1]
        carry_out = d_window[:, n_in - 1:n_in]
    return value, Gradients(gw, gb)


def cell_jacobian(cell: DenseCell, window: np.ndarray) -> np.ndarray:
    """d output / d window for a single window, shape (N,)."""
    pre = _forward_layers(cell, window[None, :])
    jac = cell.weights[0]
    for k in range(1, len(cell.weights)):
        jac = cell.weights[k] @ ((pre[k - 1][0] > 0)[:, None] * jac)
    return jac[0]


def input_jacobian(cell: DenseCell, xi, k: int) -> np.ndarray:
    """(k, N) matrix of d rollout[j] / d xi[m], including recursion paths."""
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (cell.spec.input_size,):
        raise ShapeMismatch(f"expected a window of length {cell.spec.input_size}")
    if k < 1:
        raise ShapeMismatch("k must be >= 1")
    n = xi.size
    window = xi.copy()
    d_window = np.eye(n)  # row m: d window[m] / d xi
    out = np.empty((k, n))
    for j in range(k):
        out[j] = cell_jacobian(cell, window) @ d_window
        nxt = forward(cell, window)
        window = np.append(window[1:], nxt)
        d_window = np.vstack([d_window[1:], out[j]])
    return out


@dataclass
class RmsPropState:
    learning_rate: float
    decay: float = 0.9
    eps: float = 1e-10
    acc_w: list[np.ndarray] = field(default_factory=list)
    acc_b: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise InvalidSpec("learning rate must be positive")

    @classmethod
    def fresh(cls, cell: DenseCell, learning_rate: float, decay: float = 0.9, eps: float = 1e-10):
        return cls(
            learning_rate, decay, eps,
            [np.zeros_like(w) for w in cell.weights],
            [np.zeros_like(b) for b in cell.biases],
        )

    def copy(self) -> "RmsPropState":
        return RmsPropState(
            self.learning_rate, self.decay, self.eps,
            [a.copy() for a in self.acc_w], [a.copy() for a in self.acc_b],
        )


def rmsprop_update_(state: RmsPropState, cell: DenseCell, g: Gradients) -> None:
    """In-place variant of :func:`rmsprop_step` used by the trainer."""
    rho, lr, eps = state.decay, state.learning_rate, state.eps
    for acc, p, gp in zip(state.acc_w + state.acc_b, cell.params(), g.params()):
        if acc.shape != p.shape or gp.shape != p.shape:
            raise ShapeMismatch("optimizer state, parameters and gradients disagree in shape")
        acc *= rho
        acc += (1.0 - rho) * gp * gp
        p -= lr * gp / (np.sqrt(acc) + eps)


def rmsprop_step(state: RmsPropState, cell: DenseCell, g: Gradients) -> tuple[RmsPropState, DenseCell]:
    new_state, new_cell = state.copy(), cell.copy()
    rmsprop_update_(new_state, new_cell, g)
    return new_state, new_cell


def save_checkpoint(path, cell: DenseCell, seed: int | None = None, extra: dict | None = None) -> None:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "spec": {
            "input_size": cell.spec.input_size,
            "depth": cell.spec.depth,
            "hidden_width": cell.spec.hidden_width,
        },
        "seed": seed,
        "layers": [
            {"rows": int(w.shape[0]), "cols": int(w.shape[1]),
             "weights": w.ravel().tolist(), "bias": b.tolist()}
            for w, b in zip(cell.weights, cell.biases)
        ],
    }
    if extra:
        doc["extra"] = extra
    Path(path).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


def load_checkpoint(path) -> tuple[DenseCell, dict]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != CHECKPOINT_FORMAT or doc.get("version") != CHECKPOINT_VERSION:
        raise CheckpointMismatch(f"{path}: not a version-{CHECKPOINT_VERSION} {CHECKPOINT_FORMAT} file")
    spec = CellSpec(**doc["spec"])
    weights, biases = [], []
    for layer in doc["layers"]:
        weights.append(np.array(layer["weights"], dtype=float).reshape(layer["rows"], layer["cols"]))
        biases.append(np.array(layer["bias"], dtype=float))
    try:
        cell = DenseCell(spec, weights, biases)
    except ShapeMismatch as e:
        raise CheckpointMismatch(f"{path}: {e}") from None
    return cell, {"seed": doc.get("seed"), **doc.get("extra", {})}
