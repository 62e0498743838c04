"""Dense array math with a tape-based reverse-mode gradient engine.

A Tape is a flat record of primitive operations in execution order; the
backward pass replays it in strict reverse insertion order, so gradient
accumulation order is fixed and repeated runs are bit-identical. Everything
is float64. Shapes are checked explicitly: there is no implicit
broadcasting between mismatched operands.

Also provides the MLP used as the neural score term and a plain Adam
optimizer over named parameter dicts.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import NumericError, ShapeError, StateError

ACTIVATIONS = ("tanh", "softplus", "identity")


def _as_f64(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


@dataclass
class Node:
    op: str
    parents: tuple[int, ...]
    value: np.ndarray
    # maps the upstream gradient to one gradient per parent; None for leaves
    vjp: Callable[[np.ndarray], tuple[np.ndarray, ...]] | None = None
    name: str | None = None  # set for named parameter leaves


class Tape:
    """Single-use record of one forward evaluation."""

    def __init__(self) -> None:
        self.nodes: list[Node] = []
        self.consumed = False

    def _push(self, node: Node) -> int:
        self.nodes.append(node)
        return len(self.nodes) - 1

    def value(self, nid: int) -> np.ndarray:
        return self.nodes[nid].value

    # --- leaves ---

    def input(self, value) -> int:
        return self._push(Node("input", (), _as_f64(value)))

    def param(self, value, name: str) -> int:
        return self._push(Node("param", (), _as_f64(value), name=name))

    # --- primitive ops ---

    def linear(self, xid: int, wid: int, bid: int) -> int:
        """X @ W.T + b for X (B, n_in), W (n_out, n_in), b (n_out,)."""
        x, w, b = self.value(xid), self.value(wid), self.value(bid)
        if x.ndim != 2 or w.ndim != 2 or b.ndim != 1:
            raise ShapeError(
                f"linear expects X 2-d, W 2-d, b 1-d; got {x.shape}, {w.shape}, {b.shape}"
            )
        if x.shape[1] != w.shape[1]:
            raise ShapeError(f"linear: X has {x.shape[1]} columns, W expects {w.shape[1]}")
        if b.shape[0] != w.shape[0]:
            raise ShapeError(f"linear: bias length {b.shape[0]} != {w.shape[0]} outputs")
        out = x @ w.T + b

        def vjp(g: np.ndarray):
            return g @ w, g.T @ x, g.sum(axis=0)

        return self._push(Node("linear", (xid, wid, bid), out, vjp))

    def tanh(self, xid: int) -> int:
        out = np.tanh(self.value(xid))

        def vjp(g: np.ndarray):
            return (g * (1.0 - out * out),)

        return self._push(Node("tanh", (xid,), out, vjp))

    def softplus(self, xid: int) -> int:
        x = self.value(xid)
        # log(1 + e^x) computed stably for large |x|
        out = np.logaddexp(0.0, x)

        def vjp(g: np.ndarray):
            return (g * _sigmoid(x),)

        return self._push(Node("softplus", (xid,), out, vjp))

    def row_scale(self, xid: int, scale: np.ndarray) -> int:
        """Multiply each row by a constant per-row factor (not differentiated)."""
        x = self.value(xid)
        s = _as_f64(scale)
        if x.ndim != 2 or s.shape != (x.shape[0],):
            raise ShapeError(f"row_scale: X {x.shape} needs scale of shape ({x.shape[0]},)")
        out = x * s[:, None]

        def vjp(g: np.ndarray):
            return (g * s[:, None],)

        return self._push(Node("row_scale", (xid,), out, vjp))


def backward(tape: Tape, output_grad) -> dict[str, np.ndarray]:
    """Run reverse-mode accumulation; returns gradients for named params.

    `output_grad` is the cotangent of the tape's final node (e.g. d loss /
    d network output). A tape records exactly one forward evaluation and
    may only be walked backward once.
    """
    if not tape.nodes:
        raise StateError("cannot run backward on an empty tape")
    if tape.consumed:
        raise StateError("tape already consumed; record a fresh forward pass")
    tape.consumed = True

    g_out = _as_f64(output_grad)
    last = tape.nodes[-1]
    if g_out.shape != last.value.shape:
        raise ShapeError(f"output_grad shape {g_out.shape} != output shape {last.value.shape}")

    grads: list[np.ndarray | None] = [None] * len(tape.nodes)
    grads[-1] = g_out
    for nid in range(len(tape.nodes) - 1, -1, -1):
        node = tape.nodes[nid]
        g = grads[nid]
        if g is None or node.vjp is None:
            continue
        for pid, pg in zip(node.parents, node.vjp(g)):
            if grads[pid] is None:
                grads[pid] = pg.copy()
            else:
                grads[pid] += pg

    out: dict[str, np.ndarray] = {}
    for node, g in zip(tape.nodes, grads):
        if node.name is not None:
            out[node.name] = g if g is not None else np.zeros_like(node.value)
    return out


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


# --- MLP ---


@dataclass
class MlpParams:
    """Fully-connected layers; the last activation is always identity."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activations: list[str]

    def __post_init__(self) -> None:
        if not (len(self.weights) == len(self.biases) == len(self.activations)):
            raise ShapeError("weights, biases, activations must have equal length")
        for act in self.activations:
            if act not in ACTIVATIONS:
                raise ShapeError(f"unknown activation {act!r}")
        for i in range(1, len(self.weights)):
            if self.weights[i].shape[1] != self.weights[i - 1].shape[0]:
                raise ShapeError(f"layer {i} input dim {self.weights[i].shape[1]} does not "
                                 f"chain with layer {i - 1} output {self.weights[i - 1].shape[0]}")
        if self.activations and self.activations[-1] != "identity":
            raise ShapeError("final activation must be identity")

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def dims(self) -> list[int]:
        return [self.input_dim] + [w.shape[0] for w in self.weights]

    def param_dict(self) -> dict[str, np.ndarray]:
        """Live views of all parameters, keyed w0, b0, w1, ..."""
        out: dict[str, np.ndarray] = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"w{i}"] = w
            out[f"b{i}"] = b
        return out

    def copy(self) -> "MlpParams":
        return MlpParams([w.copy() for w in self.weights],
                         [b.copy() for b in self.biases],
                         list(self.activations))


def init_mlp(dims: Sequence[int], rng: np.random.Generator,
             hidden_activation: str = "tanh") -> MlpParams:
    """Glorot-uniform hidden layers; the final layer starts at zero so a
    fresh model contributes nothing to the score."""
    if len(dims) < 2:
        raise ShapeError("need at least input and output dims")
    weights, biases, acts = [], [], []
    n_layers = len(dims) - 1
    for i in range(n_layers):
        fan_in, fan_out = dims[i], dims[i + 1]
        last = i == n_layers - 1
        if last:
            w = np.zeros((fan_out, fan_in))
        else:
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            w = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        weights.append(w)
        biases.append(np.zeros(fan_out))
        acts.append("identity" if last else hidden_activation)
    return MlpParams(weights, biases, acts)


def forward_on_tape(params: MlpParams, x: np.ndarray,
                    row_scale: np.ndarray | None = None) -> tuple[Tape, int]:
    """Record a batched forward pass; returns the tape and output node id.

    `row_scale` optionally multiplies output rows by a constant factor
    (used to divide the raw network output by the noise level).
    """
    x = _as_f64(x)
    if x.ndim != 2:
        raise ShapeError(f"forward_on_tape expects a (batch, dim) array, got {x.shape}")
    if x.shape[1] != params.input_dim:
        raise ShapeError(f"input has {x.shape[1]} features, network expects {params.input_dim}")
    tape = Tape()
    hid = tape.input(x)
    for i, (w, b, act) in enumerate(zip(params.weights, params.biases, params.activations)):
        wid = tape.param(w, f"w{i}")
        bid = tape.param(b, f"b{i}")
        hid = tape.linear(hid, wid, bid)
        if act == "tanh":
            hid = tape.tanh(hid)
        elif act == "softplus":
            hid = tape.softplus(hid)
    if row_scale is not None:
        hid = tape.row_scale(hid, row_scale)
    return tape, hid


def forward_batch(params: MlpParams, x: np.ndarray) -> np.ndarray:
    """Plain batched forward pass without recording."""
    x = _as_f64(x)
    if x.ndim != 2 or x.shape[1] != params.input_dim:
        raise ShapeError(f"input shape {x.shape} incompatible with input_dim {params.input_dim}")
    h = x
    for w, b, act in zip(params.weights, params.biases, params.activations):
        h = h @ w.T + b
        if act == "tanh":
            h = np.tanh(h)
        elif act == "softplus":
            h = np.logaddexp(0.0, h)
    return h


def forward(params: MlpParams, x: np.ndarray) -> np.ndarray:
    """Single-example forward pass; `x` must have length input_dim."""
    x = _as_f64(x)
    if x.ndim != 1 or x.shape[0] != params.input_dim:
        raise ShapeError(f"input length {x.shape} != input_dim {params.input_dim}")
    return forward_batch(params, x[None, :])[0]


# --- Adam ---


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def init_adam(params: dict[str, np.ndarray], lr: float = 1e-3,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    return AdamState(
        m={k: np.zeros_like(v) for k, v in params.items()},
        v={k: np.zeros_like(v) for k, v in params.items()},
        step=0, lr=lr, beta1=beta1, beta2=beta2, eps=eps,
    )


def adam_step(state: AdamState, params: dict[str, np.ndarray],
              grads: dict[str, np.ndarray]) -> None:
    """One bias-corrected Adam update, applied to `params` in place."""
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeError(f"gradient for {name} has shape {g.shape}, parameter {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter {name}")
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for name, p in params.items():
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
