"""Hybrid score model: neural term plus weighted statistic gradient.

The score of x at noise level sigma is

    s(x, sigma) = net([x, log sigma]) / sigma  +  J_T(x) @ eta

where net is an MLP conditioned on the noise level, J_T is the d-by-m
input Jacobian of the statistic, and eta weights the statistic channels.
The network realizes the gradient of an implicit energy; the energy itself
is never materialized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff
from .autodiff import MlpParams, Tape
from .errors import NumericError, ParseError, ShapeError
from .statistics import Statistic, statistic_from_string
from .checkpoint import read_checkpoint, write_checkpoint


@dataclass
class ScoreModel:
    params: MlpParams
    statistic: Statistic
    eta: np.ndarray

    def __post_init__(self) -> None:
        self.eta = np.asarray(self.eta, dtype=np.float64)
        d = self.statistic.d
        if self.params.input_dim != d + 1:
            raise ShapeError(f"network input_dim {self.params.input_dim} != d+1 = {d + 1}")
        if self.params.output_dim != d:
            raise ShapeError(f"network output_dim {self.params.output_dim} != d = {d}")
        if self.eta.shape != (self.statistic.m,):
            raise ShapeError(f"eta shape {self.eta.shape} != ({self.statistic.m},)")

    @property
    def d(self) -> int:
        return self.statistic.d


def new_model(statistic: Statistic, hidden=(64, 64), seed: int = 0,
              hidden_activation: str = "tanh") -> ScoreModel:
    """Fresh model; the zero-initialized final layer makes the initial
    score exactly the statistic term (which is itself zero while eta is)."""
    d = statistic.d
    rng = np.random.default_rng(seed)
    params = autodiff.init_mlp([d + 1] + list(hidden) + [d], rng, hidden_activation)
    return ScoreModel(params, statistic, np.zeros(statistic.m))


def _net_input(X: np.ndarray, sigmas: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeError(f"expected a (batch, d) array, got {X.shape}")
    s = np.asarray(sigmas, dtype=np.float64)
    if s.ndim == 0:
        s = np.full(X.shape[0], float(s))
    if s.shape != (X.shape[0],):
        raise ShapeError(f"sigmas shape {s.shape} does not match batch {X.shape[0]}")
    if np.any(s <= 0.0):
        raise NumericError("noise levels must be positive")
    return np.hstack([X, np.log(s)[:, None]]), s


def statistic_term(model: ScoreModel, X: np.ndarray) -> np.ndarray:
    """J_T(x) @ eta for each row; independent of the noise level."""
    if np.all(model.eta == 0.0):
        return np.zeros_like(np.asarray(X, dtype=np.float64))
    J = model.statistic.jac_batch(np.asarray(X, dtype=np.float64))
    return J @ model.eta


def score_batch(model: ScoreModel, X: np.ndarray, sigmas) -> np.ndarray:
    net_in, s = _net_input(X, sigmas)
    raw = autodiff.forward_batch(model.params, net_in)
    return raw / s[:, None] + statistic_term(model, X)


def score(model: ScoreModel, x: np.ndarray, sigma: float) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.d,):
        raise ShapeError(f"expected a length-{model.d} vector, got {x.shape}")
    return score_batch(model, x[None, :], sigma)[0]


def score_net_on_tape(model: ScoreModel, X: np.ndarray, sigmas) -> tuple[Tape, int]:
    """Record the neural score term (including the /sigma scaling) so the
    training loop can backpropagate a loss cotangent through it. The
    statistic term carries no network parameters and stays off the tape.
    """
    net_in, s = _net_input(X, sigmas)
    return autodiff.forward_on_tape(model.params, net_in, row_scale=1.0 / s)


# --- persistence ---


def save_model(model: ScoreModel, path, extra_meta: dict[str, str] | None = None) -> None:
    """Write the model as a text checkpoint; identical models produce
    byte-identical files."""
    hidden_acts = {a for a in model.params.activations if a != "identity"}
    act = hidden_acts.pop() if hidden_acts else "tanh"
    meta = {
        "mlp": ",".join(str(n) for n in model.params.dims) + " " + act,
        "statistic": model.statistic.config_string(),
    }
    meta.update(extra_meta or {})
    params = dict(model.params.param_dict())
    params["eta"] = model.eta
    write_checkpoint(path, params, meta)


def load_model(path) -> tuple[ScoreModel, dict[str, str]]:
    """Read a checkpoint back into a model; returns (model, metadata)."""
    flats, meta = read_checkpoint(path)
    for key in ("mlp", "statistic"):
        if key not in meta:
            raise ParseError(f"{path}: missing {key!r} metadata line")
    arch = meta["mlp"].split()
    if len(arch) != 2:
        raise ParseError(f"{path}: malformed mlp line {meta['mlp']!r}")
    dims = [int(v) for v in arch[0].split(",")]
    act = arch[1]
    weights, biases, acts = [], [], []
    n_layers = len(dims) - 1
    for i in range(n_layers):
        try:
            w, b = flats[f"w{i}"], flats[f"b{i}"]
        except KeyError as e:
            raise ParseError(f"{path}: missing parameter {e.args[0]!r}") from None
        n_out, n_in = dims[i + 1], dims[i]
        if w.size != n_out * n_in or b.size != n_out:
            raise ParseError(f"{path}: layer {i} size mismatch against mlp line")
        weights.append(w.reshape(n_out, n_in))
        biases.append(b)
        acts.append("identity" if i == n_layers - 1 else act)
    if "eta" not in flats:
        raise ParseError(f"{path}: missing parameter 'eta'")
    stat = statistic_from_string(meta["statistic"])
    model = ScoreModel(MlpParams(weights, biases, acts), stat, flats["eta"])
    return model, meta
