"""Noise-conditioned denoising score matching.

Each data point is corrupted as x~ = x + sigma * z with z standard normal,
and the model's score at (x~, sigma) regresses onto (x - x~) / sigma^2.
The per-level weight lambda(sigma) = sigma^2 balances the levels so a
zero-score model sits at expected loss d regardless of the schedule.

Network weights take Adam steps; the statistic weight eta takes plain SGD
steps on its analytic gradient. Both update every batch.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import pdist

from . import autodiff
from .errors import ConfigError, NumericError, ShapeError
from .model import ScoreModel, score_batch, score_net_on_tape, save_model


@dataclass
class NoiseSchedule:
    """Descending noise levels sigma_1 > ... > sigma_K > 0."""

    sigmas: np.ndarray

    def __post_init__(self) -> None:
        self.sigmas = np.asarray(self.sigmas, dtype=np.float64)
        if self.sigmas.ndim != 1 or self.sigmas.size == 0:
            raise ConfigError("schedule needs a non-empty 1-d array of levels")
        if np.any(self.sigmas <= 0.0):
            raise ConfigError("noise levels must be positive")
        if np.any(np.diff(self.sigmas) > 0.0):
            raise ConfigError("noise levels must be non-increasing")

    @property
    def n_levels(self) -> int:
        return self.sigmas.size

    @property
    def sigma_min(self) -> float:
        return float(self.sigmas[-1])

    @property
    def sigma_max(self) -> float:
        return float(self.sigmas[0])


def make_geometric_schedule(sigma_max: float, sigma_min: float = 0.01,
                            n_levels: int = 10) -> NoiseSchedule:
    if sigma_max < sigma_min:
        raise ConfigError(f"sigma_max {sigma_max} < sigma_min {sigma_min}")
    if n_levels == 1:
        return NoiseSchedule(np.array([sigma_max]))
    return NoiseSchedule(np.geomspace(sigma_max, sigma_min, n_levels))


def schedule_from_data(X: np.ndarray, sigma_min: float = 0.01,
                       n_levels: int = 10) -> NoiseSchedule:
    """Geometric schedule whose top level is the maximum pairwise distance
    in the training set, so the coarsest noise swamps the data geometry."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ConfigError(f"need a (N>=2, d) data array, got {X.shape}")
    sigma_max = float(pdist(X).max())
    if sigma_max <= sigma_min:
        raise ConfigError(f"data spread {sigma_max:g} does not exceed sigma_min {sigma_min:g}")
    return make_geometric_schedule(sigma_max, sigma_min, n_levels)


def lambda_weight(sigmas: np.ndarray) -> np.ndarray:
    return np.asarray(sigmas, dtype=np.float64) ** 2


def perturb(X: np.ndarray, sigmas: np.ndarray,
            rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Corrupt each row with its own noise level.

    Returns (X_tilde, targets) with targets = (x - x~) / sigma^2 = -z / sigma.
    """
    X = np.asarray(X, dtype=np.float64)
    s = np.asarray(sigmas, dtype=np.float64)
    if s.shape != (X.shape[0],):
        raise ShapeError(f"need one sigma per row, got {s.shape} for {X.shape[0]} rows")
    z = rng.standard_normal(X.shape)
    return X + s[:, None] * z, -z / s[:, None]


def dsm_terms(model: ScoreModel, X_tilde: np.ndarray, sigmas: np.ndarray,
              targets: np.ndarray) -> tuple[float, dict[str, np.ndarray], np.ndarray]:
    """Loss and gradients from pre-drawn perturbations.

    Deterministic given its inputs, which makes it directly checkable
    against finite differences. Returns (loss, network grads, eta grad).
    """
    B = X_tilde.shape[0]
    tape, out = score_net_on_tape(model, X_tilde, sigmas)
    J = model.statistic.jac_batch(np.asarray(X_tilde, dtype=np.float64))
    resid = tape.value(out) + J @ model.eta - targets
    lam = lambda_weight(sigmas)
    loss = float((lam * (resid * resid).sum(axis=1)).mean())
    cotangent = (2.0 / B) * lam[:, None] * resid
    theta_grads = autodiff.backward(tape, cotangent)
    eta_grad = (2.0 / B) * np.einsum("b,bdm,bd->m", lam, J, resid)
    return loss, theta_grads, eta_grad


def dsm_loss(model: ScoreModel, X_tilde: np.ndarray, sigmas: np.ndarray,
             targets: np.ndarray) -> float:
    """Loss only, no tape; cheap evaluation on frozen perturbations."""
    resid = score_batch(model, X_tilde, sigmas) - targets
    lam = lambda_weight(sigmas)
    return float((lam * (resid * resid).sum(axis=1)).mean())


def make_batch(X: np.ndarray, schedule: NoiseSchedule, rng: np.random.Generator,
               mode: str = "stochastic") -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Assign noise levels and corrupt a batch.

    `stochastic` draws one uniform level per example; `exact` replicates
    every example across all levels, recovering the full per-level average
    (the two agree in expectation).
    """
    X = np.asarray(X, dtype=np.float64)
    if mode == "stochastic":
        s = schedule.sigmas[rng.integers(0, schedule.n_levels, size=X.shape[0])]
    elif mode == "exact":
        X = np.repeat(X, schedule.n_levels, axis=0)
        s = np.tile(schedule.sigmas, X.shape[0] // schedule.n_levels)
    else:
        raise ConfigError(f"unknown loss mode {mode!r}")
    X_tilde, targets = perturb(X, s, rng)
    return X_tilde, s, targets


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 128
    lr: float = 1e-3
    eta_lr: float = 1e-2
    fit_eta: bool = True
    mode: str = "stochastic"
    seed: int = 0
    checkpoint_every: int = 0
    checkpoint_path: str = ""
    loss_cap: float = 1e6


@dataclass
class TrainResult:
    losses: np.ndarray                      # mean loss per epoch
    eta_history: np.ndarray                 # (epochs + 1, m), row 0 = initial
    schedule: NoiseSchedule
    log_lines: list[str] = field(default_factory=list)


def train(model: ScoreModel, X: np.ndarray, schedule: NoiseSchedule,
          config: TrainConfig, log_fn=None) -> TrainResult:
    """Run DSM training in place on `model`.

    Emits one log line per epoch of the form `epoch <n> loss <val> eta
    <values>`. Raises NumericError if the loss exceeds `loss_cap` or goes
    non-finite, leaving the model in its diverged state for post-mortems.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.d:
        raise ShapeError(f"data shape {X.shape} does not match model dim {model.d}")
    if config.epochs < 1 or config.batch_size < 1:
        raise ConfigError("epochs and batch_size must be positive")

    rng = np.random.default_rng(config.seed)
    opt = autodiff.init_adam(model.params.param_dict(), lr=config.lr)
    losses = np.zeros(config.epochs)
    eta_history = [model.eta.copy()]
    log_lines: list[str] = []

    for epoch in range(config.epochs):
        perm = rng.permutation(X.shape[0])
        epoch_losses = []
        for start in range(0, X.shape[0], config.batch_size):
            batch = X[perm[start:start + config.batch_size]]
            X_tilde, s, targets = make_batch(batch, schedule, rng, config.mode)
            loss, theta_grads, eta_grad = dsm_terms(model, X_tilde, s, targets)
            if not np.isfinite(loss) or loss > config.loss_cap:
                raise NumericError(f"training diverged at epoch {epoch}: loss {loss:g}")
            autodiff.adam_step(opt, model.params.param_dict(), theta_grads)
            if config.fit_eta:
                model.eta = model.eta - config.eta_lr * eta_grad
            epoch_losses.append(loss)
        losses[epoch] = float(np.mean(epoch_losses))
        eta_history.append(model.eta.copy())
        line = (f"epoch {epoch} loss {losses[epoch]:.6f} eta "
                + " ".join(f"{v:.6f}" for v in model.eta))
        log_lines.append(line)
        if log_fn is not None:
            log_fn(line)
        if (config.checkpoint_every and config.checkpoint_path
                and (epoch + 1) % config.checkpoint_every == 0):
            save_model(model, config.checkpoint_path,
                       {"epoch": str(epoch + 1),
                        "sigmas": ",".join(f"{v:.17g}" for v in schedule.sigmas)})

    return TrainResult(losses, np.array(eta_history), schedule, log_lines)
