"""Annealed Langevin sampling.

Chains start at the coarsest noise level, x0 ~ N(0, sigma_1^2 I), and walk

    x <- x + eps_i/2 * s(x, sigma_i) + sqrt(eps_i) * z

for a fixed number of steps per level, with eps_i = eps * sigma_i^2 /
sigma_K^2 so the step shrinks with the noise. An optional final step

    x <- x + sigma_K^2 * s(x, sigma_K)

removes the residual level-K blur.

Each chain owns the RNG stream default_rng([seed, chain]), so results per
chain do not depend on how many chains run alongside it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericError
from .model import ScoreModel, score
from .training import NoiseSchedule


@dataclass
class SamplerConfig:
    n_steps: int = 100     # Langevin steps per noise level
    eps: float = 2e-5      # step size at the finest level
    denoise: bool = True   # take the final noise-free score step
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_steps < 1:
            raise ConfigError("n_steps must be positive")
        if self.eps <= 0.0:
            raise ConfigError("eps must be positive")


def _score_fn(model):
    """Accept a ScoreModel or any callable (x, sigma) -> score, so the
    sampler can be driven by analytic scores in isolation."""
    if isinstance(model, ScoreModel):
        return lambda x, sigma: score(model, x, sigma)
    if callable(model):
        return model
    raise ConfigError(f"cannot sample from {type(model).__name__}")


def langevin_step(model, x: np.ndarray, sigma: float,
                  eps: float, z: np.ndarray) -> np.ndarray:
    """One update with externally supplied noise z."""
    return x + 0.5 * eps * _score_fn(model)(x, sigma) + np.sqrt(eps) * z


def sample_chain(model, d: int, schedule: NoiseSchedule, config: SamplerConfig,
                 chain: int, trajectory: bool = False):
    """Run one chain to completion.

    Returns the final point, or with `trajectory` the (K+1, d) array of the
    initial point plus the state after each level (before denoising).
    """
    s = _score_fn(model)
    rng = np.random.default_rng([config.seed, chain])
    sig = schedule.sigmas
    x = sig[0] * rng.standard_normal(d)
    snaps = [x.copy()]
    eps_per_level = config.eps * sig ** 2 / sig[-1] ** 2
    for i in range(sig.size):
        for t in range(config.n_steps):
            z = rng.standard_normal(d)
            x = x + 0.5 * eps_per_level[i] * s(x, float(sig[i])) \
                + np.sqrt(eps_per_level[i]) * z
            if not np.all(np.isfinite(x)):
                raise NumericError(f"chain {chain} diverged at level {i} step {t}")
        snaps.append(x.copy())
    if config.denoise:
        x = x + sig[-1] ** 2 * s(x, float(sig[-1]))
        if not np.all(np.isfinite(x)):
            raise NumericError(f"chain {chain} diverged in the denoising step")
    return np.array(snaps) if trajectory else x


def sample(model, schedule: NoiseSchedule, config: SamplerConfig,
           n_chains: int, d: int | None = None) -> np.ndarray:
    """Draw `n_chains` independent samples; shape (n_chains, d).

    `d` defaults to the model's dimension and must be given for callable
    scores.
    """
    if n_chains < 1:
        raise ConfigError("n_chains must be positive")
    if d is None:
        if not isinstance(model, ScoreModel):
            raise ConfigError("pass d explicitly when sampling from a callable score")
        d = model.d
    return np.stack([sample_chain(model, d, schedule, config, c)
                     for c in range(n_chains)])
