"""Exact low-dimensional reference computations.

In one or two dimensions the unnormalized density exp(f(x) + eta . T(x))
can be integrated on a trapezoid grid, which gives the partition function,
expected statistics, and exact negative log-likelihoods without sampling.
That turns the fixed-point property of the statistic weights (at the
likelihood optimum the model's expected statistic equals the sample mean)
into a computable check, and provides ground truth the high-dimensional
code paths are tested against.

The integration box must be wide enough that essentially no mass sits on
its boundary; `boundary_mass` measures this and the fitting routine
enforces it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from .errors import ConfigError, NumericError, ShapeError
from .statistics import GapStatistic, RawMomentStatistic, SineStatistic, Statistic

GRID_1D = 2048
GRID_2D = 512
BOUNDARY_TOL = 1e-10


@dataclass
class DensitySpec:
    """p(x) proportional to exp(log_base(x) + eta . T(x)) on a box."""

    name: str
    dim: int
    statistic: Statistic
    log_base: Callable[[np.ndarray], np.ndarray]   # (M, dim) -> (M,)
    lo: np.ndarray
    hi: np.ndarray
    draw: Callable[[np.random.Generator, int], np.ndarray] | None = None

    def __post_init__(self) -> None:
        self.lo = np.broadcast_to(np.asarray(self.lo, dtype=np.float64), (self.dim,)).copy()
        self.hi = np.broadcast_to(np.asarray(self.hi, dtype=np.float64), (self.dim,)).copy()
        if np.any(self.hi <= self.lo):
            raise ConfigError(f"{self.name}: box upper bounds must exceed lower bounds")
        if self.statistic.d != self.dim:
            raise ConfigError(f"{self.name}: statistic dim {self.statistic.d} != {self.dim}")


def trapezoid_grid(lo: np.ndarray, hi: np.ndarray,
                   n_per_axis: int) -> tuple[np.ndarray, np.ndarray]:
    """Tensor-product trapezoid rule; returns points (M, d) and weights (M,)."""
    lo, hi = np.atleast_1d(lo), np.atleast_1d(hi)
    axes, wts = [], []
    for a in range(lo.size):
        x = np.linspace(lo[a], hi[a], n_per_axis)
        w = np.full(n_per_axis, x[1] - x[0])
        w[0] *= 0.5
        w[-1] *= 0.5
        axes.append(x)
        wts.append(w)
    if lo.size == 1:
        return axes[0][:, None], wts[0]
    if lo.size == 2:
        xx, yy = np.meshgrid(axes[0], axes[1], indexing="ij")
        pts = np.column_stack([xx.ravel(), yy.ravel()])
        return pts, np.outer(wts[0], wts[1]).ravel()
    raise ConfigError("quadrature supports 1 or 2 dimensions")


@dataclass
class PreparedDensity:
    """A spec with its grid values precomputed for repeated eta queries."""

    spec: DensitySpec
    pts: np.ndarray        # (M, d)
    weights: np.ndarray    # (M,)
    f_vals: np.ndarray     # (M,) log base density
    T_vals: np.ndarray     # (M, m)
    boundary: np.ndarray   # (M,) bool, outermost grid shell


def prepare(spec: DensitySpec, n_per_axis: int | None = None) -> PreparedDensity:
    if n_per_axis is None:
        n_per_axis = GRID_1D if spec.dim == 1 else GRID_2D
    pts, w = trapezoid_grid(spec.lo, spec.hi, n_per_axis)
    f = np.asarray(spec.log_base(pts), dtype=np.float64)
    if f.shape != (pts.shape[0],):
        raise ShapeError(f"{spec.name}: log_base returned shape {f.shape}")
    T = spec.statistic.value_batch(pts)
    edge = (pts == spec.lo) | (pts == spec.hi)
    return PreparedDensity(spec, pts, w, f, T, edge.any(axis=1))


def log_partition(prep: PreparedDensity, eta: np.ndarray) -> float:
    """log integral of exp(f + eta . T) over the box."""
    return float(logsumexp(prep.f_vals + prep.T_vals @ np.atleast_1d(eta), b=prep.weights))


def boundary_mass(prep: PreparedDensity, eta: np.ndarray) -> float:
    """Fraction of probability mass on the outermost grid shell."""
    logp = prep.f_vals + prep.T_vals @ np.atleast_1d(eta)
    total = logsumexp(logp, b=prep.weights)
    b = prep.boundary
    if not b.any():
        return 0.0
    edge = logsumexp(logp[b], b=prep.weights[b])
    return float(np.exp(edge - total))


def _check_box(prep: PreparedDensity, eta: np.ndarray) -> None:
    frac = boundary_mass(prep, eta)
    if not np.isfinite(frac) or frac > BOUNDARY_TOL:
        raise NumericError(f"{prep.spec.name}: boundary mass {frac:.3g} at eta={eta}; "
                           "integration box too small or density not integrable")


def expected_statistic(prep: PreparedDensity, eta: np.ndarray) -> np.ndarray:
    """E_p[T] under the density with weights eta; shape (m,)."""
    eta = np.atleast_1d(eta)
    logp = prep.f_vals + prep.T_vals @ eta
    logZ = logsumexp(logp, b=prep.weights)
    probs = prep.weights * np.exp(logp - logZ)
    return probs @ prep.T_vals


def exact_nll(prep: PreparedDensity, eta: np.ndarray, X: np.ndarray) -> float:
    """Mean negative log density of the rows of X, exactly normalized."""
    eta = np.atleast_1d(eta)
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    logZ = log_partition(prep, eta)
    f = np.asarray(prep.spec.log_base(X), dtype=np.float64)
    T = prep.spec.statistic.value_batch(X)
    return float(logZ - (f + T @ eta).mean())


@dataclass
class FitResult:
    eta: np.ndarray
    n_iter: int
    grad_norm: float
    trajectory: np.ndarray = field(repr=False)   # (n_iter + 1, m)


def fit_eta_exact(prep: PreparedDensity, target_mean: np.ndarray,
                  eta0: np.ndarray | None = None, tol: float = 1e-6,
                  max_iter: int = 500) -> FitResult:
    """Maximize the per-sample log-likelihood eta . t - log Z(eta).

    `target_mean` is the sample mean of the statistic (its sufficient
    summary). The objective is concave, so backtracking gradient ascent
    converges to the global optimum; at that point the model's expected
    statistic equals `target_mean` to within `tol`.
    """
    m = prep.spec.statistic.m
    t = np.broadcast_to(np.asarray(target_mean, dtype=np.float64), (m,)).copy()
    eta = np.zeros(m) if eta0 is None else np.atleast_1d(np.asarray(eta0, dtype=np.float64)).copy()
    _check_box(prep, eta)

    def objective(e: np.ndarray) -> float:
        return float(e @ t - log_partition(prep, e))

    obj = objective(eta)
    step = 1.0
    trajectory = [eta.copy()]
    for it in range(max_iter):
        grad = t - expected_statistic(prep, eta)
        gnorm = float(np.linalg.norm(grad))
        if gnorm <= tol:
            _check_box(prep, eta)
            return FitResult(eta, it, gnorm, np.array(trajectory))
        step = min(step * 2.0, 1e3)
        while True:
            cand = eta + step * grad
            cand_obj = objective(cand)
            if np.isfinite(cand_obj) and cand_obj >= obj + 1e-4 * step * gnorm ** 2:
                break
            step *= 0.5
            if step < 1e-12:
                raise NumericError(f"{prep.spec.name}: line search stalled at iteration {it}")
        eta, obj = cand, cand_obj
        trajectory.append(eta.copy())
    raise NumericError(f"{prep.spec.name}: eta fit did not reach tol {tol:g} "
                       f"in {max_iter} iterations")


def fit_eta_to_sample(prep: PreparedDensity, X: np.ndarray, **kw) -> FitResult:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    return fit_eta_exact(prep, prep.spec.statistic.value_batch(X).mean(axis=0), **kw)


# --- finite differences ---


def finite_diff_grad(f: Callable[[np.ndarray], float], x: np.ndarray,
                     h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = h
        g.flat[i] = (f(x + e) - f(x - e)) / (2.0 * h)
    return g


def finite_diff_jac(f: Callable[[np.ndarray], np.ndarray], x: np.ndarray,
                    h: float = 1e-5) -> np.ndarray:
    """Central-difference Jacobian dT_j/dx_i, shape (x.size, m)."""
    x = np.asarray(x, dtype=np.float64)
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = h
        cols.append((np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2.0 * h))
    return np.stack(cols)


# --- catalog ---


@dataclass
class BaseDensity:
    """An unweighted log-density with its box and a reference sampler."""

    name: str
    dim: int
    log_base: Callable[[np.ndarray], np.ndarray]
    lo: float
    hi: float
    draw: Callable[[np.random.Generator, int], np.ndarray]


def _mixture1d_logpdf(pts: np.ndarray, centers, scales, weights) -> np.ndarray:
    x = pts[:, 0]
    comps = [np.log(wt) - 0.5 * ((x - c) / s) ** 2 - np.log(s * np.sqrt(2.0 * np.pi))
             for c, s, wt in zip(centers, scales, weights)]
    return logsumexp(np.stack(comps), axis=0)


def _mixture1d_draw(rng: np.random.Generator, n: int) -> np.ndarray:
    c = rng.integers(0, 2, size=n)
    return (np.where(c == 0, -2.0, 2.0) + 0.5 * rng.standard_normal(n))[:, None]


def base_catalog() -> list[BaseDensity]:
    aniso = np.array([1.5, 0.5])
    return [
        BaseDensity("gauss1d", 1, lambda p: -0.5 * p[:, 0] ** 2, -14.0, 14.0,
                    lambda rng, n: rng.normal(0.0, 1.0, size=(n, 1))),
        BaseDensity("quartic1d", 1, lambda p: -p[:, 0] ** 4, -8.0, 8.0,
                    lambda rng, n: rng.normal(0.0, 0.6, size=(n, 1))),
        BaseDensity("mixture1d", 1,
                    lambda p: _mixture1d_logpdf(p, (-2.0, 2.0), (0.5, 0.5), (0.5, 0.5)),
                    -14.0, 14.0, _mixture1d_draw),
        BaseDensity("gauss2d", 2, lambda p: -0.5 * (p ** 2).sum(axis=1), -10.0, 10.0,
                    lambda rng, n: rng.normal([0.3, -0.2], 1.0, size=(n, 2))),
        BaseDensity("aniso2d", 2, lambda p: -0.5 * ((p / aniso) ** 2).sum(axis=1),
                    -10.0, 10.0,
                    lambda rng, n: rng.standard_normal((n, 2)) * aniso),
    ]


def statistic_catalog(dim: int) -> list[Statistic]:
    if dim == 1:
        return [RawMomentStatistic(1, 1), RawMomentStatistic(1, 2),
                SineStatistic(1), GapStatistic(1, 0.0, 1.0)]
    if dim == 2:
        return [RawMomentStatistic(2, 1), SineStatistic(2)]
    raise ConfigError("catalog covers dimensions 1 and 2")


def make_spec(base: BaseDensity, stat: Statistic) -> DensitySpec:
    return DensitySpec(f"{base.name}+{stat.label}", base.dim, stat,
                       base.log_base, base.lo, base.hi, draw=base.draw)


def crossed_specs() -> list[DensitySpec]:
    """Every base density paired with every same-dimension statistic."""
    return [make_spec(b, s) for b in base_catalog() for s in statistic_catalog(b.dim)]


def gauss_mean() -> DensitySpec:
    """Standard normal base with T(x) = x; the fitted weight shifts the
    mean to exactly eta, so closed forms are available."""
    spec = make_spec(base_catalog()[0], RawMomentStatistic(1, 1))
    spec.draw = lambda rng, n: rng.normal(0.7, 1.0, size=(n, 1))
    return spec


def gauss_square() -> DensitySpec:
    """Standard normal base with T(x) = x^2; only eta < 1/2 integrates."""
    spec = make_spec(base_catalog()[0], RawMomentStatistic(1, 2))
    spec.draw = lambda rng, n: rng.normal(0.0, np.sqrt(2.0), size=(n, 1))
    return spec


def broad_gap() -> DensitySpec:
    """Deliberately misfit base: a broad normal covering the gap between
    two data bumps, with a tent statistic supported only in the gap."""
    def draw(rng, n):
        c = rng.integers(0, 2, size=n)
        return (np.where(c == 0, -2.0, 2.0) + 0.4 * rng.standard_normal(n))[:, None]
    return DensitySpec(
        "broad-gap", 1, GapStatistic(1, center=0.0, halfwidth=1.0),
        lambda p: -0.5 * (p[:, 0] / 2.0) ** 2, -20.0, 20.0, draw=draw)


def box_from_data(X: np.ndarray, sigma: float, k: float = 6.0) -> tuple[np.ndarray, np.ndarray]:
    """Data range padded by k noise widths per axis."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    return X.min(axis=0) - k * sigma, X.max(axis=0) + k * sigma
