"""Sample-quality diagnostics.

Delta_T measures how far the sample mean of the statistic sits from the
data mean (the quantity the statistic weight is supposed to drive to
zero). Point-cloud quality uses squared-distance Chamfer and the usual
minimum-matching / coverage / 1-NN two-sample metrics. Molecule quality is
the fraction of quantized graphs with zero valency excess.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import neighbors
from .errors import ShapeError
from .statistics import MolGraph, Statistic, valency_statistic


@dataclass
class MetricEntry:
    name: str
    value: float
    stderr: float   # nan when no meaningful error bar exists
    n: int          # sample count behind the number


@dataclass
class MetricReport:
    entries: list[MetricEntry] = field(default_factory=list)
    seed: int | None = None

    def add(self, name: str, value: float, n: int, stderr: float = float("nan")) -> None:
        self.entries.append(MetricEntry(name, float(value), float(stderr), int(n)))

    def lines(self) -> list[str]:
        """Line-oriented form: `metric <name> <value> <stderr>`."""
        return [f"metric {e.name} {e.value:.10g} {e.stderr:.10g}" for e in self.entries]

    def table(self) -> str:
        rows = [("name", "value", "stderr", "n")]
        rows += [(e.name, f"{e.value:.6g}", f"{e.stderr:.3g}", str(e.n))
                 for e in self.entries]
        widths = [max(len(r[c]) for r in rows) for c in range(4)]
        return "\n".join("  ".join(f.ljust(w) for f, w in zip(r, widths)) for r in rows)


def delta_T(model_samples: np.ndarray, data_samples: np.ndarray,
            statistic: Statistic) -> tuple[np.ndarray, np.ndarray]:
    """Componentwise |mean T(model) - mean T(data)| with its Monte-Carlo
    standard error; returns (delta, stderr), each shape (m,)."""
    Tm = statistic.value_batch(np.asarray(model_samples, dtype=np.float64))
    Td = statistic.value_batch(np.asarray(data_samples, dtype=np.float64))
    if Tm.shape[0] == 0 or Td.shape[0] == 0:
        raise ShapeError("delta_T needs at least one sample on each side")
    delta = np.abs(Tm.mean(axis=0) - Td.mean(axis=0))
    var_m = Tm.var(axis=0, ddof=1) / Tm.shape[0] if Tm.shape[0] > 1 else np.zeros(Tm.shape[1])
    var_d = Td.var(axis=0, ddof=1) / Td.shape[0] if Td.shape[0] > 1 else np.zeros(Td.shape[1])
    return delta, np.sqrt(var_m + var_d)


def validity_ratio(molecule_samples: list[MolGraph]) -> float:
    """Fraction of graphs with zero valency excess."""
    if not molecule_samples:
        raise ShapeError("validity_ratio needs at least one molecule")
    return float(np.mean([valency_statistic(g) == 0.0 for g in molecule_samples]))


def _check_cloud(X: np.ndarray, label: str) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0 or X.shape[1] != 3:
        raise ShapeError(f"{label} must be a non-empty (n, 3) cloud, got {X.shape}")
    return X


def _nearest_sq(X: np.ndarray, Y: np.ndarray, method: str) -> np.ndarray:
    """Squared distance from each row of X to its nearest row of Y."""
    if method == "direct":
        diff = X[:, None, :] - Y[None, :, :]
        return (diff * diff).sum(axis=2).min(axis=1)
    tree = neighbors.build(Y)
    out = np.empty(X.shape[0])
    for i, x in enumerate(X):
        j = neighbors.knn(tree, x, 1)[0]
        out[i] = ((Y[j] - x) ** 2).sum()
    return out


def chamfer(X: np.ndarray, Y: np.ndarray, method: str = "auto") -> float:
    """mean_x min_y ||x - y||^2 + mean_y min_x ||y - x||^2."""
    X, Y = _check_cloud(X, "X"), _check_cloud(Y, "Y")
    if method == "auto":
        method = "direct" if X.shape[0] * Y.shape[0] <= 250_000 else "tree"
    if method not in ("direct", "tree"):
        raise ShapeError(f"unknown chamfer method {method!r}")
    return float(_nearest_sq(X, Y, method).mean() + _nearest_sq(Y, X, method).mean())


def mmd_cov_1nna(samples: list[np.ndarray],
                 refs: list[np.ndarray]) -> tuple[float, float, float]:
    """Two-sample cloud metrics under Chamfer ground distance.

    MMD: mean over refs of the closest sample distance. COV: fraction of
    refs claimed as nearest ref by at least one sample. 1-NNA: leave-one-
    out 1-NN accuracy on the merged labeled set (0.5 means the sets are
    indistinguishable); nearest-neighbor ties go to the lower index.
    """
    if not samples or not refs:
        raise ShapeError("mmd_cov_1nna needs non-empty sample and ref sets")
    S, R = len(samples), len(refs)
    cross = np.array([[chamfer(s, r) for r in refs] for s in samples])
    mmd = float(cross.min(axis=0).mean())
    cov = float(np.unique(cross.argmin(axis=1)).size / R)

    merged = list(samples) + list(refs)
    T = S + R
    D = np.zeros((T, T))
    for i in range(T):
        for j in range(i + 1, T):
            if i < S and j >= S:
                d = cross[i, j - S]
            else:
                d = chamfer(merged[i], merged[j])
            D[i, j] = D[j, i] = d
    np.fill_diagonal(D, np.inf)
    labels = np.array([1] * S + [0] * R)
    pred = labels[D.argmin(axis=1)]
    nna = float((pred == labels).mean())
    return mmd, cov, nna
