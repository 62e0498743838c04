"""Parameter-free statistic functions T(x) and their input gradients.

Four families: molecular valency excess, image margin magnitude, point
cloud smoothness (k-NN graph quadratic form), and a sine control statistic
that carries no data meaning. A raw-moment statistic backs the classic
exponential-family checks in the oracle module.

Each statistic also exists as a `Statistic` adapter operating on the flat
vector layout the score model consumes, exposing value (length m) and the
d-by-m input Jacobian. Subgradients at kinks (hinge at zero, |.| at zero)
are taken to be 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, ShapeError
from . import neighbors


# --- molecular graphs ---


@dataclass
class MolGraph:
    """Atom types b (ints in [0, k)), symmetric bond-order matrix A, and the
    per-type valence table. Bond orders are continuous while modeling and
    integers after quantization."""

    b: np.ndarray         # (n,) int
    A: np.ndarray         # (n, n) float, symmetric, zero diagonal
    valences: np.ndarray  # (k,) valence per atom type

    def __post_init__(self) -> None:
        self.b = np.asarray(self.b, dtype=np.int64)
        self.A = np.asarray(self.A, dtype=np.float64)
        self.valences = np.asarray(self.valences, dtype=np.float64)
        n = self.b.shape[0]
        if self.A.shape != (n, n):
            raise ShapeError(f"A shape {self.A.shape} does not match {n} atoms")
        if np.any(self.b < 0) or np.any(self.b >= self.valences.shape[0]):
            raise ConfigError("atom type outside the valence table")

    @property
    def n(self) -> int:
        return self.b.shape[0]


def valency_statistic(g: MolGraph) -> float:
    """Total valency excess: sum_i max(0, degree_i - valence_i).

    Zero exactly when every atom's bond-order sum stays within its valence.
    """
    deg = g.A.sum(axis=1)
    val = g.valences[g.b]
    return float(np.maximum(0.0, deg - val).sum())


def valency_gradient(g: MolGraph) -> tuple[np.ndarray, np.ndarray]:
    """Subgradient w.r.t. the bond matrix and the relaxed one-hot types.

    Returns (dA, dB): dA[i, j] counts how many of the two endpoints are
    over valence (symmetric, zero diagonal); dB[i, t] = -valence_t for
    every over-valence atom i. At the kink degree == valence the
    subgradient is 0.
    """
    n = g.n
    deg = g.A.sum(axis=1)
    val = g.valences[g.b]
    over = (deg > val).astype(np.float64)
    dA = over[:, None] + over[None, :]
    np.fill_diagonal(dA, 0.0)
    dB = -over[:, None] * g.valences[None, :]
    return dA, dB


# --- image margin ---


def _margin_mask(h: int, w: int, interior: tuple[int, int]) -> np.ndarray:
    ih, iw = interior
    if ih < 0 or iw < 0 or ih >= h or iw >= w:
        raise ConfigError(f"interior {ih}x{iw} must fit strictly inside a {h}x{w} image")
    top, left = (h - ih) // 2, (w - iw) // 2
    mask = np.ones((h, w), dtype=bool)
    mask[top:top + ih, left:left + iw] = False
    return mask


def margin_statistic(img: np.ndarray, interior: tuple[int, int]) -> float:
    """Mean absolute pixel value over the margin S, the complement of a
    centered interior rectangle."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ShapeError(f"expected a 2-d image, got shape {img.shape}")
    mask = _margin_mask(img.shape[0], img.shape[1], interior)
    return float(np.abs(img[mask]).sum() / mask.sum())


def margin_gradient(img: np.ndarray, interior: tuple[int, int]) -> np.ndarray:
    """sign(pixel)/|S| on the margin, zero on the interior and at pixels
    exactly equal to zero."""
    img = np.asarray(img, dtype=np.float64)
    mask = _margin_mask(img.shape[0], img.shape[1], interior)
    grad = np.sign(img) / mask.sum()
    grad[~mask] = 0.0
    return grad


# --- point cloud smoothness ---


def laplacian_statistic(cloud: np.ndarray, L) -> float:
    """tr(x' L x) in edge-sum form: sum over graph edges of the squared
    endpoint distance. Non-negative; zero when all points coincide."""
    pts = np.asarray(cloud, dtype=np.float64)
    Lc = sp.coo_matrix(L)
    if Lc.shape != (pts.shape[0], pts.shape[0]):
        raise ShapeError(f"Laplacian dimension {Lc.shape} != {pts.shape[0]} points")
    upper = (Lc.row < Lc.col) & (Lc.data != 0.0)
    i, j, w = Lc.row[upper], Lc.col[upper], -Lc.data[upper]
    d2 = ((pts[i] - pts[j]) ** 2).sum(axis=1)
    return float((w * d2).sum())


def laplacian_gradient(cloud: np.ndarray, L) -> np.ndarray:
    """2 L x with the graph held fixed at the evaluation point; the k-NN
    structure is piecewise constant so this is the a.e. derivative."""
    pts = np.asarray(cloud, dtype=np.float64)
    Lc = sp.csr_matrix(L)
    if Lc.shape != (pts.shape[0], pts.shape[0]):
        raise ShapeError(f"Laplacian dimension {Lc.shape} != {pts.shape[0]} points")
    return 2.0 * (Lc @ pts)


# --- simple statistics ---


def sine_statistic(x: np.ndarray) -> float:
    """sin of the coordinate sum; the meaningless control statistic."""
    return float(np.sin(np.asarray(x, dtype=np.float64).sum()))


def sine_gradient(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return np.full(x.shape, np.cos(x.sum()))


def raw_moment_statistic(x: np.ndarray, order: int) -> np.ndarray:
    """Elementwise x^p, stacked; the textbook sufficient statistic."""
    x = np.asarray(x, dtype=np.float64)
    return x ** order


# --- adapters over the flat model vector ---


class Statistic:
    """A statistic T: R^d -> R^m with its input Jacobian.

    `value(x)` returns shape (m,); `jac(x)` returns (d, m) with entries
    dT_j/dx_i. Batch variants default to per-row loops; subclasses
    vectorize where it matters.
    """

    kind: str = "base"
    d: int
    m: int

    @property
    def label(self) -> str:
        """Short display name; kind plus any distinguishing parameter."""
        return self.kind

    def value(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def jac(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def value_batch(self, X: np.ndarray) -> np.ndarray:
        return np.stack([self.value(x) for x in X])

    def jac_batch(self, X: np.ndarray) -> np.ndarray:
        return np.stack([self.jac(x) for x in X])

    def config_string(self) -> str:
        raise NotImplementedError

    def _check(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.d,):
            raise ShapeError(f"{self.kind} statistic expects length {self.d}, got {x.shape}")
        return x


class SineStatistic(Statistic):
    kind = "sine"

    def __init__(self, d: int):
        self.d, self.m = d, 1

    def value(self, x):
        return np.array([sine_statistic(self._check(x))])

    def jac(self, x):
        return sine_gradient(self._check(x))[:, None]

    def value_batch(self, X):
        return np.sin(X.sum(axis=1))[:, None]

    def jac_batch(self, X):
        return np.broadcast_to(np.cos(X.sum(axis=1))[:, None, None],
                               (X.shape[0], self.d, 1)).copy()

    def config_string(self):
        return f"sine dim={self.d}"


class RawMomentStatistic(Statistic):
    kind = "raw_moment"

    def __init__(self, d: int, order: int):
        if order < 1:
            raise ConfigError("moment order must be >= 1")
        self.d, self.m, self.order = d, d, order

    @property
    def label(self) -> str:
        return f"raw_moment{self.order}"

    def value(self, x):
        return raw_moment_statistic(self._check(x), self.order)

    def jac(self, x):
        x = self._check(x)
        return np.diag(self.order * x ** (self.order - 1))

    def value_batch(self, X):
        return X ** self.order

    def config_string(self):
        return f"raw_moment dim={self.d} order={self.order}"


class ConstantStatistic(Statistic):
    """Zero statistic with zero gradient; ablation and plumbing checks."""

    kind = "constant"

    def __init__(self, d: int):
        self.d, self.m = d, 1

    def value(self, x):
        return np.zeros(1)

    def jac(self, x):
        return np.zeros((self.d, 1))

    def value_batch(self, X):
        return np.zeros((X.shape[0], 1))

    def jac_batch(self, X):
        return np.zeros((X.shape[0], self.d, 1))

    def config_string(self):
        return f"constant dim={self.d}"


class GapStatistic(Statistic):
    """Tent bump max(0, 1 - |sum(x) - center| / halfwidth).

    Supported only where the coordinate sum lies within halfwidth of the
    center; used to probe regions the data never visits. Subgradient 0 at
    the peak and at the support edges.
    """

    kind = "gap"

    def __init__(self, d: int, center: float = 0.0, halfwidth: float = 1.0):
        if halfwidth <= 0.0:
            raise ConfigError("halfwidth must be positive")
        self.d, self.m = d, 1
        self.center, self.halfwidth = float(center), float(halfwidth)

    def value(self, x):
        u = (self._check(x).sum() - self.center) / self.halfwidth
        return np.array([max(0.0, 1.0 - abs(u))])

    def jac(self, x):
        x = self._check(x)
        u = (x.sum() - self.center) / self.halfwidth
        slope = -np.sign(u) / self.halfwidth if 0.0 < abs(u) < 1.0 else 0.0
        return np.full((self.d, 1), slope)

    def value_batch(self, X):
        u = (X.sum(axis=1) - self.center) / self.halfwidth
        return np.maximum(0.0, 1.0 - np.abs(u))[:, None]

    def config_string(self):
        return f"gap dim={self.d} center={self.center:g} halfwidth={self.halfwidth:g}"


class MarginImageStatistic(Statistic):
    kind = "margin"

    def __init__(self, h: int, w: int, interior_h: int, interior_w: int):
        self.h, self.w = h, w
        self.interior = (interior_h, interior_w)
        self.mask = _margin_mask(h, w, self.interior).ravel()
        self.s_size = int(self.mask.sum())
        self.d, self.m = h * w, 1

    def value(self, x):
        x = self._check(x)
        return np.array([np.abs(x[self.mask]).sum() / self.s_size])

    def jac(self, x):
        x = self._check(x)
        g = np.sign(x) / self.s_size
        g[~self.mask] = 0.0
        return g[:, None]

    def value_batch(self, X):
        return (np.abs(X[:, self.mask]).sum(axis=1) / self.s_size)[:, None]

    def jac_batch(self, X):
        G = np.sign(X) / self.s_size
        G[:, ~self.mask] = 0.0
        return G[:, :, None]

    def config_string(self):
        return (f"margin h={self.h} w={self.w} "
                f"interior_h={self.interior[0]} interior_w={self.interior[1]}")


class SmoothnessStatistic(Statistic):
    """Point cloud smoothness on the flattened (N*3,) coordinate vector.

    The k-NN graph is rebuilt at every evaluation point and treated as
    locally constant when differentiating.
    """

    kind = "laplacian"

    def __init__(self, n_points: int, k: int = 8):
        if k < 1 or k > n_points - 1:
            raise ConfigError(f"k={k} invalid for {n_points} points")
        self.n_points, self.k = n_points, k
        self.d, self.m = 3 * n_points, 1

    def _cloud(self, x):
        return self._check(x).reshape(self.n_points, 3)

    def value(self, x):
        pts = self._cloud(x)
        edges = neighbors.knn_graph_edges(pts, self.k)
        d2 = ((pts[edges[:, 0]] - pts[edges[:, 1]]) ** 2).sum(axis=1)
        return np.array([d2.sum()])

    def jac(self, x):
        pts = self._cloud(x)
        L = sp.csr_matrix(neighbors.laplacian(pts, self.k))
        return (2.0 * (L @ pts)).reshape(-1)[:, None]

    def config_string(self):
        return f"laplacian points={self.n_points} k={self.k}"


class ValencyStatistic(Statistic):
    """Valency excess on the flat molecule encoding.

    Layout: n*c relaxed one-hot entries (c channels per atom slot, the last
    channel meaning "absent", valence 0), then the n(n-1)/2 upper-triangle
    bond orders.
    """

    kind = "valency"

    def __init__(self, n_slots: int, valences: np.ndarray):
        self.n_slots = n_slots
        self.valences = np.asarray(valences, dtype=np.float64)
        self.c = self.valences.shape[0]
        self.iu, self.ju = np.triu_indices(n_slots, k=1)
        self.d = n_slots * self.c + self.iu.size
        self.m = 1

    def split(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Flat vector -> (one-hot block (n, c), symmetric bond matrix)."""
        x = self._check(x)
        n = self.n_slots
        B = x[:n * self.c].reshape(n, self.c)
        A = np.zeros((n, n))
        A[self.iu, self.ju] = x[n * self.c:]
        A += A.T
        return B, A

    def value(self, x):
        B, A = self.split(x)
        deg = A.sum(axis=1)
        val = B @ self.valences
        return np.array([np.maximum(0.0, deg - val).sum()])

    def jac(self, x):
        B, A = self.split(x)
        deg = A.sum(axis=1)
        val = B @ self.valences
        over = (deg > val).astype(np.float64)
        dB = -over[:, None] * self.valences[None, :]
        dA_ut = over[self.iu] + over[self.ju]
        return np.concatenate([dB.ravel(), dA_ut])[:, None]

    def config_string(self):
        vals = ",".join(str(int(v)) for v in self.valences)
        return f"valency slots={self.n_slots} valences={vals}"


def statistic_from_string(s: str) -> Statistic:
    """Rebuild a statistic from its `config_string()` form."""
    fields = s.split()
    if not fields:
        raise ConfigError("empty statistic config")
    kind, kv = fields[0], dict(f.split("=", 1) for f in fields[1:])
    try:
        if kind == "sine":
            return SineStatistic(int(kv["dim"]))
        if kind == "raw_moment":
            return RawMomentStatistic(int(kv["dim"]), int(kv["order"]))
        if kind == "constant":
            return ConstantStatistic(int(kv["dim"]))
        if kind == "gap":
            return GapStatistic(int(kv["dim"]), float(kv["center"]), float(kv["halfwidth"]))
        if kind == "margin":
            return MarginImageStatistic(int(kv["h"]), int(kv["w"]),
                                        int(kv["interior_h"]), int(kv["interior_w"]))
        if kind == "laplacian":
            return SmoothnessStatistic(int(kv["points"]), int(kv["k"]))
        if kind == "valency":
            valences = np.array([int(v) for v in kv["valences"].split(",")])
            return ValencyStatistic(int(kv["slots"]), valences)
    except KeyError as e:
        raise ConfigError(f"statistic {kind!r} missing field {e.args[0]!r}") from None
    raise ConfigError(f"unknown statistic kind {kind!r}")
