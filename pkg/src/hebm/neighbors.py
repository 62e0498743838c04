"""Exact k-nearest-neighbor search over 3-d points and k-NN graph Laplacians.

The kd-tree returns exactly the same neighbors as an exhaustive scan:
squared Euclidean metric, ties broken by lower point index. The graph is
symmetrized with the union rule (an edge exists if either endpoint lists
the other), so the Laplacian L = D - W is symmetric with zero row sums.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ShapeError


@dataclass
class KdTree:
    points: np.ndarray       # (N, 3) backing point set
    split_dim: np.ndarray    # (M,) axis of each node
    split_val: np.ndarray    # (M,) coordinate of the node point on that axis
    point_index: np.ndarray  # (M,) index into points
    left: np.ndarray         # (M,) child node id or -1
    right: np.ndarray        # (M,) child node id or -1
    root: int = 0
    # number of point-distance evaluations performed by queries; test
    # instrumentation only, not part of the search contract
    distance_evals: int = field(default=0, compare=False)

    @property
    def n_points(self) -> int:
        return self.points.shape[0]


def build(points: np.ndarray) -> KdTree:
    """Median-split kd-tree (cycling axes); depth O(log N)."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ShapeError(f"expected (N, 3) points, got {pts.shape}")
    n = pts.shape[0]
    if n == 0:
        raise ValueError("cannot build a kd-tree from an empty point set")
    if not np.all(np.isfinite(pts)):
        raise ValueError("points must be finite")

    split_dim = np.full(n, -1, dtype=np.int64)
    split_val = np.zeros(n, dtype=np.float64)
    point_index = np.full(n, -1, dtype=np.int64)
    left = np.full(n, -1, dtype=np.int64)
    right = np.full(n, -1, dtype=np.int64)
    next_node = 0

    # iterative construction; stack holds (index subset, depth, parent, side)
    stack: list[tuple[np.ndarray, int, int, int]] = [(np.arange(n), 0, -1, 0)]
    while stack:
        idx, depth, parent, side = stack.pop()
        axis = depth % 3
        node = next_node
        next_node += 1
        if idx.size == 1:
            pi = idx[0]
        else:
            mid = idx.size // 2
            # sort keys (coordinate, index) so construction is deterministic
            order = np.lexsort((idx, pts[idx, axis]))
            idx = idx[order]
            pi = idx[mid]
            if mid > 0:
                stack.append((idx[:mid], depth + 1, node, 0))
            if mid + 1 < idx.size:
                stack.append((idx[mid + 1:], depth + 1, node, 1))
        split_dim[node] = axis
        split_val[node] = pts[pi, axis]
        point_index[node] = pi
        if parent >= 0:
            (left if side == 0 else right)[parent] = node

    return KdTree(pts, split_dim, split_val, point_index, left, right)


def knn(tree: KdTree, query: np.ndarray, k: int,
        exclude_index: int | None = None) -> np.ndarray:
    """Indices of the k nearest stored points, ascending distance.

    Ties broken by lower index. If the query coincides exactly with a
    stored point (and no explicit `exclude_index` is given), that point is
    treated as the query itself and excluded; with duplicate stored points
    only the lowest-index exact match is dropped.
    """
    q = np.asarray(query, dtype=np.float64)
    if q.shape != (3,):
        raise ShapeError(f"query must be a 3-vector, got {q.shape}")
    if k < 1:
        raise ValueError("k must be >= 1")

    auto_exclude = exclude_index is None
    want = k + 1 if auto_exclude else k
    available = tree.n_points if auto_exclude else tree.n_points - 1
    if k > available:
        raise ValueError(f"k={k} exceeds the {available} available points")
    want = min(want, tree.n_points)

    pts = tree.points
    # max-heap of (-d2, -index): heap[0] is the current worst candidate
    heap: list[tuple[float, int]] = []
    # stack entries: (node id, squared plane distance required to reach it)
    stack: list[tuple[int, float]] = [(tree.root, 0.0)]
    n_dist = 0
    while stack:
        node, bound = stack.pop()
        if node < 0:
            continue
        # an equal-distance lower-index point may sit exactly on the far
        # plane, so skip only on strict inequality
        if len(heap) == want and bound > -heap[0][0]:
            continue
        pi = int(tree.point_index[node])
        if pi != exclude_index:
            d2 = float(((pts[pi] - q) ** 2).sum())
            n_dist += 1
            if len(heap) < want:
                heapq.heappush(heap, (-d2, -pi))
            elif (d2, pi) < (-heap[0][0], -heap[0][1]):
                heapq.heapreplace(heap, (-d2, -pi))
        axis = int(tree.split_dim[node])
        delta = q[axis] - tree.split_val[node]
        near, far = (tree.left[node], tree.right[node]) if delta < 0 else \
                    (tree.right[node], tree.left[node])
        stack.append((int(far), delta * delta))
        stack.append((int(near), 0.0))
    tree.distance_evals += n_dist

    cand = sorted((-nd2, -nidx) for nd2, nidx in heap)  # (d2, index) ascending
    result = [idx for _, idx in cand]
    if auto_exclude:
        zero = [idx for d2, idx in cand if d2 == 0.0 and np.array_equal(pts[idx], q)]
        if zero:
            result.remove(min(zero))
    if len(result) > k:
        result = result[:k]
    if len(result) < k:
        raise ValueError(f"k={k} exceeds the {len(result)} available points")
    return np.array(result, dtype=np.int64)


def brute_force_knn(points: np.ndarray, query: np.ndarray, k: int,
                    exclude_index: int | None = None) -> np.ndarray:
    """Exhaustive-scan reference with identical tie and exclusion rules."""
    pts = np.asarray(points, dtype=np.float64)
    q = np.asarray(query, dtype=np.float64)
    d2 = ((pts - q) ** 2).sum(axis=1)
    idx = np.arange(pts.shape[0])
    if exclude_index is not None:
        keep = idx != exclude_index
        d2, idx = d2[keep], idx[keep]
    else:
        exact = np.where((pts == q).all(axis=1))[0]
        if exact.size:
            keep = idx != exact.min()
            d2, idx = d2[keep], idx[keep]
    if k > idx.size:
        raise ValueError(f"k={k} exceeds the {idx.size} available points")
    order = np.lexsort((idx, d2))
    return idx[order[:k]]


def _neighbor_lists_direct(pts: np.ndarray, k: int) -> np.ndarray:
    """All-pairs neighbor lists via a dense distance matrix; (N, k) indices.

    Stable argsort on the distance rows reproduces the (distance, index)
    tie order of the scanning paths exactly.
    """
    diff = pts[:, None, :] - pts[None, :, :]
    d2 = (diff * diff).sum(axis=2)
    np.fill_diagonal(d2, np.inf)
    order = np.argsort(d2, axis=1, kind="stable")
    return order[:, :k]


def knn_graph_edges(points: np.ndarray, k: int, use_tree: bool | None = None) -> np.ndarray:
    """Undirected edge list (E, 2) of the union-symmetrized k-NN graph.

    `use_tree=None` picks the kd-tree for large point sets and the dense
    scan for small ones; both produce identical edges.
    """
    pts = np.asarray(points, dtype=np.float64)
    n = pts.shape[0]
    if k < 1 or k > n - 1:
        raise ValueError(f"k={k} invalid for {n} points")
    if use_tree is None:
        use_tree = n > 512
    if use_tree:
        tree = build(pts)
        nbrs = np.stack([knn(tree, pts[i], k, exclude_index=i) for i in range(n)])
    else:
        nbrs = _neighbor_lists_direct(pts, k)
    src = np.repeat(np.arange(n), k)
    dst = nbrs.ravel()
    lo = np.minimum(src, dst)
    hi = np.maximum(src, dst)
    return np.unique(np.stack([lo, hi], axis=1), axis=0)


def laplacian(points: np.ndarray, k: int, use_tree: bool | None = None) -> sp.coo_matrix:
    """Sparse L = D - W of the union-symmetrized k-NN graph (W binary)."""
    pts = np.asarray(points, dtype=np.float64)
    n = pts.shape[0]
    edges = knn_graph_edges(pts, k, use_tree=use_tree)
    deg = np.bincount(edges.ravel(), minlength=n).astype(np.float64)
    rows = np.concatenate([np.arange(n), edges[:, 0], edges[:, 1]])
    cols = np.concatenate([np.arange(n), edges[:, 1], edges[:, 0]])
    vals = np.concatenate([deg, -np.ones(2 * edges.shape[0])])
    return sp.coo_matrix((vals, (rows, cols)), shape=(n, n))
