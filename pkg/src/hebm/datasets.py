"""Synthetic dataset generators, molecule quantization, and file I/O.

Three desk-scale data regimes: margin-structured images (zero outside a
centered interior rectangle), point clouds on simple surfaces, and small
valency-respecting molecular graphs, plus 2-d toy densities for oracle and
sampler test beds. Every generator is deterministic per seed and a dataset
is regenerable bit-exactly from (kind, params, seed).

Molecules are flattened for the score model as the relaxed one-hot type
block (with a trailing "absent" channel of valence 0) followed by the
upper triangle of the bond matrix; symmetry is restored on decode.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, NumericError, ParseError, ShapeError
from .statistics import MolGraph, valency_statistic

FLOAT_FMT = "%.17g"


@dataclass
class Dataset:
    kind: str                 # toy2d | margin_images | point_clouds | molecules
    items: list               # arrays or MolGraphs; toy2d uses one (n, 2) array
    seed: int
    params: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.items)


# --- generators ---


def gen_toy2d(kind: str, n: int, seed: int) -> Dataset:
    """2-d test-bed densities with known moments.

    gaussian: standard normal. mixture: equal bumps at (+-2, 0), scale
    0.5. ring: unit circle with radial noise 0.1 (mean radius 1).
    """
    rng = np.random.default_rng(seed)
    if kind == "gaussian":
        X = rng.standard_normal((n, 2))
    elif kind == "mixture":
        c = np.where(rng.integers(0, 2, size=n) == 0, -2.0, 2.0)
        X = np.column_stack([c, np.zeros(n)]) + 0.5 * rng.standard_normal((n, 2))
    elif kind == "ring":
        theta = rng.uniform(0.0, 2.0 * np.pi, size=n)
        r = 1.0 + 0.1 * rng.standard_normal(n)
        X = np.column_stack([r * np.cos(theta), r * np.sin(theta)])
    else:
        raise ConfigError(f"unknown toy2d kind {kind!r}")
    return Dataset("toy2d", [X], seed, {"toy_kind": kind, "n": n})


def gen_margin_images(h: int, w: int, interior: tuple[int, int],
                      n: int, seed: int) -> Dataset:
    """Random smooth blobs confined to the interior; the margin is exactly
    zero and pixel values stay in [0, 1]."""
    ih, iw = interior
    if ih < 1 or iw < 1 or ih >= h or iw >= w:
        raise ConfigError(f"interior {ih}x{iw} must fit strictly inside {h}x{w}")
    rng = np.random.default_rng(seed)
    top, left = (h - ih) // 2, (w - iw) // 2
    rr, cc = np.meshgrid(np.arange(ih), np.arange(iw), indexing="ij")
    items = []
    for _ in range(n):
        inner = np.zeros((ih, iw))
        for _ in range(int(rng.integers(1, 4))):
            cy = rng.uniform(0, ih - 1)
            cx = rng.uniform(0, iw - 1)
            width = rng.uniform(0.8, 2.5)
            amp = rng.uniform(0.5, 1.0)
            inner += amp * np.exp(-((rr - cy) ** 2 + (cc - cx) ** 2) / (2.0 * width ** 2))
        img = np.zeros((h, w))
        img[top:top + ih, left:left + iw] = np.clip(inner, 0.0, 1.0)
        items.append(img)
    return Dataset("margin_images", items, seed,
                   {"h": h, "w": w, "interior_h": ih, "interior_w": iw, "n": n})


def gen_point_clouds(shape: str, N: int, n: int, noise: float, seed: int) -> Dataset:
    """Uniform surface samples with Gaussian jitter of scale `noise`.

    sphere: unit sphere. plane: unit square at z = 0. two_spheres: unit
    spheres centered at (+-1.5, 0, 0), points split evenly.
    """
    rng = np.random.default_rng(seed)
    items = []
    for _ in range(n):
        if shape == "sphere":
            z = rng.standard_normal((N, 3))
            pts = z / np.linalg.norm(z, axis=1, keepdims=True)
        elif shape == "plane":
            pts = np.column_stack([rng.uniform(-1.0, 1.0, size=(N, 2)), np.zeros(N)])
        elif shape == "two_spheres":
            half = N // 2
            z = rng.standard_normal((N, 3))
            pts = z / np.linalg.norm(z, axis=1, keepdims=True)
            pts[:half, 0] -= 1.5
            pts[half:, 0] += 1.5
        else:
            raise ConfigError(f"unknown cloud shape {shape!r}")
        if noise > 0.0:
            pts = pts + noise * rng.standard_normal((N, 3))
        items.append(pts)
    return Dataset("point_clouds", items, seed,
                   {"shape": shape, "N": N, "n": n, "noise": noise})


def gen_molecules(n_atoms_max: int, k_types: int, valences,
                  n: int, seed: int) -> Dataset:
    """Random growth that only adds bonds keeping every degree within its
    valence; every output is re-checked against the valency statistic."""
    valences = np.asarray(valences, dtype=np.float64)
    if valences.shape != (k_types,):
        raise ConfigError(f"need one valence per type, got {valences.shape}")
    rng = np.random.default_rng(seed)
    items = []
    for _ in range(n):
        n_atoms = int(rng.integers(1, n_atoms_max + 1))
        b = rng.integers(0, k_types, size=n_atoms)
        A = np.zeros((n_atoms, n_atoms))
        rem = valences[b].copy()
        for _ in range(3 * n_atoms):
            if n_atoms < 2:
                break
            i, j = rng.choice(n_atoms, size=2, replace=False)
            cap = int(min(rem[i], rem[j], 3.0 - A[i, j]))
            if cap < 1:
                continue
            order = int(rng.integers(1, cap + 1))
            A[i, j] += order
            A[j, i] += order
            rem[i] -= order
            rem[j] -= order
        g = MolGraph(b, A, valences)
        if valency_statistic(g) != 0.0:
            raise NumericError("molecule generator produced an invalid graph")
        items.append(g)
    return Dataset("molecules", items, seed,
                   {"n_atoms_max": n_atoms_max, "k_types": k_types,
                    "valences": ",".join(str(int(v)) for v in valences), "n": n})


def generate(kind: str, params: dict, seed: int) -> Dataset:
    """Regenerate a dataset from its manifest fields."""
    p = dict(params)
    if kind == "toy2d":
        return gen_toy2d(p["toy_kind"], int(p["n"]), seed)
    if kind == "margin_images":
        return gen_margin_images(int(p["h"]), int(p["w"]),
                                 (int(p["interior_h"]), int(p["interior_w"])),
                                 int(p["n"]), seed)
    if kind == "point_clouds":
        return gen_point_clouds(p["shape"], int(p["N"]), int(p["n"]),
                                float(p["noise"]), seed)
    if kind == "molecules":
        vals = [int(v) for v in str(p["valences"]).split(",")]
        return gen_molecules(int(p["n_atoms_max"]), int(p["k_types"]),
                             vals, int(p["n"]), seed)
    raise ConfigError(f"unknown dataset kind {kind!r}")


# --- molecule relaxation / quantization ---


def extended_valences(valences) -> np.ndarray:
    """Valence table with the trailing absent channel (valence 0)."""
    return np.append(np.asarray(valences, dtype=np.float64), 0.0)


def encode_molecule(g: MolGraph, n_slots: int) -> np.ndarray:
    """Flatten to [one-hot block, upper-triangle bonds] with padding slots
    marked by the absent channel."""
    if g.n > n_slots:
        raise ShapeError(f"molecule with {g.n} atoms exceeds {n_slots} slots")
    k = g.valences.shape[0]
    B = np.zeros((n_slots, k + 1))
    B[np.arange(g.n), g.b] = 1.0
    B[g.n:, k] = 1.0
    A = np.zeros((n_slots, n_slots))
    A[:g.n, :g.n] = g.A
    iu, ju = np.triu_indices(n_slots, k=1)
    return np.concatenate([B.ravel(), A[iu, ju]])


def decode_molecule(x: np.ndarray, n_slots: int, k_types: int) -> tuple[np.ndarray, np.ndarray]:
    """Flat vector back to the relaxed blocks (B with absent channel, A
    symmetric with zero diagonal)."""
    c = k_types + 1
    x = np.asarray(x, dtype=np.float64)
    iu, ju = np.triu_indices(n_slots, k=1)
    if x.shape != (n_slots * c + iu.size,):
        raise ShapeError(f"molecule vector length {x.shape} != {n_slots * c + iu.size}")
    B = x[:n_slots * c].reshape(n_slots, c)
    A = np.zeros((n_slots, n_slots))
    A[iu, ju] = x[n_slots * c:]
    A += A.T
    return B, A


def quantize_bonds(A: np.ndarray) -> np.ndarray:
    """Symmetrize by averaging, then round half-up into {0, ..., 3}."""
    A = 0.5 * (A + np.asarray(A, dtype=np.float64).T)
    A = np.clip(np.floor(A + 0.5), 0.0, 3.0)
    np.fill_diagonal(A, 0.0)
    return A


def quantize_molecule(g: MolGraph) -> MolGraph:
    """Integer version of a relaxed graph; types are kept, bond orders are
    symmetrized and rounded (half-up)."""
    return MolGraph(g.b, quantize_bonds(g.A), g.valences)


def quantize_sample(x: np.ndarray, n_slots: int, valences) -> MolGraph:
    """Model output vector -> integer molecule.

    Atom types by argmax over the relaxed one-hot (absent channel drops
    the slot); bonds quantized as in quantize_molecule, restricted to the
    surviving atoms.
    """
    valences = np.asarray(valences, dtype=np.float64)
    k = valences.shape[0]
    B, A = decode_molecule(x, n_slots, k)
    types = B.argmax(axis=1)
    keep = types < k
    A = quantize_bonds(A)[np.ix_(keep, keep)]
    return MolGraph(types[keep], A, valences)


# --- model-space encodings ---


def encode_image(img: np.ndarray) -> np.ndarray:
    return np.asarray(img, dtype=np.float64).ravel()


def encode_cloud(pts: np.ndarray) -> np.ndarray:
    return np.asarray(pts, dtype=np.float64).ravel()


def dataset_matrix(ds: Dataset) -> np.ndarray:
    """Stack all items as rows of the flat model space."""
    if ds.kind == "toy2d":
        return np.asarray(ds.items[0], dtype=np.float64)
    if ds.kind == "margin_images":
        return np.stack([encode_image(im) for im in ds.items])
    if ds.kind == "point_clouds":
        return np.stack([encode_cloud(p) for p in ds.items])
    if ds.kind == "molecules":
        n_slots = int(ds.params["n_atoms_max"])
        return np.stack([encode_molecule(g, n_slots) for g in ds.items])
    raise ConfigError(f"unknown dataset kind {ds.kind!r}")


# --- single-item file I/O ---


def write_cloud(path, pts: np.ndarray) -> None:
    pts = np.asarray(pts, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] not in (2, 3):
        raise ShapeError(f"cloud must be (N, 2) or (N, 3), got {pts.shape}")
    np.savetxt(path, pts, fmt=FLOAT_FMT, delimiter=" ")


def read_cloud(path) -> np.ndarray:
    rows = []
    width = None
    for ln, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.split()
        if width is None:
            width = len(fields)
            if width not in (2, 3):
                raise ParseError(f"{path}: line {ln}: expected 2 or 3 columns, got {width}")
        if len(fields) != width:
            raise ParseError(f"{path}: line {ln}: expected {width} columns")
        try:
            rows.append([float(v) for v in fields])
        except ValueError:
            raise ParseError(f"{path}: line {ln}: bad float") from None
    if not rows:
        raise ParseError(f"{path}: empty cloud file")
    return np.array(rows)


def write_image(path, img: np.ndarray) -> None:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ShapeError(f"image must be 2-d, got {img.shape}")
    h, w = img.shape
    lines = [f"img {h} {w}"]
    lines += [",".join(FLOAT_FMT % v for v in row) for row in img]
    Path(path).write_text("\n".join(lines) + "\n")


def read_image(path) -> np.ndarray:
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("img "):
        raise ParseError(f"{path}: line 1: expected 'img <h> <w>' header")
    fields = lines[0].split()
    if len(fields) != 3:
        raise ParseError(f"{path}: line 1: malformed header {lines[0]!r}")
    try:
        h, w = int(fields[1]), int(fields[2])
    except ValueError:
        raise ParseError(f"{path}: line 1: bad dimensions in {lines[0]!r}") from None
    if len(lines) < 1 + h:
        raise ParseError(f"{path}: expected {h} rows, file has {len(lines) - 1}")
    img = np.zeros((h, w))
    for r in range(h):
        vals = lines[1 + r].split(",")
        if len(vals) != w:
            raise ParseError(f"{path}: line {r + 2}: expected {w} values, got {len(vals)}")
        try:
            img[r] = [float(v) for v in vals]
        except ValueError:
            raise ParseError(f"{path}: line {r + 2}: bad float") from None
    return img


def write_molecule(path, g: MolGraph) -> None:
    Aq = g.A
    if not np.array_equal(Aq, np.round(Aq)):
        raise ShapeError("molecule files hold integer graphs; quantize first")
    lines = [f"mol {g.n} {g.valences.shape[0]}",
             " ".join(str(int(t)) for t in g.b)]
    lines += [" ".join(str(int(v)) for v in row) for row in Aq.astype(np.int64)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_molecule(path, valences) -> MolGraph:
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("mol "):
        raise ParseError(f"{path}: line 1: expected 'mol <n> <k_types>' header")
    fields = lines[0].split()
    if len(fields) != 3:
        raise ParseError(f"{path}: line 1: malformed header {lines[0]!r}")
    try:
        n, k = int(fields[1]), int(fields[2])
    except ValueError:
        raise ParseError(f"{path}: line 1: bad counts in {lines[0]!r}") from None
    valences = np.asarray(valences, dtype=np.float64)
    if valences.shape != (k,):
        raise ParseError(f"{path}: file declares {k} types, valence table has "
                         f"{valences.shape[0]}")
    if len(lines) < 2 + n:
        raise ParseError(f"{path}: truncated molecule ({len(lines)} lines, need {2 + n})")
    try:
        b = np.array([int(v) for v in lines[1].split()])
    except ValueError:
        raise ParseError(f"{path}: line 2: bad atom type") from None
    if b.shape != (n,):
        raise ParseError(f"{path}: line 2: expected {n} atom types, got {b.size}")
    A = np.zeros((n, n))
    for r in range(n):
        vals = lines[2 + r].split()
        if len(vals) != n:
            raise ParseError(f"{path}: line {r + 3}: expected {n} bond orders")
        try:
            A[r] = [int(v) for v in vals]
        except ValueError:
            raise ParseError(f"{path}: line {r + 3}: bad bond order") from None
    if not np.array_equal(A, A.T):
        raise ParseError(f"{path}: bond matrix is not symmetric")
    return MolGraph(b, A, valences)


# --- dataset directories ---

_PREFIX = {"toy2d": "points", "margin_images": "img",
           "point_clouds": "cloud", "molecules": "mol"}


def write_dataset(ds: Dataset, out_dir) -> None:
    """One file per item plus a `manifest` with filenames and the
    generation config."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = []
    for i, item in enumerate(ds.items):
        name = f"{_PREFIX[ds.kind]}_{i:05d}.txt"
        p = out / name
        if ds.kind == "toy2d":
            write_cloud(p, item)
        elif ds.kind == "margin_images":
            write_image(p, item)
        elif ds.kind == "point_clouds":
            write_cloud(p, item)
        else:
            write_molecule(p, item)
        names.append(name)
    lines = [f"kind {ds.kind}", f"seed {ds.seed}"]
    lines += [f"param {k} {v}" for k, v in sorted(ds.params.items())]
    lines += [f"item {name}" for name in names]
    (out / "manifest").write_text("\n".join(lines) + "\n")


def read_dataset(in_dir) -> Dataset:
    mpath = Path(in_dir) / "manifest"
    if not mpath.exists():
        raise ParseError(f"{mpath}: manifest not found")
    kind, seed, params, names = None, 0, {}, []
    for ln, line in enumerate(mpath.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.split(None, 1)
        key, rest = fields[0], fields[1] if len(fields) > 1 else ""
        if key == "kind":
            kind = rest
        elif key == "seed":
            try:
                seed = int(rest)
            except ValueError:
                raise ParseError(f"{mpath}: line {ln}: bad seed {rest!r}") from None
        elif key == "param":
            pk, _, pv = rest.partition(" ")
            params[pk] = pv
        elif key == "item":
            names.append(rest)
        else:
            raise ParseError(f"{mpath}: line {ln}: unknown manifest key {key!r}")
    if kind not in _PREFIX:
        raise ParseError(f"{mpath}: missing or unknown kind {kind!r}")
    items = []
    for name in names:
        p = Path(in_dir) / name
        if kind in ("toy2d", "point_clouds"):
            items.append(read_cloud(p))
        elif kind == "margin_images":
            items.append(read_image(p))
        else:
            vals = [int(v) for v in str(params["valences"]).split(",")]
            items.append(read_molecule(p, vals))
    return Dataset(kind, items, seed, params)
