"""Structured sparse sensing operators.

The central object is a sparse measurement matrix whose rows accumulate the
grid along straight paths (rows, columns, or the two 45-degree diagonal
families) with i.i.d. Gaussian weights of variance 1/P, where P is the number
of path directions.  Baseline operators (row subsampling, dense Gaussian) are
provided for comparisons and solver regression tests.

Angle conventions (projection lengths for an n1 x n2 grid):

=========  =======================  ==============
token      paths                    path count K
=========  =======================  ==============
"0"        grid columns             n2
"pi/2"     grid rows                n1
"pi/4"     diagonals r - c = const  n1 + n2 - 1
"-pi/4"    mirrored diagonals       n1 + n2 - 1
=========  =======================  ==============
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

__all__ = [
    "ANGLES",
    "AngleSet",
    "PathIndexMap",
    "RadonMatrix",
    "RSMatrix",
    "projection_length",
    "build_path_map",
    "build_radon_matrix",
    "build_rs_matrix",
    "build_dense_gaussian",
    "apply",
    "save_matrix",
]

ANGLES = ("0", "pi/2", "pi/4", "-pi/4")

# Presets in increasing-P order used by the experiments.
ANGLE_PRESETS = {
    2: ("0", "pi/2"),
    3: ("0", "pi/2", "pi/4"),
    4: ("0", "pi/2", "pi/4", "-pi/4"),
}


class AngleSet(tuple):
    """Ordered, duplicate-free subset of the four supported angles."""

    def __new__(cls, angles):
        angles = tuple(angles)
        if not angles:
            raise ValueError("angle set must be non-empty")
        for a in angles:
            if a not in ANGLES:
                raise ValueError(f"unsupported angle {a!r}; supported: {ANGLES}")
        if len(set(angles)) != len(angles):
            raise ValueError("duplicate angles")
        return super().__new__(cls, angles)

    @property
    def p(self) -> int:
        return len(self)

    @staticmethod
    def for_p(p: int) -> "AngleSet":
        if p not in ANGLE_PRESETS:
            raise ValueError(f"no angle preset for P={p}; choose P in {sorted(ANGLE_PRESETS)}")
        return AngleSet(ANGLE_PRESETS[p])


def projection_length(angle: str, n1: int, n2: int) -> int:
    """Number of paths K for one angle."""
    if angle == "0":
        return n2
    if angle == "pi/2":
        return n1
    if angle in ("pi/4", "-pi/4"):
        return n1 + n2 - 1
    raise ValueError(f"unsupported angle {angle!r}")


def _diag_cells(n1: int, n2: int, m: int) -> list[tuple[int, int]]:
    """Cells of the m-th r-c=const diagonal, ordered by the accumulation index.

    Indexing follows the two-branch convention: m in [0, n1) maps to offsets
    o = r - c = m (main diagonal and below); m in [n1, n1+n2-1) maps to the
    above-diagonal offsets o = -(m - n1 + 1).
    """
    if m < n1:
        o = m
        return [(i + o, i) for i in range(min(n1 - o, n2))]
    o = m - n1 + 1  # |offset| above the main diagonal
    return [(i, i + o) for i in range(min(n2 - o, n1))]


def path_cells(angle: str, n1: int, n2: int, m: int) -> list[tuple[int, int]]:
    """Grid cells accumulated into measurement m of the given angle."""
    k = projection_length(angle, n1, n2)
    if not 0 <= m < k:
        raise ValueError(f"path index {m} out of range [0, {k})")
    if angle == "0":
        return [(i, m) for i in range(n1)]
    if angle == "pi/2":
        return [(m, i) for i in range(n2)]
    if angle == "pi/4":
        return _diag_cells(n1, n2, m)
    # "-pi/4": the pi/4 family of the column-mirrored grid.
    return [(r, n2 - 1 - c) for (r, c) in _diag_cells(n1, n2, m)]


@dataclass(frozen=True)
class PathIndexMap:
    """Per-angle partition of the grid into accumulation paths.

    ``paths[angle][m]`` is the ordered array of flat (row-major) cell indices
    summed into measurement m of that angle.  Every cell appears in exactly
    one path per angle.
    """

    n1: int
    n2: int
    angles: AngleSet
    paths: dict

    @property
    def n_cells(self) -> int:
        return self.n1 * self.n2

    @property
    def m_rows(self) -> int:
        return sum(len(self.paths[a]) for a in self.angles)

    def lengths(self) -> dict:
        return {a: len(self.paths[a]) for a in self.angles}

    def segment_offsets(self) -> dict:
        """Row offset of each angle's block in the stacked measurement vector."""
        off, out = 0, {}
        for a in self.angles:
            out[a] = off
            off += len(self.paths[a])
        return out


def build_path_map(n1: int, n2: int, angles) -> PathIndexMap:
    """Partition the grid into per-angle accumulation paths."""
    if n1 < 1 or n2 < 1:
        raise ValueError("grid dimensions must be >= 1")
    angles = angles if isinstance(angles, AngleSet) else AngleSet(angles)
    paths = {}
    for a in angles:
        k = projection_length(a, n1, n2)
        plist = []
        for m in range(k):
            cells = path_cells(a, n1, n2, m)
            plist.append(np.array([r * n2 + c for (r, c) in cells], dtype=np.int64))
        paths[a] = plist
    return PathIndexMap(n1, n2, angles, paths)


@dataclass(frozen=True)
class RadonMatrix:
    """M x N sparse measurement operator with exactly P nonzeros per column.

    Row i holds the Gaussian weights (variance ``sigma2`` = 1/P) of one path;
    rows are stacked per angle in the order of ``path_map.angles``.  Stored
    row-major (CSR).
    """

    path_map: PathIndexMap
    csr: sp.csr_matrix
    seed: int
    sigma2: float

    @property
    def m_rows(self) -> int:
        return self.csr.shape[0]

    @property
    def n_cols(self) -> int:
        return self.csr.shape[1]

    @property
    def angles(self) -> AngleSet:
        return self.path_map.angles

    def row_coefficients(self, angle: str, m: int) -> dict:
        """Mapping flat cell index -> weight for one path's row."""
        row = self.path_map.segment_offsets()[angle] + m
        start, stop = self.csr.indptr[row], self.csr.indptr[row + 1]
        return dict(zip(self.csr.indices[start:stop].tolist(), self.csr.data[start:stop].tolist()))

    def segments(self, y: np.ndarray) -> dict:
        """Split a measurement vector into its per-angle blocks."""
        out, off = {}, 0
        for a in self.angles:
            k = len(self.path_map.paths[a])
            out[a] = y[off : off + k]
            off += k
        return out


def build_radon_matrix(path_map: PathIndexMap, seed: int = 0, sigma2: float | None = None) -> RadonMatrix:
    """Draw the path-structured Gaussian matrix for a path map.

    The sparsity pattern depends only on the map; only the weights depend on
    the seed.  ``sigma2`` defaults to 1/P so that measurement energy is
    unbiased; overriding it is meant for diagnostics only.
    """
    p = path_map.angles.p
    if sigma2 is None:
        sigma2 = 1.0 / p
    rows, cols = [], []
    r = 0
    for a in path_map.angles:
        for cells in path_map.paths[a]:
            rows.append(np.full(len(cells), r, dtype=np.int64))
            cols.append(cells)
            r += 1
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    rng = np.random.default_rng(seed)
    data = rng.normal(0.0, np.sqrt(sigma2), size=len(rows))
    csr = sp.csr_matrix((data, (rows, cols)), shape=(r, path_map.n_cells))
    return RadonMatrix(path_map, csr, seed, float(sigma2))


@dataclass(frozen=True)
class RSMatrix:
    """Row-subsampling operator: keep the listed components of z."""

    n: int
    indices: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= self.n):
            raise ValueError("indices out of range")
        if len(np.unique(idx)) != len(idx):
            raise ValueError("indices must be distinct")
        object.__setattr__(self, "indices", np.sort(idx))

    @property
    def m_rows(self) -> int:
        return len(self.indices)

    @property
    def n_cols(self) -> int:
        return self.n


def build_rs_matrix(n: int, m: int, seed: int = 0) -> RSMatrix:
    """m distinct uniform indices out of n; deterministic per seed."""
    if not 0 < m <= n:
        raise ValueError(f"need 0 < m <= n, got m={m}, n={n}")
    rng = np.random.default_rng(seed)
    return RSMatrix(n, rng.choice(n, size=m, replace=False))


def build_dense_gaussian(m: int, n: int, seed: int = 0) -> np.ndarray:
    """Dense i.i.d. N(0, 1/m) matrix (baseline operator)."""
    if m < 1 or n < 1:
        raise ValueError("dimensions must be >= 1")
    rng = np.random.default_rng(seed)
    return rng.normal(0.0, 1.0 / np.sqrt(m), size=(m, n))


def apply(matrix, z: np.ndarray) -> np.ndarray:
    """Measure a field vector: y = Phi z (or component selection for RS)."""
    z = np.asarray(z, dtype=float).ravel()
    if isinstance(matrix, RadonMatrix):
        if z.size != matrix.n_cols:
            raise ValueError(f"field length {z.size} != matrix columns {matrix.n_cols}")
        return matrix.csr @ z
    if isinstance(matrix, RSMatrix):
        if z.size != matrix.n:
            raise ValueError(f"field length {z.size} != operator length {matrix.n}")
        return z[matrix.indices]
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2 or m.shape[1] != z.size:
        raise ValueError(f"matrix shape {m.shape} incompatible with field length {z.size}")
    return m @ z


def save_matrix(matrix: RadonMatrix, csv_path: str | Path, header_path: str | Path | None = None) -> None:
    """Export as coordinate triplets (row, col, value) plus a JSON header."""
    csv_path = Path(csv_path)
    coo = matrix.csr.tocoo()
    with open(csv_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["row", "col", "value"])
        for r, c, v in zip(coo.row, coo.col, coo.data):
            w.writerow([int(r), int(c), repr(float(v))])
    if header_path is None:
        header_path = csv_path.with_suffix(".json")
    header = {
        "n1": matrix.path_map.n1,
        "n2": matrix.path_map.n2,
        "angles": list(matrix.angles),
        "seed": matrix.seed,
        "M": matrix.m_rows,
        "N": matrix.n_cols,
    }
    Path(header_path).write_text(json.dumps(header, indent=2))
