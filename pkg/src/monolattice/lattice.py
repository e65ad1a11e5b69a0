"""Regular grid of parameters over a D-dimensional box.

A lattice of sizes (M_1, ..., M_D) places one parameter at every integer
vertex of [0, M_1-1] x ... x [0, M_D-1].  Parameters are stored flat, in
stride order: dimension 0 varies fastest, so the flat index of vertex v is
sum_d v[d] * stride[d] with stride[0] = 1 and stride[d] = stride[d-1] * M_{d-1}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

MAX_PARAMETERS = 2**30


# --------------------------------------------------------------------------
# shape


@dataclass(frozen=True)
class LatticeShape:
    """Vertex counts per dimension plus the derived flat-index strides."""

    sizes: tuple[int, ...]
    strides: tuple[int, ...]

    def __init__(self, sizes) -> None:
        sizes = tuple(int(m) for m in sizes)
        if not sizes:
            raise ValueError("lattice needs at least one dimension")
        for d, m in enumerate(sizes):
            if m < 2:
                raise ValueError(f"dimension {d} has {m} vertices; need >= 2")
        total = math.prod(sizes)
        if total > MAX_PARAMETERS:
            raise ValueError(
                f"lattice has {total} parameters; refusing shapes over {MAX_PARAMETERS}"
            )
        strides = []
        acc = 1
        for m in sizes:
            strides.append(acc)
            acc *= m
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "strides", tuple(strides))

    @property
    def ndim(self) -> int:
        return len(self.sizes)

    @property
    def num_parameters(self) -> int:
        return math.prod(self.sizes)


@dataclass(frozen=True)
class CellLocation:
    """A point inside one cell: integer base vertex plus residual in [0,1]^D."""

    base: tuple[int, ...]
    residual: tuple[float, ...]


# --------------------------------------------------------------------------
# vertex indexing


def vertex_index(shape: LatticeShape, coords) -> int:
    """Flat index of the vertex at integer coordinates ``coords``."""
    coords = tuple(int(c) for c in coords)
    if len(coords) != shape.ndim:
        raise ValueError(f"expected {shape.ndim} coordinates, got {len(coords)}")
    idx = 0
    for d, c in enumerate(coords):
        if not 0 <= c < shape.sizes[d]:
            raise ValueError(
                f"coordinate {c} out of range [0, {shape.sizes[d] - 1}] in dimension {d}"
            )
        idx += c * shape.strides[d]
    return idx


def vertex_coords(shape: LatticeShape, index: int) -> tuple[int, ...]:
    """Integer coordinates of the vertex with flat index ``index``."""
    index = int(index)
    if not 0 <= index < shape.num_parameters:
        raise ValueError(
            f"index {index} out of range [0, {shape.num_parameters - 1}]"
        )
    coords = []
    for m in shape.sizes:
        index, c = divmod(index, m)
        coords.append(c)
    return tuple(coords)


# --------------------------------------------------------------------------
# cell lookup


def locate_cell(shape: LatticeShape, x) -> CellLocation:
    """Cell containing ``x`` and the residual of ``x`` within it.

    ``x`` must lie inside the lattice box.  The base vertex is floor(x),
    except on the upper face of the box where the last cell is reused so the
    residual becomes 1.0 instead of stepping outside the grid.
    """
    xs = [float(v) for v in x]
    if len(xs) != shape.ndim:
        raise ValueError(f"expected {shape.ndim} coordinates, got {len(xs)}")
    base = []
    residual = []
    for d, v in enumerate(xs):
        top = shape.sizes[d] - 1
        if not 0.0 <= v <= top:
            raise ValueError(
                f"coordinate {v} outside [0, {top}] in dimension {d}"
            )
        b = int(v)
        if b >= top:
            b = top - 1
        base.append(b)
        residual.append(v - b)
    return CellLocation(tuple(base), tuple(residual))


def locate_cells(shape: LatticeShape, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`locate_cell` for an (n, D) array of points."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != shape.ndim:
        raise ValueError(f"expected an (n, {shape.ndim}) array, got {pts.shape}")
    top = np.asarray(shape.sizes, dtype=float) - 1.0
    if np.any(pts < 0.0) or np.any(pts > top):
        raise ValueError("points outside the lattice box")
    base = np.minimum(np.floor(pts), top - 1.0).astype(np.int64)
    residual = pts - base
    return base, residual
