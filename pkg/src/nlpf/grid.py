"""Uniform tensor grids over the unit domain plus its interaction layer.

The computational domain is (0,1)^n extended on every side by a layer of
``ceil(delta/h)`` nodes so that every interior node sees its full interaction
ball.  Nodes are classified as interior (closure of the unit domain) or
exterior (the layer).  All nodal quadrature uses the tensor trapezoidal rule
of the extended domain: weight ``h^n``, halved per axis at the extreme nodes
of the extended domain.  Using one quadrature rule everywhere keeps the
discrete phase system exactly the KKT system of a discrete objective, which
the solver's energy-descent and projection diagnostics rely on.  For
``delta = 0`` (local models) the layer is empty and the rule reduces to the
standard lumped mass of the unit domain.

Node ordering is lexicographic with x fastest: flat index = iy * nx + ix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

__all__ = ["Grid", "StiffnessMatrix", "build_grid", "assemble_stiffness",
           "cached_stiffness", "lumped_inner"]

#: Refuse to allocate grids above this node count (guards against typos in h).
MAX_NODES = 20_000_000


@dataclass(eq=False)
class Grid:
    """Uniform grid over the extended domain with node classification.

    h is the (snapped) mesh size, n_cells the cell count per axis of the unit
    domain, layer the interaction-layer width in nodes per side.
    """

    dim: int
    h: float
    n_cells: int
    layer: int
    h_requested: float
    interior_ids: np.ndarray = field(repr=False)
    exterior_ids: np.ndarray = field(repr=False)
    interior_mask: np.ndarray = field(repr=False)
    lumped_mass: np.ndarray = field(repr=False)

    @property
    def n_axis(self) -> int:
        """Nodes per axis of the extended domain."""
        return self.n_cells + 1 + 2 * self.layer

    @property
    def n_axis_interior(self) -> int:
        return self.n_cells + 1

    @property
    def shape(self) -> tuple:
        """Array shape of a full nodal field ((ny, nx) in 2D, x fastest)."""
        return (self.n_axis,) * self.dim

    @property
    def interior_shape(self) -> tuple:
        return (self.n_axis_interior,) * self.dim

    @property
    def n_nodes(self) -> int:
        return self.n_axis**self.dim

    @property
    def n_interior(self) -> int:
        return self.n_axis_interior**self.dim

    @property
    def mass_interior(self) -> np.ndarray:
        return self.lumped_mass[self.interior_ids]

    def axis_coords(self) -> np.ndarray:
        """Coordinates along one axis of the extended domain."""
        return (np.arange(self.n_axis) - self.layer) * self.h

    def coords(self) -> np.ndarray:
        """(n_nodes, dim) coordinates in node ordering."""
        ax = self.axis_coords()
        if self.dim == 1:
            return ax[:, None]
        X, Y = np.meshgrid(ax, ax, indexing="xy")
        return np.column_stack([X.ravel(), Y.ravel()])

    def interior_field_as_grid(self, values: np.ndarray) -> np.ndarray:
        """Reshape an interior-length vector to its tensor layout."""
        return np.asarray(values).reshape(self.interior_shape)


def build_grid(dim: int, h: float, delta: float = 0.0) -> Grid:
    """Build the uniform grid; h is snapped to an exact divisor of 1.

    The layer is the minimal one covering the interaction radius,
    ``ceil(delta/h)`` nodes per side (empty for delta = 0).
    """
    if dim not in (1, 2):
        raise ValueError(f"dim must be 1 or 2, got {dim}")
    if not (0 < h < 1):
        raise ValueError(f"mesh size must satisfy 0 < h < 1, got {h}")
    if delta < 0:
        raise ValueError(f"delta must be >= 0, got {delta}")
    n_cells = int(round(1.0 / h))
    h_snapped = 1.0 / n_cells
    layer = 0 if delta == 0 else int(math.ceil(delta / h_snapped - 1e-12))

    n_axis = n_cells + 1 + 2 * layer
    if n_axis**dim > MAX_NODES:
        raise ValueError(
            f"grid would have {n_axis**dim} nodes (> {MAX_NODES}); refusing"
        )

    on_axis_interior = np.zeros(n_axis, dtype=bool)
    on_axis_interior[layer : layer + n_cells + 1] = True

    # Tensor trapezoidal weights of the extended domain.
    w_axis = np.full(n_axis, h_snapped)
    w_axis[0] *= 0.5
    w_axis[-1] *= 0.5

    if dim == 1:
        interior_mask = on_axis_interior
        mass = w_axis.copy()
    else:
        interior_mask = (on_axis_interior[:, None] & on_axis_interior[None, :]).ravel()
        mass = np.outer(w_axis, w_axis).ravel()

    ids = np.arange(n_axis**dim)
    return Grid(
        dim=dim,
        h=h_snapped,
        n_cells=n_cells,
        layer=layer,
        h_requested=h,
        interior_ids=ids[interior_mask],
        exterior_ids=ids[~interior_mask],
        interior_mask=interior_mask,
        lumped_mass=mass,
    )


#: Alias kept for API clarity: stiffness matrices are plain CSR matrices.
StiffnessMatrix = sp.csr_matrix


def _stiffness_1d(n: int, h: float) -> sp.csr_matrix:
    """P1 Neumann stiffness on n nodes: (1/h) tridiag(-1, 2, -1), boundary rows (1/h)[1, -1]."""
    main = np.full(n, 2.0)
    main[0] = main[-1] = 1.0
    off = np.full(n - 1, -1.0)
    return sp.diags_array([off, main, off], offsets=[-1, 0, 1]).tocsr() * (1.0 / h)


def assemble_stiffness(grid: Grid) -> sp.csr_matrix:
    """Stiffness matrix of the unit domain (interior nodes, natural BCs).

    1D: tridiagonal P1 Laplacian.  2D: tensor-product 5-point stencil,
    i.e. kron(M1, K1) + kron(K1, M1) with the 1D trapezoidal mass M1.
    Symmetric positive semidefinite with constants in the null space.
    """
    n = grid.n_axis_interior
    K1 = _stiffness_1d(n, grid.h)
    if grid.dim == 1:
        return K1
    w = np.full(n, grid.h)
    w[0] *= 0.5
    w[-1] *= 0.5
    M1 = sp.diags_array(w).tocsr()
    return (sp.kron(M1, K1) + sp.kron(K1, M1)).tocsr()


def cached_stiffness(grid: Grid) -> sp.csr_matrix:
    """assemble_stiffness memoized on the grid (assembly is pure)."""
    K = grid.__dict__.get("_stiffness_cache")
    if K is None:
        K = assemble_stiffness(grid)
        grid.__dict__["_stiffness_cache"] = K
    return K


def lumped_inner(grid: Grid, a: np.ndarray, b: np.ndarray, region: str = "interior") -> float:
    """Mass-lumped inner product of two full-length nodal fields over a region.

    region is "interior", "exterior" or "union"; the weights are the grid's
    trapezoidal masses restricted to that node set.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != (grid.n_nodes,) or b.shape != (grid.n_nodes,):
        raise ValueError(
            f"fields must be defined on all {grid.n_nodes} nodes, "
            f"got shapes {a.shape} and {b.shape}"
        )
    if region == "interior":
        ids = grid.interior_ids
    elif region == "exterior":
        ids = grid.exterior_ids
    elif region == "union":
        return float(np.dot(grid.lumped_mass * a, b))
    else:
        raise ValueError(f"unknown region {region!r}")
    return float(np.dot(grid.lumped_mass[ids] * a[ids], b[ids]))
