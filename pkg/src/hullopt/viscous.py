"""Q1 stiffness matrix for the gradient-energy (linearized viscous drag) term.

R*_drag = eps * iint |grad f|^2 dx dz with eps = 0.5 rho C_d U^2; on the Q1
basis this is eps * F^t M_d F where M_d collects the exact element-wise
integrals of gradient products.  M_d is sparse (9-point stencil), symmetric
and positive definite on the free-node space.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .geometry import GridSpec

__all__ = ["DragMatrix", "element_stiffness", "assemble_Md", "viscous_resistance",
           "cell_gradient_energies"]


@dataclass(frozen=True)
class DragMatrix:
    """Sparse SPD stiffness matrix (grad e_i, grad e_j) on the free nodes."""

    matrix: sp.csr_matrix = field(repr=False)
    grid: GridSpec

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()


def element_stiffness(dx: float, dz: float) -> np.ndarray:
    """Exact 4x4 cell matrix, local node order (x0z0, x1z0, x0z1, x1z1).

    Tensor product of the 1D two-node stiffness and mass matrices; exact for
    bilinear shape functions, no quadrature involved.
    """
    k1 = np.array([[1.0, -1.0], [-1.0, 1.0]])
    m1 = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0
    return np.kron(m1 * dz, k1 / dx) + np.kron(k1 / dz, m1 * dx)


def assemble_Md(grid: GridSpec) -> DragMatrix:
    """Assemble the stiffness matrix; constrained nodes are simply omitted."""
    ke = element_stiffness(grid.dx, grid.dz)
    cz, cx = np.meshgrid(np.arange(grid.nz), np.arange(grid.nx), indexing="ij")
    cz, cx = cz.ravel(), cx.ravel()
    lat = grid.lattice_index
    corners = np.stack([lat[cz, cx], lat[cz, cx + 1],
                        lat[cz + 1, cx], lat[cz + 1, cx + 1]])  # (4, ncell)
    rows, cols, vals = [], [], []
    for a in range(4):
        for b in range(4):
            keep = (corners[a] >= 0) & (corners[b] >= 0)
            rows.append(corners[a, keep])
            cols.append(corners[b, keep])
            vals.append(np.full(int(keep.sum()), ke[a, b]))
    n = grid.n_free
    mat = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n))
    mat.sum_duplicates()
    return DragMatrix(matrix=mat, grid=grid)


def viscous_resistance(f, drag_matrix: DragMatrix, eps: float) -> float:
    """eps * F^t M_d F (in Newton); strictly positive for F != 0."""
    values = f.values if hasattr(f, "values") else np.asarray(f, dtype=float)
    if values.shape != (drag_matrix.n,):
        raise ValueError(
            f"expected {drag_matrix.n} nodal values, got shape {values.shape}")
    if not (eps > 0.0):
        raise ValueError(f"eps must be positive, got {eps}")
    return eps * float(values @ (drag_matrix.matrix @ values))


def cell_gradient_energies(grid: GridSpec, f) -> np.ndarray:
    """(nz, nx) array of per-cell integrals of |grad f_h|^2 (exact per cell)."""
    from .geometry import full_lattice

    lat = full_lattice(grid, f)
    ke = element_stiffness(grid.dx, grid.dz)
    v00 = lat[:-1, :-1].ravel()
    v10 = lat[:-1, 1:].ravel()
    v01 = lat[1:, :-1].ravel()
    v11 = lat[1:, 1:].ravel()
    local = np.stack([v00, v10, v01, v11])      # (4, ncell)
    energy = np.einsum("ac,ab,bc->c", local, ke, local)
    return energy.reshape(grid.nz, grid.nx)
