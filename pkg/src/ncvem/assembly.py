"""Local stiffness matrices with stabilization, load vectors, global assembly.

The local bilinear form integrates the projected hessian, gradient and value
against the varying coefficients, and adds the dof-vector stabilization
``s_K sum_j dof_j(u - P0 u) dof_j(v - P0 v)`` with
``s_K = kbar/h^2 + bbar + gbar h^2`` built from quadrature means of the
coefficients.  The load uses the identity ``<f_h, v> = sum_K (f, P0 v)_K``.
Global assembly scatters with the layout's orientation signs and drops the
constrained (homogeneous clamped boundary) dofs.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .dofspace import DofLayout, DofTuple
from .mesh import CellGeometry, PolyMesh
from .polykernel import cell_basis, cell_quadrature
from .projections import CellProjections

__all__ = [
    "AssemblyError",
    "CoefficientField",
    "LocalSystem",
    "GlobalSystem",
    "assemble_local",
    "assemble_global",
    "dump_matrix",
]


class AssemblyError(RuntimeError):
    """Invalid coefficient data or scatter inconsistency."""


@dataclass(frozen=True)
class CoefficientField:
    """Evaluable PDE data; each field maps an (n, 2) point array to (n,) values."""

    kappa: object
    beta: object
    gamma: object
    forcing: object


@dataclass
class LocalSystem:
    matrix: np.ndarray
    rhs: np.ndarray


@dataclass
class GlobalSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    free_count: int


def assemble_local(
    cell: CellGeometry,
    tup: DofTuple,
    proj: CellProjections,
    coeffs: CoefficientField,
    quad_degree: int | None = None,
) -> LocalSystem:
    """Stiffness matrix and load vector of one cell."""
    order = proj.order
    rule = cell_quadrature(cell.vertices, quad_degree if quad_degree is not None else 2 * order + 2)
    w = rule.weights
    kap = np.asarray(coeffs.kappa(rule.points), dtype=float)
    if np.any(kap <= 0.0):
        raise AssemblyError("kappa must be strictly positive at quadrature points")
    bet = np.asarray(coeffs.beta(rule.points), dtype=float)
    gam = np.asarray(coeffs.gamma(rule.points), dtype=float)
    f = np.asarray(coeffs.forcing(rule.points), dtype=float)

    basis = proj.basis
    phi_l = basis.evaluate(rule.points)
    phi_lm1 = cell_basis(cell, order - 1).evaluate(rule.points)
    phi_lm2 = cell_basis(cell, order - 2).evaluate(rule.points)

    mass_k = phi_lm2.T @ ((w * kap)[:, None] * phi_lm2)
    mass_b = phi_lm1.T @ ((w * bet)[:, None] * phi_lm1)
    mass_g = phi_l.T @ ((w * gam)[:, None] * phi_l)

    A = proj.P0.T @ mass_g @ proj.P0
    for i in range(2):
        A += proj.P1[i].T @ mass_b @ proj.P1[i]
        for j in range(2):
            A += proj.P2[i, j].T @ mass_k @ proj.P2[i, j]

    area = cell.area
    h = cell.diameter
    kbar = float(w @ kap) / area
    bbar = float(w @ bet) / area
    gbar = float(w @ gam) / area
    s = kbar / h**2 + bbar + gbar * h**2
    R = np.eye(proj.D.shape[0]) - proj.D @ proj.P0
    A += s * (R.T @ R)
    A = 0.5 * (A + A.T)

    b = proj.P0.T @ (phi_l.T @ (w * f))
    return LocalSystem(matrix=A, rhs=b)


def assemble_global(
    mesh: PolyMesh, layout: DofLayout, local_systems
) -> GlobalSystem:
    """Signed scatter of the local systems, constrained dofs dropped."""
    if len(local_systems) != mesh.num_cells:
        raise AssemblyError("one local system per cell required")
    n = layout.free_count
    rows, cols, vals = [], [], []
    rhs = np.zeros(n)
    for k, local in enumerate(local_systems):
        gid = layout.cell_gids[k]
        sgn = layout.cell_signs[k]
        if local.matrix.shape != (len(gid), len(gid)):
            raise AssemblyError(f"local system of cell {k} has the wrong size")
        if np.any(gid >= n):
            raise AssemblyError("global dof index out of range")
        free = np.nonzero(gid >= 0)[0]
        gi = gid[free]
        si = sgn[free]
        block = (si[:, None] * local.matrix[np.ix_(free, free)]) * si[None, :]
        rows.append(np.repeat(gi, len(gi)))
        cols.append(np.tile(gi, len(gi)))
        vals.append(block.ravel())
        np.add.at(rhs, gi, si * local.rhs[free])
    if rows:
        matrix = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(n, n),
        ).tocsr()
    else:
        matrix = sp.csr_matrix((n, n))
    return GlobalSystem(matrix=matrix, rhs=rhs, free_count=n)


def dump_matrix(matrix, path) -> None:
    """Write the sparse matrix in 0-based coordinate text format."""
    coo = matrix.tocoo() if sp.issparse(matrix) else sp.coo_matrix(matrix)
    order = np.lexsort((coo.col, coo.row))
    lines = [
        f"{coo.row[i]} {coo.col[i]} {coo.data[i]:.16e}" for i in order
    ]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
