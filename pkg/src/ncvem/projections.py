"""Per-cell projection matrices: value, edge, gradient (plain and modified),
and hessian projections, each a linear map from the local dof vector to
polynomial coefficients.

Construction order is P0 -> E0 -> P1 -> E1 -> P2:

* P0 solves an equality-constrained least squares problem: among polynomials
  of degree l, match the dof vector as well as possible while reproducing the
  interior moments exactly (KKT system; plain least squares when there are no
  interior moments).
* E0 interpolates the trace on each edge: prescribed value moments, the two
  endpoint values, and the remaining moments up to degree l-2 copied from the
  trace of P0.
* P1 integrates P0 by parts against gradients of degree l-1 test polynomials,
  with E0 supplying the boundary term.  The modified variant replaces the
  edge trace by the degree l-1 interpolant fixed by the endpoint values and
  the value moments up to order l-3 alone, which keeps the boundary term
  conforming at the cost of polynomial exactness only up to degree l-1.
* E1 matches the prescribed normal moments (cell outward normal) and fills
  the remaining moments from P1 . n.
* P2 integrates P1 by parts, with E1 and the arclength derivative of E0
  supplying the boundary terms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from . import linsolve
from .dofspace import (
    DofTuple,
    EDGE_NORMAL,
    EDGE_VALUE,
    INTERIOR,
    VERTEX,
    cell_dof_descriptors,
    dof_matrix,
)
from .mesh import CellGeometry
from .polykernel import cell_basis, cell_quadrature, edge_basis, edge_quadrature, poly_dim

__all__ = [
    "UnisolvenceError",
    "CellProjections",
    "build_cell_projections",
    "build_value_projection",
    "build_edge_value_projection",
    "build_gradient_projection",
    "build_modified_gradient_projection",
    "build_edge_normal_projection",
    "build_hessian_projection",
]

_RANK_RTOL = 1e-10


class UnisolvenceError(RuntimeError):
    """The dof functionals fail to determine P_l on this cell."""


@dataclass
class CellProjections:
    """All projection matrices of one cell.

    ``P0``: (dim P_l, N) value projection coefficients in the cell basis.
    ``P1``: (2, dim P_{l-1}, N) gradient projection components.
    ``P2``: (2, 2, dim P_{l-2}, N) hessian projection components.
    ``E0[e]``: (l+1, N) edge trace in the canonical-frame edge basis.
    ``E1[e]``: (l, N) outward normal derivative trace on edge e.
    ``D``: (N, dim P_l) dof matrix of the basis monomials.
    """

    order: int
    tup: DofTuple
    cell: CellGeometry
    modified: bool
    basis: object
    D: np.ndarray
    P0: np.ndarray
    E0: tuple
    P1: np.ndarray
    E1: tuple
    P2: np.ndarray


class _Workspace:
    """Shared per-cell quadrature and basis evaluations."""

    def __init__(self, cell: CellGeometry, tup: DofTuple, order: int, quad_degree=None):
        tup.validate_for_order(order)
        self.cell = cell
        self.tup = tup
        self.order = order
        self.qdeg = quad_degree if quad_degree is not None else 2 * order + 2

        self.basis_l = cell_basis(cell, order)
        self.basis_lm1 = cell_basis(cell, order - 1)
        self.basis_lm2 = cell_basis(cell, order - 2)

        rule = cell_quadrature(cell.vertices, self.qdeg)
        self.cell_rule = rule
        w = rule.weights
        self.phi_l = self.basis_l.evaluate(rule.points)
        self.phi_lm1 = self.basis_lm1.evaluate(rule.points)
        self.phi_lm2 = self.basis_lm2.evaluate(rule.points)
        self.grad_lm1 = self.basis_lm1.evaluate_grad(rule.points)
        self.grad_lm2 = self.basis_lm2.evaluate_grad(rule.points)
        self.mass_lm1 = sla.cho_factor(self.phi_lm1.T @ (w[:, None] * self.phi_lm1))
        self.mass_lm2 = sla.cho_factor(self.phi_lm2.T @ (w[:, None] * self.phi_lm2))

        self.edge_basis_l = edge_basis(order)
        self.edge_rules = []
        self.edge_psi = []       # (m_e, l+1) canonical-frame Legendre values
        self.edge_phi_l = []
        self.edge_phi_lm1 = []
        self.edge_phi_lm2 = []
        for e in range(cell.nv):
            a, b = cell.canonical_endpoints(e)
            er = edge_quadrature(a, b, self.qdeg)
            self.edge_rules.append(er)
            self.edge_psi.append(self.edge_basis_l.evaluate(er.t))
            self.edge_phi_l.append(self.basis_l.evaluate(er.points))
            self.edge_phi_lm1.append(self.basis_lm1.evaluate(er.points))
            self.edge_phi_lm2.append(self.basis_lm2.evaluate(er.points))

        descriptors = cell_dof_descriptors(tup, cell)
        self.descriptors = descriptors
        self.n_dof = len(descriptors)
        self.index = {(d.kind, d.entity, d.moment): i for i, d in enumerate(descriptors)}
        self.interior_rows = [i for i, d in enumerate(descriptors) if d.kind == INTERIOR]

    def dof_index(self, kind, entity, moment=0) -> int:
        return self.index[(kind, entity, moment)]

    def vertex_dof_at_canonical_end(self, e: int, end: int) -> int:
        """Local dof index of the vertex at canonical parameter -1 (end=0) or +1 (end=1)."""
        first = self.cell.edge_orient[e] > 0
        local_vertex = e if (end == 0) == first else (e + 1) % self.cell.nv
        return self.dof_index(VERTEX, local_vertex)


def _rank_check(D: np.ndarray, cell: CellGeometry) -> None:
    r = np.linalg.qr(D, mode="r")
    diag = np.abs(np.diag(r))
    if diag.size == 0 or diag.min() <= _RANK_RTOL * diag.max():
        raise UnisolvenceError(
            f"dof matrix is rank deficient on cell with centroid {cell.centroid}; "
            "the dofs do not determine P_l here"
        )


def _value_projection(ws: _Workspace, D: np.ndarray) -> np.ndarray:
    _rank_check(D, ws.cell)
    if ws.interior_rows:
        C = D[ws.interior_rows, :]
        m = np.zeros((len(ws.interior_rows), ws.n_dof))
        for r, i in enumerate(ws.interior_rows):
            m[r, i] = 1.0
        P0, _ = linsolve.solve_kkt(D.T @ D, C, D.T, m)
    else:
        # unconstrained least squares; QR avoids squaring the conditioning
        P0 = sla.lstsq(D, np.eye(ws.n_dof), lapack_driver="gelsy")[0]
    return P0


def _edge_value_projection(ws: _Workspace, e: int, P0: np.ndarray) -> np.ndarray:
    order, tup, cell = ws.order, ws.tup, ws.cell
    he = cell.edge_lengths[e]
    E0 = np.zeros((order + 1, ws.n_dof))
    for k in range(tup.d0e + 1):
        E0[k, ws.dof_index(EDGE_VALUE, e, k)] = 1.0
    er = ws.edge_rules[e]
    psi = ws.edge_psi[e]
    for k in range(tup.d0e + 1, order - 1):
        row = (er.weights * psi[:, k]) @ ws.edge_phi_l[e] / he
        E0[k] = row @ P0
    # endpoint rows fix the two highest coefficients
    endpoints = ws.edge_basis_l.endpoint_values()
    rhs = np.zeros((2, ws.n_dof))
    for end in (0, 1):
        rhs[end, ws.vertex_dof_at_canonical_end(e, end)] = 1.0
        rhs[end] -= endpoints[end, : order - 1] @ E0[: order - 1]
    block = endpoints[:, order - 1 :]
    E0[order - 1 :] = linsolve.solve_dense(block, rhs)
    return E0


def _serendipity_trace(ws: _Workspace, e: int) -> np.ndarray:
    """Degree l-1 edge interpolant from endpoint values and moments up to l-3."""
    order, tup = ws.order, ws.tup
    if tup.d0e < order - 3:
        raise UnisolvenceError(
            "modified gradient projection needs edge value moments up to order l-3"
        )
    tbasis = edge_basis(order - 1)
    T = np.zeros((order, ws.n_dof))
    for k in range(order - 2):
        T[k, ws.dof_index(EDGE_VALUE, e, k)] = 1.0
    endpoints = tbasis.endpoint_values()
    rhs = np.zeros((2, ws.n_dof))
    for end in (0, 1):
        rhs[end, ws.vertex_dof_at_canonical_end(e, end)] = 1.0
        rhs[end] -= endpoints[end, : order - 2] @ T[: order - 2]
    block = endpoints[:, order - 2 :]
    T[order - 2 :] = linsolve.solve_dense(block, rhs)
    return T


def _gradient_projection(ws: _Workspace, P0: np.ndarray, traces) -> np.ndarray:
    """Common driver for the plain and modified gradient projections.

    ``traces[e]`` holds the edge polynomial coefficients used in the boundary
    term (E0, or the serendipity interpolant for the modified variant).
    """
    w = ws.cell_rule.weights
    P1 = np.empty((2, poly_dim(ws.order - 1), ws.n_dof))
    for i in range(2):
        vol = ws.phi_l.T @ (w[:, None] * ws.grad_lm1[:, :, i])
        rhs = -(vol.T @ P0)
        for e in range(ws.cell.nv):
            trace = traces[e]
            er = ws.edge_rules[e]
            bmat = ws.edge_psi[e][:, : trace.shape[0]].T @ (
                er.weights[:, None] * ws.edge_phi_lm1[e]
            )
            rhs += ws.cell.outward_normals[e][i] * (bmat.T @ trace)
        P1[i] = sla.cho_solve(ws.mass_lm1, rhs)
    return P1


def _edge_normal_projection(ws: _Workspace, e: int, P1: np.ndarray) -> np.ndarray:
    order, tup, cell = ws.order, ws.tup, ws.cell
    he = cell.edge_lengths[e]
    E1 = np.zeros((order, ws.n_dof))
    for k in range(tup.d1e + 1):
        E1[k, ws.dof_index(EDGE_NORMAL, e, k)] = 1.0 / he
    er = ws.edge_rules[e]
    psi = ws.edge_psi[e]
    n = cell.outward_normals[e]
    for k in range(tup.d1e + 1, order):
        row = (er.weights * psi[:, k]) @ ws.edge_phi_lm1[e]
        E1[k] = (n[0] * (row @ P1[0]) + n[1] * (row @ P1[1])) / he
    return E1


def _hessian_projection(ws: _Workspace, P1: np.ndarray, E0, E1) -> np.ndarray:
    cell = ws.cell
    w = ws.cell_rule.weights
    nd2 = poly_dim(ws.order - 2)
    P2 = np.empty((2, 2, nd2, ws.n_dof))
    deriv = ws.edge_basis_l.derivative_matrix()
    boundary = []
    for e in range(cell.nv):
        er = ws.edge_rules[e]
        cmat = ws.edge_psi[e][:, : ws.order].T @ (er.weights[:, None] * ws.edge_phi_lm2[e])
        ds_e0 = (2.0 / cell.edge_lengths[e]) * (deriv @ E0[e])
        tau = cell.canonical_tangent(e)
        n = cell.outward_normals[e]
        boundary.append((cmat, ds_e0, tau, n))
    for i in range(2):
        for j in range(2):
            vol = ws.phi_lm1.T @ (w[:, None] * ws.grad_lm2[:, :, j])
            rhs = -(vol.T @ P1[i])
            for e in range(cell.nv):
                cmat, ds_e0, tau, n = boundary[e]
                trace = n[i] * E1[e] + tau[i] * ds_e0
                rhs += n[j] * (cmat.T @ trace)
            P2[i, j] = sla.cho_solve(ws.mass_lm2, rhs)
    return P2


def build_cell_projections(
    cell: CellGeometry,
    tup: DofTuple,
    order: int,
    modified: bool = False,
    quad_degree: int | None = None,
) -> CellProjections:
    """Build every projection matrix of a cell in dependency order."""
    ws = _Workspace(cell, tup, order, quad_degree)
    D = dof_matrix(tup, cell, order, ws.qdeg)
    P0 = _value_projection(ws, D)
    E0 = tuple(_edge_value_projection(ws, e, P0) for e in range(cell.nv))
    if modified:
        traces = tuple(_serendipity_trace(ws, e) for e in range(cell.nv))
        P1 = _gradient_projection(ws, P0, traces)
    else:
        P1 = _gradient_projection(ws, P0, E0)
    E1 = tuple(_edge_normal_projection(ws, e, P1) for e in range(cell.nv))
    P2 = _hessian_projection(ws, P1, E0, E1)
    return CellProjections(
        order=order,
        tup=tup,
        cell=cell,
        modified=modified,
        basis=ws.basis_l,
        D=D,
        P0=P0,
        E0=E0,
        P1=P1,
        E1=E1,
        P2=P2,
    )


# Standalone builders mirroring the construction steps; each creates its own
# workspace, so prefer build_cell_projections when more than one is needed.

def build_value_projection(cell, tup, order, quad_degree=None):
    ws = _Workspace(cell, tup, order, quad_degree)
    return _value_projection(ws, dof_matrix(tup, cell, order, ws.qdeg))


def build_edge_value_projection(cell, edge, tup, order, P0, quad_degree=None):
    ws = _Workspace(cell, tup, order, quad_degree)
    return _edge_value_projection(ws, edge, P0)


def build_gradient_projection(cell, tup, order, P0, E0, quad_degree=None):
    ws = _Workspace(cell, tup, order, quad_degree)
    return _gradient_projection(ws, P0, E0)


def build_modified_gradient_projection(cell, tup, order, P0, quad_degree=None):
    ws = _Workspace(cell, tup, order, quad_degree)
    traces = tuple(_serendipity_trace(ws, e) for e in range(cell.nv))
    return _gradient_projection(ws, P0, traces)


def build_edge_normal_projection(cell, edge, tup, order, P1, quad_degree=None):
    ws = _Workspace(cell, tup, order, quad_degree)
    return _edge_normal_projection(ws, edge, P1)


def build_hessian_projection(cell, tup, order, P1, E0, E1, quad_degree=None):
    ws = _Workspace(cell, tup, order, quad_degree)
    return _hessian_projection(ws, P1, E0, E1)
