"""Dof tuples, local dof functionals, and global numbering with edge signs.

Local degrees of freedom of a cell are, in order: the value at each vertex,
then per edge its value moments followed by its normal moments, then the
interior moments.  Edge moments are taken against the orthonormal Legendre
basis in the canonical edge parametrisation so the value moments are the same
functional seen from both neighbouring cells; normal moments use the cell's
outward normal, so the shared global functional (defined with the canonical
normal) is recovered by flipping the sign whenever the cell traverses the
edge against the canonical direction.  That sign is recorded in the layout
and applied during gather/scatter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import CellGeometry, PolyMesh
from .polykernel import (
    cell_basis,
    cell_quadrature,
    edge_basis,
    edge_quadrature,
    poly_dim,
)

__all__ = [
    "DofTupleError",
    "DofTuple",
    "SpacePreset",
    "PRESETS",
    "DofDescriptor",
    "VERTEX",
    "EDGE_VALUE",
    "EDGE_NORMAL",
    "INTERIOR",
    "cell_dof_descriptors",
    "local_dof_count",
    "extended_dof_count",
    "dofs_of_function",
    "dof_matrix",
    "dofs_of_polynomial",
    "DofLayout",
    "build_global_numbering",
]

VERTEX = "vertex"
EDGE_VALUE = "edge_value"
EDGE_NORMAL = "edge_normal"
INTERIOR = "interior"


class DofTupleError(ValueError):
    """Dof tuple violates an admissibility constraint."""


@dataclass(frozen=True)
class DofTuple:
    """The 5-entry moment-count descriptor (d0v, d1v, d0e, d1e, d0i).

    An entry of -1 means no moments of that kind.  The supported spaces all
    have vertex values only: d0v = 0 and d1v = -1.
    """

    d0e: int
    d1e: int
    d0i: int
    d0v: int = 0
    d1v: int = -1

    def __post_init__(self):
        for name in ("d0v", "d1v", "d0e", "d1e", "d0i"):
            if getattr(self, name) < -1:
                raise DofTupleError(f"{name} must be >= -1")
        if self.d0v != 0 or self.d1v != -1:
            raise DofTupleError("only d0v = 0, d1v = -1 is supported")

    def validate_for_order(self, order: int) -> None:
        """Local and global admissibility for polynomial order ``order``."""
        if order < 2:
            raise DofTupleError("polynomial order must be >= 2")
        if not (self.d0e <= order - 2 and self.d1e <= order - 2 and self.d0i <= order):
            raise DofTupleError(
                f"tuple {self.as_tuple()} exceeds the local space bounds for l={order}"
            )
        if not (
            self.d0e >= order - 3 and self.d1e >= order - 2 and self.d0i >= order - 4
        ):
            raise DofTupleError(
                f"tuple {self.as_tuple()} is too small for a single-valued global space at l={order}"
            )

    def as_tuple(self) -> tuple[int, int, int, int, int]:
        return (self.d0v, self.d1v, self.d0e, self.d1e, self.d0i)

    @property
    def interior_dim(self) -> int:
        return poly_dim(self.d0i)


@dataclass(frozen=True)
class SpacePreset:
    """Named discrete space: dof tuple producer plus the gradient flavour."""

    key: str
    label: str
    modified_gradient: bool

    def dof_tuple(self, order: int) -> DofTuple:
        if order < 2:
            raise DofTupleError("polynomial order must be >= 2")
        if self.key in ("c1nc", "c1mod"):
            return DofTuple(d0e=max(order - 3, -1), d1e=order - 2, d0i=max(order - 4, -1))
        if self.key == "c1c0":
            return DofTuple(d0e=order - 2, d1e=order - 2, d0i=max(order - 4, -1))
        raise DofTupleError(f"unknown space preset {self.key!r}")


PRESETS = {
    "c1nc": SpacePreset("c1nc", "C1-nc", modified_gradient=False),
    "c1mod": SpacePreset("c1mod", "C1-mod", modified_gradient=True),
    "c1c0": SpacePreset("c1c0", "C1-C0", modified_gradient=False),
}


@dataclass(frozen=True)
class DofDescriptor:
    kind: str
    entity: int
    moment: int
    scale: float


def cell_dof_descriptors(tup: DofTuple, cell: CellGeometry) -> tuple[DofDescriptor, ...]:
    """Ordered local dof descriptors: vertices, per-edge moments, interior."""
    out = [DofDescriptor(VERTEX, i, 0, 1.0) for i in range(cell.nv)]
    for e in range(cell.nv):
        he = cell.edge_lengths[e]
        out.extend(DofDescriptor(EDGE_VALUE, e, k, 1.0 / he) for k in range(tup.d0e + 1))
        out.extend(DofDescriptor(EDGE_NORMAL, e, k, 1.0) for k in range(tup.d1e + 1))
    out.extend(
        DofDescriptor(INTERIOR, 0, k, 1.0 / cell.area) for k in range(tup.interior_dim)
    )
    return tuple(out)


def local_dof_count(tup: DofTuple, cell: CellGeometry) -> int:
    ne = cell.nv
    return ne + ne * ((tup.d0e + 1) + (tup.d1e + 1)) + tup.interior_dim


def extended_dof_count(order: int, cell: CellGeometry) -> int:
    """Dimension of the enlarged local space: n_e (2l - 1) + (l+1)(l+2)/2."""
    if order < 2:
        raise DofTupleError("polynomial order must be >= 2")
    return cell.nv * (2 * order - 1) + poly_dim(order)


def _edge_quad_degree(tup: DofTuple, order: int | None) -> int:
    if order is not None:
        return 2 * order + 2
    return 2 * (max(tup.d0e, tup.d1e, tup.d0i, 2) + 3)


def dofs_of_function(
    tup: DofTuple,
    cell: CellGeometry,
    value,
    grad=None,
    quad_degree: int | None = None,
) -> np.ndarray:
    """Apply every local dof functional to a smooth function.

    ``value(points)`` returns values at an ``(n, 2)`` array; ``grad(points)``
    returns ``(n, 2)`` gradients and is required when d1e >= 0.  Edge moments
    are integrated in the canonical edge parametrisation; normal moments use
    the cell's outward normal.
    """
    if tup.d1e >= 0 and grad is None:
        raise ValueError("gradient evaluations required for edge normal moments")
    qdeg = quad_degree if quad_degree is not None else _edge_quad_degree(tup, None)
    out = [np.asarray(value(cell.vertices), dtype=float)]
    n_moments = max(tup.d0e, tup.d1e) + 1
    ebasis = edge_basis(max(n_moments - 1, 0))
    for e in range(cell.nv):
        a, b = cell.canonical_endpoints(e)
        rule = edge_quadrature(a, b, qdeg)
        psi = ebasis.evaluate(rule.t)
        if tup.d0e >= 0:
            vals = np.asarray(value(rule.points), dtype=float)
            moments = psi[:, : tup.d0e + 1].T @ (rule.weights * vals)
            out.append(moments / cell.edge_lengths[e])
        if tup.d1e >= 0:
            gn = np.asarray(grad(rule.points), dtype=float) @ cell.outward_normals[e]
            out.append(psi[:, : tup.d1e + 1].T @ (rule.weights * gn))
    if tup.d0i >= 0:
        rule = cell_quadrature(cell.vertices, qdeg)
        phi = cell_basis(cell, tup.d0i).evaluate(rule.points)
        vals = np.asarray(value(rule.points), dtype=float)
        out.append(phi.T @ (rule.weights * vals) / cell.area)
    return np.concatenate(out)


def dof_matrix(
    tup: DofTuple, cell: CellGeometry, order: int, quad_degree: int | None = None
) -> np.ndarray:
    """Stack the dofs of all scaled basis monomials of P_order, N_dof x dim."""
    basis = cell_basis(cell, order)
    qdeg = quad_degree if quad_degree is not None else 2 * order + 2
    rows = [basis.evaluate(cell.vertices)]
    n_moments = max(tup.d0e, tup.d1e) + 1
    ebasis = edge_basis(max(n_moments - 1, 0))
    for e in range(cell.nv):
        a, b = cell.canonical_endpoints(e)
        rule = edge_quadrature(a, b, qdeg)
        psi = ebasis.evaluate(rule.t)
        phi = basis.evaluate(rule.points)
        if tup.d0e >= 0:
            rows.append(
                psi[:, : tup.d0e + 1].T @ (rule.weights[:, None] * phi) / cell.edge_lengths[e]
            )
        if tup.d1e >= 0:
            gn = basis.evaluate_grad(rule.points) @ cell.outward_normals[e]
            rows.append(psi[:, : tup.d1e + 1].T @ (rule.weights[:, None] * gn))
    if tup.d0i >= 0:
        rule = cell_quadrature(cell.vertices, qdeg)
        phi_full = basis.evaluate(rule.points)
        phi_int = cell_basis(cell, tup.d0i).evaluate(rule.points)
        rows.append(phi_int.T @ (rule.weights[:, None] * phi_full) / cell.area)
    return np.vstack(rows)


def dofs_of_polynomial(
    tup: DofTuple,
    cell: CellGeometry,
    coefficients,
    order: int,
    quad_degree: int | None = None,
) -> np.ndarray:
    """Dof vector of the polynomial with the given CellBasis coefficients."""
    return dof_matrix(tup, cell, order, quad_degree) @ np.asarray(coefficients, dtype=float)


# ---------------------------------------------------------------------------
# global numbering

@dataclass(frozen=True)
class DofLayout:
    """Global numbering of the free dofs with per-cell gather data.

    ``cell_gids[k]`` maps each local dof of cell k to its global index, -1 for
    constrained (boundary) dofs; ``cell_signs[k]`` is -1 exactly on the edge
    normal dofs whose cell outward normal opposes the canonical edge normal.
    """

    mesh: PolyMesh
    tup: DofTuple
    free_count: int
    constrained_count: int
    cell_gids: tuple
    cell_signs: tuple
    vertex_gid: np.ndarray
    edge_gids: np.ndarray
    cell_gid_start: np.ndarray

    @property
    def dofs_per_edge(self) -> int:
        return (self.tup.d0e + 1) + (self.tup.d1e + 1)

    def edge_dof_ids(self, eid: int) -> np.ndarray:
        """Global ids of the value+normal moments on one edge (-1 if constrained)."""
        return self.edge_gids[eid]


def build_global_numbering(mesh: PolyMesh, tup: DofTuple) -> DofLayout:
    """Densely number the free dofs; boundary vertex/edge dofs are constrained."""
    n_ev = tup.d0e + 1
    n_en = tup.d1e + 1
    per_edge = n_ev + n_en
    n_int = tup.interior_dim

    vertex_gid = np.full(mesh.num_vertices, -1, dtype=int)
    counter = 0
    for v in range(mesh.num_vertices):
        if not mesh.vertex_on_boundary[v]:
            vertex_gid[v] = counter
            counter += 1
    edge_gids = np.full((mesh.num_edges, per_edge), -1, dtype=int)
    for e in range(mesh.num_edges):
        if not mesh.edge_on_boundary[e]:
            edge_gids[e] = np.arange(counter, counter + per_edge)
            counter += per_edge
    cell_gid_start = np.empty(mesh.num_cells, dtype=int)
    for k in range(mesh.num_cells):
        cell_gid_start[k] = counter
        counter += n_int
    free_count = counter

    cell_gids = []
    cell_signs = []
    constrained = 0
    for k in range(mesh.num_cells):
        loop = mesh.cells[k]
        nv = len(loop)
        gids = []
        signs = []
        for v in loop:
            gids.append(vertex_gid[v])
            signs.append(1.0)
        for eid, orient in mesh.cell_edges[k]:
            for j in range(n_ev):
                gids.append(edge_gids[eid, j])
                signs.append(1.0)
            for j in range(n_en):
                gids.append(edge_gids[eid, n_ev + j])
                signs.append(float(orient))
        for j in range(n_int):
            gids.append(cell_gid_start[k] + j)
            signs.append(1.0)
        gids = np.array(gids, dtype=int)
        constrained += int(np.count_nonzero(gids < 0))
        cell_gids.append(gids)
        cell_signs.append(np.array(signs))

    n_constrained = (
        int(mesh.vertex_on_boundary.sum()) + per_edge * int(mesh.edge_on_boundary.sum())
    )
    return DofLayout(
        mesh=mesh,
        tup=tup,
        free_count=free_count,
        constrained_count=n_constrained,
        cell_gids=tuple(cell_gids),
        cell_signs=tuple(cell_signs),
        vertex_gid=vertex_gid,
        edge_gids=edge_gids,
        cell_gid_start=cell_gid_start,
    )
