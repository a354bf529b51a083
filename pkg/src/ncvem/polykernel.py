"""Scaled polynomial bases, quadrature on polygons and segments, L2 projection.

Cell polynomials are scaled monomials ``m_a(x) = ((x - x_K)/h_K)^a`` in graded
order, which keeps the local matrices well conditioned under refinement.  Edge
polynomials are Legendre polynomials on the canonical edge parametrisation,
normalised so that ``(1/h_e) int_e L_i L_j = delta_ij``; edge mass matrices are
then multiples of the identity.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre as npleg
from scipy.special import roots_jacobi

from . import linsolve

__all__ = [
    "MAX_QUAD_DEGREE",
    "QuadratureDegreeError",
    "QuadRule",
    "EdgeRule",
    "CellBasis",
    "EdgeBasis",
    "cell_basis",
    "edge_basis",
    "basis_derivatives",
    "poly_dim",
    "graded_exponents",
    "triangle_rule",
    "cell_quadrature",
    "edge_quadrature",
    "l2_project_cell",
    "polygon_area",
    "polygon_centroid",
    "polygon_diameter",
]

MAX_QUAD_DEGREE = 30


class QuadratureDegreeError(ValueError):
    """Requested exactness degree outside the supported range."""


def poly_dim(order: int) -> int:
    """Dimension of the full polynomial space of the given total degree."""
    if order < 0:
        return 0
    return (order + 1) * (order + 2) // 2


@lru_cache(maxsize=None)
def graded_exponents(order: int) -> np.ndarray:
    """Monomial exponents of total degree <= order, graded, (k-j, j) within a degree."""
    exps = [(k - j, j) for k in range(order + 1) for j in range(k + 1)]
    out = np.array(exps, dtype=int).reshape(-1, 2)
    out.setflags(write=False)
    return out


# ---------------------------------------------------------------------------
# polygon geometry primitives (used by both this module and the mesh module)

def _as_vertices(cell) -> np.ndarray:
    verts = getattr(cell, "vertices", cell)
    return np.asarray(verts, dtype=float).reshape(-1, 2)


def polygon_area(vertices) -> float:
    """Signed shoelace area; positive for counter-clockwise loops."""
    v = _as_vertices(vertices)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def polygon_centroid(vertices) -> np.ndarray:
    v = _as_vertices(vertices)
    x, y = v[:, 0], v[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    area = 0.5 * float(np.sum(cross))
    cx = float(np.sum((x + xn) * cross)) / (6.0 * area)
    cy = float(np.sum((y + yn) * cross)) / (6.0 * area)
    return np.array([cx, cy])


def polygon_diameter(vertices) -> float:
    v = _as_vertices(vertices)
    diff = v[:, None, :] - v[None, :, :]
    return float(np.sqrt((diff ** 2).sum(axis=2).max()))


# ---------------------------------------------------------------------------
# bases

@dataclass(frozen=True)
class CellBasis:
    """Scaled monomial basis on a cell: m_a(x) = ((x - center)/scale)^a."""

    order: int
    center: np.ndarray
    scale: float

    @property
    def exponents(self) -> np.ndarray:
        return graded_exponents(self.order)

    @property
    def dim(self) -> int:
        return poly_dim(self.order)

    def evaluate(self, points) -> np.ndarray:
        """Values of all basis monomials at the points, shape (npts, dim)."""
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        xi = (pts - self.center) / self.scale
        ex = self.exponents
        return xi[:, 0:1] ** ex[None, :, 0] * xi[:, 1:2] ** ex[None, :, 1]

    def evaluate_grad(self, points) -> np.ndarray:
        """Gradients of all basis monomials, shape (npts, dim, 2)."""
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        xi = (pts - self.center) / self.scale
        ex = self.exponents
        ax = ex[None, :, 0].astype(float)
        ay = ex[None, :, 1].astype(float)
        px = xi[:, 0:1] ** np.maximum(ex[None, :, 0] - 1, 0)
        py = xi[:, 1:2] ** np.maximum(ex[None, :, 1] - 1, 0)
        fx = xi[:, 0:1] ** ex[None, :, 0]
        fy = xi[:, 1:2] ** ex[None, :, 1]
        out = np.empty(fx.shape + (2,))
        out[:, :, 0] = (ax / self.scale) * px * fy
        out[:, :, 1] = (ay / self.scale) * fx * py
        return out


def cell_basis(cell, order: int) -> CellBasis:
    """Basis scaled by the cell centroid and diameter."""
    center = getattr(cell, "centroid", None)
    scale = getattr(cell, "diameter", None)
    if center is None:
        center = polygon_centroid(cell)
    if scale is None:
        scale = polygon_diameter(cell)
    return CellBasis(order=order, center=np.asarray(center, dtype=float), scale=float(scale))


def basis_derivatives(basis: CellBasis) -> tuple[np.ndarray, np.ndarray]:
    """Coefficient-space partial derivative operators P_l -> P_{l-1}.

    Returns ``(Dx, Dy)`` with ``Dx`` of shape ``(dim(l-1), dim(l))`` such that
    evaluating ``Dx @ c`` in the order ``l-1`` basis equals the x-derivative of
    the polynomial with coefficients ``c``, chain-rule factor ``1/h_K``
    included.
    """
    order = basis.order
    ex = graded_exponents(order)
    sub_index = {tuple(e): i for i, e in enumerate(graded_exponents(max(order - 1, 0)))}
    nd = poly_dim(order - 1)
    Dx = np.zeros((nd, poly_dim(order)))
    Dy = np.zeros((nd, poly_dim(order)))
    for j, (ax, ay) in enumerate(ex):
        if ax >= 1:
            Dx[sub_index[(ax - 1, ay)], j] = ax / basis.scale
        if ay >= 1:
            Dy[sub_index[(ax, ay - 1)], j] = ay / basis.scale
    return Dx, Dy


@dataclass(frozen=True)
class EdgeBasis:
    """Scaled Legendre basis sqrt(2k+1) P_k(t) on the canonical parameter t in [-1, 1]."""

    order: int

    @property
    def dim(self) -> int:
        return self.order + 1

    @property
    def norms(self) -> np.ndarray:
        return np.sqrt(2.0 * np.arange(self.order + 1) + 1.0)

    def evaluate(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float).ravel()
        return npleg.legvander(t, self.order) * self.norms[None, :]

    def endpoint_values(self) -> np.ndarray:
        """Rows for t = -1 and t = +1, shape (2, order+1)."""
        return self.evaluate(np.array([-1.0, 1.0]))

    def derivative_matrix(self) -> np.ndarray:
        """d/dt in coefficient space, shape (order, order+1).

        Uses P_k' = sum_{j<k, k-j odd} (2j+1) P_j, which in the scaled basis
        gives entries sqrt((2k+1)(2j+1)).
        """
        D = np.zeros((self.order, self.order + 1))
        for k in range(1, self.order + 1):
            for j in range(k - 1, -1, -2):
                D[j, k] = np.sqrt((2.0 * k + 1.0) * (2.0 * j + 1.0))
        return D


def edge_basis(order: int) -> EdgeBasis:
    return EdgeBasis(order=order)


# ---------------------------------------------------------------------------
# quadrature

@dataclass(frozen=True)
class QuadRule:
    """Points and weights with a degree-of-exactness tag."""

    points: np.ndarray
    weights: np.ndarray
    degree: int


@dataclass(frozen=True)
class EdgeRule:
    """Segment rule: physical points, weights, and canonical parameters t."""

    points: np.ndarray
    weights: np.ndarray
    t: np.ndarray
    degree: int


def _check_degree(degree: int) -> None:
    if degree < 0 or degree > MAX_QUAD_DEGREE:
        raise QuadratureDegreeError(
            f"quadrature degree {degree} outside supported range [0, {MAX_QUAD_DEGREE}]"
        )


@lru_cache(maxsize=None)
def triangle_rule(degree: int) -> QuadRule:
    """Product Gauss rule on the reference triangle, exact to the given degree.

    Gauss-Legendre x Gauss-Jacobi(1, 0) on the collapsed square; all weights
    positive, weights sum to the reference area 1/2.
    """
    _check_degree(degree)
    n = degree // 2 + 1
    xg, wg = npleg.leggauss(n)
    u = 0.5 * (xg + 1.0)
    wu = 0.5 * wg
    xj, wj = roots_jacobi(n, 1.0, 0.0)
    v = 0.5 * (xj + 1.0)
    wv = 0.25 * wj
    U, V = np.meshgrid(u, v, indexing="ij")
    pts = np.column_stack([(U * (1.0 - V)).ravel(), V.ravel()])
    w = np.outer(wu, wv).ravel()
    pts.setflags(write=False)
    w.setflags(write=False)
    return QuadRule(points=pts, weights=w, degree=degree)


def cell_quadrature(cell, degree: int) -> QuadRule:
    """Quadrature on a polygon by fanning triangles from the centroid.

    Weights are positive and sum to the cell area; requires the cell to be
    star shaped with respect to its centroid.
    """
    verts = _as_vertices(cell)
    ref = triangle_rule(degree)
    c = polygon_centroid(verts)
    nv = len(verts)
    pts = []
    wts = []
    for i in range(nv):
        p1 = verts[i]
        p2 = verts[(i + 1) % nv]
        jac = (p1[0] - c[0]) * (p2[1] - c[1]) - (p2[0] - c[0]) * (p1[1] - c[1])
        if jac <= 0.0:
            raise ValueError("cell is not star shaped with respect to its centroid")
        pts.append(c + ref.points[:, 0:1] * (p1 - c) + ref.points[:, 1:2] * (p2 - c))
        wts.append(ref.weights * jac)
    return QuadRule(points=np.vstack(pts), weights=np.concatenate(wts), degree=degree)


def edge_quadrature(a, b, degree: int) -> EdgeRule:
    """Gauss-Legendre rule on the segment from ``a`` to ``b``.

    ``t`` runs from -1 at ``a`` to +1 at ``b``; weights sum to the length.
    """
    _check_degree(degree)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n = degree // 2 + 1
    t, w = npleg.leggauss(n)
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    length = float(np.linalg.norm(b - a))
    return EdgeRule(
        points=mid[None, :] + t[:, None] * half[None, :],
        weights=w * (length / 2.0),
        t=t,
        degree=degree,
    )


# ---------------------------------------------------------------------------
# L2 projection

def l2_project_cell(cell, f, order: int, degree: int | None = None) -> np.ndarray:
    """L2-orthogonal projection of an evaluable field onto P_order on the cell.

    Returns coefficients in ``cell_basis(cell, order)``.  ``f`` must accept an
    ``(n, 2)`` array of points and return ``(n,)`` values.
    """
    verts = _as_vertices(cell)
    basis = cell_basis(cell, order)
    rule = cell_quadrature(verts, degree if degree is not None else 2 * order + 2)
    phi = basis.evaluate(rule.points)
    mass = phi.T @ (rule.weights[:, None] * phi)
    rhs = phi.T @ (rule.weights * np.asarray(f(rule.points), dtype=float))
    return linsolve.solve_spd(mass, rhs)
