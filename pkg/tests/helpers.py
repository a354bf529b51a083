"""Shared test utilities: independent oracles and geometry samplers.

The oracles here deliberately avoid the code paths they are used to check:
polygon monomial integrals go through the divergence theorem and 1D Gauss
rules, derivatives go through Richardson-extrapolated central differences.
"""

from __future__ import annotations

import numpy as np

from ncvem import mesh


def monomial_integral(vertices, ax: int, ay: int) -> float:
    """Integral of x^ax y^ay over the polygon via the divergence theorem.

    Uses int_K x^a y^b = 1/(a+1) * sum_e int_e x^(a+1) y^b n_x ds with the
    1D edge integrals evaluated by Gauss-Legendre of sufficient order.
    """
    verts = np.asarray(vertices, dtype=float)
    nv = len(verts)
    deg = ax + 1 + ay
    t, w = np.polynomial.legendre.leggauss(deg // 2 + 1)
    total = 0.0
    for i in range(nv):
        p, q = verts[i], verts[(i + 1) % nv]
        # n_x ds = dy along the traversal direction
        x = 0.5 * (p[0] + q[0]) + 0.5 * t * (q[0] - p[0])
        y = 0.5 * (p[1] + q[1]) + 0.5 * t * (q[1] - p[1])
        total += 0.5 * (q[1] - p[1]) * float(w @ (x ** (ax + 1) * y**ay))
    return total / (ax + 1)


def polynomial_integral(vertices, coeffs, exponents) -> float:
    return sum(
        c * monomial_integral(vertices, int(a), int(b))
        for c, (a, b) in zip(coeffs, exponents)
    )


# ---------------------------------------------------------------------------
# finite differences

def _partial_once(f, x, i, h):
    """4th order central first partial of a scalar field f at point x."""
    e = np.zeros(2)
    e[i] = 1.0
    return (
        -f(x + 2 * h * e) + 8 * f(x + h * e) - 8 * f(x - h * e) + f(x - 2 * h * e)
    ) / (12 * h)


def _partial_twice(f, x, i, j, h):
    """4th order central second partial d_i d_j f(x)."""
    if i == j:
        e = np.zeros(2)
        e[i] = 1.0
        return (
            -f(x + 2 * h * e)
            + 16 * f(x + h * e)
            - 30 * f(x)
            + 16 * f(x - h * e)
            - f(x - 2 * h * e)
        ) / (12 * h**2)
    return _partial_once(lambda z: _partial_once(f, z, j, h), x, i, h)


def richardson(g, h, order=4, levels=2):
    """Richardson extrapolation of g(h) assuming error ~ h^order (+2 per level)."""
    table = [g(h / 2**k) for k in range(levels + 1)]
    p = order
    while len(table) > 1:
        factor = 2.0**p
        table = [
            (factor * fine - coarse) / (factor - 1.0)
            for coarse, fine in zip(table, table[1:])
        ]
        p += 2
    return table[0]


def fd_gradient(f, x, h=1e-2):
    return np.array(
        [richardson(lambda s, i=i: _partial_once(f, x, i, s), h) for i in range(2)]
    )


def fd_hessian(f, x, h=1e-2):
    out = np.empty((2, 2))
    for i in range(2):
        for j in range(2):
            out[i, j] = richardson(lambda s, i=i, j=j: _partial_twice(f, x, i, j, s), h)
    return out


def fd_strong_operator(kappa, beta, gamma, u, x, h=1e-2, h_inner=1e-3):
    """Finite-difference application of the fourth order strong operator.

    sum_ij d_ij(kappa d_ij u) - sum_i d_i(beta d_i u) + gamma u, built from
    point evaluations of the coefficient and solution fields only.  Inner
    derivatives use a fixed small step; the outer ones are Richardson
    extrapolated.
    """

    def scalar(field):
        return lambda z: float(np.asarray(field(np.asarray(z)[None, :]))[0])

    ku, uu, bu, gu = scalar(kappa), scalar(u), scalar(beta), scalar(gamma)
    total = 0.0
    for i in range(2):
        for j in range(2):
            prod = lambda z, i=i, j=j: ku(z) * _partial_twice(uu, z, i, j, h_inner)
            total += richardson(lambda s, i=i, j=j, prod=prod: _partial_twice(prod, x, i, j, s), h)
        prod1 = lambda z, i=i: bu(z) * _partial_once(uu, z, i, h_inner)
        total -= richardson(lambda s, i=i, prod1=prod1: _partial_once(prod1, x, i, s), h)
    return total + gu(x) * uu(x)


# ---------------------------------------------------------------------------
# geometry samplers

def random_regular_polygon(rng, rho=0.2):
    """Random simple polygon passing the regularity thresholds at ``rho``."""
    while True:
        nv = int(rng.integers(3, 9))
        ang = np.sort(rng.uniform(0.0, 2.0 * np.pi, nv))
        gaps = np.diff(np.concatenate([ang, [ang[0] + 2.0 * np.pi]]))
        if gaps.min() < 0.25:
            continue
        rad = rng.uniform(0.6, 1.0, nv) * rng.uniform(0.2, 1.0)
        verts = np.column_stack([np.cos(ang), np.sin(ang)]) * rad[:, None]
        verts += rng.uniform(-1.0, 1.0, 2)
        try:
            cell = mesh.make_cell(verts)
        except mesh.MeshError:
            continue
        if cell.edge_lengths.min() / cell.diameter < rho:
            continue
        if mesh._halfplane_inradius(cell) / cell.diameter < rho:
            continue
        return cell


def unit_triangle():
    return mesh.make_cell([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


def regular_hexagon(radius=1.0, center=(0.0, 0.0), twist=0.0):
    ang = np.linspace(0.0, 2.0 * np.pi, 7)[:-1] + twist
    verts = np.column_stack([np.cos(ang), np.sin(ang)]) * radius + np.asarray(center)
    return mesh.make_cell(verts)
