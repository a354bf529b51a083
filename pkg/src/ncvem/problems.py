"""Model problems: manufactured solution, coefficient sets, derived forcing.

Both problems share the clamped-compatible exact solution
``u(x, y) = sin(2 pi x)^2 sin(2 pi y)^2`` on the unit square.  The forcing is
assembled from closed-form derivatives through the strong operator

    sum_ij d_ij(kappa d_ij u) - sum_i d_i(beta d_i u) + gamma u = f.

Every hand-coded derivative here is covered by a finite-difference oracle in
the test suite; keep the two in sync when touching formulas.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assembly import CoefficientField

__all__ = [
    "ModelProblem",
    "perturbation_problem",
    "varying_coefficient_problem",
    "exact_error_data",
]

_TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class ModelProblem:
    """Coefficients, forcing, and exact-solution derivatives for one test case."""

    name: str
    coefficients: CoefficientField
    solution: object          # u(points) -> (n,)
    solution_gradient: object  # (n, 2)
    solution_hessian: object   # (n, 2, 2)


def _split(points):
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    return pts[:, 0], pts[:, 1]


def exact_solution(points):
    x, y = _split(points)
    return np.sin(_TWO_PI * x) ** 2 * np.sin(_TWO_PI * y) ** 2


def exact_gradient(points):
    x, y = _split(points)
    a = _TWO_PI
    sx2, sy2 = np.sin(a * x) ** 2, np.sin(a * y) ** 2
    out = np.empty((len(x), 2))
    out[:, 0] = a * np.sin(2 * a * x) * sy2
    out[:, 1] = a * np.sin(2 * a * y) * sx2
    return out


def exact_hessian(points):
    x, y = _split(points)
    a = _TWO_PI
    sx2, sy2 = np.sin(a * x) ** 2, np.sin(a * y) ** 2
    mixed = a**2 * np.sin(2 * a * x) * np.sin(2 * a * y)
    out = np.empty((len(x), 2, 2))
    out[:, 0, 0] = 2 * a**2 * np.cos(2 * a * x) * sy2
    out[:, 1, 1] = 2 * a**2 * np.cos(2 * a * y) * sx2
    out[:, 0, 1] = mixed
    out[:, 1, 0] = mixed
    return out


def _laplacian(points):
    x, y = _split(points)
    a = _TWO_PI
    return 2 * a**2 * (
        np.cos(2 * a * x) * np.sin(a * y) ** 2 + np.sin(a * x) ** 2 * np.cos(2 * a * y)
    )


def _grad_laplacian(points):
    # d(lap u)/dx = 2 a^3 sin(2ax) (2 cos(2ay) - 1), symmetric in y
    x, y = _split(points)
    a = _TWO_PI
    out = np.empty((len(x), 2))
    out[:, 0] = 2 * a**3 * np.sin(2 * a * x) * (2 * np.cos(2 * a * y) - 1.0)
    out[:, 1] = 2 * a**3 * np.sin(2 * a * y) * (2 * np.cos(2 * a * x) - 1.0)
    return out


def _bilaplacian(points):
    x, y = _split(points)
    a = _TWO_PI
    c2x, c2y = np.cos(2 * a * x), np.cos(2 * a * y)
    return 4 * a**4 * (4 * c2x * c2y - c2x - c2y)


def perturbation_problem(eps: float) -> ModelProblem:
    """``eps^2 biharmonic - laplacian`` with kappa = eps^2, beta = 1, gamma = 0."""
    if not 0.0 < eps <= 1.0:
        raise ValueError("eps must lie in (0, 1]")
    eps2 = float(eps) ** 2

    def forcing(points):
        return eps2 * _bilaplacian(points) - _laplacian(points)

    coeffs = CoefficientField(
        kappa=lambda pts: np.full(len(np.atleast_2d(pts)), eps2),
        beta=lambda pts: np.ones(len(np.atleast_2d(pts))),
        gamma=lambda pts: np.zeros(len(np.atleast_2d(pts))),
        forcing=forcing,
    )
    return ModelProblem(
        name=f"perturbation(eps={eps:g})",
        coefficients=coeffs,
        solution=exact_solution,
        solution_gradient=exact_gradient,
        solution_hessian=exact_hessian,
    )


def _kappa(points):
    x, y = _split(points)
    return 1.0 / (1.0 + x**2 + y**2)


def _kappa_gradient(points):
    x, y = _split(points)
    k = 1.0 / (1.0 + x**2 + y**2)
    out = np.empty((len(x), 2))
    out[:, 0] = -2.0 * x * k**2
    out[:, 1] = -2.0 * y * k**2
    return out


def _kappa_hessian(points):
    x, y = _split(points)
    k = 1.0 / (1.0 + x**2 + y**2)
    out = np.empty((len(x), 2, 2))
    out[:, 0, 0] = -2.0 * k**2 + 8.0 * x**2 * k**3
    out[:, 1, 1] = -2.0 * k**2 + 8.0 * y**2 * k**3
    out[:, 0, 1] = 8.0 * x * y * k**3
    out[:, 1, 0] = out[:, 0, 1]
    return out


def _beta(points):
    x, y = _split(points)
    return np.exp(-x * y)


def _beta_gradient(points):
    x, y = _split(points)
    e = np.exp(-x * y)
    out = np.empty((len(x), 2))
    out[:, 0] = -y * e
    out[:, 1] = -x * e
    return out


def _gamma(points):
    x, y = _split(points)
    return np.sin(x**2 + y**2) ** 2


def varying_coefficient_problem() -> ModelProblem:
    """General fourth order problem with smooth non-constant coefficients."""

    def forcing(points):
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        kap = _kappa(pts)
        gk = _kappa_gradient(pts)
        hk = _kappa_hessian(pts)
        hu = exact_hessian(pts)
        hessian_term = (
            kap * _bilaplacian(pts)
            + 2.0 * np.einsum("ni,ni->n", gk, _grad_laplacian(pts))
            + np.einsum("nij,nij->n", hk, hu)
        )
        gradient_term = (
            np.einsum("ni,ni->n", _beta_gradient(pts), exact_gradient(pts))
            + _beta(pts) * _laplacian(pts)
        )
        return hessian_term - gradient_term + _gamma(pts) * exact_solution(pts)

    coeffs = CoefficientField(kappa=_kappa, beta=_beta, gamma=_gamma, forcing=forcing)
    return ModelProblem(
        name="varying-coefficients",
        coefficients=coeffs,
        solution=exact_solution,
        solution_gradient=exact_gradient,
        solution_hessian=exact_hessian,
    )


def exact_error_data(problem: ModelProblem, points):
    """Exact (u, grad u, hess u) at the points, for error norms."""
    return (
        problem.solution(points),
        problem.solution_gradient(points),
        problem.solution_hessian(points),
    )
