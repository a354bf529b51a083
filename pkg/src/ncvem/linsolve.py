"""Dense factorizations for small per-cell systems and an iterative SPD solver.

The per-cell systems arising in the projection construction (KKT saddle
points, mass matrices, edge interpolation systems) are tiny, so everything
dense here favours robustness over speed.  The global system after boundary
elimination is symmetric positive definite and is handled by Jacobi
preconditioned conjugate gradients.
"""

from __future__ import annotations

import math
import warnings

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

__all__ = [
    "SingularMatrixError",
    "IterationLimitError",
    "solve_dense",
    "solve_spd",
    "solve_kkt",
    "solve_cg",
    "dense_cholesky_solve",
    "default_max_iters",
]

_SINGULAR_RTOL = 1e-14


class SingularMatrixError(np.linalg.LinAlgError):
    """Matrix is singular to working tolerance."""


class IterationLimitError(RuntimeError):
    """Conjugate gradients hit the iteration cap before converging.

    Carries the last iterate so callers can decide on a fallback.
    """

    def __init__(self, message: str, x: np.ndarray, iterations: int):
        super().__init__(message)
        self.x = x
        self.iterations = iterations


def solve_dense(A, b):
    """Solve ``A x = b`` by pivoted LU with a singularity guard.

    ``b`` may be a vector or a matrix of stacked right hand sides.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    try:
        with warnings.catch_warnings():
            # singularity is detected below; scipy's warning is redundant
            warnings.simplefilter("ignore", sla.LinAlgWarning)
            lu, piv = sla.lu_factor(A)
    except sla.LinAlgError as exc:  # pragma: no cover - scipy raises rarely
        raise SingularMatrixError(str(exc)) from exc
    d = np.abs(np.diag(lu))
    if d.size and d.min() <= _SINGULAR_RTOL * max(d.max(), 1.0):
        raise SingularMatrixError("matrix is singular to working precision")
    return sla.lu_solve((lu, piv), b)


def solve_spd(A, b):
    """Cholesky solve for symmetric positive definite ``A``."""
    try:
        factor = sla.cho_factor(np.asarray(A, dtype=float), lower=True)
    except sla.LinAlgError as exc:
        raise SingularMatrixError(f"matrix not positive definite: {exc}") from exc
    return sla.cho_solve(factor, np.asarray(b, dtype=float))


def solve_kkt(H, C, g, m):
    """Minimise ``x^T H x - 2 g^T x`` subject to ``C x = m``.

    Solves the full KKT system ``[[2H, C^T], [C, 0]] [x; mu] = [2g; m]``
    with a symmetric indefinite factorization.  ``g`` and ``m`` may carry
    multiple right hand sides as columns.  Returns ``(x, multipliers)``.
    """
    H = np.asarray(H, dtype=float)
    g = np.asarray(g, dtype=float)
    n = H.shape[0]
    C = np.zeros((0, n)) if C is None else np.asarray(C, dtype=float).reshape(-1, n)
    k = C.shape[0]
    if k == 0:
        return solve_spd(H, g), np.zeros((0,) + g.shape[1:])
    K = np.zeros((n + k, n + k))
    K[:n, :n] = 2.0 * H
    K[:n, n:] = C.T
    K[n:, :n] = C
    rhs = np.concatenate([2.0 * g, np.asarray(m, dtype=float)], axis=0)
    one_column = rhs.ndim == 1
    rhs2 = rhs.reshape(len(rhs), -1)
    sytrf, sytrs = sla.get_lapack_funcs(("sytrf", "sytrs"), (K,))
    ldu, ipiv, info = sytrf(K, lower=1)
    if info != 0:
        raise SingularMatrixError(f"singular KKT system (sytrf info={info})")
    sol, info = sytrs(ldu, ipiv, rhs2, lower=1)
    if info != 0:
        raise SingularMatrixError(f"KKT solve failed (sytrs info={info})")
    # iterative refinement with extended-precision residuals; the KKT operator
    # inherits the squared conditioning of the dof matrix, which a plain solve
    # would pass on to the projections
    K_ext = K.astype(np.longdouble)
    rhs_ext = rhs2.astype(np.longdouble)
    for _ in range(2):
        residual = np.asarray(rhs_ext - K_ext @ sol.astype(np.longdouble), dtype=float)
        corr, info = sytrs(ldu, ipiv, residual, lower=1)
        if info != 0:
            break
        sol = sol + corr
    if one_column:
        sol = sol[:, 0]
    return sol[:n], sol[n:]


def default_max_iters(n: int) -> int:
    return int(50 * math.sqrt(max(n, 1))) + 1000


def solve_cg(A, b, tol=1e-10, max_iters=None, residual_log=None):
    """Jacobi preconditioned conjugate gradients for an SPD system.

    Parameters
    ----------
    A : scipy sparse matrix or ndarray
        Symmetric positive definite after boundary elimination.
    b : ndarray
    tol : float
        Relative residual target ``||b - A x|| <= tol ||b||``.
    max_iters : int, optional
        Defaults to ``50 sqrt(n) + 1000``.
    residual_log : list, optional
        If given, ``(iteration, relative_residual)`` checkpoints are
        appended roughly every 50 iterations.

    Returns
    -------
    (x, iterations)

    Raises
    ------
    IterationLimitError
        If the cap is reached; the exception carries the last iterate.
    """
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    if n == 0:
        return np.zeros(0), 0
    if max_iters is None:
        max_iters = default_max_iters(n)
    diag = A.diagonal() if sp.issparse(A) else np.diag(A)
    if np.any(diag <= 0):
        raise SingularMatrixError("non-positive diagonal entry; system is not SPD")
    inv_diag = 1.0 / diag

    x = np.zeros(n)
    r = b.copy()
    b_norm = np.linalg.norm(b)
    if b_norm == 0.0:
        return x, 0
    checkpoint = max(50, max_iters // 200) if residual_log is not None else 0
    z = inv_diag * r
    p = z.copy()
    rz = float(r @ z)
    for it in range(1, max_iters + 1):
        Ap = A @ p
        alpha = rz / float(p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        r_norm = np.linalg.norm(r)
        if checkpoint and it % checkpoint == 0:
            residual_log.append((it, r_norm / b_norm))
        if r_norm <= tol * b_norm:
            if residual_log is not None:
                residual_log.append((it, r_norm / b_norm))
            return x, it
        z = inv_diag * r
        rz_next = float(r @ z)
        p = z + (rz_next / rz) * p
        rz = rz_next
    raise IterationLimitError(
        f"conjugate gradients did not reach tol={tol:g} in {max_iters} iterations",
        x=x,
        iterations=max_iters,
    )


def dense_cholesky_solve(A, b):
    """Dense Cholesky fallback for moderate sparse SPD systems."""
    dense = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
    return solve_spd(dense, b)
