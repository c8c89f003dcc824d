"""Shared numerical kernels: smooth convex minimization, Hermitian matrix
functions, kernel bases and least-norm solves.

Everything here is a pure function of its inputs; no shared mutable state.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.linalg

from .errors import DomainError, InfeasibleSystemError, NumericalError

DEFAULT_GRAD_TOL = 1e-10
DEFAULT_MAX_ITER = 200
DEFAULT_RANK_TOL = 1e-10

_ARMIJO_SLOPE = 1e-4
_BACKTRACK_FACTOR = 0.5
_MIN_STEP = 2.0 ** -60


@dataclass
class Minimizer:
    """Result of a convex minimization.

    ``value`` is the objective at ``point`` and ``gradient_norm`` the
    Euclidean norm of the gradient there; ``converged`` is true iff
    ``gradient_norm`` dropped below the requested tolerance.
    """

    point: np.ndarray
    value: float
    gradient_norm: float
    iterations: int
    converged: bool


def _chol_solve(hess: np.ndarray, rhs: np.ndarray) -> Optional[np.ndarray]:
    """Solve hess @ x = rhs by Cholesky, with a trace-scaled jitter retry.

    Returns None when the matrix cannot be factored even after jitter, which
    signals the caller to fall back to plain gradient descent.
    """
    dim = hess.shape[0]
    jitters = (0.0, 1e-12, 1e-8)
    scale = max(np.trace(hess).real / max(dim, 1), 1.0)
    for jit in jitters:
        try:
            mat = hess if jit == 0.0 else hess + (jit * scale) * np.eye(dim)
            c, low = scipy.linalg.cho_factor(mat, check_finite=False)
            return scipy.linalg.cho_solve((c, low), rhs, check_finite=False)
        except (scipy.linalg.LinAlgError, ValueError):
            continue
    return None


def minimize_fgh(
    fgh: Callable[[np.ndarray], tuple],
    x0: np.ndarray,
    grad_tol: float = DEFAULT_GRAD_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    value_only: Optional[Callable[[np.ndarray], float]] = None,
    extra_stop: Optional[Callable[[np.ndarray, float, np.ndarray, np.ndarray], bool]] = None,
) -> Minimizer:
    """Damped-Newton descent on a fused (value, gradient, hessian) callback.

    ``fgh(x)`` returns the triple at x; ``value_only`` may give a cheaper
    objective-only evaluation for the line search.  ``extra_stop`` lets a
    caller terminate on its own certificate (used by the eps-approximate
    reverse-em step).  Falls back to gradient descent with Armijo
    backtracking when the Hessian cannot be Cholesky-factored.
    """
    x = np.asarray(x0, dtype=float).copy()
    f_of = value_only if value_only is not None else (lambda z: fgh(z)[0])

    f, g, hess = fgh(x)
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        raise NumericalError(
            f"non-finite objective/gradient at starting iterate {x!r}")

    best_x, best_f = x.copy(), f
    iterations = 0
    gnorm = float(np.linalg.norm(g))
    for iterations in range(max_iter + 1):
        gnorm = float(np.linalg.norm(g))
        if gnorm <= grad_tol:
            return Minimizer(x, float(f), gnorm, iterations, True)
        if extra_stop is not None and extra_stop(x, f, g, hess):
            return Minimizer(x, float(f), gnorm, iterations, True)
        if iterations == max_iter:
            break

        direction = _chol_solve(hess, -g)
        if direction is None:
            direction = -g
        slope = float(g @ direction)
        if slope >= 0.0:
            direction = -g
            slope = -gnorm ** 2

        # Absolute slack keeps the Armijo test meaningful once the true
        # decrease falls below float resolution of the objective value.
        noise = 64.0 * np.finfo(float).eps * max(1.0, abs(f))
        t = 1.0
        accepted = False
        while t >= _MIN_STEP:
            x_new = x + t * direction
            f_new = f_of(x_new)
            if np.isfinite(f_new) and f_new <= f + _ARMIJO_SLOPE * t * slope + noise:
                accepted = True
                break
            t *= _BACKTRACK_FACTOR
        if not accepted:
            break

        x = x_new
        f, g, hess = fgh(x)
        if not np.isfinite(f) or not np.all(np.isfinite(g)):
            raise NumericalError(
                f"non-finite objective/gradient at iterate {iterations + 1}: {x!r}")
        if f < best_f:
            best_x, best_f = x.copy(), f

    gnorm = float(np.linalg.norm(g))
    if best_f < f:
        x = best_x
        f, g, _ = fgh(x)
        gnorm = float(np.linalg.norm(g))
    return Minimizer(x, float(f), gnorm, iterations, gnorm <= grad_tol)


def minimize_convex(
    objective: Callable[[np.ndarray], float],
    gradient: Callable[[np.ndarray], np.ndarray],
    hessian: Callable[[np.ndarray], np.ndarray],
    x0: np.ndarray,
    grad_tol: float = DEFAULT_GRAD_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> Minimizer:
    """Minimize a smooth convex function given separate derivative callbacks.

    Damped Newton with Cholesky-factored Hessians and Armijo backtracking
    (factor 0.5, slope parameter 1e-4); returns the first iterate whose
    gradient norm is below ``grad_tol``, or the best iterate found with
    ``converged=False`` after ``max_iter`` steps.
    """
    if grad_tol <= 0:
        raise ValueError("grad_tol must be positive")

    def fgh(x):
        return (objective(x), np.asarray(gradient(x), dtype=float),
                np.asarray(hessian(x), dtype=float))

    return minimize_fgh(fgh, x0, grad_tol=grad_tol, max_iter=max_iter,
                        value_only=objective)


def _as_hermitian(mat: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    mat = np.asarray(mat)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise DomainError("expected a square matrix")
    dev = np.max(np.abs(mat - mat.conj().T)) if mat.size else 0.0
    scale = max(1.0, float(np.max(np.abs(mat))) if mat.size else 1.0)
    if dev > tol * scale:
        raise DomainError(f"matrix is not Hermitian (deviation {dev:.3e})")
    return 0.5 * (mat + mat.conj().T)


def hermitian_exp(mat: np.ndarray) -> np.ndarray:
    """Matrix exponential of a Hermitian matrix via eigendecomposition."""
    herm = _as_hermitian(mat)
    if not np.all(np.isfinite(herm)):
        raise NumericalError("non-finite entries in hermitian_exp input")
    try:
        evals, evecs = np.linalg.eigh(herm)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition failed: {exc}") from exc
    return (evecs * np.exp(evals)) @ evecs.conj().T


# Relative floor below which eigenvalues are treated as zero rank; density
# matrices from the cq module may be numerically rank-deficient.
EIGEN_FLOOR = 1e-14


def hermitian_log(mat: np.ndarray) -> np.ndarray:
    """Principal matrix logarithm of a positive definite Hermitian matrix."""
    herm = _as_hermitian(mat)
    try:
        evals, evecs = np.linalg.eigh(herm)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition failed: {exc}") from exc
    floor = EIGEN_FLOOR * float(evals[-1]) if evals.size else 0.0
    if evals.size == 0 or evals[0] <= floor or evals[-1] <= 0.0:
        raise DomainError(
            f"matrix is not positive definite (min eigenvalue {evals[0]:.3e})")
    return (evecs * np.log(evals)) @ evecs.conj().T


def kernel_basis(mat: np.ndarray, rank_tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Orthonormal basis of the null space of ``mat`` as a q x r matrix.

    The numerical rank counts singular values above ``rank_tol`` times the
    largest one; r may be zero, giving an empty basis.
    """
    if rank_tol <= 0:
        raise ValueError("rank_tol must be positive")
    mat = np.atleast_2d(np.asarray(mat, dtype=float))
    q = mat.shape[1]
    if mat.shape[0] == 0 or q == 0:
        return np.eye(q)
    _, svals, vt = np.linalg.svd(mat)
    smax = svals[0] if svals.size else 0.0
    rank = int(np.sum(svals > rank_tol * smax)) if smax > 0 else 0
    return vt[rank:].T.copy()


def least_norm_solve(mat: np.ndarray, rhs: np.ndarray,
                     rank_tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Minimum-norm solution of mat @ x = rhs via a thresholded pseudo-inverse.

    Raises InfeasibleSystemError when the residual exceeds 1e-8 * (1 + |rhs|),
    i.e. when rhs is not in the numerical column space.
    """
    mat = np.atleast_2d(np.asarray(mat, dtype=float))
    rhs = np.atleast_1d(np.asarray(rhs, dtype=float))
    if mat.shape[1] == 0:
        x = np.zeros(0)
    else:
        x = np.linalg.pinv(mat, rcond=rank_tol) @ rhs
    residual = float(np.linalg.norm(mat @ x - rhs)) if mat.size else float(np.linalg.norm(rhs))
    if residual > 1e-8 * (1.0 + float(np.linalg.norm(rhs))):
        raise InfeasibleSystemError(
            f"right-hand side outside column space (residual {residual:.3e})")
    return x
