"""Reverse em-problem engine: maximize over a mixture subfamily the minimum
Bregman divergence to an exponential subfamily.

The mixture subfamily is assumed to carry a compatible exponential structure
(a basis U and a fixed trailing natural-parameter block), which makes the
composed projection map invertible; the solvers here iterate that inverse map
in several parameterizations, convert the problem to an ordinary alternating
minimization between two auxiliary families, or, under a product-split of the
exponential potential, solve it by a single convex minimization.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import scipy.linalg

from .bregman import BregmanSystem, divergence, natural_param
from .errors import (ConditionViolationError, ImageMembershipError,
                     ProjectionError, RevemError)
from .families import (ExponentialSubfamily, MixtureSubfamily, e_projection,
                       m_projection)
from .numerics import kernel_basis, least_norm_solve, minimize_fgh

Array = np.ndarray

STEPPERS = ("mixture", "natural", "eps", "quadratic")


@dataclass(eq=False)
class ReverseEmProblem:
    """A paired (mixture, exponential) instance with its structure flags.

    ``family_M`` must coincide with the affine slice
    {U @ (theta_a, theta_tail)} of natural-parameter space; the boolean
    flags record which structural properties the caller asserts (the
    capacity modules establish them constructively).
    """

    sys: BregmanSystem
    family_E: ExponentialSubfamily
    family_M: MixtureSubfamily
    theta_tail: Array
    projection_expands: bool = True
    mixture_is_exponential: bool = True
    leading_identity_block: bool = False
    split_potential: bool = False
    constant_dual_offset: bool = False
    split: Optional[Tuple[BregmanSystem, BregmanSystem]] = None
    dual_offset: Optional[Array] = None

    dual_matrix: Array = field(init=False)
    E_system: BregmanSystem = field(init=False)
    M_system: BregmanSystem = field(init=False)

    def __post_init__(self):
        self.theta_tail = np.asarray(self.theta_tail, dtype=float)
        u = self.family_M.basis
        k = self.family_M.free_count
        v = self.family_E.generators
        self.dual_matrix = np.linalg.solve(u, v)[:k, :]
        if self.leading_identity_block:
            dev = np.max(np.abs(self.dual_matrix[:, :k] - np.eye(k)))
            if dev > 1e-12:
                raise ConditionViolationError(
                    "leading_identity_block flagged but the leading block "
                    f"deviates from I by {dev:.3e}")
        if self.split_potential and self.split is None:
            raise ConditionViolationError(
                "split_potential flagged without the split systems")
        self.E_system = self.sys.restrict(v, self.family_E.offset)
        m_offset = u @ np.concatenate([np.zeros(k), self.theta_tail])
        self.M_system = self.sys.restrict(u[:, :k], m_offset)

    @property
    def k(self) -> int:
        return self.family_M.free_count

    @property
    def l(self) -> int:
        return self.family_E.dim

    @property
    def dual_tail(self) -> Array:
        return self.dual_matrix[:, self.k:]

    def m_ambient(self, theta_a: Array) -> Array:
        """Ambient natural parameter of the mixture-family member theta_a."""
        return self.family_M.basis @ np.concatenate(
            [np.asarray(theta_a, dtype=float), self.theta_tail])

    def e_ambient(self, theta_c: Array) -> Array:
        """Ambient natural parameter of the exponential-family member theta_c."""
        return self.family_E.ambient(theta_c)

    def m_coords(self, theta: Array) -> Array:
        """Leading-k coordinates of an ambient mixture-family member."""
        return np.linalg.solve(self.family_M.basis, np.asarray(theta, dtype=float))[:self.k]


@dataclass
class SolveTrace:
    """Iteration record of a reverse-em solve."""

    objective_values: Array
    fixed_point_residuals: Array
    iterations: int
    capacity: float
    maximizer_mixture_coord: Array
    theta_a: Array
    converged: bool


@dataclass
class EmResult:
    """Outcome of the alternating-minimization (em) loop."""

    c_inf: float
    theta_M: Array
    theta_E: Array
    iterations: int
    converged: bool


@dataclass
class EmConversionResult:
    """Intersection search for the converted problem.

    ``intersection_found`` is False when the auxiliary families do not meet
    (the maximizer sits on the boundary and the supremum is not attained).
    """

    intersection_found: bool
    capacity: Optional[float]
    theta_a: Optional[Array]
    theta_c: Optional[Array]
    em_gap: float
    iterations: int
    message: str = ""


@dataclass
class NonIterativeResult:
    """Result of the single-minimization method.

    When ``exists`` is False the dual coordinate fell outside the image of
    the gradient map: the supremum is attained only on the boundary and the
    caller should recurse on input subsets.
    """

    exists: bool
    capacity: Optional[float]
    theta_a: Optional[Array]
    eta_a: Array
    theta_c: Optional[Array]
    theta_b_bar: Array
    message: str = ""


def _projection_target(p: ReverseEmProblem, theta_a: Array):
    """Shared per-iterate quantities: ambient point, value/gradient, E-target."""
    amb = p.m_ambient(theta_a)
    f_m, g_m = p.sys.value_grad(amb)
    target = p.family_E.generators.T @ g_m
    return amb, f_m, g_m, target


def _objective_and_residual(p: ReverseEmProblem, theta_a: Array,
                            state: Dict) -> Tuple[float, float, Array]:
    """Objective D(theta || m-projection) and the fixed-point residual."""
    amb, f_m, g_m, target = _projection_target(p, theta_a)
    theta_c = natural_param(p.E_system, target, theta_init=state.get("theta_c"))
    state["theta_c"] = theta_c
    amb_e = p.e_ambient(theta_c)
    obj = float(g_m @ (amb - amb_e) - f_m + p.sys.potential(amb_e))
    residual = float(np.linalg.norm(
        p.dual_matrix @ theta_c - np.asarray(theta_a, dtype=float)))
    return obj, residual, theta_c


def em_minimize(p: ReverseEmProblem, theta_init: Array, tol: float = 1e-12,
                max_iter: int = 5000) -> EmResult:
    """Alternating e-/m-projections minimizing the divergence between the
    mixture and exponential subfamilies; returns the minimized divergence."""
    theta_e = np.asarray(theta_init, dtype=float)
    gap = np.inf
    converged = False
    theta_m = theta_e
    it = 0
    for it in range(1, max_iter + 1):
        theta_m = e_projection(p.sys, p.family_M, theta_e)
        _, theta_e = m_projection(p.sys, p.family_E, theta_m)
        new_gap = divergence(p.sys, theta_m, theta_e)
        if abs(gap - new_gap) < tol:
            gap = new_gap
            converged = True
            break
        gap = new_gap
    return EmResult(float(gap), theta_m, theta_e, it, converged)


class _LegendreCache:
    """Warm-started inversion of an exponential-family gradient map."""

    def __init__(self, system: BregmanSystem):
        self.system = system
        self.last: Optional[Array] = None

    def solve(self, eta: Array, grad_tol: float = 1e-11) -> Array:
        theta = natural_param(self.system, eta, theta_init=self.last,
                              grad_tol=grad_tol)
        self.last = theta
        return theta


def _mixture_inner(p: ReverseEmProblem, theta_a: Array, eta_init: Array,
                   cache: _LegendreCache, grad_tol: float = 1e-9,
                   extra_stop=None):
    """Minimize F_E*(eta_hat dual_matrix) - <eta_hat, theta_a> over eta_hat in R^k.

    The inner gradient-map inversions are solved one decade tighter than the
    outer tolerance so their error does not dominate the outer gradient.
    """
    dual = p.dual_matrix
    theta_a = np.asarray(theta_a, dtype=float)
    memo: Dict = {"key": None}

    def solve_c(eta_hat):
        key = eta_hat.tobytes()
        if memo["key"] != key:
            theta_c = cache.solve(dual.T @ eta_hat, grad_tol=grad_tol * 1e-2)
            memo.update(key=key, theta_c=theta_c)
        return memo["theta_c"]

    def fgh(eta_hat):
        theta_c = solve_c(eta_hat)
        f_c, _, h_c = p.E_system.value_grad_hess(theta_c)
        eta_c = dual.T @ eta_hat
        f = float(eta_c @ theta_c - f_c - eta_hat @ theta_a)
        g = dual @ theta_c - theta_a
        c, low = scipy.linalg.cho_factor(h_c, check_finite=False)
        h = dual @ scipy.linalg.cho_solve((c, low), dual.T, check_finite=False)
        return f, g, 0.5 * (h + h.T)

    def value_only(eta_hat):
        try:
            theta_c = solve_c(eta_hat)
        except ImageMembershipError:
            return np.inf
        return float((dual.T @ eta_hat) @ theta_c - p.E_system.potential(theta_c)
                     - eta_hat @ theta_a)

    res = minimize_fgh(fgh, eta_init, grad_tol=grad_tol, value_only=value_only,
                       extra_stop=extra_stop)
    if not res.converged:
        raise ProjectionError(
            f"inner dual minimization stalled (gradient norm {res.gradient_norm:.3e})")
    return res.point, solve_c(res.point)


def inverse_step_mixture(p: ReverseEmProblem, theta_a: Array,
                         state: Optional[Dict] = None) -> Array:
    """One application of the inverse projection map in mixture parameters."""
    if not p.mixture_is_exponential:
        raise ConditionViolationError(
            "mixture step needs the exponential structure of the mixture family")
    state = {} if state is None else state
    cache = state.setdefault("legendre", _LegendreCache(p.E_system))
    eta_init = state.get("eta_hat")
    if eta_init is None:
        eta_init = p.M_system.gradient(np.asarray(theta_a, dtype=float))
    eta_hat, _ = _mixture_inner(p, theta_a, eta_init, cache)
    state["eta_hat"] = eta_hat
    theta_new = natural_param(p.M_system, eta_hat, theta_init=theta_a)
    return theta_new


def inverse_step_eps(p: ReverseEmProblem, theta_a: Array, eps: float,
                     state: Optional[Dict] = None) -> Array:
    """As the mixture step, but the inner minimization stops once the
    strong-convexity certificate |g|^2 / (2 lambda_min(H)) drops below eps."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    state = {} if state is None else state
    cache = state.setdefault("legendre", _LegendreCache(p.E_system))
    eta_init = state.get("eta_hat")
    if eta_init is None:
        eta_init = p.M_system.gradient(np.asarray(theta_a, dtype=float))

    def certificate(_x, _f, g, h):
        lam = float(np.linalg.eigvalsh(h)[0])
        if lam <= 0:
            return False
        return float(g @ g) / (2.0 * lam) <= eps

    eta_hat, _ = _mixture_inner(p, theta_a, eta_init, cache, extra_stop=certificate)
    state["eta_hat"] = eta_hat
    return natural_param(p.M_system, eta_hat, theta_init=theta_a)


def inverse_step_natural(p: ReverseEmProblem, theta_a: Array,
                         state: Optional[Dict] = None) -> Array:
    """One application of the inverse map computed in natural parameters.

    Requires the identity leading block of the dual matrix; when the
    exponential potential splits as a product, the inner minimization
    separates into the two split potentials.
    """
    if not (p.mixture_is_exponential and p.leading_identity_block):
        raise ConditionViolationError(
            "natural step needs the exponential mixture structure and the "
            "identity leading block")
    state = {} if state is None else state
    theta_a = np.asarray(theta_a, dtype=float)
    tail = p.dual_tail
    tb0 = state.get("theta_b")
    if tb0 is None:
        tb0 = np.zeros(p.l - p.k)

    if p.split is not None:
        sys_a, sys_b = p.split

        def fgh(tb):
            fa, ga, ha = sys_a.value_grad_hess(theta_a - tail @ tb)
            fb, gb, hb = sys_b.value_grad_hess(tb)
            return fa + fb, gb - tail.T @ ga, tail.T @ ha @ tail + hb

        def value_only(tb):
            return sys_a.potential(theta_a - tail @ tb) + sys_b.potential(tb)

        res = minimize_fgh(fgh, tb0, value_only=value_only)
        if not res.converged:
            raise ProjectionError("natural-parameter inner minimization stalled")
        tb = res.point
        eta_a_new = sys_a.gradient(theta_a - tail @ tb)
    else:
        jac = np.vstack([-tail, np.eye(p.l - p.k)])

        def fgh(tb):
            f, g, h = p.E_system.value_grad_hess(
                np.concatenate([theta_a - tail @ tb, tb]))
            return f, jac.T @ g, jac.T @ h @ jac

        def value_only(tb):
            return p.E_system.potential(np.concatenate([theta_a - tail @ tb, tb]))

        res = minimize_fgh(fgh, tb0, value_only=value_only)
        if not res.converged:
            raise ProjectionError("natural-parameter inner minimization stalled")
        tb = res.point
        eta_full = p.E_system.gradient(np.concatenate([theta_a - tail @ tb, tb]))
        eta_a_new = eta_full[:p.k]

    state["theta_b"] = tb
    return natural_param(p.M_system, eta_a_new, theta_init=theta_a)


def quadratic_step(p: ReverseEmProblem, theta_a: Array,
                   state: Optional[Dict] = None) -> Array:
    """Second-order approximation of the inner dual minimizer: one Newton
    step of the dual objective from the current mixture parameter.

    Returns the approximate mixture parameter; exact at a fixed point, and
    accurate to second order in the distance from one.
    """
    if not p.mixture_is_exponential:
        raise ConditionViolationError(
            "quadratic step needs the exponential structure of the mixture family")
    state = {} if state is None else state
    theta_a = np.asarray(theta_a, dtype=float)
    eta_bar = p.M_system.gradient(theta_a)
    cache = state.setdefault("legendre", _LegendreCache(p.E_system))
    theta_c = cache.solve(p.dual_matrix.T @ eta_bar)
    j_e = p.E_system.hessian(theta_c)
    c, low = scipy.linalg.cho_factor(j_e, check_finite=False)
    d_mat = p.dual_matrix @ scipy.linalg.cho_solve((c, low), p.dual_matrix.T,
                                                   check_finite=False)
    correction = np.linalg.solve(d_mat, p.dual_matrix @ theta_c - theta_a)
    return eta_bar - correction


def fixed_point_residual(p: ReverseEmProblem, theta_a: Array,
                         state: Optional[Dict] = None) -> float:
    """Norm of the invariance defect of theta_a under the projection pair."""
    if not p.mixture_is_exponential:
        raise ConditionViolationError(
            "fixed-point test needs the exponential structure of the mixture family")
    state = {} if state is None else state
    _, residual, _ = _objective_and_residual(p, np.asarray(theta_a, dtype=float), state)
    return residual


def solve_reverse_em(p: ReverseEmProblem, theta_init: Array,
                     stepper: str = "natural", tol: float = 1e-10,
                     max_iter: int = 10000, eps: Optional[float] = None,
                     residual_tol: float = 1e-8) -> SolveTrace:
    """Iterate the chosen inverse step from theta_init, recording the
    objective and fixed-point residual, until the objective increment drops
    below ``tol`` or the residual below ``residual_tol``."""
    if stepper not in STEPPERS:
        raise ValueError(f"unknown stepper {stepper!r}")
    if stepper == "eps" and (eps is None or eps <= 0):
        raise ValueError("eps stepper requires a positive eps")

    theta_a = np.asarray(theta_init, dtype=float).copy()
    state: Dict = {}
    objectives: List[float] = []
    residuals: List[float] = []
    iterates: List[Array] = []
    converged = False

    for _ in range(max_iter + 1):
        obj, residual, _ = _objective_and_residual(p, theta_a, state)
        objectives.append(obj)
        residuals.append(residual)
        iterates.append(theta_a.copy())
        if residual < residual_tol or (
                len(objectives) > 1 and abs(objectives[-1] - objectives[-2]) < tol):
            converged = True
            break
        if len(objectives) > max_iter:
            break
        if stepper == "mixture":
            theta_a = inverse_step_mixture(p, theta_a, state)
        elif stepper == "natural":
            theta_a = inverse_step_natural(p, theta_a, state)
        elif stepper == "eps":
            theta_a = inverse_step_eps(p, theta_a, eps, state)
        else:
            eta_hat = quadratic_step(p, theta_a, state)
            theta_a = natural_param(p.M_system, eta_hat, theta_init=theta_a)

    best = int(np.argmax(objectives)) if stepper == "eps" else len(objectives) - 1
    theta_best = iterates[best]
    eta_best = p.M_system.gradient(theta_best)
    return SolveTrace(
        objective_values=np.asarray(objectives),
        fixed_point_residuals=np.asarray(residuals),
        iterations=len(objectives) - 1,
        capacity=float(objectives[best]),
        maximizer_mixture_coord=eta_best,
        theta_a=theta_best,
        converged=converged,
    )


class _ProductSystem(BregmanSystem):
    """Direct sum of two Bregman systems (block-diagonal Hessian)."""

    def __init__(self, first: BregmanSystem, second: BregmanSystem):
        self.first = first
        self.second = second
        self.split_at = first.dim
        super().__init__(first.dim + second.dim, self._pot, self._grad, self._hess)

    def _parts(self, x):
        return x[:self.split_at], x[self.split_at:]

    def _pot(self, x):
        a, b = self._parts(x)
        return self.first.potential(a) + self.second.potential(b)

    def _grad(self, x):
        a, b = self._parts(x)
        return np.concatenate([self.first.gradient(a), self.second.gradient(b)])

    def _hess(self, x):
        a, b = self._parts(x)
        return scipy.linalg.block_diag(self.first.hessian(a), self.second.hessian(b))

    def value_grad(self, x):
        a, b = self._parts(np.asarray(x, dtype=float))
        fa, ga = self.first.value_grad(a)
        fb, gb = self.second.value_grad(b)
        return fa + fb, np.concatenate([ga, gb])

    def value_grad_hess(self, x):
        a, b = self._parts(np.asarray(x, dtype=float))
        fa, ga, ha = self.first.value_grad_hess(a)
        fb, gb, hb = self.second.value_grad_hess(b)
        return (fa + fb, np.concatenate([ga, gb]), scipy.linalg.block_diag(ha, hb))


_EM_NORM_GUARD = 200.0


def em_conversion(p: ReverseEmProblem, tol: float = 1e-13,
                  max_iter: int = 20000) -> EmConversionResult:
    """Convert the maximization to an intersection search between auxiliary
    mixture/exponential subfamilies of the product system and solve it by
    alternating projections (with a final Newton polish of the intersection
    equation)."""
    if not (p.projection_expands and p.mixture_is_exponential):
        raise ConditionViolationError(
            "em conversion needs the projection-expansion property and the "
            "exponential mixture structure")
    k, l = p.k, p.l
    prod = _ProductSystem(p.M_system, p.E_system)
    u_hat = np.block([[np.eye(k), p.dual_matrix], [np.zeros((l, k)), -np.eye(l)]])
    m_hat = MixtureSubfamily(u_hat, k, np.zeros(l))
    e_hat = ExponentialSubfamily(np.vstack([p.dual_matrix, np.eye(l)]), np.zeros(k + l))

    x_e = np.zeros(k + l)
    gap = np.inf
    status = "max_iter"
    it = 0
    for it in range(1, max_iter + 1):
        try:
            x_m = e_projection(prod, m_hat, x_e)
            _, x_e = m_projection(prod, e_hat, x_m)
        except ProjectionError as exc:
            return EmConversionResult(False, None, None, None, float(gap), it,
                                      f"projection failure: {exc}")
        new_gap = divergence(prod, x_m, x_e)
        if np.max(np.abs(x_m)) > _EM_NORM_GUARD:
            return EmConversionResult(False, None, None, None, float(new_gap), it,
                                      "iterates diverged: families do not intersect")
        if abs(gap - new_gap) < tol:
            gap = new_gap
            status = "converged"
            break
        gap = new_gap

    theta_c = x_e[k:]
    polished = _polish_intersection(p, theta_c)
    if polished is None:
        return EmConversionResult(False, None, None, None, float(gap), it,
                                  f"intersection polish failed ({status})")
    theta_c = polished
    # A genuine (transversal) intersection has a regular defining Jacobian;
    # a supremum approached at infinity leaves a numerically singular one
    # along the drift direction even when the residual is tiny.
    jac = (p.dual_matrix.T @ p.M_system.hessian(p.dual_matrix @ theta_c) @ p.dual_matrix
           - p.E_system.hessian(theta_c))
    svals = np.linalg.svd(jac, compute_uv=False)
    if svals[-1] <= 1e-8 * svals[0]:
        return EmConversionResult(False, None, None, None, float(gap), it,
                                  "degenerate intersection: supremum not attained "
                                  "in the interior")
    theta_a = p.dual_matrix @ theta_c
    capacity = divergence(p.sys, p.m_ambient(theta_a), p.e_ambient(theta_c))
    return EmConversionResult(True, float(capacity), theta_a, theta_c, float(gap), it)


def _polish_intersection(p: ReverseEmProblem, theta_c: Array,
                         tol: float = 1e-12, max_iter: int = 60) -> Optional[Array]:
    """Damped Newton on the intersection equation
    dual_matrix^T grad F_M(dual_matrix theta_c) = grad F_E(theta_c)."""
    x = np.asarray(theta_c, dtype=float).copy()

    def res_jac(z):
        gm = p.M_system.gradient(p.dual_matrix @ z)
        ge = p.E_system.gradient(z)
        r = p.dual_matrix.T @ gm - ge
        jm = p.M_system.hessian(p.dual_matrix @ z)
        je = p.E_system.hessian(z)
        return r, p.dual_matrix.T @ jm @ p.dual_matrix - je

    r, jac = res_jac(x)
    rnorm = np.linalg.norm(r)
    for _ in range(max_iter):
        if rnorm <= tol:
            return x
        try:
            step = np.linalg.solve(jac, -r)
        except np.linalg.LinAlgError:
            return None
        t = 1.0
        while t > 1e-12:
            x_new = x + t * step
            if np.max(np.abs(x_new)) > _EM_NORM_GUARD:
                t *= 0.5
                continue
            try:
                r_new, jac_new = res_jac(x_new)
            except RevemError:
                t *= 0.5
                continue
            if np.linalg.norm(r_new) < rnorm:
                x, r, jac, rnorm = x_new, r_new, jac_new, np.linalg.norm(r_new)
                break
            t *= 0.5
        else:
            return None
    return x if rnorm <= 1e-8 else None


def compute_dual_offset(p: ReverseEmProblem, n_checks: int = 3,
                         rng: Optional[np.random.Generator] = None,
                         check_tol: float = 1e-8) -> Array:
    """Offset between the two dual coordinate maps (constant when flagged).

    Evaluated at ``n_checks`` mixture parameters; inconsistency raises
    ConditionViolationError.
    """
    if p.split is None:
        raise ConditionViolationError("the dual offset needs the split potentials")
    rng = np.random.default_rng(0) if rng is None else rng
    sys_a = p.split[0]
    values = []
    for _ in range(max(n_checks, 1)):
        theta_probe = rng.normal(scale=0.3, size=p.k)
        eta = p.M_system.gradient(theta_probe)
        theta_ea = natural_param(sys_a, eta)
        values.append(theta_probe - theta_ea)
    values = np.asarray(values)
    spread = float(np.max(np.abs(values - values[0]))) if len(values) > 1 else 0.0
    if spread > check_tol:
        raise ConditionViolationError(
            f"dual offset is not constant (spread {spread:.3e})")
    return values[0]


def non_iterative(p: ReverseEmProblem,
                  rng: Optional[np.random.Generator] = None) -> NonIterativeResult:
    """Locate the maximizer by one convex minimization in the split potential.

    Requires the exponential mixture structure, the identity leading block,
    the split potentials and a constant dual offset.  When the resulting
    dual coordinate lies outside the image of the gradient map of the first
    split potential, the supremum is not attained in the interior and a
    nonexistence report is returned instead of a maximizer.
    """
    if not (p.mixture_is_exponential and p.leading_identity_block
            and p.split_potential and p.constant_dual_offset):
        raise ConditionViolationError(
            "non-iterative method needs the exponential mixture structure, the "
            "identity leading block, the split potentials and a constant dual offset")
    sys_a, sys_b = p.split
    tail = p.dual_tail
    if np.linalg.matrix_rank(tail, tol=1e-10) < p.k:
        raise ConditionViolationError(
            "the trailing dual block is row-rank deficient")

    dual_offset = p.dual_offset
    if dual_offset is None:
        dual_offset = compute_dual_offset(p, rng=rng)
    theta_b_star = least_norm_solve(tail, dual_offset)
    null_dirs = kernel_basis(tail)

    if null_dirs.shape[1] > 0:
        def fgh(te):
            f, g, h = sys_b.value_grad_hess(theta_b_star + null_dirs @ te)
            return f, null_dirs.T @ g, null_dirs.T @ h @ null_dirs

        res = minimize_fgh(
            fgh, np.zeros(null_dirs.shape[1]),
            value_only=lambda te: sys_b.potential(theta_b_star + null_dirs @ te))
        if not res.converged:
            raise ProjectionError("split-potential minimization stalled")
        theta_b_bar = theta_b_star + null_dirs @ res.point
    else:
        theta_b_bar = theta_b_star

    eta_b = sys_b.gradient(theta_b_bar)
    eta_a = least_norm_solve(tail.T, eta_b)
    try:
        theta_a_bar = natural_param(sys_a, eta_a)
    except ImageMembershipError as exc:
        return NonIterativeResult(
            exists=False, capacity=None, theta_a=None, eta_a=eta_a,
            theta_c=None, theta_b_bar=theta_b_bar,
            message=f"maximum not attained in the interior: {exc}")

    theta_a_max = theta_a_bar + dual_offset
    theta_c = np.concatenate([theta_a_bar, theta_b_bar])
    capacity = divergence(p.sys, p.m_ambient(theta_a_max), p.e_ambient(theta_c))
    return NonIterativeResult(
        exists=True, capacity=float(capacity), theta_a=theta_a_max,
        eta_a=eta_a, theta_c=theta_c, theta_b_bar=theta_b_bar)
