"""Classical-quantum channel capacity: Holevo quantity, the geometry over
block-diagonal classical-quantum states, the iterative solver, and the
non-iterative method with its boundary-subset recursion.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .bregman import classical_system, natural_param, quantum_system
from .classical import CapacityOutcome, subset_recursion
from .errors import (DegenerateChannelError, DomainError, InvalidChannelError,
                     ProjectionError)
from .families import ExponentialSubfamily, MixtureSubfamily
from .numerics import EIGEN_FLOOR, kernel_basis, least_norm_solve, minimize_fgh
from .reverse_em import ReverseEmProblem, solve_reverse_em

Array = np.ndarray


@dataclass(eq=False)
class CQChannel:
    """Classical-quantum channel: one density matrix per classical input."""

    states: Array  # (n_inputs, dim, dim) complex

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=complex)
        if self.states.ndim != 3 or self.states.shape[1] != self.states.shape[2]:
            raise InvalidChannelError("states must be a stack of square matrices")
        for idx, rho in enumerate(self.states):
            if np.max(np.abs(rho - rho.conj().T)) > 1e-10:
                raise InvalidChannelError(f"state {idx + 1} is not Hermitian")
            tr = complex(np.trace(rho))
            if abs(tr - 1.0) > 1e-10:
                raise InvalidChannelError(
                    f"state {idx + 1} has trace {tr.real:.12g}, expected 1")
            if np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0] < -1e-12:
                raise InvalidChannelError(f"state {idx + 1} is not positive semidefinite")

    @property
    def n_inputs(self) -> int:
        return self.states.shape[0]

    @property
    def dim(self) -> int:
        return self.states.shape[1]


def von_neumann_entropy(rho: Array) -> float:
    """-Tr rho log rho in nats, ignoring the numerically zero spectrum."""
    evals = np.linalg.eigvalsh(np.asarray(rho, dtype=complex))
    floor = EIGEN_FLOOR * max(float(evals[-1]), 0.0)
    pos = evals[evals > max(floor, 0.0)]
    return float(-np.sum(pos * np.log(pos)))


def _tr_rho_log_sigma(rho: Array, sigma: Array, support_tol: float = 1e-10) -> float:
    """Tr rho log sigma on the support of sigma; rejects support violations."""
    evals, evecs = np.linalg.eigh(np.asarray(sigma, dtype=complex))
    floor = EIGEN_FLOOR * max(float(evals[-1]), 0.0)
    keep = evals > max(floor, 0.0)
    weights = np.einsum("ip,ij,jp->p", evecs.conj(), rho, evecs).real
    outside = float(np.sum(weights[~keep]))
    if outside > support_tol:
        raise DomainError(
            f"state has weight {outside:.3e} outside the support of the reference")
    return float(np.sum(weights[keep] * np.log(evals[keep])))


def holevo(p: Array, channel: CQChannel) -> float:
    """Holevo quantity sum_j p_j D(W_j || sum p W) in nats."""
    p = np.asarray(p, dtype=float)
    if p.shape != (channel.n_inputs,) or np.any(p < -1e-12) or abs(p.sum() - 1) > 1e-9:
        raise DomainError("p must be a probability vector over the inputs")
    mix = np.einsum("j,jab->ab", p, channel.states)
    total = 0.0
    for j in range(channel.n_inputs):
        if p[j] > 0:
            rho = channel.states[j]
            total += p[j] * (-von_neumann_entropy(rho) - _tr_rho_log_sigma(rho, mix))
    return float(total)


def gell_mann_basis(dim: int) -> Array:
    """Generalized Gell-Mann matrices: a traceless Hermitian basis of su(dim)."""
    mats = []
    for j in range(dim):
        for k in range(j + 1, dim):
            sym = np.zeros((dim, dim), dtype=complex)
            sym[j, k] = sym[k, j] = 1.0
            mats.append(sym)
            anti = np.zeros((dim, dim), dtype=complex)
            anti[j, k] = -1.0j
            anti[k, j] = 1.0j
            mats.append(anti)
    for l in range(1, dim):
        diag = np.zeros((dim, dim), dtype=complex)
        for m in range(l):
            diag[m, m] = 1.0
        diag[l, l] = -l
        mats.append(np.sqrt(2.0 / (l * (l + 1))) * diag)
    return np.asarray(mats)


def _observable_basis(reference: Array) -> Array:
    """Hermitian basis with Tr X_j reference = 0 and no identity component."""
    dim = reference.shape[0]
    basis = gell_mann_basis(dim)
    shifts = np.einsum("jab,ba->j", basis, reference).real
    eye = np.eye(dim)
    return np.asarray([g - s * eye for g, s in zip(basis, shifts)])


@dataclass(eq=False)
class CQProblem:
    """Reverse-em geometry of a cq channel plus coordinate helpers."""

    channel: CQChannel
    reg_states: Array
    rem: ReverseEmProblem
    theta_a_uniform: Array

    def decode_input(self, theta_a: Array) -> Array:
        sys = self.rem.sys
        rho = sys.state(self.rem.m_ambient(theta_a))  # type: ignore[attr-defined]
        n1, n2 = self.channel.n_inputs, self.channel.dim
        blocks = rho.reshape(n1, n2, n1, n2)
        p = np.array([np.trace(blocks[i, :, i, :]).real for i in range(n1)])
        return p / p.sum()


def _regularize(states: Array, weight: float) -> Array:
    dim = states.shape[1]
    return (1.0 - weight) * states + weight * np.eye(dim)[None, :, :] / dim


def build_problem(channel: CQChannel, regularization: float = 1e-12) -> CQProblem:
    """Geometry on the joint classical-quantum system C x H_A.

    The exponential family is the product states; the mixture family decodes
    to the classical-quantum states of the channel.  Rank-deficient inputs
    are regularized toward the maximally mixed state for the geometry only.
    """
    n1, n2 = channel.n_inputs, channel.dim
    if n1 < 2:
        raise InvalidChannelError("need at least two inputs")
    reg = _regularize(channel.states, regularization)

    obs = _observable_basis(reg[-1])  # (n2^2-1, n2, n2)
    n_obs = obs.shape[0]
    h = np.einsum("jab,iba->ij", obs, reg).real  # (n1, n2^2-1)

    k = n1 - 1
    d = n1 * n2 * n2 - 1
    l = n1 + n2 * n2 - 2
    dim_joint = n1 * n2

    def embed(i: int, mat: Array) -> Array:
        block = np.zeros((n1, n1), dtype=complex)
        block[i, i] = 1.0
        return np.kron(block, mat)

    eye = np.eye(n2, dtype=complex)
    xis = []
    for i in range(k):
        xis.append(embed(i, eye))
    for i in range(n1):
        for j in range(n_obs):
            if i < n1 - 1:
                xis.append(embed(i, obs[j] - h[i, j] * eye))
            else:
                xis.append(embed(i, obs[j]))
    xis = np.asarray(xis)
    if xis.shape[0] != d:
        raise InvalidChannelError("internal: observable block count")

    gens_ops = []
    for i in range(k):
        gens_ops.append(embed(i, eye))
    for j in range(n_obs):
        gens_ops.append(np.kron(np.eye(n1, dtype=complex), obs[j]))
    gens_ops = np.asarray(gens_ops)

    # Solve for the generator coordinates in the xi basis (real lstsq on
    # stacked real/imaginary parts).
    xi_vecs = np.concatenate([xis.real.reshape(d, -1),
                              xis.imag.reshape(d, -1)], axis=1).T
    g_vecs = np.concatenate([gens_ops.real.reshape(l, -1),
                             gens_ops.imag.reshape(l, -1)], axis=1).T
    v_mat, *_ = np.linalg.lstsq(xi_vecs, g_vecs, rcond=None)
    if np.max(np.abs(xi_vecs @ v_mat - g_vecs)) > 1e-9:
        raise InvalidChannelError("generator operators escape the observable span")

    sys = quantum_system(xis)
    family_e = ExponentialSubfamily(v_mat, np.zeros(d))
    family_m = MixtureSubfamily(np.eye(d), k, np.zeros(d - k))

    delta_feats = np.zeros((n1, k))
    delta_feats[:k, :] = np.eye(k)
    sys_ea = classical_system(delta_feats)
    sys_eb = quantum_system(obs)

    entropies = np.array([von_neumann_entropy(reg[i]) for i in range(n1)])
    dual_offset = -entropies[:k] + entropies[-1]

    rho_uniform = np.zeros((dim_joint, dim_joint), dtype=complex)
    for i in range(n1):
        rho_uniform += embed(i, reg[i]) / n1
    eta_uniform = np.einsum("mab,ba->m", xis, rho_uniform).real
    theta_uniform = natural_param(sys, eta_uniform, grad_tol=1e-12)

    full_row_rank = np.linalg.matrix_rank(h[:k], tol=1e-10) == k
    rem = ReverseEmProblem(
        sys=sys, family_E=family_e, family_M=family_m,
        theta_tail=theta_uniform[k:],
        projection_expands=True, mixture_is_exponential=True,
        leading_identity_block=True, split_potential=True,
        constant_dual_offset=bool(full_row_rank),
        split=(sys_ea, sys_eb), dual_offset=dual_offset)
    return CQProblem(channel, reg, rem, theta_uniform[:k])


def capacity_cq_iterative(channel: CQChannel, tol: float = 1e-10,
                          max_iter: int = 10000) -> CapacityOutcome:
    """Reverse-em capacity (maximal Holevo quantity) from uniform input."""
    prob = build_problem(channel)
    trace = solve_reverse_em(prob.rem, prob.theta_a_uniform, stepper="natural",
                             tol=tol, max_iter=max_iter)
    p = prob.decode_input(trace.theta_a)
    capacity = holevo(p, channel)
    return CapacityOutcome(capacity, p, (), "iterative",
                           iterations=trace.iterations,
                           residual=float(trace.fixed_point_residuals[-1]),
                           converged=trace.converged)


def cq_capacity_special(channel: CQChannel,
                        input_subset: Optional[Sequence[int]] = None,
                        neg_tol: float = 1e-9) -> CapacityOutcome:
    """Non-iterative candidate value on a restricted input set.

    The quantum analogue of the classical special-case algorithm: one convex
    minimization over the kernel of the moment matrix, then a linear solve
    for the input weights whose negative entries flag a boundary optimum.
    """
    n1 = channel.n_inputs
    subset = tuple(range(n1)) if input_subset is None else tuple(int(x) for x in input_subset)
    if len(set(subset)) != len(subset) or any(x < 0 or x >= n1 for x in subset):
        raise InvalidChannelError("input subset must be distinct valid indices")

    full_dist = np.zeros(n1)
    if len(subset) == 1:
        full_dist[subset[0]] = 1.0
        return CapacityOutcome(0.0, full_dist, (), "noniterative")

    states = channel.states[list(subset)]
    m = len(subset)
    obs = _observable_basis(states[-1])
    h = np.einsum("jab,iba->ij", obs, states).real  # (m, n2^2-1)
    h_mat = h[:-1]
    if np.linalg.matrix_rank(h_mat, tol=1e-10) < m - 1:
        raise DegenerateChannelError("restricted states are linearly dependent")

    theta_a_dag = np.array([-von_neumann_entropy(states[i])
                            + von_neumann_entropy(states[-1])
                            for i in range(m - 1)])
    theta_b = least_norm_solve(h_mat, theta_a_dag)
    kernel = kernel_basis(h_mat)
    sys_eb = quantum_system(obs)

    if kernel.shape[1] > 0:
        def fgh(te):
            val, grad, hess = sys_eb.value_grad_hess(theta_b + kernel @ te)
            return val, kernel.T @ grad, kernel.T @ hess @ kernel

        res = minimize_fgh(fgh, np.zeros(kernel.shape[1]),
                           value_only=lambda te: sys_eb.potential(theta_b + kernel @ te))
        if not res.converged:
            raise ProjectionError("output-side minimization stalled")
        theta_b = theta_b + kernel @ res.point

    sigma = sys_eb.state(theta_b)
    dim = channel.dim
    lhs = np.zeros((2 * dim * dim + 1, m))
    for i in range(m):
        lhs[:dim * dim, i] = states[i].real.reshape(-1)
        lhs[dim * dim:2 * dim * dim, i] = states[i].imag.reshape(-1)
    lhs[-1, :] = 1.0
    rhs = np.concatenate([sigma.real.reshape(-1), sigma.imag.reshape(-1), [1.0]])
    weights, *_ = np.linalg.lstsq(lhs, rhs, rcond=None)
    solve_residual = float(np.linalg.norm(lhs @ weights - rhs))
    if solve_residual > 1e-8:
        raise DegenerateChannelError(
            f"reference state outside the channel span (residual {solve_residual:.3e})")

    value = -von_neumann_entropy(states[-1]) + sys_eb.potential(theta_b)
    negatives = tuple(subset[i] for i in range(m) if weights[i] < -neg_tol)
    full_dist[list(subset)] = weights
    return CapacityOutcome(float(value), full_dist, negatives, "noniterative",
                           residual=solve_residual)


def capacity_cq_noniterative(channel: CQChannel,
                             neg_tol: float = 1e-9) -> CapacityOutcome:
    """Non-iterative cq capacity with the boundary-subset recursion."""
    return subset_recursion(
        channel.n_inputs,
        lambda sub: cq_capacity_special(channel, sub, neg_tol=neg_tol))


def holevo_oracle(channel: CQChannel, grid_points: int = 2000) -> float:
    """Grid-plus-refinement maximization of the Holevo quantity (n1 = 2)."""
    if channel.n_inputs != 2:
        raise InvalidChannelError("the 1-d oracle needs exactly two inputs")
    grid = np.linspace(0.0, 1.0, grid_points + 1)
    vals = [holevo(np.array([s, 1 - s]), channel) for s in grid]
    s = grid[int(np.argmax(vals))]
    a = max(s - 2.0 / grid_points, 0.0)
    b = min(s + 2.0 / grid_points, 1.0)
    inv_phi = (np.sqrt(5) - 1) / 2
    c, d = b - inv_phi * (b - a), a + inv_phi * (b - a)

    def val(x):
        return holevo(np.array([x, 1 - x]), channel)

    fc, fd = val(c), val(d)
    for _ in range(200):
        if fc < fd:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = val(d)
        else:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = val(c)
        if b - a < 1e-12:
            break
    return float(val(0.5 * (a + b)))
