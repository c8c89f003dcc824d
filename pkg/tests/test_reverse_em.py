import numpy as np
import pytest

from conftest import chan1, random_channel, random_features
from revem import reverse_em as rem
from revem.bregman import classical_system, divergence, natural_param
from revem.classical import (Channel, blahut_arimoto, build_problem,
                             mutual_information)
from revem.errors import ConditionViolationError
from revem.families import (ExponentialSubfamily, MixtureSubfamily,
                            e_projection, m_projection)


def bsc_problem(p=0.1):
    return build_problem(Channel(np.array([[1 - p, p], [p, 1 - p]])))


def test_v1_block_structure(rng):
    prob = build_problem(chan1(0.1))
    k = prob.rem.k
    assert np.max(np.abs(prob.rem.dual_matrix[:, :k] - np.eye(k))) < 1e-12
    assert np.max(np.abs(prob.rem.dual_matrix[:, k:] - prob.moment_matrix[:k])) < 1e-9


def test_bsc_uniform_is_fixed_point():
    prob = bsc_problem()
    theta = prob.theta_a_uniform
    assert rem.fixed_point_residual(prob.rem, theta) < 1e-9
    for step in (rem.inverse_step_mixture, rem.inverse_step_natural):
        assert np.max(np.abs(step(prob.rem, theta) - theta)) < 1e-9


def test_fixed_point_matches_ba_optimum():
    channel = chan1(0.0)
    prob = build_problem(channel)
    ba = blahut_arimoto(channel, tol=1e-13)
    coord = prob.input_coord(ba.input_distribution)
    assert rem.fixed_point_residual(prob.rem, coord) < 1e-6
    # a clearly suboptimal point is far from fixed
    off = prob.input_coord(np.array([0.7, 0.1, 0.1, 0.1]))
    assert rem.fixed_point_residual(prob.rem, off) > 1e-3
    # launching the solver at the optimum barely moves it
    trace = rem.solve_reverse_em(prob.rem, coord, stepper="natural", max_iter=3)
    moved = np.max(np.abs(trace.theta_a - coord))
    assert moved < 1e-6


def test_inverse_map_identity_via_projections(rng):
    for _ in range(5):
        channel = random_channel(rng, 3, 4)
        prob = build_problem(channel)
        p = prob.rem
        theta_a = 0.5 * rng.normal(size=p.k)
        theta_new = rem.inverse_step_mixture(p, theta_a)
        # apply the forward composite through the actual ambient projections
        ambient = p.m_ambient(theta_new)
        _, onto_e = m_projection(p.sys, p.family_E, ambient)
        back = e_projection(p.sys, p.family_M, onto_e)
        recovered = p.m_coords(back)
        assert np.max(np.abs(recovered - theta_a)) < 1e-8


def test_step_equivalence_on_chan1(rng):
    prob = build_problem(chan1(0.0))
    p = prob.rem
    for _ in range(3):
        theta_a = 0.4 * rng.normal(size=p.k)
        a = rem.inverse_step_mixture(p, theta_a)
        b = rem.inverse_step_natural(p, theta_a)
        c = rem.inverse_step_eps(p, theta_a, eps=1e-15)
        assert np.max(np.abs(a - b)) < 1e-8
        assert np.max(np.abs(a - c)) < 1e-7


def test_eps_step_degenerate_tolerance():
    prob = bsc_problem(0.2)
    theta = prob.theta_a_uniform + 0.5
    out = rem.inverse_step_eps(prob.rem, theta, eps=1e6)
    assert np.all(np.isfinite(out))


def test_residual_formulations_agree(rng):
    prob = build_problem(chan1(0.1))
    p = prob.rem
    for _ in range(5):
        theta_a = 0.4 * rng.normal(size=p.k)
        eta_a = p.M_system.gradient(theta_a)
        # (D2): through the dual gradient maps
        theta_c = natural_param(p.E_system, p.dual_matrix.T @ eta_a, grad_tol=1e-12)
        r2 = np.linalg.norm(p.dual_matrix @ theta_c - theta_a)
        # (D3): right-hand side recomputed through the inverse map of F_M
        r3 = np.linalg.norm(p.dual_matrix @ theta_c
                            - natural_param(p.M_system, eta_a, grad_tol=1e-12))
        # (D1): invariance defect through the ambient projections
        _, onto_e = m_projection(p.sys, p.family_E, p.m_ambient(theta_a))
        back = e_projection(p.sys, p.family_M, onto_e)
        r1 = np.linalg.norm(p.m_coords(back) - theta_a)
        assert abs(r1 - r2) < 1e-9
        assert abs(r2 - r3) < 1e-9
        assert abs(rem.fixed_point_residual(p, theta_a) - r2) < 1e-9


def test_quadratic_step_properties(rng):
    channel = chan1(0.0)
    prob = build_problem(channel)
    p = prob.rem
    ba = blahut_arimoto(channel, tol=1e-13)
    coord = prob.input_coord(ba.input_distribution)
    eta_fixed = p.M_system.gradient(coord)
    assert np.max(np.abs(rem.quadratic_step(p, coord) - eta_fixed)) < 1e-6

    # near the optimum the step tracks the exact inverse-map image and
    # contracts the invariance defect
    start = coord + 1e-3 * rng.normal(size=p.k)
    r0 = rem.fixed_point_residual(p, start)
    eta = rem.quadratic_step(p, start)
    theta_new = natural_param(p.M_system, eta)
    r1 = rem.fixed_point_residual(p, theta_new)
    assert r1 < r0
    r_exact = rem.fixed_point_residual(p, rem.inverse_step_mixture(p, start))
    assert abs(r1 - r_exact) < 1e-5 * max(r_exact, 1e-12)

    theta = start
    for _ in range(25):
        theta = natural_param(p.M_system, rem.quadratic_step(p, theta))
    assert rem.fixed_point_residual(p, theta) < r0 / 1e4

    # second-order accuracy: halving the offset quarters the defect
    direction = rng.normal(size=p.k)
    direction /= np.linalg.norm(direction)

    def defect(scale):
        theta_a = coord + scale * direction
        exact = p.M_system.gradient(rem.inverse_step_mixture(p, theta_a))
        approx = rem.quadratic_step(p, theta_a)
        return np.linalg.norm(exact - approx)

    d1, d2 = defect(2e-2), defect(1e-2)
    assert d2 < d1 / 2.5


def test_solver_capacities_and_monotonicity():
    channel = chan1(0.1)
    prob = build_problem(channel)
    ba = blahut_arimoto(channel, tol=1e-12)
    for stepper, kwargs in (("natural", {}), ("mixture", {}),
                            ("eps", {"eps": 1e-12})):
        trace = rem.solve_reverse_em(prob.rem, prob.theta_a_uniform,
                                     stepper=stepper, **kwargs)
        assert trace.converged
        assert abs(trace.capacity - ba.capacity) < 1e-6
        diffs = np.diff(trace.objective_values)
        assert np.min(diffs, initial=0.0) > -1e-10

    ident = build_problem(Channel(np.eye(2)))
    trace = rem.solve_reverse_em(ident.rem, ident.theta_a_uniform)
    assert abs(trace.capacity - np.log(2)) < 1e-9


def test_convergence_rate_bound():
    channel = chan1(0.1)
    prob = build_problem(channel)
    ba = blahut_arimoto(channel, tol=1e-12)
    trace = rem.solve_reverse_em(prob.rem, prob.theta_a_uniform,
                                 stepper="natural", tol=0.0, max_iter=200)
    objs = trace.objective_values
    for t in range(1, len(objs) + 1):
        assert ba.capacity - objs[t - 1] <= np.log(4) / t + 1e-12


def test_eps_solver_monotone_up_to_slack():
    prob = build_problem(chan1(0.1))
    trace = rem.solve_reverse_em(prob.rem, prob.theta_a_uniform,
                                 stepper="eps", eps=1e-8, tol=1e-12)
    diffs = np.diff(trace.objective_values)
    assert np.min(diffs, initial=0.0) > -1e-4
    assert trace.capacity == pytest.approx(np.max(trace.objective_values))


def designed_em_instance(rng):
    """Instance with a strictly positive em minimum: a 1-d exponential curve
    against a 2-d mixture slice in a 4-d system (generically disjoint)."""
    sys = classical_system(random_features(rng, 6, 4))
    fam_e = ExponentialSubfamily(np.array([[1.0], [0.5], [-0.25], [0.8]]),
                                 np.array([0.2, -0.1, 0.0, 0.4]))
    base_grad = sys.gradient(np.zeros(4))
    fam_m = MixtureSubfamily(np.eye(4), 2, 0.9 * base_grad[2:])
    prob = rem.ReverseEmProblem(
        sys=sys, family_E=fam_e, family_M=fam_m,
        theta_tail=np.zeros(2), projection_expands=False, mixture_is_exponential=False)
    return sys, fam_e, fam_m, prob


def test_em_minimize_matches_grid_oracle(rng):
    sys, fam_e, fam_m, prob = designed_em_instance(rng)
    result = rem.em_minimize(prob, fam_e.ambient(np.zeros(1)))
    assert result.converged
    assert result.c_inf > 1e-4  # families genuinely separated

    def member_gap(a, b):
        member = e_projection(sys, fam_m, np.array([a, b, 0.0, 0.0]))
        _, proj = m_projection(sys, fam_e, member)
        return divergence(sys, member, proj), (a, b)

    coarse = min(member_gap(a, b)
                 for a in np.linspace(-3, 3, 41) for b in np.linspace(-3, 3, 41))
    a0, b0 = coarse[1]
    fine = min(member_gap(a, b)
               for a in np.linspace(a0 - 0.16, a0 + 0.16, 41)
               for b in np.linspace(b0 - 0.16, b0 + 0.16, 41))
    best = fine[0]
    assert result.c_inf <= best + 1e-9
    assert abs(result.c_inf - best) < 1e-5


def test_em_minimize_zero_when_families_intersect():
    # identical channel rows make {W x q} product distributions
    mat = np.array([[0.3, 0.3], [0.7, 0.7]])
    prob = build_problem(Channel(mat))
    start = prob.rem.e_ambient(np.zeros(prob.rem.l))
    result = rem.em_minimize(prob.rem, start)
    assert result.c_inf < 1e-10


def test_em_conversion_matches_other_solvers():
    channel = chan1(0.0)
    prob = build_problem(channel)
    trace = rem.solve_reverse_em(prob.rem, prob.theta_a_uniform)
    conv = rem.em_conversion(prob.rem)
    assert conv.intersection_found
    assert abs(conv.capacity - trace.capacity) < 1e-6

    p = 0.15
    prob = bsc_problem(p)
    conv = rem.em_conversion(prob.rem)
    analytic = np.log(2) + p * np.log(p) + (1 - p) * np.log(1 - p)
    assert conv.intersection_found
    assert abs(conv.capacity - analytic) < 1e-9


def test_em_conversion_reports_boundary_case():
    # past the support transition the supremum is not attained
    prob = build_problem(chan1(0.76))
    conv = rem.em_conversion(prob.rem, max_iter=3000)
    assert not conv.intersection_found
    assert conv.capacity is None


def test_non_iterative_paths(rng):
    channel = chan1(0.1)
    prob = build_problem(channel)
    ba = blahut_arimoto(channel, tol=1e-12)
    res = rem.non_iterative(prob.rem)
    assert res.exists
    assert abs(res.capacity - ba.capacity) < 1e-6
    q = prob.decode_input(res.theta_a)
    assert abs(mutual_information(channel.matrix, q) - ba.capacity) < 1e-8

    prob = build_problem(chan1(0.76))
    res = rem.non_iterative(prob.rem)
    assert not res.exists

    # square case: dual_tail invertible, no inner minimization needed
    channel = random_channel(rng, 2, 2)
    prob = build_problem(channel)
    assert prob.rem.dual_tail.shape == (1, 1)
    res = rem.non_iterative(prob.rem)
    ba = blahut_arimoto(channel, tol=1e-12)
    assert res.exists
    assert abs(res.capacity - ba.capacity) < 1e-6


def test_dual_offset_constancy(rng):
    prob = build_problem(chan1(0.1))
    computed = rem.compute_dual_offset(prob.rem, n_checks=5, rng=rng)
    assert np.max(np.abs(computed - prob.rem.dual_offset)) < 1e-8


def test_solver_validates_stepper():
    prob = bsc_problem()
    with pytest.raises(ValueError):
        rem.solve_reverse_em(prob.rem, prob.theta_a_uniform, stepper="bogus")
    with pytest.raises(ValueError):
        rem.solve_reverse_em(prob.rem, prob.theta_a_uniform, stepper="eps")
    bare = rem.ReverseEmProblem(
        sys=prob.rem.sys, family_E=prob.rem.family_E,
        family_M=prob.rem.family_M, theta_tail=prob.rem.theta_tail,
        projection_expands=True, mixture_is_exponential=True, leading_identity_block=False, split_potential=False, constant_dual_offset=False)
    with pytest.raises(ConditionViolationError):
        rem.inverse_step_natural(bare, prob.theta_a_uniform)
    with pytest.raises(ConditionViolationError):
        rem.non_iterative(bare)
