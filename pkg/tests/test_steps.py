"""Single-step solvers: projected sweeps, direct active-set, penalty, quartic."""

import numpy as np
import pytest
from helpers import contact_step_problem, feasible_step_problem

from chinpaint.errors import (
    ConstraintViolationError,
    InvalidParameterError,
    ShapeMismatchError,
)
from chinpaint.grid import ScalarField, build_grid, lumped_weights, make_fidelity
from chinpaint.steps import (
    _dct_eigenvalues,
    _solve_obstacle_direct,
    kkt_residual,
    step_moreau_yosida,
    step_obstacle,
    step_problem,
    step_quartic,
)


def _arrays(p):
    g = p.grid
    m = lumped_weights(g)
    rhs_fid = m * p.fidelity.lam * (p.image_field.values - p.u_prev.values)
    return g, m, rhs_fid


def _direct(p):
    g, m, rhs = _arrays(p)
    return _solve_obstacle_direct(
        g.nx, g.ny, p.u_prev.values, rhs, m, p.eps, p.tau, p.inner_tol, p.max_inner_iters
    )


def test_step_problem_validation():
    g = build_grid(3, 3)
    u = ScalarField(g, np.zeros(9))
    dmg = np.zeros(9, dtype=bool)
    dmg[0] = True
    fid = make_fidelity(g, dmg, 1.0)
    with pytest.raises(InvalidParameterError):
        step_problem(g, u, fid, u, eps=0.0, tau=1e-3)
    with pytest.raises(InvalidParameterError):
        step_problem(g, u, fid, u, eps=0.1, tau=-1e-3)
    with pytest.raises(InvalidParameterError):
        step_problem(g, u, fid, u, eps=0.1, tau=1e-3, inner_tol=0.0)
    with pytest.raises(InvalidParameterError):
        step_problem(g, u, fid, u, eps=0.1, tau=1e-3, max_inner_iters=0)
    g2 = build_grid(3, 4)
    with pytest.raises(ShapeMismatchError):
        step_problem(g2, u, fid, u, eps=0.1, tau=1e-3)
    p = step_problem(g, u, fid, u, eps=0.1, tau=1e-3)
    assert p.max_inner_iters == 90  # default 10n


def test_step_obstacle_rejects_infeasible_start():
    g = build_grid(3, 3)
    v = np.zeros(9)
    v[0] = 1.5
    dmg = np.zeros(9, dtype=bool)
    dmg[0] = True
    fid = make_fidelity(g, dmg, 1.0)
    p = step_problem(g, ScalarField(g, v), fid, ScalarField(g, np.zeros(9)), 0.1, 1e-3)
    with pytest.raises(ConstraintViolationError):
        step_obstacle(p)


def test_step_rejects_unattainable_mass_target():
    # an explicit fidelity push beyond total mass leaves the constrained
    # step without any solution; both solvers must refuse rather than stall
    g = build_grid(4, 4)
    n = g.n_nodes
    u_prev = np.full(n, 0.9)
    image = np.ones(n)
    dmg = np.zeros(n, dtype=bool)
    dmg[0] = True
    fid = make_fidelity(g, dmg, 50.0)
    p = step_problem(
        g, ScalarField(g, u_prev), fid, ScalarField(g, image), 0.1, 1.0
    )  # tau*alpha = 50 pushes far past +1
    with pytest.raises(InvalidParameterError):
        step_obstacle(p)
    with pytest.raises(InvalidParameterError):
        _direct(p)


def test_constant_free_fixed_point():
    # with zero gap to the data and no damage-driven source, u stays put and
    # the chemical potential is the lagged well slope: w = -u_prev/eps
    g = build_grid(5, 5)
    n = g.n_nodes
    c = 0.4
    u_prev = np.full(n, c)
    dmg = np.zeros(n, dtype=bool)
    dmg[12] = True
    fid = make_fidelity(g, dmg, 8.0)
    p = step_problem(
        g, ScalarField(g, u_prev), fid, ScalarField(g, u_prev), 0.2, 1e-3, 1e-13
    )
    r = step_obstacle(p)
    assert r.converged
    assert np.max(np.abs(r.u_next.values - c)) < 1e-12
    assert np.max(np.abs(r.w_next.values + c / 0.2)) < 1e-10


def test_clamped_fixed_point_stays_clamped():
    g = build_grid(4, 4)
    n = g.n_nodes
    u_prev = np.ones(n)
    dmg = np.zeros(n, dtype=bool)
    dmg[5] = True
    fid = make_fidelity(g, dmg, 10.0)
    p = step_problem(g, ScalarField(g, u_prev), fid, ScalarField(g, np.ones(n)), 0.1, 1e-4, 1e-13)
    r = step_obstacle(p)
    assert r.converged
    assert np.array_equal(r.u_next.values, np.ones(n))
    assert r.active_upper == n


@pytest.mark.parametrize("seed", range(2100, 2106))
def test_sweep_and_direct_agree(seed):
    # the variational inequality has a unique solution; the sweep solver's
    # stopping rule leaves O(inner_tol / h^2) error, the direct solver is
    # exact to roundoff
    p = feasible_step_problem(16, 16, seed, cap=100 * 256)
    r = step_obstacle(p)
    u_d, w_d, _it, resid, ok = _direct(p)
    assert r.converged and ok
    assert resid < 1e-11
    assert np.max(np.abs(r.u_next.values - u_d)) < 1e-7
    assert np.max(np.abs(r.w_next.values - w_d)) < 1e-6


@pytest.mark.parametrize("seed", range(2200, 2204))
def test_both_solvers_exactly_feasible(seed):
    p = feasible_step_problem(12, 18, seed)
    r = step_obstacle(p)
    u_d, *_ = _direct(p)
    assert np.max(np.abs(r.u_next.values)) <= 1.0
    assert np.max(np.abs(u_d)) <= 1.0


@pytest.mark.parametrize("seed", range(2300, 2304))
def test_mass_fidelity_identity_per_step(seed):
    p = feasible_step_problem(14, 14, seed, cap=100 * 196)
    g, m, rhs = _arrays(p)
    r = step_obstacle(p)
    assert r.converged
    d_u, *_rest, d_ok = _direct(p)
    assert d_ok
    for u_next in (r.u_next.values, d_u):
        lhs = float(np.dot(m, u_next - p.u_prev.values))
        assert abs(lhs - p.tau * float(np.sum(rhs))) < 1e-11


@pytest.mark.parametrize("seed", range(2400, 2404))
def test_kkt_residuals_small_when_converged(seed):
    p = feasible_step_problem(10, 10, seed)
    r = step_obstacle(p)
    assert r.converged
    rep = kkt_residual(p.grid, r, p)
    bar = 10 * p.inner_tol
    assert rep.max_interior_residual <= bar
    assert rep.max_sign_violation_upper <= bar
    assert rep.max_sign_violation_lower <= bar


def test_warm_started_sweep_converges_fast():
    p = feasible_step_problem(12, 12, 77)
    r1 = step_obstacle(p)
    r2 = step_obstacle(p, w_start=r1.w_next)
    assert r2.converged
    assert np.max(np.abs(r2.u_next.values - r1.u_next.values)) < 1e-9


def test_unconverged_flag_when_budget_too_small():
    # needs a contact problem: without clamped nodes the starting guess is
    # already exact and even a tiny sweep budget suffices
    p = contact_step_problem(12, 12, 5, cap=2)
    r = step_obstacle(p)
    assert not r.converged
    assert r.inner_iterations == 2
    assert np.max(np.abs(r.u_next.values)) <= 1.0  # feasible even unconverged


def test_dct_modes_diagonalize_the_lumped_operator():
    # K v = m * mu * v for tensor cosine modes; this identity is what the
    # spectral starting guess relies on
    from chinpaint.grid import stiffness_values

    nx, ny = 9, 7
    g = build_grid(nx, ny)
    m = lumped_weights(g)
    mu = _dct_eigenvalues(nx, ny, g.h)
    x = np.arange(nx)
    y = np.arange(ny)
    for kx, ky in [(0, 0), (1, 0), (0, 1), (3, 2), (8, 6)]:
        v = (
            np.cos(np.pi * kx * x / (nx - 1))[None, :]
            * np.cos(np.pi * ky * y / (ny - 1))[:, None]
        ).reshape(-1)
        kv = stiffness_values(nx, ny, v)
        assert np.max(np.abs(kv - m * mu[ky, kx] * v)) < 1e-12


def test_moreau_yosida_converges_and_overshoot_shrinks_with_delta():
    p = contact_step_problem(12, 12, 701)
    overshoots = []
    for delta in (1e-2, 1e-3, 1e-4):
        r = step_moreau_yosida(p, delta)
        assert r.converged
        assert r.final_residual <= p.inner_tol
        overshoots.append(max(0.0, float(np.max(np.abs(r.u_next.values)) - 1.0)))
    assert overshoots[0] >= overshoots[1] >= overshoots[2]
    # the penalty violation scales like delta
    assert overshoots[0] < 1e-1
    with pytest.raises(InvalidParameterError):
        step_moreau_yosida(p, 0.0)


def test_moreau_yosida_without_contact_matches_obstacle():
    # when no node is clamped the penalty never engages and all three
    # formulations coincide
    p = feasible_step_problem(8, 8, 42)
    ro = step_obstacle(p)
    if ro.active_upper + ro.active_lower:
        pytest.skip("draw produced contact; covered elsewhere")
    rm = step_moreau_yosida(p, 1e-2)
    assert np.max(np.abs(rm.u_next.values - ro.u_next.values)) < 1e-9


def test_step_quartic_solves_its_linear_system():
    p = feasible_step_problem(12, 12, 9, tol=1e-11)
    r = step_quartic(p)
    assert r.converged
    assert r.final_residual <= 1e-11
    # mass-fidelity identity holds for this scheme too
    g, m, rhs = _arrays(p)
    lhs = float(np.dot(m, r.u_next.values - p.u_prev.values))
    assert abs(lhs - p.tau * float(np.sum(rhs))) < 1e-10


def test_step_quartic_not_projected():
    # pure relaxation of a clipped smooth profile pushes past the well
    # minima; the quartic scheme must report it rather than clamp
    g = build_grid(16, 16)
    n = g.n_nodes
    rng = np.random.default_rng(31)
    from helpers import smooth_field

    u_prev = np.clip(smooth_field(16, 16, rng, 1.6), -1.0, 1.0)
    dmg = np.zeros(n, dtype=bool)
    dmg[0] = True
    fid = make_fidelity(g, dmg, 1e-6)
    p = step_problem(g, ScalarField(g, u_prev), fid, ScalarField(g, u_prev), 0.05, 1e-3, 1e-10)
    r = step_quartic(p)
    assert float(np.max(np.abs(r.u_next.values))) > 1.0
