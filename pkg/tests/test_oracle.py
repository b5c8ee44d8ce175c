"""The brute-force verifiers themselves: enumeration, dense assembly, reports."""

import numpy as np
import pytest
from helpers import feasible_step_problem

from chinpaint.errors import InvalidInputError, OracleFailure
from chinpaint.grid import ScalarField, build_grid, lumped_weights, make_fidelity
from chinpaint.oracle import (
    ENUMERATION_NODE_CAP,
    ORACLE_NODE_CAP,
    build_dense_system,
    check_stationarity,
    dense_lumped_mass,
    dense_stiffness,
    format_report,
    oracle_step_dense,
)
from chinpaint.steps import step_obstacle, step_problem


def test_dense_stiffness_structure():
    g = build_grid(4, 5)
    K = dense_stiffness(g)
    assert np.allclose(K, K.T)
    assert np.max(np.abs(K.sum(axis=1))) < 1e-13
    vals = np.linalg.eigvalsh(K)
    assert vals[0] > -1e-12  # positive semidefinite
    assert abs(vals[0]) < 1e-12  # constants in the kernel


def test_dense_mass_equals_production_weights():
    for shape in [(2, 2), (3, 4), (6, 6)]:
        g = build_grid(*shape)
        assert np.allclose(dense_lumped_mass(g), lumped_weights(g), atol=1e-16)


def test_enumeration_agrees_with_sweep_solver_on_tiny_grids():
    # every assignment of {-1, free, +1} per node is tried; any consistent
    # one must reproduce the production solution exactly
    worst = 0.0
    for shape, seeds in [((2, 2), range(60, 66)), ((2, 5), range(70, 74)), ((3, 3), range(80, 84))]:
        for seed in seeds:
            p = feasible_step_problem(*shape, seed)
            u_o, _w_o = oracle_step_dense(p)
            r = step_obstacle(p)
            assert r.converged
            worst = max(worst, float(np.max(np.abs(u_o.values - r.u_next.values))))
    assert worst < 1e-9


def test_oracle_iteration_above_enumeration_cap():
    p = feasible_step_problem(6, 6, 91)
    assert p.grid.n_nodes > ENUMERATION_NODE_CAP
    u_o, w_o = oracle_step_dense(p)
    r = step_obstacle(p)
    assert np.max(np.abs(u_o.values - r.u_next.values)) < 1e-9


def test_oracle_node_cap():
    p = feasible_step_problem(65, 65, 1)
    assert p.grid.n_nodes > ORACLE_NODE_CAP
    with pytest.raises(InvalidInputError):
        build_dense_system(p)


def test_oracle_rejects_unattainable_mass_target():
    g = build_grid(3, 3)
    n = g.n_nodes
    dmg = np.zeros(n, dtype=bool)
    dmg[0] = True
    fid = make_fidelity(g, dmg, 50.0)
    p = step_problem(
        g,
        ScalarField(g, np.full(n, 0.9)),
        fid,
        ScalarField(g, np.ones(n)),
        0.1,
        1.0,
    )
    from chinpaint.errors import InvalidParameterError

    with pytest.raises(InvalidParameterError):
        oracle_step_dense(p)


def test_oracle_clamped_fixed_point():
    g = build_grid(2, 2)
    n = g.n_nodes
    dmg = np.zeros(n, dtype=bool)
    dmg[0] = True
    fid = make_fidelity(g, dmg, 10.0)
    p = step_problem(g, ScalarField(g, np.ones(n)), fid, ScalarField(g, np.ones(n)), 0.1, 1e-4)
    u_o, _ = oracle_step_dense(p)
    assert np.max(np.abs(u_o.values - 1.0)) < 1e-12


def test_check_stationarity_values():
    g = build_grid(4, 4)
    n = g.n_nodes
    dmg = np.zeros(n, dtype=bool)
    dmg[3] = True
    fid = make_fidelity(g, dmg, 5.0)
    img = ScalarField(g, np.full(n, 0.25))
    assert check_stationarity(img, img, fid) == 0.0
    shifted = ScalarField(g, img.values - 0.125)
    assert check_stationarity(shifted, img, fid) == pytest.approx(0.125)
    all_dmg = fid.lam * 0.0
    from chinpaint.grid import FidelityField

    with pytest.raises(InvalidInputError):
        check_stationarity(img, img, FidelityField(g, all_dmg, 0.0))


def test_format_report_lines():
    out = format_report([("alpha", True, "ok"), ("beta", False, "off by 2")])
    assert out == "PASS alpha: ok\nFAIL beta: off by 2\n"
