"""Grid construction, Howard iteration, residual certificates, policy tables."""

import numpy as np
import pytest

from hwmruin import (
    ModelParams,
    PiBox,
    SolverConfig,
    ThetaSet,
    frictionless_policy,
    frictionless_value,
    howard_solve,
    no_invest_value,
)
from hwmruin.solver import (
    assemble_residual,
    boundary_residuals,
    build_grid,
    default_y_max,
    extract_policy,
)


def test_build_grid_nodes_exact(frictionless):
    g = build_grid(frictionless, 3, 3, 3, 2.0)
    assert np.array_equal(g.x, [10.0, 30.0, 50.0])  # ruin floor to c/r
    assert np.array_equal(g.y1, [0.0, 1.0, 2.0])
    assert g.shape == (3, 3, 3)
    assert g.hx == 20.0 and g.hy1 == 1.0 and g.hy2 == 1.0
    assert g.h_sum == 22.0


def test_build_grid_rejects_degenerate(frictionless):
    with pytest.raises(ValueError):
        build_grid(frictionless, 2, 5, 5, 1.0)
    with pytest.raises(ValueError):
        build_grid(frictionless, 5, 5, 5, 0.0)


def test_default_y_max(params):
    # worst box corner of pi^T sigma: (1.25, 0.75), norm sqrt(2.125)
    got = default_y_max(params, PiBox.symmetric(5.0))
    assert got == pytest.approx(14.577379737113251, rel=1e-12)
    assert default_y_max(params, PiBox.zero()) == 1.0  # floored


def test_noinvest_solve_matches_closed_form(frictionless):
    """Single zero candidate: the scheme reduces to upwind transport, and
    the solution must track the exponential ruin law."""
    cfg = SolverConfig(pi_set=PiBox.zero(), theta_set=ThetaSet.zero(),
                       nx=41, ny1=9, ny2=9, y_max=1.0)
    sol = howard_solve(frictionless, cfg)
    assert sol.report.converged and not sol.report.flagged
    ref = no_invest_value(sol.grid.x, frictionless)
    assert np.abs(sol.field - ref[:, None, None]).max() <= 1e-2
    # Dirichlet rows are pinned bitwise
    assert np.all(sol.field[0] == 1.0)
    assert np.all(sol.field[-1] == 0.0)
    # no y-dependence enters anywhere in this problem
    assert (sol.field.max(axis=(1, 2)) - sol.field.min(axis=(1, 2))).max() <= 1e-9
    assert np.diff(sol.field, axis=0).max() <= 1e-9  # decreasing in wealth
    assert np.all(sol.policy.pi == 0.0)
    assert np.all(sol.policy.theta == 0.0)


def test_interior_residual_first_order(frictionless):
    """Sampling the exact ruin law onto finer x-grids must roughly halve
    the interior residual (upwind transport is O(hx))."""
    sups = {}
    for nx in (41, 81):
        g = build_grid(frictionless, nx, 5, 5, 1.0)
        phi = np.broadcast_to(
            no_invest_value(g.x, frictionless)[:, None, None], (nx, 5, 5)
        ).copy()
        rep = assemble_residual(phi, g, frictionless, PiBox.zero(), ThetaSet.zero())
        sups[nx] = rep.interior_sup
    assert 1.4 <= sups[41] / sups[81] <= 2.8


def test_residual_certificate_matches_report(small_solution, params):
    """assemble_residual recomputes exactly what the solver reported."""
    rep = assemble_residual(small_solution.field, small_solution.grid, params,
                            PiBox.symmetric(5.0, n=11))
    r = small_solution.report
    assert rep.interior_sup == r.residual_interior
    assert rep.boundary.face1_sup == r.residual_b1
    assert rep.boundary.face2_sup == r.residual_b2
    assert rep.boundary.corner_sum_sup == r.residual_corner
    assert rep.boundary.ymax_sup == r.residual_ymax
    assert rep.boundary.dirichlet_sup == r.residual_dirichlet
    assert rep.field.shape == small_solution.field.shape


def test_converged_solve_meets_tolerance(small_solution):
    r = small_solution.report
    for v in (r.residual_interior, r.residual_b1, r.residual_b2,
              r.residual_corner, r.residual_ymax, r.residual_dirichlet):
        assert v <= r.tol
    assert r.diag_dominance_ok
    assert r.dominance_violation_frac == 0.0
    assert r.dominance_min_margin >= 0.0  # weak dominance is enough
    assert r.final_omega <= 1.0
    assert r.residual_history[-1] <= r.tol


def test_total_sup_is_max_of_parts(small_solution, params):
    rep = assemble_residual(small_solution.field, small_solution.grid, params,
                            PiBox.symmetric(5.0, n=11))
    b = rep.boundary
    assert rep.total_sup == max(rep.interior_sup, b.face1_sup, b.face2_sup,
                                b.corner_sum_sup, b.ymax_sup, b.dirichlet_sup)
    assert rep.interior_mean <= rep.interior_sup


def test_zero_field_dirichlet_residual(frictionless):
    g = build_grid(frictionless, 11, 5, 5, 1.0)
    rep = boundary_residuals(np.zeros((11, 5, 5)), g, frictionless)
    assert rep.dirichlet_sup == 1.0  # |0 - 1| at the ruin face
    assert rep.face1_sup == 0.0 and rep.ymax_sup == 0.0


def test_iteration_budget_flags_not_raises(params):
    cfg = SolverConfig(pi_set=PiBox.symmetric(5.0, n=11), nx=21, ny1=5, ny2=5,
                       max_iters=1)
    sol = howard_solve(params, cfg)
    assert sol.report.flagged
    assert not sol.report.converged
    assert sol.report.iterations == 1
    assert np.all(np.isfinite(sol.field))


def test_extract_policy_recovers_frictionless_argmax(frictionless):
    """On the sampled frictionless value the per-node argmax over a wide
    lattice must land within one lattice pitch (0.75) of the closed-form
    policy, away from the Dirichlet faces."""
    g = build_grid(frictionless, 41, 5, 5, 1.0)
    phi = np.broadcast_to(
        frictionless_value(g.x, frictionless)[:, None, None], (41, 5, 5)
    ).copy()
    pol = extract_policy(phi, g, frictionless, PiBox.symmetric(15.0, n=41),
                         ThetaSet.zero())
    for i in range(14, 28):
        want = frictionless_policy(g.x[i], frictionless)
        assert np.abs(pol.pi[i, 2, 2] - want).max() <= 0.8
    assert np.all(pol.theta == 0.0)


def test_policy_field_lookup(small_solution):
    pol = small_solution.policy
    g = pol.grid
    # node queries reproduce stored values
    for i, j, k in ((0, 0, 0), (20, 4, 4), (40, 8, 8), (7, 3, 5)):
        got = pol.pi_at(g.x[i], g.y1[j], g.y2[k])
        assert np.array_equal(got, pol.pi[i, j, k])
    # queries beyond the box clamp to the nearest corner
    got = pol.pi_at(g.x[-1] + 100.0, g.y1[-1] + 50.0, g.y2[-1] + 50.0)
    assert np.array_equal(got, pol.pi[-1, -1, -1])
    got = pol.pi_at(g.x[0] - 100.0, -5.0, -5.0)
    assert np.array_equal(got, pol.pi[0, 0, 0])
    # interpolated values stay admissible
    rng = np.random.default_rng(4)
    xs = rng.uniform(g.x[0], g.x[-1], 200)
    y1 = rng.uniform(0.0, g.y1[-1], 200)
    y2 = rng.uniform(0.0, g.y2[-1], 200)
    vals = pol.pi_at(xs, y1, y2)
    assert vals.shape == (200, 2)
    assert np.all(vals >= pol.pi_set.lo) and np.all(vals <= pol.pi_set.hi)
    th = pol.theta_at(xs, y1, y2)
    assert th.shape == (200, 2)
    assert np.all(np.isfinite(th))


def test_solve_report_json_keys(small_solution):
    d = small_solution.report.to_json_dict()
    assert set(d) == {
        "iterations", "residual_interior", "residual_b1", "residual_b2",
        "diag_dominance_ok", "wall_seconds", "converged", "flagged",
        "sweeps_total", "residual_corner", "residual_ymax",
        "residual_dirichlet", "dominance_violation_frac",
        "dominance_min_margin", "damping_engaged", "final_omega",
        "policy_changes_last", "backend", "tol", "grid_shape", "y_max",
        "residual_history",
    }
    assert d["grid_shape"] == [41, 9, 9]
    assert d["converged"] is True
    assert isinstance(d["residual_history"], list) and d["residual_history"]


def test_solver_config_y_max_resolution(params):
    cfg = SolverConfig(pi_set=PiBox.symmetric(5.0))
    assert cfg.resolve_y_max(params) == default_y_max(params, cfg.pi_set)
    cfg = SolverConfig(pi_set=PiBox.symmetric(5.0), y_max=3.5)
    assert cfg.resolve_y_max(params) == 3.5


def test_fee_coupling_shows_in_the_field(small_solution):
    """With q > 0 the solution genuinely depends on the fund positions:
    the y-spread at mid-wealth dwarfs the solver tolerance."""
    mid = small_solution.field[20]
    spread = float(mid.max() - mid.min())
    assert spread > 100.0 * small_solution.report.tol
    # value still decreases in wealth at every (y1, y2)
    assert np.diff(small_solution.field, axis=0).max() <= 1e-9
