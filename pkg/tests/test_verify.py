"""The executable check suite: registry, detection power, reporting."""

import numpy as np
import pytest

from hwmruin import (
    ModelParams,
    PiBox,
    SimConfig,
    SolverConfig,
    ThetaSet,
    frictionless_value,
    no_invest_value,
)
from hwmruin.solver import build_grid
from hwmruin.verify import (
    FULL_CHECKS,
    QUICK_CHECKS,
    mc_crosscheck,
    run_suite,
    sandwich_check,
    truncation_sensitivity,
    watermark_scan,
)


@pytest.fixture(scope="module")
def quick_report(params):
    scfg = SolverConfig(pi_set=PiBox.symmetric(5.0, n=11), nx=41, ny1=9, ny2=9)
    simcfg = SimConfig(n_paths=2000, dt=0.02, t_max=40.0, seed=7)
    return run_suite(params, scfg, simcfg, suite="quick")


def test_quick_suite_all_green(quick_report):
    assert quick_report.all_passed, quick_report.text_table()
    assert tuple(c.name for c in quick_report.checks) == QUICK_CHECKS
    assert quick_report.failing() == []
    assert quick_report.wall_seconds > 0.0


def test_report_json_schema(quick_report):
    d = quick_report.to_json_dict()
    assert d["schema_version"] == 1
    assert d["suite"] == "quick"
    assert d["all_passed"] is True
    assert d["n_checks"] == 10
    for row in d["checks"]:
        assert set(row) == {"name", "passed", "measured", "tolerance", "detail"}


def test_report_text_table(quick_report):
    txt = quick_report.text_table()
    assert txt.endswith("ALL PASSED")
    for name in QUICK_CHECKS:
        assert name in txt
    assert "FAIL" not in txt.replace("ALL PASSED", "")


def test_check_registry():
    assert len(QUICK_CHECKS) == 10
    assert FULL_CHECKS == QUICK_CHECKS + (
        "mc_probe_1", "mc_probe_2", "mc_probe_3",
        "mc_anchor_noinvest", "truncation_sensitivity",
    )


def test_sandwich_detects_displaced_field(frictionless):
    g = build_grid(frictionless, 31, 5, 5, 1.0)
    lo = np.broadcast_to(
        frictionless_value(g.x, frictionless)[:, None, None], (31, 5, 5)
    ).copy()
    hi = np.broadcast_to(
        no_invest_value(g.x, frictionless)[:, None, None], (31, 5, 5)
    ).copy()
    assert sandwich_check(lo, frictionless, g).passed  # floor itself is fine
    assert sandwich_check(hi, frictionless, g).passed  # so is the ceiling
    bad = sandwich_check(lo - 0.05, frictionless, g)
    assert not bad.passed
    assert bad.measured == pytest.approx(0.05, rel=1e-12)


def test_mc_crosscheck_rejects_off_grid_probe(small_solution, params):
    simcfg = SimConfig(n_paths=10, dt=0.02, t_max=5.0, seed=1)
    with pytest.raises(ValueError, match="outside the grid"):
        mc_crosscheck(small_solution, params, [(1000.0, 0.0, 0.0)], simcfg)
    ybad = small_solution.grid.y1[-1] + 1.0
    with pytest.raises(ValueError, match="outside the grid"):
        mc_crosscheck(small_solution, params, [(30.0, ybad, 0.0)], simcfg)


def test_tol_scale_rescales_and_reevaluates(params):
    scfg = SolverConfig(pi_set=PiBox.symmetric(5.0, n=9), nx=21, ny1=5, ny2=5)
    simcfg = SimConfig(n_paths=200, dt=0.02, t_max=20.0, seed=3)
    rep = run_suite(params, scfg, simcfg, suite="quick", tol_scale=0.0)
    assert not rep.all_passed
    assert "frictionless_sup" in rep.failing()
    # a measured-zero check survives even a zero tolerance
    faces = {c.name: c for c in rep.checks}["noinvest_faces"]
    assert faces.passed and faces.measured == 0.0
    assert "FAILED:" in rep.text_table()


def test_truncation_insensitive_without_funds(frictionless):
    cfg = SolverConfig(pi_set=PiBox.zero(), theta_set=ThetaSet.zero(),
                       nx=41, ny1=5, ny2=5)
    res = truncation_sensitivity(frictionless, cfg)
    assert res.passed
    assert res.measured <= 1e-5  # value has no y-dependence to cut off


def test_truncation_more_severe_when_tighter(params):
    """Halving the y-domain cannot look less truncated than the default."""
    pi_set = PiBox.symmetric(5.0, n=9)
    ym = SolverConfig(pi_set=pi_set).resolve_y_max(params)
    kw = dict(pi_set=pi_set, nx=21, ny1=5, ny2=5)
    tight = truncation_sensitivity(params, SolverConfig(**kw, y_max=ym / 2))
    base = truncation_sensitivity(params, SolverConfig(**kw, y_max=ym))
    assert tight.measured >= base.measured - 1e-12


def test_full_suite_needs_three_probes(params):
    scfg = SolverConfig(pi_set=PiBox.symmetric(5.0, n=9), nx=21, ny1=5, ny2=5)
    simcfg = SimConfig(n_paths=50, dt=0.02, t_max=10.0, seed=2)
    with pytest.raises(ValueError, match="exactly 3 probes"):
        run_suite(params, scfg, simcfg, suite="full", probes=[(30.0, 0.0, 0.0),
                                                              (40.0, 0.0, 0.0)])


def test_watermark_scan_audits_cleanly(params):
    simcfg = SimConfig(n_paths=1, dt=0.01, t_max=30.0, seed=7)
    resid, comp, fee_steps, fee_paths = watermark_scan(
        30.0, (0.3, 0.2), (3.0, 2.0), params, simcfg, 300
    )
    assert resid == 0.0
    assert comp == 0.0
    assert fee_steps > 0
    assert 0 < fee_paths <= 300
