"""Closed forms and local HJBI algebra against hand-computed oracles.

The canonical market gives exact hand values: cov = [[.04,.01],[.01,.025]],
det 9e-4, half-squared-Sharpe 685/18000, and the power-law exponents are
checkable through the defining quadratic and the ODE they came from.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hwmruin import (
    ModelParams,
    PiBox,
    ThetaSet,
    control_drift,
    diffusion_matrix,
    fee_face_operator,
    frictionless_policy,
    frictionless_value,
    hamiltonian,
    inner_sup_theta,
    kappa_exponent,
    no_invest_value,
    validate_params,
)

# larger root of 0.02 k^2 - (0.06 + 685/18000) k + 0.04 = 0
KAPPA = 4.453714408021056


def test_derived_hand_values(frictionless):
    d = validate_params(frictionless)
    assert d.cov == pytest.approx(np.array([[0.04, 0.01], [0.01, 0.025]]), rel=1e-14)
    # adjugate by hand: det = .04*.025 - .01^2 = 9e-4
    m = np.array([0.05, 0.03])
    inv = np.array([[0.025, -0.01], [-0.01, 0.04]]) / 9e-4
    assert d.cov_inv == pytest.approx(inv, rel=1e-13)
    assert d.mu_excess == pytest.approx(m, rel=1e-14)
    assert d.half_sharpe2 == pytest.approx(0.5 * m @ inv @ m, rel=1e-13)
    assert d.half_sharpe2 == pytest.approx(0.03805555555555556, rel=1e-13)
    assert d.kappa == pytest.approx(KAPPA, rel=1e-13)


def test_kappa_solves_quadratic(frictionless):
    p = frictionless
    d = validate_params(p)
    k = d.kappa
    resid = p.r * k * k - (p.r + p.default_rate + d.half_sharpe2) * k + p.default_rate
    assert abs(resid) < 1e-12
    assert k > max(1.0, p.default_rate / p.r)


def test_kappa_known_points():
    # S = 0.09: (0.15 + sqrt(0.0225 - 0.0032)) / 0.04
    assert kappa_exponent(0.02, 0.04, 0.09) == pytest.approx(7.22311099736245, rel=1e-13)
    # degenerate S = 0 factors exactly
    assert kappa_exponent(0.02, 0.04, 0.0) == 2.0
    assert kappa_exponent(0.02, 0.01, 0.0) == 1.0
    with pytest.raises(ValueError):
        kappa_exponent(0.0, 0.04, 0.1)
    with pytest.raises(ValueError):
        kappa_exponent(0.02, 0.04, -1e-9)


def test_kappa_from_unit_sigma_market():
    # mu chosen so the excess drift is (sqrt(0.18), 0) and S = 0.09 exactly
    p = ModelParams(
        r=0.02, c=1.0, ruin_level=10.0, default_rate=0.04,
        mu=(0.02 + math.sqrt(0.18), 0.02), sigma=((1.0, 0.0), (0.0, 1.0)),
    )
    d = validate_params(p)
    assert d.half_sharpe2 == pytest.approx(0.09, rel=1e-14)
    assert d.kappa == pytest.approx(7.22311099736245, rel=1e-13)


def test_value_ode_identity(frictionless):
    """lam*U + S*(U')^2/U'' + (c - r*x)*U' = 0 with analytic derivatives."""
    p = frictionless
    d = validate_params(p)
    k, S, lam = d.kappa, d.half_sharpe2, p.default_rate
    span = p.c - p.r * p.ruin_level
    x = np.linspace(p.ruin_level, p.x_upper, 102)[1:-1]
    v = (p.c - p.r * x) / span
    u = v ** k
    du = -k * v ** (k - 1.0) * p.r / span
    d2u = k * (k - 1.0) * v ** (k - 2.0) * (p.r / span) ** 2
    resid = lam * u + S * du * du / d2u + (p.c - p.r * x) * du
    assert np.abs(resid).max() < 1e-10
    assert np.allclose(u, frictionless_value(x, p), rtol=1e-14)


def test_frictionless_value_shape(frictionless):
    p = frictionless
    x = np.linspace(p.ruin_level, p.x_upper, 201)
    u = frictionless_value(x, p)
    assert u[0] == 1.0
    assert u[-1] == 0.0
    assert np.all(np.diff(u) < 0.0)
    assert np.all(np.diff(u, 2) > 0.0)  # convex
    assert float(frictionless_value(30.0, p)) == pytest.approx(
        0.04563503322568258, rel=1e-13
    )
    with pytest.raises(ValueError):
        frictionless_value(5.0, p)


def test_no_invest_value_exact(frictionless):
    p = frictionless
    # ratio (1 - .6)/(1 - .2) = 0.5 and lam/r = 2 are float-exact, so P(30) is
    assert float(no_invest_value(30.0, p)) == 0.25
    assert float(no_invest_value(p.ruin_level, p)) == 1.0
    assert float(no_invest_value(p.x_upper, p)) == 0.0
    # strict bracket away from the endpoints: kappa > lam/r
    x = np.linspace(p.ruin_level, p.x_upper, 101)[1:-1]
    assert np.all(frictionless_value(x, p) < no_invest_value(x, p))


def test_frictionless_policy_hand_value(frictionless):
    p = frictionless
    d = validate_params(p)
    inv = np.array([[0.025, -0.01], [-0.01, 0.04]]) / 9e-4
    base = inv @ np.array([0.05, 0.03]) / (p.r * (KAPPA - 1.0))
    got = frictionless_policy(10.0, p)
    assert got == pytest.approx((p.c - p.r * 10.0) * base, rel=1e-12)
    assert got == pytest.approx([12.22516318, 9.00801498], rel=1e-8)
    # linear in the distance to the safe level, zero at c/r
    assert frictionless_policy(p.x_upper, p) == pytest.approx([0.0, 0.0], abs=1e-15)
    mid = frictionless_policy(30.0, p)
    assert mid == pytest.approx(0.5 * got, rel=1e-12)
    arr = frictionless_policy(np.array([10.0, 30.0]), p, d)
    assert arr.shape == (2, 2)
    assert arr[1] == pytest.approx(mid, rel=1e-14)


def test_frictionless_policy_zero_edge():
    p = ModelParams(
        r=0.02, c=1.0, ruin_level=10.0, default_rate=0.04,
        mu=(0.02, 0.02), sigma=((0.20, 0.0), (0.05, 0.15)),
    )
    assert frictionless_policy(30.0, p) == pytest.approx([0.0, 0.0], abs=0.0)


def test_control_drift_hand_case(params):
    d = validate_params(params)
    # mu_gap = (0.04, 0.03); pi = (1, 0), theta = 0
    b = control_drift((1.0, 0.0), (0.0, 0.0), params, d)
    assert b == pytest.approx([0.05, -0.04, 0.0], rel=1e-14)
    # affine in theta
    th = np.array([0.3, -0.7])
    b0 = control_drift((2.0, -1.0), (0.0, 0.0), params, d)
    b1 = control_drift((2.0, -1.0), th, params, d)
    b2 = control_drift((2.0, -1.0), 2.0 * th, params, d)
    assert b2 - b0 == pytest.approx(2.0 * (b1 - b0), rel=1e-12)


def test_diffusion_matrix_degenerate(params, frictionless):
    d = validate_params(params)
    s = diffusion_matrix((3.0, -2.0), params, d)
    w = np.linalg.eigvalsh(s)
    assert w.min() >= -1e-12
    assert w[0] <= 1e-12 * max(1.0, w[-1])  # rank <= 2
    assert np.allclose(s, s.T)
    assert diffusion_matrix((0.0, 0.0), params, d) == pytest.approx(np.zeros((3, 3)), abs=0.0)
    # sigma_b = sigma kills the y rows entirely
    d0 = validate_params(frictionless)
    s0 = diffusion_matrix((3.0, -2.0), frictionless, d0)
    assert np.all(s0[1:, :] == 0.0) and np.all(s0[:, 1:] == 0.0)


def test_theta_gain_is_drift_derivative(params):
    """g_i must equal b(pi, e_i)^T grad - b(pi, 0)^T grad (b is affine)."""
    p2 = ModelParams(
        r=0.02, c=1.0, ruin_level=10.0, default_rate=0.04,
        mu=(0.07, 0.05), sigma=((0.20, 0.0), (0.05, 0.15)),
        mu_b=(0.03, 0.02), sigma_b=((0.10, 0.0), (0.02, 0.08)), q=(0.2, 0.2),
    )
    d = validate_params(p2)
    from hwmruin.model import theta_gain_vec

    pi = np.array([1.5, -2.0])
    grad = np.array([0.7, -0.3, 0.4])
    g = theta_gain_vec(pi, grad, p2, d)
    b0 = control_drift(pi, (0.0, 0.0), p2, d)
    for i, e in enumerate(np.eye(2)):
        gi = float((control_drift(pi, e, p2, d) - b0) @ grad)
        assert g[i] == pytest.approx(gi, rel=1e-12)
    # sigma_b = sigma: g collapses to sigma^T pi * phi_x
    df = validate_params(ModelParams(**{
        "r": 0.02, "c": 1.0, "ruin_level": 10.0, "default_rate": 0.04,
        "mu": (0.07, 0.05), "sigma": ((0.20, 0.0), (0.05, 0.15)),
    }))
    pf = ModelParams(r=0.02, c=1.0, ruin_level=10.0, default_rate=0.04,
                     mu=(0.07, 0.05), sigma=((0.20, 0.0), (0.05, 0.15)))
    g2 = theta_gain_vec((1.0, 2.0), (2.0, 5.0, -3.0), pf, df)
    assert g2 == pytest.approx([0.6, 0.6], rel=1e-14)


def test_inner_sup_theta_closed_form():
    g = np.array([1.0, -2.0])
    th, val = inner_sup_theta(g, 0.5, ThetaSet())
    assert th == pytest.approx([0.5, -1.0], rel=1e-15)
    assert val == pytest.approx(1.25, rel=1e-15)
    # coordinatewise clamp on a box
    th, val = inner_sup_theta(g, 0.5, ThetaSet.box((-0.1, -0.1), (0.1, 0.1)))
    assert th == pytest.approx([0.1, -0.1], rel=1e-15)
    assert val == pytest.approx(0.28, rel=1e-13)
    # radial projection on a ball
    th, val = inner_sup_theta(g, 0.5, ThetaSet.ball(0.5))
    assert np.hypot(*th) == pytest.approx(0.5, rel=1e-13)
    assert th == pytest.approx(0.5 * g / math.sqrt(5.0), rel=1e-13)
    # zero set pays and gains nothing
    th, val = inner_sup_theta(g, 0.5, ThetaSet.zero())
    assert np.all(th == 0.0) and val == 0.0
    with pytest.raises(ValueError):
        inner_sup_theta(g, 0.0, ThetaSet())


def test_inner_sup_theta_vs_grid_search():
    g = np.array([1.0, -2.0])
    eps = 0.5
    ax = np.linspace(-3.0, 3.0, 1501)
    t1, t2 = np.meshgrid(ax, ax, indexing="ij")
    obj = t1 * g[0] + t2 * g[1] - (t1 * t1 + t2 * t2) / (2.0 * eps)
    _, val = inner_sup_theta(g, eps, ThetaSet())
    assert val >= float(obj.max()) - 1e-12
    assert val == pytest.approx(float(obj.max()), abs=1e-4)


def test_hamiltonian_vanishes_at_frictionless_jet(frictionless):
    """F = 0 at the analytic jet of U when the argmax pi is a candidate."""
    p = frictionless
    d = validate_params(p)
    span = p.c - p.r * p.ruin_level
    for x in (15.0, 30.0, 45.0):
        v = (p.c - p.r * x) / span
        k = d.kappa
        u = v ** k
        du = -k * v ** (k - 1.0) * p.r / span
        d2u = k * (k - 1.0) * v ** (k - 2.0) * (p.r / span) ** 2
        grad = np.array([du, 0.0, 0.0])
        hess = np.zeros((3, 3))
        hess[0, 0] = d2u
        pi_star = frictionless_policy(x, p, d)
        cands = np.vstack([PiBox.symmetric(15.0, n=31).lattice(), pi_star])
        f, pi_got, th_got = hamiltonian(x, (u, grad, hess), p, d, cands, ThetaSet.zero())
        assert abs(f) < 1e-8
        assert pi_got == pytest.approx(pi_star, abs=1e-12)
        assert np.all(th_got == 0.0)


def test_hamiltonian_noinvest_reduction(frictionless):
    """Candidates {0} strip the controlled terms: F = lam*phi - (r*x - c)*phi_x."""
    p = frictionless
    d = validate_params(p)
    rng = np.random.default_rng(7)
    for _ in range(5):
        x = float(rng.uniform(11.0, 49.0))
        phi = float(rng.uniform(0.0, 1.0))
        grad = rng.standard_normal(3)
        hess = rng.standard_normal((3, 3))
        f, pi_got, _ = hamiltonian(x, (phi, grad, hess), p, d, np.zeros((1, 2)), ThetaSet.zero())
        assert f == p.default_rate * phi - (p.r * x - p.c) * grad[0]
        assert np.all(pi_got == 0.0)
    # and it vanishes at the analytic jet of P
    span = p.c - p.r * p.ruin_level
    for x in (20.0, 30.0, 40.0):
        e = p.default_rate / p.r
        v = (p.c - p.r * x) / span
        dP = -e * v ** (e - 1.0) * p.r / span
        f, _, _ = hamiltonian(x, (v ** e, np.array([dP, 0, 0]), np.zeros((3, 3))),
                              p, d, np.zeros((1, 2)), ThetaSet.zero())
        assert abs(f) < 1e-10


def test_hamiltonian_monotone_in_hessian(params):
    d = validate_params(params)
    jet = (0.4, np.array([-0.02, 0.01, -0.03]), np.diag([0.002, 0.001, 0.001]))
    cands = PiBox.symmetric(5.0, n=7).lattice()
    f1, _, _ = hamiltonian(30.0, jet, params, d, cands, ThetaSet())
    bumped = (jet[0], jet[1], jet[2] + 0.5 * np.eye(3))
    f2, _, _ = hamiltonian(30.0, bumped, params, d, cands, ThetaSet())
    assert f2 <= f1 + 1e-12  # Sigma(pi) is PSD, so more convexity never raises F


def test_fee_face_operator_hand_case(params):
    jet = (0.3, np.array([1.0, 1.0, -2.0]), np.zeros((3, 3)))
    assert fee_face_operator(0, jet, params) == pytest.approx(-1.0, rel=1e-15)
    # q*phi_x - (1+q)*phi_y2 = 0.2 + 2.4
    assert fee_face_operator(1, jet, params) == pytest.approx(2.6, rel=1e-15)
    scaled = (0.9, 3.0 * jet[1], np.zeros((3, 3)))
    assert fee_face_operator(0, scaled, params) == pytest.approx(-3.0, rel=1e-15)


def test_validate_params_rejects_bad_inputs():
    good = dict(r=0.02, c=1.0, ruin_level=10.0, default_rate=0.04,
                mu=(0.07, 0.05), sigma=((0.20, 0.0), (0.05, 0.15)))
    with pytest.raises(ValueError, match="ruin_level"):
        validate_params(ModelParams(**{**good, "ruin_level": 60.0}))
    with pytest.raises(ValueError, match="nonsingular"):
        validate_params(ModelParams(**{**good, "sigma": ((0.2, 0.1), (0.4, 0.2))}))
    with pytest.raises(ValueError, match="q"):
        validate_params(ModelParams(**good, q=(-0.1, 0.2)))
    with pytest.raises(ValueError, match="r must"):
        validate_params(ModelParams(**{**good, "r": 0.0}))
    with pytest.raises(ValueError, match="default_rate"):
        validate_params(ModelParams(**{**good, "default_rate": 0.0}))
    with pytest.raises(ValueError, match="eps"):
        validate_params(ModelParams(**good, eps=0.0))


def test_pi_box_lattice_ordering():
    box = PiBox.symmetric(5.0, n=11)
    lat = box.lattice()
    assert lat.shape == (121, 2)
    assert np.all(lat[0] == 0.0)  # smallest norm first
    norms = (lat ** 2).sum(axis=1)
    assert np.all(np.diff(norms) >= 0.0)
    assert PiBox.zero().lattice().tolist() == [[0.0, 0.0]]
    with pytest.raises(ValueError):
        PiBox(lo=(1.0, 0.0), hi=(0.0, 1.0))
    with pytest.raises(ValueError):
        PiBox(lo=(0.0, 0.0), hi=(1.0, 1.0), n=(0, 3))
    assert box.clamp(np.array([9.0, -9.0])) == pytest.approx([5.0, -5.0])


def test_theta_set_validation():
    with pytest.raises(ValueError):
        ThetaSet(kind="weird")
    with pytest.raises(ValueError, match="contain 0"):
        ThetaSet.box((0.1, 0.0), (0.5, 0.5))
    with pytest.raises(ValueError):
        ThetaSet.ball(-1.0)
    assert ThetaSet.zero().project(np.array([3.0, -4.0])) == pytest.approx([0.0, 0.0])
    assert ThetaSet.ball(1.0).project(np.array([3.0, -4.0])) == pytest.approx([0.6, -0.8])
    assert ThetaSet().project(np.array([3.0, -4.0])) == pytest.approx([3.0, -4.0])


@given(
    r=st.floats(1e-3, 0.2),
    lam=st.floats(1e-3, 0.5),
    s=st.floats(0.0, 2.0),
)
@settings(max_examples=200, deadline=None)
def test_kappa_root_property(r, lam, s):
    k = kappa_exponent(r, lam, s)
    assert k >= max(1.0, lam / r) - 1e-9
    resid = r * k * k - (r + lam + s) * k + lam
    scale = max(1.0, r * k * k)
    assert abs(resid) <= 1e-9 * scale


@given(
    g1=st.floats(-5.0, 5.0), g2=st.floats(-5.0, 5.0),
    t1=st.floats(-0.4, 0.4), t2=st.floats(-0.4, 0.4),
    eps=st.floats(0.01, 10.0),
)
@settings(max_examples=200, deadline=None)
def test_inner_sup_dominates_any_admissible_theta(g1, g2, t1, t2, eps):
    ts = ThetaSet.box((-0.4, -0.4), (0.4, 0.4))
    g = np.array([g1, g2])
    _, val = inner_sup_theta(g, eps, ts)
    competitor = t1 * g1 + t2 * g2 - (t1 * t1 + t2 * t2) / (2.0 * eps)
    assert val >= competitor - 1e-10


@given(
    p1=st.floats(-10.0, 10.0), p2=st.floats(-10.0, 10.0),
    z1=st.floats(-1.0, 1.0), z2=st.floats(-1.0, 1.0), z3=st.floats(-1.0, 1.0),
)
@settings(max_examples=200, deadline=None)
def test_diffusion_quadratic_form_nonnegative(params, p1, p2, z1, z2, z3):
    d = validate_params(params)
    s = diffusion_matrix((p1, p2), params, d)
    z = np.array([z1, z2, z3])
    assert float(z @ s @ z) >= -1e-10
