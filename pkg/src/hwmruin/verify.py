"""Executable checks tying the solver and simulator to their known limits.

Five families: closed-form reductions (frictionless and no-investment),
the value bracket between them, Monte-Carlo/PDE cross-validation under
the extracted feedback controls, and y-domain truncation sensitivity.
Each check returns a result row (measured quantity vs tolerance); the
suite runner never skips a registered check silently.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from ._kernels_np import _interp_np
from .model import (
    ModelParams,
    PiBox,
    ThetaSet,
    frictionless_policy,
    frictionless_value,
    no_invest_value,
    validate_params,
)
from .simulate import (
    ConstantPolicy,
    SimConfig,
    Status,
    TablePolicy,
    estimate_objective,
    path_seeds,
    simulate_path,
    watermark_report,
)
from .solver import Grid, HJBSolution, SolverConfig, howard_solve

__all__ = [
    "CheckResult",
    "VerifyReport",
    "sandwich_check",
    "reduction_check_frictionless",
    "reduction_check_noinvest",
    "mc_crosscheck",
    "watermark_check",
    "truncation_sensitivity",
    "run_suite",
    "QUICK_CHECKS",
    "FULL_CHECKS",
]


@dataclass(eq=False)
class CheckResult:
    name: str
    passed: bool
    measured: float
    tolerance: float
    detail: str = ""

    def to_json_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "measured": self.measured,
            "tolerance": self.tolerance,
            "detail": self.detail,
        }


@dataclass(eq=False)
class VerifyReport:
    suite: str
    checks: list = field(default_factory=list)
    wall_seconds: float = 0.0

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failing(self) -> list:
        return [c.name for c in self.checks if not c.passed]

    def to_json_dict(self) -> dict:
        return {
            "schema_version": 1,
            "suite": self.suite,
            "all_passed": self.all_passed,
            "n_checks": len(self.checks),
            "wall_seconds": self.wall_seconds,
            "checks": [c.to_json_dict() for c in self.checks],
        }

    def text_table(self) -> str:
        w = max((len(c.name) for c in self.checks), default=4)
        lines = [f"suite: {self.suite}   checks: {len(self.checks)}"]
        for c in self.checks:
            mark = "PASS" if c.passed else "FAIL"
            lines.append(
                f"{mark}  {c.name:<{w}}  measured={c.measured:<12.5g} "
                f"tol={c.tolerance:<12.5g} {c.detail}"
            )
        verdict = "ALL PASSED" if self.all_passed else "FAILED: " + ", ".join(self.failing())
        lines.append(verdict)
        return "\n".join(lines)


def _field_at(sol: HJBSolution, x: float, y1: float, y2: float) -> float:
    ix, wx, i1, w1, i2, w2 = sol.policy._locate(x, y1, y2)
    return float(_interp_np(sol.field[..., None], ix, i1, i2, wx, w1, w2, 0))


# -- bracket ----------------------------------------------------------------


def sandwich_check(field_arr: np.ndarray, p: ModelParams, grid: Grid, tol: float = 2e-2) -> CheckResult:
    """Value must sit between the frictionless floor and the no-investment
    ceiling at every node, up to tol."""
    lo = frictionless_value(grid.x, p)[:, None, None]
    hi = no_invest_value(grid.x, p)[:, None, None]
    lo_viol = float((lo - field_arr).max())
    hi_viol = float((field_arr - hi).max())
    worst = max(lo_viol, hi_viol, 0.0)
    return CheckResult(
        name="sandwich",
        passed=worst <= tol,
        measured=worst,
        tolerance=tol,
        detail=f"lower_viol={lo_viol:.3g} upper_viol={hi_viol:.3g}",
    )


# -- closed-form reductions -------------------------------------------------


def _strip_fees(p: ModelParams) -> ModelParams:
    return ModelParams(
        r=p.r, c=p.c, ruin_level=p.ruin_level, default_rate=p.default_rate,
        mu=p.mu, sigma=p.sigma, mu_b=p.mu_b, sigma_b=p.sigma_b,
        q=(0.0, 0.0), eps=p.eps,
    )


def _covering_pi_box(p: ModelParams, base: PiBox, n: int = 41) -> PiBox:
    # widen the box until it contains the optimal frictionless policy range
    pr = frictionless_policy(p.ruin_level, p)
    half = max(float(np.abs(base.lo).max()), float(np.abs(base.hi).max()))
    half = max(half, 1.2 * float(np.abs(pr).max()))
    half = float(math.ceil(half))
    return PiBox.symmetric(half, n=n)


def reduction_check_frictionless(p: ModelParams, cfg: SolverConfig) -> list[CheckResult]:
    """Strip fees and ambiguity; the solve must reproduce the one-dimensional
    power solution, with first-order behavior under x-refinement."""
    p0 = _strip_fees(p)
    box = _covering_pi_box(p0, cfg.pi_set)
    pr = frictionless_policy(p0.ruin_level, p0)
    contained = bool(np.all(pr >= box.lo) and np.all(pr <= box.hi))

    errs = []
    sols = []
    for nx in (cfg.nx, 2 * cfg.nx - 1):
        c = SolverConfig(
            pi_set=box, theta_set=ThetaSet.zero(),
            nx=nx, ny1=cfg.ny1, ny2=cfg.ny2, y_max=cfg.y_max,
            tol=cfg.tol, max_iters=cfg.max_iters, max_sweeps=cfg.max_sweeps,
        )
        sol = howard_solve(p0, c)
        exact = frictionless_value(sol.grid.x, p0)[:, None, None]
        errs.append(float(np.abs(sol.field - exact).max()))
        sols.append(sol)
    order = math.log2(errs[0] / errs[1]) if errs[1] > 0 else float("inf")
    f = sols[0].field
    y_spread = float(np.abs(f - f[:, :1, :1]).max())
    return [
        CheckResult("frictionless_sup", errs[0] <= 2e-2, errs[0], 2e-2,
                    detail=f"nx={cfg.nx} box_half={box.hi[0]:g}"),
        CheckResult("frictionless_order", 0.7 <= order <= 1.3, order, 1.3,
                    detail=f"errs={errs[0]:.3g}->{errs[1]:.3g}"),
        CheckResult("frictionless_y_invariance", y_spread <= 5e-3, y_spread, 5e-3),
        CheckResult("frictionless_pi_range", contained, 0.0 if contained else 1.0, 0.5,
                    detail=f"pi_at_floor=({pr[0]:.2f},{pr[1]:.2f})"),
    ]


def reduction_check_noinvest(p: ModelParams, cfg: SolverConfig) -> list[CheckResult]:
    """Pin the portfolio at zero; the solve must reproduce the pure
    consumption-drawdown ruin probability."""
    p0 = _strip_fees(p)
    c = SolverConfig(
        pi_set=PiBox.zero(), theta_set=ThetaSet.zero(),
        nx=cfg.nx, ny1=cfg.ny1, ny2=cfg.ny2, y_max=cfg.y_max,
        tol=cfg.tol, max_iters=cfg.max_iters, max_sweeps=cfg.max_sweeps,
    )
    sol = howard_solve(p0, c)
    exact = no_invest_value(sol.grid.x, p0)
    err = float(np.abs(sol.field - exact[:, None, None]).max())
    face_err = max(
        float(np.abs(sol.field[0] - 1.0).max()),
        float(np.abs(sol.field[-1]).max()),
    )
    # exponent from the middle third of the x-range, against lambda_d / r
    nx = sol.grid.x.size
    sl = slice(nx // 3, 2 * nx // 3)
    lx = np.log(p0.c - p0.r * sol.grid.x[sl])
    lf = np.log(sol.field[sl, 0, 0])
    slope = float(np.polyfit(lx, lf, 1)[0])
    target = p0.default_rate / p0.r
    rel = abs(slope - target) / target
    return [
        CheckResult("noinvest_sup", err <= 1e-2, err, 1e-2, detail=f"nx={cfg.nx}"),
        CheckResult("noinvest_faces", face_err == 0.0, face_err, 0.0,
                    detail="Dirichlet rows exact"),
        CheckResult("noinvest_slope", rel <= 0.05, rel, 0.05,
                    detail=f"slope={slope:.4f} target={target:.4f}"),
    ]


# -- Monte-Carlo cross-validation --------------------------------------------


def mc_crosscheck(
    sol: HJBSolution,
    p: ModelParams,
    probes,
    simcfg: SimConfig,
    c_disc: float = 1.0,
) -> list[CheckResult]:
    """Simulate the extracted feedback controls from each probe state and
    compare with the grid value there, within 3 standard errors plus a
    discretization allowance proportional to the mesh."""
    g = sol.grid
    h = g.hx + g.hy1 + g.hy2
    pol = TablePolicy.from_solution(sol.policy)
    out = []
    for k, (x0, y01, y02) in enumerate(probes, start=1):
        if not (g.x[0] < x0 < g.x[-1]) or not (0.0 <= y01 <= g.y1[-1]) or not (0.0 <= y02 <= g.y2[-1]):
            raise ValueError(f"probe ({x0}, {y01}, {y02}) lies outside the grid")
        est = estimate_objective(x0, (y01, y02), pol, p, simcfg)
        ref = _field_at(sol, x0, y01, y02)
        diff = abs(est.value - ref)
        tol = 3.0 * est.stderr + c_disc * h
        out.append(CheckResult(
            f"mc_probe_{k}", diff <= tol, diff, tol,
            detail=f"x0={x0:g} mc={est.value:.5f}+-{est.stderr:.5f} pde={ref:.5f}",
        ))
    return out


def mc_anchor_noinvest(p: ModelParams, simcfg: SimConfig) -> CheckResult:
    """No investing from x0=30: closed-form ruin probability 0.25 for the
    canonical rates; 3-SE agreement."""
    p0 = _strip_fees(p)
    x0 = 30.0
    ref = float(no_invest_value(x0, p0))
    est = estimate_objective(x0, (0.0, 0.0), ConstantPolicy((0, 0), (0, 0)), p0, simcfg)
    diff = abs(est.value - ref)
    tol = 3.0 * est.stderr
    return CheckResult(
        "mc_anchor_noinvest", diff <= tol, diff, tol,
        detail=f"mc={est.value:.5f}+-{est.stderr:.5f} ref={ref:.5f}",
    )


# -- pathwise fee mechanics ---------------------------------------------------


def watermark_scan(
    x0: float,
    y0,
    pi,
    p: ModelParams,
    simcfg: SimConfig,
    n_paths: int,
    block: int = 512,
) -> tuple[float, float, int, int]:
    """Stepwise watermark audit over many paths at once.

    Runs the constant-policy dynamics under the standard per-path RNG
    protocol and tracks, without storing trajectories, the largest
    violation of wm = max(wm_0, running max of performance) and the
    largest |Y| right after a fee step. Returns (identity_resid,
    complementarity_worst, n_fee_steps, n_paths_with_fees).
    """
    d = validate_params(p)
    pi = np.asarray(pi, dtype=float).reshape(2)
    y0 = np.asarray(y0, dtype=float).reshape(2)
    seeds = path_seeds(simcfg.seed, n_paths)
    dt, sqdt = simcfg.dt, math.sqrt(simcfg.dt)
    sg = d.sigma_gap
    a = d.mu_gap + 0.0  # theta = 0 in the audit
    gy = np.array([
        [pi[0] * sg[0, 0], pi[0] * sg[0, 1]],
        [pi[1] * sg[1, 0], pi[1] * sg[1, 1]],
    ])
    bx0 = float(pi @ d.mu_excess)
    gx = p.sigma.T @ pi
    q = np.asarray(p.q, dtype=float)

    resid = 0.0
    comp = 0.0
    fee_steps = 0
    fee_paths = 0
    for lo in range(0, n_paths, 4096):
        sub = seeds[lo: lo + 4096]
        m = sub.size
        rngs = [np.random.RandomState(int(s)) for s in sub]
        tau = np.array([-math.log1p(-r.random_sample()) / p.default_rate for r in rngs])
        nst = np.floor(np.minimum(tau, simcfg.t_max) / dt).astype(np.int64)
        x = np.full(m, float(x0))
        y = np.tile(y0, (m, 1))
        wm = y0 + np.zeros((m, 2))
        runmax = np.tile(y0, (m, 1))
        hadfee = np.zeros(m, dtype=bool)
        alive = nst > 0
        k = 0
        kmax = int(nst.max()) if m else 0
        while k < kmax and alive.any():
            kb = min(block, kmax - k)
            z = np.zeros((m, kb, 2))
            for i in np.nonzero(alive)[0]:
                take = min(kb, int(nst[i]) - k)
                if take > 0:
                    z[i, :take] = rngs[i].standard_normal(2 * take).reshape(take, 2)
            for j in range(kb):
                step = alive & (k + j < nst)
                if not step.any():
                    break
                dw = sqdt * z[:, j]
                xn = x + (p.r * x - p.c + bx0) * dt + dw @ gx
                yt = y - (pi[None, :] * (a[None, :] * dt) + dw @ gy.T)
                ds = np.maximum(0.0, -yt)
                yn = yt + ds
                xn = xn - (ds / (1.0 + q)) @ q
                sel = step[:, None]
                x = np.where(step, xn, x)
                y = np.where(sel, yn, y)
                wm = np.where(sel, wm + ds, wm)
                perf = wm - y
                runmax = np.where(sel, np.maximum(runmax, perf), runmax)
                resid = max(resid, float(np.abs((wm - runmax))[sel[:, 0]].max(initial=0.0)))
                hit = (ds > 0.0) & sel
                if hit.any():
                    comp = max(comp, float(np.abs(y[hit]).max()))
                    fee_steps += int(np.count_nonzero(hit))
                    hadfee |= hit.any(axis=1)
                alive = alive & ~(step & (x <= p.ruin_level))
            k += kb
        fee_paths += int(np.count_nonzero(hadfee))
    return resid, comp, fee_steps, fee_paths


def watermark_check(p: ModelParams, simcfg: SimConfig, n_paths: int = 200) -> list[CheckResult]:
    """Reflected paths must satisfy the watermark identity exactly and only
    pay fees at the watermark. A handful of paths run through the stored
    single-path simulator; the bulk audit is the vectorized scan."""
    pol = ConstantPolicy((3.0, 2.0), (0.0, 0.0))
    x0 = 0.5 * (p.ruin_level + p.x_upper)
    y0 = (0.3, 0.2)
    resid = 0.0
    comp = 0.0
    mono_ok = True
    for s in path_seeds(simcfg.seed, min(n_paths, 20)):
        tr = simulate_path(x0, y0, pol, p, simcfg, int(s))
        rep = watermark_report(tr, p)
        resid = max(resid, float(rep.identity_resid.max()))
        comp = max(comp, rep.complementarity_worst)
        mono_ok = mono_ok and bool(rep.monotone.all()) and rep.y_min >= 0.0
    sresid, scomp, fee_steps, fee_paths = watermark_scan(
        x0, y0, pol.pi, p, simcfg, n_paths
    )
    resid = max(resid, sresid)
    comp = max(comp, scomp)
    return [
        CheckResult("watermark_identity", resid < 1e-10 and mono_ok, resid, 1e-10,
                    detail=f"paths={n_paths} fee_steps={fee_steps}"),
        CheckResult("watermark_complementarity", comp == 0.0, comp, 0.0,
                    detail=f"paths_with_fees={fee_paths}"),
    ]


# -- domain truncation --------------------------------------------------------


def truncation_sensitivity(p: ModelParams, cfg: SolverConfig) -> CheckResult:
    """Re-solve with the y-domain doubled (keeping the original nodes as a
    subset) and compare on the original box."""
    ym = cfg.resolve_y_max(p)
    c1 = SolverConfig(
        pi_set=cfg.pi_set, theta_set=cfg.theta_set,
        nx=cfg.nx, ny1=cfg.ny1, ny2=cfg.ny2, y_max=ym,
        tol=cfg.tol, max_iters=cfg.max_iters, max_sweeps=cfg.max_sweeps,
    )
    c2 = SolverConfig(
        pi_set=cfg.pi_set, theta_set=cfg.theta_set,
        nx=cfg.nx, ny1=2 * (cfg.ny1 - 1) + 1, ny2=2 * (cfg.ny2 - 1) + 1, y_max=2 * ym,
        tol=cfg.tol, max_iters=cfg.max_iters, max_sweeps=cfg.max_sweeps,
    )
    s1 = howard_solve(p, c1)
    s2 = howard_solve(p, c2)
    diff = float(np.abs(s2.field[:, : cfg.ny1, : cfg.ny2] - s1.field).max())
    return CheckResult(
        "truncation_sensitivity", diff <= 5e-3, diff, 5e-3,
        detail=f"y_max={ym:.3g} doubled, node-subset comparison",
    )


# -- suite runner -------------------------------------------------------------

QUICK_CHECKS = (
    "sandwich",
    "frictionless_sup", "frictionless_order", "frictionless_y_invariance",
    "frictionless_pi_range",
    "noinvest_sup", "noinvest_faces", "noinvest_slope",
    "watermark_identity", "watermark_complementarity",
)
FULL_CHECKS = QUICK_CHECKS + (
    "mc_probe_1", "mc_probe_2", "mc_probe_3",
    "mc_anchor_noinvest",
    "truncation_sensitivity",
)


def _default_probes(sol: HJBSolution):
    g = sol.grid
    nx, n1, n2 = g.x.size, g.y1.size, g.y2.size
    j1, j2 = n1 // 4, n2 // 4
    return [
        (float(g.x[nx // 4]), float(g.y1[j1]), float(g.y2[j2])),
        (float(g.x[nx // 2]), float(g.y1[j1]), float(g.y2[j2])),
        (float(g.x[3 * nx // 4]), float(g.y1[j1]), float(g.y2[j2])),
    ]


def run_suite(
    p: ModelParams,
    scfg: SolverConfig,
    simcfg: SimConfig,
    suite: str = "quick",
    c_disc: float = 1.0,
    tol_scale: float = 1.0,
    probes=(),
) -> VerifyReport:
    """Run every check registered for the suite exactly once."""
    validate_params(p)
    t0 = time.perf_counter()
    checks: list[CheckResult] = []

    sol = howard_solve(p, scfg)
    checks.append(sandwich_check(sol.field, p, sol.grid))
    checks.extend(reduction_check_frictionless(p, scfg))
    checks.extend(reduction_check_noinvest(p, scfg))
    wm_paths = 200 if suite == "quick" else 10_000
    wm_cfg = SimConfig(
        n_paths=1, dt=simcfg.dt, t_max=min(simcfg.t_max, 50.0),
        seed=simcfg.seed, n_workers=simcfg.n_workers,
    )
    checks.extend(watermark_check(p, wm_cfg, n_paths=wm_paths))

    if suite == "full":
        pr = list(probes) if probes else _default_probes(sol)
        if len(pr) != 3:
            raise ValueError(f"mc_crosscheck needs exactly 3 probes, got {len(pr)}")
        checks.extend(mc_crosscheck(sol, p, pr, simcfg, c_disc=c_disc))
        checks.append(mc_anchor_noinvest(p, simcfg))
        checks.append(truncation_sensitivity(p, scfg))

    if tol_scale != 1.0:
        for c in checks:
            c.tolerance = c.tolerance * tol_scale
            c.passed = c.measured <= c.tolerance
    expected = QUICK_CHECKS if suite == "quick" else FULL_CHECKS
    got = tuple(c.name for c in checks)
    if got != expected:
        raise RuntimeError(f"check registry mismatch: {got} vs {expected}")
    rep = VerifyReport(suite=suite, checks=checks)
    rep.wall_seconds = time.perf_counter() - t0
    return rep
