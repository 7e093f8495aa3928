"""Monte Carlo simulation of the fee-paying wealth dynamics.

Each path draws its default time upfront from the exponential clock, then
Euler-steps (X, Y1, Y2) under a feedback policy until ruin, default, or
the horizon t_max. Watermark crossings are resolved by a discrete
Skorokhod step: the overshoot of Y below zero is scaled into a watermark
increment dM = overshoot / (1 + q), wealth pays the fee q*dM, and Y is
reflected back to zero. The estimator averages

    1{ruined before default} - penalty,   penalty = int |theta|^2/(2 eps)

over paths; truncated paths contribute no indicator. Paths are seeded
from per-path substreams of one master seed, so estimates are independent
of worker count, chunking, and backend (see _kernels_nb/_kernels_np).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from . import backend
from ._kernels_np import default_times_np, sim_paths_np
from .model import DerivedParams, ModelParams, PiBox, ThetaSet, validate_params
from .solver import PolicyField, _theta_code

if backend.HAVE_NUMBA:
    from ._kernels_nb import default_times_nb, sim_const_nb, sim_table_nb

__all__ = [
    "Status",
    "SimConfig",
    "PathState",
    "Trajectory",
    "ConstantPolicy",
    "TablePolicy",
    "CallablePolicy",
    "ObjectiveEstimate",
    "WatermarkReport",
    "path_seeds",
    "sample_default_times",
    "euler_step",
    "simulate_path",
    "estimate_objective",
    "watermark_report",
]


class Status(IntEnum):
    ALIVE = 0
    RUINED = 1
    DEFAULTED = 2
    TRUNCATED = 3


@dataclass(eq=False)
class SimConfig:
    n_paths: int = 100_000
    dt: float = 1e-2
    t_max: float = 100.0
    seed: int = 20240901
    n_workers: int = 1

    def validate(self):
        if self.n_paths < 1:
            raise ValueError(f"n_paths must be >= 1, got n_paths={self.n_paths}")
        if not (self.dt > 0.0):
            raise ValueError(f"dt must be > 0, got dt={self.dt}")
        if not (self.t_max > 0.0):
            raise ValueError(f"t_max must be > 0, got t_max={self.t_max}")
        if self.n_workers < 1:
            raise ValueError(f"n_workers must be >= 1, got n_workers={self.n_workers}")


def path_seeds(master_seed: int, n: int) -> np.ndarray:
    """Independent per-path substream seeds, stable across worker counts."""
    return np.asarray(
        np.random.SeedSequence(master_seed).generate_state(n, dtype=np.uint32),
        dtype=np.int64,
    )


def sample_default_times(n: int, rate: float, seed: int) -> np.ndarray:
    """Exponential default times, one per path substream. Matches the first
    draw the path kernels consume, so a simulation with the same master
    seed sees exactly these clocks."""
    if rate <= 0.0:
        raise ValueError(f"rate must be > 0, got {rate}")
    seeds = path_seeds(seed, n)
    out = np.empty(n)
    if backend.HAVE_NUMBA:
        default_times_nb(seeds, rate, out)
    else:
        default_times_np(seeds, rate, out)
    return out


@dataclass(eq=False)
class PathState:
    t: float
    x: float
    y: np.ndarray        # (2,) distances to the watermarks, >= 0
    m: np.ndarray        # (2,) cumulated watermark increments dM
    m_raw: np.ndarray    # (2,) cumulated raw watermark raises (1+q) dM
    penalty: float
    status: Status = Status.ALIVE

    @classmethod
    def initial(cls, x0: float, y0) -> "PathState":
        return cls(
            t=0.0,
            x=float(x0),
            y=np.asarray(y0, dtype=float).reshape(2).copy(),
            m=np.zeros(2),
            m_raw=np.zeros(2),
            penalty=0.0,
        )


def euler_step(s: PathState, pi, theta, dt: float, dw, p: ModelParams, d: DerivedParams) -> PathState:
    """One Euler step with Skorokhod fee resolution; the bulk kernels
    replicate these operations in this order."""
    pi = np.asarray(pi, dtype=float)
    theta = np.asarray(theta, dtype=float)
    dw = np.asarray(dw, dtype=float)
    t1, t2 = float(theta[0]), float(theta[1])
    pi1, pi2 = float(pi[0]), float(pi[1])
    sg = d.sigma_gap
    sig = p.sigma
    q1, q2 = float(p.q[0]), float(p.q[1])

    bx = (
        p.r * s.x - p.c
        + pi1 * (d.mu_excess[0] + sig[0, 0] * t1 + sig[0, 1] * t2)
        + pi2 * (d.mu_excess[1] + sig[1, 0] * t1 + sig[1, 1] * t2)
    )
    gx1 = pi1 * sig[0, 0] + pi2 * sig[1, 0]
    gx2 = pi1 * sig[0, 1] + pi2 * sig[1, 1]
    xt = s.x + bx * dt + gx1 * dw[0] + gx2 * dw[1]
    a1 = d.mu_gap[0] + sg[0, 0] * t1 + sg[0, 1] * t2
    a2 = d.mu_gap[1] + sg[1, 0] * t1 + sg[1, 1] * t2
    y1t = s.y[0] - pi1 * (a1 * dt + sg[0, 0] * dw[0] + sg[0, 1] * dw[1])
    y2t = s.y[1] - pi2 * (a2 * dt + sg[1, 0] * dw[0] + sg[1, 1] * dw[1])
    ds1 = max(0.0, -y1t)
    ds2 = max(0.0, -y2t)
    dm1 = ds1 / (1.0 + q1)
    dm2 = ds2 / (1.0 + q2)
    y1 = y1t + ds1
    y2 = y2t + ds2
    x = xt - (q1 * dm1 + q2 * dm2)
    pen = s.penalty + (t1 * t1 + t2 * t2) * dt / (2.0 * p.eps)
    out = PathState(
        t=s.t + dt,
        x=x,
        y=np.array([y1, y2]),
        m=np.array([s.m[0] + dm1, s.m[1] + dm2]),
        m_raw=np.array([s.m_raw[0] + ds1, s.m_raw[1] + ds2]),
        penalty=pen,
        status=s.status,
    )
    if out.x <= p.ruin_level:
        out.status = Status.RUINED
    return out


@dataclass(eq=False)
class ConstantPolicy:
    pi: np.ndarray
    theta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "pi", np.asarray(self.pi, dtype=float).reshape(2))
        object.__setattr__(self, "theta", np.asarray(self.theta, dtype=float).reshape(2))

    def pi_theta_at(self, x: float, y1: float, y2: float):
        return self.pi, self.theta


@dataclass(eq=False)
class TablePolicy:
    """Feedback controls tabulated on a solver grid."""

    field: PolicyField

    @classmethod
    def from_solution(cls, policy_field: PolicyField) -> "TablePolicy":
        return cls(field=policy_field)

    def pi_theta_at(self, x: float, y1: float, y2: float):
        return self.field.pi_at(x, y1, y2), self.field.theta_at(x, y1, y2)


@dataclass(eq=False)
class CallablePolicy:
    pi_fn: object
    theta_fn: object

    def pi_theta_at(self, x: float, y1: float, y2: float):
        return (
            np.asarray(self.pi_fn(x, y1, y2), dtype=float).reshape(2),
            np.asarray(self.theta_fn(x, y1, y2), dtype=float).reshape(2),
        )


@dataclass(eq=False)
class Trajectory:
    t: np.ndarray
    x: np.ndarray
    y1: np.ndarray
    y2: np.ndarray
    m1: np.ndarray
    m2: np.ndarray
    penalty: np.ndarray
    status: Status
    tau_default: float
    seed: int

    def rows(self):
        """(t, x, y1, y2, m1, m2, penalty, status) per recorded time."""
        n = self.t.size
        names = np.full(n, "alive", dtype=object)
        names[-1] = self.status.name.lower()
        return zip(self.t, self.x, self.y1, self.y2, self.m1, self.m2, self.penalty, names)


def simulate_path(x0: float, y0, policy, p: ModelParams, cfg: SimConfig, seed: int) -> Trajectory:
    """Single stored path under the per-path RNG protocol (one uniform for
    the default clock, two normals per step). With a constant or table
    policy the visited states coincide with the bulk kernels' path for the
    same seed."""
    cfg.validate()
    d = validate_params(p)
    rng = np.random.RandomState(int(seed))
    u = rng.random_sample()
    tau = -math.log1p(-u) / p.default_rate
    horizon = min(tau, cfg.t_max)
    nst = int(np.floor(horizon / cfg.dt))
    s = PathState.initial(x0, y0)
    if s.x <= p.ruin_level:
        s.status = Status.RUINED
        nst = 0
    ts = [0.0]
    xs = [s.x]
    y1s = [s.y[0]]
    y2s = [s.y[1]]
    m1s = [0.0]
    m2s = [0.0]
    pens = [0.0]
    sqdt = math.sqrt(cfg.dt)
    for k in range(nst):
        z1 = rng.standard_normal()
        z2 = rng.standard_normal()
        pi, theta = policy.pi_theta_at(s.x, s.y[0], s.y[1])
        s = euler_step(s, pi, theta, cfg.dt, (sqdt * z1, sqdt * z2), p, d)
        ts.append((k + 1) * cfg.dt)
        xs.append(s.x)
        y1s.append(s.y[0])
        y2s.append(s.y[1])
        m1s.append(s.m[0])
        m2s.append(s.m[1])
        pens.append(s.penalty)
        if s.status == Status.RUINED:
            break
    if s.status != Status.RUINED:
        s.status = Status.DEFAULTED if tau <= cfg.t_max else Status.TRUNCATED
    return Trajectory(
        t=np.array(ts),
        x=np.array(xs),
        y1=np.array(y1s),
        y2=np.array(y2s),
        m1=np.array(m1s),
        m2=np.array(m2s),
        penalty=np.array(pens),
        status=s.status,
        tau_default=tau,
        seed=int(seed),
    )


@dataclass(eq=False)
class ObjectiveEstimate:
    value: float
    stderr: float
    ruin_prob: float
    mean_penalty: float
    n_paths: int
    n_ruined: int
    n_defaulted: int
    n_truncated: int
    backend: str
    wall_seconds: float

    def to_json_dict(self) -> dict:
        return {
            "value": self.value,
            "stderr": self.stderr,
            "ruin_prob": self.ruin_prob,
            "mean_penalty": self.mean_penalty,
            "n_paths": self.n_paths,
            "n_ruined": self.n_ruined,
            "n_defaulted": self.n_defaulted,
            "n_truncated": self.n_truncated,
            "backend": self.backend,
            "wall_seconds": self.wall_seconds,
        }


def _scalar_args(p: ModelParams, d: DerivedParams, cfg: SimConfig):
    sg = d.sigma_gap
    sig = p.sigma
    return (
        p.r, p.c, p.ruin_level, p.default_rate, cfg.t_max, cfg.dt, p.eps,
        d.mu_excess[0], d.mu_excess[1],
        sig[0, 0], sig[0, 1], sig[1, 0], sig[1, 1],
        d.mu_gap[0], d.mu_gap[1],
        sg[0, 0], sg[0, 1], sg[1, 0], sg[1, 1],
        float(p.q[0]), float(p.q[1]),
    )


def estimate_objective(x0: float, y0, policy, p: ModelParams, cfg: SimConfig) -> ObjectiveEstimate:
    """Monte Carlo estimate of the robust objective under a fixed feedback
    policy. Deterministic for a given master seed: identical across
    1/4/8 workers and across the numba/numpy backends."""
    cfg.validate()
    d = validate_params(p)
    y0 = np.asarray(y0, dtype=float).reshape(2)
    n = cfg.n_paths
    seeds = path_seeds(cfg.seed, n)
    contrib = np.empty(n)
    pen = np.empty(n)
    status = np.empty(n, dtype=np.int8)
    tend = np.empty(n)
    t0 = time.perf_counter()
    backend.set_worker_threads(cfg.n_workers)
    scal = _scalar_args(p, d, cfg)

    if isinstance(policy, ConstantPolicy):
        if backend.HAVE_NUMBA:
            sim_const_nb(
                seeds, float(x0), y0[0], y0[1], *scal,
                policy.pi[0], policy.pi[1], policy.theta[0], policy.theta[1],
                contrib, pen, status, tend,
            )
        else:
            dummy = np.zeros(1)
            dummy4 = np.zeros((1, 1, 1, 2))
            sim_paths_np(
                seeds, float(x0), y0[0], y0[1], *scal,
                0, policy.pi, policy.theta,
                dummy, dummy, dummy, dummy4, dummy4,
                0.0, 0.0, 0.0, 0.0, 0, np.zeros(4),
                contrib, pen, status, tend,
            )
    elif isinstance(policy, TablePolicy):
        f = policy.field
        tkind, tpar = _theta_code(f.theta_set)
        args = (
            seeds, float(x0), y0[0], y0[1], *scal,
            f.grid.x, f.grid.y1, f.grid.y2, f.pi, f.theta,
            f.pi_set.lo[0], f.pi_set.lo[1], f.pi_set.hi[0], f.pi_set.hi[1],
            tkind, tpar,
            contrib, pen, status, tend,
        )
        if backend.HAVE_NUMBA:
            sim_table_nb(*args)
        else:
            a = list(args)
            a[25:25] = [1, np.zeros(2), np.zeros(2)]  # mode, unused const slots
            sim_paths_np(*a)
    else:
        # generic feedback policy: reference path loop
        for i in range(n):
            tr = simulate_path(x0, y0, policy, p, cfg, int(seeds[i]))
            status[i] = int(tr.status)
            pen[i] = tr.penalty[-1]
            contrib[i] = (1.0 if tr.status == Status.RUINED else 0.0) - pen[i]
            tend[i] = tr.t[-1]

    wall = time.perf_counter() - t0
    value = float(np.mean(contrib))
    stderr = float(np.std(contrib, ddof=1) / math.sqrt(n)) if n > 1 else float("inf")
    return ObjectiveEstimate(
        value=value,
        stderr=stderr,
        ruin_prob=float(np.mean(status == int(Status.RUINED))),
        mean_penalty=float(np.mean(pen)),
        n_paths=n,
        n_ruined=int(np.count_nonzero(status == int(Status.RUINED))),
        n_defaulted=int(np.count_nonzero(status == int(Status.DEFAULTED))),
        n_truncated=int(np.count_nonzero(status == int(Status.TRUNCATED))),
        backend=backend.backend_name(),
        wall_seconds=wall,
    )


@dataclass(eq=False)
class WatermarkReport:
    """Pathwise watermark diagnostics.

    identity_resid: sup |wm_t - max(y0, running max of performance)| per
    fund, where wm_t = y0 + (1+q) m_t is the watermark implied by the
    stored increments and performance is wm - y. Zero up to float
    roundoff for any correctly reflected path.
    """

    identity_resid: np.ndarray
    monotone: np.ndarray         # bool per fund: m nondecreasing
    y_min: float
    complementarity_worst: float  # largest y right after a fee event

    def passed(self, tol: float = 1e-10) -> bool:
        return (
            bool(np.all(self.identity_resid <= tol))
            and bool(np.all(self.monotone))
            and self.y_min >= -tol
            and self.complementarity_worst <= tol
        )


def watermark_report(traj: Trajectory, p: ModelParams) -> WatermarkReport:
    resid = np.empty(2)
    mono = np.empty(2, dtype=bool)
    comp = 0.0
    for i, (m, y) in enumerate(((traj.m1, traj.y1), (traj.m2, traj.y2))):
        q = float(p.q[i])
        y0 = y[0]
        wm = y0 + (1.0 + q) * m
        perf = wm - y
        oracle = np.maximum.accumulate(np.maximum(perf, y0))
        resid[i] = float(np.abs(wm - oracle).max())
        dm = np.diff(m)
        mono[i] = bool(dm.min() >= 0.0) if dm.size else True
        hit = dm > 0.0
        if hit.any():
            comp = max(comp, float(y[1:][hit].max()))
    return WatermarkReport(
        identity_resid=resid,
        monotone=mono,
        y_min=float(min(traj.y1.min(), traj.y2.min())),
        complementarity_worst=comp,
    )
