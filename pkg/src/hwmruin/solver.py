"""Monotone finite-difference solver for the robust ruin HJBI equation.

Discretization on a uniform grid over [R, c/r] x [0, ymax]^2:

  * interior rows: sup over a pi-lattice, inner theta optimum in closed
    form, first-order upwind advection, central second and cross
    differences;
  * x faces: Dirichlet (1 at x = R, 0 at x = c/r), which take precedence
    over every other condition;
  * fee faces y_i = 0: the oblique row q_i phi_x - (1+q_i) phi_{y_i} = 0
    discretized one-sided along the inward reflection direction (backward
    in x, forward in y_i), a convex-combination row; it also governs the
    edges shared with y_j = ymax;
  * corner y1 = y2 = 0: the summed fee row (one node cannot carry two
    independent conditions; see boundary_residuals for the per-condition
    diagnostics);
  * truncation faces y_i = ymax: one-sided zero-slope rows, summed at the
    shared corner.

Howard iteration: policy improvement picks per node the lattice candidate
maximizing the residual (theta from the central-difference jet), then
policy evaluation solves the frozen linear system with damped line-Jacobi
sweeps: every x-line is solved by the Thomas algorithm with all y-coupling
taken from the previous iterate, so sweeps are order independent and
deterministic under any thread count, and no global factorization is
formed. A safeguard halves the damping factor and flags the report if the
residual ever increases.

Packed-array layouts shared with the kernels:

_JET_COLS (per interior node): 0 phi, 1..2 forward/backward D_x,
3..4 D_y1, 5..6 D_y2, 7..9 second differences (xx, y1y1, y2y2),
10..12 cross differences (xy1, xy2, y1y2), 13..15 central first
differences (x, y1, y2), 16 drift r*x - c.

_CAND_COLS (per pi candidate): 0..1 sigma^T pi, 2 pi . (mu - r),
3..4 -pi_i (mu - mu_b)_i, 5..8 (sigma - sigma_b)[i,k] pi_i for
(i,k) = (1,1),(1,2),(2,1),(2,2), 9..11 diffusion diag (xx, y1y1, y2y2),
12..14 diffusion cross (xy1, xy2, y1y2), 15..16 pi itself.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import backend
from ._kernels_np import improve_np, sweep_np, _interp_np, _project_theta_np
from .model import (
    DerivedParams,
    ModelParams,
    PiBox,
    ThetaSet,
    no_invest_value,
    validate_params,
)

if backend.HAVE_NUMBA:
    from ._kernels_nb import improve_nb, sweep_nb

__all__ = [
    "Grid",
    "SolverConfig",
    "SolveReport",
    "PolicyField",
    "HJBSolution",
    "ResidualReport",
    "BoundaryReport",
    "build_grid",
    "default_y_max",
    "howard_solve",
    "assemble_residual",
    "boundary_residuals",
    "extract_policy",
]

# row type codes
INTERIOR, DIR_LO, DIR_HI, FACE1, FACE2, CORNER, YMAX = 0, 1, 2, 3, 4, 5, 6


@dataclass(frozen=True, eq=False)
class Grid:
    x: np.ndarray
    y1: np.ndarray
    y2: np.ndarray

    @property
    def hx(self) -> float:
        return float(self.x[1] - self.x[0])

    @property
    def hy1(self) -> float:
        return float(self.y1[1] - self.y1[0])

    @property
    def hy2(self) -> float:
        return float(self.y2[1] - self.y2[0])

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.x.size, self.y1.size, self.y2.size)

    @property
    def h_sum(self) -> float:
        return self.hx + self.hy1 + self.hy2


def default_y_max(p: ModelParams, pi_set: PiBox) -> float:
    """Truncation height: ten one-year standard deviations of the largest
    admissible fund exposure, floored at 1. The floor keeps degenerate
    control sets (e.g. {0}) from collapsing the domain."""
    worst = 0.0
    for a in (pi_set.lo[0], pi_set.hi[0]):
        for b in (pi_set.lo[1], pi_set.hi[1]):
            v = np.array([a, b]) @ p.sigma
            worst = max(worst, float(np.sqrt(v @ v)))
    return max(10.0 * worst, 1.0)


def build_grid(p: ModelParams, nx: int, ny1: int, ny2: int, y_max: float) -> Grid:
    if nx < 3 or ny1 < 3 or ny2 < 3:
        raise ValueError(f"grid needs at least 3 nodes per axis, got nx={nx} ny1={ny1} ny2={ny2}")
    if not (y_max > 0.0):
        raise ValueError(f"y_max must be > 0, got y_max={y_max}")
    validate_params(p)
    return Grid(
        x=np.linspace(p.ruin_level, p.x_upper, nx),
        y1=np.linspace(0.0, y_max, ny1),
        y2=np.linspace(0.0, y_max, ny2),
    )


@dataclass(eq=False)
class SolverConfig:
    pi_set: PiBox
    theta_set: ThetaSet = field(default_factory=ThetaSet)
    nx: int = 81
    ny1: int = 17
    ny2: int = 17
    y_max: float | None = None
    tol: float = 1e-7
    max_iters: int = 100
    max_sweeps: int = 40000
    sweep_block: int = 30
    omega: float = 1.0
    omega_min: float = 0.25

    def resolve_y_max(self, p: ModelParams) -> float:
        return default_y_max(p, self.pi_set) if self.y_max is None else float(self.y_max)


def _row_types(nx: int, n1: int, n2: int) -> np.ndarray:
    rt = np.full((nx, n1, n2), INTERIOR, dtype=np.int8)
    rt[:, n1 - 1, :] = YMAX
    rt[:, :, n2 - 1] = YMAX
    rt[:, 0, :] = FACE1
    rt[:, :, 0] = FACE2
    rt[:, 0, 0] = CORNER
    rt[0, :, :] = DIR_LO
    rt[nx - 1, :, :] = DIR_HI
    return rt


def _theta_code(ts: ThetaSet) -> tuple[int, np.ndarray]:
    tpar = np.zeros(4)
    if ts.kind == "unconstrained":
        return 0, tpar
    if ts.kind == "box":
        tpar[0], tpar[1], tpar[2], tpar[3] = ts.lo[0], ts.lo[1], ts.hi[0], ts.hi[1]
        return 1, tpar
    if ts.kind == "ball":
        tpar[0] = ts.radius
        return 2, tpar
    return 3, tpar


def _candidate_table(lattice: np.ndarray, p: ModelParams, d: DerivedParams) -> np.ndarray:
    m = lattice.shape[0]
    t = np.empty((m, 17))
    cs = lattice @ p.sigma                      # sigma^T pi
    gy1 = -lattice[:, :1] * d.sigma_gap[0]       # fund-1 row of G
    gy2 = -lattice[:, 1:] * d.sigma_gap[1]
    t[:, 0] = cs[:, 0]
    t[:, 1] = cs[:, 1]
    t[:, 2] = lattice @ d.mu_excess
    t[:, 3] = -lattice[:, 0] * d.mu_gap[0]
    t[:, 4] = -lattice[:, 1] * d.mu_gap[1]
    t[:, 5] = d.sigma_gap[0, 0] * lattice[:, 0]
    t[:, 6] = d.sigma_gap[0, 1] * lattice[:, 0]
    t[:, 7] = d.sigma_gap[1, 0] * lattice[:, 1]
    t[:, 8] = d.sigma_gap[1, 1] * lattice[:, 1]
    t[:, 9] = (cs * cs).sum(axis=1)
    t[:, 10] = (gy1 * gy1).sum(axis=1)
    t[:, 11] = (gy2 * gy2).sum(axis=1)
    t[:, 12] = (cs * gy1).sum(axis=1)
    t[:, 13] = (cs * gy2).sum(axis=1)
    t[:, 14] = (gy1 * gy2).sum(axis=1)
    t[:, 15] = lattice[:, 0]
    t[:, 16] = lattice[:, 1]
    return t


def _pack_jets(phi: np.ndarray, grid: Grid, p: ModelParams) -> np.ndarray:
    hx, h1, h2 = grid.hx, grid.hy1, grid.hy2
    core = phi[1:-1, 1:-1, 1:-1]
    jets = np.empty(core.shape + (17,))
    jets[..., 0] = core
    jets[..., 1] = (phi[2:, 1:-1, 1:-1] - core) / hx
    jets[..., 2] = (core - phi[:-2, 1:-1, 1:-1]) / hx
    jets[..., 3] = (phi[1:-1, 2:, 1:-1] - core) / h1
    jets[..., 4] = (core - phi[1:-1, :-2, 1:-1]) / h1
    jets[..., 5] = (phi[1:-1, 1:-1, 2:] - core) / h2
    jets[..., 6] = (core - phi[1:-1, 1:-1, :-2]) / h2
    jets[..., 7] = (phi[2:, 1:-1, 1:-1] - 2.0 * core + phi[:-2, 1:-1, 1:-1]) / (hx * hx)
    jets[..., 8] = (phi[1:-1, 2:, 1:-1] - 2.0 * core + phi[1:-1, :-2, 1:-1]) / (h1 * h1)
    jets[..., 9] = (phi[1:-1, 1:-1, 2:] - 2.0 * core + phi[1:-1, 1:-1, :-2]) / (h2 * h2)
    jets[..., 10] = (
        phi[2:, 2:, 1:-1] - phi[2:, :-2, 1:-1] - phi[:-2, 2:, 1:-1] + phi[:-2, :-2, 1:-1]
    ) / (4.0 * hx * h1)
    jets[..., 11] = (
        phi[2:, 1:-1, 2:] - phi[2:, 1:-1, :-2] - phi[:-2, 1:-1, 2:] + phi[:-2, 1:-1, :-2]
    ) / (4.0 * hx * h2)
    jets[..., 12] = (
        phi[1:-1, 2:, 2:] - phi[1:-1, 2:, :-2] - phi[1:-1, :-2, 2:] + phi[1:-1, :-2, :-2]
    ) / (4.0 * h1 * h2)
    jets[..., 13] = (phi[2:, 1:-1, 1:-1] - phi[:-2, 1:-1, 1:-1]) / (2.0 * hx)
    jets[..., 14] = (phi[1:-1, 2:, 1:-1] - phi[1:-1, :-2, 1:-1]) / (2.0 * h1)
    jets[..., 15] = (phi[1:-1, 1:-1, 2:] - phi[1:-1, 1:-1, :-2]) / (2.0 * h2)
    jets[..., 16] = (p.r * grid.x[1:-1] - p.c)[:, None, None]
    return jets.reshape(-1, 17)


def _improve(phi, grid, p, d, cands, tkind, tpar):
    """Per-node argmax of the discrete operator over the candidate table.

    Returns (pi, theta, val, idx) on the full grid: controls padded onto
    boundary faces from the nearest governed node, val zero there, idx -1.
    """
    nx, n1, n2 = phi.shape
    jets = _pack_jets(phi, grid, p)
    n_int = jets.shape[0]
    val = np.empty(n_int)
    idx = np.empty(n_int, dtype=np.int64)
    t1 = np.empty(n_int)
    t2 = np.empty(n_int)
    if backend.HAVE_NUMBA:
        improve_nb(jets, cands, p.default_rate, p.eps, tkind, tpar, val, idx, t1, t2)
    else:
        improve_np(jets, cands, p.default_rate, p.eps, tkind, tpar, val, idx, t1, t2)

    core = (slice(1, -1),) * 3
    val_f = np.zeros((nx, n1, n2))
    val_f[core] = val.reshape(nx - 2, n1 - 2, n2 - 2)
    idx_f = np.full((nx, n1, n2), -1, dtype=np.int64)
    idx_f[core] = idx.reshape(nx - 2, n1 - 2, n2 - 2)
    pi_f = np.zeros((nx, n1, n2, 2))
    pi_f[core] = cands[idx][:, 15:17].reshape(nx - 2, n1 - 2, n2 - 2, 2)
    th_f = np.zeros((nx, n1, n2, 2))
    th_f[core + (0,)] = t1.reshape(nx - 2, n1 - 2, n2 - 2)
    th_f[core + (1,)] = t2.reshape(nx - 2, n1 - 2, n2 - 2)
    for a in (pi_f, th_f):
        a[:, 0] = a[:, 1]
        a[:, -1] = a[:, -2]
        a[:, :, 0] = a[:, :, 1]
        a[:, :, -1] = a[:, :, -2]
        a[0] = a[1]
        a[-1] = a[-2]
    return pi_f, th_f, val_f, idx_f


def _frozen_coeffs(pi, theta, grid: Grid, p: ModelParams, d: DerivedParams, rt: np.ndarray):
    """Row coefficients of the frozen-control linear system.

    System form per node: DIA*phi0 + SUB*phi(x-) + SUP*phi(x+)
      = RHS0 + CY1P*phi(y1+) + CY1M*phi(y1-) + CY2P*phi(y2+) + CY2M*phi(y2-)
        + CXY1*(4-point xy1 sum) + CXY2*(...) + CY12*(...).
    """
    nx, n1, n2 = rt.shape
    hx, h1, h2 = grid.hx, grid.hy1, grid.hy2
    lam = p.default_rate
    q1, q2 = float(p.q[0]), float(p.q[1])

    cs = pi @ p.sigma
    xdr = (p.r * grid.x - p.c)[:, None, None]
    ax = xdr + pi @ d.mu_excess + cs[..., 0] * theta[..., 0] + cs[..., 1] * theta[..., 1]
    sg = d.sigma_gap
    ay1 = -pi[..., 0] * (d.mu_gap[0] + sg[0, 0] * theta[..., 0] + sg[0, 1] * theta[..., 1])
    ay2 = -pi[..., 1] * (d.mu_gap[1] + sg[1, 0] * theta[..., 0] + sg[1, 1] * theta[..., 1])
    gy1 = -pi[..., 0:1] * sg[0]
    gy2 = -pi[..., 1:2] * sg[1]
    sxx = (cs * cs).sum(axis=-1)
    s11 = (gy1 * gy1).sum(axis=-1)
    s22 = (gy2 * gy2).sum(axis=-1)
    sxy1 = (cs * gy1).sum(axis=-1)
    sxy2 = (cs * gy2).sum(axis=-1)
    s12 = (gy1 * gy2).sum(axis=-1)
    pen = (theta[..., 0] ** 2 + theta[..., 1] ** 2) / (2.0 * p.eps)

    axp = np.maximum(ax, 0.0)
    axm = np.maximum(-ax, 0.0)
    a1p = np.maximum(ay1, 0.0)
    a1m = np.maximum(-ay1, 0.0)
    a2p = np.maximum(ay2, 0.0)
    a2m = np.maximum(-ay2, 0.0)

    sub = -(axm / hx + sxx / (2.0 * hx * hx))
    sup = -(axp / hx + sxx / (2.0 * hx * hx))
    dia = (
        lam
        + (axp + axm) / hx + sxx / (hx * hx)
        + (a1p + a1m) / h1 + s11 / (h1 * h1)
        + (a2p + a2m) / h2 + s22 / (h2 * h2)
    )
    cy1p = a1p / h1 + s11 / (2.0 * h1 * h1)
    cy1m = a1m / h1 + s11 / (2.0 * h1 * h1)
    cy2p = a2p / h2 + s22 / (2.0 * h2 * h2)
    cy2m = a2m / h2 + s22 / (2.0 * h2 * h2)
    cxy1 = sxy1 / (4.0 * hx * h1)
    cxy2 = sxy2 / (4.0 * hx * h2)
    cy12 = s12 / (4.0 * h1 * h2)
    rhs0 = -pen

    def clear(mask):
        for a in (sub, sup, dia, cy1p, cy1m, cy2p, cy2m, cxy1, cxy2, cy12, rhs0):
            a[mask] = 0.0

    m = rt == FACE1
    clear(m)
    sub[m] = -q1 / hx
    dia[m] = q1 / hx + (1.0 + q1) / h1
    cy1p[m] = (1.0 + q1) / h1

    m = rt == FACE2
    clear(m)
    sub[m] = -q2 / hx
    dia[m] = q2 / hx + (1.0 + q2) / h2
    cy2p[m] = (1.0 + q2) / h2

    m = rt == CORNER
    clear(m)
    sub[m] = -(q1 + q2) / hx
    dia[m] = (q1 + q2) / hx + (1.0 + q1) / h1 + (1.0 + q2) / h2
    cy1p[m] = (1.0 + q1) / h1
    cy2p[m] = (1.0 + q2) / h2

    m = rt == YMAX
    clear(m)
    j1 = np.arange(n1)[None, :, None]
    j2 = np.arange(n2)[None, None, :]
    n1top = m & (j1 == n1 - 1)
    n2top = m & (j2 == n2 - 1)
    dia[m] = 0.0
    dia[n1top] += 1.0 / h1
    dia[n2top] += 1.0 / h2
    cy1m[n1top] = 1.0 / h1
    cy2m[n2top] = 1.0 / h2

    for code, bc in ((DIR_LO, 1.0), (DIR_HI, 0.0)):
        m = rt == code
        clear(m)
        dia[m] = 1.0
        rhs0[m] = bc

    has_cross = bool(np.any(cxy1) or np.any(cxy2) or np.any(cy12))
    return {
        "sub": sub, "dia": dia, "sup": sup,
        "cy1p": cy1p, "cy1m": cy1m, "cy2p": cy2p, "cy2m": cy2m,
        "cxy1": cxy1, "cxy2": cxy2, "cy12": cy12,
        "rhs0": rhs0, "has_cross": has_cross,
    }


def _frozen_residual(phi: np.ndarray, co: dict) -> np.ndarray:
    nx, n1, n2 = phi.shape
    ipx = np.minimum(np.arange(nx) + 1, nx - 1)
    imx = np.maximum(np.arange(nx) - 1, 0)
    ip1 = np.minimum(np.arange(n1) + 1, n1 - 1)
    im1 = np.maximum(np.arange(n1) - 1, 0)
    ip2 = np.minimum(np.arange(n2) + 1, n2 - 1)
    im2 = np.maximum(np.arange(n2) - 1, 0)
    res = (
        co["dia"] * phi
        + co["sub"] * phi[imx, :, :]
        + co["sup"] * phi[ipx, :, :]
        - co["cy1p"] * phi[:, ip1, :]
        - co["cy1m"] * phi[:, im1, :]
        - co["cy2p"] * phi[:, :, ip2]
        - co["cy2m"] * phi[:, :, im2]
        - co["rhs0"]
    )
    if co["has_cross"]:
        t = np.zeros_like(phi)
        t[1:-1, 1:-1, :] = phi[2:, 2:, :] - phi[2:, :-2, :] - phi[:-2, 2:, :] + phi[:-2, :-2, :]
        res -= co["cxy1"] * t
        t = np.zeros_like(phi)
        t[1:-1, :, 1:-1] = phi[2:, :, 2:] - phi[2:, :, :-2] - phi[:-2, :, 2:] + phi[:-2, :, :-2]
        res -= co["cxy2"] * t
        t = np.zeros_like(phi)
        t[:, 1:-1, 1:-1] = phi[:, 2:, 2:] - phi[:, 2:, :-2] - phi[:, :-2, 2:] + phi[:, :-2, :-2]
        res -= co["cy12"] * t
    return res


def _sweep(phi: np.ndarray, co: dict, omega: float) -> np.ndarray:
    out = np.empty_like(phi)
    args = (
        phi, out,
        co["sub"], co["dia"], co["sup"],
        co["cy1p"], co["cy1m"], co["cy2p"], co["cy2m"],
        co["cxy1"], co["cxy2"], co["cy12"],
        co["rhs0"], omega, co["has_cross"],
    )
    if backend.HAVE_NUMBA:
        sweep_nb(*args)
    else:
        sweep_np(*args)
    return out


def _dominance(co: dict, rt: np.ndarray):
    off = (
        np.abs(co["sub"]) + np.abs(co["sup"])
        + co["cy1p"] + co["cy1m"] + co["cy2p"] + co["cy2m"]
        + 4.0 * (np.abs(co["cxy1"]) + np.abs(co["cxy2"]) + np.abs(co["cy12"]))
    )
    margin = co["dia"] - off
    bad = margin < -1e-12
    frac = float(bad.mean())
    return bool(not bad.any()), frac, float(margin.min())


@dataclass(eq=False)
class BoundaryReport:
    """Residuals of the boundary rows as imposed by the scheme.

    face1/face2 statistics cover the nodes carrying that single fee
    condition; the shared corner carries the summed row (corner_sum),
    with the per-condition values reported as diagnostics (corner_b1/b2):
    a single node cannot satisfy both conditions independently unless the
    field is locally y-symmetric.
    """

    face1_sup: float
    face1_mean: float
    face2_sup: float
    face2_mean: float
    corner_sum_sup: float
    corner_b1_sup: float
    corner_b2_sup: float
    ymax_sup: float
    dirichlet_sup: float

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in (
            "face1_sup", "face1_mean", "face2_sup", "face2_mean",
            "corner_sum_sup", "corner_b1_sup", "corner_b2_sup",
            "ymax_sup", "dirichlet_sup",
        )}


def boundary_residuals(phi: np.ndarray, grid: Grid, p: ModelParams) -> BoundaryReport:
    """Evaluate the discrete boundary operators on a field.

    For a y-independent field the fee row reduces to q_i times the
    backward x-difference.
    """
    nx, n1, n2 = phi.shape
    hx, h1, h2 = grid.hx, grid.hy1, grid.hy2
    q1, q2 = float(p.q[0]), float(p.q[1])
    # fee rows on interior x only (Dirichlet wins at x faces)
    b1 = q1 * (phi[1:-1, 0, :] - phi[:-2, 0, :]) / hx - (1.0 + q1) * (
        phi[1:-1, 1, :] - phi[1:-1, 0, :]
    ) / h1
    b2 = q2 * (phi[1:-1, :, 0] - phi[:-2, :, 0]) / hx - (1.0 + q2) * (
        phi[1:-1, :, 1] - phi[1:-1, :, 0]
    ) / h2
    corner = b1[:, 0] + b2[:, 0]
    ymax1 = (phi[1:-1, n1 - 1, 1:] - phi[1:-1, n1 - 2, 1:]) / h1
    ymax2 = (phi[1:-1, 1:, n2 - 1] - phi[1:-1, 1:, n2 - 2]) / h2
    # shared ymax corner carries the sum; drop the single-axis entries there
    ymax_sum = ymax1[:, -1] + ymax2[:, -1]
    ymax_vals = np.concatenate(
        [ymax1[:, :-1].ravel(), ymax2[:, :-1].ravel(), ymax_sum.ravel()]
    )
    dir_sup = max(float(np.abs(phi[0] - 1.0).max()), float(np.abs(phi[-1]).max()))
    return BoundaryReport(
        face1_sup=float(np.abs(b1[:, 1:]).max()),
        face1_mean=float(np.abs(b1[:, 1:]).mean()),
        face2_sup=float(np.abs(b2[:, 1:]).max()),
        face2_mean=float(np.abs(b2[:, 1:]).mean()),
        corner_sum_sup=float(np.abs(corner).max()),
        corner_b1_sup=float(np.abs(b1[:, 0]).max()),
        corner_b2_sup=float(np.abs(b2[:, 0]).max()),
        ymax_sup=float(np.abs(ymax_vals).max()),
        dirichlet_sup=dir_sup,
    )


@dataclass(eq=False)
class ResidualReport:
    field: np.ndarray          # full-grid residual of the governing row
    interior_sup: float
    interior_mean: float
    boundary: BoundaryReport

    @property
    def total_sup(self) -> float:
        return max(
            self.interior_sup,
            self.boundary.face1_sup,
            self.boundary.face2_sup,
            self.boundary.corner_sum_sup,
            self.boundary.ymax_sup,
            self.boundary.dirichlet_sup,
        )


def assemble_residual(
    phi: np.ndarray,
    grid: Grid,
    p: ModelParams,
    pi_set: PiBox,
    theta_set: ThetaSet | None = None,
) -> ResidualReport:
    """Residual of the full discrete system at a given field: the
    improvement maximand on interior nodes (same kernel the solver uses,
    so a converged solve's report matches this exactly) and the boundary
    operators elsewhere."""
    theta_set = theta_set or ThetaSet()
    d = validate_params(p)
    nx, n1, n2 = phi.shape
    rt = _row_types(nx, n1, n2)
    cands = _candidate_table(pi_set.lattice(), p, d)
    tkind, tpar = _theta_code(theta_set)
    _, _, val, _ = _improve(phi, grid, p, d, cands, tkind, tpar)
    brep = boundary_residuals(phi, grid, p)

    res = val.copy()
    hx, h1, h2 = grid.hx, grid.hy1, grid.hy2
    q1, q2 = float(p.q[0]), float(p.q[1])
    b1 = q1 * (phi[1:-1, 0, :] - phi[:-2, 0, :]) / hx - (1.0 + q1) * (
        phi[1:-1, 1, :] - phi[1:-1, 0, :]
    ) / h1
    b2 = q2 * (phi[1:-1, :, 0] - phi[:-2, :, 0]) / hx - (1.0 + q2) * (
        phi[1:-1, :, 1] - phi[1:-1, :, 0]
    ) / h2
    res[1:-1, 0, 1:] = b1[:, 1:]
    res[1:-1, 1:, 0] = b2[:, 1:]
    res[1:-1, 0, 0] = b1[:, 0] + b2[:, 0]
    top1 = (phi[1:-1, n1 - 1, :] - phi[1:-1, n1 - 2, :]) / h1
    top2 = (phi[1:-1, :, n2 - 1] - phi[1:-1, :, n2 - 2]) / h2
    res[1:-1, n1 - 1, 1:-1] = top1[:, 1:-1]
    res[1:-1, 1:-1, n2 - 1] = top2[:, 1:-1]
    res[1:-1, n1 - 1, n2 - 1] = top1[:, -1] + top2[:, -1]
    res[0] = phi[0] - 1.0
    res[-1] = phi[-1] - 0.0
    mask = rt == INTERIOR
    return ResidualReport(
        field=res,
        interior_sup=float(np.abs(val[mask]).max()),
        interior_mean=float(np.abs(val[mask]).mean()),
        boundary=brep,
    )


@dataclass(eq=False)
class PolicyField:
    """Solver controls tabulated on the grid, with trilinear lookup.

    Stored values lie in their admissible sets; lookups clamp again after
    interpolation so float roundoff cannot step outside.
    """

    grid: Grid
    pi: np.ndarray      # (nx, ny1, ny2, 2)
    theta: np.ndarray   # (nx, ny1, ny2, 2)
    pi_set: PiBox
    theta_set: ThetaSet

    def _locate(self, x, y1, y2):
        g = self.grid
        out = []
        for v, ax in ((x, g.x), (y1, g.y1), (y2, g.y2)):
            h = ax[1] - ax[0]
            t = (np.asarray(v, dtype=float) - ax[0]) / h
            i = np.minimum(np.maximum(np.floor(t).astype(np.int64), 0), ax.size - 2)
            w = np.minimum(np.maximum(t - i, 0.0), 1.0)
            out.extend((i, w))
        return out

    def pi_at(self, x, y1, y2) -> np.ndarray:
        ix, wx, i1, w1, i2, w2 = self._locate(x, y1, y2)
        p1 = _interp_np(self.pi, ix, i1, i2, wx, w1, w2, 0)
        p2 = _interp_np(self.pi, ix, i1, i2, wx, w1, w2, 1)
        p1 = np.minimum(np.maximum(p1, self.pi_set.lo[0]), self.pi_set.hi[0])
        p2 = np.minimum(np.maximum(p2, self.pi_set.lo[1]), self.pi_set.hi[1])
        return np.stack(np.broadcast_arrays(p1, p2), axis=-1)

    def theta_at(self, x, y1, y2) -> np.ndarray:
        ix, wx, i1, w1, i2, w2 = self._locate(x, y1, y2)
        t1 = _interp_np(self.theta, ix, i1, i2, wx, w1, w2, 0)
        t2 = _interp_np(self.theta, ix, i1, i2, wx, w1, w2, 1)
        tkind, tpar = _theta_code(self.theta_set)
        t1, t2 = _project_theta_np(np.asarray(t1), np.asarray(t2), tkind, tpar)
        return np.stack(np.broadcast_arrays(t1, t2), axis=-1)


def extract_policy(
    phi: np.ndarray,
    grid: Grid,
    p: ModelParams,
    pi_set: PiBox,
    theta_set: ThetaSet | None = None,
) -> PolicyField:
    """Per-node argmax controls of the discrete operator at a given field.
    Boundary faces copy the nearest governed node (the Dirichlet rows pin
    the value there, so controls are a free choice)."""
    theta_set = theta_set or ThetaSet()
    d = validate_params(p)
    cands = _candidate_table(pi_set.lattice(), p, d)
    tkind, tpar = _theta_code(theta_set)
    pi, th, _, _ = _improve(phi, grid, p, d, cands, tkind, tpar)
    return PolicyField(grid=grid, pi=pi, theta=th, pi_set=pi_set, theta_set=theta_set)


@dataclass(eq=False)
class SolveReport:
    converged: bool
    flagged: bool
    iterations: int
    sweeps_total: int
    residual_interior: float
    residual_b1: float
    residual_b2: float
    residual_corner: float
    residual_ymax: float
    residual_dirichlet: float
    diag_dominance_ok: bool
    dominance_violation_frac: float
    dominance_min_margin: float
    damping_engaged: bool
    final_omega: float
    policy_changes_last: int
    wall_seconds: float
    backend: str
    tol: float
    grid_shape: tuple[int, int, int]
    y_max: float
    residual_history: list[float] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        out = {
            "iterations": self.iterations,
            "residual_interior": self.residual_interior,
            "residual_b1": self.residual_b1,
            "residual_b2": self.residual_b2,
            "diag_dominance_ok": self.diag_dominance_ok,
            "wall_seconds": self.wall_seconds,
            "converged": self.converged,
            "flagged": self.flagged,
            "sweeps_total": self.sweeps_total,
            "residual_corner": self.residual_corner,
            "residual_ymax": self.residual_ymax,
            "residual_dirichlet": self.residual_dirichlet,
            "dominance_violation_frac": self.dominance_violation_frac,
            "dominance_min_margin": self.dominance_min_margin,
            "damping_engaged": self.damping_engaged,
            "final_omega": self.final_omega,
            "policy_changes_last": self.policy_changes_last,
            "backend": self.backend,
            "tol": self.tol,
            "grid_shape": list(self.grid_shape),
            "y_max": self.y_max,
            "residual_history": self.residual_history,
        }
        return out


@dataclass(eq=False)
class HJBSolution:
    grid: Grid
    field: np.ndarray
    policy: PolicyField
    report: SolveReport


def howard_solve(p: ModelParams, cfg: SolverConfig) -> HJBSolution:
    """Howard iteration on the upwind discretization.

    Non-convergence within the iteration/sweep budgets returns the best
    iterate with report.flagged = True; invalid inputs raise instead.
    """
    d = validate_params(p)
    y_max = cfg.resolve_y_max(p)
    grid = build_grid(p, cfg.nx, cfg.ny1, cfg.ny2, y_max)
    nx, n1, n2 = grid.shape
    rt = _row_types(nx, n1, n2)
    cands = _candidate_table(cfg.pi_set.lattice(), p, d)
    tkind, tpar = _theta_code(cfg.theta_set)

    t0 = time.perf_counter()
    phi = np.broadcast_to(no_invest_value(grid.x, p)[:, None, None], (nx, n1, n2)).copy()
    pi, th, val, idx = _improve(phi, grid, p, d, cands, tkind, tpar)
    interior = rt == INTERIOR

    def combined(valf, ph):
        b = boundary_residuals(ph, grid, p)
        return max(
            float(np.abs(valf[interior]).max()),
            b.face1_sup, b.face2_sup, b.corner_sum_sup, b.ymax_sup, b.dirichlet_sup,
        )

    nonlin = combined(val, phi)
    history = [nonlin]
    omega = cfg.omega
    damping = False
    sweeps_total = 0
    iters = 0
    converged = False
    changes = int(interior.sum())

    while iters < cfg.max_iters:
        iters += 1
        co = _frozen_coeffs(pi, th, grid, p, d, rt)
        inner_target = max(0.25 * cfg.tol, 0.05 * nonlin)
        sweeps_eval = 0
        while sweeps_eval < cfg.max_sweeps:
            for _ in range(cfg.sweep_block):
                phi = _sweep(phi, co, omega)
            sweeps_eval += cfg.sweep_block
            linres = float(np.abs(_frozen_residual(phi, co)).max())
            if linres <= inner_target:
                break
        sweeps_total += sweeps_eval

        pi_n, th_n, val, idx_n = _improve(phi, grid, p, d, cands, tkind, tpar)
        changes = int(np.count_nonzero(idx_n != idx))
        pi, th, idx = pi_n, th_n, idx_n
        new_nonlin = combined(val, phi)
        history.append(new_nonlin)
        if new_nonlin <= cfg.tol:
            converged = True
            nonlin = new_nonlin
            break
        if new_nonlin > nonlin * (1.0 + 1e-12) and iters > 1:
            omega = max(0.5 * omega, cfg.omega_min)
            damping = True
        nonlin = new_nonlin

    co = _frozen_coeffs(pi, th, grid, p, d, rt)
    dom_ok, dom_frac, dom_margin = _dominance(co, rt)
    brep = boundary_residuals(phi, grid, p)
    report = SolveReport(
        converged=converged,
        flagged=not converged,
        iterations=iters,
        sweeps_total=sweeps_total,
        residual_interior=float(np.abs(val[interior]).max()),
        residual_b1=brep.face1_sup,
        residual_b2=brep.face2_sup,
        residual_corner=brep.corner_sum_sup,
        residual_ymax=brep.ymax_sup,
        residual_dirichlet=brep.dirichlet_sup,
        diag_dominance_ok=dom_ok,
        dominance_violation_frac=dom_frac,
        dominance_min_margin=dom_margin,
        damping_engaged=damping,
        final_omega=omega,
        policy_changes_last=changes,
        wall_seconds=time.perf_counter() - t0,
        backend=backend.backend_name(),
        tol=cfg.tol,
        grid_shape=grid.shape,
        y_max=y_max,
        residual_history=history,
    )
    policy = PolicyField(grid=grid, pi=pi, theta=th, pi_set=cfg.pi_set, theta_set=cfg.theta_set)
    return HJBSolution(grid=grid, field=phi, policy=policy, report=report)
