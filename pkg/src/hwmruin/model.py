"""Model parameters, closed forms, and local HJBI algebra.

State is (X, Y1, Y2): wealth X and, per fund i, the distance
Y^i = Mbar^i - D^i >= 0 between the fund's running high watermark and its
cumulative performance. The investor consumes at rate c, earns r on cash,
holds pi_i in fund i, and pays a fraction q_i of each watermark increment
as a performance fee. Ruin means X hits the floor R before an independent
exponential default clock with rate lam rings. An adversary tilts the fund
drifts through a Girsanov kernel theta, paying an entropy penalty
|theta|^2 / (2 eps) per unit time, so the value

    V(x, y1, y2) = inf_pi sup_theta E[ 1{ruin before default}
                                       - int |theta_s|^2 / (2 eps) ds ]

solves the Isaacs equation

    lam*V - (r*x - c) V_x - inf_pi sup_theta A[pi, theta] V = 0

on [R, c/r] x [0, ymax]^2 with V = 1 at x = R, V = 0 at x = c/r, and the
oblique reflection condition q_i V_x - (1 + q_i) V_{y_i} = 0 on y_i = 0.
The controlled generator has drift

    b(pi, theta) = [ pi . (mu - r*1 + sigma theta),
                     -pi_1 ((mu - mu_b) + (sigma - sigma_b) theta)_1,
                     -pi_2 (...)_2 ]

and diffusion G G^T with G = [pi^T sigma; -diag(pi) (sigma - sigma_b)].

With no fees and an unconstrained pi the value has the closed form
U(x) = ((c - r*x)/(c - r*R))^kappa where kappa is the larger root of
r*k^2 - (r + lam + S) k + lam = 0 and S = (1/2) m^T (sigma sigma^T)^{-1} m,
m = mu - r*1. Never investing gives P(x) = ((c - r*x)/(c - r*R))^(lam/r).
These two bracket the value: U <= V <= P.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ModelParams",
    "DerivedParams",
    "PiBox",
    "ThetaSet",
    "validate_params",
    "kappa_exponent",
    "frictionless_value",
    "no_invest_value",
    "frictionless_policy",
    "control_drift",
    "diffusion_matrix",
    "theta_gain_vec",
    "inner_sup_theta",
    "hamiltonian",
    "fee_face_operator",
]


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Market, fee, and robustness parameters.

    r            riskless rate (> 0)
    c            consumption rate (> 0)
    ruin_level   absorbing wealth floor R, must satisfy R < c/r
    default_rate intensity lam of the exogenous default clock (> 0)
    mu           fund drifts, shape (2,)
    sigma        fund volatility loadings, shape (2, 2), nonsingular
    mu_b         benchmark drifts for the fee watermarks, shape (2,)
    sigma_b      benchmark loadings, shape (2, 2)
    q            performance-fee fractions, shape (2,), >= 0
    eps          ambiguity budget scaling the entropy penalty (> 0)
    """

    r: float
    c: float
    ruin_level: float
    default_rate: float
    mu: np.ndarray
    sigma: np.ndarray
    mu_b: np.ndarray = None  # type: ignore[assignment]
    sigma_b: np.ndarray = None  # type: ignore[assignment]
    q: np.ndarray = None  # type: ignore[assignment]
    eps: float = 1.0

    def __post_init__(self):
        arr = lambda v, shape: np.ascontiguousarray(np.asarray(v, dtype=float)).reshape(shape)
        object.__setattr__(self, "mu", arr(self.mu, (2,)))
        object.__setattr__(self, "sigma", arr(self.sigma, (2, 2)))
        mu_b = self.mu if self.mu_b is None else self.mu_b
        sigma_b = self.sigma if self.sigma_b is None else self.sigma_b
        q = np.zeros(2) if self.q is None else self.q
        object.__setattr__(self, "mu_b", arr(mu_b, (2,)))
        object.__setattr__(self, "sigma_b", arr(sigma_b, (2, 2)))
        object.__setattr__(self, "q", arr(q, (2,)))

    @property
    def x_upper(self) -> float:
        """Safe level c/r where ruin can be avoided forever."""
        return self.c / self.r


@dataclass(frozen=True, eq=False)
class DerivedParams:
    """Quantities derived from ModelParams by validate_params."""

    cov: np.ndarray        # sigma sigma^T
    cov_inv: np.ndarray
    mu_excess: np.ndarray  # mu - r*1
    mu_gap: np.ndarray     # mu - mu_b
    sigma_gap: np.ndarray  # sigma - sigma_b
    half_sharpe2: float    # (1/2) mu_excess^T cov^{-1} mu_excess
    kappa: float


def validate_params(p: ModelParams) -> DerivedParams:
    """Check parameter sanity and compute derived quantities.

    Raises ValueError with the offending key named in the message; the CLI
    surfaces these verbatim as usage errors.
    """
    if not (p.r > 0.0):
        raise ValueError(f"r must be > 0, got r={p.r}")
    if not (p.c > 0.0):
        raise ValueError(f"c must be > 0, got c={p.c}")
    if not (p.default_rate > 0.0):
        raise ValueError(f"default_rate must be > 0, got default_rate={p.default_rate}")
    if not (p.eps > 0.0):
        raise ValueError(f"eps must be > 0, got eps={p.eps}")
    if not (p.ruin_level < p.x_upper):
        raise ValueError(
            f"ruin_level must lie below the safe level c/r = {p.x_upper}, "
            f"got ruin_level={p.ruin_level}"
        )
    if np.any(p.q < 0.0):
        raise ValueError(f"q must be >= 0 componentwise, got q={p.q.tolist()}")
    if not np.all(np.isfinite(p.mu)) or not np.all(np.isfinite(p.sigma)):
        raise ValueError("mu and sigma must be finite")

    cov = p.sigma @ p.sigma.T
    det = cov[0, 0] * cov[1, 1] - cov[0, 1] * cov[1, 0]
    if abs(det) < 1e-14 * max(1.0, float(np.abs(cov).max()) ** 2):
        raise ValueError(f"sigma must be nonsingular, got sigma={p.sigma.tolist()}")
    cov_inv = np.array([[cov[1, 1], -cov[0, 1]], [-cov[1, 0], cov[0, 0]]]) / det

    mu_excess = p.mu - p.r
    half_sharpe2 = 0.5 * float(mu_excess @ cov_inv @ mu_excess)
    kap = kappa_exponent(p.r, p.default_rate, half_sharpe2)
    return DerivedParams(
        cov=cov,
        cov_inv=cov_inv,
        mu_excess=mu_excess,
        mu_gap=p.mu - p.mu_b,
        sigma_gap=p.sigma - p.sigma_b,
        half_sharpe2=half_sharpe2,
        kappa=kap,
    )


def kappa_exponent(r: float, default_rate: float, half_sharpe2: float) -> float:
    """Decay exponent of the frictionless value: the larger root of

        r*k^2 - (r + lam + S) k + lam = 0,  S = half_sharpe2.

    Equivalently lam + S*k/(k - 1) - r*k = 0. For S = 0 the roots are
    {1, lam/r} and the larger one, max(1, lam/r), is returned; for S > 0
    the returned root exceeds max(1, lam/r) strictly.
    """
    if r <= 0.0 or default_rate <= 0.0 or half_sharpe2 < 0.0:
        raise ValueError(
            f"need r > 0, default_rate > 0, half_sharpe2 >= 0; "
            f"got {r}, {default_rate}, {half_sharpe2}"
        )
    if half_sharpe2 == 0.0:
        # degenerate quadratic factors as (k - 1)(r*k - lam)
        return max(1.0, default_rate / r)
    bsum = r + default_rate + half_sharpe2
    # bsum^2 - 4*r*lam rewritten as a sum of nonnegative terms: the naive
    # form cancels to a negative float when r ~ lam and S is denormal-tiny
    s = half_sharpe2
    diff = r - default_rate
    disc = diff * diff + s * s + 2.0 * s * (r + default_rate)
    return (bsum + math.sqrt(disc)) / (2.0 * r)


def _ratio(x, p: ModelParams):
    x = np.asarray(x, dtype=float)
    lo, hi = p.ruin_level, p.x_upper
    span = max(hi - lo, 1e-300)
    if np.any(x < lo - 1e-9 * span) or np.any(x > hi + 1e-9 * span):
        raise ValueError(f"x must lie in [{lo}, {hi}], got range [{x.min()}, {x.max()}]")
    return np.clip((p.c - p.r * x) / (p.c - p.r * lo), 0.0, 1.0)


def frictionless_value(x, p: ModelParams, d: DerivedParams | None = None):
    """U(x) = ((c - r*x)/(c - r*R))^kappa: ruin value with unconstrained
    investment, no fees, no drift ambiguity. U(R) = 1, U(c/r) = 0."""
    if d is None:
        d = validate_params(p)
    return _ratio(x, p) ** d.kappa


def no_invest_value(x, p: ModelParams):
    """P(x) = ((c - r*x)/(c - r*R))^(lam/r): ruin value of never investing.

    Consumption then drains wealth deterministically, so ruin happens at
    the hitting time of R and the value is the survival probability of the
    default clock up to that time.
    """
    return _ratio(x, p) ** (p.default_rate / p.r)


def frictionless_policy(x, p: ModelParams, d: DerivedParams | None = None):
    """Optimal fund allocation of the frictionless problem:

        pi*(x) = (sigma sigma^T)^{-1} (mu - r*1) * (c - r*x) / (r (kappa - 1)).

    Scalar x gives shape (2,), array x gives shape x.shape + (2,).
    """
    if d is None:
        d = validate_params(p)
    if d.half_sharpe2 == 0.0:
        base = np.zeros(2)
    else:
        assert d.kappa > 1.0, f"kappa = {d.kappa} <= 1 with positive Sharpe"
        base = d.cov_inv @ d.mu_excess / (p.r * (d.kappa - 1.0))
    x = np.asarray(x, dtype=float)
    scale = p.c - p.r * x
    return np.multiply.outer(scale, base) if x.ndim else scale * base


def control_drift(pi, theta, p: ModelParams, d: DerivedParams) -> np.ndarray:
    """Control-dependent drift b(pi, theta) of (X, Y1, Y2); the state's own
    r*x - c part is kept separate. Affine in theta."""
    pi = np.asarray(pi, dtype=float)
    theta = np.asarray(theta, dtype=float)
    bx = float(pi @ (d.mu_excess + p.sigma @ theta))
    by = -pi * (d.mu_gap + d.sigma_gap @ theta)
    return np.array([bx, by[0], by[1]])


def diffusion_matrix(pi, p: ModelParams, d: DerivedParams) -> np.ndarray:
    """Sigma(pi) = G G^T with G = [pi^T sigma; -diag(pi) (sigma - sigma_b)],
    shape (3, 3). Positive semidefinite of rank <= 2."""
    pi = np.asarray(pi, dtype=float)
    g = np.empty((3, 2))
    g[0] = pi @ p.sigma
    g[1] = -pi[0] * d.sigma_gap[0]
    g[2] = -pi[1] * d.sigma_gap[1]
    return g @ g.T


def theta_gain_vec(pi, grad, p: ModelParams, d: DerivedParams) -> np.ndarray:
    """Coefficient g of theta in b(pi, theta)^T grad:

        g = sigma^T pi * phi_x - (sigma - sigma_b)^T diag(pi) grad_y.

    The adversary's best response is a projection of eps*g.
    """
    pi = np.asarray(pi, dtype=float)
    grad = np.asarray(grad, dtype=float)
    return p.sigma.T @ pi * grad[0] - d.sigma_gap.T @ (pi * grad[1:])


@dataclass(frozen=True, eq=False)
class ThetaSet:
    """Admissible set for the adversary's Girsanov kernel.

    kind is one of "unconstrained", "box", "ball", "zero". Box bounds must
    contain 0 so the adversary can always do nothing.
    """

    kind: str = "unconstrained"
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None
    radius: float = 0.0

    def __post_init__(self):
        if self.kind not in ("unconstrained", "box", "ball", "zero"):
            raise ValueError(f"unknown theta set kind {self.kind!r}")
        if self.kind == "box":
            lo = np.asarray(self.lo, dtype=float).reshape(2)
            hi = np.asarray(self.hi, dtype=float).reshape(2)
            if np.any(lo > 0.0) or np.any(hi < 0.0):
                raise ValueError("theta box must contain 0")
            object.__setattr__(self, "lo", lo)
            object.__setattr__(self, "hi", hi)
        if self.kind == "ball" and self.radius < 0.0:
            raise ValueError(f"ball radius must be >= 0, got {self.radius}")

    @classmethod
    def zero(cls) -> "ThetaSet":
        return cls(kind="zero")

    @classmethod
    def box(cls, lo, hi) -> "ThetaSet":
        return cls(kind="box", lo=lo, hi=hi)

    @classmethod
    def ball(cls, radius: float) -> "ThetaSet":
        return cls(kind="ball", radius=radius)

    def project(self, theta: np.ndarray) -> np.ndarray:
        """Euclidean projection onto the set (identity if unconstrained)."""
        theta = np.asarray(theta, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(theta)
        if self.kind == "box":
            return np.clip(theta, self.lo, self.hi)
        if self.kind == "ball":
            nrm = float(np.sqrt(theta @ theta))
            if nrm > self.radius:
                scale = self.radius / nrm if nrm > 0.0 else 0.0
                return theta * scale
            return theta
        return theta


def inner_sup_theta(g, eps: float, theta_set: ThetaSet):
    """Closed-form inner maximization

        sup_theta  theta^T g - |theta|^2 / (2 eps)

    over the admissible set. Returns (theta_star, value).

    Unconstrained: theta* = eps*g, value = eps*|g|^2/2. The objective is
    separable, so on a box the optimum is the coordinatewise clamp of
    eps*g; on a centered ball it is the radial projection.
    """
    g = np.asarray(g, dtype=float)
    if eps <= 0.0:
        raise ValueError(f"eps must be > 0, got {eps}")
    theta = theta_set.project(eps * g)
    value = float(theta @ g - theta @ theta / (2.0 * eps))
    return theta, value


def hamiltonian(
    x: float,
    jet,
    p: ModelParams,
    d: DerivedParams,
    pi_candidates: np.ndarray,
    theta_set: ThetaSet,
):
    """Full nonlinear operator at a smooth jet:

        F = sup_pi inf_theta [ lam*phi - ((r*x - c) + b_x) phi_x
                               - b_y . grad_y phi
                               - (1/2) Tr(Sigma(pi) Hess phi)
                               + |theta|^2 / (2 eps) ]

    jet = (phi, grad, hess) with grad shape (3,) and hess shape (3, 3).
    The inner infimum is closed-form; the outer sup runs over the given
    candidate rows (shape (m, 2)). Returns (value, pi_star, theta_star).
    At a solution jet F = 0; the candidates must include (or closely
    bracket) the maximizing pi for that to be visible.
    """
    phi, grad, hess = jet
    grad = np.asarray(grad, dtype=float)
    hess = np.asarray(hess, dtype=float)
    cands = np.asarray(pi_candidates, dtype=float).reshape(-1, 2)

    base = p.default_rate * phi - (p.r * x - p.c) * grad[0]
    best = -math.inf
    best_pi = cands[0]
    best_theta = np.zeros(2)
    for pi in cands:
        g = theta_gain_vec(pi, grad, p, d)
        theta, gain = inner_sup_theta(g, p.eps, theta_set)
        b0 = control_drift(pi, np.zeros(2), p, d)
        sig = diffusion_matrix(pi, p, d)
        val = base - float(b0 @ grad) - 0.5 * float(np.trace(sig @ hess)) - gain
        if val > best:
            best = val
            best_pi = pi
            best_theta = theta
    return best, np.array(best_pi, dtype=float), best_theta


def fee_face_operator(i: int, jet, p: ModelParams) -> float:
    """Oblique boundary operator on the fee face y_i = 0:

        B^i[phi] = q_i phi_x - (1 + q_i) phi_{y_i}.

    Positively homogeneous of degree 1 in the jet. Zero at the reflection
    boundary of the value function.
    """
    _, grad, _ = jet
    grad = np.asarray(grad, dtype=float)
    return float(p.q[i] * grad[0] - (1.0 + p.q[i]) * grad[1 + i])


@dataclass(frozen=True, eq=False)
class PiBox:
    """Admissible allocation box [lo1, hi1] x [lo2, hi2] with the search
    lattice resolution used by the solver. A singleton (lo == hi) is the
    degenerate case, e.g. {0} for the no-investment problem."""

    lo: np.ndarray
    hi: np.ndarray
    n: tuple[int, int] = (11, 11)

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float).reshape(2)
        hi = np.asarray(self.hi, dtype=float).reshape(2)
        if np.any(lo > hi):
            raise ValueError(f"pi box must have lo <= hi, got lo={lo.tolist()} hi={hi.tolist()}")
        if any(k < 1 for k in self.n):
            raise ValueError(f"lattice resolution must be >= 1, got {self.n}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "n", (int(self.n[0]), int(self.n[1])))

    @classmethod
    def zero(cls) -> "PiBox":
        return cls(lo=np.zeros(2), hi=np.zeros(2), n=(1, 1))

    @classmethod
    def symmetric(cls, half_width: float, n: int = 11) -> "PiBox":
        w = float(half_width)
        return cls(lo=(-w, -w), hi=(w, w), n=(n, n))

    def lattice(self) -> np.ndarray:
        """Candidate rows, shape (n1*n2, 2), ordered by (|pi|^2, pi1, pi2)
        so that first-wins argmax tie-breaking prefers the smallest, then
        lexicographically smallest, allocation."""
        ax0 = np.linspace(self.lo[0], self.hi[0], self.n[0]) if self.n[0] > 1 else self.lo[:1]
        ax1 = np.linspace(self.lo[1], self.hi[1], self.n[1]) if self.n[1] > 1 else self.lo[1:]
        grid = np.stack(np.meshgrid(ax0, ax1, indexing="ij"), axis=-1).reshape(-1, 2)
        order = np.lexsort((grid[:, 1], grid[:, 0], (grid ** 2).sum(axis=1)))
        return np.ascontiguousarray(grid[order])

    def clamp(self, pi: np.ndarray) -> np.ndarray:
        return np.clip(pi, self.lo, self.hi)
