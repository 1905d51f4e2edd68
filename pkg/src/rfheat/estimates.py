"""Checkers for the gradient estimates and their evolution inequalities.

Every checker scans a :class:`~rfheat.heat.HeatSolution` and returns an
:class:`EstimateReport` holding per-point left/right hand sides.  Evolution
inequalities are checked as residuals ``(Δ - ∂t)G - (lower bound)`` where
``Δ`` is the discrete Laplace-Beltrami operator and ``∂t`` a central
difference over the stored output times, i.e. independently of the stepper.
Each residual also has a closed-form expression in terms of the Hessian of
``f = log u`` (it is a sum of squares for ``w`` and ``P``), which is recorded
as ``identity_gap`` for cross-checking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import HypothesisViolation
from .geometry import (
    Ball,
    check_ball,
    distance_from,
    hessian_frame,
    one_sided_end_derivative,
    ref_gradient,
    ref_laplacian,
    ricci_range,
)
from .heat import HeatSolution
from .ricci_flow import boundary_lambda

KAPPA = 10.0
CSV_COLUMNS = ("theorem", "t", "coord", "lhs", "rhs", "margin")


@dataclass
class EstimateReport:
    """Per-point record of one inequality check.

    ``passed`` requires ``min(rhs - lhs) >= -tolerance`` and every auxiliary
    flag in ``checks`` to hold.
    """

    theorem: str
    t: np.ndarray
    coord: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    tolerance: float
    fitted_constant: Optional[float] = None
    checks: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    @property
    def margin(self) -> np.ndarray:
        return self.rhs - self.lhs

    @property
    def min_margin(self) -> Optional[float]:
        return float(np.min(self.margin)) if self.margin.size else None

    @property
    def argmin(self) -> Optional[tuple[float, float]]:
        if not self.margin.size:
            return None
        j = int(np.argmin(self.margin))
        return float(self.t[j]), float(self.coord[j])

    @property
    def passed(self) -> bool:
        ok = self.min_margin is None or self.min_margin >= -self.tolerance
        return bool(ok and all(self.checks.values()))

    def summary(self) -> dict:
        out = {
            "theorem": self.theorem,
            "passed": self.passed,
            "points": int(self.margin.size),
            "min_margin": self.min_margin,
            "argmin": self.argmin,
            "tolerance": self.tolerance,
        }
        if self.fitted_constant is not None:
            out["fitted_constant"] = self.fitted_constant
        if self.checks:
            out["checks"] = {k: bool(v) for k, v in self.checks.items()}
        if self.extras:
            out["extras"] = self.extras
        return out

    def rows(self):
        for t, x, l, r, m in zip(self.t, self.coord, self.lhs, self.rhs, self.margin):
            yield (self.theorem, float(t), float(x), float(l), float(r), float(m))


def _report(theorem, sol, mask, lhs, rhs, tolerance, **kw) -> EstimateReport:
    tt = np.broadcast_to(sol.times[:, None], lhs.shape)
    xx = np.broadcast_to(sol.model.coords[None, :], lhs.shape)
    return EstimateReport(theorem, tt[mask], xx[mask], lhs[mask], rhs[mask], tolerance, **kw)


# ---------------------------------------------------------------------------
# derived quantities


@dataclass(frozen=True)
class EstimateParams:
    """``α ≥ 1`` with a split ``a + b = 1/α`` and Ricci bounds ``-k₁ g <= Ric <= k₂ g``."""

    alpha: float = 1.0
    a: float = 0.5
    b: float = 0.5
    k1: float = 0.0
    k2: float = 0.0

    def __post_init__(self):
        if self.alpha < 1:
            raise ValueError(f"alpha must be >= 1, got {self.alpha}")
        if self.a <= 0 or self.b <= 0:
            raise ValueError("a and b must be positive")
        if abs(self.a + self.b - 1.0 / self.alpha) > 1e-12:
            raise ValueError("a + b must equal 1/alpha")
        if self.k1 < 0 or self.k2 < 0:
            raise ValueError("Ricci bounds must be nonnegative")

    @classmethod
    def split(cls, alpha: float, a: Optional[float] = None, k1=0.0, k2=0.0) -> "EstimateParams":
        a = 0.5 / alpha if a is None else a
        return cls(alpha, a, 1.0 / alpha - a, k1, k2)


class DerivedQuantities:
    """``f = log u`` and the auxiliary functions built from it, on all samples.

    Arrays have shape ``(ntimes, npoints)``.  ``|∇·|²`` and ``∇·∇`` use the
    metric of the sample's time; ``f_t = Δu / u`` comes from the equation.
    """

    def __init__(self, sol: HeatSolution):
        self.sol = sol
        self.model = sol.model
        self.t = sol.times[:, None]
        self.u = sol.u
        self.conf = sol.conf_rows()
        self.ricci = sol.ricci_rows()
        self.du = ref_gradient(self.model, self.u)
        self.grad_u_sq = self.du**2 / self.conf
        self.lap_u = ref_laplacian(self.model, self.u) / self.conf
        self.f = np.log(self.u)
        self.grad_f_sq = self.grad_u_sq / self.u**2
        self.f_t = self.lap_u / self.u
        self.n = self.model.dim

    @property
    def A(self) -> float:
        return self.sol.A

    def F(self, alpha: float) -> np.ndarray:
        return self.t * (self.grad_f_sq - alpha * self.f_t)

    @property
    def F1(self) -> np.ndarray:
        return self.F(1.0)

    def P(self, A: Optional[float] = None) -> np.ndarray:
        A = self.A if A is None else A
        return self.t * self.grad_u_sq / self.u - self.u * np.log(A / self.u)

    def rescaled_f(self) -> np.ndarray:
        """``log(u / A)`` so that the normalised solution is bounded by 1."""
        return np.log(self.u / self.A)

    def w(self) -> np.ndarray:
        return self.grad_f_sq / (1.0 - self.rescaled_f()) ** 2

    def space_time_lhs(self, alpha: float) -> np.ndarray:
        """``|∇u|²/u² - α u_t/u`` (α = 1 gives the Li-Yau quantity)."""
        return self.grad_f_sq - alpha * self.f_t

    # operators on derived fields
    def lap(self, G: np.ndarray) -> np.ndarray:
        return ref_laplacian(self.model, G) / self.conf

    def dot(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return ref_gradient(self.model, a) * ref_gradient(self.model, b) / self.conf

    def heat_op(self, G: np.ndarray) -> np.ndarray:
        """``(Δ - ∂t)G`` with a five-point central time stencil; two edge rows per side are NaN."""
        out = np.full_like(G, np.nan)
        steps = np.diff(self.sol.times)
        delta = float(steps[0])
        if len(steps) < 4 or np.ptp(steps) > 1e-9 * delta:
            raise ValueError("evolution residuals need at least 5 uniformly spaced samples")
        dGdt = (G[:-4] - 8.0 * G[1:-3] + 8.0 * G[3:-1] - G[4:]) / (12.0 * delta)
        out[2:-2] = self.lap(G)[2:-2] - dGdt
        return out

    def hessian_f(self) -> np.ndarray:
        """Orthonormal-frame Hessian diagonal of f, shape ``(ntimes, npoints, dim)``."""
        return np.array(
            [hessian_frame(self.f[i], self.sol.state(i)) for i in range(len(self.sol.times))]
        )

    def hessian_u(self) -> np.ndarray:
        return np.array(
            [hessian_frame(self.u[i], self.sol.state(i)) for i in range(len(self.sol.times))]
        )


def default_t_min(sol: HeatSolution) -> float:
    """``max(2Δt, first positive output time)``."""
    return max(2.0 * sol.dt, float(sol.times[1]))


def _time_mask(sol, t_min, t_max=None, interior=False) -> np.ndarray:
    t = sol.times
    keep = t >= t_min * (1 - 1e-12)
    if t_max is not None:
        keep &= t <= t_max * (1 + 1e-12)
    if interior:
        keep[:2] = keep[-2:] = False
    return np.broadcast_to(keep[:, None], sol.u.shape)


def tolerance(sol: HeatSolution, scale: float, time_differenced: bool = False) -> float:
    """``κ (Δt + Δθ²) · scale``; time-differenced quantities add the output spacing to the 4th."""
    disc = sol.discretization_scale()
    if time_differenced:
        disc += float(np.max(np.diff(sol.times))) ** 4
    return KAPPA * disc * max(1.0, float(scale))


def _safe_max(a: np.ndarray) -> float:
    return float(np.max(np.abs(a))) if a.size else 0.0


def _nonneg_ricci(sol: HeatSolution, t_max: Optional[float] = None) -> float:
    """Upper Ricci bound on the solution's time span; raises if Ric < 0 somewhere."""
    t0 = sol.shift
    t1 = sol.shift + (sol.T if t_max is None else t_max)
    k1, k2 = ricci_range(sol.traj, (t0, t1))
    if k1 > 1e-9 * max(1.0, k2):
        raise HypothesisViolation(f"Ricci curvature is negative (k1 = {k1:.3e}); 0 <= Ric fails")
    return k2


# ---------------------------------------------------------------------------
# space-only estimates


def space_only_sides(dq: DerivedQuantities, A: Optional[float] = None):
    A = dq.A if A is None else A
    lhs = np.sqrt(dq.grad_f_sq)
    with np.errstate(divide="ignore", invalid="ignore"):
        rhs = np.sqrt(np.maximum(np.log(A / dq.u), 0.0) / dq.t)
    return lhs, rhs


def check_space_only_global(
    sol: HeatSolution, t_min: Optional[float] = None, theorem: str = "space_only_global"
) -> EstimateReport:
    """``|∇u|/u <= sqrt(log(A/u)/t)`` with ``A = sup u(·, 0)``."""
    dq = DerivedQuantities(sol)
    t_min = default_t_min(sol) if t_min is None else t_min
    mask = _time_mask(sol, t_min)
    lhs, rhs = space_only_sides(dq)
    tol = tolerance(sol, _safe_max(lhs[mask]))
    return _report(theorem, sol, mask, lhs, rhs, tol, extras={"t_min": t_min, "A": dq.A})


def p_identity(dq: DerivedQuantities, hess_u: np.ndarray) -> np.ndarray:
    """``2(t/u) Σ (u_ij - u_i u_j / u)²`` for axisymmetric u."""
    sq = hess_u.copy()
    sq[..., 0] -= dq.grad_u_sq / dq.u
    return 2.0 * dq.t / dq.u * np.sum(sq**2, axis=-1)


def verify_P_nonpositive(sol: HeatSolution, t_min: Optional[float] = None) -> EstimateReport:
    """``P = t|∇u|²/u - u log(A/u) <= 0`` and ``(Δ - ∂t)P >= 0``.

    The rows record the evolution inequality (lhs = 0, rhs = residual); the
    sign of P itself is an auxiliary check.
    """
    dq = DerivedQuantities(sol)
    t_min = default_t_min(sol) if t_min is None else t_min
    P = dq.P()
    res = dq.heat_op(P)
    mask = _time_mask(sol, t_min, interior=True)
    all_t = _time_mask(sol, 0.0)
    p_tol = tolerance(sol, _safe_max(P))
    res_tol = tolerance(sol, _safe_max(res[mask]), time_differenced=True)
    ident = p_identity(dq, dq.hessian_u())
    gap = _safe_max((res - ident)[mask])
    return _report(
        "P_nonpositive",
        sol,
        mask,
        np.zeros_like(res),
        res,
        res_tol,
        checks={"P_nonpositive": float(np.max(P[all_t])) <= p_tol},
        extras={
            "max_P": float(np.max(P[all_t])),
            "P_tolerance": p_tol,
            "identity_gap": gap,
            "t_min": t_min,
        },
    )


def w_identity(dq: DerivedQuantities, hess_f: np.ndarray) -> np.ndarray:
    """``2 Σ (f_ij/(1-f) + f_i f_j/(1-f)²)²`` with f normalised by A."""
    one_m = 1.0 - dq.rescaled_f()
    sq = hess_f / one_m[..., None]
    sq[..., 0] += dq.grad_f_sq / one_m**2
    return 2.0 * np.sum(sq**2, axis=-1)


def verify_w_inequality(
    sol: HeatSolution, t_min: Optional[float] = None, ball: Optional[Ball] = None
) -> EstimateReport:
    """``(Δ - ∂t)w >= (2f/(1-f)) ∇f∇w + 2(1-f) w²`` for ``u/A <= 1``."""
    dq = DerivedQuantities(sol)
    t_min = default_t_min(sol) if t_min is None else t_min
    f = dq.rescaled_f()
    w = dq.w()
    lhs_op = dq.heat_op(w)
    lower = 2.0 * f / (1.0 - f) * dq.dot(f, w) + 2.0 * (1.0 - f) * w**2
    mask = _time_mask(sol, t_min, interior=True)
    if ball is not None:
        mask = mask & _ball_mask(sol, ball, ball.radius)
    res = lhs_op - lower
    gap = _safe_max((res - w_identity(dq, dq.hessian_f()))[mask])
    tol = tolerance(sol, _safe_max(lhs_op[mask]), time_differenced=True)
    return _report(
        "w_lemma",
        sol,
        mask,
        lower,
        lhs_op,
        tol,
        extras={"min_residual": float(np.min(res[mask])), "identity_gap": gap, "t_min": t_min},
    )


# ---------------------------------------------------------------------------
# space-time estimates


def F_identity(dq: DerivedQuantities, params: EstimateParams, hess_f: np.ndarray) -> np.ndarray:
    """Exact ``(Δ - ∂t)F + 2∇f∇F + (L - α f_t)`` along Ricci flow with ``Ric = ρ g``.

    Equals ``2t(|∇²f|² + α⟨Ric, ∇²f⟩ + α Ric(∇f, ∇f))``.
    """
    alpha = params.alpha
    hess_sq = np.sum(hess_f**2, axis=-1)
    trace = np.sum(hess_f, axis=-1)
    return 2.0 * dq.t * (hess_sq + alpha * dq.ricci * trace + alpha * dq.ricci * dq.grad_f_sq)


def F_lower_bound(dq: DerivedQuantities, params: EstimateParams, F: np.ndarray) -> np.ndarray:
    alpha, a, b = params.alpha, params.a, params.b
    n, t, L = dq.n, dq.t, dq.grad_f_sq
    kmax2 = max(params.k1**2, params.k2**2)
    return (
        -2.0 * dq.dot(dq.f, F)
        + 2.0 * a * alpha * t / n * (L - dq.f_t) ** 2
        - (L - alpha * dq.f_t)
        - 2.0 * params.k1 * alpha * t * L
        - alpha * t * n / (2.0 * b) * kmax2
    )


def verify_F_inequality(
    sol: HeatSolution, params: EstimateParams, t_min: Optional[float] = None
) -> EstimateReport:
    """Evolution inequality for ``F = t(|∇f|² - α f_t)``."""
    if params.alpha < 1:
        raise ValueError("alpha must be >= 1")
    dq = DerivedQuantities(sol)
    k1, k2 = ricci_range(sol.traj, (sol.shift, sol.shift + sol.T))
    if k1 > params.k1 + 1e-12 or k2 > params.k2 + 1e-12:
        raise HypothesisViolation(
            f"Ricci bounds ({k1:.4g}, {k2:.4g}) exceed the supplied ({params.k1}, {params.k2})"
        )
    t_min = default_t_min(sol) if t_min is None else t_min
    F = dq.F(params.alpha)
    lhs_op = dq.heat_op(F)
    lower = F_lower_bound(dq, params, F)
    mask = _time_mask(sol, t_min, interior=True)
    exact = F_identity(dq, params, dq.hessian_f()) - 2.0 * dq.dot(dq.f, F) - (
        dq.grad_f_sq - params.alpha * dq.f_t
    )
    gap = _safe_max((lhs_op - exact)[mask])
    tol = tolerance(sol, _safe_max(lhs_op[mask]), time_differenced=True)
    return _report(
        "F_lemma",
        sol,
        mask,
        lower,
        lhs_op,
        tol,
        extras={
            "alpha": params.alpha,
            "a": params.a,
            "b": params.b,
            "k1": params.k1,
            "k2": params.k2,
            "min_residual": float(np.min((lhs_op - lower)[mask])),
            "identity_gap": gap,
            "t_min": t_min,
        },
    )


def check_liyau_global(
    sol: HeatSolution,
    k: Optional[float] = None,
    t_min: Optional[float] = None,
    theorem: str = "liyau_global",
) -> EstimateReport:
    """``|∇u|²/u² - u_t/u <= kn + n/(2t)`` under ``0 <= Ric <= k g``."""
    k_meas = _nonneg_ricci(sol)
    k = k_meas if k is None else k
    if k < k_meas - 1e-12:
        raise HypothesisViolation(f"Ric <= k g fails: measured k2 = {k_meas:.6g} > k = {k}")
    dq = DerivedQuantities(sol)
    t_min = default_t_min(sol) if t_min is None else t_min
    mask = _time_mask(sol, t_min)
    lhs = dq.space_time_lhs(1.0)
    with np.errstate(divide="ignore"):
        rhs = np.broadcast_to(k * dq.n + dq.n / (2.0 * dq.t), lhs.shape)
    tol = tolerance(sol, _safe_max(lhs[mask]))
    return _report(theorem, sol, mask, lhs, rhs, tol, extras={"k": k, "t_min": t_min})


def f1_quadratic_bound(a: float, t0: float, k: float, n: int) -> float:
    """Root bound ``n/(4a)(1 + sqrt(1 + 4a t₀² k²/(1-a)))`` of the F₁ quadratic."""
    inner = 0.0 if k == 0 else 4.0 * a * t0**2 * k**2 / (1.0 - a)
    return n / (4.0 * a) * (1.0 + math.sqrt(1.0 + inner))


def optimal_split(t0: float, k: float) -> float:
    """Minimiser ``a = (1 + k t₀)/(1 + 2k t₀)`` of :func:`f1_quadratic_bound`."""
    return (1.0 + k * t0) / (1.0 + 2.0 * k * t0)


def verify_F1_max_bound(
    sol: HeatSolution,
    k: Optional[float] = None,
    tau: Optional[float] = None,
    t_min: Optional[float] = None,
) -> EstimateReport:
    """``F₁ = t(|∇f|² - f_t) <= t k n + n/2`` on ``M × [0, τ]``, plus the argmax bound."""
    tau = sol.T if tau is None else tau
    k_meas = _nonneg_ricci(sol, tau)
    k = k_meas if k is None else k
    dq = DerivedQuantities(sol)
    n = dq.n
    t_min = default_t_min(sol) if t_min is None else t_min
    mask = _time_mask(sol, t_min, tau)
    F1 = dq.F1
    rhs = np.broadcast_to(dq.t * k * n + n / 2.0, F1.shape)
    masked = np.where(mask, F1, -np.inf)
    i, j = np.unravel_index(int(np.argmax(masked)), F1.shape)
    f1_max = max(0.0, float(masked[i, j]))  # F₁ vanishes at t = 0
    t0 = float(sol.times[i]) if f1_max > 0 else 0.0
    bound = t0 * k * n + n / 2.0
    a_star = optimal_split(t0, k)
    quad = f1_quadratic_bound(a_star, t0, k, n) if a_star < 1 else n / 2.0
    tol = tolerance(sol, _safe_max(F1[mask]))
    return _report(
        "F1_max_bound",
        sol,
        mask,
        F1,
        rhs,
        tol,
        checks={"argmax_bound": f1_max <= bound + tol},
        extras={
            "k": k,
            "tau": tau,
            "F1_max": f1_max,
            "argmax": [t0, float(sol.model.coords[j])],
            "bound_at_argmax": bound,
            "tightness": f1_max / bound,
            "a_star": a_star,
            "quadratic_bound_at_a_star": quad,
            "t_min": t_min,
        },
    )


# ---------------------------------------------------------------------------
# local estimates with fitted constants


def _ball_mask(sol: HeatSolution, ball: Ball, radius: float) -> np.ndarray:
    rows = [
        distance_from(sol.state(i), ball.center) < radius for i in range(len(sol.times))
    ]
    return np.array(rows)


def constant_drift(coarse: float, fine: float) -> float:
    """Relative change of a fitted constant between two resolutions."""
    scale = max(abs(coarse), abs(fine))
    return 0.0 if scale == 0 else abs(fine - coarse) / scale


def fit_constant_space_only(
    sol: HeatSolution, ball: Ball, k: Optional[float] = None, t_min: Optional[float] = None
) -> EstimateReport:
    """Smallest C with ``|∇u|/u <= C(1/ρ + 1/√t + √k)(1 + log(A/u))`` on ``B_{ρ/2,T}``.

    ``A`` is the supremum of u over ``B_{ρ,T}`` and ``k`` bounds ``|Ric|``
    (operator norm) there.
    """
    check_ball(sol.traj, ball, sol.times + sol.shift)
    if k is None:
        k1, k2 = ricci_range(sol.traj, (sol.shift, sol.shift + sol.T))
        k = max(k1, k2)
    dq = DerivedQuantities(sol)
    t_min = default_t_min(sol) if t_min is None else t_min
    big = _ball_mask(sol, ball, ball.radius)
    A = float(np.max(sol.u[big]))
    mask = _time_mask(sol, t_min) & _ball_mask(sol, ball, 0.5 * ball.radius)
    rho = ball.radius
    lhs = np.sqrt(dq.grad_f_sq)
    with np.errstate(divide="ignore"):
        base = (1.0 / rho + 1.0 / np.sqrt(dq.t) + math.sqrt(k)) * (1.0 + np.log(A / dq.u))
    ratio = np.where(mask, lhs / base, 0.0)
    C = float(np.max(ratio)) if mask.any() else 0.0
    tol = tolerance(sol, _safe_max(lhs[mask]))
    return _report(
        "space_only_local",
        sol,
        mask,
        lhs,
        C * np.where(mask, base, 0.0),
        tol,
        fitted_constant=C,
        extras={"rho": rho, "k": k, "A": A, "t_min": t_min},
    )


def fit_constant_space_time(
    sol: HeatSolution,
    ball: Optional[Ball],
    k1: float,
    k2: float,
    alpha: float,
    t_min: Optional[float] = None,
) -> EstimateReport:
    """Smallest C' in the local space-time estimate on ``B_{ρ/2,T}``.

    ``ball=None`` fits on the whole manifold with the ``1/ρ²`` term dropped
    (the ρ → ∞ limit used for the Harnack inequality).
    """
    if alpha <= 1:
        raise ValueError(f"alpha must be > 1, got {alpha}")
    k1m, k2m = ricci_range(sol.traj, (sol.shift, sol.shift + sol.T))
    if k1m > k1 + 1e-12 or k2m > k2 + 1e-12:
        raise HypothesisViolation(
            f"measured Ricci bounds ({k1m:.4g}, {k2m:.4g}) exceed ({k1}, {k2})"
        )
    dq = DerivedQuantities(sol)
    t_min = default_t_min(sol) if t_min is None else t_min
    mask = _time_mask(sol, t_min)
    if ball is not None:
        check_ball(sol.traj, ball, sol.times + sol.shift)
        mask = mask & _ball_mask(sol, ball, 0.5 * ball.radius)
        rho_term = alpha**2 / (ball.radius**2 * (alpha - 1.0))
    else:
        rho_term = 0.0
    n = dq.n
    kbar = max(k1, k2)
    explicit = n * k1 * alpha**3 / (alpha - 1.0)
    lhs = dq.space_time_lhs(alpha)
    with np.errstate(divide="ignore"):
        denom = alpha**2 * (rho_term + 1.0 / dq.t + kbar)
    ratio = np.where(mask, (lhs - explicit) / denom, 0.0)
    C = max(0.0, float(np.max(ratio))) if mask.any() else 0.0
    rhs = C * denom + explicit
    tol = tolerance(sol, _safe_max(lhs[mask]))
    return _report(
        "space_time_local",
        sol,
        mask,
        lhs,
        np.broadcast_to(rhs, lhs.shape),
        tol,
        fitted_constant=C,
        extras={
            "alpha": alpha,
            "rho": None if ball is None else ball.radius,
            "k1": k1,
            "k2": k2,
            "t_min": t_min,
        },
    )


# ---------------------------------------------------------------------------
# manifolds with boundary


def _normal_derivative(sol: HeatSolution, G: np.ndarray) -> np.ndarray:
    """Outward g(t)-normal derivative at the cap boundary, one row per time."""
    conf_b = np.array([sol.state(i).conf_grid[-1] for i in range(len(sol.times))])
    return one_sided_end_derivative(sol.model, G) / np.sqrt(conf_b)


def _boundary_setup(sol: HeatSolution):
    if sol.model.kind != "spherical_cap":
        raise ValueError("boundary checks need a spherical_cap solution")
    data = boundary_lambda(sol.traj)
    if np.any(data.lam < 0):
        raise HypothesisViolation("lambda(t) < 0: the boundary is not convex")
    return data


def check_space_only_boundary(sol: HeatSolution, t_min: Optional[float] = None) -> EstimateReport:
    """Space-only estimate on a cap with Neumann data, plus ``∂P/∂ν <= 0`` on the boundary."""
    data = _boundary_setup(sol)
    rep = check_space_only_global(sol, t_min, theorem="space_only_boundary")
    dq = DerivedQuantities(sol)
    dP = _normal_derivative(sol, dq.P())
    lam = np.array([data(float(t) + sol.shift) for t in sol.times])
    expected = -2.0 * sol.times / dq.u[:, -1] * lam * dq.grad_u_sq[:, -1]
    tol = tolerance(sol, _safe_max(dq.P()))
    rep.checks["dP_dnu_nonpositive"] = float(np.max(dP)) <= tol
    rep.extras.update(
        {
            "max_dP_dnu": float(np.max(dP)),
            "dP_dnu_expected_max": float(np.max(expected)),
            "normal_tolerance": tol,
            "lambda_min": float(np.min(data.lam)),
        }
    )
    return rep


def check_liyau_boundary(
    sol: HeatSolution, k: Optional[float] = None, t_min: Optional[float] = None
) -> EstimateReport:
    """Li-Yau estimate on a cap with Neumann data, plus ``∂F₁/∂ν <= 0`` on the boundary."""
    data = _boundary_setup(sol)
    rep = check_liyau_global(sol, k, t_min, theorem="liyau_boundary")
    dq = DerivedQuantities(sol)
    F1 = dq.F1
    dF = _normal_derivative(sol, F1)
    tol = tolerance(sol, _safe_max(F1))
    rep.checks["dF1_dnu_nonpositive"] = float(np.max(dF)) <= tol
    rep.extras.update(
        {
            "max_dF1_dnu": float(np.max(dF)),
            "normal_tolerance": tol,
            "lambda_min": float(np.min(data.lam)),
        }
    )
    return rep


# ---------------------------------------------------------------------------
# pointwise algebra behind the lemmas


def square_completion_terms(H, R, alpha: float, a: float, b: float):
    """Split ``Σ(f_ij² + α R_ij f_ij)`` into ``lower + square``.

    Returns ``(total, lower, square)`` with ``lower = aα Σf_ij² - (α/4b) ΣR_ij²``
    and ``square = α Σ(√b f_ij + R_ij/(2√b))²``.
    """
    H = np.atleast_2d(np.asarray(H, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    total = float(np.sum(H**2 + alpha * R * H))
    lower = float(a * alpha * np.sum(H**2) - alpha / (4.0 * b) * np.sum(R**2))
    square = float(alpha * np.sum((math.sqrt(b) * H + R / (2.0 * math.sqrt(b))) ** 2))
    return total, lower, square


def w_algebra_terms(H, g, f: float):
    """Both sides of the pointwise identity behind the w-lemma.

    ``direct`` is the expanded form of ``(Δ - ∂t)w``; ``regrouped`` is the
    sum-of-squares form.  Also returns the lemma's lower bound.
    """
    H = np.asarray(H, dtype=float)
    g = np.asarray(g, dtype=float)
    q = 1.0 - f
    gHg = float(g @ H @ g)
    g2 = float(g @ g)
    direct = (
        2.0 * np.sum(H**2) / q**2 + 8.0 * gHg / q**3 - 4.0 * gHg / q**2
        + 6.0 * g2**2 / q**4 - 2.0 * g2**2 / q**3
    )
    grad_w = 2.0 * H @ g / q**2 + 2.0 * g2 * g / q**3
    gw = float(g @ grad_w)
    regrouped = (
        2.0 * np.sum((H / q + np.outer(g, g) / q**2) ** 2) + 2.0 * gw / q + 2.0 * g2**2 / q**3 - 2.0 * gw
    )
    w = g2 / q**2
    lower = 2.0 * f / q * gw + 2.0 * q * w**2
    scale = (
        2.0 * np.sum(H**2) / q**2 + 12.0 * abs(gHg) / q**2 + 6.0 * g2**2 / q**4 + 2.0 * g2**2 / q**3
    )
    return float(direct), float(regrouped), float(lower), float(scale)


def _random_symmetric(rng, n):
    X = rng.standard_normal((n, n))
    return 0.5 * (X + X.T)


def random_square_completion_checks(
    seed: int = 0, trials: int = 10_000, dims: Sequence[int] = (2, 3, 4), rel_tol: float = 1e-12
) -> EstimateReport:
    """Random-tensor verification of the two algebraic steps of the lemmas.

    For every trial: the w-identity (expanded vs. sum-of-squares form), the
    w lower bound, the completed square, its lower bound and the trace
    inequality ``Σ f_ij² >= (Δf)²/n``.
    """
    rng = np.random.default_rng(seed)
    rows_t, rows_x, rows_l, rows_r = [], [], [], []
    max_w_err = max_sq_err = 0.0
    min_w_margin = min_trace_margin = math.inf
    for n in dims:
        for trial in range(trials):
            H = _random_symmetric(rng, n)
            g = rng.standard_normal(n)
            f = -rng.exponential(1.0)
            k1, k2 = rng.uniform(0.0, 2.0, size=2)
            Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
            R = Q @ np.diag(rng.uniform(-k1, k2, size=n)) @ Q.T
            alpha = rng.uniform(1.0, 4.0)
            a = rng.uniform(0.05, 0.95) / alpha
            b = 1.0 / alpha - a

            direct, regrouped, lower_w, scale_w = w_algebra_terms(H, g, f)
            max_w_err = max(max_w_err, abs(direct - regrouped) / scale_w)
            min_w_margin = min(min_w_margin, (direct - lower_w) / scale_w)

            total, lower, square = square_completion_terms(H, R, alpha, a, b)
            scale = float(np.sum(H**2) + alpha * np.sum(np.abs(R * H)) + alpha / (4 * b) * np.sum(R**2))
            max_sq_err = max(max_sq_err, abs(total - (lower + square)) / scale)
            trace_gap = float(np.sum(H**2) - np.trace(H) ** 2 / n)
            min_trace_margin = min(min_trace_margin, trace_gap / float(np.sum(H**2)))

            rows_t.append(n)
            rows_x.append(trial)
            rows_l.append(lower)
            rows_r.append(total)
    hand = square_completion_terms(1.0, 1.0, 2.0, 0.25, 0.25)
    checks = {
        "hand_instance": np.allclose(hand, (3.0, -1.5, 4.5), rtol=0, atol=1e-15),
        "w_identity": max_w_err <= rel_tol,
        "w_lower_bound": min_w_margin >= -rel_tol,
        "square_identity": max_sq_err <= rel_tol,
        "trace_inequality": min_trace_margin >= -rel_tol,
    }
    lhs = np.array(rows_l)
    rhs = np.array(rows_r)
    scale = float(np.max(np.abs(rhs))) if rhs.size else 1.0
    return EstimateReport(
        "square_completion",
        np.array(rows_t, dtype=float),
        np.array(rows_x, dtype=float),
        lhs,
        rhs,
        rel_tol * max(1.0, scale),
        checks=checks,
        extras={
            "seed": seed,
            "trials": trials,
            "dims": list(dims),
            "max_w_identity_error": max_w_err,
            "max_square_identity_error": max_sq_err,
            "min_w_margin": min_w_margin,
            "min_trace_margin": min_trace_margin,
            "hand_instance": list(hand),
        },
    )
