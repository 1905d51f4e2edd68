"""Path energy Γ on an evolving metric and the Harnack inequalities built on it.

Paths are meridian (or circle) curves parametrised by time.  ``Γ`` is
approximated from above by minimising a midpoint-rule energy over uniformly
timed waypoints; because the Harnack bound decreases in Γ, an upper bound
keeps the check conservative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.integrate import trapezoid
from scipy.optimize import minimize

from .errors import HypothesisViolation
from .estimates import (
    DerivedQuantities,
    EstimateReport,
    _nonneg_ricci,
    default_t_min,
    tolerance,
)
from .heat import HeatSolution
from .ricci_flow import MetricTrajectory

DEFAULT_WAYPOINTS = 64
DEFAULT_SLACK = 0.01


@dataclass
class PathCandidate:
    """Path ``γ: [t₁, t₂] → M`` sampled at uniform times (endpoints included)."""

    x1: float
    t1: float
    x2: float
    t2: float
    waypoints: np.ndarray
    energy: Optional[float] = None
    converged: bool = True

    def __post_init__(self):
        if not self.t1 < self.t2:
            raise ValueError(f"path needs t1 < t2, got t1={self.t1}, t2={self.t2}")
        self.waypoints = np.asarray(self.waypoints, dtype=float)
        if len(self.waypoints) < 2:
            raise ValueError("a path needs at least two waypoints")

    @property
    def times(self) -> np.ndarray:
        return np.linspace(self.t1, self.t2, len(self.waypoints))

    @classmethod
    def straight(cls, x1, t1, x2, t2, waypoints: int = DEFAULT_WAYPOINTS) -> "PathCandidate":
        return cls(x1, t1, x2, t2, np.linspace(x1, x2, waypoints))


@dataclass(frozen=True)
class HarnackParams:
    """Coefficients of ``f_t >= (1/A₁)(|∇f|² - A₂ - A₃/t)``."""

    A1: float
    A2: float
    A3: float

    def __post_init__(self):
        if self.A1 <= 0 or self.A2 < 0 or self.A3 < 0:
            raise ValueError(f"Harnack coefficients out of range: {self}")


def _metric_factors(traj: MetricTrajectory, times: np.ndarray):
    """Per-time callables returning ``(m, ∂m/∂x)`` where ``|dx|²_g = m dx²``."""
    model = traj.model
    if traj.homothetic:
        consts = [float(np.asarray(traj.state(float(t)).conf)) for t in times]
        return [lambda x, c=c: (np.full_like(x, c), np.zeros_like(x)) for c in consts]
    out = []
    for t in times:
        conf = np.exp(2.0 * traj.profile(float(t)))
        slope = np.gradient(conf, model.spacing)
        out.append(
            lambda x, c=conf, s=slope: (
                np.interp(x, model.coords, c),
                np.interp(x, model.coords, s),
            )
        )
    return out


def path_energy(path: PathCandidate, traj: MetricTrajectory) -> float:
    """Trapezoid rule for ``∫ |γ'(t)|²_{g(t)} dt`` with centred-difference velocities."""
    times = path.times
    x = path.waypoints
    vel = np.gradient(x, times, edge_order=2 if len(x) > 2 else 1)
    factors = _metric_factors(traj, times)
    m = np.array([fac(np.array([xi]))[0][0] for fac, xi in zip(factors, x)])
    return float(trapezoid(m * vel**2, times))


def _nearest_image(traj: MetricTrajectory, x1: float, x2: float) -> float:
    model = traj.model
    if not model.periodic:
        return x2
    d = (x2 - x1 + 0.5 * model.period) % model.period - 0.5 * model.period
    return x1 + d


def minimize_gamma(
    x1: float,
    t1: float,
    x2: float,
    t2: float,
    traj: MetricTrajectory,
    waypoints: int = DEFAULT_WAYPOINTS,
    rtol: float = 1e-8,
    maxiter: int = 5000,
) -> tuple[float, PathCandidate]:
    """Numerical ``Γ(x₁, t₁, x₂, t₂)`` and the optimising path.

    Minimises ``Σ m(x̄ₖ, t_{k+½}) (Δxₖ)² / Δt`` over interior waypoints with
    L-BFGS-B.  If the iteration cap is hit the best value is returned with
    ``converged = False`` on the path.
    """
    if not t1 < t2:
        raise ValueError(f"t1 < t2 required, got {t1}, {t2}")
    model = traj.model
    x2 = _nearest_image(traj, x1, x2)
    path = PathCandidate.straight(x1, t1, x2, t2, waypoints)
    if x1 == x2:
        path.energy = 0.0
        return 0.0, path

    dt = (t2 - t1) / (waypoints - 1)
    mids = t1 + (np.arange(waypoints - 1) + 0.5) * dt
    factors = _metric_factors(traj, mids)

    def energy(inner):
        x = np.concatenate([[x1], inner, [x2]])
        dx = np.diff(x)
        xbar = 0.5 * (x[1:] + x[:-1])
        m = np.empty_like(dx)
        mx = np.empty_like(dx)
        for k, fac in enumerate(factors):
            mk, mxk = fac(xbar[k : k + 1])
            m[k], mx[k] = mk[0], mxk[0]
        e = float(np.sum(m * dx**2) / dt)
        dk = (2.0 * m * dx + 0.5 * mx * dx**2) / dt  # ∂/∂x_{k+1} of segment k
        dk_left = (-2.0 * m * dx + 0.5 * mx * dx**2) / dt  # ∂/∂x_k of segment k
        grad = dk[:-1] + dk_left[1:]
        return e, grad

    bounds = None if model.periodic else [(0.0, model.extent)] * (waypoints - 2)
    res = minimize(
        energy,
        path.waypoints[1:-1],
        jac=True,
        method="L-BFGS-B",
        bounds=bounds,
        options={"ftol": rtol * 1e-2, "gtol": 1e-12, "maxiter": maxiter},
    )
    path.waypoints = np.concatenate([[x1], res.x, [x2]])
    path.energy = float(res.fun)
    path.converged = bool(res.success)
    return path.energy, path


def gamma_closed_form(traj: MetricTrajectory, x1: float, t1: float, x2: float, t2: float) -> float:
    """``d₀² / ∫ dt / conf(t)`` on homothetic models (optimal speed ∝ 1/conf)."""
    if not traj.homothetic:
        raise ValueError("closed-form Γ needs a homothetic trajectory")
    d0 = abs(_nearest_image(traj, x1, x2) - x1)
    c1, c2 = traj.scale(t1), traj.scale(t2)
    r2 = 1.0 if traj.model.periodic else traj.model.radius**2
    if math.isclose(c1, c2):
        integral = (t2 - t1) / (r2 * c1)
    else:
        rate = (c1 - c2) / (t2 - t1)
        integral = math.log(c1 / c2) / (rate * r2)
    return d0**2 / integral


def harnack_bound(u1: float, t1: float, t2: float, gamma: float, params: HarnackParams) -> float:
    """``u₁ (t₂/t₁)^{-A₃/A₁} exp(-(A₁/4)Γ - (A₂/A₁)(t₂ - t₁))``."""
    A1, A2, A3 = params.A1, params.A2, params.A3
    return u1 * (t2 / t1) ** (-A3 / A1) * math.exp(-0.25 * A1 * gamma - A2 / A1 * (t2 - t1))


def sample(sol: HeatSolution, x: float, t: float) -> float:
    """``u(x, t)`` by linear interpolation in space and time."""
    model = sol.model
    times = sol.times
    i = int(np.clip(np.searchsorted(times, t) - 1, 0, len(times) - 2))
    w = (t - times[i]) / (times[i + 1] - times[i])
    if abs(w) < 1e-12 or abs(w - 1) < 1e-12:
        rows = [sol.u[i + int(round(w))]]
        weights = [1.0]
    else:
        rows = [sol.u[i], sol.u[i + 1]]
        weights = [1.0 - w, w]
    xs = model.coords
    vals = []
    for row in rows:
        if model.periodic:
            xp = np.concatenate([xs, [model.period]])
            vals.append(np.interp(x % model.period, xp, np.concatenate([row, row[:1]])))
        else:
            vals.append(np.interp(x, xs, row))
    return float(np.dot(weights, vals))


def default_pairs(sol: HeatSolution, count: int = 24, seed: int = 0) -> list:
    """Deterministic point pairs on grid nodes and output times, ``t₁ < t₂``.

    The first pair runs from the first node to the middle node (pole to
    equator on the sphere); the rest are drawn from ``seed``.
    """
    rng = np.random.default_rng(seed)
    times = sol.times
    t_min = default_t_min(sol)
    first = int(np.searchsorted(times, t_min - 1e-15))
    coords = sol.model.coords
    mid = len(coords) // 2
    n_t = len(times)
    pairs = [(float(coords[0]), float(times[first]), float(coords[mid]), float(times[-1]))]
    while len(pairs) < count:
        i1, i2 = sorted(rng.choice(np.arange(first, n_t), size=2, replace=False))
        j1, j2 = rng.integers(0, len(coords), size=2)
        pairs.append((float(coords[j1]), float(times[i1]), float(coords[j2]), float(times[i2])))
    return pairs


def _hypothesis_margin(sol: HeatSolution, params: HarnackParams, t_min: float):
    dq = DerivedQuantities(sol)
    with np.errstate(divide="ignore", invalid="ignore"):
        margin = params.A1 * dq.f_t - dq.grad_f_sq + params.A2 + params.A3 / dq.t
    keep = sol.times >= t_min * (1 - 1e-12)
    scale = float(np.max(np.abs(dq.grad_f_sq[keep]))) if keep.any() else 1.0
    return margin, keep, tolerance(sol, scale)


def check_harnack_lemma(
    sol: HeatSolution,
    params: HarnackParams,
    pairs: Optional[Iterable[Sequence[float]]] = None,
    slack: float = DEFAULT_SLACK,
    waypoints: int = DEFAULT_WAYPOINTS,
    theorem: str = "harnack_lemma",
    t_min: Optional[float] = None,
) -> EstimateReport:
    """Integrated Harnack inequality on point pairs, after checking its hypothesis.

    Pair ``(x₁, t₁, x₂, t₂)`` passes when ``u(x₂, t₂) >= (1 - slack) · bound``.
    Times are solution times; Γ is computed on the (shifted) metric.
    """
    t_min = default_t_min(sol) if t_min is None else t_min
    margin, keep, tol = _hypothesis_margin(sol, params, t_min)
    bad = np.argwhere(keep[:, None] & (margin < -tol))
    if bad.size:
        i, j = bad[np.argmin(margin[tuple(bad.T)])]
        raise HypothesisViolation(
            f"f_t >= (|grad f|^2 - A2 - A3/t)/A1 fails at t={sol.times[i]:.6g}, "
            f"x={sol.model.coords[j]:.6g} (margin {margin[i, j]:.3e})"
        )
    pairs = default_pairs(sol) if pairs is None else list(pairs)
    ts, xs, lhs, rhs, records = [], [], [], [], []
    converged = True
    for x1, t1, x2, t2 in pairs:
        if not 0 < t1 < t2:
            raise ValueError(f"pair needs 0 < t1 < t2, got {(x1, t1, x2, t2)}")
        gamma, path = minimize_gamma(x1, t1 + sol.shift, x2, t2 + sol.shift, sol.traj, waypoints)
        converged &= path.converged
        u1, u2 = sample(sol, x1, t1), sample(sol, x2, t2)
        bound = harnack_bound(u1, t1, t2, gamma, params)
        ts.append(t2)
        xs.append(x2)
        lhs.append((1.0 - slack) * bound)
        rhs.append(u2)
        records.append([x1, t1, x2, t2, gamma, u2 / bound])
    return EstimateReport(
        theorem,
        np.array(ts),
        np.array(xs),
        np.array(lhs),
        np.array(rhs),
        0.0,
        checks={"gamma_converged": converged},
        extras={
            "A1": params.A1,
            "A2": params.A2,
            "A3": params.A3,
            "slack": slack,
            "pairs": records,
            "hypothesis_min_margin": float(np.min(margin[keep])),
        },
    )


def check_harnack_global(
    sol: HeatSolution, k: Optional[float] = None, pairs=None, **kw
) -> EstimateReport:
    """Harnack inequality with ``A₁ = 1, A₂ = kn, A₃ = n/2`` under ``0 <= Ric <= k g``."""
    k_meas = _nonneg_ricci(sol)
    k = k_meas if k is None else k
    if k < k_meas - 1e-12:
        raise HypothesisViolation(f"Ric <= k g fails: measured k2 = {k_meas:.6g} > k = {k}")
    n = sol.model.dim
    params = HarnackParams(1.0, k * n, 0.5 * n)
    return check_harnack_lemma(sol, params, pairs, theorem="harnack_global", **kw)


def alpha_params(n: int, k1: float, k2: float, alpha: float, c_prime: float) -> HarnackParams:
    kbar = max(k1, k2)
    A2 = c_prime * alpha**2 * kbar + n * k1 * alpha**3 / (alpha - 1.0)
    return HarnackParams(alpha, A2, c_prime * alpha**2)


def check_harnack_alpha(
    sol: HeatSolution,
    k1: float,
    k2: float,
    alpha: float,
    c_prime: Optional[float],
    pairs=None,
    **kw,
) -> EstimateReport:
    """Harnack inequality from the local space-time estimate with constant C'."""
    if alpha <= 1:
        raise ValueError(f"alpha must be > 1, got {alpha}")
    if c_prime is None:
        raise ValueError("check_harnack_alpha needs the fitted constant C'")
    params = alpha_params(sol.model.dim, k1, k2, alpha, c_prime)
    rep = check_harnack_lemma(sol, params, pairs, theorem="harnack_alpha", **kw)
    rep.extras.update({"alpha": alpha, "C_prime": c_prime, "k1": k1, "k2": k2})
    return rep


__all__ = [
    "HarnackParams",
    "PathCandidate",
    "alpha_params",
    "check_harnack_alpha",
    "check_harnack_global",
    "check_harnack_lemma",
    "default_pairs",
    "gamma_closed_form",
    "harnack_bound",
    "minimize_gamma",
    "path_energy",
    "sample",
]
