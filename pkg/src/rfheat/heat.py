"""Positive solutions of the heat equation on an evolving model metric.

``solve_fd`` is a method-of-lines solver (classical RK4 in time, the
conservative reference Laplacian in space divided by the conformal factor of
``g(t)``).  ``solve_spectral_sphere`` evaluates the exact zonal-harmonic
solution on a shrinking round sphere and serves as the oracle for it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import eval_gegenbauer

from .errors import CFLViolation, PositivityError
from .geometry import (
    ManifoldModel,
    MetricState,
    laplace_beltrami,
    one_sided_end_derivative,
)
from .ricci_flow import CFL_FACTOR, MetricTrajectory

DEFAULT_OUTPUTS = 201


@dataclass
class HeatSolution:
    """Samples ``u[i, j] = u(coords[j], times[i])`` of a positive heat solution.

    ``shift`` is the ε of the time shift: sample ``i`` lives on the metric
    ``g(times[i] + shift)``.  ``dt`` is the stepper's time step (0 for exact
    solutions).
    """

    traj: MetricTrajectory
    times: np.ndarray
    u: np.ndarray
    dt: float
    method: str
    shift: float = 0.0
    warnings: list = field(default_factory=list)

    @property
    def model(self) -> ManifoldModel:
        return self.traj.model

    @property
    def A(self) -> float:
        return sup_initial(self)

    @property
    def u_min(self) -> float:
        return float(np.min(self.u))

    @property
    def T(self) -> float:
        return float(self.times[-1])

    def state(self, index: int) -> MetricState:
        return self.traj.state(float(self.times[index]) + self.shift)

    def conf_rows(self) -> np.ndarray:
        """Conformal factor for every output time, shape ``(ntimes, npoints)``."""
        return np.array([self.state(i).conf_grid for i in range(len(self.times))])

    def ricci_rows(self) -> np.ndarray:
        return np.array([self.state(i).ricci_grid for i in range(len(self.times))])

    def u_t(self, index: int) -> np.ndarray:
        return laplace_beltrami(self.u[index], self.state(index))

    def u_t_fd(self, index: int) -> np.ndarray:
        """Central time difference of the stored samples (cross-check of ``u_t``)."""
        i = min(max(index, 1), len(self.times) - 2)
        return (self.u[i + 1] - self.u[i - 1]) / (self.times[i + 1] - self.times[i - 1])

    def discretization_scale(self) -> float:
        """``Δt + Δθ²`` entering the tolerance model."""
        return self.dt + self.model.spacing**2

    def mass(self, index: int) -> float:
        """``∫ u dV_ref`` with the solver's quadrature weights."""
        return float(np.dot(self.model.operator.weights, self.u[index]))


def sup_initial(solution: HeatSolution) -> float:
    """``A = sup_M u(·, 0)`` over the grid."""
    return float(np.max(solution.u[0]))


# ---------------------------------------------------------------------------
# initial data


def zonal_harmonic(model: ManifoldModel, degree: int, theta: Optional[np.ndarray] = None):
    """Zonal harmonic of ``degree`` on S^n, normalised to 1 at the north pole."""
    theta = model.coords if theta is None else theta
    lam = 0.5 * (model.dim - 1)
    x = np.cos(theta)
    return eval_gegenbauer(degree, lam, x) / eval_gegenbauer(degree, lam, 1.0)


def modal_field(model: ManifoldModel, coeffs: Sequence[float]) -> np.ndarray:
    return sum(a * zonal_harmonic(model, l) for l, a in enumerate(coeffs))


def initial_data(model: ManifoldModel, kind: str, params: Sequence[float] = ()) -> np.ndarray:
    """Initial data from the fixed catalogue.

    * ``constant(value)``
    * ``cos(a0, a1, m)``: ``a0 + a1 cos(m x)``
    * ``modal(a0, a1, ...)``: zonal harmonic expansion on spheres
    * ``bump(floor, width[, center])``: ``floor + exp(-d²/(2 width²))``
    """
    x = model.coords
    p = list(params)
    if kind == "constant":
        (value,) = p or [1.0]
        return np.full(model.npoints, float(value))
    if kind == "cos":
        a0, a1, m = (p + [1.0, 0.0, 1.0][len(p):])[:3]
        return a0 + a1 * np.cos(m * x)
    if kind == "modal":
        if model.periodic:
            raise ValueError("modal data needs a round model")
        return modal_field(model, p)
    if kind == "bump":
        floor, width = p[0], p[1]
        center = p[2] if len(p) > 2 else 0.0
        d = x - center
        if model.periodic:
            d = np.mod(d + 0.5 * model.period, model.period) - 0.5 * model.period
        return floor + np.exp(-(d**2) / (2 * width**2))
    raise ValueError(f"unknown initial data kind {kind!r}")


# ---------------------------------------------------------------------------
# solvers


def decay_exponent(model: ManifoldModel, degree: int) -> float:
    """Power of c(t) by which the zonal mode of ``degree`` decays on a shrinking sphere."""
    return degree * (degree + model.dim - 1) / (2.0 * (model.dim - 1))


def solve_spectral_sphere(
    coeffs: Sequence[float],
    traj: MetricTrajectory,
    T: Optional[float] = None,
    outputs: int = DEFAULT_OUTPUTS,
    times: Optional[np.ndarray] = None,
) -> HeatSolution:
    """Exact solution ``Σ a_l Z_l(θ) c(t)^{l(l+n-1)/(2(n-1))}``."""
    model = traj.model
    if model.kind != "round_sphere" or traj.flow != "homothetic":
        raise ValueError("the spectral oracle needs a homothetic round sphere")
    T = traj.T if T is None else T
    times = np.linspace(0.0, T, outputs) if times is None else np.asarray(times, dtype=float)
    modes = np.array([zonal_harmonic(model, l) for l in range(len(coeffs))])
    u = np.empty((len(times), model.npoints))
    for i, t in enumerate(times):
        c = traj.scale(float(t))
        factors = np.array([a * c ** decay_exponent(model, l) for l, a in enumerate(coeffs)])
        u[i] = factors @ modes
    if np.min(u) <= 0:
        j = np.unravel_index(np.argmin(u), u.shape)
        raise PositivityError(f"spectral data not positive at t={times[j[0]]}, theta={model.coords[j[1]]}")
    return HeatSolution(traj, times, u, 0.0, "spectral")


def stable_step(traj: MetricTrajectory, t0: float, t1: float) -> float:
    """Diffusion limit ``0.25 · min conf · Δθ²`` over ``[t0, t1]``."""
    return CFL_FACTOR * traj.min_conf(t0, t1) * traj.model.spacing**2


def _conf_at(traj: MetricTrajectory, t: float):
    if traj.homothetic:
        return traj.state(t).conf
    return np.exp(2.0 * traj.profile(t))


def solve_fd(
    traj: MetricTrajectory,
    u0: np.ndarray,
    T: Optional[float] = None,
    steps: Optional[int] = None,
    outputs: int = DEFAULT_OUTPUTS,
    shift: float = 0.0,
) -> HeatSolution:
    """Method of lines for ``u_t = Δ_{g(t)} u``.

    ``steps`` defaults to the smallest count obeying the diffusion limit that
    is a multiple of ``outputs - 1``; an explicit count is validated against it.
    """
    model = traj.model
    u = np.array(u0, dtype=float)
    if u.shape != (model.npoints,):
        raise ValueError("initial data does not match the grid")
    if np.min(u) <= 0:
        raise PositivityError("initial data must be strictly positive")
    T = traj.T - shift if T is None else T
    if T + shift > traj.T * (1 + 1e-12):
        raise ValueError(f"trajectory covers [0, {traj.T}] but [{shift}, {T + shift}] was requested")
    dt_max = stable_step(traj, shift, shift + T)
    chunks = outputs - 1
    if steps is None:
        per = int(math.ceil(T / (dt_max * chunks)))
        steps = per * chunks
    if steps % chunks:
        raise ValueError("steps must be a multiple of outputs - 1")
    dt = T / steps
    if dt > dt_max * (1 + 1e-9):
        raise CFLViolation(f"time step {dt:.3e} exceeds the diffusion limit {dt_max:.3e}")
    per = steps // chunks

    lap = model.operator.lap
    times = np.linspace(0.0, T, outputs)
    out = np.empty((outputs, model.npoints))
    out[0] = u
    t = shift
    for i in range(1, outputs):
        for _ in range(per):
            c0 = _conf_at(traj, t)
            ch = _conf_at(traj, t + 0.5 * dt)
            c1 = _conf_at(traj, t + dt)
            k1 = (lap @ u) / c0
            k2 = (lap @ (u + 0.5 * dt * k1)) / ch
            k3 = (lap @ (u + 0.5 * dt * k2)) / ch
            k4 = (lap @ (u + dt * k3)) / c1
            u = u + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            t += dt
        t = shift + times[i]
        if np.min(u) <= 0:
            raise PositivityError(f"solution lost positivity by t={times[i]:.6g}; refine the grid")
        out[i] = u
    return HeatSolution(traj, times, out, dt, "fd", shift=shift)


def neumann_mismatch(model: ManifoldModel, u0: np.ndarray) -> float:
    """One-sided estimate of ``u0'(θ₀)`` at the cap boundary."""
    return float(abs(one_sided_end_derivative(model, u0)))


def solve_neumann_cap(
    traj: MetricTrajectory,
    u0: np.ndarray,
    T: Optional[float] = None,
    steps: Optional[int] = None,
    outputs: int = DEFAULT_OUTPUTS,
    shift: float = 0.0,
    compat_tol: Optional[float] = None,
) -> HeatSolution:
    """Heat equation on a cap with zero normal derivative on the boundary circle.

    For homothetic metrics the g(t)-normal derivative is a positive multiple of
    ``∂θ``, so the zero-flux row of the reference operator enforces it.
    Initial data whose one-sided boundary slope exceeds ``compat_tol``
    (default ``10 Δθ² max|u0|``) is accepted with a warning.
    """
    model = traj.model
    if model.kind != "spherical_cap":
        raise ValueError("solve_neumann_cap needs a spherical_cap model")
    u0 = np.asarray(u0, dtype=float)
    mismatch = neumann_mismatch(model, u0)
    if compat_tol is None:
        compat_tol = 10.0 * model.spacing**2 * float(np.max(np.abs(u0)))
    sol = solve_fd(traj, u0, T, steps, outputs, shift)
    sol.method = "fd-neumann"
    if mismatch > compat_tol:
        sol.warnings.append(
            f"initial data violates the Neumann condition: |u0'(theta0)| ~ {mismatch:.3e}"
        )
    return sol


def pde_residual(solution: HeatSolution) -> np.ndarray:
    """``Δ_{g(t)} u - u_t`` at interior output times, with ``u_t`` from central differences."""
    res = []
    for i in range(1, len(solution.times) - 1):
        res.append(solution.u_t(i) - solution.u_t_fd(i))
    return np.array(res)


__all__ = [
    "HeatSolution",
    "decay_exponent",
    "initial_data",
    "modal_field",
    "pde_residual",
    "solve_fd",
    "solve_neumann_cap",
    "solve_spectral_sphere",
    "stable_step",
    "sup_initial",
    "zonal_harmonic",
]
