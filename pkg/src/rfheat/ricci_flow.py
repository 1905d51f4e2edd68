"""Ricci flow trajectories for the model geometries.

Round models and caps shrink homothetically, ``g(t) = c(t) g₀`` with
``c(t) = 1 - 2(n-1) t / r₀²``; the flat torus is a fixed point.  The
axisymmetric conformal surface ``g = e^{2v} g_{S²}`` is integrated numerically
through ``∂t v = e^{-2v}(Δ₀ v - 1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import BlowUpError, CFLViolation, ExistenceTimeError
from .geometry import ManifoldModel, MetricState, ref_laplacian

CFL_FACTOR = 0.25
BLOWUP_LEVEL = 5.0
MAX_STORED_STATES = 2000


@dataclass
class MetricTrajectory:
    """Time-indexed metric on ``[0, T]``.

    ``flow`` is one of ``"homothetic"``, ``"static"`` (frozen metric, used as
    the stationary limit in tests) or ``"conformal"``.  Conformal trajectories
    keep dense samples of ``v`` in ``profiles`` and interpolate linearly in time.
    """

    model: ManifoldModel
    T: float
    times: np.ndarray
    flow: str
    existence_horizon: float
    profiles: Optional[np.ndarray] = None
    dt: float = 0.0

    @property
    def is_ricci_flow(self) -> bool:
        return self.flow != "static" or self.model.kind == "flat_torus"

    @property
    def homothetic(self) -> bool:
        return self.flow in ("homothetic", "static")

    def scale(self, t: float) -> float:
        """Homothetic factor c(t)."""
        if self.flow == "conformal":
            raise TypeError("conformal trajectories have no global scale")
        if self.flow == "static" or self.model.kind == "flat_torus":
            return 1.0
        n, r0 = self.model.dim, self.model.radius
        return 1.0 - 2.0 * (n - 1) * t / r0**2

    def profile(self, t: float) -> np.ndarray:
        """Conformal exponent v(·, t) by linear interpolation between samples."""
        times = self.times
        if t <= times[0]:
            return self.profiles[0].copy()
        if t >= times[-1]:
            if t > times[-1] * (1 + 1e-12) + 1e-14:
                raise ExistenceTimeError(f"t={t} is beyond the trajectory horizon {times[-1]}")
            return self.profiles[-1].copy()
        j = int(np.searchsorted(times, t, side="right")) - 1
        w = (t - times[j]) / (times[j + 1] - times[j])
        return (1.0 - w) * self.profiles[j] + w * self.profiles[j + 1]

    def state(self, t: float) -> MetricState:
        model = self.model
        if self.flow == "conformal":
            v = self.profile(t)
            conf = np.exp(2.0 * v)
            return MetricState(model, t, conf, gaussian_curvature(model, v), v=v)
        if t > self.existence_horizon:
            raise ExistenceTimeError(
                f"t={t} is past the existence horizon {self.existence_horizon}"
            )
        c = self.scale(t)
        if c <= 0:
            raise ExistenceTimeError(f"metric degenerates at t={t} (c={c})")
        if model.kind == "flat_torus":
            return MetricState(model, t, np.float64(1.0), np.float64(0.0), scale=1.0)
        r2 = model.radius**2
        ric = (model.dim - 1) / (r2 * c)
        return MetricState(model, t, np.float64(r2 * c), np.float64(ric), scale=c)

    @property
    def states(self) -> list[MetricState]:
        return [self.state(float(t)) for t in self.times]

    def min_conf(self, t0: float, t1: float) -> float:
        """Smallest conformal factor over the grid and ``[t0, t1]``."""
        if self.flow == "conformal":
            mask = (self.times >= t0) & (self.times <= t1)
            vals = [np.min(self.profiles[mask])] if mask.any() else []
            vals += [np.min(self.profile(t0)), np.min(self.profile(t1))]
            return float(np.exp(2.0 * min(vals)))
        return float(min(np.min(self.state(t0).conf), np.min(self.state(t1).conf)))


def gaussian_curvature(model: ManifoldModel, v: np.ndarray) -> np.ndarray:
    """``K = e^{-2v}(1 - Δ₀ v)`` for ``g = e^{2v} g_{S²}``."""
    return np.exp(-2.0 * v) * (1.0 - ref_laplacian(model, v))


def existence_horizon(model: ManifoldModel) -> float:
    if model.kind == "flat_torus":
        return math.inf
    return model.radius**2 / (2.0 * (model.dim - 1))


def evolve_homothetic(model: ManifoldModel, T: float, samples: int = 101) -> MetricTrajectory:
    """Closed-form Ricci flow of a round sphere, a round cap or the flat torus."""
    if model.kind == "axisym_conformal_sphere":
        raise ValueError("use evolve_axisym_conformal for the conformal model")
    if T <= 0:
        raise ValueError("T must be positive")
    horizon = existence_horizon(model)
    if T >= horizon:
        raise ExistenceTimeError(
            f"T={T} reaches the extinction time {horizon} of the shrinking sphere"
        )
    times = np.linspace(0.0, T, samples)
    return MetricTrajectory(model, T, times, "homothetic", horizon)


def evolve_static(model: ManifoldModel, T: float, samples: int = 101) -> MetricTrajectory:
    """Frozen metric ``c ≡ 1``; not a Ricci flow except on the torus."""
    if model.kind == "axisym_conformal_sphere":
        raise ValueError("static trajectories are defined for homothetic models only")
    times = np.linspace(0.0, T, samples)
    return MetricTrajectory(model, T, times, "static", math.inf)


def conformal_rhs(model: ManifoldModel, v: np.ndarray) -> np.ndarray:
    return np.exp(-2.0 * v) * (ref_laplacian(model, v) - 1.0)


def evolve_axisym_conformal(
    model: ManifoldModel,
    v0: np.ndarray,
    T: float,
    steps: Optional[int] = None,
) -> MetricTrajectory:
    """Integrate ``∂t v = e^{-2v}(Δ₀ v - 1)`` with classical RK4.

    Without ``steps`` the step is chosen from the diffusion limit
    ``Δt <= 0.25 min(e^{2v}) Δθ²``, anticipating that ``e^{2v}`` shrinks
    roughly like ``1 - t/horizon``.  The limit is re-checked along the run.
    """
    if model.kind != "axisym_conformal_sphere":
        raise ValueError("evolve_axisym_conformal needs an axisym_conformal_sphere model")
    v = np.array(v0, dtype=float)
    if v.shape != (model.npoints,):
        raise ValueError("v0 does not match the grid")
    if np.max(np.abs(v)) > 0.5:
        raise ValueError("initial conformal exponent must satisfy |v0| <= 0.5")
    if T <= 0:
        raise ValueError("T must be positive")
    # Gauss-Bonnet: the area drops at rate 8π, so the flow dies at area/8π
    horizon = float(np.sum(model.operator.weights * np.exp(2 * v))) / (8 * math.pi)
    if T >= horizon:
        raise ExistenceTimeError(f"T={T} reaches the extinction time {horizon:.6g}")
    h2 = model.spacing**2
    if steps is None:
        dt_max = CFL_FACTOR * math.exp(2 * np.min(v)) * (1.0 - T / horizon) * h2
        steps = int(math.ceil(T / dt_max))
    stride = max(1, int(math.ceil(steps / MAX_STORED_STATES)))
    steps = stride * int(math.ceil(steps / stride))
    dt = T / steps

    profiles = [v.copy()]
    times = [0.0]
    for k in range(steps):
        limit = CFL_FACTOR * math.exp(2 * np.min(v)) * h2
        if dt > limit * (1 + 1e-9):
            raise CFLViolation(f"step {dt:.3e} exceeds the diffusion limit {limit:.3e} at step {k}")
        k1 = conformal_rhs(model, v)
        k2 = conformal_rhs(model, v + 0.5 * dt * k1)
        k3 = conformal_rhs(model, v + 0.5 * dt * k2)
        k4 = conformal_rhs(model, v + dt * k3)
        v = v + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(v)) or np.max(np.abs(v)) > BLOWUP_LEVEL:
            raise BlowUpError(f"|v| exceeded {BLOWUP_LEVEL} at t={(k + 1) * dt:.6g}")
        if (k + 1) % stride == 0:
            profiles.append(v.copy())
            times.append((k + 1) * dt)
    times_arr = np.array(times)
    times_arr[-1] = T
    return MetricTrajectory(
        model, T, times_arr, "conformal", horizon, profiles=np.array(profiles), dt=dt
    )


@dataclass(frozen=True)
class BoundaryData:
    """Umbilic factor λ(t) of the cap boundary, ``II = λ(t) g``."""

    times: np.ndarray
    lam: np.ndarray
    cap_angle: float

    def __call__(self, t: float) -> float:
        return float(np.interp(t, self.times, self.lam))


def umbilic_factor(model: ManifoldModel, scale: float) -> float:
    """λ for the latitude circle at the cap angle of a sphere of radius ``r₀ √c``."""
    return 1.0 / (math.tan(model.cap_angle) * model.radius * math.sqrt(scale))


def boundary_lambda(traj: MetricTrajectory) -> BoundaryData:
    model = traj.model
    if model.kind != "spherical_cap":
        raise ValueError("boundary data exists only for spherical_cap models")
    if model.cap_angle > math.pi / 2 + 1e-15:
        raise ValueError("cap angle beyond pi/2 gives a concave boundary (lambda < 0)")
    lam = np.array([umbilic_factor(model, traj.scale(float(t))) for t in traj.times])
    if math.isclose(model.cap_angle, math.pi / 2, rel_tol=0, abs_tol=1e-15):
        lam = np.zeros_like(lam)
    if np.any(lam < 0):
        raise ValueError("lambda(t) became negative")
    return BoundaryData(traj.times.copy(), lam, model.cap_angle)
