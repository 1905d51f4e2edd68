"""Model geometries, their 1D grids and metric-dependent differential operators.

Every model is conformal to a fixed reference metric on a 1D coordinate:

* ``round_sphere``, ``axisym_conformal_sphere`` and ``spherical_cap`` use the
  unit round metric ``dθ² + sin²θ dΩ²`` with colatitude θ,
* ``flat_torus`` uses ``dx²`` on a circle of length ``period``.

Fields are axisymmetric, i.e. functions of the single coordinate, sampled on
``model.coords``.  A :class:`MetricState` carries the pointwise factor
``conf = g(t) / g_ref``.  On homothetic metrics and on conformal surfaces the
Laplace-Beltrami operator is ``Δ_ref / conf``, which is what the discrete
operators below rely on.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import sparse

from .errors import ExistenceTimeError, InjectivityRadiusError

KINDS = ("round_sphere", "flat_torus", "axisym_conformal_sphere", "spherical_cap")
MIN_GRID = 16


@dataclass(frozen=True)
class ManifoldModel:
    """Descriptor of one model geometry family.

    ``grid`` is the number of intervals of the 1D coordinate: spheres and caps
    carry ``grid + 1`` nodes including the pole(s)/boundary, the torus carries
    ``grid`` periodic nodes.  ``radius`` is the initial radius r₀ of the round
    models; the reference metric is then ``radius² g_unit``.
    """

    kind: str
    dim: int = 2
    radius: float = 1.0
    grid: int = 256
    cap_angle: Optional[float] = None
    period: float = 2.0 * math.pi

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}; expected one of {KINDS}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError(f"dim must be an integer >= 1, got {self.dim}")
        if self.grid < MIN_GRID:
            raise ValueError(f"grid resolution must be >= {MIN_GRID}, got {self.grid}")
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if self.kind != "flat_torus" and self.dim < 2:
            raise ValueError("round models need dim >= 2")
        if self.kind == "axisym_conformal_sphere" and self.dim != 2:
            raise ValueError("the conformal model is a surface (dim = 2)")
        if self.kind == "spherical_cap":
            if self.cap_angle is None:
                raise ValueError("spherical_cap needs cap_angle")
            if not 0.0 < self.cap_angle <= math.pi / 2 + 1e-15:
                raise ValueError(
                    f"cap_angle must lie in (0, pi/2] so that the boundary stays convex, "
                    f"got {self.cap_angle}"
                )
        elif self.cap_angle is not None:
            raise ValueError("cap_angle is only meaningful for spherical_cap")
        if self.kind == "flat_torus" and self.period <= 0:
            raise ValueError("period must be positive")

    @property
    def boundary(self) -> bool:
        return self.kind == "spherical_cap"

    @property
    def periodic(self) -> bool:
        return self.kind == "flat_torus"

    @property
    def extent(self) -> float:
        """Length of the coordinate domain."""
        if self.kind == "flat_torus":
            return self.period
        if self.kind == "spherical_cap":
            return float(self.cap_angle)
        return math.pi

    @property
    def spacing(self) -> float:
        return self.extent / self.grid

    @property
    def npoints(self) -> int:
        return self.grid if self.periodic else self.grid + 1

    @functools.cached_property
    def coords(self) -> np.ndarray:
        return np.arange(self.npoints) * self.spacing

    def refined(self, factor: int = 2) -> "ManifoldModel":
        return ManifoldModel(
            self.kind, self.dim, self.radius, self.grid * factor, self.cap_angle, self.period
        )

    @functools.cached_property
    def operator(self) -> "_Operator":
        return _build_operator(self)


@dataclass(frozen=True)
class MetricState:
    """Metric at one instant: ``g(t) = conf · g_ref`` with ``Ric = ricci · g``.

    For homothetic metrics ``scale`` is c(t) and ``conf = radius² c(t)``; for
    the conformal surface ``v`` is the profile with ``conf = e^{2v}``.  All
    models here are pointwise Einstein, so ``ricci`` fully describes Ric.
    """

    model: ManifoldModel
    t: float
    conf: np.ndarray
    ricci: np.ndarray
    scale: Optional[float] = None
    v: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.scale is not None and self.scale <= 0:
            raise ExistenceTimeError(f"metric scale c({self.t}) = {self.scale} is not positive")

    @property
    def k1_neg(self) -> float:
        return max(0.0, -float(np.min(self.ricci)))

    @property
    def k2_pos(self) -> float:
        return max(0.0, float(np.max(self.ricci)))

    @property
    def conf_grid(self) -> np.ndarray:
        return np.broadcast_to(self.conf, (self.model.npoints,))

    @property
    def ricci_grid(self) -> np.ndarray:
        return np.broadcast_to(self.ricci, (self.model.npoints,))


@dataclass(frozen=True)
class Ball:
    """Space-time ball ``B_{ρ,T}`` centred at coordinate ``center``."""

    center: float
    radius: float
    horizon: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("ball radius must be positive")

    def contains(self, state: MetricState, radius: Optional[float] = None) -> np.ndarray:
        """Grid mask of points with ``dist(χ, x₀, t) < radius`` in the metric of ``state``."""
        rho = self.radius if radius is None else radius
        return distance_from(state, self.center) < rho


# ---------------------------------------------------------------------------
# discrete reference operators


@dataclass(frozen=True)
class _Operator:
    lap: sparse.csr_matrix  # reference Laplacian Δ_ref
    weights: np.ndarray  # quadrature weights of the reference volume form


def angular_area(dim: int) -> float:
    """Area of the unit sphere S^{dim-1} (2π for dim = 2)."""
    return 2.0 * math.pi ** (dim / 2.0) / math.gamma(dim / 2.0)


def _sin_power_integral(a, b, p: int):
    """Gauss-Legendre integral of sin^p over [a, b] (vectorised over intervals)."""
    x, w = np.polynomial.legendre.leggauss(12)
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    return half * np.sum(w * np.sin(mid[..., None] + half[..., None] * x) ** p, axis=-1)


def _build_operator(model: ManifoldModel) -> _Operator:
    h = model.spacing
    m = model.npoints
    if model.periodic:
        diag = np.full(m, -2.0 / h**2)
        off = np.full(m, 1.0 / h**2)
        lap = sparse.diags([off[:-1], diag, off[:-1]], [-1, 0, 1], format="lil")
        lap[0, m - 1] = 1.0 / h**2
        lap[m - 1, 0] = 1.0 / h**2
        weights = np.full(m, h * model.period ** (model.dim - 1))
        return _Operator(lap.tocsr(), weights)

    p = model.dim - 1
    theta = model.coords
    half = (np.arange(m - 1) + 0.5) * h
    s_half = np.sin(half) ** p
    # exact cell volumes keep the stencil second order next to the poles
    vol = _sin_power_integral(np.maximum(theta - 0.5 * h, 0.0), theta + 0.5 * h, p)
    if model.kind == "spherical_cap":
        # zero-flux end; the half-cell weight makes the boundary row second order
        beta = 1.0 + p * h / (3.0 * math.tan(model.cap_angle))
        vol[-1] = 0.5 * h * beta * s_half[-1]
    else:
        vol[-1] = vol[0]
    flux = s_half / h
    lower = flux / vol[1:]
    upper = flux / vol[:-1]
    diag = np.zeros(m)
    diag[:-1] -= upper
    diag[1:] -= lower
    lap = sparse.diags([lower, diag, upper], [-1, 0, 1], format="csr")
    return _Operator(lap, vol * angular_area(model.dim))


def _as_rows(fields: np.ndarray) -> tuple[np.ndarray, bool]:
    arr = np.asarray(fields, dtype=float)
    return (arr[None, :], True) if arr.ndim == 1 else (arr, False)


def _check_length(model: ManifoldModel, arr: np.ndarray) -> None:
    if arr.shape[-1] != model.npoints:
        raise ValueError(
            f"field has {arr.shape[-1]} samples but the grid has {model.npoints} nodes"
        )


def ref_laplacian(model: ManifoldModel, fields: np.ndarray) -> np.ndarray:
    """Reference Laplacian of one field or of a stack of fields (rows)."""
    rows, single = _as_rows(fields)
    _check_length(model, rows)
    out = (model.operator.lap @ rows.T).T
    return out[0] if single else out


def ref_gradient(model: ManifoldModel, fields: np.ndarray) -> np.ndarray:
    """Central-difference coordinate derivative.

    Poles and the Neumann end carry the regularity value 0.
    """
    rows, single = _as_rows(fields)
    _check_length(model, rows)
    h = model.spacing
    if model.periodic:
        out = (np.roll(rows, -1, axis=1) - np.roll(rows, 1, axis=1)) / (2 * h)
    else:
        out = np.zeros_like(rows)
        out[:, 1:-1] = (rows[:, 2:] - rows[:, :-2]) / (2 * h)
    return out[0] if single else out


def ref_second(model: ManifoldModel, fields: np.ndarray) -> np.ndarray:
    """Second coordinate derivative with mirror ghosts at poles and the Neumann end."""
    rows, single = _as_rows(fields)
    _check_length(model, rows)
    h2 = model.spacing**2
    if model.periodic:
        out = (np.roll(rows, -1, axis=1) - 2 * rows + np.roll(rows, 1, axis=1)) / h2
    else:
        out = np.empty_like(rows)
        out[:, 1:-1] = (rows[:, 2:] - 2 * rows[:, 1:-1] + rows[:, :-2]) / h2
        out[:, 0] = 2 * (rows[:, 1] - rows[:, 0]) / h2
        out[:, -1] = 2 * (rows[:, -2] - rows[:, -1]) / h2
    return out[0] if single else out


def one_sided_end_derivative(model: ManifoldModel, fields: np.ndarray) -> np.ndarray:
    """Second-order backward difference of the coordinate derivative at the last node."""
    rows, single = _as_rows(fields)
    out = (3 * rows[:, -1] - 4 * rows[:, -2] + rows[:, -3]) / (2 * model.spacing)
    return out[0] if single else out


# ---------------------------------------------------------------------------
# metric-dependent operators


def grad_norm_sq(u: np.ndarray, state: MetricState, point: Optional[int] = None):
    """``|∇u|²_{g(t)}`` on the grid, or at one grid index."""
    val = ref_gradient(state.model, u) ** 2 / state.conf
    return val if point is None else float(np.broadcast_to(val, np.shape(u))[point])


def laplace_beltrami(u: np.ndarray, state: MetricState) -> np.ndarray:
    return ref_laplacian(state.model, u) / state.conf


def inner_gradients(a: np.ndarray, b: np.ndarray, state: MetricState) -> np.ndarray:
    """``g(t)(∇a, ∇b)`` for axisymmetric fields."""
    m = state.model
    return ref_gradient(m, a) * ref_gradient(m, b) / state.conf


def hessian_frame(u: np.ndarray, state: MetricState) -> np.ndarray:
    """Hessian of an axisymmetric field in an orthonormal frame.

    Returns an array of shape ``(npoints, dim)`` holding the diagonal; the
    first column is the meridian (or x) direction.  Off-diagonal entries
    vanish for axisymmetric fields.
    """
    model = state.model
    n = model.dim
    conf = state.conf_grid
    ut = ref_gradient(model, u)
    utt = ref_second(model, u)
    out = np.zeros((model.npoints, n))
    if model.periodic:
        out[:, 0] = utt
        return out
    dv = np.zeros(model.npoints) if state.v is None else ref_gradient(model, state.v)
    theta = model.coords
    cot_term = np.empty(model.npoints)
    inner = slice(1, -1)
    cot_term[inner] = ut[inner] / np.tan(theta[inner])
    cot_term[0] = utt[0]
    if model.kind == "spherical_cap":
        cot_term[-1] = ut[-1] / math.tan(model.cap_angle)
    else:
        cot_term[-1] = utt[-1]
    out[:, 0] = (utt - dv * ut) / conf
    out[:, 1:] = ((cot_term + dv * ut) / conf)[:, None]
    return out


def time_derivative(solution, index: int) -> np.ndarray:
    """``u_t`` at output sample ``index`` computed from the equation as ``Δ_{g(t)} u``."""
    return laplace_beltrami(solution.u[index], solution.state(index))


# ---------------------------------------------------------------------------
# distance and curvature


def _meridian_arclength(state: MetricState) -> np.ndarray:
    """Cumulative arclength from coordinate 0 along the grid in the metric of ``state``."""
    model = state.model
    speed = np.sqrt(state.conf_grid)
    seg = 0.5 * (speed[1:] + speed[:-1]) * model.spacing
    return np.concatenate([[0.0], np.cumsum(seg)])


def _homothetic_length(state: MetricState) -> Optional[float]:
    conf = np.asarray(state.conf)
    return float(np.sqrt(conf)) if conf.ndim == 0 else None


def distance_from(state: MetricState, x0: float, x=None) -> np.ndarray:
    """Distance from ``x0`` to the grid nodes (or to ``x``) at the time of ``state``."""
    model = state.model
    pts = model.coords if x is None else np.asarray(x, dtype=float)
    if model.periodic:
        d = np.abs(np.mod(pts - x0, model.period))
        return np.minimum(d, model.period - d)
    speed = _homothetic_length(state)
    if speed is not None:
        return speed * np.abs(pts - x0)
    arc = _meridian_arclength(state)
    s = np.interp(pts, model.coords, arc)
    s0 = np.interp(x0, model.coords, arc)
    return np.abs(s - s0)


def distance(traj, x: float, x0: float, t: float) -> float:
    """Distance between ``x`` and ``x0`` along the meridian (or circle) at time ``t``."""
    return float(distance_from(traj.state(t), x0, x))


def injectivity_radius(state: MetricState, x0: float = 0.0) -> float:
    """Injectivity radius at ``x0``: half the circle, or the pole-to-antipode distance."""
    model = state.model
    if model.periodic:
        return 0.5 * model.period
    if model.kind == "spherical_cap":
        return float(distance_from(state, 0.0, model.cap_angle))
    return float(distance_from(state, 0.0, math.pi))


def check_ball(traj, ball: Ball, times) -> None:
    """Raise if the ball reaches the cut locus of its centre at any of ``times``."""
    model = traj.model
    if not model.periodic and ball.center != 0.0:
        raise ValueError("balls on round models must be centred at the pole (coordinate 0)")
    for t in times:
        inj = injectivity_radius(traj.state(t), ball.center)
        if ball.radius >= inj:
            raise InjectivityRadiusError(
                f"ball radius {ball.radius} exceeds the injectivity radius {inj:.6g} at t={t:.6g}"
            )


def ricci_range(traj, interval=None) -> tuple[float, float]:
    """Tightest ``(k₁, k₂)`` with ``-k₁ g <= Ric <= k₂ g`` on the sampled interval.

    Both values are clamped at 0.  The trajectory's sample times inside the
    interval and the interval endpoints are scanned.
    """
    lo, hi = (0.0, traj.T) if interval is None else interval
    if hi > traj.existence_horizon or lo < 0:
        raise ExistenceTimeError(
            f"interval [{lo}, {hi}] leaves the existence interval [0, {traj.existence_horizon})"
        )
    times = traj.times[(traj.times >= lo) & (traj.times <= hi)]
    times = np.unique(np.concatenate([times, [lo, hi]]))
    k1 = k2 = 0.0
    for t in times:
        st = traj.state(float(t))
        k1 = max(k1, st.k1_neg)
        k2 = max(k2, st.k2_pos)
    return k1, k2


def zero_field(model: ManifoldModel) -> np.ndarray:
    return np.zeros(model.npoints)


__all__ = [
    "Ball",
    "KINDS",
    "ManifoldModel",
    "MetricState",
    "angular_area",
    "check_ball",
    "distance",
    "distance_from",
    "grad_norm_sq",
    "hessian_frame",
    "injectivity_radius",
    "inner_gradients",
    "laplace_beltrami",
    "one_sided_end_derivative",
    "ref_gradient",
    "ref_laplacian",
    "ref_second",
    "ricci_range",
    "time_derivative",
    "zero_field",
]
