"""Space-time cutoff ``Ψ̄(r, t) = φ(r) η(t)`` with measured derivative constants.

Both factors are built from the smooth step

    S(x) = 1 / (1 + exp(1/x - 1/(1-x)))   on (0, 1),

which is 0 for x <= 0 and 1 for x >= 1.  ``φ(r) = 1 - S(2r/ρ - 1)`` is 1 on
``[0, ρ/2]`` and 0 beyond ρ; ``η(t) = S(t/τ)`` vanishes at 0 and is 1 from τ on.
Ratios such as ``|Ψ̄_t| / Ψ̄^{1/2}`` are evaluated in product form
(``S' = S(1-S)q``) so that no 0/0 occurs where Ψ̄ underflows.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .estimates import EstimateReport, constant_drift

A_VALUES = (0.5, 0.75)
DEFAULT_SAMPLES = 100


def _interior(x):
    x = np.asarray(x, dtype=float)
    inside = (x > 0) & (x < 1)
    xi = np.where(inside, x, 0.5)
    return x, inside, xi


def smooth_step(x):
    """S(x) together with ``q = 1/x² + 1/(1-x)²`` and ``p = 2/(1-x)³ - 2/x³`` (0 outside (0,1))."""
    x, inside, xi = _interior(x)
    with np.errstate(over="ignore"):
        e = 1.0 / xi - 1.0 / (1.0 - xi)
    s = np.where(inside, expit(-e), np.where(x >= 1, 1.0, 0.0))
    # S(1-S) underflows to 0 long before q would overflow
    xc = np.clip(xi, 1e-6, 1.0 - 1e-6)
    q = np.where(inside, 1.0 / xc**2 + 1.0 / (1.0 - xc) ** 2, 0.0)
    p = np.where(inside, 2.0 / (1.0 - xc) ** 3 - 2.0 / xc**3, 0.0)
    return s, q, p


def smooth_step_derivatives(x):
    """``(S, S', S'')``."""
    s, q, p = smooth_step(x)
    d1 = s * (1.0 - s) * q
    d2 = d1 * (1.0 - 2.0 * s) * q + s * (1.0 - s) * p
    return s, d1, d2


@dataclass
class CutoffProperties:
    """Samples of Ψ̄ on an ``(r, t)`` grid covering ``[0, 1.25ρ] × [0, T]``."""

    rho: float
    tau: float
    T: float
    r: np.ndarray
    t: np.ndarray
    values: np.ndarray = field(repr=False)
    constants: dict = field(default_factory=dict)

    def __call__(self, r, t):
        return psi(self.rho, self.tau, r, t)

    def derivatives(self, r, t):
        return psi_derivatives(self.rho, self.tau, r, t)


def psi(rho: float, tau: float, r, t):
    s_r, _, _ = smooth_step(2.0 * np.asarray(r, dtype=float) / rho - 1.0)
    eta, _, _ = smooth_step(np.asarray(t, dtype=float) / tau)
    return (1.0 - s_r) * eta


def psi_derivatives(rho: float, tau: float, r, t) -> dict:
    """Ψ̄ and its partial derivatives ``r``, ``rr`` and ``t``."""
    s, d1, d2 = smooth_step_derivatives(2.0 * np.asarray(r, dtype=float) / rho - 1.0)
    eta, e1, _ = smooth_step_derivatives(np.asarray(t, dtype=float) / tau)
    phi = 1.0 - s
    return {
        "psi": phi * eta,
        "r": -2.0 / rho * d1 * eta,
        "rr": -4.0 / rho**2 * d2 * eta,
        "t": phi * e1 / tau,
    }


def build_cutoff(rho: float, tau: float, T: float, samples: int = DEFAULT_SAMPLES) -> CutoffProperties:
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    if rho <= 0:
        raise ValueError(f"rho must be positive, got {rho}")
    if tau > T:
        raise ValueError(f"tau must lie in (0, T], got tau={tau}, T={T}")
    r = np.linspace(0.0, 1.25 * rho, samples)
    t = np.linspace(0.0, T, samples)
    R, Tt = np.meshgrid(r, t, indexing="ij")
    return CutoffProperties(rho, tau, T, r, t, psi(rho, tau, R, Tt))


def empirical_constants(props: CutoffProperties) -> dict:
    """Smallest C̄ and C_a (a in ``A_VALUES``) valid on the sample grid."""
    R, Tt = np.meshgrid(props.r, props.t, indexing="ij")
    x = 2.0 * R / props.rho - 1.0
    s, q, p = smooth_step(x)
    eta, qe, _ = smooth_step(Tt / props.tau)
    phi = 1.0 - s
    # |Ψ̄_t| τ / Ψ̄^{1/2} = φ^{1/2} η^{1/2} (1 - η) q_η
    c_bar = np.sqrt(phi * eta) * (1.0 - eta) * qe
    out = {"C_bar": float(np.max(c_bar))}
    for a in A_VALUES:
        common = eta ** (1.0 - a) * s * (1.0 - s) ** (1.0 - a)
        first = 2.0 * common * q  # |Ψ̄_r| ρ / Ψ̄^a
        second = 4.0 * common * np.abs((1.0 - 2.0 * s) * q**2 + p)  # |Ψ̄_rr| ρ² / Ψ̄^a
        out[f"C_{a:g}"] = float(max(np.max(first), np.max(second)))
    return out


def verify_cutoff(props: CutoffProperties, refinements: int = 2, drift_tol: float = 0.1) -> EstimateReport:
    """Check the four cutoff properties and the stability of the measured constants.

    Rows record ``∂Ψ̄/∂r <= 0`` at every grid point; the remaining properties
    are boolean checks.
    """
    R, Tt = np.meshgrid(props.r, props.t, indexing="ij")
    d = props.derivatives(R, Tt)
    rho, tau = props.rho, props.tau
    vals = d["psi"]
    exact = 1e-14
    plateau = (R <= 0.5 * rho) & (Tt >= tau)
    consts = empirical_constants(props)
    if not all(np.isfinite(v) for v in consts.values()):
        raise ArithmeticError(f"unbounded derivative ratio: {consts}")

    history = [consts]
    samples = len(props.r)
    for level in range(1, refinements + 1):
        finer = build_cutoff(rho, tau, props.T, samples * 2**level)
        history.append(empirical_constants(finer))
    drift = {
        key: max(constant_drift(a[key], b[key]) for a, b in zip(history, history[1:]))
        for key in consts
    }
    props.constants = consts

    with np.errstate(divide="ignore", invalid="ignore"):
        pos = vals > 0
        ratio_t = np.where(pos, np.abs(d["t"]) * tau / np.sqrt(vals), 0.0)
    checks = {
        "range": bool(np.all((vals >= 0) & (vals <= 1))),
        "support": bool(np.all(vals[R >= rho] == 0)),
        "plateau": bool(np.all(np.abs(vals[plateau] - 1) <= exact) and np.all(d["r"][plateau] == 0)),
        "initial_zero": bool(np.all(vals[Tt == 0] == 0)),
        "time_bound": bool(np.all(ratio_t <= consts["C_bar"] * (1 + 1e-9) + exact)),
        "constants_finite": True,
        "constants_stable": all(v <= drift_tol for v in drift.values()),
    }
    for a in A_VALUES:
        c = consts[f"C_{a:g}"]
        with np.errstate(divide="ignore", invalid="ignore"):
            pa = np.where(pos, vals**a, 1.0)
            ok_r = np.all(np.where(pos, -d["r"] * rho <= c * pa * (1 + 1e-9) + exact, True))
            ok_rr = np.all(np.where(pos, np.abs(d["rr"]) * rho**2 <= c * pa * (1 + 1e-9) + exact, True))
        checks[f"radial_bounds_a{a:g}"] = bool(ok_r and ok_rr)
    return EstimateReport(
        "cutoff",
        Tt.ravel(),
        R.ravel(),
        d["r"].ravel(),
        np.zeros(R.size),
        0.0,
        checks=checks,
        extras={
            "rho": rho,
            "tau": tau,
            "T": props.T,
            "constants": consts,
            "refined_constants": history[1:],
            "max_drift": drift,
            "points": int(R.size),
        },
    )


__all__ = [
    "A_VALUES",
    "CutoffProperties",
    "build_cutoff",
    "empirical_constants",
    "psi",
    "psi_derivatives",
    "smooth_step",
    "smooth_step_derivatives",
    "verify_cutoff",
]
