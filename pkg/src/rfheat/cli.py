"""Command line scenario runner.

    rfheat run <config> [--out DIR] [--seed N]
    rfheat list
    rfheat dump <config> <field> [--out FILE]

``run`` writes ``summary.json`` and one CSV per checker into the output
directory (default ``$RFHEAT_OUT/<name>`` or ``reports/<name>``) and exits
with 0 iff every checker passes.
"""

from __future__ import annotations

import argparse
import io
import json
import logging
import math
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import __version__
from .config import Scenario, Section, bundled_names, load_scenario, parse_number
from .cutoff import build_cutoff, verify_cutoff
from .errors import ConfigError, RFHeatError
from .estimates import (
    CSV_COLUMNS,
    DerivedQuantities,
    EstimateParams,
    EstimateReport,
    check_liyau_boundary,
    check_liyau_global,
    check_space_only_boundary,
    check_space_only_global,
    constant_drift,
    fit_constant_space_only,
    fit_constant_space_time,
    random_square_completion_checks,
    verify_F1_max_bound,
    verify_F_inequality,
    verify_P_nonpositive,
    verify_w_inequality,
)
from .geometry import Ball, ManifoldModel, ricci_range
from .harnack import (
    HarnackParams,
    check_harnack_alpha,
    check_harnack_global,
    check_harnack_lemma,
    default_pairs,
    gamma_closed_form,
    minimize_gamma,
)
from .heat import HeatSolution, initial_data, solve_fd, solve_neumann_cap, solve_spectral_sphere
from .ricci_flow import evolve_axisym_conformal, evolve_homothetic, evolve_static

log = logging.getLogger("rfheat")

CSV_VERSION = "# rfheat report v1"
OUT_ENV = "RFHEAT_OUT"


# ---------------------------------------------------------------------------
# building solutions from a scenario


def conformal_profile(model: ManifoldModel, shape: str, amplitude: float) -> np.ndarray:
    x = np.cos(model.coords)
    if shape == "p2":
        return amplitude * (x**2 - 1.0 / 3.0)
    if shape == "cos":
        return amplitude * x
    raise ConfigError(f"[flow] v0: unknown profile {shape!r} (expected p2 or cos)")


def build_trajectory(model: ManifoldModel, flow: Section):
    kind = flow.str("type", "homothetic")
    T = flow.num("T")
    samples = flow.int("samples", 101)
    if kind == "homothetic":
        return evolve_homothetic(model, T, samples)
    if kind == "static":
        return evolve_static(model, T, samples)
    if kind == "conformal":
        v0 = conformal_profile(model, flow.str("v0", "p2"), flow.num("v0_amplitude", 0.0))
        steps = flow.int("steps", 0) or None
        return evolve_axisym_conformal(model, v0, T, steps)
    raise ConfigError(f"[flow] type: unknown flow {kind!r}")


class Context:
    """Lazily built trajectories and solutions of one scenario, cached per refinement."""

    def __init__(self, scenario: Scenario, seed: int):
        self.scenario = scenario
        self.seed = seed
        self._cache: dict = {}

    def model(self, factor: int = 1) -> ManifoldModel:
        if self.scenario.model is None:
            raise ConfigError("this checker needs a [model] section")
        m = self.scenario.model
        return m if factor == 1 else m.refined(factor)

    def solution(self, factor: int = 1) -> HeatSolution:
        if factor not in self._cache:
            model = self.model(factor)
            traj = build_trajectory(model, self.scenario.flow)
            init = self.scenario.initial
            kind = init.str("kind", "constant")
            params = init.nums("params", ())
            shift = init.num("shift", 0.0)
            outputs = init.int("outputs", 201)
            solver = init.str("solver", "fd")
            if solver == "spectral":
                if kind != "modal" or shift:
                    raise ConfigError("[initial] solver: spectral needs modal data and no shift")
                sol = solve_spectral_sphere(params, traj, outputs=outputs)
            elif solver == "fd":
                u0 = initial_data(model, kind, params)
                solve = solve_neumann_cap if model.boundary else solve_fd
                sol = solve(traj, u0, T=traj.T - shift, outputs=outputs, shift=shift)
            else:
                raise ConfigError(f"[initial] solver: unknown solver {solver!r}")
            self._cache[factor] = sol
        return self._cache[factor]


# ---------------------------------------------------------------------------
# checker registry


@dataclass(frozen=True)
class Checker:
    parse: Callable[[Section], dict]
    run: Callable[[Context, dict], list]
    theorems: tuple
    needs_solution: bool = True


def _no_params(sec: Section) -> dict:
    return {}


def _ball(sec: Section, required: bool = True) -> Optional[Ball]:
    if not required and not sec.has("ball_radius"):
        return None
    radius = sec.num("ball_radius")
    if radius <= 0:
        raise ConfigError(f"[{sec.name}] ball_radius: must be positive")
    return Ball(sec.num("ball_center", 0.0), radius, math.inf)


def _local_common(sec: Section) -> dict:
    drift_tol = sec.num("drift_tol", 0.1)
    return {"refine": sec.flag("refine", True), "drift_tol": drift_tol}


def _with_drift(rep: EstimateReport, fine: Optional[EstimateReport], drift_tol: float):
    if fine is None:
        return rep
    drift = constant_drift(rep.fitted_constant, fine.fitted_constant)
    rep.extras.update({"refined_constant": fine.fitted_constant, "drift": drift})
    rep.checks["stable_under_refinement"] = drift <= drift_tol
    rep.checks["finite"] = bool(np.isfinite(rep.fitted_constant))
    return rep


def _run_space_only_local(ctx, p):
    out = []
    for factor in (1, 2) if p["refine"] else (1,):
        sol = ctx.solution(factor)
        out.append(fit_constant_space_only(sol, p["ball"]))
    return [_with_drift(out[0], out[1] if len(out) > 1 else None, p["drift_tol"])]


def _parse_space_only_local(sec):
    return {"ball": _ball(sec), **_local_common(sec)}


def _alphas(sec: Section, default=(2.0,)):
    alphas = sec.nums("alphas", default)
    for a in alphas:
        if a <= 1:
            raise ConfigError(f"[{sec.name}] alphas: alpha must be > 1, got {a:g}")
    return alphas


def _parse_space_time_local(sec):
    return {"ball": _ball(sec, required=False), "alphas": _alphas(sec), **_local_common(sec)}


def _run_space_time_local(ctx, p):
    reports = []
    for alpha in p["alphas"]:
        fits = []
        for factor in (1, 2) if p["refine"] else (1,):
            sol = ctx.solution(factor)
            k1, k2 = ricci_range(sol.traj, (sol.shift, sol.shift + sol.T))
            fits.append(fit_constant_space_time(sol, p["ball"], k1, k2, alpha))
        reports.append(_with_drift(fits[0], fits[1] if len(fits) > 1 else None, p["drift_tol"]))
    return reports


def _parse_F(sec):
    alpha = sec.num("alpha", 1.0)
    if alpha < 1:
        raise ConfigError(f"[{sec.name}] alpha: must be >= 1, got {alpha:g}")
    a = sec.num("a", 0.5 / alpha)
    if not 0 < a < 1 / alpha:
        raise ConfigError(f"[{sec.name}] a: must lie in (0, 1/alpha)")
    return {"alpha": alpha, "a": a}


def _run_F(ctx, p):
    sol = ctx.solution()
    k1, k2 = ricci_range(sol.traj, (sol.shift, sol.shift + sol.T))
    params = EstimateParams.split(p["alpha"], p["a"], k1, k2)
    return [verify_F_inequality(sol, params)]


def _parse_k(sec):
    return {"k": sec.num("k") if sec.has("k") else None}


def _parse_F1(sec):
    out = _parse_k(sec)
    out["tau"] = sec.num("tau") if sec.has("tau") else None
    if out["tau"] is not None and out["tau"] <= 0:
        raise ConfigError(f"[{sec.name}] tau: must be positive")
    return out


def _pairs(sec: Section):
    if sec.has("pairs"):
        rows = []
        for chunk in sec.str("pairs").split(";"):
            if chunk.strip():
                vals = [parse_number(v) for v in chunk.split()]
                if len(vals) != 4 or not 0 < vals[1] < vals[3]:
                    raise ConfigError(f"[{sec.name}] pairs: expected 'x1 t1 x2 t2' with 0 < t1 < t2")
                rows.append(tuple(vals))
        return rows
    return None


def _parse_harnack(sec):
    count = sec.int("pair_count", 24)
    if count < 1:
        raise ConfigError(f"[{sec.name}] pair_count: must be >= 1")
    return {
        "pairs": _pairs(sec),
        "count": count,
        "waypoints": sec.int("waypoints", 64),
        "slack": sec.num("slack", 0.01),
    }


def _resolve_pairs(ctx, sol, p):
    return p["pairs"] if p["pairs"] is not None else default_pairs(sol, p["count"], ctx.seed)


def _run_harnack_global(ctx, p):
    sol = ctx.solution()
    return [
        check_harnack_global(
            sol, pairs=_resolve_pairs(ctx, sol, p), slack=p["slack"], waypoints=p["waypoints"]
        )
    ]


def _parse_harnack_lemma(sec):
    out = _parse_harnack(sec)
    try:
        out["params"] = HarnackParams(sec.num("A1"), sec.num("A2"), sec.num("A3"))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"[{sec.name}] {exc}") from exc
    return out


def _run_harnack_lemma(ctx, p):
    sol = ctx.solution()
    pairs = _resolve_pairs(ctx, sol, p)
    return [check_harnack_lemma(sol, p["params"], pairs, p["slack"], p["waypoints"])]


def _parse_harnack_alpha(sec):
    return {**_parse_harnack(sec), "alphas": _alphas(sec)}


def _run_harnack_alpha(ctx, p):
    sol = ctx.solution()
    k1, k2 = ricci_range(sol.traj, (sol.shift, sol.shift + sol.T))
    pairs = _resolve_pairs(ctx, sol, p)
    out = []
    for alpha in p["alphas"]:
        c_prime = fit_constant_space_time(sol, None, k1, k2, alpha).fitted_constant
        out.append(
            check_harnack_alpha(
                sol, k1, k2, alpha, c_prime, pairs, slack=p["slack"], waypoints=p["waypoints"]
            )
        )
    return out


def _parse_gamma(sec):
    pairs = _pairs(sec)
    if not pairs:
        raise ConfigError(f"[{sec.name}] pairs: at least one pair is required")
    return {"pairs": pairs, "rel_tol": sec.num("rel_tol", 0.005), "waypoints": sec.int("waypoints", 64)}


def _run_gamma(ctx, p):
    traj = ctx.solution().traj
    rows, records, converged = [], [], True
    for x1, t1, x2, t2 in p["pairs"]:
        est, path = minimize_gamma(x1, t1, x2, t2, traj, p["waypoints"])
        exact = gamma_closed_form(traj, x1, t1, x2, t2)
        err = abs(est - exact) / exact if exact else abs(est)
        converged &= path.converged
        rows.append((t2, x2, err))
        records.append([x1, t1, x2, t2, est, exact])
    t, x, err = (np.array(c) for c in zip(*rows))
    rep = EstimateReport(
        "gamma_closed_form",
        t,
        x,
        err,
        np.full_like(err, p["rel_tol"]),
        0.0,
        checks={"converged": converged},
        extras={"pairs": records},
    )
    return [rep]


def _parse_spectral(sec):
    return {"tol": sec.num("tol", 1e-4), "min_ratio": sec.num("min_ratio", 3.5), "refine": sec.flag("refine", True)}


def _spectral_error(ctx, factor):
    sol = ctx.solution(factor)
    coeffs = ctx.scenario.initial.nums("params")
    exact = solve_spectral_sphere(coeffs, sol.traj, times=sol.times)
    return sol, np.abs(sol.u - exact.u)


def _run_spectral(ctx, p):
    init = ctx.scenario.initial
    if init.str("kind", "") != "modal" or ctx.model().kind != "round_sphere":
        raise ConfigError("[check.spectral_oracle] needs a round_sphere scenario with modal data")
    sol, err = _spectral_error(ctx, 1)
    sup = float(np.max(err))
    rep = EstimateReport(
        "spectral_oracle",
        np.repeat(sol.times, sol.model.npoints),
        np.tile(sol.model.coords, len(sol.times)),
        err.ravel(),
        np.full(err.size, p["tol"]),
        0.0,
        extras={"sup_error": sup, "grid": sol.model.grid, "dt": sol.dt},
    )
    if p["refine"]:
        fine, ferr = _spectral_error(ctx, 2)
        ratio = sup / float(np.max(ferr))
        rep.extras.update({"refined_sup_error": float(np.max(ferr)), "ratio": ratio, "refined_dt": fine.dt})
        rep.checks["convergence_ratio"] = ratio >= p["min_ratio"]
    return [rep]


def _parse_square(sec):
    dims = [int(d) for d in sec.nums("dims", (2, 3, 4))]
    if any(d < 1 for d in dims):
        raise ConfigError(f"[{sec.name}] dims: dimensions must be >= 1")
    return {"trials": sec.int("trials", 10_000), "dims": dims}


def _run_square(ctx, p):
    return [random_square_completion_checks(ctx.seed, p["trials"], p["dims"])]


def _parse_cutoff(sec):
    rho, tau, T = sec.num("rho", 1.0), sec.num("tau", 0.1), sec.num("T", 0.2)
    if tau <= 0 or tau > T:
        raise ConfigError(f"[{sec.name}] tau: must lie in (0, T]")
    if rho <= 0:
        raise ConfigError(f"[{sec.name}] rho: must be positive")
    return {"rho": rho, "tau": tau, "T": T, "samples": sec.int("samples", 100)}


def _run_cutoff(ctx, p):
    return [verify_cutoff(build_cutoff(p["rho"], p["tau"], p["T"], p["samples"]))]


def _simple(fn, **extra):
    return lambda ctx, p: [fn(ctx.solution(), **{**extra, **p})]


CHECKERS: dict[str, Checker] = {
    "space_only_global": Checker(_no_params, _simple(check_space_only_global), ("space_only_global",)),
    "P_nonpositive": Checker(_no_params, _simple(verify_P_nonpositive), ("P_nonpositive",)),
    "w_lemma": Checker(_no_params, _simple(verify_w_inequality), ("w_lemma",)),
    "F_lemma": Checker(_parse_F, _run_F, ("F_lemma",)),
    "liyau_global": Checker(_parse_k, _simple(check_liyau_global), ("liyau_global",)),
    "F1_max_bound": Checker(_parse_F1, _simple(verify_F1_max_bound), ("F1_max_bound",)),
    "space_only_local": Checker(_parse_space_only_local, _run_space_only_local, ("space_only_local",)),
    "space_time_local": Checker(_parse_space_time_local, _run_space_time_local, ("space_time_local",)),
    "space_only_boundary": Checker(_no_params, _simple(check_space_only_boundary), ("space_only_boundary",)),
    "liyau_boundary": Checker(_parse_k, _simple(check_liyau_boundary), ("liyau_boundary",)),
    "square_completion": Checker(_parse_square, _run_square, ("square_completion",), False),
    "harnack_lemma": Checker(_parse_harnack_lemma, _run_harnack_lemma, ("harnack_lemma",)),
    "harnack_global": Checker(_parse_harnack, _run_harnack_global, ("harnack_global",)),
    "harnack_alpha": Checker(_parse_harnack_alpha, _run_harnack_alpha, ("harnack_alpha",)),
    "gamma_closed_form": Checker(_parse_gamma, _run_gamma, ("gamma_closed_form",)),
    "spectral_oracle": Checker(_parse_spectral, _run_spectral, ("spectral_oracle",)),
    "cutoff": Checker(_parse_cutoff, _run_cutoff, ("cutoff",), False),
}


def validate(scenario: Scenario) -> list:
    """Resolve checker names and parse their parameters; raises :class:`ConfigError`."""
    plan = []
    for name, sec in scenario.checks:
        if name not in CHECKERS:
            raise ConfigError(f"[checks] run: unknown checker {name!r}; known: {', '.join(CHECKERS)}")
        checker = CHECKERS[name]
        if checker.needs_solution and scenario.model is None:
            raise ConfigError(f"[checks] run: {name} needs a [model] section")
        plan.append((name, checker, checker.parse(sec)))
    if scenario.model is not None:
        scenario.flow.num("T")
    return plan


# ---------------------------------------------------------------------------
# running and writing reports


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        val = float(obj)
        return val if math.isfinite(val) else repr(val)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_csv(path: Path, reports: list) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(CSV_VERSION + "\n")
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for rep in reports:
            if rep.margin.size == 0:
                continue
            data = np.column_stack([rep.t, rep.coord, rep.lhs, rep.rhs, rep.margin])
            np.savetxt(fh, data, fmt=rep.theorem + ",%.12g,%.12g,%.12g,%.12g,%.12g")


def run_scenario(scenario: Scenario, out_dir: Path, seed: Optional[int] = None) -> tuple[int, dict]:
    """Run every checker, write the reports and return ``(exit code, summary)``."""
    seed = scenario.seed if seed is None else seed
    plan = validate(scenario)
    ctx = Context(scenario, seed)
    out_dir.mkdir(parents=True, exist_ok=True)
    results = {}
    all_passed = True
    for name, checker, params in plan:
        start = time.perf_counter()
        try:
            reports = checker.run(ctx, params)
        except (RFHeatError, ValueError, ArithmeticError) as exc:
            log.warning("%s: %s", name, exc)
            results[name] = {"status": "error", "error": f"{type(exc).__name__}: {exc}", "reports": []}
            all_passed = False
            continue
        passed = all(r.passed for r in reports)
        all_passed &= passed
        results[name] = {"status": "pass" if passed else "fail", "reports": [r.summary() for r in reports]}
        write_csv(out_dir / f"{name}.csv", reports)
        log.info("%s: %s (%.2fs)", name, results[name]["status"], time.perf_counter() - start)
    summary = {
        "scenario": scenario.name,
        "description": scenario.description,
        "seed": seed,
        "version": __version__,
        "passed": all_passed,
        "checkers": results,
    }
    if scenario.model is not None:
        m = scenario.model
        summary["model"] = {"kind": m.kind, "dim": m.dim, "grid": m.grid, "radius": m.radius}
    with open(out_dir / "summary.json", "w") as fh:
        json.dump(_jsonable(summary), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return (0 if all_passed else 1), summary


# ---------------------------------------------------------------------------
# dumps


FIELDS = ("u", "conf", "ricci", "f", "P", "F1", "w")


def dump_field(scenario: Scenario, field_id: str, seed: Optional[int] = None) -> str:
    """CSV text ``t,coord,value`` for a raw field or for ``<checker>_{lhs,rhs,margin}``."""
    seed = scenario.seed if seed is None else seed
    ctx = Context(scenario, seed)
    buf = io.StringIO()
    buf.write(CSV_VERSION + "\n")
    buf.write("t,coord,value\n")
    if field_id in FIELDS:
        sol = ctx.solution()
        dq = DerivedQuantities(sol)
        values = {
            "u": lambda: sol.u,
            "conf": lambda: dq.conf,
            "ricci": lambda: dq.ricci,
            "f": lambda: dq.f,
            "P": dq.P,
            "F1": lambda: dq.F1,
            "w": dq.w,
        }[field_id]()
        t = np.repeat(sol.times, sol.model.npoints)
        x = np.tile(sol.model.coords, len(sol.times))
        np.savetxt(buf, np.column_stack([t, x, np.asarray(values).ravel()]), fmt="%.12g", delimiter=",")
        return buf.getvalue()
    base, _, part = field_id.rpartition("_")
    if part not in ("lhs", "rhs", "margin") or base not in CHECKERS:
        raise ConfigError(
            f"unknown field {field_id!r}; expected one of {', '.join(FIELDS)} "
            "or <checker>_lhs|rhs|margin"
        )
    sections = dict(scenario.checks)
    sec = sections.get(base, Section(f"check.{base}", None))
    checker = CHECKERS[base]
    for rep in checker.run(ctx, checker.parse(sec)):
        vals = getattr(rep, part)
        np.savetxt(buf, np.column_stack([rep.t, rep.coord, vals]), fmt="%.12g", delimiter=",")
    return buf.getvalue()


# ---------------------------------------------------------------------------
# entry point


def _default_out(name: str) -> Path:
    return Path(os.environ.get(OUT_ENV, "reports")) / name


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rfheat", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a scenario and write reports")
    run.add_argument("config", help="scenario file or bundled scenario name")
    run.add_argument("--out", type=Path, help="output directory")
    run.add_argument("--seed", type=int, help="override the scenario seed")
    sub.add_parser("list", help="list bundled scenarios")
    dump = sub.add_parser("dump", help="write a grid field as CSV")
    dump.add_argument("config")
    dump.add_argument("field")
    dump.add_argument("--out", type=Path, help="output file (default: stdout)")
    dump.add_argument("--seed", type=int)
    return parser


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(message)s",
        stream=sys.stderr,
    )
    try:
        if args.command == "list":
            for name in bundled_names():
                print(f"{name:24s} {load_scenario(name).description}")
            return 0
        scenario = load_scenario(args.config)
        if args.command == "run":
            out = args.out or _default_out(scenario.name)
            code, summary = run_scenario(scenario, out, args.seed)
            for name, res in summary["checkers"].items():
                print(f"{res['status']:5s} {name}")
            print(f"{'PASS' if code == 0 else 'FAIL'} {scenario.name} -> {out}")
            return code
        text = dump_field(scenario, args.field, args.seed)
        if args.out:
            args.out.write_text(text)
        else:
            sys.stdout.write(text)
        return 0
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
