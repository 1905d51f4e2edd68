"""Scenario files: INI text with a fixed set of sections.

::

    [scenario]   name, description, seed
    [model]      kind, dim, radius, grid, cap_angle, period
    [flow]       type (homothetic | static | conformal), T, samples,
                 v0 (p2 | cos), v0_amplitude, steps
    [initial]    kind, params, shift, outputs, solver (fd | spectral)
    [checks]     run = comma separated checker names
    [check.NAME] checker parameters

Numbers may use ``pi`` (``pi/4``, ``2*pi``).
"""

from __future__ import annotations

import ast
import configparser
import math
import operator
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

from .errors import ConfigError
from .geometry import ManifoldModel

SCENARIO_PACKAGE = "rfheat.scenarios"

_OPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
    ast.USub: operator.neg,
    ast.UAdd: operator.pos,
}


def parse_number(text: str) -> float:
    """Arithmetic on literals and ``pi``; nothing else is evaluated."""

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id == "pi":
            return math.pi
        if isinstance(node, ast.BinOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.operand))
        raise ValueError(f"unsupported expression {text!r}")

    try:
        return ev(ast.parse(text.strip(), mode="eval"))
    except SyntaxError as exc:
        raise ValueError(f"not a number: {text!r}") from exc


def parse_list(text: str) -> list[float]:
    return [parse_number(p) for p in text.replace(";", ",").split(",") if p.strip()]


class Section:
    """Typed accessors over one config section that name ``section.key`` on error."""

    def __init__(self, name: str, data: Optional[configparser.SectionProxy]):
        self.name = name
        self.data = data if data is not None else {}

    def _fail(self, key, msg):
        raise ConfigError(f"[{self.name}] {key}: {msg}")

    def has(self, key: str) -> bool:
        return key in self.data

    def str(self, key: str, default=None) -> Optional[str]:
        if key not in self.data:
            if default is None:
                self._fail(key, "missing required field")
            return default
        return self.data[key].strip()

    def num(self, key: str, default=None) -> Optional[float]:
        if key not in self.data:
            if default is None:
                self._fail(key, "missing required field")
            return default
        try:
            return parse_number(self.data[key])
        except ValueError as exc:
            self._fail(key, str(exc))

    def int(self, key: str, default=None) -> Optional[int]:
        val = self.num(key, default)
        if val is None:
            return None
        if val != int(val):
            self._fail(key, f"expected an integer, got {val}")
        return int(val)

    def nums(self, key: str, default=None) -> Optional[list]:
        if key not in self.data:
            if default is None:
                self._fail(key, "missing required field")
            return list(default)
        try:
            return parse_list(self.data[key])
        except ValueError as exc:
            self._fail(key, str(exc))

    def flag(self, key: str, default: bool = False) -> bool:
        if key not in self.data:
            return default
        val = self.data[key].strip().lower()
        if val in ("1", "true", "yes", "on"):
            return True
        if val in ("0", "false", "no", "off"):
            return False
        self._fail(key, f"expected a boolean, got {val!r}")

    def keys(self):
        return list(self.data.keys())


@dataclass
class Scenario:
    name: str
    description: str
    seed: int
    source: str
    model: Optional[ManifoldModel] = None
    flow: Section = None
    initial: Section = None
    checks: list = field(default_factory=list)  # [(name, Section)]

    @property
    def needs_solution(self) -> bool:
        return self.model is not None


def _model_from(sec: Section) -> ManifoldModel:
    kind = sec.str("kind")
    try:
        return ManifoldModel(
            kind=kind,
            dim=sec.int("dim", 2),
            radius=sec.num("radius", 1.0),
            grid=sec.int("grid", 256),
            cap_angle=sec.num("cap_angle") if sec.has("cap_angle") else None,
            period=sec.num("period", 2 * math.pi),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"[model] {exc}") from exc


def parse_scenario(text: str, source: str = "<string>") -> Scenario:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    head = Section("scenario", parser["scenario"] if parser.has_section("scenario") else None)
    name = head.str("name", Path(source).stem)
    scenario = Scenario(
        name=name,
        description=head.str("description", ""),
        seed=head.int("seed", 0),
        source=source,
    )
    if parser.has_section("model"):
        scenario.model = _model_from(Section("model", parser["model"]))
        scenario.flow = Section("flow", parser["flow"] if parser.has_section("flow") else None)
        scenario.initial = Section(
            "initial", parser["initial"] if parser.has_section("initial") else None
        )
    run = Section("checks", parser["checks"] if parser.has_section("checks") else None)
    names = [c.strip() for c in (run.str("run", "") or "").split(",") if c.strip()]
    for sect in parser.sections():
        if sect.startswith("check.") and sect[6:] not in names:
            raise ConfigError(f"[{sect}] configures a checker that is not listed in [checks] run")
    for cname in names:
        sect = f"check.{cname}"
        scenario.checks.append((cname, Section(sect, parser[sect] if parser.has_section(sect) else None)))
    return scenario


def bundled_names() -> list[str]:
    root = resources.files(SCENARIO_PACKAGE)
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".cfg"))


def bundled_text(name: str) -> str:
    return resources.files(SCENARIO_PACKAGE).joinpath(f"{name}.cfg").read_text()


def load_scenario(ref: str) -> Scenario:
    """Load from a path, or from a bundled scenario name (``.cfg`` optional)."""
    path = Path(ref)
    if path.is_file():
        return parse_scenario(path.read_text(), str(path))
    stem = ref[:-4] if ref.endswith(".cfg") else ref
    if stem in bundled_names():
        return parse_scenario(bundled_text(stem), f"{stem}.cfg")
    raise ConfigError(f"no scenario file or bundled scenario named {ref!r}")
