"""Scenario configuration files (YAML).

Example::

    geometry:
      outer: {type: circle, center: [0, 0], radius: 1}
      islands:
        - {type: circle, center: [0.1, 0.05], radius: 0.25}
    depth: {kind: power, exponents: [1.0]}
    grid: {h: 0.015625}
    initial: {kind: patch, center: [-0.3, -0.3], radius: 0.3}
    circulations: [0.3]
    scheme: {epsilon: 0.0, cfl: 0.45, t_end: 1.0, snapshots: 20}
    output: out
    seed: 0
"""

from __future__ import annotations

from pathlib import Path
from typing import Annotated, Literal, Optional, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .geometry import (
    Circle,
    ConstantRule,
    DepthProfile,
    Ellipse,
    GeometryError,
    LakeGeometry,
    Polygon,
    PolynomialRule,
    koch_snowflake,
)
from .harness import ExperimentPlan, Scenario, bump, patch
from .transport import SchemeConfig

__all__ = [
    "ConfigError",
    "ScenarioConfig",
    "parse_config",
    "parse_text",
    "emit",
    "to_geometry",
    "to_profile",
    "to_initial",
    "to_scenario",
    "to_plan",
]


class ConfigError(ValueError):
    """All validation problems of a config, each prefixed by its key path."""

    def __init__(self, errors: list[str]):
        super().__init__("invalid config:\n  " + "\n  ".join(errors))
        self.errors = errors


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


Point = tuple[float, float]


class CircleSpec(_Model):
    type: Literal["circle"]
    center: Point = (0.0, 0.0)
    radius: float = Field(gt=0)


class EllipseSpec(_Model):
    type: Literal["ellipse"]
    center: Point = (0.0, 0.0)
    semi_axes: Point
    angle: float = 0.0


class PolygonSpec(_Model):
    type: Literal["polygon"]
    vertices: list[Point] = Field(min_length=3)


class KochSpec(_Model):
    type: Literal["koch"]
    iterations: int = Field(default=3, ge=0, le=6)
    radius: float = Field(default=1.0, gt=0)
    center: Point = (0.0, 0.0)


CurveSpec = Annotated[Union[CircleSpec, EllipseSpec, PolygonSpec, KochSpec], Field(discriminator="type")]


class GeometrySpec(_Model):
    outer: CurveSpec
    islands: list[CurveSpec] = []
    box: Optional[tuple[float, float, float, float]] = None


class DepthSpec(_Model):
    kind: Literal["constant", "power", "blended", "zero_slope", "polynomial"] = "constant"
    value: float = Field(default=1.0, gt=0)
    polynomial: Optional[list[tuple[int, int, float]]] = None
    exponents: list[float] = [0.0]
    coefficient: float = Field(default=1.0, gt=0)
    blend_width: Optional[float] = Field(default=None, gt=0)
    floor: Optional[float] = Field(default=None, ge=0)

    @model_validator(mode="after")
    def _check(self):
        if any(a < 0 for a in self.exponents):
            raise ValueError("exponents must be >= 0")
        if self.kind == "polynomial" and not self.polynomial:
            raise ValueError("kind 'polynomial' needs a 'polynomial' term list")
        return self


class GridSpec(_Model):
    h: Optional[float] = Field(default=None, gt=0)
    nx: Optional[int] = Field(default=None, gt=0)

    @model_validator(mode="after")
    def _one(self):
        if (self.h is None) == (self.nx is None):
            raise ValueError("give exactly one of 'h' and 'nx'")
        return self


class PatchSpec(_Model):
    kind: Literal["patch"]
    center: Point = (0.0, 0.0)
    radius: float = Field(default=0.3, gt=0)
    value: float = 1.0


class BumpSpec(_Model):
    kind: Literal["bump"]
    center: Point = (0.0, 0.0)
    radius: float = Field(default=0.3, gt=0)
    amplitude: float = 1.0


class ExpressionSpec(_Model):
    kind: Literal["expression"]
    expr: str


class ZeroSpec(_Model):
    kind: Literal["zero"]


InitialSpec = Annotated[Union[PatchSpec, BumpSpec, ExpressionSpec, ZeroSpec], Field(discriminator="kind")]


class SchemeSpec(_Model):
    epsilon: float = Field(default=0.0, ge=0)
    cfl: float = Field(default=0.45, gt=0, lt=1)
    t_end: float = Field(default=1.0, gt=0)
    snapshots: int = Field(default=20, ge=1)


class ExperimentSpec(_Model):
    kind: Literal["lake_sequence", "nonsmooth", "viscosity_sweep", "gamma_probe"]
    params: list[float] = Field(min_length=3)
    rule: Literal["depth_shift", "domain_offset", "approximating", "constant"] = "depth_shift"
    delta0: Optional[float] = Field(default=None, gt=0)
    T: Optional[float] = Field(default=None, gt=0)

    @model_validator(mode="after")
    def _monotone(self):
        d = np.diff(self.params)
        if not (np.all(d > 0) or np.all(d < 0)):
            raise ValueError("params must be strictly monotone")
        return self


class ScenarioConfig(_Model):
    geometry: GeometrySpec
    depth: DepthSpec = DepthSpec()
    grid: GridSpec
    initial: InitialSpec = ZeroSpec(kind="zero")
    circulations: list[float] = []
    scheme: SchemeSpec = SchemeSpec()
    experiment: Optional[ExperimentSpec] = None
    output: str = "out"
    seed: int = 0


# --------------------------------------------------------------------------
# parsing
# --------------------------------------------------------------------------


def _format(err) -> str:
    loc = ".".join(str(p) for p in err["loc"] if not (isinstance(p, str) and p in _TAGS))
    return f"{loc or '<root>'}: {err['msg']}"


_TAGS = {"circle", "ellipse", "polygon", "koch", "patch", "bump", "expression", "zero"}


def parse_text(text: str) -> ScenarioConfig:
    """Validate YAML text; raises :class:`ConfigError` listing every problem."""
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError([f"<root>: not valid YAML ({exc})"]) from exc
    if not isinstance(data, dict):
        raise ConfigError(["<root>: expected a mapping"])
    try:
        cfg = ScenarioConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError([_format(e) for e in exc.errors()]) from exc
    errors = []
    try:
        geom = to_geometry(cfg)
    except GeometryError as exc:
        errors.append(f"geometry: {exc}")
        geom = None
    if geom is not None and cfg.circulations and len(cfg.circulations) != geom.n_islands:
        errors.append(f"circulations: expected {geom.n_islands} values, got {len(cfg.circulations)}")
    if cfg.initial.kind == "expression":
        try:
            to_initial(cfg)(np.zeros(1), np.zeros(1))
        except Exception as exc:  # noqa: BLE001 - report any expression failure
            errors.append(f"initial.expr: {exc}")
    if errors:
        raise ConfigError(errors)
    return cfg


def parse_config(path) -> ScenarioConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError([f"<file>: {path} does not exist"])
    return parse_text(p.read_text())


def emit(cfg: ScenarioConfig) -> str:
    """YAML text that parses back to ``cfg``."""
    return yaml.safe_dump(cfg.model_dump(mode="json"), sort_keys=False)


# --------------------------------------------------------------------------
# conversion to domain objects
# --------------------------------------------------------------------------


def _curve(spec):
    if spec.type == "circle":
        return Circle(spec.center, spec.radius)
    if spec.type == "ellipse":
        return Ellipse(spec.center, spec.semi_axes, spec.angle)
    if spec.type == "polygon":
        return Polygon(tuple(spec.vertices))
    return koch_snowflake(spec.iterations, spec.radius, spec.center)


def to_geometry(cfg: ScenarioConfig) -> LakeGeometry:
    g = cfg.geometry
    return LakeGeometry(_curve(g.outer), tuple(_curve(i) for i in g.islands), box=g.box)


def to_profile(cfg: ScenarioConfig) -> DepthProfile:
    d = cfg.depth
    if d.kind == "polynomial":
        return DepthProfile("constant", PolynomialRule(tuple(d.polynomial)), floor=d.floor)
    interior = ConstantRule(d.value)
    return DepthProfile(d.kind, interior, tuple(d.exponents), d.coefficient, d.blend_width, floor=d.floor)


def _expression(expr: str):
    import sympy

    x, y = sympy.symbols("x y")
    parsed = sympy.sympify(expr, locals={"x": x, "y": y})
    extra = parsed.free_symbols - {x, y}
    if extra:
        raise ValueError(f"unknown symbols {sorted(map(str, extra))}")
    fn = sympy.lambdify((x, y), parsed, "numpy")
    return lambda X, Y: np.broadcast_to(np.asarray(fn(X, Y), dtype=float), np.broadcast(X, Y).shape)


def to_initial(cfg: ScenarioConfig):
    ini = cfg.initial
    if ini.kind == "patch":
        return patch(ini.center, ini.radius, ini.value)
    if ini.kind == "bump":
        return bump(ini.center, ini.radius, ini.amplitude)
    if ini.kind == "expression":
        return _expression(ini.expr)
    return lambda x, y: np.zeros(np.broadcast(x, y).shape)


def grid_spacing(cfg: ScenarioConfig, geom: LakeGeometry | None = None) -> float:
    if cfg.grid.h is not None:
        return cfg.grid.h
    geom = geom or to_geometry(cfg)
    x0, _, x1, _ = geom.box
    return (x1 - x0) / cfg.grid.nx


def to_scenario(cfg: ScenarioConfig, h: float | None = None) -> Scenario:
    geom = to_geometry(cfg)
    s = cfg.scheme
    gamma = tuple(cfg.circulations) if cfg.circulations else (0.0,) * geom.n_islands
    return Scenario(
        geometry=geom,
        profile=to_profile(cfg),
        h=h if h is not None else grid_spacing(cfg, geom),
        omega0=to_initial(cfg),
        gamma=gamma,
        scheme=SchemeConfig(s.epsilon, s.cfl, s.t_end, s.snapshots),
        floor=cfg.depth.floor,
    )


def to_plan(cfg: ScenarioConfig, scenario: Scenario | None = None) -> ExperimentPlan:
    if cfg.experiment is None:
        raise ConfigError(["experiment: section required for this command"])
    e = cfg.experiment
    return ExperimentPlan(e.kind, tuple(e.params), scenario or to_scenario(cfg), rule=e.rule, delta0=e.delta0, T=e.T)
