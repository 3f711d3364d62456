"""Convergence experiments over families of lakes.

Every run of an experiment uses the same lattice on a common box ``D``
(origins snapped to multiples of ``h``), so fields of different lakes are
compared after zero extension without interpolation.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .biot_savart import build_basis
from .diagnostics import weak_residual
from .elliptic import GammaProbeRecord, gamma_probe
from .geometry import (
    Circle,
    DepthProfile,
    GeometryError,
    LakeGeometry,
    _smooth_offset,
    approximating_sequence,
    hausdorff_distance,
)
from .grid import Grid, build_grid
from .transport import SchemeConfig, Trajectory, run

__all__ = [
    "Scenario",
    "ExperimentPlan",
    "ConvergenceRow",
    "ConvergenceTable",
    "InvariantReport",
    "invariant_suite",
    "spacetime_velocity_distance",
    "spacetime_vorticity_distance",
    "weak_vorticity_distance",
    "lake_sequence_experiment",
    "nonsmooth_lake_experiment",
    "viscosity_sweep",
    "gamma_probe_experiment",
    "patch",
    "bump",
    "EXPERIMENT_KINDS",
]

EXPERIMENT_KINDS = ("lake_sequence", "nonsmooth", "viscosity_sweep", "gamma_probe")


# --------------------------------------------------------------------------
# initial data
# --------------------------------------------------------------------------


def patch(center=(0.0, 0.0), radius: float = 0.3, value: float = 1.0) -> Callable:
    """Indicator of a disk times ``value``."""
    cx, cy = center

    def f(x, y):
        return np.where((x - cx) ** 2 + (y - cy) ** 2 < radius * radius, float(value), 0.0)

    return f


def bump(center=(0.0, 0.0), radius: float = 0.3, amplitude: float = 1.0) -> Callable:
    """``amplitude (1 - r^2/R^2)^3`` on the disk of radius ``R``."""
    cx, cy = center

    def f(x, y):
        s = 1.0 - ((x - cx) ** 2 + (y - cy) ** 2) / radius ** 2
        return amplitude * np.where(s > 0, s, 0.0) ** 3

    return f


# --------------------------------------------------------------------------
# scenario
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Scenario:
    geometry: LakeGeometry
    profile: DepthProfile
    h: float
    omega0: Callable
    gamma: tuple = ()
    scheme: SchemeConfig = SchemeConfig()
    box: tuple | None = None
    floor: float | None = None

    def build(self):
        grid = build_grid(self.geometry, self.profile, self.h, box=self.box, floor=self.floor)
        return grid, build_basis(grid)

    def simulate(self, hook=None, on_snapshot=None) -> Trajectory:
        grid, basis = self.build()
        om = grid.sample_cells(self.omega0)
        gamma = tuple(self.gamma) if self.gamma else (0.0,) * grid.n_islands
        return run(grid, basis, om, gamma, self.scheme, hook=hook, on_snapshot=on_snapshot)

    def variant(self, **kw) -> "Scenario":
        return replace(self, **kw)


@dataclass(frozen=True, eq=False)
class ExperimentPlan:
    """``params`` are ``n`` values (lake sequences, ladders, probes) or ``epsilon`` values."""

    kind: str
    params: tuple
    base: Scenario
    rule: str = "depth_shift"
    delta0: float | None = None
    probe: Callable | None = None
    T: float | None = None

    def __post_init__(self):
        if self.kind not in EXPERIMENT_KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        p = tuple(float(x) for x in self.params)
        object.__setattr__(self, "params", p)
        if len(p) < 3:
            raise ValueError("an experiment needs at least 3 sequence points")
        d = np.diff(p)
        if not (np.all(d > 0) or np.all(d < 0)):
            raise ValueError("sequence parameters must be strictly monotone")

    @property
    def scenario(self) -> Scenario:
        if self.T is None:
            return self.base
        return self.base.variant(scheme=replace(self.base.scheme, t_end=self.T))


@dataclass(frozen=True)
class ConvergenceRow:
    param: float
    error_l2_spacetime: float
    error_omega_weak: float
    hausdorff: float
    runtime: float


@dataclass
class ConvergenceTable:
    kind: str
    rows: list
    notes: dict = field(default_factory=dict)

    @property
    def errors(self) -> np.ndarray:
        return np.array([r.error_l2_spacetime for r in self.rows])

    @property
    def strictly_decreasing(self) -> bool:
        e = self.errors
        return bool(np.all(np.diff(e) < 0))

    @property
    def halved(self) -> bool:
        e = self.errors
        return bool(e[-1] < e[0] / 2)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            # runtimes are left out so that the file is reproducible byte for byte
            w.writerow(["param", "error_l2_spacetime", "error_omega_weak", "hausdorff"])
            for r in self.rows:
                w.writerow([repr(float(r.param)), repr(r.error_l2_spacetime), repr(r.error_omega_weak),
                            repr(r.hausdorff)])

    def summary(self) -> str:
        lines = [f"experiment: {self.kind}"]
        for r in self.rows:
            lines.append(f"  param={r.param:<10.6g} err={r.error_l2_spacetime:.6e} weak={r.error_omega_weak:.6e} "
                         f"hausdorff={r.hausdorff:.4e}")
        lines.append(f"  strictly decreasing: {self.strictly_decreasing}")
        lines.append(f"  last < first/2: {self.halved}")
        for k, v in self.notes.items():
            if k.startswith("_"):
                continue
            lines.append(f"  {k}: {v}")
        return "\n".join(lines)


# --------------------------------------------------------------------------
# distances between runs
# --------------------------------------------------------------------------


def _trapezoid(ts, vals) -> float:
    ts, vals = np.asarray(ts, dtype=float), np.asarray(vals, dtype=float)
    return float(np.sum(0.5 * (vals[1:] + vals[:-1]) * np.diff(ts)))


def _same_lattice(a: Grid, b: Grid):
    if (a.nx, a.ny) != (b.nx, b.ny) or not np.allclose(a.origin, b.origin) or a.h != b.h:
        raise ValueError("runs do not share a common lattice")


def _check_times(a: Trajectory, b: Trajectory):
    ta, tb = a.times, b.times
    if ta.shape != tb.shape or not np.allclose(ta, tb, rtol=0, atol=1e-12):
        raise ValueError("runs have different snapshot times")
    return ta


def _sqrt_b_v(grid: Grid, s):
    """``sqrt(b_face) v`` on faces; equals ``U sqrt(w)`` with ``U = b v``."""
    w = grid.weights
    return np.sqrt(w.x) * s.U.x, np.sqrt(w.y) * s.U.y


def spacetime_velocity_distance(a: Trajectory, b: Trajectory) -> float:
    """``||sqrt(b_a) v_a - sqrt(b_b) v_b||_{L^2((0,T) x D)}``."""
    _same_lattice(a.grid, b.grid)
    ts = _check_times(a, b)
    vals = []
    for sa, sb in zip(a.snapshots, b.snapshots):
        ax, ay = _sqrt_b_v(a.grid, sa)
        bx, by = _sqrt_b_v(b.grid, sb)
        vals.append((math.fsum(((ax - bx) ** 2).ravel()) + math.fsum(((ay - by) ** 2).ravel())) * a.grid.cell_area)
    return math.sqrt(_trapezoid(ts, vals))


def spacetime_vorticity_distance(a: Trajectory, b: Trajectory) -> float:
    """``||omega_a - omega_b||_{L^2((0,T) x D)}`` of zero-extended vorticities."""
    _same_lattice(a.grid, b.grid)
    ts = _check_times(a, b)
    vals = [math.fsum(((sa.omega - sb.omega) ** 2).ravel()) * a.grid.cell_area
            for sa, sb in zip(a.snapshots, b.snapshots)]
    return math.sqrt(_trapezoid(ts, vals))


def weak_vorticity_distance(a: Trajectory, b: Trajectory, probe) -> float:
    """``|int int phi (omega_a - omega_b)|`` for a fixed probe ``phi``."""
    _same_lattice(a.grid, b.grid)
    ts = _check_times(a, b)
    X, Y = a.grid.cell_centers
    phi = np.broadcast_to(probe(X, Y), X.shape)
    vals = [math.fsum((phi * (sa.omega - sb.omega)).ravel()) * a.grid.cell_area
            for sa, sb in zip(a.snapshots, b.snapshots)]
    return abs(_trapezoid(ts, vals))


def default_probe(geom: LakeGeometry) -> Callable:
    """Smooth bump centred at the deepest interior point of ``geom``."""
    x0, y0, x1, y1 = geom.outer.bounds()
    X, Y = np.meshgrid(np.linspace(x0, x1, 201), np.linspace(y0, y1, 201), indexing="ij")
    d = geom.signed_distance(X, Y)
    k = np.unravel_index(np.argmax(d), d.shape)
    return bump((float(X[k]), float(Y[k])), 0.5 * float(d[k]))


# --------------------------------------------------------------------------
# invariants
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class InvariantReport:
    mass_drift: float
    linf_monotone: bool
    lp_monotone: dict
    circulation_drift: float
    circulation_tolerance: float

    @property
    def passed(self) -> bool:
        return (
            self.mass_drift <= 1e-12
            and self.linf_monotone
            and all(self.lp_monotone.values())
            and self.circulation_drift <= self.circulation_tolerance
        )


def _nonincreasing(x, rtol=1e-12) -> bool:
    x = np.asarray(x)
    return bool(np.all(np.diff(x) <= rtol * np.maximum(np.abs(x[:-1]), 1e-300)))


def invariant_suite(traj: Trajectory, circulation_tolerance: float = 0.05) -> InvariantReport:
    """Mass drift, per-step monotonicity of norms and circulation drift of an inviscid run."""
    s = traj.steps
    m0 = s["mass"][0]
    scale = max(abs(m0), s["l1"].max(), 1e-300)
    drift = float(np.max(np.abs(s["mass"] - m0)) / scale)
    G = np.array([r.gamma for r in traj.records]).reshape(len(traj.records), -1)
    cdrift = float(np.max(np.abs(G - np.asarray(traj.snapshots[0].gamma)), initial=0.0))
    return InvariantReport(
        mass_drift=drift,
        linf_monotone=bool(np.all(np.diff(s["linf"]) <= 1e-12)),
        lp_monotone={p: _nonincreasing(s[f"l{p}"]) for p in (1, 2, 4)},
        circulation_drift=cdrift,
        circulation_tolerance=circulation_tolerance,
    )


# --------------------------------------------------------------------------
# experiments
# --------------------------------------------------------------------------


def _sequence_member(plan: ExperimentPlan, n: float) -> tuple[LakeGeometry, DepthProfile]:
    base = plan.base
    geom, prof = base.geometry, base.profile
    if plan.rule == "depth_shift":
        return geom, prof.shifted(1.0 / n)
    if plan.rule == "domain_offset":
        delta = (plan.delta0 if plan.delta0 is not None else 1.0) / n
        try:
            outer = _smooth_offset(geom.outer, -delta)
            islands = tuple(_smooth_offset(i, delta) for i in geom.islands)
            return LakeGeometry(outer, islands, box=geom.box), prof
        except GeometryError as exc:
            raise GeometryError(f"approximating domain is empty or disconnected: {exc}") from exc
    if plan.rule == "approximating":
        return approximating_sequence(geom, prof, int(n), plan.delta0)
    if plan.rule == "constant":
        return geom, prof
    raise ValueError(f"unknown sequence rule {plan.rule!r}")


def _run_member(scn: Scenario, geom, prof) -> Trajectory:
    return scn.variant(geometry=geom, profile=prof, box=scn.geometry.box).simulate()


def lake_sequence_experiment(plan: ExperimentPlan, keep: bool = False) -> ConvergenceTable:
    """Runs ``(Omega_n, b_n)`` and the reference lake, then tabulates the distances."""
    scn = plan.scenario.variant(box=plan.base.geometry.box)
    ref = scn.simulate()
    probe = plan.probe or default_probe(scn.geometry)
    sampling = scn.h / 4
    rows, runs = [], []
    for n in plan.params:
        geom, prof = _sequence_member(plan, n)
        t0 = time.perf_counter()
        tr = _run_member(scn, geom, prof)
        rt = time.perf_counter() - t0
        rows.append(ConvergenceRow(
            n,
            spacetime_velocity_distance(tr, ref),
            weak_vorticity_distance(tr, ref, probe),
            0.0 if geom is scn.geometry else hausdorff_distance(geom, scn.geometry, sampling),
            rt,
        ))
        if keep:
            runs.append(tr)
    table = ConvergenceTable("lake_sequence", rows, {"rule": plan.rule})
    if keep:
        table.notes["_runs"] = runs
        table.notes["_reference"] = ref
    return table


@dataclass
class NonsmoothResult:
    solution: Trajectory
    table: ConvergenceTable
    invariants: dict
    rungs: list = field(default_factory=list, repr=False)

    @property
    def cauchy_decreasing(self) -> bool:
        return self.table.strictly_decreasing


def nonsmooth_lake_experiment(plan: ExperimentPlan, keep: bool = False) -> NonsmoothResult:
    """Increasing ladder of smooth lakes; Cauchy differences between consecutive rungs.

    Row ``i`` of the table holds the distance between rungs ``i`` and
    ``i + 1``; the finest rung is returned as the constructed solution.
    """
    scn = plan.scenario.variant(box=plan.base.geometry.box)
    sampling = scn.h / 4
    runs, geoms, times, inv = [], [], [], {}
    for n in plan.params:
        geom, prof = approximating_sequence(scn.geometry, scn.profile, int(n), plan.delta0)
        t0 = time.perf_counter()
        tr = _run_member(scn, geom, prof)
        times.append(time.perf_counter() - t0)
        inv[int(n)] = invariant_suite(tr)
        runs.append(tr)
        geoms.append(geom)
    probe = plan.probe or default_probe(geoms[0])
    rows = []
    for i in range(len(runs) - 1):
        rows.append(ConvergenceRow(
            plan.params[i],
            spacetime_velocity_distance(runs[i], runs[i + 1]),
            weak_vorticity_distance(runs[i], runs[i + 1], probe),
            hausdorff_distance(geoms[i], scn.geometry, sampling),
            times[i],
        ))
    table = ConvergenceTable("nonsmooth", rows, {"finest_rung": int(plan.params[-1])})
    return NonsmoothResult(runs[-1], table, inv, runs if keep else [])


def viscosity_sweep(plan: ExperimentPlan) -> ConvergenceTable:
    """``||omega_eps - omega_0||_{L^2((0,T) x Omega)}`` for each ``epsilon``, plus ledgers."""
    if not np.all(np.diff(plan.params) < 0) or min(plan.params) <= 0:
        raise ValueError("viscosity list must be positive and strictly decreasing")
    scn = plan.scenario
    base = scn.variant(scheme=replace(scn.scheme, epsilon=0.0)).simulate()
    inv = invariant_suite(base)
    probe = plan.probe or default_probe(scn.geometry)
    rows, ledgers = [], {}
    for eps in plan.params:
        t0 = time.perf_counter()
        tr = scn.variant(scheme=replace(scn.scheme, epsilon=eps)).simulate()
        rt = time.perf_counter() - t0
        ledgers[eps] = max(v / tr.energy0 for v in tr.ledger) if tr.energy0 > 0 else 0.0
        rows.append(ConvergenceRow(eps, spacetime_vorticity_distance(tr, base),
                                   weak_vorticity_distance(tr, base, probe), 0.0, rt))
    return ConvergenceTable("viscosity_sweep", rows, {
        "inviscid_mass_drift": inv.mass_drift,
        "ledger_max_ratio": ledgers,
    })


def gamma_probe_experiment(plan: ExperimentPlan, f=1.0) -> GammaProbeRecord:
    """Domains ``Omega_n`` from the plan's rule against the base lake, unit weight."""
    scn = plan.base
    seq = [_sequence_member(plan, n)[0] for n in plan.params]
    return gamma_probe(seq, scn.geometry, f, scn.h)
