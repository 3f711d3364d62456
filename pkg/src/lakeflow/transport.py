"""Conservative transport of ``q = b omega`` by the lake velocity.

One step is first-order upwind advection with the mass flux ``U = b v``
followed, when ``epsilon > 0``, by explicit diffusion
``epsilon div(b grad omega)`` with ``omega = 0`` behind wall faces. The
velocity is then rebuilt from the new vorticity and the fixed
circulations.

Time steps respect, besides the usual CFL numbers, the exact bounds that
make each sub-step a convex combination of old values, so ``max|omega|``
and every weighted ``L^p`` norm cannot grow.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .biot_savart import BiotSavartBasis, reconstruct_velocity
from .grid import FaceField, Grid, GridError

__all__ = [
    "SchemeConfig",
    "SimState",
    "Trajectory",
    "InvariantViolation",
    "MonotonicityError",
    "BlowUpError",
    "init_state",
    "cfl_timestep",
    "step",
    "run",
    "output_times",
]


class InvariantViolation(RuntimeError):
    """A discrete conservation law or bound failed during a run."""


class MonotonicityError(InvariantViolation):
    pass


class BlowUpError(RuntimeError):
    pass


@dataclass(frozen=True)
class SchemeConfig:
    epsilon: float = 0.0
    cfl: float = 0.45
    t_end: float = 1.0
    snapshots: int = 20
    check_invariants: bool = True

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise ValueError("epsilon must be >= 0")
        if not 0 < self.cfl < 1:
            raise ValueError("cfl must lie in (0, 1)")
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if int(self.snapshots) < 1:
            raise ValueError("snapshots must be >= 1")


def output_times(cfg: SchemeConfig) -> np.ndarray:
    return cfg.t_end * np.arange(cfg.snapshots + 1) / cfg.snapshots


@dataclass(frozen=True, eq=False)
class SimState:
    t: float
    q: np.ndarray
    omega: np.ndarray
    psi: np.ndarray
    U: FaceField
    v: FaceField
    alpha: np.ndarray
    gamma: np.ndarray
    step_count: int = 0
    dissipation: float = 0.0

    @property
    def mass(self) -> float:
        return math.fsum(self.q.ravel())


def _rebuild(grid, basis, q, gamma, **kw) -> SimState:
    omega = np.zeros_like(q)
    np.divide(q, grid.depth, out=omega, where=grid.cell_mask)
    rec = reconstruct_velocity(grid, basis, omega, gamma)
    return SimState(q=q, omega=omega, psi=rec.psi, U=rec.U, v=rec.v, alpha=rec.alpha, gamma=np.asarray(gamma), **kw)


def init_state(grid: Grid, basis: BiotSavartBasis, omega0, gamma=()) -> SimState:
    omega0 = grid.zero_extend(omega0)
    if not np.all(np.isfinite(omega0)):
        raise ValueError("initial vorticity must be finite")
    q = grid.depth * omega0
    q.setflags(write=False)
    gamma = np.asarray(gamma, dtype=float).reshape(-1)
    return _rebuild(grid, basis, q, gamma, t=0.0)


# --------------------------------------------------------------------------
# time step
# --------------------------------------------------------------------------


def _outflow(grid: Grid, U: FaceField) -> np.ndarray:
    """Sum of outgoing mass fluxes per cell."""
    px, py = np.maximum(U.x, 0.0), np.maximum(-U.x, 0.0)
    qx, qy = np.maximum(U.y, 0.0), np.maximum(-U.y, 0.0)
    return px[1:] + py[:-1] + qx[:, 1:] + qy[:, :-1]


def _diffusion_weights(grid: Grid) -> FaceField:
    """``b`` on fluid faces, ``2 b_cell`` on wall faces (half-cell distance to omega = 0)."""
    bf = grid.face_depth
    pb = np.pad(grid.depth, 1)
    wall = grid.wall_faces
    bx = np.where(wall.x, 2.0 * np.maximum(pb[:-1, 1:-1], pb[1:, 1:-1]), bf.x)
    by = np.where(wall.y, 2.0 * np.maximum(pb[1:-1, :-1], pb[1:-1, 1:]), bf.y)
    return FaceField(bx, by)


def _diffusion_diagonal(grid: Grid, beff: FaceField) -> np.ndarray:
    return (beff.x[1:] + beff.x[:-1] + beff.y[:, 1:] + beff.y[:, :-1]) / grid.h ** 2


def cfl_timestep(state: SimState, grid: Grid, cfg: SchemeConfig, t_next: float | None = None) -> float:
    """Largest admissible step, capped to land on ``t_next``.

    ``min(cfl h/|v|, cfl h^2/(4 eps max b))`` further limited by the exact
    convexity bounds ``h b_c / outflow_c`` and ``b_c / (2 eps K_cc)``.
    """
    vmax = state.v.max_abs()
    if not math.isfinite(vmax) or not math.isfinite(state.U.max_abs()):
        raise BlowUpError("velocity blow-up")
    h, m = grid.h, grid.cell_mask
    b = grid.depth[m]
    dt = math.inf
    if vmax > 0:
        dt = cfg.cfl * h / vmax
        out = _outflow(grid, state.U)[m]
        pos = out > 0
        if pos.any():
            dt = min(dt, h * float(np.min(b[pos] / out[pos])))
    if cfg.epsilon > 0:
        dt = min(dt, cfg.cfl * h * h / (4 * cfg.epsilon * float(b.max())))
        K = _diffusion_diagonal(grid, _diffusion_weights(grid))[m]
        dt = min(dt, float(np.min(b / (2 * cfg.epsilon * K))))
    if t_next is not None:
        dt = min(dt, t_next - state.t)
    if not math.isfinite(dt):
        raise ValueError("no time scale: quiescent state needs an output time cap")
    return dt


# --------------------------------------------------------------------------
# step
# --------------------------------------------------------------------------


def _advect(grid: Grid, q, omega, U: FaceField, dt: float):
    p = np.pad(omega, 1)
    Fx = U.x * np.where(U.x > 0, p[:-1, 1:-1], p[1:, 1:-1])
    Fy = U.y * np.where(U.y > 0, p[1:-1, :-1], p[1:-1, 1:])
    div = Fx[1:] - Fx[:-1] + Fy[:, 1:] - Fy[:, :-1]
    return np.where(grid.cell_mask, q - (dt / grid.h) * div, 0.0)


def _diffuse(grid: Grid, q, omega, eps: float, dt: float):
    """Explicit diffusion; returns ``(q_new, D)`` with ``D = ||sqrt(b) grad omega||^2``."""
    beff = _diffusion_weights(grid)
    p = np.pad(omega, 1)
    dx = p[1:, 1:-1] - p[:-1, 1:-1]
    dy = p[1:-1, 1:] - p[1:-1, :-1]
    Gx, Gy = beff.x * dx, beff.y * dy
    lap = (Gx[1:] - Gx[:-1] + Gy[:, 1:] - Gy[:, :-1]) / grid.h ** 2
    D = math.fsum((Gx * dx).ravel()) + math.fsum((Gy * dy).ravel())
    return np.where(grid.cell_mask, q + dt * eps * lap, 0.0), D


def step(state: SimState, grid: Grid, basis: BiotSavartBasis, cfg: SchemeConfig, dt: float | None = None) -> SimState:
    """Advance one step of size ``dt`` (default: :func:`cfl_timestep`)."""
    if dt is None:
        dt = cfl_timestep(state, grid, cfg)
    if not dt > 0:
        raise ValueError("time step must be positive")
    q = _advect(grid, state.q, state.omega, state.U, dt)
    dissipation = state.dissipation
    if cfg.epsilon > 0:
        om = np.zeros_like(q)
        np.divide(q, grid.depth, out=om, where=grid.cell_mask)
        q, D = _diffuse(grid, q, om, cfg.epsilon, dt)
        dissipation += cfg.epsilon * dt * D
    q.setflags(write=False)
    new = _rebuild(grid, basis, q, state.gamma, t=state.t + dt, step_count=state.step_count + 1,
                   dissipation=dissipation)
    old_max = float(np.abs(state.omega).max(initial=0.0))
    new_max = float(np.abs(new.omega).max(initial=0.0))
    if new_max > old_max + 1e-12:
        raise MonotonicityError(f"monotonicity violated: max|omega| {old_max:.6g} -> {new_max:.6g}")
    return new


# --------------------------------------------------------------------------
# run
# --------------------------------------------------------------------------


def _norms(grid: Grid, state: SimState):
    m = grid.cell_mask
    b, w = grid.depth[m], np.abs(state.omega[m])
    a = grid.cell_area
    return (
        math.fsum(b * w) * a,
        math.sqrt(math.fsum(b * w * w) * a),
        (math.fsum(b * w ** 4) * a) ** 0.25,
        float(w.max(initial=0.0)),
    )


@dataclass
class Trajectory:
    grid: Grid
    basis: BiotSavartBasis
    cfg: SchemeConfig
    snapshots: list
    records: list
    steps: dict
    mass0: float
    energy0: float
    runtime: float = 0.0
    ledger: list = field(default_factory=list)

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.snapshots])

    @property
    def final(self) -> SimState:
        return self.snapshots[-1]


def run(
    grid: Grid,
    basis: BiotSavartBasis,
    omega0,
    gamma,
    cfg: SchemeConfig,
    hook: Callable[[SimState], SimState] | None = None,
    on_snapshot: Callable | None = None,
) -> Trajectory:
    """Integrate to ``cfg.t_end`` and record snapshots at the output times.

    With ``cfg.check_invariants`` the run raises :class:`InvariantViolation`
    if the mass drifts (``epsilon = 0``) or the energy ledger is broken
    (``epsilon > 0``). ``hook`` may replace the state after every step.
    """
    from .diagnostics import conserved_quantities

    t0 = time.perf_counter()
    state = init_state(grid, basis, omega0, gamma)
    mass0 = state.mass
    energy0 = _norms(grid, state)[1] ** 2
    times = output_times(cfg)
    snaps, records = [state], [conserved_quantities(state, grid, basis.cutoffs)]
    ledger = [energy0]
    log = {"t": [0.0], "dt": [0.0], "mass": [mass0 * grid.cell_area]}
    for key, val in zip(("l1", "l2", "l4", "linf"), _norms(grid, state)):
        log[key] = [val]
    if on_snapshot:
        on_snapshot(state, records[-1])

    def check(s: SimState):
        if not cfg.check_invariants:
            return
        if cfg.epsilon == 0:
            scale = max(abs(mass0), math.fsum(np.abs(s.q).ravel()), 1e-300)
            if abs(s.mass - mass0) > 1e-12 * scale:
                a = grid.cell_area
                raise InvariantViolation(f"mass not conserved: {mass0 * a!r} -> {s.mass * a!r}")
        else:
            total = _norms(grid, s)[1] ** 2 + s.dissipation
            if total > energy0 * (1 + 1e-8) + 1e-300:
                raise InvariantViolation(f"energy ledger violated: {total!r} > {energy0!r}")

    for t_next in times[1:]:
        while state.t < t_next:
            dt = cfl_timestep(state, grid, cfg, t_next)
            state = step(state, grid, basis, cfg, dt)
            if t_next - state.t <= 1e-12 * cfg.t_end:
                state = replace(state, t=float(t_next))
            if hook is not None:
                state = hook(state)
            check(state)
            log["t"].append(state.t)
            log["dt"].append(dt)
            log["mass"].append(state.mass * grid.cell_area)
            for key, val in zip(("l1", "l2", "l4", "linf"), _norms(grid, state)):
                log[key].append(val)
        snaps.append(state)
        records.append(conserved_quantities(state, grid, basis.cutoffs))
        ledger.append(_norms(grid, state)[1] ** 2 + state.dissipation)
        if on_snapshot:
            on_snapshot(state, records[-1])
    steps = {k: np.array(v) for k, v in log.items()}
    return Trajectory(grid, basis, cfg, snaps, records, steps, mass0 * grid.cell_area, energy0,
                      time.perf_counter() - t0, ledger)
