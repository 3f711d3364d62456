"""Conserved quantities, inequality probes and CSV output."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .biot_savart import BiotSavartBasis, CutoffFamily, circulations, reconstruct_velocity
from .grid import Grid, GridError, face_inner, grad, integrate, lp_norm

__all__ = [
    "DiagnosticsRecord",
    "conserved_quantities",
    "HardyResult",
    "hardy_ratio",
    "CZRow",
    "cz_probe",
    "TimeProfile",
    "weak_residual",
    "csv_header",
    "write_csv",
    "DiagnosticsWriter",
]


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    mass: float
    l1: float
    l2: float
    l4: float
    linf: float
    energy_v: float
    gamma: tuple
    alpha: tuple

    def row(self) -> list[float]:
        return [self.t, self.mass, self.l1, self.l2, self.l4, self.linf, self.energy_v, *self.gamma, *self.alpha]

    def is_finite(self) -> bool:
        return all(math.isfinite(x) for x in self.row())


def conserved_quantities(state, grid: Grid, cutoffs: CutoffFamily) -> DiagnosticsRecord:
    """Mass, weighted norms of omega, ``||sqrt(b) v||_2`` and circulations of a state."""
    b = grid.depth
    om = state.omega
    gam = circulations(grid, cutoffs, state.v) if len(cutoffs) else np.zeros(0)
    return DiagnosticsRecord(
        t=float(state.t),
        mass=integrate(grid, b * om),
        l1=lp_norm(grid, om, 1, b),
        l2=lp_norm(grid, om, 2, b),
        l4=lp_norm(grid, om, 4, b),
        linf=lp_norm(grid, om, math.inf),
        energy_v=math.sqrt(max(face_inner(grid, state.U, state.v), 0.0)),
        gamma=tuple(float(g) for g in gam),
        alpha=tuple(float(a) for a in state.alpha),
    )


# --------------------------------------------------------------------------
# Hardy-type ratio
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class HardyResult:
    ratio: float
    zero_denominator: bool


def _boundary_adjacent(grid: Grid) -> np.ndarray:
    pm = np.pad(grid.cell_mask, 1)
    ring = ~(pm[:-2, 1:-1] & pm[2:, 1:-1] & pm[1:-1, :-2] & pm[1:-1, 2:])
    return grid.cell_mask & ring


def hardy_ratio(grid: Grid, f, R: float) -> HardyResult:
    """``||b^{-1/2} f/d||_{L^2(S_R)} / ||b^{-1/2} grad f||_{L^2(S_R)}`` on the strip ``0 < d <= R``.

    ``f`` is a cell field vanishing on boundary-adjacent cells.
    """
    if R < 4 * grid.h:
        raise ValueError(f"strip width R={R} is below 4h={4 * grid.h}")
    f = grid.check_cell(f)
    if np.any(f[_boundary_adjacent(grid)] != 0):
        raise ValueError("f must vanish on boundary-adjacent cells")
    d = grid.cell_distance
    strip = grid.cell_mask & (d > 0) & (d <= R)
    g = grad(grid, f)
    # cell |grad f|^2: mean of the squared normal derivatives on opposite faces
    g2 = 0.5 * (g.x[1:] ** 2 + g.x[:-1] ** 2 + g.y[:, 1:] ** 2 + g.y[:, :-1] ** 2)
    inv_b = 1.0 / grid.depth[strip]
    num = math.fsum(inv_b * (f[strip] / d[strip]) ** 2)
    den = math.fsum(inv_b * g2[strip])
    if den == 0.0:
        return HardyResult(0.0, True)
    return HardyResult(math.sqrt(num / den), False)


# --------------------------------------------------------------------------
# Calderon-Zygmund growth probe
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CZRow:
    p: float
    grad_norm: float
    grad_over_p: float
    ratio: float


def _velocity_gradient(grid: Grid, v):
    """Frobenius norm of grad v on cells whose four corners are interior nodes."""
    h = grid.h
    dxx = (v.x[1:] - v.x[:-1]) / h
    dyy = (v.y[:, 1:] - v.y[:, :-1]) / h
    # cross derivatives live on nodes; average them to cells
    nxy = np.zeros((grid.nx + 1, grid.ny + 1))
    nyx = np.zeros_like(nxy)
    nxy[:, 1:-1] = (v.x[:, 1:] - v.x[:, :-1]) / h
    nyx[1:-1, :] = (v.y[1:] - v.y[:-1]) / h

    def avg(n):
        return 0.25 * (n[:-1, :-1] + n[1:, :-1] + n[:-1, 1:] + n[1:, 1:])

    G = np.sqrt(dxx ** 2 + dyy ** 2 + avg(nxy) ** 2 + avg(nyx) ** 2)
    inn = grid.interior_nodes
    cells = inn[:-1, :-1] & inn[1:, :-1] & inn[:-1, 1:] & inn[1:, 1:]
    return G, cells


def cz_probe(grid: Grid, basis: BiotSavartBasis, omega, gamma=(), ps: Sequence[float] = (5, 8, 16, 32)) -> list[CZRow]:
    """``||grad v||_p`` and ``||grad v||_p / (p (||b omega||_p + ||b v||_2))`` for each ``p``."""
    if not grid.geometry.is_smooth:
        warnings.warn("CZ probe on a non-smooth geometry: growth law not expected to hold", stacklevel=2)
    rec = reconstruct_velocity(grid, basis, omega, gamma)
    G, cells = _velocity_gradient(grid, rec.v)
    bv = math.sqrt(face_inner(grid, rec.U, rec.U))
    bom = grid.depth * grid.zero_extend(omega)
    rows = []
    for p in ps:
        gp = (math.fsum((G[cells] ** p).ravel()) * grid.cell_area) ** (1.0 / p)
        denom = p * (lp_norm(grid, bom, p) + bv)
        rows.append(CZRow(float(p), gp, gp / p, gp / denom if denom > 0 else 0.0))
    return rows


# --------------------------------------------------------------------------
# weak form residual
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TimeProfile:
    """Time factor ``theta(t)`` of a separable test function and its derivative."""

    value: Callable[[float], float]
    derivative: Callable[[float], float]

    @classmethod
    def constant(cls, c: float = 1.0) -> "TimeProfile":
        return cls(lambda t: c, lambda t: 0.0)

    @classmethod
    def polynomial(cls, coeffs: Sequence[float]) -> "TimeProfile":
        """``sum coeffs[k] t^k``."""
        P = np.polynomial.Polynomial(coeffs)
        dP = P.deriv()
        return cls(lambda t: float(P(t)), lambda t: float(dP(t)))

    @classmethod
    def cosine(cls, frequency: float, phase: float = 0.0) -> "TimeProfile":
        w = 2 * math.pi * frequency
        return cls(lambda t: math.cos(w * t + phase), lambda t: -w * math.sin(w * t + phase))


def _trapezoid(ts, vals) -> float:
    ts, vals = np.asarray(ts), np.asarray(vals)
    if ts.size < 2:
        return 0.0
    return float(np.sum(0.5 * (vals[1:] + vals[:-1]) * np.diff(ts)))


def weak_residual(trajectory, testfn, time_profile: TimeProfile | None = None, window=None, signed: bool = False) -> float:
    """Residual of the weak vorticity equation for ``phi(x, t) = testfn(x) theta(t)``.

    Evaluates ``int int (phi_t b omega + grad phi . (b v) omega) + int phi b omega |_{t0}
    - int phi b omega |_{t1}`` with trapezoidal quadrature over the snapshots in
    ``window``. ``testfn`` is a callable ``(x, y)`` or a cell field and must
    vanish within ``2h`` of the boundary.
    """
    grid: Grid = trajectory.grid
    prof = time_profile or TimeProfile.constant()
    phi = grid.sample_cells(testfn) if callable(testfn) else grid.zero_extend(testfn)
    near = (grid.cell_distance < 2 * grid.h) | _boundary_adjacent(grid)
    if np.any(phi[near & grid.cell_mask] != 0) or np.any(phi[~grid.cell_mask] != 0):
        raise GridError("test function support touches the boundary")
    snaps = trajectory.snapshots
    if window is not None:
        t0, t1 = window
        snaps = [s for s in snaps if t0 - 1e-12 <= s.t <= t1 + 1e-12]
        if len(snaps) < 2:
            raise ValueError("time window must contain at least two snapshots")
    g = grad(grid, phi)
    h2 = grid.cell_area
    ts, a_vals, b_vals = [], [], []
    for s in snaps:
        p = np.pad(s.omega, 1)
        wx = 0.5 * (p[:-1, 1:-1] + p[1:, 1:-1])
        wy = 0.5 * (p[1:-1, :-1] + p[1:-1, 1:])
        flux = math.fsum((g.x * s.U.x * wx).ravel()) + math.fsum((g.y * s.U.y * wy).ravel())
        mass = math.fsum((phi * s.q).ravel())
        ts.append(s.t)
        a_vals.append(prof.derivative(s.t) * mass * h2)
        b_vals.append(prof.value(s.t) * flux * h2)
    first, last = snaps[0], snaps[-1]
    ends = (prof.value(first.t) * math.fsum((phi * first.q).ravel()) - prof.value(last.t) * math.fsum((phi * last.q).ravel())) * h2
    r = _trapezoid(ts, a_vals) + _trapezoid(ts, b_vals) + ends
    return r if signed else abs(r)


# --------------------------------------------------------------------------
# CSV
# --------------------------------------------------------------------------


def csv_header(n_islands: int) -> list[str]:
    return (
        ["t", "mass", "l1", "l2", "l4", "linf", "energy_v"]
        + [f"gamma_{k}" for k in range(1, n_islands + 1)]
        + [f"alpha_{k}" for k in range(1, n_islands + 1)]
    )


class DiagnosticsWriter:
    """Streams records to a CSV file, one row per snapshot."""

    def __init__(self, path, n_islands: int):
        self._fh = open(path, "w", newline="")
        self._w = csv.writer(self._fh)
        self._w.writerow(csv_header(n_islands))

    def write(self, rec: DiagnosticsRecord):
        self._w.writerow([repr(float(x)) for x in rec.row()])
        self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_csv(path, records: Iterable[DiagnosticsRecord], n_islands: int) -> None:
    with DiagnosticsWriter(path, n_islands) as w:
        for r in records:
            w.write(r)
