"""Velocity from vorticity and island circulations.

For a lake with ``N`` islands the stream function is

    psi = psi0 + sum_k alpha_k psi_k,

where ``psi0`` solves the weighted Poisson problem with zero boundary
values and the ``psi_k`` carry unit circulation around island ``k``.
Circulations are evaluated with the weak formula

    gamma_k(v) = -int (perp_grad(chi_k) . v + chi_k curl v),

which on this grid equals the discrete flux of ``v`` around the island
for any admissible cutoff ``chi_k``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .elliptic import WeightedPoissonSystem
from .geometry import LakeGeometry
from .grid import FaceField, Grid, GridError, cell_to_node, curl, face_inner, perp_grad

__all__ = [
    "BiotSavartError",
    "CutoffFamily",
    "BiotSavartBasis",
    "build_cutoffs",
    "harmonic_basis",
    "circulation",
    "circulations",
    "circulation_basis",
    "build_basis",
    "reconstruct_velocity",
    "velocity_from_stream",
]

MAX_CONDITION = 1e12


class BiotSavartError(RuntimeError):
    pass


def _smootherstep(t):
    return t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)


@dataclass(frozen=True, eq=False)
class CutoffFamily:
    """Node fields ``chi_k``: 1 within ``delta/2`` of island ``k``, 0 beyond ``delta``."""

    chi: tuple
    delta: float

    def __len__(self):
        return len(self.chi)


def build_cutoffs(grid: Grid, geom: LakeGeometry | None = None, delta: float | None = None) -> CutoffFamily:
    geom = geom or grid.geometry
    if geom.n_islands == 0:
        return CutoffFamily((), math.inf)
    if delta is None:
        delta = geom.separation / 10.0
    if delta < 4 * grid.h:
        raise GridError(f"grid too coarse for cutoffs: delta={delta:.4g} < 4h={4 * grid.h:.4g}")
    X, Y = grid.nodes
    chis = []
    for k, isl in enumerate(geom.islands, start=1):
        dist = np.maximum(-isl.signed_distance(X, Y), 0.0)
        chi = _smootherstep(np.clip((delta - dist) / (0.5 * delta), 0.0, 1.0))
        bnd = ~grid.interior_nodes
        if np.any(chi[bnd & (grid.node_label == k)] != 1.0) or np.any(chi[bnd & (grid.node_label != k)] != 0.0):
            raise GridError(f"cutoff {k} is not 1 on island {k} and 0 on the other boundaries")
        chi.setflags(write=False)
        chis.append(chi)
    return CutoffFamily(tuple(chis), float(delta))


def harmonic_basis(grid: Grid, cutoffs: CutoffFamily, system: WeightedPoissonSystem | None = None,
                   direct: bool = True, tol: float = 1e-10) -> list:
    """``phi_k = tilde_phi_k + chi_k`` with ``L tilde_phi_k = -L chi_k``, zero on the boundary."""
    if not len(cutoffs):
        return []
    system = system or WeightedPoissonSystem(grid)
    out = []
    for chi in cutoffs.chi:
        rhs = -system.apply(chi)
        if direct:
            tphi = system.solve_direct(rhs)
        else:
            tphi, _ = system.solve(rhs, tol=tol)
        out.append(tphi + chi)
    return out


def circulation(grid: Grid, cutoffs: CutoffFamily, v: FaceField, omega_b, k: int) -> float:
    """Generalised circulation of ``v`` around island ``k`` (1-based).

    ``omega_b`` is ``curl v``, given on nodes or on cells (averaged to
    nodes); ``None`` computes it from ``v``.
    """
    if not 1 <= k <= len(cutoffs):
        raise IndexError(f"island index {k} out of range 1..{len(cutoffs)}")
    chi = cutoffs.chi[k - 1]
    grid.check_face(v)
    if omega_b is None:
        omega_b = curl(grid, v)
    else:
        omega_b = np.asarray(omega_b, dtype=float)
        if omega_b.shape == (grid.nx, grid.ny):
            omega_b = cell_to_node(grid, omega_b)
        grid.check_node(omega_b)
    inner = grid.interior_nodes
    vol = math.fsum((chi[inner] * omega_b[inner]).ravel()) * grid.cell_area
    return -(face_inner(grid, perp_grad(grid, chi), v) + vol)


def circulations(grid, cutoffs, v, omega_b=None) -> np.ndarray:
    return np.array([circulation(grid, cutoffs, v, omega_b, k) for k in range(1, len(cutoffs) + 1)])


def velocity_from_stream(grid: Grid, psi, weights: FaceField | None = None):
    """``(b v, v)`` on faces from a node stream function."""
    w = weights if weights is not None else grid.weights
    U = perp_grad(grid, psi)
    return U, FaceField(w.x * U.x, w.y * U.y)


@dataclass(eq=False)
class BiotSavartBasis:
    grid: Grid
    system: WeightedPoissonSystem
    cutoffs: CutoffFamily
    phi: list
    Phi: np.ndarray
    A: np.ndarray
    psi: list
    circulation_matrix: np.ndarray
    deviation: float
    direct: bool = True
    tol: float = 1e-10
    extras: dict = field(default_factory=dict)

    @property
    def n_islands(self) -> int:
        return len(self.phi)

    def solve(self, f):
        if self.direct:
            return self.system.solve_direct(f)
        psi, _ = self.system.solve(f, tol=self.tol)
        return psi


def circulation_basis(grid: Grid, cutoffs: CutoffFamily, phi: list, system: WeightedPoissonSystem | None = None,
                      direct: bool = True, tol: float = 1e-10) -> BiotSavartBasis:
    """Matrix ``Phi``, ``A = -Phi^{-1}`` and the unit-circulation fields ``psi_k``."""
    n = len(phi)
    if n == 0:
        raise BiotSavartError("circulation basis needs at least one island")
    system = system or WeightedPoissonSystem(grid)
    w = system.weights
    grads = [perp_grad(grid, p) for p in phi]
    Phi = np.empty((n, n))
    for j in range(n):
        for k in range(j, n):
            Phi[j, k] = Phi[k, j] = face_inner(grid, grads[j], FaceField(w.x * grads[k].x, w.y * grads[k].y))
    cond = np.linalg.cond(Phi)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise BiotSavartError(f"island capacity too small to resolve (cond(Phi) = {cond:.3e})")
    A = -np.linalg.inv(Phi)
    psi = [sum(A[k, j] * phi[j] for j in range(n)) for k in range(n)]
    G = np.empty((n, n))
    for k, p in enumerate(psi):
        _, v = velocity_from_stream(grid, p, w)
        G[:, k] = circulations(grid, cutoffs, v)
    dev = float(np.abs(G - np.eye(n)).max())
    return BiotSavartBasis(grid, system, cutoffs, phi, Phi, A, psi, G, dev, direct, tol)


def build_basis(grid: Grid, direct: bool = True, tol: float = 1e-10, delta: float | None = None) -> BiotSavartBasis:
    """Cutoffs, harmonic fields and circulation basis in one call (any ``N``)."""
    system = WeightedPoissonSystem(grid)
    cut = build_cutoffs(grid, delta=delta)
    if len(cut) == 0:
        return BiotSavartBasis(grid, system, cut, [], np.zeros((0, 0)), np.zeros((0, 0)), [], np.zeros((0, 0)),
                               0.0, direct, tol)
    phi = harmonic_basis(grid, cut, system, direct=direct, tol=tol)
    return circulation_basis(grid, cut, phi, system, direct=direct, tol=tol)


@dataclass(frozen=True, eq=False)
class Reconstruction:
    psi: np.ndarray
    v: FaceField
    alpha: np.ndarray
    U: FaceField
    source: np.ndarray

    def __iter__(self):
        return iter((self.psi, self.v, self.alpha))


def reconstruct_velocity(grid: Grid, basis: BiotSavartBasis, omega, gamma=()) -> Reconstruction:
    """Stream function, velocity and coefficients ``alpha`` from ``(omega, gamma)``.

    ``L psi0 = b omega`` (averaged to nodes), ``alpha_k = gamma_k +
    int b omega phi_k`` and ``psi = psi0 + sum alpha_k psi_k``.
    """
    omega = grid.check_cell(omega)
    if not np.all(np.isfinite(omega[grid.cell_mask])):
        raise ValueError("vorticity must be finite on active cells")
    gamma = np.asarray(gamma, dtype=float).reshape(-1)
    if gamma.size != basis.n_islands:
        raise ValueError(f"expected {basis.n_islands} circulations, got {gamma.size}")
    f = cell_to_node(grid, grid.depth * omega)
    psi = basis.solve(f)
    inner = grid.interior_nodes
    alpha = np.array(
        [gamma[k] + math.fsum((f[inner] * basis.phi[k][inner]).ravel()) * grid.cell_area for k in range(gamma.size)]
    )
    for k in range(gamma.size):
        psi = psi + alpha[k] * basis.psi[k]
    U, v = velocity_from_stream(grid, psi, basis.system.weights)
    return Reconstruction(psi, v, alpha, U, f)
