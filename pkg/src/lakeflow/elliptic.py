"""Weighted Dirichlet problems ``div((1/b) grad psi) = f``.

The operator acts on node fields. Its stencil is the 5-point stencil on
the node lattice whose edge weights are the face weights ``1/b_face`` of
the grid, so that ``curl((1/b) perp_grad psi)`` reproduces it exactly.
Boundary nodes carry Dirichlet data (zero unless lifted).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
import shapely

from .geometry import Circle, ConstantRule, DepthProfile, Ellipse, LakeGeometry, Polygon
from .grid import FaceField, Grid, GridError, build_grid, curl, face_inner, perp_grad

__all__ = [
    "ConvergenceError",
    "WeightedPoissonSystem",
    "EnergyReport",
    "pcg",
    "solve_weighted_poisson",
    "energy",
    "estimate_capacity",
    "capacity_ladder",
    "GammaProbeRecord",
    "gamma_probe",
    "h1_distance",
]

DEFAULT_TOL = 1e-10


class ConvergenceError(RuntimeError):
    """Iterative solve stopped before reaching the requested residual."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (relative residual {residual:.3e})")
        self.residual = residual


def pcg(A, b: np.ndarray, diag: np.ndarray, tol: float, max_iter: int):
    """Jacobi-preconditioned conjugate gradients from a zero start.

    Stops on the true relative residual ``||b - A x|| <= tol ||b||``.
    Returns ``(x, relative_residual, iterations)``.
    """
    x = np.zeros_like(b)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return x, 0.0, 0
    inv_diag = 1.0 / diag
    r = b.copy()
    z = inv_diag * r
    p = z.copy()
    rz = r @ z
    it = 0
    while it < max_iter:
        Ap = A @ p
        alpha = rz / (p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        it += 1
        if np.linalg.norm(r) <= tol * bnorm:
            # guard against drift of the recursive residual
            r = b - A @ x
            rel = np.linalg.norm(r) / bnorm
            if rel <= tol:
                return x, rel, it
            z = inv_diag * r
            p = z.copy()
            rz = r @ z
            continue
        z = inv_diag * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    rel = np.linalg.norm(b - A @ x) / bnorm
    raise ConvergenceError(f"CG did not converge in {max_iter} iterations", rel)


class WeightedPoissonSystem:
    """Assembled ``-div((1/b) grad .)`` on the interior nodes of a grid.

    ``matrix`` is the symmetric positive definite negative of the
    operator ``L``; ``apply`` evaluates ``L`` on full node fields.
    """

    def __init__(self, grid: Grid, weights: FaceField | None = None):
        self.grid = grid
        self.weights = weights if weights is not None else grid.weights
        interior = grid.interior_nodes
        self.index = np.full(interior.shape, -1, dtype=np.int64)
        self.index[interior] = np.arange(np.count_nonzero(interior))
        self.n = int(np.count_nonzero(interior))
        self.matrix = self._assemble()
        self.diagonal = self.matrix.diagonal()
        self._lu = None

    def _assemble(self):
        g, idx, h2 = self.grid, self.index, self.grid.h ** 2
        rows, cols, vals = [], [], []
        diag = np.zeros(self.n)
        # vertical node edges are x-faces, horizontal node edges are y-faces
        for w, a, b in (
            (self.weights.x, idx[:, :-1], idx[:, 1:]),
            (self.weights.y, idx[:-1, :], idx[1:, :]),
        ):
            w = w / h2
            for p, q in ((a, b), (b, a)):
                sel = (p >= 0) & (w > 0)
                np.add.at(diag, p[sel], w[sel])
                both = sel & (q >= 0)
                rows.append(p[both])
                cols.append(q[both])
                vals.append(-w[both])
        rows.append(np.arange(self.n))
        cols.append(np.arange(self.n))
        vals.append(diag)
        return sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(self.n, self.n)
        )

    # --- field <-> vector ----------------------------------------------------

    def restrict(self, f: np.ndarray) -> np.ndarray:
        return self.grid.check_node(f)[self.grid.interior_nodes]

    def extend(self, x: np.ndarray, boundary: np.ndarray | None = None) -> np.ndarray:
        out = np.zeros((self.grid.nx + 1, self.grid.ny + 1)) if boundary is None else boundary.copy()
        out[self.grid.interior_nodes] = x
        return out

    def apply(self, psi: np.ndarray) -> np.ndarray:
        """``L psi`` at every node (flux balance, partial at boundary nodes)."""
        w = self.weights
        u = perp_grad(self.grid, psi)
        return curl(self.grid, FaceField(w.x * u.x, w.y * u.y))

    # --- solves ----------------------------------------------------------------

    def _rhs(self, f, boundary):
        f = self.grid.check_node(f) if np.ndim(f) else np.full((self.grid.nx + 1, self.grid.ny + 1), float(f))
        rhs = f[self.grid.interior_nodes]
        if boundary is not None:
            b0 = np.where(self.grid.interior_nodes, 0.0, boundary)
            rhs = rhs - self.apply(b0)[self.grid.interior_nodes]
            boundary = b0
        return -rhs, boundary

    def solve(self, f, tol: float = DEFAULT_TOL, max_iter: int | None = None, boundary=None):
        """Solve ``L psi = f`` on interior nodes by preconditioned CG.

        ``boundary`` is an optional node field whose values on boundary
        nodes are imposed as Dirichlet data. Returns ``(psi, residual)``.
        """
        if not tol > 0:
            raise ValueError("tolerance must be positive")
        rhs, boundary = self._rhs(f, boundary)
        if max_iter is None:
            max_iter = max(1000, self.n)
        x, rel, _ = pcg(self.matrix, rhs, self.diagonal, tol, max_iter)
        return self.extend(x, boundary), rel

    def solve_direct(self, f, boundary=None) -> np.ndarray:
        """Same problem through a cached sparse LU factorisation."""
        if self._lu is None:
            self._lu = spla.splu(self.matrix.tocsc(), permc_spec="MMD_AT_PLUS_A")
        rhs, boundary = self._rhs(f, boundary)
        return self.extend(self._lu.solve(rhs), boundary)

    def residual(self, psi, f) -> float:
        """Relative residual ``||L psi - f|| / ||f||`` on interior nodes."""
        f = self.grid.check_node(f) if np.ndim(f) else np.full(psi.shape, float(f))
        fi = f[self.grid.interior_nodes]
        r = self.apply(psi)[self.grid.interior_nodes] - fi
        fn = np.linalg.norm(fi)
        return float(np.linalg.norm(r) / fn) if fn > 0 else float(np.linalg.norm(r))


def solve_weighted_poisson(grid: Grid, f, tol: float = DEFAULT_TOL, max_iter: int | None = None):
    """Solution of ``div((1/b) grad psi) = f`` with ``psi = 0`` on boundary nodes.

    Raises :class:`ConvergenceError` if the relative residual ``tol`` is not
    reached.
    """
    psi, _ = WeightedPoissonSystem(grid).solve(f, tol=tol, max_iter=max_iter)
    return psi


@dataclass(frozen=True)
class EnergyReport:
    dirichlet_part: float
    source_part: float
    total: float
    x_norm: float


def energy(grid: Grid, psi, f, weights: FaceField | None = None) -> EnergyReport:
    """``E(psi) = int |grad psi|^2 / (2b) + int f psi`` with face quadrature."""
    psi = grid.check_node(psi)
    f = grid.check_node(f) if np.ndim(f) else np.full(psi.shape, float(f))
    w = weights if weights is not None else grid.weights
    u = perp_grad(grid, psi)
    dirichlet = 0.5 * face_inner(grid, u, FaceField(w.x * u.x, w.y * u.y))
    mask = grid.interior_nodes
    source = math.fsum((f[mask] * psi[mask]).ravel()) * grid.cell_area
    return EnergyReport(dirichlet, source, dirichlet + source, math.sqrt(2 * dirichlet))


# --------------------------------------------------------------------------
# capacity
# --------------------------------------------------------------------------


def _as_shape(obj):
    if isinstance(obj, (Circle, Ellipse, Polygon)):
        return obj.to_shapely()
    if isinstance(obj, shapely.Geometry):
        return obj
    raise TypeError("capacity set must be a curve or a shapely geometry")


def _box_laplacian(nx: int, ny: int):
    """Graph Laplacian on an nx x ny cell block with zero ghosts outside."""
    ex, ey = np.ones(nx), np.ones(ny)
    tx = sp.diags([-ex[:-1], 2 * ex, -ex[:-1]], [-1, 0, 1])
    ty = sp.diags([-ey[:-1], 2 * ey, -ey[:-1]], [-1, 0, 1])
    return (sp.kron(tx, sp.identity(ny)) + sp.kron(sp.identity(nx), ty)).tocsr()


def estimate_capacity(grid: Grid, target, tol: float = 1e-10) -> float:
    """Upper estimate of the H^1 capacity of a compact set.

    Minimises ``||v||^2_{H^1}`` over cell functions on the whole grid box
    (zero outside it) with ``v = 1`` on every cell meeting the set.
    """
    shape = _as_shape(target)
    ox, oy = grid.origin
    h, nx, ny = grid.h, grid.nx, grid.ny
    x0, y0, x1, y1 = shape.bounds
    if x0 < ox or y0 < oy or x1 > ox + nx * h or y1 > oy + ny * h:
        raise GridError("capacity set lies outside the grid box")
    i0, i1 = max(int((x0 - ox) / h) - 1, 0), min(int((x1 - ox) / h) + 2, nx)
    j0, j1 = max(int((y0 - oy) / h) - 1, 0), min(int((y1 - oy) / h) + 2, ny)
    I, J = np.meshgrid(np.arange(i0, i1), np.arange(j0, j1), indexing="ij")
    boxes = shapely.box(ox + I * h, oy + J * h, ox + (I + 1) * h, oy + (J + 1) * h)
    hit = shapely.intersects(boxes, shape)
    fixed = np.zeros((nx, ny), dtype=bool)
    fixed[I[hit], J[hit]] = True
    if not fixed.any():
        raise GridError("capacity set does not meet any grid cell")

    M = _box_laplacian(nx, ny) + h * h * sp.identity(nx * ny, format="csr")
    fixed = fixed.ravel()
    free = ~fixed
    Mff = M[free][:, free]
    rhs = -(M[free][:, fixed] @ np.ones(np.count_nonzero(fixed)))
    vf, _, _ = pcg(Mff, rhs, Mff.diagonal(), tol, max(1000, 4 * Mff.shape[0]))
    v = np.ones(nx * ny)
    v[free] = vf
    return float(v @ (M @ v))


def capacity_ladder(target, box, hs: Sequence[float], tol: float = 1e-10):
    """``[(h, estimate), ...]`` over a refinement ladder on a fixed box."""
    x0, y0, x1, y1 = box
    cx, cy = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
    r = 0.45 * min(x1 - x0, y1 - y0)
    # any lake covering the box works: only the lattice is used
    geom = LakeGeometry(Circle((cx, cy), r), box=box)
    out = []
    for h in hs:
        g = build_grid(geom, DepthProfile(), h, box=box, floor=0.0)
        out.append((h, estimate_capacity(g, target, tol)))
    return out


# --------------------------------------------------------------------------
# gamma-convergence probe
# --------------------------------------------------------------------------


def h1_distance(grid: Grid, a, b) -> float:
    """Discrete ``H^1(D)`` distance between node fields on a common lattice."""
    e = grid.check_node(a) - grid.check_node(b)
    u = perp_grad(grid, e)
    return math.sqrt(face_inner(grid, u, u) + math.fsum((e * e).ravel()) * grid.cell_area)


@dataclass
class GammaProbeRecord:
    distances: list[float]
    center_values: list[float]
    limit_center_value: float
    limit_outside_max: float
    h: float
    fields: list[np.ndarray] = field(default_factory=list, repr=False)

    @property
    def strictly_decreasing(self) -> bool:
        d = self.distances
        return all(b < a for a, b in zip(d, d[1:]))


def gamma_probe(
    sequence: Sequence[LakeGeometry],
    limit: LakeGeometry,
    f: Callable | float,
    h: float,
    probe_point=(0.0, 0.0),
    tol: float = DEFAULT_TOL,
) -> GammaProbeRecord:
    """Solve ``Laplace(psi_n) = f`` on each domain and on the limit.

    All solves use unit weight on the lattice of ``limit.box``; fields are
    extended by zero and compared in the discrete ``H^1(D)`` norm.
    """
    flat = DepthProfile(kind="constant", interior=ConstantRule(1.0))

    def solve_on(geom):
        g = build_grid(geom, flat, h, box=limit.box, floor=0.0)
        rhs = f if not callable(f) else g.sample_nodes(f)
        psi, _ = WeightedPoissonSystem(g).solve(rhs, tol=tol)
        return g, psi

    g_lim, psi_lim = solve_on(limit)
    X, Y = g_lim.nodes
    k = np.unravel_index(np.argmin((X - probe_point[0]) ** 2 + (Y - probe_point[1]) ** 2), X.shape)
    outside = ~g_lim.interior_nodes & (g_lim.node_label == 0)
    distances, centers, fields = [], [], []
    for geom in sequence:
        g, psi = solve_on(geom)
        if psi.shape != psi_lim.shape:
            raise GridError("sequence domain does not share the limit lattice")
        distances.append(h1_distance(g_lim, psi, psi_lim))
        centers.append(float(psi[k]))
        fields.append(psi)
    return GammaProbeRecord(
        distances,
        centers,
        float(psi_lim[k]),
        float(np.abs(psi_lim[outside]).max(initial=0.0)),
        h,
        fields,
    )
