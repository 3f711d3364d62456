"""Masked Cartesian discretisation of a lake.

Layout (all arrays indexed ``[i, j]`` with ``i`` along x):

* cell fields, shape ``(nx, ny)``: vorticity, depth, test functions;
* node fields, shape ``(nx + 1, ny + 1)``: stream functions and cutoffs,
  living at cell corners;
* face fields, a :class:`FaceField` of x-face values ``(nx + 1, ny)`` and
  y-face values ``(nx, ny + 1)``: normal velocity components.

A node is *interior* when it lies in the fluid; every other node is a
boundary node labelled by the component containing it (0 outside the
outer curve, ``k`` inside island ``k``). A cell is active when at least
one corner is interior, so every corner of an inactive cell is a boundary
node. Stream functions are constant on each boundary label, which makes
the normal flux through every fluid/solid face vanish identically.

Edges joining an interior node to a boundary node are shortened to the
true boundary crossing ``theta * h`` in the elliptic stencil (weights
``sx, sy``); this keeps the operator symmetric and makes Dirichlet
solves second-order accurate on curved boundaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np
from scipy import ndimage

from .geometry import DepthProfile, LakeGeometry, depth

__all__ = [
    "FaceField",
    "Grid",
    "GridError",
    "build_grid",
    "grad",
    "div",
    "curl",
    "perp_grad",
    "node_to_cell",
    "cell_to_node",
    "integrate",
    "lp_norm",
    "face_inner",
    "write_field",
    "read_field",
]


class GridError(ValueError):
    """Grid cannot represent the lake, or fields do not match the grid."""


class FaceField(NamedTuple):
    """Normal components on x-faces and y-faces."""

    x: np.ndarray
    y: np.ndarray

    def __add__(self, other):
        return FaceField(self.x + other.x, self.y + other.y)

    def __sub__(self, other):
        return FaceField(self.x - other.x, self.y - other.y)

    def scale(self, c):
        return FaceField(c * self.x, c * self.y)

    def max_abs(self) -> float:
        return float(max(np.abs(self.x).max(initial=0.0), np.abs(self.y).max(initial=0.0)))


@dataclass(frozen=True, eq=False)
class Grid:
    nx: int
    ny: int
    h: float
    origin: tuple[float, float]
    cell_mask: np.ndarray
    depth: np.ndarray
    wx: np.ndarray
    wy: np.ndarray
    node_label: np.ndarray
    geometry: LakeGeometry
    profile: DepthProfile
    floor: float
    sx: np.ndarray
    sy: np.ndarray

    # --- coordinates -------------------------------------------------------

    @cached_property
    def cell_centers(self):
        ox, oy = self.origin
        xs = ox + (np.arange(self.nx) + 0.5) * self.h
        ys = oy + (np.arange(self.ny) + 0.5) * self.h
        return np.meshgrid(xs, ys, indexing="ij")

    @cached_property
    def nodes(self):
        ox, oy = self.origin
        xs = ox + np.arange(self.nx + 1) * self.h
        ys = oy + np.arange(self.ny + 1) * self.h
        return np.meshgrid(xs, ys, indexing="ij")

    @cached_property
    def face_centers(self):
        ox, oy = self.origin
        h = self.h
        xf = np.meshgrid(ox + np.arange(self.nx + 1) * h, oy + (np.arange(self.ny) + 0.5) * h, indexing="ij")
        yf = np.meshgrid(ox + (np.arange(self.nx) + 0.5) * h, oy + np.arange(self.ny + 1) * h, indexing="ij")
        return xf, yf

    @cached_property
    def cell_distance(self) -> np.ndarray:
        return self.geometry.signed_distance(*self.cell_centers)

    # --- masks -------------------------------------------------------------

    @property
    def n_islands(self) -> int:
        return self.geometry.n_islands

    @cached_property
    def interior_nodes(self) -> np.ndarray:
        return self.node_label < 0

    @cached_property
    def fluid_faces(self) -> FaceField:
        """Faces between two active cells."""
        m = np.pad(self.cell_mask, 1)
        return FaceField(m[:-1, 1:-1] & m[1:, 1:-1], m[1:-1, :-1] & m[1:-1, 1:])

    @cached_property
    def wall_faces(self) -> FaceField:
        """Faces between an active and an inactive cell."""
        m = np.pad(self.cell_mask, 1)
        return FaceField(m[:-1, 1:-1] ^ m[1:, 1:-1], m[1:-1, :-1] ^ m[1:-1, 1:])

    @cached_property
    def face_depth(self) -> FaceField:
        """Harmonic-mean depth on fluid faces, zero elsewhere."""
        with np.errstate(divide="ignore"):
            return FaceField(
                np.where(self.wx > 0, 1.0 / self.wx, 0.0), np.where(self.wy > 0, 1.0 / self.wy, 0.0)
            )

    @property
    def face_weights(self) -> FaceField:
        """Plain ``1/b_face`` on fluid faces."""
        return FaceField(self.wx, self.wy)

    @property
    def weights(self) -> FaceField:
        """Stencil weights: ``1/b_face`` with the boundary-distance correction."""
        return FaceField(self.sx, self.sy)

    @property
    def cell_area(self) -> float:
        return self.h * self.h

    # --- validation --------------------------------------------------------

    def check_cell(self, f) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if f.shape != (self.nx, self.ny):
            raise GridError(f"grid mismatch: expected cell field {(self.nx, self.ny)}, got {f.shape}")
        return f

    def check_node(self, f) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if f.shape != (self.nx + 1, self.ny + 1):
            raise GridError(
                f"grid mismatch: expected node field {(self.nx + 1, self.ny + 1)}, got {f.shape}"
            )
        return f

    def check_face(self, u: FaceField) -> FaceField:
        if u.x.shape != (self.nx + 1, self.ny) or u.y.shape != (self.nx, self.ny + 1):
            raise GridError("grid mismatch: face field shapes do not match the grid")
        return u

    def zero_extend(self, f) -> np.ndarray:
        """Cell field with inactive cells set to zero."""
        return np.where(self.cell_mask, self.check_cell(f), 0.0)

    def sample_cells(self, fn) -> np.ndarray:
        """Evaluate ``fn(x, y)`` at active cell centres, zero elsewhere."""
        X, Y = self.cell_centers
        return np.where(self.cell_mask, np.broadcast_to(fn(X, Y), X.shape), 0.0)

    def sample_nodes(self, fn) -> np.ndarray:
        X, Y = self.nodes
        return np.broadcast_to(fn(X, Y), X.shape).astype(float)


def _aligned_box(box, outer_bounds, h):
    x0, y0, x1, y1 = box
    ox0, oy0, ox1, oy1 = outer_bounds
    # snap to multiples of h so that grids sharing h share one lattice
    ox = h * math.floor(min(x0, ox0 - 2 * h) / h + 1e-9)
    oy = h * math.floor(min(y0, oy0 - 2 * h) / h + 1e-9)
    nx = int(math.ceil(max(x1, ox1 + 2 * h) / h - 1e-9)) - int(round(ox / h))
    ny = int(math.ceil(max(y1, oy1 + 2 * h) / h - 1e-9)) - int(round(oy / h))
    return (ox, oy), nx, ny


def _label_nodes(node_inside: np.ndarray, geom: LakeGeometry, nodes) -> np.ndarray:
    """Boundary-component label for every node, -1 for interior nodes."""
    X, Y = nodes
    label = np.where(node_inside, -1, 0)
    for k, isl in enumerate(geom.islands, start=1):
        hit = ~node_inside & (isl.signed_distance(X, Y) >= 0)
        if not hit.any():
            raise GridError(f"unresolved island {k}: no grid node inside it")
        label[hit] = k
    return label


def _crossing(geom: LakeGeometry, x, y, ex: float, ey: float, h: float, iters: int = 48):
    """Fraction ``theta`` of the edge from an inside node to the boundary."""
    lo, hi = np.zeros_like(x), np.ones_like(x)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        inside = geom.signed_distance(x + mid * h * ex, y + mid * h * ey) > 0
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
    return 0.5 * (lo + hi)


def _stencil_weights(geom, h, node_inside, nodes, wx, wy, theta_min):
    """Face weights divided by ``theta`` on edges that leave the fluid.

    An edge from an interior node to a boundary node sees the boundary
    value at the true crossing distance ``theta * h`` instead of ``h``.
    """
    X, Y = nodes
    sx, sy = wx.copy(), wy.copy()
    # x-faces carry the vertical node edges (i, j) -> (i, j + 1)
    for w, axis, (ex, ey) in ((sx, 1, (0.0, 1.0)), (sy, 0, (1.0, 0.0))):
        n = node_inside.shape[axis]
        a = [slice(None), slice(None)]
        b = [slice(None), slice(None)]
        a[axis], b[axis] = slice(0, n - 1), slice(1, n)
        a, b = tuple(a), tuple(b)
        for src, dst, sgn in ((a, b, 1.0), (b, a, -1.0)):
            sel = node_inside[src] & ~node_inside[dst]
            if sel.any():
                th = _crossing(geom, X[src][sel], Y[src][sel], sgn * ex, sgn * ey, h)
                w[sel] = w[sel] / np.maximum(th, theta_min)
    return sx, sy


def build_grid(
    geom: LakeGeometry,
    profile: DepthProfile,
    h: float,
    box=None,
    floor: float | None = None,
    theta_min: float = 1e-2,
) -> Grid:
    """Discretise ``(geom, profile)`` with square cells of size ``h``.

    ``floor`` is the depth regularisation ``eps_reg``; it defaults to
    ``profile.floor`` and then to ``h**2``.
    """
    if not h > 0:
        raise GridError("cell size must be positive")
    if geom.islands and geom.separation < 2 * h:
        raise GridError("unresolved geometry: features closer than two cells")
    origin, nx, ny = _aligned_box(box or geom.box, geom.outer.bounds(), h)
    if floor is None:
        floor = profile.floor if profile.floor is not None else h * h
    xs = origin[0] + np.arange(nx + 1) * h
    ys = origin[1] + np.arange(ny + 1) * h
    NX, NY = np.meshgrid(xs, ys, indexing="ij")
    node_inside = geom.signed_distance(NX, NY) > 0
    if not node_inside.any():
        raise GridError("grid has no interior nodes")
    mask = node_inside[:-1, :-1] | node_inside[1:, :-1] | node_inside[:-1, 1:] | node_inside[1:, 1:]
    for arr, what in ((mask, "active cells"), (node_inside, "interior nodes")):
        _, ncomp = ndimage.label(arr)
        if ncomp != 1:
            raise GridError(f"{what} form {ncomp} components; the fluid region must be connected")
    node_label = _label_nodes(node_inside, geom, (NX, NY))
    corners = np.stack([node_label[:-1, :-1], node_label[1:, :-1], node_label[:-1, 1:], node_label[1:, 1:]])
    if np.any((corners.min(axis=0) != corners.max(axis=0)) & ~mask):
        raise GridError("unresolved geometry: two boundary components touch at a solid cell")

    # depth at the centre, or at the mean of the inside corners for cut cells
    cx, cy = 0.5 * (NX[:-1, :-1] + NX[1:, 1:]), 0.5 * (NY[:-1, :-1] + NY[1:, 1:])
    centre_in = geom.contains(cx, cy)
    cin = np.stack([node_inside[:-1, :-1], node_inside[1:, :-1], node_inside[:-1, 1:], node_inside[1:, 1:]])
    cnt = np.maximum(cin.sum(axis=0), 1)
    px = np.where(centre_in, cx, (np.stack([NX[:-1, :-1], NX[1:, :-1], NX[:-1, 1:], NX[1:, 1:]]) * cin).sum(0) / cnt)
    py = np.where(centre_in, cy, (np.stack([NY[:-1, :-1], NY[1:, :-1], NY[:-1, 1:], NY[1:, 1:]]) * cin).sum(0) / cnt)
    # on non-convex boundaries that mean can fall outside: use the deepest corner
    lost = mask & ~geom.contains(px, py)
    if lost.any():
        sd = geom.signed_distance(NX, NY)
        csd = np.stack([sd[:-1, :-1], sd[1:, :-1], sd[:-1, 1:], sd[1:, 1:]])
        k = np.argmax(csd, axis=0)
        cxs = np.stack([NX[:-1, :-1], NX[1:, :-1], NX[:-1, 1:], NX[1:, 1:]])
        cys = np.stack([NY[:-1, :-1], NY[1:, :-1], NY[:-1, 1:], NY[1:, 1:]])
        px = np.where(lost, np.take_along_axis(cxs, k[None], 0)[0], px)
        py = np.where(lost, np.take_along_axis(cys, k[None], 0)[0], py)
    b = np.where(mask, depth(profile, geom, px, py, floor=floor), 0.0)
    if np.any(b[mask] <= 0) or not np.all(np.isfinite(b)):
        raise GridError("depth must be positive and finite on active cells")
    inv = np.zeros_like(b)
    inv[mask] = 1.0 / b[mask]
    pinv, pm = np.pad(inv, 1), np.pad(mask, 1)
    # 1/b_face with b_face = 2 bL bR / (bL + bR)
    wx = np.where(pm[:-1, 1:-1] & pm[1:, 1:-1], 0.5 * (pinv[:-1, 1:-1] + pinv[1:, 1:-1]), 0.0)
    wy = np.where(pm[1:-1, :-1] & pm[1:-1, 1:], 0.5 * (pinv[1:-1, :-1] + pinv[1:-1, 1:]), 0.0)
    sx, sy = _stencil_weights(geom, h, node_inside, (NX, NY), wx, wy, theta_min)
    for arr in (mask, b, wx, wy, sx, sy, node_label):
        arr.setflags(write=False)
    return Grid(nx, ny, float(h), origin, mask, b, wx, wy, node_label, geom, profile, float(floor), sx, sy)


# --------------------------------------------------------------------------
# difference operators
# --------------------------------------------------------------------------


def grad(grid: Grid, f) -> FaceField:
    """Face-normal gradient of a cell field, zero ghost values outside the fluid."""
    p = np.pad(grid.zero_extend(f), 1)
    h = grid.h
    return FaceField((p[1:, 1:-1] - p[:-1, 1:-1]) / h, (p[1:-1, 1:] - p[1:-1, :-1]) / h)


def div(grid: Grid, u: FaceField) -> np.ndarray:
    """Cell divergence of a face field (net outward flux / cell area)."""
    grid.check_face(u)
    out = (u.x[1:] - u.x[:-1] + u.y[:, 1:] - u.y[:, :-1]) / grid.h
    return np.where(grid.cell_mask, out, 0.0)


def perp_grad(grid: Grid, psi) -> FaceField:
    """Rotated gradient ``(-d/dy, d/dx)`` of a node field, on faces."""
    psi = grid.check_node(psi)
    h = grid.h
    return FaceField(-(psi[:, 1:] - psi[:, :-1]) / h, (psi[1:, :] - psi[:-1, :]) / h)


def curl(grid: Grid, u: FaceField) -> np.ndarray:
    """``d u_y/dx - d u_x/dy`` at nodes."""
    grid.check_face(u)
    h = grid.h
    uy = np.pad(u.y, ((1, 1), (0, 0)))
    ux = np.pad(u.x, ((0, 0), (1, 1)))
    return (uy[1:] - uy[:-1] - ux[:, 1:] + ux[:, :-1]) / h


def node_to_cell(grid: Grid, f) -> np.ndarray:
    """Average of the four corners, active cells only."""
    f = grid.check_node(f)
    avg = 0.25 * (f[:-1, :-1] + f[1:, :-1] + f[:-1, 1:] + f[1:, 1:])
    return np.where(grid.cell_mask, avg, 0.0)


def cell_to_node(grid: Grid, f) -> np.ndarray:
    """Average of the four neighbouring cells (zero-extended)."""
    p = np.pad(grid.zero_extend(f), 1)
    return 0.25 * (p[:-1, :-1] + p[1:, :-1] + p[:-1, 1:] + p[1:, 1:])


# --------------------------------------------------------------------------
# quadrature
# --------------------------------------------------------------------------


def integrate(grid: Grid, f) -> float:
    """Midpoint quadrature over the fluid.

    Cell fields are summed over active cells, node fields over interior
    nodes.
    """
    f = np.asarray(f, dtype=float)
    if f.shape == (grid.nx, grid.ny):
        vals = f[grid.cell_mask]
    else:
        vals = grid.check_node(f)[grid.interior_nodes]
    return math.fsum(vals) * grid.cell_area


def lp_norm(grid: Grid, f, p: float, weight=None) -> float:
    """``(h^2 sum weight |f|^p)^(1/p)`` over active cells; max ``|f|`` when ``p`` is inf."""
    if not p >= 1:
        raise ValueError("lp_norm needs p >= 1")
    f = grid.check_cell(f)[grid.cell_mask]
    if math.isinf(p):
        return float(np.abs(f).max(initial=0.0))
    w = 1.0 if weight is None else grid.check_cell(weight)[grid.cell_mask]
    return (math.fsum(w * np.abs(f) ** p) * grid.cell_area) ** (1.0 / p)


def face_inner(grid: Grid, u: FaceField, w: FaceField) -> float:
    """``h^2 * sum(u . w)`` over all faces."""
    return (math.fsum((u.x * w.x).ravel()) + math.fsum((u.y * w.y).ravel())) * grid.cell_area


# --------------------------------------------------------------------------
# text dumps
# --------------------------------------------------------------------------


def write_field(path, grid: Grid, f) -> None:
    """Dump a cell or node field.

    Header ``nx ny h ox oy`` (counts of the dumped array), then one line
    per y-index with x varying fastest. ``(ox, oy)`` is the lower-left
    corner of the box, which is also the first node.
    """
    f = np.asarray(f, dtype=float)
    if f.shape == (grid.nx, grid.ny):
        f = grid.zero_extend(f)
    else:
        grid.check_node(f)
    mx, my = f.shape
    with open(path, "w") as fh:
        fh.write(f"{mx} {my} {grid.h!r} {grid.origin[0]!r} {grid.origin[1]!r}\n")
        for j in range(my):
            fh.write(" ".join(repr(float(v)) for v in f[:, j]))
            fh.write("\n")


def read_field(path):
    """Inverse of :func:`write_field`: ``(array, h, origin)``."""
    with open(path) as fh:
        head = fh.readline().split()
        mx, my = int(head[0]), int(head[1])
        h, ox, oy = (float(v) for v in head[2:5])
        vals = np.array(fh.read().split(), dtype=float)
    if vals.size != mx * my:
        raise GridError(f"field dump has {vals.size} values, header says {mx * my}")
    return vals.reshape(my, mx).T.copy(), h, (ox, oy)
