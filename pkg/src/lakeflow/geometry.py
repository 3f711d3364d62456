"""Lake geometry: boundary curves, depth profiles, Hausdorff distance and
approximating lake sequences.

A lake is a pair (domain, depth). The domain is an outer closed curve with
a finite number of islands removed; the depth is a positive function on the
domain that may vanish at the shore like ``c * d**a`` where ``d`` is the
distance to the boundary.

All curve and lake objects are immutable. Point queries are vectorised:
``x`` and ``y`` may be scalars or arrays of identical shape.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, Sequence, Union

import numpy as np
import shapely
from scipy.interpolate import RegularGridInterpolator
from scipy.signal import fftconvolve
from scipy.spatial import cKDTree

__all__ = [
    "Circle",
    "Ellipse",
    "Polygon",
    "koch_snowflake",
    "LakeGeometry",
    "ConstantRule",
    "PolynomialRule",
    "TabulatedRule",
    "DepthProfile",
    "BoundaryStrip",
    "GeometryError",
    "signed_distance",
    "depth",
    "hausdorff_distance",
    "approximating_sequence",
]

# resolution used when an analytic curve has to be handed to shapely
_ARC_SEGMENTS = 64


class GeometryError(ValueError):
    """Invalid lake geometry or an impossible geometric construction."""


def _xy(x, y):
    return np.asarray(x, dtype=float), np.asarray(y, dtype=float)


# --------------------------------------------------------------------------
# closed curves
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Circle:
    center: tuple[float, float]
    radius: float

    analytic = True

    def __post_init__(self):
        if not self.radius > 0:
            raise GeometryError("circle radius must be positive")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))
        object.__setattr__(self, "radius", float(self.radius))

    def signed_distance(self, x, y):
        """Distance to the circle, positive inside."""
        x, y = _xy(x, y)
        return self.radius - np.hypot(x - self.center[0], y - self.center[1])

    def sample(self, spacing: float) -> np.ndarray:
        m = max(8, int(math.ceil(2 * math.pi * self.radius / spacing)))
        t = np.linspace(0.0, 2 * math.pi, m, endpoint=False)
        return np.column_stack(
            [self.center[0] + self.radius * np.cos(t), self.center[1] + self.radius * np.sin(t)]
        )

    def bounds(self):
        cx, cy = self.center
        r = self.radius
        return (cx - r, cy - r, cx + r, cy + r)

    def offset(self, delta: float):
        """Grow (delta > 0) or shrink (delta < 0) by ``|delta|``."""
        if self.radius + delta <= 0:
            raise GeometryError("offset empties the circle")
        return Circle(self.center, self.radius + delta)

    def to_shapely(self):
        return shapely.Point(self.center).buffer(self.radius, quad_segs=_ARC_SEGMENTS)


@dataclass(frozen=True)
class Ellipse:
    center: tuple[float, float]
    semi_axes: tuple[float, float]
    angle: float = 0.0

    analytic = True

    def __post_init__(self):
        a, b = self.semi_axes
        if not (a > 0 and b > 0):
            raise GeometryError("ellipse semi-axes must be positive")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))
        object.__setattr__(self, "semi_axes", (float(a), float(b)))

    def _local(self, x, y):
        x, y = _xy(x, y)
        c, s = math.cos(self.angle), math.sin(self.angle)
        dx, dy = x - self.center[0], y - self.center[1]
        return c * dx + s * dy, -s * dx + c * dy

    def signed_distance(self, x, y):
        """Exact distance to the ellipse, positive inside.

        Solves for the nearest point by bisection on the Lagrange
        parameter, which converges for every query point including the
        centre and the axes.
        """
        u, v = self._local(x, y)
        a, b = self.semi_axes
        swap = b > a
        if swap:
            a, b = b, a
            u, v = v, u
        y0, y1 = np.abs(u), np.abs(v)
        inside = (y0 / a) ** 2 + (y1 / b) ** 2 < 1.0
        # nearest point (z0, z1) from F(t) = (a y0/(t+a^2))^2 + (b y1/(t+b^2))^2 - 1 = 0
        lo = -b * b + b * y1
        hi = -b * b + np.hypot(a * y0, b * y1)
        for _ in range(100):
            t = 0.5 * (lo + hi)
            f = (a * y0 / (t + a * a)) ** 2 + (b * y1 / (t + b * b)) ** 2 - 1.0
            pos = f > 0
            lo = np.where(pos, t, lo)
            hi = np.where(pos, hi, t)
        t = 0.5 * (lo + hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            z0 = a * a * y0 / (t + a * a)
            z1 = b * b * y1 / (t + b * b)
        # points on the major axis inside the evolute need the closed form
        axis = y1 <= 1e-14 * max(a, 1.0)
        in_evolute = axis & (y0 < (a * a - b * b) / a)
        z0_ax = a * a * y0 / (a * a - b * b) if a > b else y0
        z0 = np.where(in_evolute, z0_ax, np.where(axis, a, z0))
        z1 = np.where(
            in_evolute, b * np.sqrt(np.clip(1 - (z0_ax / a) ** 2, 0, None)), np.where(axis, 0.0, z1)
        )
        dist = np.hypot(y0 - z0, y1 - z1)
        return np.where(inside, dist, -dist)

    def sample(self, spacing: float) -> np.ndarray:
        a, b = self.semi_axes
        perim = math.pi * (3 * (a + b) - math.sqrt((3 * a + b) * (a + 3 * b)))
        m = max(16, int(math.ceil(perim / spacing)))
        t = np.linspace(0.0, 2 * math.pi, m, endpoint=False)
        u, v = a * np.cos(t), b * np.sin(t)
        c, s = math.cos(self.angle), math.sin(self.angle)
        return np.column_stack([self.center[0] + c * u - s * v, self.center[1] + s * u + c * v])

    def bounds(self):
        pts = self.sample(min(self.semi_axes) / 64)
        return (*pts.min(axis=0), *pts.max(axis=0))

    def offset(self, delta: float):
        return _polygon_from_shapely(self.to_shapely().buffer(delta, quad_segs=16))

    def to_shapely(self):
        a, b = self.semi_axes
        return shapely.Polygon(self.sample(2 * math.pi * min(a, b) / (4 * _ARC_SEGMENTS)))


@dataclass(frozen=True)
class Polygon:
    """Simple closed polygon; vertices in order, last vertex not repeated."""

    vertices: tuple[tuple[float, float], ...]

    analytic = False

    def __post_init__(self):
        verts = tuple((float(px), float(py)) for px, py in self.vertices)
        if len(verts) > 1 and verts[0] == verts[-1]:
            verts = verts[:-1]
        if len(verts) < 3:
            raise GeometryError("polygon needs at least 3 vertices")
        object.__setattr__(self, "vertices", verts)
        if not self._shape.is_valid:
            raise GeometryError("polygon is not simple")

    @cached_property
    def _shape(self):
        return shapely.Polygon(self.vertices)

    @cached_property
    def _ring(self):
        return self._shape.exterior

    def signed_distance(self, x, y):
        """Exact distance to the polygon edges, positive inside."""
        x, y = _xy(x, y)
        flat_x, flat_y = x.ravel(), y.ravel()
        pts = shapely.points(flat_x, flat_y)
        dist = shapely.distance(pts, self._ring)
        inside = shapely.contains_xy(self._shape, flat_x, flat_y)
        return np.where(inside, dist, -dist).reshape(x.shape)

    def sample(self, spacing: float) -> np.ndarray:
        pts = []
        verts = np.asarray(self.vertices + (self.vertices[0],))
        for p, q in zip(verts[:-1], verts[1:]):
            m = max(1, int(math.ceil(np.hypot(*(q - p)) / spacing)))
            s = np.arange(m)[:, None] / m
            pts.append(p + s * (q - p))
        return np.vstack(pts)

    def bounds(self):
        return self._shape.bounds

    def offset(self, delta: float):
        return _polygon_from_shapely(self._shape.buffer(delta, quad_segs=16))

    def to_shapely(self):
        return self._shape


Curve = Union[Circle, Ellipse, Polygon]


def _polygon_from_shapely(shape) -> Polygon:
    if shape.is_empty:
        raise GeometryError("offset curve is empty")
    if shape.geom_type != "Polygon":
        raise GeometryError("offset curve is disconnected")
    shape = shape.simplify(0)
    return Polygon(tuple(shape.exterior.coords)[:-1])


def _smooth_offset(curve: Curve, delta: float) -> Curve:
    """Offset by ``delta`` with rounded corners (opening or closing).

    ``delta < 0`` shrinks the region: erode by ``2|delta|`` then dilate by
    ``|delta|``. ``delta > 0`` grows it: dilate by ``2 delta`` then erode by
    ``delta``. Both families are monotone in ``delta``.
    """
    if isinstance(curve, Circle):
        return curve.offset(delta)
    shape = curve.to_shapely()
    step = shape.buffer(2 * delta, quad_segs=16)
    if step.is_empty:
        raise GeometryError("offset curve is empty")
    return _polygon_from_shapely(step.buffer(-delta, quad_segs=16))


def koch_snowflake(iterations: int = 3, radius: float = 1.0, center=(0.0, 0.0)) -> Polygon:
    """Prefractal Koch snowflake inscribed in a circle of ``radius``."""
    ang = np.pi / 2 + 2 * np.pi * np.arange(3) / 3
    pts = [np.array([np.cos(t), np.sin(t)]) * radius + np.asarray(center) for t in ang]
    rot = np.array([[0.5, -math.sqrt(3) / 2], [math.sqrt(3) / 2, 0.5]])
    for _ in range(iterations):
        new = []
        for p, q in zip(pts, pts[1:] + pts[:1]):
            d = (q - p) / 3
            a, b = p + d, p + 2 * d
            # outward bump for a counterclockwise polygon lies to the right
            peak = a + rot.T @ d
            new.extend([p, a, peak, b])
        pts = new
    return Polygon(tuple(map(tuple, pts)))


# --------------------------------------------------------------------------
# lakes
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class LakeGeometry:
    """Outer curve with ``N`` islands removed, inside a bounding box ``D``.

    ``box`` is ``(xmin, ymin, xmax, ymax)``; by default a 10 % margin
    around the outer curve.
    """

    outer: Curve
    islands: tuple = ()
    box: tuple[float, float, float, float] | None = None

    def __post_init__(self):
        object.__setattr__(self, "islands", tuple(self.islands))
        if self.box is None:
            x0, y0, x1, y1 = self.outer.bounds()
            m = 0.1 * max(x1 - x0, y1 - y0)
            object.__setattr__(self, "box", (x0 - m, y0 - m, x1 + m, y1 + m))
        else:
            object.__setattr__(self, "box", tuple(float(v) for v in self.box))
        self._validate()

    def _validate(self):
        x0, y0, x1, y1 = self.outer.bounds()
        bx0, by0, bx1, by1 = self.box
        if not (bx0 < x0 and by0 < y0 and bx1 > x1 and by1 > y1):
            raise GeometryError("bounding box must strictly contain the outer curve")
        spacing = self.scale / 400
        for k, isl in enumerate(self.islands, start=1):
            pts = isl.sample(spacing)
            if np.any(self.outer.signed_distance(pts[:, 0], pts[:, 1]) <= 0):
                raise GeometryError(f"island {k} is not strictly inside the outer boundary")
            for j, other in enumerate(self.islands[:k - 1], start=1):
                opts = other.sample(spacing)
                if np.any(other.signed_distance(pts[:, 0], pts[:, 1]) >= 0) or np.any(
                    isl.signed_distance(opts[:, 0], opts[:, 1]) >= 0
                ):
                    raise GeometryError(f"islands {j} and {k} intersect")

    @property
    def n_islands(self) -> int:
        return len(self.islands)

    @property
    def curves(self) -> tuple:
        return (self.outer,) + self.islands

    @property
    def scale(self) -> float:
        x0, y0, x1, y1 = self.outer.bounds()
        return max(x1 - x0, y1 - y0)

    @property
    def is_smooth(self) -> bool:
        """True when every boundary component is an analytic curve."""
        return all(c.analytic for c in self.curves)

    def component_distances(self, x, y) -> np.ndarray:
        """Unsigned distance to each boundary component, shape ``(N+1, ...)``."""
        x, y = _xy(x, y)
        return np.stack([np.abs(c.signed_distance(x, y)) for c in self.curves])

    def signed_distance(self, x, y):
        """Distance to the boundary of the fluid region, positive inside."""
        x, y = _xy(x, y)
        sd = self.outer.signed_distance(x, y)
        for isl in self.islands:
            sd = np.minimum(sd, -isl.signed_distance(x, y))
        return sd

    def contains(self, x, y):
        return self.signed_distance(x, y) > 0

    def boundary_samples(self, spacing: float) -> np.ndarray:
        return np.vstack([c.sample(spacing) for c in self.curves])

    @cached_property
    def separation(self) -> float:
        """Minimum distance between islands and between islands and the outer curve."""
        if not self.islands:
            return math.inf
        gaps = []
        for k, isl in enumerate(self.islands):
            gaps.append(_curve_gap(self.outer, isl, nested=True))
            for other in self.islands[k + 1:]:
                gaps.append(_curve_gap(isl, other, nested=False))
        return min(gaps)

    @cached_property
    def inradius(self) -> float:
        """Largest signed distance, estimated on a 200 x 200 sample."""
        x0, y0, x1, y1 = self.outer.bounds()
        X, Y = np.meshgrid(np.linspace(x0, x1, 200), np.linspace(y0, y1, 200), indexing="ij")
        return float(self.signed_distance(X, Y).max())


def _curve_gap(a: Curve, b: Curve, nested: bool) -> float:
    if isinstance(a, Circle) and isinstance(b, Circle):
        dc = math.dist(a.center, b.center)
        return a.radius - dc - b.radius if nested else dc - a.radius - b.radius
    sa, sb = a.to_shapely(), b.to_shapely()
    if nested:
        return float(shapely.distance(sa.exterior, sb))
    return float(shapely.distance(sa, sb))


# --------------------------------------------------------------------------
# depth
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ConstantRule:
    value: float = 1.0

    def __call__(self, x, y):
        x, _ = _xy(x, y)
        return np.full(x.shape, float(self.value))


@dataclass(frozen=True)
class PolynomialRule:
    """Sum of ``coef * x**px * y**py`` over ``terms = ((px, py, coef), ...)``."""

    terms: tuple[tuple[int, int, float], ...]

    def __call__(self, x, y):
        x, y = _xy(x, y)
        out = np.zeros(np.broadcast(x, y).shape)
        for px, py, coef in self.terms:
            out = out + coef * x ** px * y ** py
        return out


@dataclass(frozen=True, eq=False)
class TabulatedRule:
    """Bilinear interpolation of values on a tensor lattice."""

    xs: np.ndarray
    ys: np.ndarray
    values: np.ndarray

    @cached_property
    def _interp(self):
        return RegularGridInterpolator(
            (self.xs, self.ys), self.values, method="linear", bounds_error=False, fill_value=None
        )

    def __call__(self, x, y):
        x, y = _xy(x, y)
        shape = np.broadcast(x, y).shape
        pts = np.column_stack([np.broadcast_to(x, shape).ravel(), np.broadcast_to(y, shape).ravel()])
        return self._interp(pts).reshape(shape)


DEPTH_KINDS = ("constant", "power", "blended", "zero_slope", "tabulated")


@dataclass(frozen=True)
class DepthProfile:
    """Depth ``b`` of a lake.

    kind
        ``constant``: ``b = interior(x)``.
        ``power``: ``b = c * d**a_k`` everywhere, ``k`` the nearest boundary
        component.
        ``blended``: shore law within ``blend_width`` of the boundary,
        interior rule beyond ``1.5 * blend_width``, linear blend in between.
        ``zero_slope``: ``b = c * exp(-1/d)``.
        ``tabulated``: ``interior`` is a :class:`TabulatedRule`.
    exponents
        ``a_0`` (outer) then ``a_1..a_N`` (islands); a single value is
        broadcast to every component.
    shift, scale
        ``b -> scale * b + shift`` before the floor is added.
    floor
        Regularisation ``eps_reg`` added on the fluid region. ``None`` lets
        the grid pick ``h**2``.
    """

    kind: str = "constant"
    interior: Callable = field(default_factory=ConstantRule)
    exponents: tuple[float, ...] = (0.0,)
    coefficient: float = 1.0
    blend_width: float | None = None
    shift: float = 0.0
    scale: float = 1.0
    floor: float | None = None

    def __post_init__(self):
        if self.kind not in DEPTH_KINDS:
            raise GeometryError(f"unknown depth kind {self.kind!r}")
        object.__setattr__(self, "exponents", tuple(float(a) for a in self.exponents))
        if any(a < 0 for a in self.exponents):
            raise GeometryError("shore exponents must be >= 0")
        if not self.coefficient > 0:
            raise GeometryError("shore coefficient must be positive")
        if self.floor is not None and self.floor < 0:
            raise GeometryError("depth floor must be >= 0")
        if self.scale <= 0 or self.shift < 0:
            raise GeometryError("depth scale must be positive and shift non-negative")

    def exponent(self, k: int) -> float:
        if len(self.exponents) == 1:
            return self.exponents[0]
        return self.exponents[k]

    def with_floor(self, floor: float | None) -> "DepthProfile":
        return replace(self, floor=floor)

    def scaled(self, factor: float) -> "DepthProfile":
        """Depth multiplied by ``factor`` (floor included)."""
        floor = None if self.floor is None else self.floor * factor
        return replace(self, scale=self.scale * factor, shift=self.shift * factor, floor=floor)

    def shifted(self, amount: float) -> "DepthProfile":
        return replace(self, shift=self.shift + amount)


def _shore_law(profile: DepthProfile, geom: LakeGeometry, x, y):
    dists = geom.component_distances(x, y)
    k = np.argmin(dists, axis=0)
    d = np.take_along_axis(dists, k[None], axis=0)[0]
    a = np.array([profile.exponent(j) for j in range(geom.n_islands + 1)])[k]
    return profile.coefficient * d ** a, d


def depth(profile: DepthProfile, geom: LakeGeometry, x, y, floor: float | None = None):
    """Depth plus regularisation floor; zero outside the fluid region.

    ``floor`` overrides ``profile.floor``; when both are ``None`` no floor
    is added.
    """
    x, y = _xy(x, y)
    x, y = np.broadcast_arrays(x, y)
    inside = geom.contains(x, y)
    kind = profile.kind
    if kind in ("constant", "tabulated"):
        b = profile.interior(x, y)
    elif kind == "power":
        b, _ = _shore_law(profile, geom, x, y)
    elif kind == "zero_slope":
        d = np.clip(geom.signed_distance(x, y), 1e-300, None)
        with np.errstate(divide="ignore", over="ignore"):
            b = profile.coefficient * np.exp(-1.0 / d)
    else:
        shore, d = _shore_law(profile, geom, x, y)
        width = profile.blend_width if profile.blend_width is not None else 0.1 * geom.inradius
        s = np.clip((1.5 * width - d) / (0.5 * width), 0.0, 1.0)
        b = s * shore + (1.0 - s) * profile.interior(x, y)
    b = profile.scale * b + profile.shift
    eps = profile.floor if floor is None else floor
    if eps:
        b = b + eps
    out = np.where(inside, b, 0.0)
    return out if out.ndim else float(out)


def signed_distance(geom: LakeGeometry, x, y):
    """Distance to the boundary of the lake, positive inside the fluid."""
    out = geom.signed_distance(x, y)
    return out if np.ndim(out) else float(out)


@dataclass(frozen=True)
class BoundaryStrip:
    """The fluid cells within distance ``R`` of the boundary."""

    geometry: LakeGeometry
    R: float

    def member(self, x, y):
        d = self.geometry.signed_distance(x, y)
        return (d >= 0) & (d <= self.R)

    def measure(self, h: float) -> float:
        x0, y0, x1, y1 = self.geometry.box
        xs = np.arange(x0 + h / 2, x1, h)
        ys = np.arange(y0 + h / 2, y1, h)
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        return float(np.count_nonzero(self.member(X, Y)) * h * h)


# --------------------------------------------------------------------------
# Hausdorff distance
# --------------------------------------------------------------------------


def _boundary_points(obj, sampling: float) -> np.ndarray:
    if isinstance(obj, LakeGeometry):
        return obj.boundary_samples(sampling)
    if isinstance(obj, (Circle, Ellipse, Polygon)):
        return obj.sample(sampling)
    pts = np.asarray(obj, dtype=float)
    if pts.size == 0:
        return pts.reshape(0, 2)
    return pts.reshape(-1, 2)


def hausdorff_distance(a, b, sampling: float) -> float:
    """Symmetric Hausdorff distance between boundary samplings.

    ``a`` and ``b`` are lakes, curves, or ``(M, 2)`` point arrays.
    """
    if not sampling > 0:
        raise ValueError("sampling must be positive")
    pa, pb = _boundary_points(a, sampling), _boundary_points(b, sampling)
    if len(pa) == 0 or len(pb) == 0:
        raise ValueError("empty set has no Hausdorff distance")
    dab = cKDTree(pb).query(pa)[0].max()
    dba = cKDTree(pa).query(pb)[0].max()
    return float(max(dab, dba))


# --------------------------------------------------------------------------
# approximating sequences
# --------------------------------------------------------------------------


def default_offset(geom: LakeGeometry) -> float:
    """One tenth of the smallest boundary separation (inradius if no islands)."""
    if geom.islands:
        return geom.separation / 10
    return geom.inradius / 10


def _bump_kernel(radius: float, spacing: float) -> np.ndarray:
    m = int(math.ceil(radius / spacing))
    s = np.arange(-m, m + 1) * spacing
    X, Y = np.meshgrid(s, s, indexing="ij")
    r2 = (X * X + Y * Y) / radius ** 2
    with np.errstate(divide="ignore"):
        k = np.where(r2 < 1, np.exp(-1.0 / np.clip(1 - r2, 1e-300, None)), 0.0)
    return k / k.sum()


def mollify(profile: DepthProfile, geom: LakeGeometry, radius: float, spacing: float | None = None):
    """Tabulated ``rho * b`` with a bump kernel of the given radius.

    ``b`` is extended by zero outside the lake before convolving.
    """
    if spacing is None:
        spacing = min(radius / 4, geom.scale / 128)
    x0, y0, x1, y1 = geom.box
    xs = np.arange(x0, x1 + spacing / 2, spacing)
    ys = np.arange(y0, y1 + spacing / 2, spacing)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    b = depth(profile.with_floor(0.0), geom, X, Y)
    smooth = fftconvolve(b, _bump_kernel(radius, spacing), mode="same")
    return TabulatedRule(xs, ys, smooth)


def approximating_sequence(
    geom: LakeGeometry,
    profile: DepthProfile,
    n: int,
    delta0: float | None = None,
    mollify_spacing: float | None = None,
) -> tuple[LakeGeometry, DepthProfile]:
    """The ``n``-th smooth lake of an increasing sequence converging to ``(geom, profile)``.

    The outer curve is pulled in and the islands pushed out by
    ``delta0 / n`` (rounded offsets); the depth is the bump-mollified depth
    at radius ``1 / (2n)`` plus ``1 / n``.
    """
    if n < 1:
        raise ValueError("sequence index must be >= 1")
    if delta0 is None:
        delta0 = default_offset(geom)
    delta = delta0 / n
    try:
        outer = _smooth_offset(geom.outer, -delta)
        islands = tuple(_smooth_offset(isl, delta) for isl in geom.islands)
        lake = LakeGeometry(outer, islands, box=geom.box)
    except GeometryError as exc:
        raise GeometryError(f"approximating domain is empty or disconnected: {exc}") from exc
    if geom.islands and lake.separation <= 0:
        raise GeometryError("approximating domain is empty or disconnected")
    rule = mollify(profile, geom, 1.0 / (2 * n), mollify_spacing)
    bn = DepthProfile(kind="tabulated", interior=rule, shift=1.0 / n, floor=profile.floor)
    return lake, bn
