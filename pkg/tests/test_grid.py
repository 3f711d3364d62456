import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lakeflow.geometry import Circle, DepthProfile, LakeGeometry, Polygon
from lakeflow.grid import (
    FaceField,
    GridError,
    build_grid,
    cell_to_node,
    curl,
    div,
    face_inner,
    grad,
    integrate,
    lp_norm,
    node_to_cell,
    perp_grad,
    read_field,
    write_field,
)

DISK = LakeGeometry(Circle((0, 0), 1.0))
ANNULUS = LakeGeometry(Circle((0, 0), 1.0), (Circle((0, 0), 0.25),))
UNIT_SQUARE = LakeGeometry(Polygon(((0, 0), (1, 0), (1, 1), (0, 1))), box=(-0.25, -0.25, 1.25, 1.25))
SHORE = DepthProfile(kind="power", exponents=(1.0,))


@pytest.fixture(scope="module")
def disk64():
    return build_grid(DISK, DepthProfile(), 1 / 64)


@pytest.fixture(scope="module")
def shore32():
    return build_grid(ANNULUS, SHORE, 1 / 32)


def test_unresolved_island():
    small = LakeGeometry(Circle((0, 0), 1.0), (Circle((0.01, 0.02), 0.1),))
    with pytest.raises(GridError, match="unresolved"):
        build_grid(small, DepthProfile(), 0.5)


def test_flat_weights_are_one():
    g = build_grid(DISK, DepthProfile(), 1 / 32, floor=0.0)
    fl = g.fluid_faces
    assert np.all(g.face_weights.x[fl.x] == 1.0)
    assert np.all(g.face_weights.y[fl.y] == 1.0)


def test_active_area(disk64):
    area = np.count_nonzero(disk64.cell_mask) * disk64.cell_area
    assert abs(area - math.pi) <= 4 * disk64.h * 2 * math.pi


def test_stencil_weights_only_grow_near_boundary(shore32):
    g = shore32
    for s, w in ((g.sx, g.wx), (g.sy, g.wy)):
        assert np.all(s >= w - 1e-15)
        assert np.all(s <= 100 * w + 1e-15)


def test_grad_of_constant(disk64):
    g = grad(disk64, np.ones((disk64.nx, disk64.ny)))
    fl = disk64.fluid_faces
    assert np.all(g.x[fl.x] == 0) and np.all(g.y[fl.y] == 0)
    # ghosts are zero, so wall faces see a jump
    assert np.abs(g.x[disk64.wall_faces.x]).min() > 0


def test_curl_perp_grad_is_laplacian(disk64):
    g = disk64
    psi = g.sample_nodes(lambda x, y: x * x + y * y)
    lap = curl(g, perp_grad(g, psi))
    X, Y = g.nodes
    inner = (1 - np.hypot(X, Y)) > 2 * g.h
    assert np.abs(lap[inner] - 4.0).max() < 1e-10
    cells = node_to_cell(g, np.where(inner, lap, 4.0))
    assert np.abs(cells[g.cell_mask] - 4.0).max() < 1e-10


def test_div_perp_grad_is_zero(shore32):
    rng = np.random.default_rng(3)
    psi = rng.normal(size=(shore32.nx + 1, shore32.ny + 1))
    d = div(shore32, perp_grad(shore32, psi))
    assert np.abs(d).max() < 1e-12 * np.abs(psi).max() / shore32.h


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_summation_by_parts(seed):
    g = build_grid(ANNULUS, SHORE, 1 / 16)
    rng = np.random.default_rng(seed)
    u = FaceField(rng.normal(size=(g.nx + 1, g.ny)), rng.normal(size=(g.nx, g.ny + 1)))
    f = g.zero_extend(rng.normal(size=(g.nx, g.ny)))
    lhs = math.fsum((div(g, u) * f).ravel()) * g.cell_area
    rhs = face_inner(g, u, grad(g, f))
    assert abs(lhs + rhs) <= 1e-12 * max(1.0, abs(rhs))


def test_integrate_and_norms(disk64):
    one = np.ones((disk64.nx, disk64.ny))
    assert abs(integrate(disk64, one) - math.pi) <= 4 * disk64.h * 2 * math.pi
    f = disk64.sample_cells(lambda x, y: np.where(x > 0, 3.0, -3.0))
    assert lp_norm(disk64, f, math.inf) == 3.0
    with pytest.raises(ValueError):
        lp_norm(disk64, f, 0.5)


def test_weighted_norm_on_unit_square():
    g = build_grid(UNIT_SQUARE, DepthProfile(), 1 / 32)
    assert np.count_nonzero(g.cell_mask) == 32 * 32
    one = np.ones((g.nx, g.ny))
    assert lp_norm(g, one, 2, 4 * one) == pytest.approx(2.0, rel=1e-14)


def test_grid_mismatch(disk64):
    with pytest.raises(GridError, match="mismatch"):
        lp_norm(disk64, np.ones((3, 3)), 2)
    with pytest.raises(GridError, match="mismatch"):
        perp_grad(disk64, np.ones((3, 3)))


def test_cell_to_node_of_constant(disk64):
    n = cell_to_node(disk64, np.ones((disk64.nx, disk64.ny)))
    X, Y = disk64.nodes
    inner = (1 - np.hypot(X, Y)) > 2 * disk64.h
    assert np.all(n[inner] == 1.0)


def test_field_roundtrip(tmp_path, shore32):
    rng = np.random.default_rng(0)
    f = shore32.zero_extend(rng.normal(size=(shore32.nx, shore32.ny)))
    write_field(tmp_path / "f.txt", shore32, f)
    back, h, origin = read_field(tmp_path / "f.txt")
    assert np.array_equal(back, f)
    assert h == shore32.h and origin == shore32.origin
    psi = rng.normal(size=(shore32.nx + 1, shore32.ny + 1))
    write_field(tmp_path / "p.txt", shore32, psi)
    assert np.array_equal(read_field(tmp_path / "p.txt")[0], psi)


def test_islands_labelled(shore32):
    labels = set(np.unique(shore32.node_label).tolist())
    assert {0, 1} <= labels
    X, Y = shore32.nodes
    assert np.all(shore32.node_label[np.hypot(X, Y) < 0.2] == 1)


def test_depth_positive_on_active_cells(shore32):
    assert np.all(shore32.depth[shore32.cell_mask] > 0)
    assert np.all(shore32.depth[~shore32.cell_mask] == 0)
