import csv
import math
import warnings

import numpy as np
import pytest

from lakeflow.biot_savart import build_basis
from lakeflow.diagnostics import (
    TimeProfile,
    conserved_quantities,
    csv_header,
    cz_probe,
    hardy_ratio,
    weak_residual,
    write_csv,
)
from lakeflow.geometry import Circle, DepthProfile, LakeGeometry, Polygon
from lakeflow.grid import GridError, build_grid
from lakeflow.harness import Scenario, bump
from lakeflow.transport import SchemeConfig, init_state, run

DISK = LakeGeometry(Circle((0, 0), 1.0))
ISLAND = LakeGeometry(Circle((0, 0), 1.0), (Circle((0.1, 0.05), 0.25),))
SHORE = DepthProfile(kind="power", exponents=(1.0,))
PHI = bump((-0.4, -0.3), 0.3)


@pytest.fixture(scope="module")
def island64():
    g = build_grid(ISLAND, SHORE, 1 / 64)
    return g, build_basis(g)


@pytest.fixture(scope="module")
def flat_disk():
    g = build_grid(DISK, DepthProfile(), 1 / 64, floor=0.0)
    return g, build_basis(g)


def test_quiescent_quantities(island64):
    g, basis = island64
    s = init_state(g, basis, np.zeros((g.nx, g.ny)), (0.0,))
    rec = conserved_quantities(s, g, basis.cutoffs)
    assert rec.mass == rec.l2 == rec.linf == rec.energy_v == 0.0
    assert rec.gamma == (0.0,)


def test_mass_of_unit_vorticity(flat_disk):
    g, basis = flat_disk
    s = init_state(g, basis, np.ones((g.nx, g.ny)))
    rec = conserved_quantities(s, g, basis.cutoffs)
    assert abs(rec.mass - math.pi) <= 4 * g.h * 2 * math.pi
    assert rec.is_finite()


def test_records_deterministic(island64):
    g, basis = island64
    om = g.sample_cells(bump((-0.3, -0.3), 0.3))
    a = conserved_quantities(init_state(g, basis, om, (0.3,)), g, basis.cutoffs)
    b = conserved_quantities(init_state(g, basis, om, (0.3,)), g, basis.cutoffs)
    assert a.row() == b.row()


def test_hardy_ratio_bounded():
    g = build_grid(DISK, SHORE, 1 / 64)
    empty = hardy_ratio(g, np.zeros((g.nx, g.ny)), 0.2)
    assert empty.ratio == 0.0 and empty.zero_denominator
    d = g.cell_distance
    f = np.where(g.cell_mask & (d > 2 * g.h), d, 0.0)
    ratios = [hardy_ratio(g, f, R).ratio for R in (0.2, 0.1, 0.0625)]
    assert all(math.isfinite(r) and r < 5 for r in ratios)
    with pytest.raises(ValueError, match="4h"):
        hardy_ratio(g, f, 0.01)
    with pytest.raises(ValueError, match="boundary-adjacent"):
        hardy_ratio(g, np.where(g.cell_mask, 1.0, 0.0), 0.2)


def test_cz_probe(flat_disk):
    g, basis = flat_disk
    rows = cz_probe(g, basis, np.zeros((g.nx, g.ny)))
    assert all(r.grad_norm == 0 and r.ratio == 0 for r in rows)
    rows = cz_probe(g, basis, np.ones((g.nx, g.ny)))
    norms = [r.grad_norm for r in rows]
    assert max(norms) / min(norms) < 1.5
    assert all(r.ratio < 1 for r in rows)


def test_cz_probe_growth_on_smooth_lake(island64):
    g, basis = island64
    om = g.sample_cells(bump((-0.3, -0.3), 0.3))
    rows = cz_probe(g, basis, om, (0.3,), ps=(5, 32))
    assert rows[1].ratio <= 4 * rows[0].ratio and rows[0].ratio <= 4 * rows[1].ratio


def test_cz_probe_warns_on_polygon():
    sq = LakeGeometry(Polygon(((-1, -1), (1, -1), (1, 1), (-1, 1))))
    g = build_grid(sq, DepthProfile(), 1 / 16)
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        cz_probe(g, build_basis(g), np.zeros((g.nx, g.ny)))
    assert any("non-smooth" in str(x.message) for x in w)


def test_weak_residual_of_steady_state(flat_disk):
    g, basis = flat_disk
    tr = run(g, basis, np.ones((g.nx, g.ny)), (), SchemeConfig(t_end=0.2, snapshots=4))
    assert weak_residual(tr, bump((0.2, 0.1), 0.4)) <= 1e-8
    zero = np.zeros((g.nx, g.ny))
    assert weak_residual(tr, zero) == 0.0


def test_weak_residual_linear_and_local(island64):
    g, basis = island64
    tr = run(g, basis, g.sample_cells(bump((-0.3, -0.3), 0.35)), (0.3,), SchemeConfig(t_end=0.2, snapshots=8))
    phi = g.sample_cells(PHI)
    r1 = weak_residual(tr, phi, signed=True)
    r2 = weak_residual(tr, 3 * phi, signed=True)
    assert r2 == pytest.approx(3 * r1, rel=1e-9, abs=1e-15)
    with pytest.raises(GridError, match="touches the boundary"):
        weak_residual(tr, np.where(g.cell_mask, 1.0, 0.0))
    w = weak_residual(tr, phi, TimeProfile.polynomial((1.0, -1.0)), window=(0.05, 0.15))
    assert math.isfinite(w)


def test_weak_residual_converges():
    res = []
    for h in (1 / 64, 1 / 128):
        scn = Scenario(ISLAND, SHORE, h, bump((-0.3, -0.3), 0.35), (0.3,), SchemeConfig(t_end=0.5, snapshots=40))
        res.append(weak_residual(scn.simulate(), PHI))
    assert math.log2(res[0] / res[1]) >= 0.8


def test_csv_output(tmp_path, island64):
    g, basis = island64
    s = init_state(g, basis, g.sample_cells(bump((-0.3, -0.3), 0.3)), (0.3,))
    rec = conserved_quantities(s, g, basis.cutoffs)
    write_csv(tmp_path / "d.csv", [rec, rec], 1)
    rows = list(csv.reader(open(tmp_path / "d.csv")))
    assert rows[0] == csv_header(1) == ["t", "mass", "l1", "l2", "l4", "linf", "energy_v", "gamma_1", "alpha_1"]
    assert [float(x) for x in rows[1]] == rec.row()
    assert len(rows) == 3
