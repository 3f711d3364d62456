"""Acceptance suite: one test per criterion, each at its stated tolerance."""

import math
import time

import numpy as np
import pytest

from lakeflow.biot_savart import build_basis, reconstruct_velocity
from lakeflow.elliptic import gamma_probe, solve_weighted_poisson
from lakeflow.geometry import Circle, DepthProfile, LakeGeometry, Polygon
from lakeflow.grid import FaceField, build_grid, div, face_inner, grad
from lakeflow.diagnostics import hardy_ratio
from lakeflow.harness import (
    ExperimentPlan,
    Scenario,
    invariant_suite,
    lake_sequence_experiment,
    nonsmooth_lake_experiment,
    patch,
)
from lakeflow.transport import SchemeConfig

pytestmark = pytest.mark.acceptance

UNIT_DISK = LakeGeometry(Circle((0.0, 0.0), 1.0))
FLAT = DepthProfile()
SHORE = DepthProfile(kind="power", exponents=(1.0,))
TWO_ISLANDS = LakeGeometry(Circle((0, 0), 1.0), (Circle((-0.4, 0.1), 0.15), Circle((0.35, -0.25), 0.12)))
PATCH = patch((0.1, 0.4), 0.3)
GAMMA2 = (0.3, -0.2)


def _disk_error(h):
    g = build_grid(UNIT_DISK, FLAT, h, floor=0.0)
    psi = solve_weighted_poisson(g, 1.0)
    X, Y = g.nodes
    exact = (X ** 2 + Y ** 2 - 1) / 4
    m = g.interior_nodes
    l2 = math.sqrt(np.sum((psi - exact)[m] ** 2) * h * h)
    k = np.unravel_index(np.argmin(X ** 2 + Y ** 2), X.shape)
    return l2, abs(psi[k] + 0.25)


def test_criterion_1_elliptic_disk(criterion):
    t0 = time.perf_counter()
    e1, c1 = _disk_error(1 / 64)
    e2, c2 = _disk_error(1 / 128)
    runtime = time.perf_counter() - t0
    order = math.log2(e1 / e2)
    ok = order >= 0.9 and c1 <= 3 / 64 and c2 <= 3 / 128 and runtime < 10
    criterion(1, ok, f"L2 errors {e1:.3e}, {e2:.3e}, order {order:.2f}; centre errors {c1:.2e}, {c2:.2e}; "
                     f"{runtime:.1f}s")
    assert order >= 0.9
    assert c1 <= 3 / 64 and c2 <= 3 / 128
    assert runtime < 10


def test_criterion_2_annulus_basis(criterion):
    h = 1 / 128
    geom = LakeGeometry(Circle((0, 0), 1.0), (Circle((0, 0), 0.25),))
    g = build_grid(geom, FLAT, h, floor=0.0)
    basis = build_basis(g)
    X, Y = g.nodes
    m = g.interior_nodes
    exact = np.log(np.hypot(X[m], Y[m])) / math.log(0.25)
    err = float(np.abs(basis.phi[0][m] - exact).max())
    dev = basis.deviation
    ok = err <= 5 * h and dev <= 1e-2
    criterion(2, ok, f"max |phi - log r/log 0.25| = {err:.3e} (5h = {5 * h:.3e}); circulation deviation {dev:.2e}")
    assert err <= 5 * h
    assert dev <= 1e-2


@pytest.fixture(scope="module")
def two_island_runs():
    cfg = SchemeConfig(t_end=1.0, snapshots=20)
    out = {}
    for n in (128, 256):
        scn = Scenario(TWO_ISLANDS, SHORE, 1 / n, PATCH, GAMMA2, cfg)
        out[n] = scn.simulate()
    return out


def test_criterion_3_conservation(two_island_runs, criterion):
    reps = {n: invariant_suite(tr) for n, tr in two_island_runs.items()}
    d1, d2 = reps[128].circulation_drift, reps[256].circulation_drift
    floor = 1e-8
    halved = d2 <= d1 / 2 or max(d1, d2) <= floor
    ok = (
        all(r.mass_drift <= 1e-12 and r.linf_monotone and all(r.lp_monotone.values()) for r in reps.values())
        and d1 <= 0.05
        and d2 <= 0.05
        and halved
    )
    criterion(3, ok, "mass drift {:.1e}/{:.1e}; linf and L^p monotone {}; circulation drift {:.2e} (1/128), "
                     "{:.2e} (1/256), halved or at solver floor: {}".format(
                         reps[128].mass_drift, reps[256].mass_drift,
                         all(r.linf_monotone and all(r.lp_monotone.values()) for r in reps.values()), d1, d2, halved))
    for r in reps.values():
        assert r.mass_drift <= 1e-12
        assert r.linf_monotone
        assert all(r.lp_monotone.values())
    assert d1 <= 0.05 and d2 <= 0.05
    assert halved


def test_criterion_4_energy_ledger(criterion):
    worst = {}
    for eps in (0.01, 0.005):
        cfg = SchemeConfig(epsilon=eps, t_end=1.0, snapshots=20)
        tr = Scenario(TWO_ISLANDS, SHORE, 1 / 128, PATCH, GAMMA2, cfg).simulate()
        worst[eps] = max(v / tr.energy0 for v in tr.ledger)
    ok = all(w <= 1 + 1e-8 for w in worst.values())
    criterion(4, ok, "max ledger / initial energy: " + ", ".join(f"eps={e}: {w:.10f}" for e, w in worst.items()))
    assert ok


def test_criterion_5_lake_sequence(criterion):
    geom = LakeGeometry(Circle((0, 0), 1.0), (Circle((0.1, 0.05), 0.25),))
    scn = Scenario(geom, SHORE, 1 / 64, patch((-0.3, -0.3), 0.3), (0.3,), SchemeConfig(t_end=1.0, snapshots=20))
    t0 = time.perf_counter()
    table = lake_sequence_experiment(ExperimentPlan("lake_sequence", (2, 4, 8, 16), scn))
    runtime = time.perf_counter() - t0
    e = table.errors
    ok = table.strictly_decreasing and table.halved and runtime < 300
    criterion(5, ok, "errors " + ", ".join(f"{x:.3e}" for x in e) + f"; {runtime:.0f}s")
    assert table.strictly_decreasing
    assert table.halved
    assert runtime < 300


def test_criterion_6_nonsmooth_ladder(criterion):
    square = Polygon(((-1, -1), (1, -1), (1, 1), (-1, 1)))
    geom = LakeGeometry(square, (Circle((0.1, 0.1), 0.25),))
    scn = Scenario(geom, SHORE, 1 / 128, patch((-0.4, -0.4), 0.3), (0.3,), SchemeConfig(t_end=1.0, snapshots=20))
    res = nonsmooth_lake_experiment(ExperimentPlan("nonsmooth", (2, 4, 8), scn))
    e = res.table.errors
    inv_ok = all(r.passed for r in res.invariants.values())
    ok = res.cauchy_decreasing and inv_ok
    criterion(6, ok, "Cauchy differences " + ", ".join(f"{x:.3e}" for x in e) + f"; invariants on every rung: {inv_ok}")
    assert res.cauchy_decreasing
    assert inv_ok


def test_criterion_7_gamma_probe(criterion):
    h = 1 / 64
    seq = [LakeGeometry(Circle((0, 0), 1 - 1 / n), box=UNIT_DISK.box) for n in (2, 4, 8, 16)]
    rec = gamma_probe(seq, UNIT_DISK, 1.0, h)
    cerr = abs(rec.limit_center_value + 0.25)
    ok = rec.strictly_decreasing and cerr <= 3 * h
    criterion(7, ok, "H1 distances " + ", ".join(f"{d:.3e}" for d in rec.distances) + f"; centre error {cerr:.2e}")
    assert rec.strictly_decreasing
    assert cerr <= 3 * h


def test_criterion_8_hardy_uniformity(criterion):
    h = 1 / 128
    g = build_grid(UNIT_DISK, SHORE, h)
    rng = np.random.default_rng(8)
    X, Y = g.cell_centers
    d = g.cell_distance
    pm = np.pad(g.cell_mask, 1)
    adjacent = g.cell_mask & ~(pm[:-2, 1:-1] & pm[2:, 1:-1] & pm[1:-1, :-2] & pm[1:-1, 2:])
    r05, r10 = [], []
    for _ in range(100):
        k = rng.normal(scale=3.0, size=(4, 2))
        ph = rng.uniform(0, 2 * np.pi, 4)
        amp = rng.normal(size=4)
        gfield = sum(a * np.sin(kx * X + ky * Y + p) for a, (kx, ky), p in zip(amp, k, ph))
        f = np.where(g.cell_mask & ~adjacent, gfield * np.maximum(d, 0.0), 0.0)
        r05.append(hardy_ratio(g, f, 0.05).ratio)
        r10.append(hardy_ratio(g, f, 0.1).ratio)
    m05, m10 = max(r05), max(r10)
    ok = m05 <= 2 * m10
    criterion(8, ok, f"max ratio R=0.05: {m05:.4f}, R=0.1: {m10:.4f}")
    assert ok


def test_criterion_9_discrete_structure(criterion):
    h = 1 / 128
    g = build_grid(TWO_ISLANDS, SHORE, h)
    basis = build_basis(g)
    rng = np.random.default_rng(9)
    pm = np.pad(g.cell_mask, 1)
    inner = g.cell_mask & pm[:-2, 1:-1] & pm[2:, 1:-1] & pm[1:-1, :-2] & pm[1:-1, 2:]
    div_max, dual_max = 0.0, 0.0
    for _ in range(50):
        om = g.zero_extend(rng.normal(size=(g.nx, g.ny)))
        gam = rng.normal(size=2)
        rec = reconstruct_velocity(g, basis, om, gam)
        scale = max(rec.U.max_abs(), 1e-300) / h
        div_max = max(div_max, float(np.abs(div(g, rec.U)[g.cell_mask]).max()) / scale)
        u = FaceField(rng.normal(size=(g.nx + 1, g.ny)), rng.normal(size=(g.nx, g.ny + 1)))
        f = np.where(inner, rng.normal(size=(g.nx, g.ny)), 0.0)
        lhs = math.fsum((div(g, u) * f).ravel()) * g.cell_area
        rhs = face_inner(g, u, grad(g, f))
        dual_max = max(dual_max, abs(lhs + rhs) / max(abs(rhs), 1.0))

    lam, tol = 3.0, 1e-10
    g2 = build_grid(TWO_ISLANDS, SHORE.with_floor(h * h).scaled(lam), h)
    g1 = build_grid(TWO_ISLANDS, SHORE.with_floor(h * h), h)
    b1, b2 = build_basis(g1), build_basis(g2)
    om = g1.sample_cells(PATCH)
    v1 = reconstruct_velocity(g1, b1, om, GAMMA2).v
    v2 = reconstruct_velocity(g2, b2, om, tuple(lam * x for x in GAMMA2)).v
    scale_err = (v2 - v1.scale(lam)).max_abs() / (lam * v1.max_abs())
    ok = div_max <= 1e-13 and dual_max <= 1e-12 and scale_err <= 10 * tol
    criterion(9, ok, f"max |div(b v)| (relative) {div_max:.1e}; duality defect {dual_max:.1e}; "
                     f"scaling law defect {scale_err:.1e}")
    assert div_max <= 1e-13
    assert dual_max <= 1e-12
    assert scale_err <= 10 * tol
