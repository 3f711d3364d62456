import numpy as np
import pytest

from lakeflow.geometry import Circle, DepthProfile, LakeGeometry, koch_snowflake
from lakeflow.harness import (
    ExperimentPlan,
    Scenario,
    gamma_probe_experiment,
    invariant_suite,
    lake_sequence_experiment,
    nonsmooth_lake_experiment,
    patch,
    spacetime_velocity_distance,
    spacetime_vorticity_distance,
    viscosity_sweep,
)
from lakeflow.transport import SchemeConfig

DISK = LakeGeometry(Circle((0, 0), 1.0))
SHORE = DepthProfile(kind="power", exponents=(1.0,))
BASE = Scenario(DISK, SHORE, 1 / 32, patch((0.2, 0.1), 0.4), (), SchemeConfig(t_end=0.5, snapshots=10))


def test_plan_validation():
    with pytest.raises(ValueError, match="at least 3"):
        ExperimentPlan("lake_sequence", (2, 4), BASE)
    with pytest.raises(ValueError, match="monotone"):
        ExperimentPlan("lake_sequence", (2, 8, 4), BASE)
    with pytest.raises(ValueError, match="unknown"):
        ExperimentPlan("bogus", (2, 4, 8), BASE)


def test_constant_sequence_has_zero_error():
    table = lake_sequence_experiment(ExperimentPlan("lake_sequence", (2, 4, 8), BASE, rule="constant"))
    assert np.all(table.errors == 0.0)


@pytest.mark.parametrize("rule,delta0", [("domain_offset", 0.5), ("depth_shift", None)])
def test_lake_sequence_converges(rule, delta0):
    table = lake_sequence_experiment(ExperimentPlan("lake_sequence", (2, 4, 8), BASE, rule=rule, delta0=delta0))
    assert table.strictly_decreasing
    assert table.halved
    assert "strictly decreasing: True" in table.summary()


def test_tables_are_deterministic(tmp_path):
    plan = ExperimentPlan("lake_sequence", (2, 4, 8), BASE)
    lake_sequence_experiment(plan).to_csv(tmp_path / "a.csv")
    lake_sequence_experiment(plan).to_csv(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_viscosity_sweep():
    table = viscosity_sweep(ExperimentPlan("viscosity_sweep", (0.02, 0.01, 0.005), BASE))
    assert table.strictly_decreasing
    assert table.notes["inviscid_mass_drift"] <= 1e-12
    assert all(r <= 1 + 1e-8 for r in table.notes["ledger_max_ratio"].values())
    with pytest.raises(ValueError):
        viscosity_sweep(ExperimentPlan("viscosity_sweep", (0.005, 0.01, 0.02), BASE))


def test_self_distance_is_zero():
    tr = BASE.simulate()
    assert spacetime_velocity_distance(tr, tr) == 0.0
    assert spacetime_vorticity_distance(tr, tr) == 0.0


def test_koch_lake_with_zero_slope_shore():
    koch = LakeGeometry(koch_snowflake(3))
    scn = Scenario(koch, DepthProfile(kind="zero_slope"), 1 / 64, patch((0, 0), 0.3), (),
                   SchemeConfig(t_end=0.2, snapshots=4))
    assert invariant_suite(scn.simulate()).passed


def test_nonsmooth_ladder_on_koch_lake():
    koch = LakeGeometry(koch_snowflake(3))
    scn = Scenario(koch, SHORE, 1 / 64, patch((0, 0), 0.3), (), SchemeConfig(t_end=0.3, snapshots=6))
    res = nonsmooth_lake_experiment(ExperimentPlan("nonsmooth", (2, 4, 8), scn))
    assert res.cauchy_decreasing
    assert all(r.passed for r in res.invariants.values())


def test_gamma_probe_experiment():
    scn = Scenario(DISK, DepthProfile(), 1 / 32, patch(), ())
    rec = gamma_probe_experiment(ExperimentPlan("gamma_probe", (2, 4, 8), scn, rule="domain_offset"))
    assert rec.strictly_decreasing
