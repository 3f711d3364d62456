"""Command line front end.

Exit codes: 0 success, 2 an invariant or asserted trend failed, 1 any
other error.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path
from typing import Callable

import numpy as np

from . import config as cfgmod
from .biot_savart import build_basis, reconstruct_velocity
from .diagnostics import DiagnosticsWriter, conserved_quantities, cz_probe, hardy_ratio, write_csv
from .grid import build_grid, read_field, write_field
from .harness import (
    ExperimentPlan,
    gamma_probe_experiment,
    invariant_suite,
    lake_sequence_experiment,
    nonsmooth_lake_experiment,
    viscosity_sweep,
)
from .transport import InvariantViolation, SimState

__all__ = ["main", "run_scenario", "run_experiment", "EXIT_OK", "EXIT_ERROR", "EXIT_ASSERT"]

EXIT_OK, EXIT_ERROR, EXIT_ASSERT = 0, 1, 2

COMMAND_KINDS = {
    "converge": "lake_sequence",
    "nonsmooth": "nonsmooth",
    "viscosity": "viscosity_sweep",
    "gamma": "gamma_probe",
}


def _out_dir(cfg, out) -> Path:
    p = Path(out if out is not None else cfg.output)
    p.mkdir(parents=True, exist_ok=True)
    return p


def run_scenario(cfg, out=None, h: float | None = None, hook: Callable[[SimState], SimState] | None = None,
                 stream=None) -> int:
    """Run a configured scenario, writing ``diagnostics.csv`` and field dumps.

    ``hook`` replaces the state after every step (used to exercise the
    failure path).
    """
    stream = stream or sys.stdout
    out = _out_dir(cfg, out)
    scn = cfgmod.to_scenario(cfg, h)
    grid, basis = scn.build()
    om0 = grid.sample_cells(scn.omega0)
    writer = DiagnosticsWriter(out / "diagnostics.csv", grid.n_islands)
    count = [0]

    def on_snapshot(state, rec):
        writer.write(rec)
        write_field(out / f"omega_{count[0]:04d}.txt", grid, state.omega)
        count[0] += 1
        print(f"t={rec.t:.6f} mass={rec.mass:.12e} linf={rec.linf:.6e} l2={rec.l2:.6e} energy_v={rec.energy_v:.6e}"
              + "".join(f" gamma_{k + 1}={g:.6e}" for k, g in enumerate(rec.gamma)), file=stream)

    from .transport import run

    try:
        traj = run(grid, basis, om0, scn.gamma, scn.scheme, hook=hook, on_snapshot=on_snapshot)
    except InvariantViolation as exc:
        print(f"invariant violated: {exc}", file=stream)
        return EXIT_ASSERT
    finally:
        writer.close()
    write_field(out / "psi_final.txt", grid, traj.final.psi)
    status = EXIT_OK
    if scn.scheme.epsilon == 0:
        rep = invariant_suite(traj, circulation_tolerance=float("inf"))
        if not rep.passed:
            print(f"invariant suite failed: {rep}", file=stream)
            status = EXIT_ASSERT
    if cfg.experiment is not None:
        status = max(status, run_experiment(cfg, out=out, h=h, stream=stream))
    return status


def run_experiment(cfg, kind: str | None = None, out=None, h: float | None = None, stream=None) -> int:
    """Run the configured experiment; exit 2 if its trend assertion fails."""
    stream = stream or sys.stdout
    out = _out_dir(cfg, out)
    scn = cfgmod.to_scenario(cfg, h)
    plan = cfgmod.to_plan(cfg, scn)
    if kind is not None and plan.kind != kind:
        plan = replace(plan, kind=kind)
    if plan.kind == "gamma_probe":
        rule = plan.rule if cfg.experiment.rule != "depth_shift" else "domain_offset"
        rec = gamma_probe_experiment(replace(plan, rule=rule))
        lines = ["experiment: gamma_probe"]
        lines += [f"  n={n:<8g} h1_distance={d:.6e} center={c:.6e}"
                  for n, d, c in zip(plan.params, rec.distances, rec.center_values)]
        lines.append(f"  limit center value: {rec.limit_center_value:.6e}")
        lines.append(f"  strictly decreasing: {rec.strictly_decreasing}")
        ok = rec.strictly_decreasing
        with open(out / "gamma_probe.csv", "w") as fh:
            fh.write("param,h1_distance,center_value\n")
            for n, d, c in zip(plan.params, rec.distances, rec.center_values):
                fh.write(f"{n!r},{d!r},{c!r}\n")
    elif plan.kind == "nonsmooth":
        res = nonsmooth_lake_experiment(plan)
        res.table.to_csv(out / "nonsmooth.csv")
        lines = [res.table.summary()]
        lines += [f"  rung {n}: invariants {'pass' if r.passed else 'FAIL'}" for n, r in res.invariants.items()]
        ok = res.cauchy_decreasing and all(r.passed for r in res.invariants.values())
    else:
        table = lake_sequence_experiment(plan) if plan.kind == "lake_sequence" else viscosity_sweep(plan)
        table.to_csv(out / f"{plan.kind}.csv")
        lines = [table.summary()]
        ok = table.strictly_decreasing and table.halved if plan.kind == "lake_sequence" else table.strictly_decreasing
    lines.append(f"verdict: {'PASS' if ok else 'FAIL'}")
    text = "\n".join(lines) + "\n"
    (out / "summary.txt").write_text(text)
    stream.write(text)
    return EXIT_OK if ok else EXIT_ASSERT


def probe_state(cfg, state_path, out=None, h: float | None = None, seed: int = 0, stream=None) -> int:
    """Diagnostics of a dumped vorticity field without time stepping."""
    stream = stream or sys.stdout
    out = _out_dir(cfg, out)
    scn = cfgmod.to_scenario(cfg, h)
    omega, hd, _ = read_field(state_path)
    grid = build_grid(scn.geometry, scn.profile, hd, floor=scn.floor)
    basis = build_basis(grid)
    grid.check_cell(omega)
    rec = reconstruct_velocity(grid, basis, omega, scn.gamma)
    state = SimState(0.0, grid.depth * omega, omega, rec.psi, rec.U, rec.v, rec.alpha, np.asarray(scn.gamma))
    diag = conserved_quantities(state, grid, basis.cutoffs)
    write_csv(out / "probe.csv", [diag], grid.n_islands)
    lines = [f"mass={diag.mass!r} linf={diag.linf!r} energy_v={diag.energy_v!r}"]
    for row in cz_probe(grid, basis, omega, scn.gamma):
        lines.append(f"cz p={row.p:g} grad_norm={row.grad_norm:.6e} ratio={row.ratio:.6e}")
    rng = np.random.default_rng(seed)
    R = max(0.1 * grid.geometry.inradius, 4 * grid.h)
    X, Y = grid.cell_centers
    ratios = []
    for _ in range(10):
        k = rng.normal(size=(3, 2)) * 3
        f = sum(np.sin(a * X + b * Y + c) for (a, b), c in zip(k, rng.uniform(0, 6.3, 3)))
        f = np.where(grid.cell_distance > 2 * grid.h, f * grid.cell_distance, 0.0)
        f = np.where(grid.cell_mask, f, 0.0)
        ratios.append(hardy_ratio(grid, f, R).ratio)
    lines.append(f"hardy R={R:.4g} max_ratio={max(ratios):.6e}")
    text = "\n".join(lines) + "\n"
    (out / "probe.txt").write_text(text)
    stream.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lakeflow", description="2D lake equations: simulation and convergence studies")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("run", "simulate a scenario"),
        ("converge", "lake-sequence convergence experiment"),
        ("nonsmooth", "approximation ladder for a non-smooth lake"),
        ("viscosity", "vanishing-viscosity sweep"),
        ("gamma", "gamma-convergence probe of Dirichlet problems"),
        ("probe", "diagnostics of a dumped vorticity field"),
    ):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", required=True, help="scenario YAML file")
        sp.add_argument("--out", help="output directory (default: config 'output')")
        sp.add_argument("--grid-h", type=float, help="override the cell size")
        sp.add_argument("--seed", type=int, help="seed for random probe families")
        if name == "probe":
            sp.add_argument("--state", required=True, help="vorticity field dump")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = cfgmod.parse_config(args.config)
        seed = args.seed if args.seed is not None else cfg.seed
        if args.grid_h is not None and not args.grid_h > 0:
            raise ValueError("--grid-h must be positive")
        if args.command == "run":
            return run_scenario(cfg, args.out, args.grid_h)
        if args.command == "probe":
            return probe_state(cfg, args.state, args.out, args.grid_h, seed)
        return run_experiment(cfg, COMMAND_KINDS[args.command], args.out, args.grid_h)
    except cfgmod.ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_ERROR
    except InvariantViolation as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return EXIT_ASSERT
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
