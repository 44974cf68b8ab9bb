"""Command-line entry point: ``torus-holonomy <command> --scenario FILE``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import checks
from .classical import canonical_to_original, integrate_flow, original_frame_flow
from .errors import FlowFault, InputError, IntegrationError, LeakageError
from .evolution import (
    GeneratorAssembly,
    berry_multiplier,
    closed_form_evolve,
    grid_l2,
    propagate,
    propagator,
)
from .geometry import angle_difference, path_displacement
from .io import propagation_header, trajectory_header, write_csv, write_json
from .qtorus import grid_points, to_grid
from .scenario import Scenario, bundled_scenario_paths, load_scenario

COMMANDS = ("classical", "quantum", "closed-form", "compare", "berry", "checks")

# module-qualified prefixes for surfaced errors
_ERROR_SOURCES = (
    (LeakageError, "quantum-evolution"),
    (FlowFault, "classical-dynamics"),
    (IntegrationError, "classical-dynamics"),
    (InputError, "input"),
)


def _report(out: Path, command: str, scenario: str, results) -> dict:
    payload = {"command": command, "scenario": scenario, **checks.summarize(results)}
    write_json(out / "report.json", payload)
    return payload


def cmd_classical(sc: Scenario, out: Path) -> int:
    s0 = sc.classical_state()
    traj = integrate_flow(sc.connection, sc.path, s0, sc.end_time, sc.dt)
    write_csv(out / "trajectory.csv", trajectory_header(sc.m), traj.rows())
    orig = original_frame_flow(sc.connection, sc.path, sc.hamiltonian, s0, sc.end_time, sc.dt)
    write_csv(out / "trajectory_original.csv", trajectory_header(sc.m), orig.rows())
    composed = canonical_to_original(sc.hamiltonian, traj.final)
    err = max(np.max(np.abs(orig.final.I - composed.I)),
              np.max(np.abs(angle_difference(orig.final.phi, composed.phi))))
    _report(out, "classical", sc.name, [checks._le("frame_equivalence", err, 1e-6)])
    return 0


def cmd_quantum(sc: Scenario, out: Path) -> int:
    x0 = sc.spectral_state()
    res = propagate(GeneratorAssembly(sc.connection, sc.path, sc.lattice, sc.lam),
                    x0, sc.end_time, sc.dt, sc.method)
    write_csv(out / "propagation_log.csv", propagation_header(sc.m), res.log)
    write_json(out / "final_state.json", res.state.to_dict())
    if sc.initial_classical is not None:
        # quantum mean actions next to the classical action transport; no equality implied
        traj = integrate_flow(sc.connection, sc.path, sc.classical_state(), sc.end_time, sc.dt)
        header = (["t"] + [f"mean_I_{k + 1}" for k in range(sc.m)]
                  + [f"I_{k + 1}" for k in range(sc.m)])
        write_csv(out / "action_comparison.csv", header,
                  np.column_stack([traj.t, res.log[:, 3:], traj.I]))
    drift_tol = 1e-10 if sc.method == "expmid" else 1e-6
    _report(out, "quantum", sc.name, [checks._le("norm_drift", res.norm_drift, drift_tol),
                                      checks._le("max_leakage", res.max_leakage, 1e-6)])
    return 0


def _closed_form_grid(sc: Scenario) -> np.ndarray:
    x0 = sc.spectral_state()
    return closed_form_evolve(sc.connection, sc.path, sc.lam, to_grid(x0, sc.grid),
                              sc.end_time, sc.dt, sc.grid)


def cmd_closed_form(sc: Scenario, out: Path) -> int:
    values = _closed_form_grid(sc).ravel()
    nodes = grid_points(sc.grid, sc.m)
    header = [f"phi_{k + 1}" for k in range(sc.m)] + ["re", "im"]
    write_csv(out / "closed_form.csv", header,
              np.column_stack([nodes, values.real, values.imag]))
    return 0


def cmd_compare(sc: Scenario, out: Path) -> int:
    x0 = sc.spectral_state()
    res = propagate(GeneratorAssembly(sc.connection, sc.path, sc.lattice, sc.lam),
                    x0, sc.end_time, sc.dt, sc.method)
    err = grid_l2(to_grid(res.state, sc.grid), _closed_form_grid(sc), sc.lam)
    payload = _report(out, "compare", sc.name, [checks._le("closed_form_l2", err, 1e-4)])
    print(f"L2 error propagate({sc.method}) vs closed form: {err:.3e}")
    return 0 if payload["passed"] else 1


def cmd_berry(sc: Scenario, out: Path) -> int:
    L = sc.connection.constant_matrix()
    dxi = path_displacement(sc.path, sc.end_time)
    phases = np.diag(berry_multiplier(L, dxi, sc.lattice, sc.lam).entries)
    U = propagator(GeneratorAssembly(sc.connection, sc.path, sc.lattice, sc.lam),
                   sc.end_time, sc.dt, sc.method).entries
    header = ([f"n_{k + 1}" for k in range(sc.m)]
              + ["re", "im", "phase", "propagated_re", "propagated_im"])
    prop = np.diag(U)
    write_csv(out / "berry.csv", header,
              np.column_stack([sc.lattice.modes, phases.real, phases.imag, np.angle(phases),
                               prop.real, prop.imag]))
    err = float(np.max(np.abs(U - np.diag(phases))))
    payload = _report(out, "berry", sc.name, [checks._le("berry_phase_exactness", err, 1e-8)])
    return 0 if payload["passed"] else 1


def cmd_checks(scenarios: list[Scenario], out: Path) -> int:
    """Acceptance criteria on the bundled set, then health checks per scenario."""
    results = []
    by_name = {sc.name: sc for sc in scenarios}
    for label, group in checks.acceptance_suite().items():
        print(f"-- criterion {label}")
        for r in group:
            print("  " + r.line())
        results += group
    for name in sorted(by_name):
        print(f"-- scenario {name}")
        group = checks.scenario_checks(by_name[name])
        for r in group:
            print("  " + r.line())
        results += group
    payload = checks.summarize(results)
    write_json(out / "report.json", {"command": "checks", "scenario": sorted(by_name),
                                     **payload})
    ok = all(r.passed for r in results)
    print("checks:", "all passed" if ok else "FAILURES")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="torus-holonomy",
        description="Classical and quantum holonomy operators on invariant tori.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--scenario", type=Path,
                   help="scenario JSON file (checks defaults to the bundled set)")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--dt", type=float, help="override the time step")
    p.add_argument("--cutoff", type=lambda s: [int(v) for v in s.split(",")],
                   help="override the per-axis mode cutoff, e.g. 24 or 8,8")
    p.add_argument("--method", choices=("rk4", "expmid"), help="quantum stepper")
    p.add_argument("--grid", type=int, help="grid points per axis")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "checks" and args.scenario is None:
            scenarios = [load_scenario(p) for p in bundled_scenario_paths()]
        elif args.scenario is None:
            raise InputError(f"command {args.command!r} needs --scenario")
        else:
            scenarios = [load_scenario(args.scenario)]
        scenarios = [sc.with_overrides(args.dt, args.cutoff, args.method, args.grid)
                     for sc in scenarios]
        out = args.out or Path(scenarios[0].outputs or f"out/{scenarios[0].name}")
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "checks":
            return cmd_checks(scenarios, out)
        handler = {
            "classical": cmd_classical,
            "quantum": cmd_quantum,
            "closed-form": cmd_closed_form,
            "compare": cmd_compare,
            "berry": cmd_berry,
        }[args.command]
        return handler(scenarios[0], out)
    except Exception as exc:
        for cls, source in _ERROR_SOURCES:
            if isinstance(exc, cls):
                print(f"torus-holonomy: {source} error: {exc}", file=sys.stderr)
                return 2
        raise


if __name__ == "__main__":
    sys.exit(main())
