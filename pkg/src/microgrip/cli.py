"""Command-line front end.

Every subcommand reads one config file, writes its results plus the echoed
resolved config (``config.yaml``) into the output directory, and exits with
0 on success, 2 for config errors, 3 for solver failures and 4 when a
verification check fails.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

import yaml

from . import io, studies, verification
from .config import (DEFAULT_OBJECT_DIAMETER, STUDY_KINDS, ConfigError, StudyConfig, default_config,
                     load_config)
from .design import DesignError
from .fem import SolverError
from .grip import estimate_grip
from .mesh import MeshError, generate_mesh, mesh_quality
from .physics import CoupledModel

EXIT_OK, EXIT_ERROR, EXIT_CONFIG, EXIT_SOLVER, EXIT_VERIFY = 0, 1, 2, 3, 4

COMMANDS = ("simulate", "sweep", "env-sweep", "grip", "optimize", "compare", "verify", "mesh-info", "dump-design")


class _Run:
    """Output directory plus console echo for one command."""

    def __init__(self, cfg: StudyConfig, quiet: bool):
        self.cfg, self.quiet = cfg, quiet
        self.dir = cfg.output["directory"]
        self.written = []

    def say(self, msg: str):
        if not self.quiet:
            print(msg)

    def path(self, name: str) -> str:
        return os.path.join(self.dir, name)

    def lines(self, name: str, rows) -> str:
        p = io.write_lines(self.path(name), rows)
        self.written.append(p)
        return p

    def csv(self, name: str, records) -> str:
        p = io.export_csv(records, self.path(name))
        self.written.append(p)
        return p

    def yaml(self, name: str, data) -> str:
        text = yaml.safe_dump(data, sort_keys=False, default_flow_style=False)
        return self.lines(name, text.rstrip("\n").split("\n"))

    def model(self) -> CoupledModel:
        cfg = self.cfg
        return CoupledModel(cfg.build_design(), cfg.env(), cfg.mesh_settings(), cfg.material_library())


def _summary(sol) -> list[str]:
    return [
        f"applied_voltage_V: {sol.applied_voltage:.10g}",
        f"convection_coefficient: {sol.environment.convection_coefficient:.10g}",
        f"tip_gap_um: {sol.tip_gap:.10g}",
        f"closure_um: {sol.closure:.10g}",
        f"max_temperature_K: {sol.max_temperature:.10g}",
        f"max_temperature_location: {sol.max_temperature_location}",
        f"tip_temperature_K: {sol.tip_temperature:.10g}",
        f"out_of_plane_max_um: {sol.out_of_plane_max:.10g}",
        f"joule_power_pW: {sol.joule_power_total:.10g}",
        f"total_current_pA: {sol.total_current:.10g}",
        f"power_balance_error: {sol.power_balance_error:.3e}",
        f"current_imbalance: {sol.current_imbalance:.3e}",
    ]


def cmd_simulate(run: _Run) -> int:
    st = run.cfg.study
    model = run.model()
    sol = model.run(st["voltage"])
    grip = None
    if st["object_diameter"] is not None:
        grip = estimate_grip(model, st["voltage"], st["object_diameter"], solution=sol)
    run.csv("simulate.csv", [studies._record(studies._design_id(model), sol, grip)])
    lines = _summary(sol)
    run.lines("summary.txt", lines)
    if "vtk" in run.cfg.output["formats"]:
        io.export_vtk(model.mesh, sol, run.path("solution.vtk"))
        run.written.append(run.path("solution.vtk"))
    for line in lines:
        run.say(line)
    return EXIT_OK


def cmd_sweep(run: _Run) -> int:
    st = run.cfg.study
    recs = studies.voltage_sweep(run.model(), st["voltages"], object_diameter=st["object_diameter"])
    run.csv("sweep.csv", recs)
    for r in recs:
        run.say(r.csv_row())
    return EXIT_OK


def cmd_env_sweep(run: _Run) -> int:
    cfg, st = run.cfg, run.cfg.study
    model = run.model()
    recs = studies.environment_sweep(model, st["voltages"], st["h_values"], cfg.environment["ambient_temperature"],
                                     object_diameter=st["object_diameter"], threads=cfg.threads)
    run.csv("env_sweep.csv", recs)
    table = studies.required_voltage_table(model, st["closure_targets"], st["h_values"],
                                           cfg.environment["ambient_temperature"], threads=cfg.threads)
    rows = studies.required_voltage_rows(table)
    run.lines("required_voltage.csv", rows)
    for row in rows:
        run.say(row)
    return EXIT_OK


def cmd_grip(run: _Run) -> int:
    st = run.cfg.study
    diameter = st["object_diameter"] if st["object_diameter"] is not None else DEFAULT_OBJECT_DIAMETER
    model = run.model()
    sol = model.run(st["voltage"])
    g = estimate_grip(model, st["voltage"], diameter, solution=sol)
    run.csv("grip.csv", [studies._record(studies._design_id(model), sol, g)])
    lines = [
        f"object_diameter_um: {g.object_diameter:.10g}",
        f"applied_voltage_V: {g.applied_voltage:.10g}",
        f"free_closure_um: {g.free_closure:.10g}",
        f"contact: {str(g.contact).lower()}",
        f"total_normal_force_uN: {g.total_normal_force:.10g}",
        f"mean_contact_pressure_MPa: {g.mean_contact_pressure:.10g}",
        f"max_contact_pressure_MPa: {g.max_contact_pressure:.10g}",
        f"contact_area_um2: {g.contact_area:.10g}",
        f"force_balance_error: {g.force_balance_error:.3e}",
    ]
    run.lines("grip_summary.txt", lines)
    for line in lines:
        run.say(line)
    return EXIT_OK


def _space(cfg: StudyConfig):
    opt = cfg.study["optimize"]
    common = dict(operating_voltage=opt["operating_voltage"], v_max=opt["v_max"],
                  required_closure=opt["required_closure"], environment=cfg.env())
    if opt["space"] == "models":
        return studies.model_space(**common), opt["method"], opt["budget"]
    if opt["space"] == "placement":
        space, _ = studies.placement_space(2, opt["placement_low"], opt["placement_high"], **common)
        return space, opt["method"], opt["budget"]
    space = studies.DesignSpace(variables={k: tuple(v) for k, v in opt["variables"].items()}, **common)
    return space, opt["method"], opt["budget"]


def cmd_optimize(run: _Run) -> int:
    cfg = run.cfg
    space, method, budget = _space(cfg)
    try:
        res = studies.optimize_design(space, method, budget, seed=cfg.seed, mesh_settings=cfg.mesh_settings(),
                                      materials=cfg.material_overrides(),
                                      precondition=cfg.study["optimize"]["precondition"])
    except studies.InfeasibleError as exc:
        run.lines("optimize_trace.csv", studies.OptimizationResult(None, math.nan, (), exc.trace).trace_rows())
        raise
    run.lines("optimize_trace.csv", res.trace_rows())
    best = res.trace[[e.point for e in res.trace].index(res.best_point)]
    lines = [f"best_design: {best.design_id}",
             "best_point: " + ";".join(format(x, ".10g") for x in res.best_point),
             f"best_objective_um: {res.best_objective:.10g}",
             f"evaluations: {len(res.trace)}"]
    run.lines("optimize_result.txt", lines)
    for line in lines:
        run.say(line)
    return EXIT_OK


def cmd_compare(run: _Run) -> int:
    cfg = run.cfg
    cmp = studies.compare_models(cfg.study["voltages"], cfg.env(), cfg.mesh_settings(), cfg.material_overrides(),
                                 threads=cfg.threads)
    run.csv("compare.csv", cmp.records())
    lines = [f"{k}: {str(v).lower()}" for k, v in cmp.verdicts.items()]
    run.lines("verdicts.txt", lines)
    for line in lines:
        run.say(line)
    return EXIT_OK


def cmd_verify(run: _Run) -> int:
    results = verification.run_suite(run.cfg.study["verify"]["include_slow"])
    rows = ["check,value,reference,tolerance,passed"]
    rows += [f"{r.name},{r.value:.10g},{r.reference:.10g},{r.tolerance:.3g},{int(r.passed)}" for r in results]
    run.lines("verify.csv", rows)
    for r in results:
        run.say(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_VERIFY


def cmd_mesh_info(run: _Run) -> int:
    cfg = run.cfg
    mesh = generate_mesh(cfg.build_design(), cfg.mesh["resolution"], cfg.mesh["order"])
    q = mesh_quality(mesh)
    lines = [f"design: {mesh.name}", f"order: {mesh.order}", f"nodes: {q.node_count}",
             f"elements: {q.element_count}", f"min_jacobian: {q.min_jacobian:.6g}",
             f"negative_jacobians: {q.negative_jacobians}"]
    lines += [f"area[{tag}]: {a:.10g}" for tag, a in q.facet_areas.items()]
    run.lines("mesh_info.txt", lines)
    if "vtk" in cfg.output["formats"]:
        io.export_vtk(mesh, None, run.path("mesh.vtk"))
        run.written.append(run.path("mesh.vtk"))
    for line in lines:
        run.say(line)
    return EXIT_OK


def cmd_dump_design(run: _Run) -> int:
    params = run.cfg.build_design().parameters()
    p = run.yaml("design.yaml", params)
    run.say(open(p).read().rstrip("\n"))
    return EXIT_OK


_HANDLERS = {
    "simulate": cmd_simulate, "sweep": cmd_sweep, "env-sweep": cmd_env_sweep, "grip": cmd_grip,
    "optimize": cmd_optimize, "compare": cmd_compare, "verify": cmd_verify, "mesh-info": cmd_mesh_info,
    "dump-design": cmd_dump_design,
}


def _global_flags(parser, suppress: bool):
    # subcommands repeat the flags with suppressed defaults so either position works
    d = dict(default=argparse.SUPPRESS) if suppress else {}
    parser.add_argument("--config", help="study config file (YAML); defaults apply when omitted", **d)
    parser.add_argument("--out", help="output directory (overrides output.directory)", **d)
    parser.add_argument("--threads", type=int, help="worker threads for sweeps", **d)
    parser.add_argument("--seed", type=int, help="seed for optimizer restarts", **d)
    parser.add_argument("--quiet", action="store_true", help="print nothing on success", **d)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)
    parser = argparse.ArgumentParser(prog="microgrip", description="Electro-thermal SU-8 microgripper simulations.")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "simulate": "one coupled run at study.voltage",
        "sweep": "voltage sweep over study.voltages",
        "env-sweep": "voltage x convection sweep and required-voltage table",
        "grip": "contact force and pressure on a cylindrical object",
        "optimize": "stack optimization for minimal out-of-plane motion",
        "compare": "model1 versus model2 over study.voltages",
        "verify": "FEM versus closed-form and convergence checks",
        "mesh-info": "mesh statistics for the configured design",
        "dump-design": "resolved design parameters",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def _resolve(args) -> StudyConfig:
    cfg = load_config(args.config) if args.config else default_config()
    changes = {}
    if args.command in STUDY_KINDS:
        # the subcommand decides what runs; the echo records it
        changes["study"] = {**cfg.study, "kind": args.command}
    if args.out is not None:
        changes["output"] = {**cfg.output, "directory": args.out}
    if args.threads is not None:
        changes["threads"] = args.threads
    if args.seed is not None:
        changes["seed"] = args.seed
    return cfg.with_changes(**changes)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _resolve(args)
    except (ConfigError, DesignError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    run = _Run(cfg, args.quiet)
    try:
        os.makedirs(run.dir, exist_ok=True)
        run.lines("config.yaml", cfg.dump().rstrip("\n").split("\n"))
        return _HANDLERS[args.command](run)
    except (DesignError, MeshError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, studies.StudyError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
