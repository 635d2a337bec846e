"""Command-line surface: run, sweep, diagnose, boundary-experiment, validate-config.

Exit codes: 0 success, 2 configuration error, 3 solver error, 4 I/O error.
Failures leave a machine-readable ``error.json`` in the output directory (or
on stderr when no directory is available).  Heavy numerical imports happen
after ``--threads`` / ``ICEVP_THREADS`` is folded into the BLAS environment.
"""

import argparse
import json
import os
import sys

EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_IO = 4


def _pin_threads(argv):
    n = os.environ.get("ICEVP_THREADS")
    if "--threads" in argv:
        n = argv[argv.index("--threads") + 1]
    if n:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, str(n))


def build_parser():
    p = argparse.ArgumentParser(prog="icevp",
                                description="viscous-plastic sea-ice solver harness")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True)
        sp.add_argument("--out", default="out")
        sp.add_argument("--threads", type=int, default=None)
        sp.add_argument("--seed", type=int, default=None)

    run = sub.add_parser("run", help="advance one regularized evolution")
    common(run)
    run.add_argument("--resume", action="store_true")

    swp = sub.add_parser("sweep", help="run the singular-limit parameter sweep")
    common(swp)

    diag = sub.add_parser("diagnose", help="diagnostics over a finished run")
    diag.add_argument("run_dir")
    diag.add_argument("--spec", default="evi-self", choices=["evi-self", "stress"])

    bdry = sub.add_parser("boundary-experiment",
                          help="bulk approximation of the boundary penalization")
    common(bdry)

    val = sub.add_parser("validate-config", help="parse and validate a config file")
    val.add_argument("--config", required=True)
    return p


def _error_record(out_dir, code, kind, message):
    record = {"exit_code": code, "kind": kind, "message": str(message)}
    try:
        if out_dir and os.path.isdir(out_dir):
            with open(os.path.join(out_dir, "error.json"), "w") as fh:
                json.dump(record, fh, indent=2)
                fh.write("\n")
    except OSError:
        pass
    print(json.dumps(record), file=sys.stderr)


def _run_dir_for(cfg, out_root):
    d = os.path.join(out_root, cfg.hash()[:12])
    os.makedirs(d, exist_ok=True)
    return d


def cmd_validate(args):
    from .runio import RunConfig

    cfg = RunConfig.from_file(args.config)
    cfg.build_mesh()
    cfg.hibler_params()
    cfg.regularized()
    cfg.solver()
    if cfg.parser.has_section("sweep"):
        _schedule_from(cfg)
    print(f"ok {cfg.hash()}")
    return 0


def _schedule_from(cfg):
    from .sweep import ParamSchedule, validate_schedule

    get = cfg.parser.get
    zetas = [float(v) for v in get("sweep", "zetas").split()]
    deltas = []
    for i in range(len(zetas)):
        deltas.append([float(v) for v in get("sweep", f"deltas_{i}").split()])
    epsilons = [float(v) for v in get("sweep", "epsilons").split()]
    meshes = [tuple(int(x) for x in m.split("x"))
              for m in get("sweep", "meshes", fallback="16x16").split()]
    taus = [float(v) for v in get("sweep", "taus", fallback="0.01").split()]
    s = ParamSchedule(zetas=zetas, deltas=deltas, epsilons=epsilons,
                      mesh_ladder=meshes, taus=taus)
    validate_schedule(s)
    return s


def cmd_run(args):
    from .pairing import stress_recovery
    from .runio import (RunConfig, RunLock, load_checkpoint, save_checkpoint,
                        write_csv, write_deformation_table, write_manifest,
                        write_stress_table, write_velocity_table)
    from .solver import mollified_initial, run_evolution

    cfg = RunConfig.from_file(args.config)
    out_dir = _run_dir_for(cfg, args.out)
    mesh = cfg.build_mesh()
    params = cfg.hibler_params()
    reg = cfg.regularized()
    solver_cfg = cfg.solver()
    forces = cfg.forces(mesh)
    u0 = cfg.initial_field(mesh)
    if cfg.zeta() > 0.0:
        u0, _ = mollified_initial(u0, cfg.zeta())

    resume = None
    ck_path = os.path.join(out_dir, "checkpoint.npz")
    if args.resume and os.path.exists(ck_path):
        states, diag, ck_hash = load_checkpoint(ck_path)
        if ck_hash != cfg.hash():
            raise ValueError("checkpoint belongs to a different config")
        resume = (states, diag)

    with RunLock(out_dir):
        traj = run_evolution(u0, reg, forces, solver_cfg, params,
                             resume_states=resume)
        save_checkpoint(ck_path, traj, cfg.hash())

        rows = []
        d = traj.diagnostics
        for n in range(traj.n_steps):
            rows.append({"step": n + 1, "t": float(traj.times[n + 1]),
                         "energy": float(d["energy"][n]),
                         "increment": float(d["increment"][n]),
                         "newton_iters": int(d["newton_iters"][n]),
                         "tv": float(d["tv"][n]),
                         "h1_sq": float(d["h1_sq"][n]),
                         "dual_rate_sq": float(d["dual_rate_sq"][n]),
                         "l2_rate_sq": float(d["l2_rate_sq"][n])})
        write_csv(os.path.join(out_dir, "trajectory.csv"),
                  ["step", "t", "energy", "increment", "newton_iters", "tv",
                   "h1_sq", "dual_rate_sq", "l2_rate_sq"], rows)

        every = cfg.snapshot_every()
        snaps = set([traj.n_steps])
        if every > 0:
            snaps.update(range(0, traj.n_steps + 1, every))
        from .operators import VectorField
        for n in sorted(snaps):
            tag = f"{n:06d}"
            u = VectorField(mesh, traj.states[n])
            write_velocity_table(u, os.path.join(out_dir, f"snap_{tag}_velocity.txt"))
            write_deformation_table(u, params,
                                    os.path.join(out_dir, f"snap_{tag}_deformation.txt"))
            sf = stress_recovery(u, reg, params)
            write_stress_table(sf.comps, 0.5 * reg.base.P,
                               os.path.join(out_dir, f"snap_{tag}_stress.txt"))
        from .mesh import export_mesh
        export_mesh(mesh, os.path.join(out_dir, "mesh.txt"))
        write_manifest(out_dir, cfg.hash(), extra={
            "kind": "run", "params": {"e": params.e, "P": params.P},
            "integrand": {**reg.base.to_dict(), "eps": reg.eps, "delta": reg.delta},
            "tau": solver_cfg.tau, "t_end": solver_cfg.t_end,
            "seed": cfg.seed() if args.seed is None else args.seed})
    print(out_dir)
    return 0


def cmd_sweep(args):
    from .runio import RunConfig, RunLock, write_csv, write_manifest
    from .sweep import SweepProblem, run_sweep

    cfg = RunConfig.from_file(args.config)
    out_dir = _run_dir_for(cfg, args.out)
    schedule = _schedule_from(cfg)
    params = cfg.hibler_params()
    lx = float(cfg.parser.get("domain", "lx", fallback="1.0"))
    ly = float(cfg.parser.get("domain", "ly", fallback="1.0"))
    problem = SweepProblem(
        integrand=cfg.integrand(), params=params, domain=(lx, ly),
        u0_fn=lambda mesh: cfg.initial_field(mesh),
        forces_fn=lambda mesh: cfg.forces(mesh),
        t_end=cfg.solver().t_end, newton_tol=cfg.solver().newton_tol,
        newton_max_iters=cfg.solver().newton_max_iters)

    with RunLock(out_dir):
        report = run_sweep(schedule, problem)
        write_csv(os.path.join(out_dir, "uniformity.csv"),
                  ["zeta", "delta", "eps", "sup_l2", "tv_l1", "sqrt_delta_h1",
                   "dual_sq", "dt_l2_sq", "stress_max"], report.uniformity)
        write_csv(os.path.join(out_dir, "cauchy.csv"),
                  ["kind", "zeta", "delta", "eps", "from", "to", "l2_diff"],
                  report.cauchy)
        write_csv(os.path.join(out_dir, "saturation.csv"),
                  ["eps", "stress_max"], report.saturation)
        write_csv(os.path.join(out_dir, "localization.csv"),
                  ["level", "nx", "ny", "h", "top5_mass_fraction"],
                  report.localization)
        if report.tau_cauchy:
            write_csv(os.path.join(out_dir, "tau_cauchy.csv"),
                      ["from", "to", "l2_diff"], report.tau_cauchy)
        write_manifest(out_dir, cfg.hash(), extra={
            "kind": "sweep", "schedule": report.schedule,
            "verdict": report.verdict})
    print(out_dir)
    return 0


def cmd_diagnose(args):
    import numpy as np

    from .diagnostics import TestTrajectory, evi_residual
    from .runio import (load_checkpoint, verify_manifest, write_csv)

    manifest = verify_manifest(args.run_dir)
    states, diag, _ = load_checkpoint(os.path.join(args.run_dir, "checkpoint.npz"))
    from .algebra import HiblerParams
    from .forces import Forces
    from .integrands import IntegrandSpec, RegularizedIntegrand
    from .mesh import build_rect_mesh
    from .solver import Trajectory

    # rebuild enough context from the manifest to evaluate the diagnostics
    params = HiblerParams(**manifest["params"])
    ig = manifest["integrand"]
    reg = RegularizedIntegrand(IntegrandSpec.from_dict(ig), eps=ig["eps"],
                               delta=ig["delta"])
    with open(os.path.join(args.run_dir, "mesh.txt")) as fh:
        n_nodes = int(fh.readline().split()[1])
        nodes = np.array([[float(v) for v in fh.readline().split()[1:3]]
                          for _ in range(n_nodes)])
        n_tris = int(fh.readline().split()[1])
        tris = np.array([[int(v) for v in fh.readline().split()[1:4]]
                         for _ in range(n_tris)])
    from .mesh import Mesh2D
    mesh = Mesh2D(nodes, tris)
    times = np.linspace(0.0, manifest["t_end"], len(states))
    traj = Trajectory(mesh, times, states, {k: np.asarray(v)
                                            for k, v in diag.items()})

    if args.spec == "evi-self":
        v = TestTrajectory.from_trajectory(traj)
        rows = []
        for s in times[1:]:
            res, tol = evi_residual(traj, v, s, reg, Forces(), params)
            rows.append({"s": float(s), "residual": res, "tol": tol})
        write_csv(os.path.join(args.run_dir, "evi_self.csv"),
                  ["s", "residual", "tol"], rows)
    else:
        from .operators import VectorField
        from .pairing import stress_recovery
        rows = []
        for n in range(1, len(states)):
            sf = stress_recovery(VectorField(mesh, states[n]), reg, params)
            rows.append({"t": float(times[n]), "stress_max": sf.feasibility_norm})
        write_csv(os.path.join(args.run_dir, "stress_feasibility.csv"),
                  ["t", "stress_max"], rows)
    print(args.run_dir)
    return 0


def cmd_boundary(args):
    import numpy as np

    from .diagnostics import boundary_bulk_experiment
    from .operators import VectorField
    from .runio import RunConfig, RunLock, write_csv, write_manifest

    cfg = RunConfig.from_file(args.config)
    out_dir = _run_dir_for(cfg, args.out)
    params = cfg.hibler_params()
    spec = cfg.integrand()
    get = cfg.parser.get
    deltas = [float(v) for v in get("boundary_experiment", "deltas").split()]
    meshes = [tuple(int(x) for x in m.split("x"))
              for m in get("boundary_experiment", "meshes").split()]
    field = get("boundary_experiment", "field", fallback="constant 1.0 0.0").split()
    lx = float(get("domain", "lx", fallback="1.0"))
    ly = float(get("domain", "ly", fallback="1.0"))

    from .mesh import build_rect_mesh
    fields = []
    for (nx, ny) in meshes:
        mesh = build_rect_mesh(nx, ny, lx, ly)
        if field[0] == "constant":
            vals = np.tile([float(field[1]), float(field[2])], (mesh.n_nodes, 1))
        elif field[0] == "affine":
            vals = np.stack([mesh.nodes[:, 0], np.zeros(mesh.n_nodes)], axis=-1)
        else:
            raise ValueError(f"unknown field kind {field[0]!r}")
        fields.append(VectorField(mesh, vals))
    with RunLock(out_dir):
        rows = boundary_bulk_experiment(fields, spec, params, deltas)
        write_csv(os.path.join(out_dir, "boundary_gap.csv"),
                  ["delta", "measured", "target", "gap", "tv_cutoff"], rows)
        write_manifest(out_dir, cfg.hash(), extra={"kind": "boundary-experiment"})
    print(out_dir)
    return 0


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    _pin_threads(argv)
    args = build_parser().parse_args(argv)
    out_dir = getattr(args, "out", None)

    from .errors import (ConfigurationError, ForcingParseError, IceVPError,
                         NonConvergenceError, ScheduleError)
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "sweep":
            return cmd_sweep(args)
        if args.command == "diagnose":
            return cmd_diagnose(args)
        if args.command == "boundary-experiment":
            return cmd_boundary(args)
        if args.command == "validate-config":
            return cmd_validate(args)
        raise ValueError(f"unknown command {args.command}")
    except (ConfigurationError, ScheduleError, ValueError) as exc:
        _error_record(out_dir, EXIT_CONFIG, type(exc).__name__, exc)
        return EXIT_CONFIG
    except NonConvergenceError as exc:
        _error_record(out_dir, EXIT_SOLVER, type(exc).__name__, exc)
        return EXIT_SOLVER
    except (OSError, ForcingParseError) as exc:
        _error_record(out_dir, EXIT_IO, type(exc).__name__, exc)
        return EXIT_IO
    except IceVPError as exc:
        _error_record(out_dir, EXIT_SOLVER, type(exc).__name__, exc)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
