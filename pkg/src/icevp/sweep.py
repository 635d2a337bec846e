"""Nested parameter sweeps toward the singular limit.

The admissible schedule nests zeta (data mollification), eps (stress
regularization) and delta (viscosity) with 0 < delta < zeta^2 and
0 < eps < 1; the limit order is delta first (innermost per (zeta, eps)),
then eps, then zeta.  The paper proves convergence along subsequences with
non-constructive constants, so the harness measures Cauchy differences and
cross-parameter uniformity ratios instead; every threshold here is a harness
choice, not a paper value.
"""

from dataclasses import dataclass, field

import numpy as np

from .algebra import HiblerParams
from .errors import ScheduleError
from .forces import Forces
from .integrands import IntegrandSpec, RegularizedIntegrand, grad_F_eps
from .mesh import build_rect_mesh
from .operators import VectorField, hibler_def
from .solver import SolverConfig, mollified_initial, run_evolution, support_clearance


@dataclass
class ParamSchedule:
    """Triple ladders plus the mesh/timestep ladders.

    ``deltas[i]`` is the delta list for ``zetas[i]``; every entry must
    satisfy ``delta < zetas[i]^2``.
    """

    zetas: list
    deltas: list
    epsilons: list
    mesh_ladder: list = field(default_factory=lambda: [(16, 16)])
    taus: list = field(default_factory=lambda: [0.01])

    def triples(self):
        for i, z in enumerate(self.zetas):
            for e in self.epsilons:
                for d in self.deltas[i]:
                    yield (z, d, e)

    def to_dict(self):
        return {"zetas": list(map(float, self.zetas)),
                "deltas": [list(map(float, ds)) for ds in self.deltas],
                "epsilons": list(map(float, self.epsilons)),
                "mesh_ladder": [list(map(int, m)) for m in self.mesh_ladder],
                "taus": list(map(float, self.taus))}


def validate_schedule(s: ParamSchedule, d0=None):
    """Accept iff every admissibility constraint holds; raise naming the violator."""
    if len(s.zetas) == 0 or len(s.epsilons) == 0:
        raise ScheduleError("schedule must contain at least one zeta and one eps")
    if len(s.deltas) != len(s.zetas):
        raise ScheduleError("need one delta list per zeta")
    if any(z2 >= z1 for z1, z2 in zip(s.zetas, s.zetas[1:])):
        raise ScheduleError("zetas must be strictly decreasing")
    if any(z <= 0.0 for z in s.zetas):
        raise ScheduleError("zetas must be positive")
    if d0 is not None:
        for z in s.zetas:
            if not z < d0:
                raise ScheduleError(f"zeta={z} must be < support clearance d0={d0}",
                                    triple=(z, None, None))
    for z, ds in zip(s.zetas, s.deltas):
        if len(ds) == 0:
            raise ScheduleError(f"empty delta list for zeta={z}")
        if any(d2 >= d1 for d1, d2 in zip(ds, ds[1:])):
            raise ScheduleError(f"deltas for zeta={z} must be strictly decreasing")
        for d in ds:
            if not (0.0 < d < z * z):
                raise ScheduleError(
                    f"delta={d} violates 0 < delta < zeta^2 for zeta={z}",
                    triple=(z, d, None))
    if any(e2 >= e1 for e1, e2 in zip(s.epsilons, s.epsilons[1:])):
        raise ScheduleError("epsilons must be strictly decreasing")
    for e in s.epsilons:
        if not (0.0 < e < 1.0):
            raise ScheduleError(f"eps={e} violates 0 < eps < 1", triple=(None, None, e))
    if any(t <= 0.0 for t in s.taus):
        raise ScheduleError("timesteps must be positive")
    if any(t2 >= t1 for t1, t2 in zip(s.taus, s.taus[1:])):
        raise ScheduleError("timestep ladder must be strictly decreasing")
    return True


@dataclass
class SweepProblem:
    """Everything needed to instantiate one run of the sweep on a given mesh."""

    integrand: IntegrandSpec
    params: HiblerParams
    domain: tuple            # (Lx, Ly)
    u0_fn: object            # mesh -> VectorField (pre-mollification datum)
    forces_fn: object        # mesh -> Forces
    t_end: float
    newton_tol: float = 1e-11
    newton_max_iters: int = 120


@dataclass
class SweepReport:
    schedule: dict
    uniformity: list
    cauchy: list
    saturation: list
    localization: list
    tau_cauchy: list
    verdict: dict = field(default_factory=dict)

    def tables(self):
        return {"uniformity": self.uniformity, "cauchy": self.cauchy,
                "saturation": self.saturation, "localization": self.localization,
                "tau_cauchy": self.tau_cauchy}


def _stress_saturation(traj, reg, params):
    """Run-max of the feasibility-normalized stress |grad F_eps| * 2/P."""
    peak = 0.0
    for n in range(1, len(traj.times)):
        tu = hibler_def(traj.state(n), params)
        g = grad_F_eps(reg, tu.comps)
        from .algebra import fro_norm
        m = float(np.max(fro_norm(g))) if len(g) else 0.0
        peak = max(peak, 2.0 / reg.base.P * m)
    return peak


def _l2_omega_t_diff(a, b, tau):
    """L2(Omega_T) distance of two trajectories on the same grid."""
    from . import operators as ops

    total = 0.0
    for n in range(1, len(a.times)):
        d = VectorField(a.mesh, a.states[n] - b.states[n])
        total += tau * ops.l2_inner(d, d)
    return float(np.sqrt(max(total, 0.0)))


def run_sweep(s: ParamSchedule, problem: SweepProblem):
    """Run every admissible triple and assemble the uniformity/Cauchy report."""
    validate_schedule(s)
    nx, ny = s.mesh_ladder[0]
    mesh = build_rect_mesh(nx, ny, *problem.domain)
    u0_raw = problem.u0_fn(mesh)
    d0 = support_clearance(u0_raw)
    validate_schedule(s, d0=d0)
    forces = problem.forces_fn(mesh)
    tau = s.taus[0]
    cfg = SolverConfig(tau=tau, t_end=problem.t_end, newton_tol=problem.newton_tol,
                       newton_max_iters=problem.newton_max_iters)

    runs = {}
    uniformity = []
    for i, zeta in enumerate(s.zetas):
        u0z, _ = mollified_initial(u0_raw, zeta)
        for eps in s.epsilons:
            for delta in s.deltas[i]:
                reg = RegularizedIntegrand(problem.integrand, eps=eps, delta=delta)
                traj = run_evolution(u0z, reg, forces, cfg, problem.params)
                runs[(zeta, delta, eps)] = traj
                mon = traj.monitors()
                uniformity.append({
                    "zeta": zeta, "delta": delta, "eps": eps,
                    "sup_l2": mon["sup_l2"], "tv_l1": mon["tv_l1"],
                    "sqrt_delta_h1": float(np.sqrt(mon["h1_delta"])),
                    "dual_sq": mon["dual_sq"], "dt_l2_sq": mon["dt_l2_sq"],
                    "stress_max": _stress_saturation(traj, reg, problem.params),
                })

    cauchy = []
    # delta direction, innermost
    for i, zeta in enumerate(s.zetas):
        for eps in s.epsilons:
            ds = s.deltas[i]
            for d1, d2 in zip(ds, ds[1:]):
                val = _l2_omega_t_diff(runs[(zeta, d1, eps)], runs[(zeta, d2, eps)], tau)
                cauchy.append({"kind": "delta", "zeta": zeta, "eps": eps,
                               "from": d1, "to": d2, "l2_diff": val})
    # eps direction at the smallest delta of each zeta
    for i, zeta in enumerate(s.zetas):
        d_last = s.deltas[i][-1]
        for e1, e2 in zip(s.epsilons, s.epsilons[1:]):
            val = _l2_omega_t_diff(runs[(zeta, d_last, e1)], runs[(zeta, d_last, e2)], tau)
            cauchy.append({"kind": "eps", "zeta": zeta, "delta": d_last,
                           "from": e1, "to": e2, "l2_diff": val})
    # zeta direction at the final (eps, per-zeta smallest delta)
    e_last = s.epsilons[-1]
    for (z1, ds1), (z2, ds2) in zip(zip(s.zetas, s.deltas), list(zip(s.zetas, s.deltas))[1:]):
        val = _l2_omega_t_diff(runs[(z1, ds1[-1], e_last)], runs[(z2, ds2[-1], e_last)], tau)
        cauchy.append({"kind": "zeta", "eps": e_last, "from": z1, "to": z2,
                       "l2_diff": val})

    saturation = []
    zeta0 = s.zetas[0]
    d_ref = s.deltas[0][-1]
    for eps in s.epsilons:
        row = next(r for r in uniformity
                   if r["zeta"] == zeta0 and r["delta"] == d_ref and r["eps"] == eps)
        saturation.append({"eps": eps, "stress_max": row["stress_max"]})

    localization = []
    z_last, e_fin = s.zetas[-1], s.epsilons[-1]
    d_fin = s.deltas[-1][-1]
    for level, (mx, my) in enumerate(s.mesh_ladder):
        m = mesh if (mx, my) == tuple(s.mesh_ladder[0]) else build_rect_mesh(
            mx, my, *problem.domain)
        u0m = problem.u0_fn(m)
        u0mz, _ = mollified_initial(u0m, z_last)
        reg = RegularizedIntegrand(problem.integrand, eps=e_fin, delta=d_fin)
        traj = (runs.get((z_last, d_fin, e_fin)) if m is mesh
                else run_evolution(u0mz, reg, problem.forces_fn(m), cfg, problem.params))
        tu = hibler_def(traj.state(traj.n_steps), problem.params)
        mass = m.areas * tu.norms()
        total = float(np.sum(mass))
        k = max(1, int(np.ceil(0.05 * len(mass))))
        top = float(np.sum(np.sort(mass)[-k:]))
        localization.append({"level": level, "nx": mx, "ny": my, "h": m.h_max,
                             "top5_mass_fraction": top / total if total > 0 else 0.0})

    tau_cauchy = []
    if len(s.taus) > 1:
        reg = RegularizedIntegrand(problem.integrand, eps=s.epsilons[0],
                                   delta=s.deltas[0][0])
        u0z, _ = mollified_initial(u0_raw, zeta0)
        prev = None
        for t_step in s.taus:
            cfg_t = SolverConfig(tau=t_step, t_end=problem.t_end,
                                 newton_tol=problem.newton_tol,
                                 newton_max_iters=problem.newton_max_iters)
            tr = run_evolution(u0z, reg, forces, cfg_t, problem.params)
            if prev is not None:
                stride = int(round(prev[0] / t_step))
                from . import operators as ops
                total = 0.0
                for n in range(1, prev[1].n_steps + 1):
                    d = VectorField(mesh, prev[1].states[n] - tr.states[n * stride])
                    total += prev[0] * ops.l2_inner(d, d)
                tau_cauchy.append({"from": prev[0], "to": t_step,
                                   "l2_diff": float(np.sqrt(max(total, 0.0)))})
            prev = (t_step, tr)

    report = SweepReport(schedule=s.to_dict(), uniformity=uniformity, cauchy=cauchy,
                         saturation=saturation, localization=localization,
                         tau_cauchy=tau_cauchy)
    report.verdict = boundedness_verdict(report)
    return report


RATIO_THRESHOLD = 3.0
UNIFORM_MONITORS = ("sup_l2", "tv_l1", "dual_sq", "dt_l2_sq")


def boundedness_verdict(report: SweepReport):
    """Pass iff every uniform monitor has max/min ratio <= 3 across triples
    and the sqrt(delta)-scaled H1 monitor stays bounded relative to the
    reference triple (largest delta, first zeta/eps)."""
    rows = report.uniformity
    if not rows:
        return {"pass": False, "reason": "empty report"}
    out = {"ratios": {}, "pass": True}
    for key in UNIFORM_MONITORS:
        vals = np.array([r[key] for r in rows])
        scale = float(np.max(vals))
        if scale <= 1e-14:
            out["ratios"][key] = 1.0  # vacuous: nothing moved
            continue
        ratio = float(scale / max(np.min(vals), 1e-300))
        out["ratios"][key] = ratio
        if ratio > RATIO_THRESHOLD:
            out["pass"] = False
            out.setdefault("failures", []).append(key)
    sd = np.array([r["sqrt_delta_h1"] for r in rows])
    ref = float(sd[0])
    out["sqrt_delta_h1_max"] = float(np.max(sd))
    out["sqrt_delta_h1_ref"] = ref
    bounded = float(np.max(sd)) <= RATIO_THRESHOLD * ref + 1e-12
    out["sqrt_delta_bounded"] = bounded
    if not bounded:
        out["pass"] = False
        out.setdefault("failures", []).append("sqrt_delta_h1")
    return out
