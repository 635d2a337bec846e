"""Evolutionary variational inequality residuals and companion experiments.

Discrete time integrals follow the solver's convention: state-dependent
terms are evaluated at each step's right endpoint with weight tau, force and
drag terms are frozen at the left endpoint, and time derivatives of test
trajectories are backward difference quotients.  With those conventions the
per-run inequality for the regularized energy is an exact algebraic
consequence of the minimizing-movement steps.
"""

from dataclasses import dataclass

import numpy as np

from . import operators as ops
from .algebra import HiblerParams, fro_norm, tensor_product_T
from .errors import AdmissibilityError, GeometryError, MeshMismatchError, MeshResolutionError
from .forces import Forces
from .integrands import (IntegrandSpec, RegularizedIntegrand, eval_F,
                         grad_F, grad_F_delta_eps, recession)
from .mesh import Mesh2D, eta_delta, mollify_nodal_field
from .operators import VectorField, scale_by_cutoff
from .solver import Trajectory


@dataclass
class TestTrajectory:
    """Competitor trajectory: states plus time-derivative states.

    States may carry nonzero boundary values; ``dstates`` are the backward
    difference quotients of a C^1-in-time construction (or exact derivatives
    when known analytically).
    """

    mesh: Mesh2D
    times: np.ndarray
    states: list
    dstates: list

    def __post_init__(self):
        if not (len(self.states) == len(self.times) == len(self.dstates)):
            raise MeshMismatchError("inconsistent test-trajectory lengths")

    @classmethod
    def from_trajectory(cls, traj: Trajectory):
        ds = [np.zeros_like(traj.states[0])]
        for n in range(1, len(traj.times)):
            tau = traj.times[n] - traj.times[n - 1]
            ds.append((traj.states[n] - traj.states[n - 1]) / tau)
        return cls(traj.mesh, traj.times, [s.copy() for s in traj.states], ds)

    @classmethod
    def constant(cls, mesh, times, values):
        n = len(times)
        return cls(mesh, np.asarray(times, float), [values.copy() for _ in range(n)],
                   [np.zeros_like(values) for _ in range(n)])


def _energy_at(v_vals, mesh, spec, params, energy):
    u = VectorField(mesh, v_vals)
    if energy == "regularized":
        return ops.bulk_energy(u, spec, params)
    return ops.relaxed_energy(u, spec, params)


def evi_residual(u: Trajectory, v: TestTrajectory, s, spec, forces: Forces,
                 params: HiblerParams = HiblerParams(), energy="regularized"):
    """Residual of the evolutionary variational inequality up to time ``s``.

    residual = sum tau [ <dv, v-u> + E(v) - E(u) - <f, v-u> - <drag(u), v-u> ]
               - 1/2 (||u-v||^2(s) - ||u0-v(0)||^2)

    With ``energy="regularized"`` (the F_{delta,eps} bulk energy) and a
    zero-trace competitor the contract is residual >= -10*newton_tol; with
    ``energy="relaxed"`` the boundary-penalized energy of the base density is
    used and the returned tolerance estimate scales like tau + h + sqrt(eps)
    + delta.  Returns ``(residual, tol_estimate)``.
    """
    if v.mesh is not u.mesh:
        raise MeshMismatchError("trajectory and competitor on different meshes")
    if not np.allclose(v.times, u.times):
        raise MeshMismatchError("trajectory and competitor on different time grids")
    idx = int(np.argmin(np.abs(u.times - s)))
    if abs(u.times[idx] - s) > 1e-12 * max(1.0, abs(s)):
        raise MeshMismatchError(f"s={s} is not a trajectory time")
    mesh = u.mesh
    op = ops.get_operator(mesh, params)

    total = 0.0
    for n in range(idx):
        tau = u.times[n + 1] - u.times[n]
        du = VectorField(mesh, u.states[n])
        diff = v.states[n + 1] - u.states[n + 1]
        h = forces.body(mesh, u.times[n]) + forces.drag(du, u.times[n])
        total += tau * (float(np.ravel(v.dstates[n + 1]) @ (op.mass @ np.ravel(diff)))
                        + _energy_at(v.states[n + 1], mesh, spec, params, energy)
                        - _energy_at(u.states[n + 1], mesh, spec, params, energy)
                        - float(np.ravel(h) @ (op.mass @ np.ravel(diff))))
    d_end = np.ravel(u.states[idx] - v.states[idx])
    d_0 = np.ravel(u.states[0] - v.states[0])
    total -= 0.5 * (float(d_end @ (op.mass @ d_end)) - float(d_0 @ (op.mass @ d_0)))

    tau0 = u.times[1] - u.times[0] if len(u.times) > 1 else 0.0
    if isinstance(spec, RegularizedIntegrand):
        tol_est = tau0 + mesh.h_max + np.sqrt(spec.eps) + spec.delta
    else:
        tol_est = tau0 + mesh.h_max
    return float(total), float(tol_est)


def test_function_factory(v_raw: TestTrajectory, d, r, theta, compact=True):
    """Cut off, space-mollify and time-mollify a competitor.

    Realizes the triple approximation: collar cut-off at width ``d`` (compact
    variant by default so the space mollification with radius ``r`` keeps the
    support inside the domain; requires ``r < d/2``), discrete spatial
    mollification, then discrete time convolution of the evenly reflected
    trajectory with a bump of width ``theta``.
    """
    mesh = v_raw.mesh
    if compact and not r < d / 2.0:
        raise AdmissibilityError("need r < d/2 so the mollified support stays inside")
    cut = eta_delta(mesh, d, compact=compact)
    n_t = len(v_raw.times)
    cut_states = [cut.nodal_values[:, None] * s for s in v_raw.states]
    smooth = [mollify_nodal_field(mesh, s, r, preserve_support=compact)
              for s in cut_states]

    # time mollification on the evenly reflected extension
    tau = float(v_raw.times[1] - v_raw.times[0]) if n_t > 1 else 1.0
    width = max(1, int(round(theta / tau)))
    kernel = np.array([(1.0 - (k / (width + 1)) ** 2) ** 3
                       for k in range(-width, width + 1)])
    kernel /= kernel.sum()
    padded = ([smooth[abs(k)] for k in range(-width, 0)] + smooth
              + [smooth[n_t - 2 - k if n_t > 1 else 0] for k in range(width)])
    out_states = []
    for n in range(n_t):
        acc = np.zeros_like(smooth[0])
        for k, w in enumerate(kernel):
            acc += w * padded[n + k]
        out_states.append(acc)
    dstates = [np.zeros_like(out_states[0])]
    for n in range(1, n_t):
        dstates.append((out_states[n] - out_states[n - 1]) / tau)
    return TestTrajectory(mesh, v_raw.times, out_states, dstates)


def factory_ladder_report(v_raw: TestTrajectory, spec: IntegrandSpec,
                          params: HiblerParams, ladder):
    """Measure the three approximation properties along a shrinking ladder.

    Each ladder entry is ``(d, r, theta)``; rows report the L2 distance of
    states and time derivatives to the input and the space-time bulk energy
    against the time integral of the relaxed energy of the input.
    """
    mesh = v_raw.mesh
    tau = float(v_raw.times[1] - v_raw.times[0])
    target = sum(tau * ops.relaxed_energy(VectorField(mesh, s), spec, params)
                 for s in v_raw.states[1:])
    rows = []
    for (d, r, theta) in ladder:
        out = test_function_factory(v_raw, d, r, theta)
        l2 = np.sqrt(sum(tau * ops.l2_inner(VectorField(mesh, a - b),
                                            VectorField(mesh, a - b))
                         for a, b in zip(out.states[1:], v_raw.states[1:])))
        dl2 = np.sqrt(sum(tau * ops.l2_inner(VectorField(mesh, a - b),
                                             VectorField(mesh, a - b))
                          for a, b in zip(out.dstates[1:], v_raw.dstates[1:])))
        bulk = sum(tau * ops.bulk_energy(VectorField(mesh, s), spec, params)
                   for s in out.states[1:])
        rows.append({"d": d, "r": r, "theta": theta, "l2_dist": float(l2),
                     "dt_l2_dist": float(dl2), "bulk_energy": float(bulk),
                     "relaxed_target": float(target)})
    return rows


def boundary_bulk_experiment(fields, spec: IntegrandSpec, params: HiblerParams,
                             delta_ladder, compact=False):
    """Bulk approximation of the boundary penalization along a collar ladder.

    ``fields`` is a single nonzero-trace field or one per ladder entry
    (refinement-matched meshes).  Each row reports the measured bulk energy
    of the cut-off field, the relaxed-energy target of the original field and
    their gap.  Raises when a collar is thinner than two mesh cells.
    """
    if isinstance(fields, VectorField):
        fields = [fields] * len(delta_ladder)
    if len(fields) != len(delta_ladder):
        raise MeshMismatchError("need one field per ladder entry")
    rows = []
    for u, delta in zip(fields, delta_ladder):
        mesh = u.mesh
        if delta < 2.0 * mesh.h_max:
            raise MeshResolutionError(
                f"collar delta={delta} is below 2*h={2 * mesh.h_max:.3g}")
        target = ops.relaxed_energy(u, spec, params)
        cut = eta_delta(mesh, delta, compact=compact)
        measured = ops.bulk_energy(scale_by_cutoff(u, cut), spec, params)
        tv_cut = ops.total_hibler_variation(scale_by_cutoff(u, cut), params)
        rows.append({"delta": float(delta), "measured": float(measured),
                     "target": float(target), "gap": float(target - measured),
                     "tv_cutoff": float(tv_cut)})
    return rows


def jensen_check(field_comps, mesh: Mesh2D, spec: IntegrandSpec, radius,
                 window, slack=1e-8):
    """Discrete Jensen inequality for the mollified element density.

    ``window`` selects elements by centroid (callable mask or boolean array).
    The mollification uses a sub-stochastic symmetric kernel (global
    normalization by the maximal row mass), which together with convexity,
    F >= 0 and F(0) = 0 makes the inequality exact up to rounding:

        integral_W F(smoothed) <= integral_{W_r} F(density) + slack*scale
    """
    comps = np.asarray(field_comps, dtype=float)
    cent = mesh.centroids()
    if callable(window):
        mask = np.asarray(window(cent), dtype=bool)
    else:
        mask = np.asarray(window, dtype=bool)
    if not mask.any():
        raise GeometryError("empty window")
    # window must keep distance > radius from the boundary
    from .mesh import boundary_distance
    if float(np.min(boundary_distance(mesh, cent[mask]))) <= radius:
        raise GeometryError("window too close to the boundary for this radius")

    from .mesh import mollifier_kernel
    d = np.linalg.norm(cent[:, None, :] - cent[None, :, :], axis=-1)
    K = mollifier_kernel(d, radius) * mesh.areas[None, :]
    norm = float(np.max(K.sum(axis=1)))
    W = K / norm
    smoothed = np.einsum("ij,jc->ic", W, comps)

    lhs = float(np.sum(mesh.areas[mask] * eval_F(spec, smoothed[mask])))
    dist_to_window = np.min(d[:, mask], axis=1)
    enlarged = dist_to_window <= radius + 1e-12
    rhs = float(np.sum(mesh.areas[enlarged] * eval_F(spec, comps[enlarged])))
    scale = max(rhs, 1.0)
    return {"lhs": lhs, "rhs": rhs, "ok": lhs <= rhs + slack * scale,
            "margin": rhs - lhs}


def relaxed_equation_residual(u: Trajectory, phi: TestTrajectory, spec, forces: Forces,
                              params: HiblerParams = HiblerParams(), adm_tol=None):
    """Residual of the relaxed evolution equation against an admissible test map.

    Admissibility (checked, raising with the offending element/edge):
    elementwise ``T phi = 0`` wherever ``|T u| < adm_tol`` and nodal trace
    ``phi = 0`` wherever the trace of ``u`` vanishes.  For discrete fields the
    singular pairing term has no carrier, so the residual is

        sum tau [ <du, phi> + integral F'(Tu).T phi
                  - sum_edges (F_inf)'(-tr u (x)_T nu).tr phi
                  - <drag(u), phi> - <f, phi> ]

    With ``spec`` a RegularizedIntegrand the gradient is F'_{delta,eps} and
    the residual reduces to the accumulated Newton stationarity.
    """
    if phi.mesh is not u.mesh:
        raise MeshMismatchError("test map on a different mesh")
    mesh = u.mesh
    op = ops.get_operator(mesh, params)
    regularized = isinstance(spec, RegularizedIntegrand)
    base = spec.base if regularized else spec

    total = 0.0
    for n in range(u.n_steps):
        tau = u.times[n + 1] - u.times[n]
        un1 = VectorField(mesh, u.states[n + 1])
        tu = ops.hibler_def(un1, params)
        pv = VectorField(mesh, phi.states[n + 1])
        tphi = ops.hibler_def(pv, params)

        if adm_tol is None:
            tol_n = 1e-10 * max(float(np.max(tu.norms())), 1e-300)
        else:
            tol_n = adm_tol
        dead = tu.norms() < tol_n
        if np.any(dead & (tphi.norms() > 1e-12 * max(1.0, float(np.max(tphi.norms()))))):
            bad = int(np.argmax(dead & (tphi.norms() > 0)))
            raise AdmissibilityError(
                f"T phi != 0 on element {bad} where |T u| < adm_tol at step {n + 1}")

        if regularized:
            gradvals = grad_F_delta_eps(spec, tu.comps)
        else:
            gradvals = np.where(dead[:, None], 0.0, grad_F(base, tu.comps))
        from .algebra import fro_dot
        bulk = float(np.sum(mesh.areas * fro_dot(gradvals, tphi.comps)))

        # boundary term: edges with vanishing trace of u are excluded per
        # admissibility; nonzero trace of phi there is a violation
        bdry = 0.0
        ue = u.states[n + 1][mesh.boundary_edges]      # (B, 2, 2)
        pe = phi.states[n + 1][mesh.boundary_edges]
        umag = np.linalg.norm(ue, axis=2).max(axis=1)
        pmag = np.linalg.norm(pe, axis=2).max(axis=1)
        trace_tol = 1e-10 * max(float(np.max(np.linalg.norm(u.states[n + 1], axis=1))),
                                1e-300)
        bad_edges = (umag < trace_tol) & (pmag > 1e-12 * max(1.0, float(np.max(pmag))))
        if np.any(bad_edges):
            raise AdmissibilityError(
                f"trace of phi nonzero on edge {int(np.argmax(bad_edges))} "
                f"where trace of u vanishes at step {n + 1}")
        live = umag >= trace_tol
        if np.any(live):
            gp = 0.5 + np.array([-1.0, 1.0]) / (2.0 * np.sqrt(3.0))
            acc = np.zeros(int(np.sum(live)))
            nu = mesh.boundary_normals[live]
            for t in gp:
                ug = (1.0 - t) * ue[live, 0] + t * ue[live, 1]
                pg = (1.0 - t) * pe[live, 0] + t * pe[live, 1]
                z = tensor_product_T(-ug, nu, params)
                zn = fro_norm(z)
                zn = np.where(zn > 0.0, zn, 1.0)
                # (F_inf)' of the norm-type recession: (P/2) * direction,
                # contracted with tr(phi) (x)_T nu; the whole term is
                # subtracted from the residual below
                dtens = tensor_product_T(pg, nu, params)
                acc += 0.5 * (0.5 * base.P) * fro_dot(z / zn[:, None], dtens)
            bdry = float(np.sum(mesh.boundary_lengths[live] * acc))

        du_prev = VectorField(mesh, u.states[n])
        h = forces.body(mesh, u.times[n]) + forces.drag(du_prev, u.times[n])
        rate = (u.states[n + 1] - u.states[n]) / tau
        total += tau * (float(np.ravel(rate) @ (op.mass @ np.ravel(phi.states[n + 1])))
                        + bulk - bdry
                        - float(np.ravel(h) @ (op.mass @ np.ravel(phi.states[n + 1]))))
    return float(total)
