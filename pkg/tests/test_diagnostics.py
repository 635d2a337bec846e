import numpy as np
import pytest

from icevp import diagnostics as diag, operators as ops, solver as slv
from icevp.algebra import HiblerParams
from icevp.errors import AdmissibilityError, GeometryError, MeshResolutionError
from icevp.forces import Forces
from icevp.integrands import IntegrandSpec, RegularizedIntegrand
from icevp.mesh import build_rect_mesh
from icevp.operators import VectorField

P22 = HiblerParams()


def bump_datum(mesh, center=(0.5, 0.5), radius=0.25, amp=(1.0, 0.0)):
    r = np.linalg.norm(mesh.nodes - np.asarray(center), axis=1) / radius
    prof = np.where(r < 1.0, (1.0 - np.minimum(r, 1.0) ** 2) ** 3, 0.0)
    return VectorField(mesh, prof[:, None] * np.asarray(amp))


def forced_run(mesh, reg, t_end=0.1, tau=0.01, amp=0.8):
    y = mesh.nodes[:, 1]
    band = ((y > 0.35) & (y < 0.65)).astype(float)
    forces = Forces(f=np.stack([amp * band, np.zeros_like(band)], axis=-1))
    cfg = slv.SolverConfig(tau=tau, t_end=t_end)
    traj = slv.run_evolution(bump_datum(mesh), reg, forces, cfg)
    return traj, forces, cfg


def test_evi_self_consistency():
    mesh = build_rect_mesh(8, 8, 1.0, 1.0)
    reg = RegularizedIntegrand(IntegrandSpec.norm(2.0), eps=1e-2, delta=1e-3)
    traj, forces, cfg = forced_run(mesh, reg)
    v = diag.TestTrajectory.from_trajectory(traj)
    for s in traj.times[1:]:
        res, _ = diag.evi_residual(traj, v, s, reg, forces)
        assert abs(res) <= 1e-12


def test_evi_zero_everything():
    mesh = build_rect_mesh(6, 6, 1.0, 1.0)
    reg = RegularizedIntegrand(IntegrandSpec.norm(2.0), eps=1e-2, delta=1e-3)
    traj = slv.run_evolution(VectorField.zero(mesh), reg, Forces(),
                             slv.SolverConfig(tau=0.02, t_end=0.1))
    v = diag.TestTrajectory.constant(mesh, traj.times, np.zeros((mesh.n_nodes, 2)))
    res, _ = diag.evi_residual(traj, v, traj.times[-1], reg, Forces())
    assert abs(res) <= 1e-14


def test_evi_nonnegative_for_competitors():
    mesh = build_rect_mesh(8, 8, 1.0, 1.0)
    reg = RegularizedIntegrand(IntegrandSpec.norm(2.0), eps=1e-2, delta=1e-3)
    traj, forces, cfg = forced_run(mesh, reg)
    rng = np.random.default_rng(0)
    base = diag.TestTrajectory.from_trajectory(traj)
    for trial in range(5):
        pert = [s + 0.05 * rng.normal(size=s.shape) * (~mesh.boundary_node_mask)[:, None]
                for s in base.states]
        v = diag.TestTrajectory(mesh, base.times, pert,
                                [np.zeros_like(pert[0])] + [
                                    (pert[n] - pert[n - 1]) / cfg.tau
                                    for n in range(1, len(pert))])
        res, _ = diag.evi_residual(traj, v, traj.times[-1], reg, forces)
        assert res >= -10 * cfg.newton_tol


def test_evi_relaxed_energy_variant():
    mesh = build_rect_mesh(8, 8, 1.0, 1.0)
    reg = RegularizedIntegrand(IntegrandSpec.norm(2.0), eps=1e-2, delta=1e-3)
    traj, forces, cfg = forced_run(mesh, reg)
    v = diag.TestTrajectory.from_trajectory(traj)
    res, tol = diag.evi_residual(traj, v, traj.times[-1], reg.base, forces,
                                 energy="relaxed")
    assert abs(res) <= 1e-12  # v = u cancels regardless of the energy used
    assert tol > 0


def test_factory_smooth_input_stays_close():
    mesh = build_rect_mesh(16, 16, 1.0, 1.0)
    times = np.linspace(0.0, 0.1, 6)
    u = bump_datum(mesh, radius=0.2)
    v_raw = diag.TestTrajectory.constant(mesh, times, u.values)
    out = diag.test_function_factory(v_raw, d=0.15, r=0.05, theta=0.01)
    # constant in time: time mollification is the identity
    for a, b in zip(out.states, out.states[1:]):
        assert np.allclose(a, b, atol=1e-12)
    dist = max(np.max(np.abs(a - b)) for a, b in zip(out.states, v_raw.states))
    assert dist < 0.2  # mollifier modulus at this (d, r)


def test_factory_ladder_energy_upper_bound():
    mesh = build_rect_mesh(24, 24, 1.0, 1.0)
    times = np.linspace(0.0, 0.05, 3)
    vals = np.tile([0.5, 0.0], (mesh.n_nodes, 1))  # nonzero trace
    v_raw = diag.TestTrajectory.constant(mesh, times, vals)
    spec = IntegrandSpec.norm(2.0)
    ladder = [(0.3, 0.12, 0.02), (0.2, 0.08, 0.01), (0.12, 0.05, 0.005)]
    rows = diag.factory_ladder_report(v_raw, spec, P22, ladder)
    for row in rows:
        assert row["bulk_energy"] <= row["relaxed_target"] + 0.05 * row["relaxed_target"]
    # distances shrink along the ladder
    assert rows[-1]["l2_dist"] < rows[0]["l2_dist"]


def test_boundary_bulk_experiment_constant_field():
    target = 1.0 + np.sqrt(5.0)
    spec = IntegrandSpec.norm(2.0)
    fields, deltas = [], [0.25, 0.125, 0.0625]
    for n, d in zip((16, 32, 64), deltas):
        mesh = build_rect_mesh(n, n, 1.0, 1.0)
        fields.append(VectorField(mesh, np.tile([1.0, 0.0], (mesh.n_nodes, 1))))
    rows = diag.boundary_bulk_experiment(fields, spec, P22, deltas)
    gaps = [abs(r["gap"]) for r in rows]
    assert all(np.isclose(r["target"], target, rtol=1e-12) for r in rows)
    assert gaps[0] > gaps[1] > gaps[2]
    # closed-form law for the square: measured = (1 - delta) * target + O(h)
    for r in rows:
        assert abs(r["measured"] - (1.0 - r["delta"]) * target) <= 0.25 * r["delta"] * target


def test_boundary_bulk_zero_trace_rows():
    mesh = build_rect_mesh(32, 32, 1.0, 1.0)
    u = bump_datum(mesh, radius=0.2)
    spec = IntegrandSpec.norm(2.0)
    rows = diag.boundary_bulk_experiment(u, spec, P22, [0.25, 0.125])
    for r in rows:
        assert np.isclose(r["target"], ops.bulk_energy(u, spec, P22))
    assert abs(rows[1]["gap"]) <= abs(rows[0]["gap"]) + 1e-12


def test_boundary_bulk_affine_field():
    spec = IntegrandSpec.norm(2.0)
    fields, deltas = [], [0.25, 0.125, 0.0625]
    for n in (16, 32, 64):
        mesh = build_rect_mesh(n, n, 1.0, 1.0)
        vals = np.stack([mesh.nodes[:, 0], np.zeros(mesh.n_nodes)], axis=-1)
        fields.append(VectorField(mesh, vals))
    rows = diag.boundary_bulk_experiment(fields, spec, P22, deltas)
    gaps = [abs(r["gap"]) for r in rows]
    assert gaps[0] > gaps[1] > gaps[2]
    # uniform-bound monitor stays bounded along the ladder
    tvs = [r["tv_cutoff"] for r in rows]
    assert max(tvs) <= 3.0 * min(tvs)


def test_boundary_bulk_resolution_guard():
    mesh = build_rect_mesh(8, 8, 1.0, 1.0)
    u = VectorField(mesh, np.tile([1.0, 0.0], (mesh.n_nodes, 1)))
    with pytest.raises(MeshResolutionError):
        diag.boundary_bulk_experiment(u, IntegrandSpec.norm(2.0), P22, [0.1])


def test_jensen_constant_field_equality():
    mesh = build_rect_mesh(16, 16, 1.0, 1.0)
    comps = np.tile([0.3, -0.1, 0.7], (mesh.n_triangles, 1))
    window = lambda c: (np.abs(c[:, 0] - 0.5) < 0.18) & (np.abs(c[:, 1] - 0.5) < 0.18)
    rep = diag.jensen_check(comps, mesh, IntegrandSpec.norm(2.0), 0.1, window)
    assert rep["ok"]


def test_jensen_random_fields_and_windows():
    mesh = build_rect_mesh(12, 12, 1.0, 1.0)
    rng = np.random.default_rng(1)
    for spec in (IntegrandSpec.norm(2.0), IntegrandSpec.mohr_coulomb(2.0, 0.5)):
        for _ in range(25):
            comps = rng.normal(size=(mesh.n_triangles, 3))
            cx, cy = rng.uniform(0.4, 0.6, size=2)
            w = rng.uniform(0.08, 0.15)
            window = lambda c: (np.abs(c[:, 0] - cx) < w) & (np.abs(c[:, 1] - cy) < w)
            rep = diag.jensen_check(comps, mesh, spec, 0.08, window)
            assert rep["ok"]


def test_jensen_geometry_guard():
    mesh = build_rect_mesh(8, 8, 1.0, 1.0)
    comps = np.zeros((mesh.n_triangles, 3))
    with pytest.raises(GeometryError):
        diag.jensen_check(comps, mesh, IntegrandSpec.norm(2.0), 0.4,
                          lambda c: c[:, 0] < 0.2)


def test_relaxed_equation_residual_regularized():
    mesh = build_rect_mesh(8, 8, 1.0, 1.0)
    reg = RegularizedIntegrand(IntegrandSpec.norm(2.0), eps=1e-2, delta=1e-3)
    traj, forces, cfg = forced_run(mesh, reg, t_end=0.05)
    # phi = alpha(t) * u is admissible by construction
    phi_states = [0.5 * s for s in traj.states]
    phi = diag.TestTrajectory(mesh, traj.times, phi_states,
                              [np.zeros_like(phi_states[0])] * len(phi_states))
    res = diag.relaxed_equation_residual(traj, phi, reg, forces)
    scale = max(np.max(np.abs(s)) for s in traj.states)
    assert abs(res) <= 10 * cfg.newton_tol * max(1.0, scale) * traj.n_steps


def test_relaxed_equation_zero_phi():
    mesh = build_rect_mesh(6, 6, 1.0, 1.0)
    reg = RegularizedIntegrand(IntegrandSpec.norm(2.0), eps=1e-2, delta=1e-3)
    traj, forces, _ = forced_run(mesh, reg, t_end=0.04)
    phi = diag.TestTrajectory.constant(mesh, traj.times, np.zeros((mesh.n_nodes, 2)))
    assert diag.relaxed_equation_residual(traj, phi, reg, forces) == 0.0


def test_relaxed_equation_admissibility_guard():
    # the zero run is rigid everywhere: any deforming test map violates (ii)
    mesh = build_rect_mesh(8, 8, 1.0, 1.0)
    reg = RegularizedIntegrand(IntegrandSpec.norm(2.0), eps=1e-2, delta=1e-3)
    traj = slv.run_evolution(VectorField.zero(mesh), reg, Forces(),
                             slv.SolverConfig(tau=0.01, t_end=0.03))
    vals = np.zeros((mesh.n_nodes, 2))
    inner = np.argmin(np.linalg.norm(mesh.nodes - [0.5, 0.5], axis=1))
    vals[inner] = [1.0, 0.0]
    phi = diag.TestTrajectory.constant(mesh, traj.times, vals)
    with pytest.raises(AdmissibilityError):
        diag.relaxed_equation_residual(traj, phi, reg, Forces(), adm_tol=1e-30)
