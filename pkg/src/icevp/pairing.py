"""Stress-deformation pairings by duality and the variable-mass residual checker.

For piecewise-constant stresses the formal adjoint is not a function, so the
pairing's first term is realized through the exact elementwise transpose
action on the product ``phi * u`` (per-element integration of ``phi T u +
T[u sym_outer grad phi]`` is exact for P1 data).  Test functions live on the
domain mesh padded by one cell ring, matching the definition's requirement
of a neighborhood of the closure.
"""

from dataclasses import dataclass, field

import numpy as np

from . import operators as ops
from .algebra import HiblerParams, fro_dot, fro_norm, sym_outer, t_map
from .errors import (ConfigurationError, FeasibilityError, MassRangeError,
                     MeshMismatchError, NonConvergenceError)
from .forces import Forces
from .integrands import RegularizedIntegrand, grad_F_eps
from .mesh import Mesh2D, build_rect_mesh
from .operators import VectorField, get_operator
from .solver import Trajectory

FEASIBILITY_SLACK = 1e-8


@dataclass
class StressField:
    """Per-element stress in the feasibility normalization (|sigma| <= 1)."""

    mesh: Mesh2D
    comps: np.ndarray
    feasible_flag: bool = True

    def __post_init__(self):
        self.comps = np.asarray(self.comps, dtype=float)
        if self.comps.shape != (self.mesh.n_triangles, 3):
            raise ConfigurationError("stress comps must have shape (n_triangles, 3)")
        if self.feasible_flag and self.feasibility_norm > 1.0 + FEASIBILITY_SLACK:
            raise FeasibilityError(
                f"stress magnitude {self.feasibility_norm} exceeds the yield bound")

    @property
    def feasibility_norm(self):
        return float(np.max(fro_norm(self.comps))) if len(self.comps) else 0.0


@dataclass
class MassField:
    """Nodal positive mass; optionally a time sequence (list of nodal arrays)."""

    mesh: Mesh2D
    values: np.ndarray
    lower: float = field(init=False)
    upper: float = field(init=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.mesh.n_nodes,):
            raise ConfigurationError("mass must be a nodal scalar field")
        self.lower = float(np.min(self.values))
        self.upper = float(np.max(self.values))
        if not self.lower > 0.0:
            raise MassRangeError(f"mass must be positive, min is {self.lower}")

    def element_means(self):
        return self.values[self.mesh.triangles].mean(axis=1)


def tensor_product_T_star(sigma_comps, w):
    """Dual symbol contraction: the vector ``v`` with ``v.a = sigma.(a (x)_T w)``."""
    sigma_comps = np.asarray(sigma_comps, dtype=float)
    w = np.asarray(w, dtype=float)
    e1 = np.zeros(w.shape)
    e1[..., 0] = 1.0
    e2 = np.zeros(w.shape)
    e2[..., 1] = 1.0
    params = tensor_product_T_star.params
    v1 = fro_dot(sigma_comps, t_map(sym_outer(e1, w), params))
    v2 = fro_dot(sigma_comps, t_map(sym_outer(e2, w), params))
    return np.stack([v1, v2], axis=-1)


tensor_product_T_star.params = HiblerParams()


def _set_star_params(params):
    tensor_product_T_star.params = params


@dataclass
class PaddedMesh:
    """Rect mesh extended by one cell ring; keeps maps back to the original."""

    inner: Mesh2D
    outer: Mesh2D
    node_map: np.ndarray      # inner node -> outer node
    element_map: np.ndarray   # inner element -> outer element


def pad_mesh(mesh: Mesh2D) -> PaddedMesh:
    if mesh.meta.get("kind") != "rect":
        raise ConfigurationError("padded meshes are implemented for rect meshes")
    nx, ny = mesh.meta["nx"], mesh.meta["ny"]
    Lx, Ly = mesh.meta["Lx"], mesh.meta["Ly"]
    hx, hy = Lx / nx, Ly / ny
    outer = build_rect_mesh(nx + 2, ny + 2, Lx + 2 * hx, Ly + 2 * hy)
    # shift so the inner mesh occupies the middle block
    outer = Mesh2D(outer.nodes - np.array([hx, hy]), outer.triangles, meta=outer.meta)

    node_map = np.empty(mesh.n_nodes, dtype=np.int64)
    for i in range(nx + 1):
        for j in range(ny + 1):
            node_map[i * (ny + 1) + j] = (i + 1) * (ny + 3) + (j + 1)
    element_map = np.empty(mesh.n_triangles, dtype=np.int64)
    for i in range(nx):
        for j in range(ny):
            for k in range(2):
                element_map[2 * (i * ny + j) + k] = 2 * ((i + 1) * (ny + 2) + (j + 1)) + k
    # orientation sanity: matched elements carry identical node positions
    a = mesh.nodes[mesh.triangles[0]]
    b = outer.nodes[outer.triangles[element_map[0]]]
    if not np.allclose(a, b):
        raise ConfigurationError("pad mapping failed")
    return PaddedMesh(mesh, outer, node_map, element_map)


def pairing_apply(sigma: StressField, u: VectorField, phi, padded: PaddedMesh,
                  params: HiblerParams = HiblerParams()):
    """Apply the duality pairing to a P1 scalar on the padded mesh.

    ``<[sigma . T u]_0, phi> = -int phi u . T* sigma - int u . (sigma (x)_T* grad phi)``
    with the first term realized by the exact elementwise transpose action;
    linear in each argument, and equal to ``int phi sigma . T u`` for smooth
    discrete data up to rounding.
    """
    if sigma.mesh is not u.mesh or padded.inner is not u.mesh:
        raise MeshMismatchError("pairing arguments on different meshes")
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (padded.outer.n_nodes,):
        raise MeshMismatchError("phi must be nodal on the padded mesh")
    _set_star_params(params)
    mesh = u.mesh
    tris_out = padded.outer.triangles[padded.element_map]
    phi_elem = phi[tris_out]                      # (E, 3)
    grads = padded.outer.grads[padded.element_map]
    grad_phi = np.einsum("ea,eax->ex", phi_elem, grads)
    phi_bar = phi_elem.mean(axis=1)
    u_bar = u.values[mesh.triangles].mean(axis=1)

    tu = ops.hibler_def(u, params).comps
    # exact transpose action on the product phi*u, elementwise
    term1 = float(np.sum(mesh.areas * (
        phi_bar * fro_dot(sigma.comps, tu)
        + fro_dot(sigma.comps, t_map(sym_outer(u_bar, grad_phi), params)))))
    term2 = -float(np.sum(mesh.areas * np.einsum(
        "ei,ei->e", u_bar, tensor_product_T_star(sigma.comps, grad_phi))))
    return term1 + term2


def plateau_phi(padded: PaddedMesh):
    """P1 plateau: 1 on every original node, 0 on the pad ring."""
    phi = np.zeros(padded.outer.n_nodes)
    phi[padded.node_map] = 1.0
    return phi


def pairing_total_mass(sigma: StressField, u: VectorField, padded: PaddedMesh,
                       params: HiblerParams = HiblerParams()):
    """Pairing of the whole closure, via the plateau test function."""
    return pairing_apply(sigma, u, plateau_phi(padded), padded, params)


def adjoint_integral(sigma: StressField, u: VectorField,
                     params: HiblerParams = HiblerParams()):
    """``-int u . T* sigma`` realized by the assembled transpose (= int sigma.Tu)."""
    op = get_operator(u.mesh, params)
    g = op.adjoint_dual(sigma.comps)
    return -float(u.values.ravel() @ g)


def pairing_mass_bound_check(sigma: StressField, u: VectorField, padded: PaddedMesh,
                             params: HiblerParams = HiblerParams(),
                             n_phi=100, seed=0):
    """Fuzz the bound |<[sigma.Tu]_0, phi>| <= |sigma|_inf |Tu|(Omega) |phi|_sup."""
    rng = np.random.default_rng(seed)
    tv = ops.total_hibler_variation(u, params)
    sig_inf = float(np.max(fro_norm(sigma.comps))) if len(sigma.comps) else 0.0
    worst = -np.inf
    nodes = padded.outer.nodes
    inner_lo = padded.inner.nodes.min(axis=0)
    inner_hi = padded.inner.nodes.max(axis=0)
    for k in range(n_phi):
        if k % 4 == 3:
            # adversarial: concentrate on a boundary strip of the inner mesh
            strip = np.minimum.reduce([
                nodes[:, 0] - inner_lo[0], inner_hi[0] - nodes[:, 0],
                nodes[:, 1] - inner_lo[1], inner_hi[1] - nodes[:, 1]])
            phi = np.where(np.abs(strip) < 0.1 * (inner_hi[0] - inner_lo[0]),
                           rng.choice([-1.0, 1.0]), 0.0)
        else:
            phi = rng.uniform(-1.0, 1.0, size=padded.outer.n_nodes)
        m = np.max(np.abs(phi))
        if m > 0:
            phi = phi / m
        val = pairing_apply(sigma, u, phi, padded, params)
        bound = sig_inf * tv * 1.0
        worst = max(worst, abs(val) - bound)
        if abs(val) > bound * (1.0 + 1e-10) + 1e-14:
            raise NonConvergenceError(
                f"pairing mass bound violated by {abs(val) - bound}", residual=abs(val))
    return {"ok": True, "worst_margin": float(-worst), "bound_scale": sig_inf * tv}


def stress_recovery(u_new: VectorField, reg: RegularizedIntegrand,
                    params: HiblerParams = HiblerParams(), converged=True):
    """Feasibility-normalized dual stress ``(2/P) grad F_eps(T u)`` of a step."""
    if not converged:
        raise NonConvergenceError("stress recovery requires a converged step")
    tu = ops.hibler_def(u_new, params)
    g = grad_F_eps(reg, tu.comps)
    return StressField(u_new.mesh, (2.0 / reg.base.P) * g)


def weak_var_residual(u: Trajectory, sigmas, m: MassField, v, t, forces: Forces,
                      params: HiblerParams = HiblerParams(),
                      reg: RegularizedIntegrand = None,
                      include_viscous_flux=False, padded: PaddedMesh = None):
    """Distributional and energy-stress-coupling residuals at a step time.

    ``sigmas`` is one StressField per step (index aligned with times).
    Returns ``(eq_residual, coupling_residual)``: the first is the weak-form
    residual against a batch of interior test fields (normalized, worst
    case), the second the defect of the coupling identity at time ``t``
    against the competitor ``v`` (a VectorField or TestTrajectory).

    With ``include_viscous_flux`` the delta-flux of the generating run is
    added to the stress term, making the eq-residual the exact Newton
    stationarity; without it the residual reports the definition's own
    delta-free defect.
    """
    mesh = u.mesh
    op = ops.get_operator(mesh, params)
    idx = int(np.argmin(np.abs(u.times - t)))
    if idx == 0:
        raise ConfigurationError("pick a step time t > 0")
    sigma = sigmas[idx]
    if sigma.feasibility_norm > 1.0 + FEASIBILITY_SLACK:
        raise FeasibilityError("stress sequence is infeasible")
    if padded is None:
        padded = pad_mesh(mesh)
    _set_star_params(params)

    tau = u.times[idx] - u.times[idx - 1]
    rate = (u.states[idx] - u.states[idx - 1]) / tau
    un = VectorField(mesh, u.states[idx])
    tu = ops.hibler_def(un, params).comps
    inv_m = 1.0 / m.values
    inv_m_elem = inv_m[mesh.triangles].mean(axis=1)
    grad_inv_m = np.einsum("ea,eax->ex",
                           inv_m[mesh.triangles], mesh.grads)   # (E, 2)

    u_prev = VectorField(mesh, u.states[idx - 1])
    h = (forces.body(mesh, u.times[idx - 1]) + forces.drag(u_prev, u.times[idx - 1]))

    # (ii) distributional residual against interior test fields
    rng = np.random.default_rng(0)
    half_P = 0.5 * params.P if reg is None else 0.5 * reg.base.P
    eq_residual = 0.0
    for _ in range(16):
        psi = rng.normal(size=(mesh.n_nodes, 2))
        psi[mesh.boundary_node_mask] = 0.0
        nrm = np.sqrt(float(psi.ravel() @ (op.mass @ psi.ravel())) +
                      op.h1_sq(psi))
        psi /= max(nrm, 1e-300)
        pv = VectorField(mesh, psi)
        tpsi = ops.hibler_def(pv, params).comps
        flux = half_P * inv_m_elem[:, None] * sigma.comps
        if include_viscous_flux and reg is not None:
            flux = flux + reg.delta * inv_m_elem[:, None] * tu
        val = (float(rate.ravel() @ (op.mass @ psi.ravel()))
               + float(np.sum(mesh.areas * fro_dot(flux, tpsi)))
               + half_P * float(np.sum(mesh.areas * np.einsum(
                   "ei,ei->e", psi[mesh.triangles].mean(axis=1),
                   tensor_product_T_star(sigma.comps, grad_inv_m))))
               - float((inv_m[:, None] * h).ravel() @ (op.mass @ psi.ravel())))
        eq_residual = max(eq_residual, abs(val))

    # (iii) energy-stress coupling at time t
    if hasattr(v, "states"):
        vidx = int(np.argmin(np.abs(v.times - t)))
        v_vals = v.states[vidx]
    else:
        v_vals = v.values
    diff = u.states[idx] - v_vals
    tv_weighted = half_P * float(np.sum(mesh.areas * inv_m_elem * fro_norm(tu)))
    sig_over_m = StressField(mesh, half_P * inv_m_elem[:, None] * sigma.comps,
                             feasible_flag=False)
    vf = VectorField(mesh, v_vals)
    coupling = (float(rate.ravel() @ (op.mass @ diff.ravel()))
                + tv_weighted
                + half_P * float(np.sum(mesh.areas * np.einsum(
                    "ei,ei->e", diff[mesh.triangles].mean(axis=1),
                    tensor_product_T_star(sigma.comps, grad_inv_m))))
                - float((inv_m[:, None] * h).ravel() @ (op.mass @ diff.ravel()))
                - pairing_total_mass(sig_over_m, vf, padded, params))
    return float(eq_residual), float(coupling)
