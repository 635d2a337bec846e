"""Discrete deformation operators, energies and norms on P1 fields.

Velocities are piecewise-linear nodal 2-vector fields; strain rates, Hibler
deformations and stresses are piecewise-constant packed symmetric matrices
(one per triangle).  The assembled deformation operator maps nodal velocity
DOFs to per-element weighted components ``(z11, sqrt2*z12, z22)`` so that the
Euclidean pairing of coefficient vectors reproduces Frobenius integrals; its
plain transpose is then the exact discrete adjoint.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import algebra, integrands
from .algebra import HiblerParams, SQRT2
from .errors import ConfigurationError, MeshMismatchError, TraceError
from .mesh import Mesh2D, CollarCutoff


@dataclass
class VectorField:
    """Nodal 2-vector field on a mesh (velocity units)."""

    mesh: Mesh2D
    values: np.ndarray  # (N, 2)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.mesh.n_nodes, 2):
            raise ConfigurationError("values must have shape (n_nodes, 2)")

    @property
    def zero_trace(self):
        return bool(np.all(self.values[self.mesh.boundary_node_mask] == 0.0))

    def copy(self):
        return VectorField(self.mesh, self.values.copy())

    @classmethod
    def zero(cls, mesh):
        return cls(mesh, np.zeros((mesh.n_nodes, 2)))

    @classmethod
    def from_function(cls, mesh, fn):
        return cls(mesh, np.asarray(fn(mesh.nodes), dtype=float))


@dataclass
class ElementTensorField:
    """Piecewise-constant packed symmetric matrix field (one row per triangle)."""

    mesh: Mesh2D
    comps: np.ndarray  # (E, 3)

    def __post_init__(self):
        self.comps = np.asarray(self.comps, dtype=float)
        if self.comps.shape != (self.mesh.n_triangles, 3):
            raise ConfigurationError("comps must have shape (n_triangles, 3)")

    def norms(self):
        return algebra.fro_norm(self.comps)


def _check_same_mesh(*objs):
    meshes = {id(o.mesh) for o in objs}
    if len(meshes) > 1:
        raise MeshMismatchError("fields live on different meshes")


def sym_grad(u: VectorField) -> ElementTensorField:
    """Exact per-triangle symmetric gradient of the P1 interpolant."""
    mesh = u.mesh
    vals = u.values[mesh.triangles]          # (E, 3, 2)
    grad = np.einsum("eai,eaj->eij", vals, mesh.grads)   # full gradient (dU_i/dx_j)
    comps = np.stack([grad[:, 0, 0],
                      0.5 * (grad[:, 0, 1] + grad[:, 1, 0]),
                      grad[:, 1, 1]], axis=-1)
    return ElementTensorField(mesh, comps)


def hibler_def(u: VectorField, params: HiblerParams) -> ElementTensorField:
    """Elementwise Hibler deformation ``T[sym_grad(u)]``."""
    eps = sym_grad(u)
    return ElementTensorField(u.mesh, algebra.t_map(eps.comps, params))


class DiscreteHibler:
    """Assembled operators for one (mesh, params) pair.

    Holds the sparse deformation matrix in weighted components, consistent
    and lumped mass matrices, the vector Laplacian with zero boundary
    conditions, and the interior DOF bookkeeping the solver uses.
    """

    def __init__(self, mesh: Mesh2D, params: HiblerParams):
        self.mesh = mesh
        self.params = params
        self.n = mesh.n_nodes
        self.m = mesh.n_triangles
        self.T = self._assemble_deformation()
        self.areas3 = np.repeat(mesh.areas, 3)
        self.mass_scalar = self._assemble_mass()
        self.mass = sp.kron(self.mass_scalar, sp.eye(2), format="csr")
        self.stiff_scalar = self._assemble_stiffness()
        self.interior = ~mesh.boundary_node_mask
        dof_mask = np.repeat(self.interior, 2)
        self.free_dofs = np.flatnonzero(dof_mask)
        self._dual_solve = None

    # -- assembly ---------------------------------------------------------

    def _assemble_deformation(self):
        mesh, e = self.mesh, self.params.e
        rows, cols, data = [], [], []
        c_dev = SQRT2 / e
        for a in range(3):
            g = mesh.grads[:, a, :]               # (E, 2)
            nid = mesh.triangles[:, a]
            eids = np.arange(self.m)
            # contribution of nodal dof (node, component) to weighted comps:
            # eps(u) row for basis (phi e_x): (gx, gy/2, 0); for (phi e_y): (0, gx/2, gy)
            gx, gy = g[:, 0], g[:, 1]
            for comp, (e11, e12, e22) in ((0, (gx, 0.5 * gy, np.zeros_like(gx))),
                                          (1, (np.zeros_like(gx), 0.5 * gx, gy))):
                tr = e11 + e22
                d11 = e11 - 0.5 * tr
                d22 = e22 - 0.5 * tr
                t11 = c_dev * d11 + tr / SQRT2
                t12 = c_dev * e12
                t22 = c_dev * d22 + tr / SQRT2
                col = 2 * nid + comp
                rows.extend([3 * eids, 3 * eids + 1, 3 * eids + 2])
                cols.extend([col, col, col])
                data.extend([t11, SQRT2 * t12, t22])
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        data = np.concatenate(data)
        return sp.csr_matrix((data, (rows, cols)), shape=(3 * self.m, 2 * self.n))

    def _assemble_mass(self):
        mesh = self.mesh
        local = (np.ones((3, 3)) + np.eye(3)) / 12.0
        eids = mesh.triangles
        rows = np.repeat(eids, 3, axis=1).ravel()
        cols = np.tile(eids, (1, 3)).ravel()
        data = (mesh.areas[:, None, None] * local[None, :, :]).ravel()
        return sp.csr_matrix((data, (rows, cols)), shape=(self.n, self.n))

    def _assemble_stiffness(self):
        mesh = self.mesh
        local = np.einsum("eai,ebi->eab", mesh.grads, mesh.grads) * mesh.areas[:, None, None]
        eids = mesh.triangles
        rows = np.repeat(eids, 3, axis=1).ravel()
        cols = np.tile(eids, (1, 3)).ravel()
        return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(self.n, self.n))

    # -- basic maps --------------------------------------------------------

    def deformation(self, values):
        """Weighted per-element components of T[eps(u)], shape (3E,)."""
        return self.T @ values.ravel()

    def deformation_packed(self, values):
        w = self.deformation(values).reshape(self.m, 3)
        out = w.copy()
        out[:, 1] /= SQRT2
        return out

    def adjoint_dual(self, sigma_comps):
        """Dual vector g with g.v = -integral(sigma . T[eps v]) for all nodal v."""
        w = np.asarray(sigma_comps, dtype=float).copy()
        w[:, 1] *= SQRT2
        return -(self.T.T @ (self.areas3 * w.ravel()))

    def mass_apply(self, values):
        return (self.mass @ values.ravel()).reshape(self.n, 2)

    def l2_inner(self, uv, vv):
        return float(uv.ravel() @ (self.mass @ vv.ravel()))

    def dual_h1_norm_vec(self, values):
        """W^{-1,2} norm of the functional v -> integral(g . v), g nodal."""
        K = self.stiff_scalar[self.interior][:, self.interior].tocsc()
        if K.shape[0] == 0:
            raise ConfigurationError("mesh has no interior nodes; dual norm undefined")
        if self._dual_solve is None:
            self._dual_solve = spla.factorized(K)
        b = (self.mass_scalar @ values)[self.interior]
        total = 0.0
        for c in range(2):
            x = self._dual_solve(b[:, c])
            total += float(b[:, c] @ x)
        return np.sqrt(max(total, 0.0))

    def h1_sq(self, values):
        """Squared H^1 norm (mass + full-gradient stiffness, both components)."""
        out = 0.0
        for c in range(2):
            v = values[:, c]
            out += float(v @ (self.mass_scalar @ v)) + float(v @ (self.stiff_scalar @ v))
        return out


_OP_CACHE = {}


def get_operator(mesh: Mesh2D, params: HiblerParams) -> DiscreteHibler:
    key = (id(mesh), params.e)
    op = _OP_CACHE.get(key)
    if op is None or op.mesh is not mesh:
        op = DiscreteHibler(mesh, params)
        _OP_CACHE[key] = op
    return op


def hibler_adjoint_residual(sigma: ElementTensorField, v: VectorField, params: HiblerParams):
    """|integral(sigma . Tv) + v . T*sigma| with T* the assembled transpose.

    Zero to rounding for every zero-trace v; this exactness is what every
    weak-form assembly in the package rests on.
    """
    _check_same_mesh(sigma, v)
    if not v.zero_trace:
        raise TraceError("adjoint residual requires a zero-trace field")
    op = get_operator(v.mesh, params)
    w = sigma.comps.copy()
    w[:, 1] *= SQRT2
    s1 = float((sigma.mesh.areas[:, None] * w).ravel() @ (op.T @ v.values.ravel()))
    g = op.adjoint_dual(sigma.comps)
    return abs(s1 + float(v.values.ravel() @ g))


def bulk_energy(u: VectorField, integrand, params: HiblerParams):
    """Integral of the density over the mesh, exact for P1 fields."""
    tu = hibler_def(u, params)
    if isinstance(integrand, integrands.RegularizedIntegrand):
        dens = integrands.eval_F_delta_eps(integrand, tu.comps)
    else:
        dens = integrands.eval_F(integrand, tu.comps)
    return float(np.sum(u.mesh.areas * dens))


def boundary_penalty(u: VectorField, spec, params: HiblerParams):
    """Boundary penalization: recession of ``-trace(u) (x)_T nu`` (2-pt Gauss)."""
    base = spec.base if isinstance(spec, integrands.RegularizedIntegrand) else spec
    mesh = u.mesh
    a = u.values[mesh.boundary_edges[:, 0]]
    b = u.values[mesh.boundary_edges[:, 1]]
    nu = mesh.boundary_normals
    gp = 0.5 + np.array([-1.0, 1.0]) / (2.0 * np.sqrt(3.0))
    total = np.zeros(len(nu))
    for t in gp:
        ug = (1.0 - t) * a + t * b
        z = algebra.tensor_product_T(-ug, nu, params)
        total += 0.5 * integrands.recession(base, z)
    return float(np.sum(mesh.boundary_lengths * total))


def relaxed_energy(u: VectorField, spec, params: HiblerParams):
    """Bulk plus boundary penalization; equals the bulk for zero-trace fields.

    A delta-regularized integrand has no finite recession, so it is only
    accepted here when the boundary term vanishes.
    """
    if isinstance(spec, integrands.RegularizedIntegrand) and spec.delta > 0.0:
        if not u.zero_trace:
            raise ConfigurationError(
                "relaxed energy of a delta-regularized density needs a zero-trace field")
        return bulk_energy(u, spec, params)
    return bulk_energy(u, spec, params) + boundary_penalty(u, spec, params)


def l2_inner(u: VectorField, v: VectorField):
    """Consistent-mass L2 inner product."""
    _check_same_mesh(u, v)
    op = get_operator(u.mesh, HiblerParams())
    return op.l2_inner(u.values, v.values)


def l2_norm(u: VectorField):
    return np.sqrt(max(l2_inner(u, u), 0.0))


def total_hibler_variation(u: VectorField, params: HiblerParams = HiblerParams()):
    """L1 mass of the Hibler deformation (discrete total deformation)."""
    tu = hibler_def(u, params)
    return float(np.sum(u.mesh.areas * tu.norms()))


def dual_h1_norm(g: VectorField):
    """W^{-1,2} norm of the functional represented by a nodal density."""
    op = get_operator(g.mesh, HiblerParams())
    return op.dual_h1_norm_vec(g.values)


def scale_by_cutoff(u: VectorField, cutoff: CollarCutoff):
    """Nodal product of a field with a collar cut-off."""
    return VectorField(u.mesh, cutoff.nodal_values[:, None] * u.values)


def poincare_probe(mesh: Mesh2D, params: HiblerParams, n_samples=128, seed=0,
                   extra_fields=None):
    """Empirical Poincare constant sup ||u||_L2 / |Tu|(Omega) over zero-trace fields.

    The candidate set mixes seeded random interior fields with smooth
    sinusoidal modes (the near-extremizers), so the estimate is stable under
    refinement.
    """
    rng = np.random.default_rng(seed)
    lo = mesh.nodes.min(axis=0)
    span = mesh.nodes.max(axis=0) - lo
    xi = (mesh.nodes - lo) / span
    candidates = []
    for _ in range(n_samples):
        v = rng.normal(size=(mesh.n_nodes, 2))
        v[mesh.boundary_node_mask] = 0.0
        candidates.append(v)
    for k in (1, 2):
        for m in (1, 2):
            s = np.sin(k * np.pi * xi[:, 0]) * np.sin(m * np.pi * xi[:, 1])
            for comp in range(2):
                v = np.zeros((mesh.n_nodes, 2))
                v[:, comp] = s
                v[mesh.boundary_node_mask] = 0.0
                candidates.append(v)
    if extra_fields is not None:
        candidates.extend(extra_fields)
    best = 0.0
    for v in candidates:
        u = VectorField(mesh, v)
        tv = total_hibler_variation(u, params)
        if tv > 0.0:
            best = max(best, l2_norm(u) / tv)
    return best
