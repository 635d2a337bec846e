"""Polygonal domains, conforming triangulations, boundary data and cut-offs.

A ``Mesh2D`` is immutable after construction: nodes, positively oriented
triangles, boundary edges with outward normals, per-element barycentric
gradients and an exact per-node distance to the polygonal boundary.  The
collar cut-offs ramp linearly in that distance; the discrete mollifier is a
nodal-quadrature convolution with a compactly supported radial bump.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, GeometryError, MeshResolutionError, SupportViolationError


@dataclass(frozen=True)
class Mesh2D:
    nodes: np.ndarray          # (N, 2)
    triangles: np.ndarray      # (E, 3) int, positive orientation
    areas: np.ndarray = field(init=False)
    grads: np.ndarray = field(init=False)            # (E, 3, 2) barycentric gradients
    boundary_edges: np.ndarray = field(init=False)   # (B, 2) node indices, CCW along the boundary
    boundary_normals: np.ndarray = field(init=False)  # (B, 2) outward unit normals
    boundary_lengths: np.ndarray = field(init=False)
    boundary_node_mask: np.ndarray = field(init=False)
    node_boundary_distance: np.ndarray = field(init=False)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        tris = np.asarray(self.triangles, dtype=np.int64)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "triangles", tris)

        p0, p1, p2 = (nodes[tris[:, k]] for k in range(3))
        d1, d2 = p1 - p0, p2 - p0
        twice = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        if np.any(twice <= 0.0):
            raise ConfigurationError("every triangle must have positive area and orientation")
        areas = 0.5 * twice
        # gradient of barycentric coordinate a: rotate opposite edge by 90 deg / (2 area)
        grads = np.empty((len(tris), 3, 2))
        pts = (p0, p1, p2)
        for a in range(3):
            q1, q2 = pts[(a + 1) % 3], pts[(a + 2) % 3]
            edge = q2 - q1
            grads[:, a, 0] = -edge[:, 1] / twice
            grads[:, a, 1] = edge[:, 0] / twice
        object.__setattr__(self, "areas", areas)
        object.__setattr__(self, "grads", grads)

        edges, normals, lengths = _boundary_of(nodes, tris)
        object.__setattr__(self, "boundary_edges", edges)
        object.__setattr__(self, "boundary_normals", normals)
        object.__setattr__(self, "boundary_lengths", lengths)
        mask = np.zeros(len(nodes), dtype=bool)
        mask[edges.ravel()] = True
        object.__setattr__(self, "boundary_node_mask", mask)
        object.__setattr__(self, "node_boundary_distance",
                           _segment_distance(nodes, nodes[edges[:, 0]], nodes[edges[:, 1]]))

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @property
    def h_max(self):
        """Longest edge over all triangles."""
        p = self.nodes[self.triangles]
        e = np.concatenate([p[:, 1] - p[:, 0], p[:, 2] - p[:, 1], p[:, 0] - p[:, 2]])
        return float(np.max(np.linalg.norm(e, axis=1)))

    @property
    def interior_reach(self):
        """Largest node-to-boundary distance (empty collar check)."""
        return float(np.max(self.node_boundary_distance))

    def centroids(self):
        return self.nodes[self.triangles].mean(axis=1)

    def lumped_node_areas(self):
        w = np.zeros(self.n_nodes)
        np.add.at(w, self.triangles.ravel(), np.repeat(self.areas / 3.0, 3))
        return w


def _boundary_of(nodes, tris):
    # boundary edges appear in exactly one triangle; interior edges in two
    edges = {}
    for t, tri in enumerate(tris):
        for a in range(3):
            i, j = int(tri[a]), int(tri[(a + 1) % 3])
            key = (min(i, j), max(i, j))
            if key in edges:
                edges.pop(key)
            else:
                edges[key] = (i, j, int(tri[(a + 2) % 3]))
    if not edges:
        raise ConfigurationError("triangulation has no boundary")
    be = np.array([(i, j) for i, j, _ in edges.values()], dtype=np.int64)
    opp = np.array([k for _, _, k in edges.values()], dtype=np.int64)
    tang = nodes[be[:, 1]] - nodes[be[:, 0]]
    lengths = np.linalg.norm(tang, axis=1)
    normals = np.stack([tang[:, 1], -tang[:, 0]], axis=-1) / lengths[:, None]
    # flip any normal pointing toward the opposite vertex of its triangle
    inward = np.einsum("ij,ij->i", normals, nodes[opp] - nodes[be[:, 0]]) > 0.0
    normals[inward] *= -1.0
    return be, normals, lengths


def _segment_distance(x, a, b):
    # min over segments [a_k, b_k] of the distance from each point x_i
    x = np.atleast_2d(x)
    ab = b - a
    denom = np.einsum("kj,kj->k", ab, ab)
    diff = x[:, None, :] - a[None, :, :]
    t = np.clip(np.einsum("ikj,kj->ik", diff, ab) / denom[None, :], 0.0, 1.0)
    proj = a[None, :, :] + t[..., None] * ab[None, :, :]
    d = np.linalg.norm(x[:, None, :] - proj, axis=-1)
    return d.min(axis=1)


def build_rect_mesh(nx, ny, Lx, Ly):
    """Structured triangulation of ``[0,Lx] x [0,Ly]``.

    ``(nx+1)(ny+1)`` grid nodes; every cell is split along the same diagonal,
    which keeps the interior nodal-quadrature weights uniform (the discrete
    mollifier then commutes exactly with one-cell translations).
    """
    if nx < 1 or ny < 1 or not (Lx > 0.0 and Ly > 0.0):
        raise ConfigurationError("rect mesh needs nx, ny >= 1 and positive side lengths")
    xs = np.linspace(0.0, Lx, nx + 1)
    ys = np.linspace(0.0, Ly, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    nodes = np.stack([X.ravel(), Y.ravel()], axis=-1)

    def nid(i, j):
        return i * (ny + 1) + j

    tris = []
    for i in range(nx):
        for j in range(ny):
            n00, n10 = nid(i, j), nid(i + 1, j)
            n01, n11 = nid(i, j + 1), nid(i + 1, j + 1)
            tris.append((n00, n10, n11))
            tris.append((n00, n11, n01))
    return Mesh2D(nodes, np.array(tris), meta={"kind": "rect", "nx": nx, "ny": ny,
                                               "Lx": float(Lx), "Ly": float(Ly)})


def _cross2(a, b):
    return a[0] * b[1] - a[1] * b[0]


def build_polygon_mesh(vertices, refine_levels=0):
    """Ear-clipping triangulation of a simple polygon, uniformly refined.

    The distance-based collar is only justified on convex polygons; nonconvex
    input is accepted with ``meta["convex"] = False`` as a warning flag.
    """
    verts = np.asarray(vertices, dtype=float)
    if verts.ndim != 2 or verts.shape[0] < 3 or verts.shape[1] != 2:
        raise ConfigurationError("polygon needs at least 3 two-dimensional vertices")
    area2 = 0.0
    n = len(verts)
    for k in range(n):
        p, q = verts[k], verts[(k + 1) % n]
        area2 += p[0] * q[1] - p[1] * q[0]
    if area2 < 0.0:
        verts = verts[::-1].copy()
    convex = True
    for k in range(n):
        a, b, c = verts[k - 1], verts[k], verts[(k + 1) % n]
        if _cross2(b - a, c - b) < 0.0:
            convex = False
    tris = _ear_clip(verts)
    mesh = Mesh2D(verts, tris, meta={"kind": "polygon", "convex": convex})
    for _ in range(refine_levels):
        mesh = refine_uniform(mesh)
    return mesh


def _ear_clip(verts):
    n = len(verts)
    remaining = list(range(n))
    tris = []

    def is_ear(idx):
        m = len(remaining)
        a = verts[remaining[(idx - 1) % m]]
        b = verts[remaining[idx]]
        c = verts[remaining[(idx + 1) % m]]
        if _cross2(b - a, c - b) <= 1e-14:
            return False
        for other in remaining:
            if other in (remaining[(idx - 1) % m], remaining[idx], remaining[(idx + 1) % m]):
                continue
            p = verts[other]
            # point-in-triangle via barycentric orientation tests
            s1 = _cross2(b - a, p - a)
            s2 = _cross2(c - b, p - b)
            s3 = _cross2(a - c, p - c)
            if s1 >= -1e-14 and s2 >= -1e-14 and s3 >= -1e-14:
                return False
        return True

    guard = 0
    while len(remaining) > 3:
        m = len(remaining)
        for idx in range(m):
            if is_ear(idx):
                tris.append((remaining[(idx - 1) % m], remaining[idx],
                             remaining[(idx + 1) % m]))
                remaining.pop(idx)
                break
        else:
            raise ConfigurationError("polygon triangulation failed (self-intersecting input?)")
        guard += 1
        if guard > 10 * n:
            raise ConfigurationError("polygon triangulation did not terminate")
    tris.append(tuple(remaining))
    return np.array(tris)


def refine_uniform(mesh: Mesh2D):
    """Split every triangle into four via edge midpoints."""
    nodes = list(map(tuple, mesh.nodes))
    midpoint = {}
    new_nodes = mesh.nodes.tolist()

    def mid(i, j):
        key = (min(i, j), max(i, j))
        if key not in midpoint:
            midpoint[key] = len(new_nodes)
            new_nodes.append(((mesh.nodes[i] + mesh.nodes[j]) / 2.0).tolist())
        return midpoint[key]

    tris = []
    for i, j, k in mesh.triangles:
        a, b, c = mid(i, j), mid(j, k), mid(k, i)
        tris.extend([(i, a, c), (a, j, b), (c, b, k), (a, b, c)])
    del nodes
    return Mesh2D(np.array(new_nodes), np.array(tris), meta=dict(mesh.meta))


def boundary_distance(mesh: Mesh2D, x):
    """Exact Euclidean distance from a point inside the closed domain to the boundary."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    d = _segment_distance(pts, mesh.nodes[mesh.boundary_edges[:, 0]],
                          mesh.nodes[mesh.boundary_edges[:, 1]])
    inside = _contains(mesh, pts)
    if np.any(~inside):
        raise GeometryError("point outside the closed domain")
    return float(d[0]) if single else d


def _contains(mesh: Mesh2D, pts, tol=1e-12):
    p0 = mesh.nodes[mesh.triangles[:, 0]]
    g = mesh.grads
    # barycentric coords via lambda_a(x) = lambda_a(p0) + grad_a . (x - p0)
    inside = np.zeros(len(pts), dtype=bool)
    for e in range(mesh.n_triangles):
        lam1 = g[e, 1] @ (pts - p0[e]).T
        lam2 = g[e, 2] @ (pts - p0[e]).T
        lam0 = 1.0 - lam1 - lam2
        inside |= (lam0 >= -tol) & (lam1 >= -tol) & (lam2 >= -tol)
        if inside.all():
            break
    return inside


@dataclass(frozen=True)
class CollarCutoff:
    """Nodal boundary-collar cut-off, 0 on the boundary and 1 deep inside."""

    delta: float
    nodal_values: np.ndarray
    compact_support: bool


def eta_delta(mesh: Mesh2D, delta, compact=False):
    """Collar cut-off ramping over boundary distance ``delta``.

    Plain variant: ``min(dist/delta, 1)`` (gradient bound ``1/delta``).
    Compact variant: ``clamp(2*dist/delta - 1, 0, 1)`` which vanishes on the
    half-collar and still reaches 1 at distance ``delta`` (bound ``2/delta``).
    """
    if not delta > 0.0:
        raise ConfigurationError("delta must be > 0")
    if delta >= mesh.interior_reach:
        raise MeshResolutionError(
            f"delta={delta} leaves no interior region (reach {mesh.interior_reach:.3g})")
    d = mesh.node_boundary_distance
    if compact:
        vals = np.clip(2.0 * d / delta - 1.0, 0.0, 1.0)
    else:
        vals = np.minimum(d / delta, 1.0)
    return CollarCutoff(float(delta), vals, bool(compact))


def cutoff_element_gradients(mesh: Mesh2D, cutoff: CollarCutoff):
    """Per-element gradient vectors of the P1 interpolant of the cut-off."""
    vals = cutoff.nodal_values[mesh.triangles]
    return np.einsum("ea,eax->ex", vals, mesh.grads)


def mollifier_kernel(r, radius):
    """Radial bump ``(1 - (r/radius)^2)^3`` clipped at its support."""
    s = np.asarray(r, dtype=float) / radius
    return np.where(s < 1.0, (1.0 - np.minimum(s, 1.0) ** 2) ** 3, 0.0)


def mollify_nodal_field(mesh: Mesh2D, values, radius, preserve_support=False):
    """Discrete convolution of a nodal field with the normalized bump.

    Nodal-quadrature weights are the lumped node areas; the kernel is
    normalized by its discrete mass at the deepest interior node, so on a
    structured mesh the operation is exactly mass-preserving away from the
    boundary and commutes with interior translations.

    With ``preserve_support`` the input support must stay ``radius`` away
    from the boundary (raises otherwise), which keeps the output supported
    inside the domain.
    """
    if not radius > 0.0:
        raise ConfigurationError("mollifier radius must be > 0")
    vals = np.asarray(values, dtype=float)
    if vals.shape[0] != mesh.n_nodes:
        raise ConfigurationError("field length does not match node count")
    if preserve_support:
        mag = np.abs(vals) if vals.ndim == 1 else np.linalg.norm(vals, axis=1)
        supp = mag > 0.0
        if np.any(supp):
            clearance = float(np.min(mesh.node_boundary_distance[supp]))
            if clearance <= radius:
                raise SupportViolationError(
                    f"support clearance {clearance:.3g} <= mollifier radius {radius:.3g}")
    w = mesh.lumped_node_areas()
    ref = int(np.argmax(mesh.node_boundary_distance))
    dist_ref = np.linalg.norm(mesh.nodes - mesh.nodes[ref], axis=1)
    norm = float(np.sum(w * mollifier_kernel(dist_ref, radius)))
    if norm <= 0.0:
        raise MeshResolutionError("mollifier radius is below the nodal spacing")

    out = np.zeros_like(vals)
    # dense pairwise distances are fine at desk scale (N <= ~10^4)
    diff = mesh.nodes[:, None, :] - mesh.nodes[None, :, :]
    K = mollifier_kernel(np.linalg.norm(diff, axis=-1), radius)
    Kw = K * w[None, :] / norm
    out = Kw @ vals
    return out


def export_mesh(mesh: Mesh2D, path):
    """Plain-text node/element listing (one node or triangle per line)."""
    with open(path, "w") as fh:
        fh.write(f"nodes {mesh.n_nodes}\n")
        for i, (x, y) in enumerate(mesh.nodes):
            fh.write(f"{i} {float(x)!r} {float(y)!r}\n")
        fh.write(f"triangles {mesh.n_triangles}\n")
        for e, (i, j, k) in enumerate(mesh.triangles):
            fh.write(f"{e} {i} {j} {k}\n")
