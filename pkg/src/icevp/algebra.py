"""Pointwise tensor calculus of the viscous-plastic sea-ice rheology.

Symmetric 2x2 matrices are stored as arrays of shape ``(..., 3)`` holding
``(a11, a12, a22)``; the off-diagonal entry is stored once.  All norms and
inner products are Frobenius (Hilbert-Schmidt), so ``|z|^2 = a11^2 + 2*a12^2
+ a22^2``.  Every routine is vectorized over leading dimensions and pure.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateStrainError

SQRT2 = np.sqrt(2.0)

# identity matrix in (a11, a12, a22) component order
IDENTITY = np.array([1.0, 0.0, 1.0])


@dataclass(frozen=True)
class HiblerParams:
    """Yield-ellipse axis ratio ``e`` and constant ice pressure ``P``.

    ``e = 2`` and ``P = 2`` are the package defaults: the classical ellipse
    ratio from the sea-ice literature, and the pressure that turns the energy
    density into the plain Frobenius norm (keeping unit tests in closed form).
    """

    e: float = 2.0
    P: float = 2.0

    def __post_init__(self):
        if not self.e >= 1.0:
            raise ValueError(f"yield-ellipse ratio e must be >= 1, got {self.e}")
        if not self.P > 0.0:
            raise ValueError(f"ice pressure P must be > 0, got {self.P}")


def sym2(a11, a12, a22):
    """Pack entries into the ``(..., 3)`` symmetric-matrix representation."""
    return np.stack(np.broadcast_arrays(
        np.asarray(a11, dtype=float),
        np.asarray(a12, dtype=float),
        np.asarray(a22, dtype=float)), axis=-1)


def from_matrix(m):
    """Convert ``(..., 2, 2)`` symmetric matrices to packed form."""
    m = np.asarray(m, dtype=float)
    return np.stack([m[..., 0, 0], 0.5 * (m[..., 0, 1] + m[..., 1, 0]), m[..., 1, 1]], axis=-1)


def to_matrix(z):
    """Expand packed form back to ``(..., 2, 2)`` matrices."""
    z = np.asarray(z, dtype=float)
    m = np.empty(z.shape[:-1] + (2, 2))
    m[..., 0, 0] = z[..., 0]
    m[..., 0, 1] = z[..., 1]
    m[..., 1, 0] = z[..., 1]
    m[..., 1, 1] = z[..., 2]
    return m


def fro_norm(z):
    """Frobenius norm; zero exactly when all entries vanish."""
    z = np.asarray(z)
    return np.sqrt(z[..., 0] ** 2 + 2.0 * z[..., 1] ** 2 + z[..., 2] ** 2)


def fro_dot(z, w):
    """Frobenius inner product ``z11*w11 + 2*z12*w12 + z22*w22``."""
    z = np.asarray(z)
    w = np.asarray(w)
    return z[..., 0] * w[..., 0] + 2.0 * z[..., 1] * w[..., 1] + z[..., 2] * w[..., 2]


def trace(z):
    return np.asarray(z)[..., 0] + np.asarray(z)[..., 2]


def deviatoric(z):
    """Trace-free part ``z - (tr z / 2) I``."""
    z = np.asarray(z, dtype=float)
    half_tr = 0.5 * trace(z)
    out = z.copy()
    out[..., 0] -= half_tr
    out[..., 2] -= half_tr
    return out


def sym_outer(a, b):
    """Symmetric tensor product ``(a (x) b + b (x) a) / 2`` in packed form."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return np.stack([
        a[..., 0] * b[..., 0],
        0.5 * (a[..., 0] * b[..., 1] + a[..., 1] * b[..., 0]),
        a[..., 1] * b[..., 1]], axis=-1)


def t_map(z, params: HiblerParams):
    """Apply the linear deformation map ``T[z] = (sqrt2/e) z^D + (1/sqrt2) tr(z) I``.

    Linear in ``z``; its Frobenius norm reproduces the elliptic yield
    magnitude, see :func:`delta_of`.
    """
    z = np.asarray(z, dtype=float)
    tr = trace(z)
    out = (SQRT2 / params.e) * deviatoric(z)
    out[..., 0] += tr / SQRT2
    out[..., 2] += tr / SQRT2
    return out


def delta_of(z, params: HiblerParams):
    """Elliptic yield magnitude of a strain rate.

    ``Delta(z)^2 = (z11^2 + z22^2)(1 + 1/e^2) + (4/e^2) z12^2
    + 2 z11 z22 (1 - 1/e^2)``; coincides with ``|T[z]|``.
    """
    z = np.asarray(z, dtype=float)
    inv_e2 = 1.0 / params.e ** 2
    q = ((z[..., 0] ** 2 + z[..., 2] ** 2) * (1.0 + inv_e2)
         + 4.0 * inv_e2 * z[..., 1] ** 2
         + 2.0 * z[..., 0] * z[..., 2] * (1.0 - inv_e2))
    # clip tiny negative round-off before the root
    return np.sqrt(np.maximum(q, 0.0))


def viscosities(z, params: HiblerParams):
    """Bulk and shear viscosities ``zeta = P / (2 Delta)``, ``eta = zeta / e^2``.

    Raises
    ------
    DegenerateStrainError
        If ``Delta(z) == 0`` anywhere: the unregularized viscosities are
        singular there and callers must go through the regularized integrand.
    """
    d = delta_of(z, params)
    if np.any(d == 0.0):
        raise DegenerateStrainError("Delta(z) = 0: viscosities are singular at this strain rate")
    zeta = params.P / (2.0 * d)
    return zeta, zeta / params.e ** 2


def stress_vp(z, params: HiblerParams):
    """Unregularized viscous-plastic stress.

    ``sigma = (2/e^2) zeta z^D + zeta (tr z - Delta(z)) I``, which already
    folds in the ``-(P/2) I`` pressure offset via ``zeta * Delta = P/2``.
    """
    z = np.asarray(z, dtype=float)
    zeta, _ = viscosities(z, params)
    d = delta_of(z, params)
    out = (2.0 / params.e ** 2) * zeta[..., None] * deviatoric(z)
    iso = zeta * (trace(z) - d)
    out[..., 0] += iso
    out[..., 2] += iso
    return out


def stress_duality_gap(z, w, params: HiblerParams):
    """Residual of the divergence-form identity behind the stress.

    For the full stress (pressure offset included) the pointwise content of
    the weak-form computation is ``sigma(z).w + (P/2) tr(w) = zeta T[z].T[w]``;
    the trace term integrates to zero against compactly supported fields.
    Returns the left minus the right side.
    """
    zeta, _ = viscosities(z, params)
    lhs = fro_dot(stress_vp(z, params), w) + 0.5 * params.P * trace(w)
    rhs = zeta * fro_dot(t_map(z, params), t_map(w, params))
    return lhs - rhs


def tensor_product_T(a, b, params: HiblerParams):
    """Operator-symbol tensor product ``a (x)_T b = T[a sym_outer b]``.

    Bilinear in ``(a, b)``; the boundary penalization integrand is built from
    it with ``a = -trace(u)`` and ``b`` the outer unit normal.
    """
    return t_map(sym_outer(a, b), params)


def t_singular_values(params: HiblerParams):
    """Extremal values of ``|T[z]| / |z|`` over symmetric matrices.

    In the orthogonal eigenbasis (off-diagonal, trace-free diagonal,
    identity directions) the map scales by ``sqrt2/e``, ``sqrt2/e`` and
    ``sqrt2``, hence the range is ``[sqrt2/e, sqrt2]``.
    """
    return SQRT2 / params.e, SQRT2


def _ratio_on_sphere(theta, phi, params):
    # chart of the unit sphere in packed coordinates with Frobenius norm:
    # z = sin(theta)cos(phi) * X1 + sin(theta)sin(phi) * X2 + cos(theta) * X3
    # with X1 = offdiag/sqrt2, X2 = diag(-1,1)/sqrt2, X3 = Id/sqrt2.
    st, ct = np.sin(theta), np.cos(theta)
    cp, sp = np.cos(phi), np.sin(phi)
    z = np.stack([
        (-st * sp + ct) / SQRT2,
        st * cp / SQRT2,
        (st * sp + ct) / SQRT2], axis=-1)
    return fro_norm(t_map(z, params))


def empirical_singular_range(params: HiblerParams, n_samples=100_000, seed=0, refine=True):
    """Brute-force estimate of min/max of ``|T[z]|/|z|`` over unit matrices.

    Samples the unit sphere uniformly and, with ``refine``, polishes the best
    candidates by a shrinking local grid search in spherical coordinates.
    Independent of :func:`t_singular_values`.
    """
    rng = np.random.default_rng(seed)
    v = rng.normal(size=(n_samples, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    theta = np.arccos(np.clip(v[:, 2], -1.0, 1.0))
    phi = np.arctan2(v[:, 1], v[:, 0])
    r = _ratio_on_sphere(theta, phi, params)
    lo_pt = [theta[np.argmin(r)], phi[np.argmin(r)]]
    hi_pt = [theta[np.argmax(r)], phi[np.argmax(r)]]
    lo, hi = float(np.min(r)), float(np.max(r))
    if refine:
        for pt, sign in ((lo_pt, 1.0), (hi_pt, -1.0)):
            width = 0.1
            for _ in range(60):
                th = pt[0] + width * np.linspace(-1.0, 1.0, 9)
                ph = pt[1] + width * np.linspace(-1.0, 1.0, 9)
                tg, pg = np.meshgrid(th, ph, indexing="ij")
                vals = sign * _ratio_on_sphere(tg, pg, params)
                i, j = np.unravel_index(np.argmin(vals), vals.shape)
                pt[0], pt[1] = tg[i, j], pg[i, j]
                width *= 0.5
            val = _ratio_on_sphere(pt[0], pt[1], params)
            if sign > 0:
                lo = min(lo, float(val))
            else:
                hi = max(hi, float(val))
    return lo, hi
