"""Convex linear-growth energy densities and their regularizations.

The unregularized density ``F`` acts on packed symmetric matrices (see
:mod:`icevp.algebra`).  Its two-parameter regularization is

    ``F_eps(z) = sqrt(eps + F(z)^2)``,
    ``F_{delta,eps}(z) = F_eps(z) + (delta/2) |z|^2``,

smooth and strongly convex for ``delta > 0``.  Hessians are returned in
"weighted" coordinates ``(z11, sqrt2*z12, z22)`` in which the Frobenius inner
product is Euclidean; this is the convention the assembled solver operators
use.
"""

from dataclasses import dataclass

import numpy as np

from .algebra import fro_dot, fro_norm
from .errors import ConfigurationError, NonConvergenceError

NORM = "norm"
MOHR_COULOMB = "mohr_coulomb"
DISABLED = "disabled"

_KINDS = (NORM, MOHR_COULOMB, DISABLED)


@dataclass(frozen=True)
class IntegrandSpec:
    """Energy density selector: ``norm(P)``, ``mohr_coulomb(P, s0)`` or ``disabled``."""

    kind: str = NORM
    P: float = 2.0
    s0: float = 1.0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ConfigurationError(f"unknown integrand kind {self.kind!r}")
        if self.kind != DISABLED and not self.P > 0.0:
            raise ConfigurationError("integrand pressure P must be > 0")
        if self.kind == MOHR_COULOMB and not self.s0 > 0.0:
            raise ConfigurationError("mohr_coulomb strain threshold s0 must be > 0")

    @classmethod
    def norm(cls, P=2.0):
        return cls(NORM, P=P)

    @classmethod
    def mohr_coulomb(cls, P=2.0, s0=1.0):
        return cls(MOHR_COULOMB, P=P, s0=s0)

    @classmethod
    def disabled(cls):
        return cls(DISABLED)

    def to_dict(self):
        d = {"kind": self.kind, "P": self.P}
        if self.kind == MOHR_COULOMB:
            d["s0"] = self.s0
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], P=float(d.get("P", 2.0)), s0=float(d.get("s0", 1.0)))


@dataclass(frozen=True)
class RegularizedIntegrand:
    """``(eps, delta)``-regularization of a base density.

    ``eps`` smooths the kink at the yield set, ``delta`` adds the quadratic
    viscosity that makes each implicit step strongly convex.  The singular
    limit lowers both along the sweep schedule, never here.
    """

    base: IntegrandSpec
    eps: float
    delta: float = 0.0

    def __post_init__(self):
        if not self.eps > 0.0:
            raise ConfigurationError("eps must be > 0")
        if self.delta < 0.0:
            raise ConfigurationError("delta must be >= 0")


def eval_F(spec: IntegrandSpec, z):
    """Evaluate the base density; ``F(0) = 0`` for every kind."""
    r = fro_norm(z)
    return eval_F_radial(spec, r)


def eval_F_radial(spec: IntegrandSpec, r):
    """Base density as a function of the Frobenius norm (all kinds are radial)."""
    r = np.asarray(r, dtype=float)
    if spec.kind == NORM:
        return 0.5 * spec.P * r
    if spec.kind == MOHR_COULOMB:
        quad = spec.P / (4.0 * spec.s0) * r ** 2
        lin = 0.5 * spec.P * (r - 0.5 * spec.s0)
        return np.where(r <= spec.s0, quad, lin)
    return np.zeros_like(r)


def _dF_radial(spec: IntegrandSpec, r):
    # scalar derivative dF/dr; for the norm kind this is P/2 for all r > 0
    r = np.asarray(r, dtype=float)
    if spec.kind == NORM:
        return np.full_like(r, 0.5 * spec.P)
    if spec.kind == MOHR_COULOMB:
        return np.where(r <= spec.s0, spec.P / (2.0 * spec.s0) * r, 0.5 * spec.P)
    return np.zeros_like(r)


def grad_F(spec: IntegrandSpec, z):
    """Gradient of the base density; undefined at 0 for the norm kind (kink).

    Returned as a packed symmetric matrix.  At ``z = 0`` the norm kind returns
    0 by convention; callers probing the relaxed evolution equation exclude
    that set via the admissibility tolerance.
    """
    z = np.asarray(z, dtype=float)
    r = fro_norm(z)
    safe = np.where(r > 0.0, r, 1.0)
    return (_dF_radial(spec, r) / safe * np.where(r > 0.0, 1.0, 0.0))[..., None] * z


def eval_F_eps(reg: RegularizedIntegrand, z):
    """``sqrt(eps + F(z)^2)`` (without the delta-quadratic part)."""
    f = eval_F(reg.base, z)
    return np.sqrt(reg.eps + f * f)


def eval_F_delta_eps(reg: RegularizedIntegrand, z):
    """Full regularized density ``F_eps + (delta/2)|z|^2``."""
    return eval_F_eps(reg, z) + 0.5 * reg.delta * fro_norm(z) ** 2


def grad_F_eps(reg: RegularizedIntegrand, z):
    """Gradient ``F F' / sqrt(eps + F^2)``; equals 0 at ``z = 0``.

    Uniformly bounded by ``sup |F'| = P/2``, which is what keeps the recovered
    stresses inside the yield surface at every eps.
    """
    z = np.asarray(z, dtype=float)
    r = fro_norm(z)
    f = eval_F_radial(reg.base, r)
    df = _dF_radial(reg.base, r)
    s = np.sqrt(reg.eps + f * f)
    safe = np.where(r > 0.0, r, 1.0)
    coef = np.where(r > 0.0, f * df / (s * safe), 0.0)
    return coef[..., None] * z


def grad_F_delta_eps(reg: RegularizedIntegrand, z):
    return grad_F_eps(reg, z) + reg.delta * np.asarray(z, dtype=float)


def _weighted(z):
    z = np.asarray(z, dtype=float)
    w = z.copy()
    w[..., 1] *= np.sqrt(2.0)
    return w


def hess_F_delta_eps(reg: RegularizedIntegrand, z):
    """Hessian of the full regularized density, weighted coordinates.

    Assembled as ``phi''(F) gF (x) gF + phi'(F) HF + delta I`` with
    ``phi(t) = sqrt(eps + t^2)``; the Mohr-Coulomb second derivative is the
    generalized (branchwise) one.  Positive definite for ``delta > 0``.
    Returns shape ``(..., 3, 3)``.
    """
    z = np.asarray(z, dtype=float)
    r = fro_norm(z)
    f = eval_F_radial(reg.base, r)
    df = _dF_radial(reg.base, r)
    s = np.sqrt(reg.eps + f * f)
    phi1 = f / s
    phi2 = reg.eps / s ** 3

    zw = _weighted(z)
    safe = np.where(r > 0.0, r, 1.0)
    zhat = zw / safe[..., None]
    on = np.where(r > 0.0, 1.0, 0.0)

    eye = np.eye(3)
    outer = zhat[..., :, None] * zhat[..., None, :]

    # radial F: grad = df * zhat, Hess = ddf * zhat(x)zhat + (df/r)(I - zhat(x)zhat)
    spec = reg.base
    if spec.kind == NORM:
        ddf = np.zeros_like(r)
    elif spec.kind == MOHR_COULOMB:
        ddf = np.where(r <= spec.s0, spec.P / (2.0 * spec.s0), 0.0)
    else:
        ddf = np.zeros_like(r)

    gF = (df * on)[..., None] * zhat
    tangential = (df / safe * on)[..., None, None] * (eye - outer)
    hF = (ddf * on)[..., None, None] * outer + tangential

    h = (phi2[..., None, None] * gF[..., :, None] * gF[..., None, :]
         + phi1[..., None, None] * hF
         + reg.delta * eye)
    return h


def recession(spec: IntegrandSpec, z):
    """Recession function ``lim_{t->0} t F(z/t)``; ``(P/2)|z|`` for the built-ins."""
    r = fro_norm(z)
    if spec.kind == DISABLED:
        return np.zeros_like(r)
    return 0.5 * spec.P * r


def recession_of_reg(reg: RegularizedIntegrand, z):
    """Recession of ``F_eps``; equals the recession of the base for every eps."""
    return recession(reg.base, z)


def recession_numeric(f, z, t1=1e-6, t2=1e-7, rtol=1e-4):
    """Numeric recession probe ``t * f(z/t)`` at two shrinking scales.

    ``f`` maps packed matrices to values.  Raises if the two samples disagree
    by more than ``rtol`` relative, which flags densities without linear
    growth.
    """
    z = np.asarray(z, dtype=float)
    a = t1 * f(z / t1)
    b = t2 * f(z / t2)
    scale = np.maximum(np.abs(a), np.abs(b))
    bad = np.abs(a - b) > rtol * np.maximum(scale, 1e-300)
    if np.any(bad):
        raise NonConvergenceError(
            "recession samples disagree: density is not of linear growth",
            residual=float(np.max(np.abs(a - b))))
    return b


def perspective(spec: IntegrandSpec, t, z):
    """Linear perspective ``t F(z/t)`` for ``t > 0``, recession at ``t = 0``.

    Continuous and jointly positively 1-homogeneous in ``(t, z)``.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0.0):
        raise ValueError("perspective requires t >= 0")
    z = np.asarray(z, dtype=float)
    tsafe = np.where(t > 0.0, t, 1.0)
    finite = tsafe[..., None] if z.ndim > t.ndim else tsafe
    val_pos = tsafe * eval_F(spec, z / finite)
    return np.where(t > 0.0, val_pos, recession(spec, z))


def coercivity_probe(reg: RegularizedIntegrand, samples, eta_grid=None, seed=0):
    """Empirical coercivity constants and subgradient domination check.

    Fits ``(c4, c5, c6)`` with ``c4 |z| - c5 <= F'_eps(z).z <= c6 (1 + |z|)``
    over the samples (``c5`` fixed to ``sqrt(eps)`` scaled by ``sup|F'|``,
    which is the analytic choice for the built-ins), and asserts the
    subgradient domination ``F'_eps(z).eta <= recession(eta)`` on a random
    grid.  Raises on violation with the offending sample.
    """
    if reg.base.kind == DISABLED:
        raise ConfigurationError("coercivity probe requires a coercive integrand")
    z = np.asarray(samples, dtype=float)
    g = grad_F_eps(reg, z)
    gz = fro_dot(g, z)
    r = fro_norm(z)
    c6 = float(np.max(gz / (1.0 + r)))
    c5 = np.sqrt(reg.eps)
    pos = r > 0.0
    c4 = float(np.min((gz[pos] + c5) / r[pos])) if np.any(pos) else 0.0

    if eta_grid is None:
        rng = np.random.default_rng(seed)
        eta_grid = rng.normal(size=(256, 3))
    eta = np.asarray(eta_grid, dtype=float)
    lhs = fro_dot(g[..., None, :], eta[None, ...]) if z.ndim == 2 else fro_dot(g, eta)
    rhs = recession(reg.base, eta)[None, :] if z.ndim == 2 else recession(reg.base, eta)
    slack = lhs - rhs
    worst = float(np.max(slack))
    if worst > 1e-10 * max(1.0, float(np.max(np.abs(rhs)))):
        idx = np.unravel_index(np.argmax(slack), slack.shape)
        raise NonConvergenceError(
            f"subgradient domination violated at sample index {idx}", residual=worst)
    return {"c4": c4, "c5": float(c5), "c6": c6, "domination_margin": -worst}
