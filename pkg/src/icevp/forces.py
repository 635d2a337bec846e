"""Atmospheric forcing and the cut-off oceanic drag.

The drag profile is linear near rest, decays like ``s^-gamma`` for large
relative speeds and is bridged by a cubic Hermite blend matching values and
slopes at both ends, so the whole profile is C^1; that keeps the drag map
globally Lipschitz and of sublinear growth, which is what the energy
estimates and the Gronwall uniqueness argument need.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ForcingParseError
from .mesh import Mesh2D
from .operators import VectorField


@dataclass
class OceanConfig:
    """Cut-off oceanic drag parameters plus the ocean velocity field."""

    c_drag: float = 1.0
    gamma: float = 0.5
    N1: float = 0.5
    N2: float = 2.0
    theta: float = 0.0
    U_ocean: object = None   # None (rest), (2,) constant, or callable t -> (N, 2)
    slope: float = None
    drag_override: object = None  # test-only hook replacing eta(s)

    def __post_init__(self):
        if not (0.0 < self.gamma < 1.0):
            raise ConfigurationError("gamma must lie in (0, 1)")
        if not (0.0 < self.N1 < self.N2):
            raise ConfigurationError("need 0 < N1 < N2")
        if not self.c_drag > 0.0:
            raise ConfigurationError("c_drag must be > 0")
        if self.slope is None:
            # outer branches have comparable magnitude at the blend
            self.slope = self.N2 ** (-self.gamma) / self.N1
        self._hermite = _hermite_coeffs(self)
        # for slope > 0 all four Hermite contributions are nonnegative, so the
        # profile can only dip below zero for pathological user slopes
        probe = np.concatenate([np.linspace(0.0, self.N1, 64),
                                np.linspace(self.N1, self.N2, 512)])
        vals = np.where(probe <= self.N1, self.slope * probe,
                        _blend_eval(self, probe))
        if np.any(vals < 0.0):
            raise ConfigurationError(
                f"drag profile dips below zero for (gamma={self.gamma}, N1={self.N1}, "
                f"N2={self.N2}, slope={self.slope}); adjust the linear slope")

    def rotation(self):
        c, s = np.cos(self.theta), np.sin(self.theta)
        return np.array([[c, -s], [s, c]])


def _hermite_coeffs(cfg):
    # cubic on [N1, N2] matching value/derivative of both outer branches
    h = cfg.N2 - cfg.N1
    p0 = cfg.slope * cfg.N1
    m0 = cfg.slope * h
    p1 = cfg.N2 ** (-cfg.gamma)
    m1 = -cfg.gamma * cfg.N2 ** (-cfg.gamma - 1.0) * h
    return p0, m0, p1, m1


def _blend_eval(cfg, s):
    p0, m0, p1, m1 = cfg._hermite
    t = (np.asarray(s, dtype=float) - cfg.N1) / (cfg.N2 - cfg.N1)
    h00 = 2 * t ** 3 - 3 * t ** 2 + 1
    h10 = t ** 3 - 2 * t ** 2 + t
    h01 = -2 * t ** 3 + 3 * t ** 2
    h11 = t ** 3 - t ** 2
    return h00 * p0 + h10 * m0 + h01 * p1 + h11 * m1


def eta_cutoff(cfg: OceanConfig, s):
    """C^1 drag profile: linear on [0, N1], Hermite blend, then ``s^-gamma``."""
    if cfg.drag_override is not None:
        return cfg.drag_override(np.asarray(s, dtype=float))
    s = np.asarray(s, dtype=float)
    if np.any(s < 0.0):
        raise ValueError("eta_cutoff requires s >= 0")
    out = np.where(s <= cfg.N1, cfg.slope * s,
                   np.where(s >= cfg.N2,
                            np.power(np.maximum(s, cfg.N2), -cfg.gamma),
                            _blend_eval(cfg, np.clip(s, cfg.N1, cfg.N2))))
    return out


def drag_lipschitz_bound(cfg: OceanConfig, n_grid=4096):
    """Upper bound for the Lipschitz constant of ``w -> c eta(|w|) R w``.

    The Jacobian operator norm is ``c * max(eta(s), |d/ds (s eta(s))|)``;
    sampled over a fine grid plus the analytic outer branches.
    """
    s = np.linspace(1e-9, 3.0 * cfg.N2, n_grid)
    eta = eta_cutoff(cfg, s)
    seta = s * eta
    deriv = np.abs(np.gradient(seta, s))
    grid = np.max(np.maximum(eta, deriv))
    outer = (1.0 - cfg.gamma) * cfg.N2 ** (-cfg.gamma)  # |d/ds s^{1-gamma}| at N2
    linear = 2.0 * cfg.slope * cfg.N1
    return cfg.c_drag * max(grid, outer, linear) * 1.05


def ocean_velocity_at(cfg: OceanConfig, mesh: Mesh2D, t):
    if cfg.U_ocean is None:
        return np.zeros((mesh.n_nodes, 2))
    if callable(cfg.U_ocean):
        return np.asarray(cfg.U_ocean(t), dtype=float)
    U = np.asarray(cfg.U_ocean, dtype=float)
    if U.shape == (2,):
        return np.tile(U, (mesh.n_nodes, 1))
    return U


def tau_ocean(cfg: OceanConfig, u: VectorField, t=0.0):
    """Nodal drag ``c eta(|U - u|) R (U - u)``."""
    U = ocean_velocity_at(cfg, u.mesh, t)
    rel = U - u.values
    speed = np.linalg.norm(rel, axis=1)
    eta = eta_cutoff(cfg, speed)
    return VectorField(u.mesh, cfg.c_drag * eta[:, None] * (rel @ cfg.rotation().T))


@dataclass
class GriddedForcing:
    """Time-framed forcing on a uniform grid covering the mesh bounding box."""

    nx: int
    ny: int
    n_frames: int
    dt_frame: float
    data: np.ndarray  # (n_frames, nx, ny, 2)

    def interpolate(self, mesh: Mesh2D, t):
        """Bilinear in space, linear (clamped) in time."""
        if self.n_frames == 1:
            frame = self.data[0]
        else:
            s = np.clip(t / self.dt_frame, 0.0, self.n_frames - 1.0)
            k = int(np.clip(np.floor(s), 0, self.n_frames - 2))
            w = s - k
            frame = (1.0 - w) * self.data[k] + w * self.data[k + 1]
        lo = mesh.nodes.min(axis=0)
        hi = mesh.nodes.max(axis=0)
        span = np.where(hi > lo, hi - lo, 1.0)
        xi = (mesh.nodes - lo) / span
        fx = xi[:, 0] * (self.nx - 1)
        fy = xi[:, 1] * (self.ny - 1)
        i = np.clip(np.floor(fx).astype(int), 0, self.nx - 2) if self.nx > 1 else np.zeros(len(fx), int)
        j = np.clip(np.floor(fy).astype(int), 0, self.ny - 2) if self.ny > 1 else np.zeros(len(fy), int)
        ax = fx - i if self.nx > 1 else np.zeros_like(fx)
        ay = fy - j if self.ny > 1 else np.zeros_like(fy)
        i1 = np.minimum(i + 1, self.nx - 1)
        j1 = np.minimum(j + 1, self.ny - 1)
        out = ((1 - ax) * (1 - ay))[:, None] * frame[i, j] \
            + (ax * (1 - ay))[:, None] * frame[i1, j] \
            + ((1 - ax) * ay)[:, None] * frame[i, j1] \
            + (ax * ay)[:, None] * frame[i1, j1]
        return out


def load_forcing(path):
    """Parse the line-oriented forcing file.

    Header ``nx ny n_frames dt_frame``, then ``n_frames * nx * ny`` rows of
    ``i j f1 f2``.  Serialized with 17 significant digits, so a save/load
    round trip is bit exact.
    """
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ForcingParseError("empty forcing file", line=1)
    head = lines[0].split()
    if len(head) != 4:
        raise ForcingParseError("header must be 'nx ny n_frames dt_frame'", line=1)
    try:
        nx, ny, n_frames = int(head[0]), int(head[1]), int(head[2])
        dt_frame = float(head[3])
    except ValueError as exc:
        raise ForcingParseError(f"bad header: {exc}", line=1) from exc
    if nx < 1 or ny < 1 or n_frames < 1:
        raise ForcingParseError("grid and frame counts must be positive", line=1)
    expected = n_frames * nx * ny
    rows = lines[1:]
    if len(rows) < expected:
        raise ForcingParseError(f"expected {expected} data rows, found {len(rows)}",
                                line=len(lines))
    data = np.empty((n_frames, nx, ny, 2))
    seen = np.zeros((n_frames, nx, ny), dtype=bool)
    for k, row in enumerate(rows[:expected]):
        parts = row.split()
        lineno = k + 2
        if len(parts) != 4:
            raise ForcingParseError(f"row must be 'i j f1 f2', got {row!r}", line=lineno)
        try:
            i, j = int(parts[0]), int(parts[1])
            f1, f2 = float(parts[2]), float(parts[3])
        except ValueError as exc:
            raise ForcingParseError(f"unparseable row: {exc}", line=lineno) from exc
        if not (0 <= i < nx and 0 <= j < ny):
            raise ForcingParseError(f"grid index ({i},{j}) out of range", line=lineno)
        if not (np.isfinite(f1) and np.isfinite(f2)):
            raise ForcingParseError("NaN or inf in forcing data", line=lineno)
        frame = k // (nx * ny)
        data[frame, i, j] = (f1, f2)
        seen[frame, i, j] = True
    if not seen.all():
        raise ForcingParseError("incomplete frame: some grid points missing")
    return GriddedForcing(nx, ny, n_frames, dt_frame, data)


def save_forcing(forcing: GriddedForcing, path):
    with open(path, "w") as fh:
        fh.write(f"{forcing.nx} {forcing.ny} {forcing.n_frames} {float(forcing.dt_frame)!r}\n")
        for k in range(forcing.n_frames):
            for i in range(forcing.nx):
                for j in range(forcing.ny):
                    f1, f2 = forcing.data[k, i, j]
                    fh.write(f"{i} {j} {float(f1)!r} {float(f2)!r}\n")


@dataclass
class Forces:
    """Bundle of the body forcing and the optional ocean drag."""

    f: object = None      # None, (N,2) array, callable t -> (N,2), or GriddedForcing
    ocean: OceanConfig = None

    def body(self, mesh: Mesh2D, t):
        if self.f is None:
            return np.zeros((mesh.n_nodes, 2))
        if isinstance(self.f, GriddedForcing):
            return self.f.interpolate(mesh, t)
        if callable(self.f):
            return np.asarray(self.f(t), dtype=float)
        return np.asarray(self.f, dtype=float)

    def drag(self, u: VectorField, t):
        if self.ocean is None:
            return np.zeros_like(u.values)
        return tau_ocean(self.ocean, u, t).values
