"""Run configuration, persistence and output-directory management.

Configs are flat INI-style key/value files; their hash is taken over the
canonical sorted (section, key, value) listing, so it is stable under key
reordering.  Every output directory receives a manifest with the config
hash, package version and per-file checksums; all tabular output is CSV and
field snapshots are plain-text node/element tables (a legacy-ASCII
unstructured-grid listing).
"""

import configparser
import hashlib
import json
import os

import numpy as np

from . import __version__
from .algebra import HiblerParams
from .errors import ConfigurationError
from .forces import Forces, OceanConfig, load_forcing
from .integrands import IntegrandSpec, RegularizedIntegrand
from .mesh import Mesh2D, build_polygon_mesh, build_rect_mesh
from .operators import VectorField, hibler_def
from .solver import SolverConfig


class RunConfig:
    """Parsed and validated run configuration."""

    def __init__(self, parser: configparser.ConfigParser, base_dir="."):
        self.parser = parser
        self.base_dir = base_dir
        self._validate()

    @classmethod
    def from_file(cls, path):
        parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
        read = parser.read(path)
        if not read:
            raise ConfigurationError(f"config file {path} not found or unreadable")
        return cls(parser, base_dir=os.path.dirname(os.path.abspath(path)))

    @classmethod
    def from_string(cls, text, base_dir="."):
        parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
        parser.read_string(text)
        return cls(parser, base_dir=base_dir)

    # -- accessors ----------------------------------------------------------

    def _get(self, section, key, default=None, cast=str):
        if self.parser.has_option(section, key):
            return cast(self.parser.get(section, key))
        if default is None:
            raise ConfigurationError(f"missing config key [{section}] {key}")
        return default

    def hash(self):
        items = []
        for section in sorted(self.parser.sections()):
            for key in sorted(self.parser.options(section)):
                items.append(f"{section}.{key}={self.parser.get(section, key)}")
        return hashlib.sha256("\n".join(items).encode()).hexdigest()

    def seed(self):
        return self._get("output", "seed", default=0, cast=int)

    def build_mesh(self) -> Mesh2D:
        kind = self._get("domain", "kind", default="rect")
        if kind == "rect":
            return build_rect_mesh(self._get("domain", "nx", cast=int),
                                   self._get("domain", "ny", cast=int),
                                   self._get("domain", "lx", default=1.0, cast=float),
                                   self._get("domain", "ly", default=1.0, cast=float))
        if kind == "polygon":
            raw = self._get("domain", "vertices")
            verts = [tuple(map(float, chunk.split()))
                     for chunk in raw.split(";") if chunk.strip()]
            return build_polygon_mesh(verts,
                                      self._get("domain", "refine", default=0, cast=int))
        raise ConfigurationError(f"unknown domain kind {kind!r}")

    def hibler_params(self) -> HiblerParams:
        return HiblerParams(e=self._get("params", "e", default=2.0, cast=float),
                            P=self._get("params", "pressure", default=2.0, cast=float))

    def integrand(self) -> IntegrandSpec:
        kind = self._get("integrand", "kind", default="norm")
        P = self._get("integrand", "p", default=2.0, cast=float)
        if kind == "mohr_coulomb":
            return IntegrandSpec.mohr_coulomb(P, self._get("integrand", "s0",
                                                           default=1.0, cast=float))
        if kind == "norm":
            return IntegrandSpec.norm(P)
        raise ConfigurationError(f"unknown integrand kind {kind!r}")

    def regularized(self) -> RegularizedIntegrand:
        return RegularizedIntegrand(
            self.integrand(),
            eps=self._get("integrand", "eps", cast=float),
            delta=self._get("integrand", "delta", cast=float))

    def solver(self) -> SolverConfig:
        return SolverConfig(
            tau=self._get("solver", "tau", cast=float),
            t_end=self._get("solver", "t_end", cast=float),
            newton_tol=self._get("solver", "newton_tol", default=1e-11, cast=float),
            newton_max_iters=self._get("solver", "newton_max_iters", default=120,
                                       cast=int),
            linear_tol=self._get("solver", "linear_tol", default=1e-12, cast=float))

    def forces(self, mesh: Mesh2D) -> Forces:
        ocean = None
        if self.parser.has_section("ocean") and self._get(
                "ocean", "enabled", default="true").lower() in ("1", "true", "yes"):
            U = np.array([self._get("ocean", "u_x", default=0.0, cast=float),
                          self._get("ocean", "u_y", default=0.0, cast=float)])
            ocean = OceanConfig(
                c_drag=self._get("ocean", "c_drag", default=1.0, cast=float),
                gamma=self._get("ocean", "gamma", default=0.5, cast=float),
                N1=self._get("ocean", "n1", default=0.5, cast=float),
                N2=self._get("ocean", "n2", default=2.0, cast=float),
                theta=self._get("ocean", "theta", default=0.0, cast=float),
                U_ocean=U if np.any(U != 0.0) else None)
        f = None
        if self.parser.has_section("forcing"):
            kind = self._get("forcing", "kind", default="constant")
            if kind == "file":
                path = os.path.join(self.base_dir, self._get("forcing", "path"))
                f = load_forcing(path)
            elif kind == "constant":
                fx = self._get("forcing", "fx", default=0.0, cast=float)
                fy = self._get("forcing", "fy", default=0.0, cast=float)
                f = np.tile([fx, fy], (mesh.n_nodes, 1))
            elif kind == "band":
                amp = self._get("forcing", "amp", default=1.0, cast=float)
                y0 = self._get("forcing", "y0", default=0.35, cast=float)
                y1 = self._get("forcing", "y1", default=0.65, cast=float)
                y = mesh.nodes[:, 1]
                band = ((y > y0) & (y < y1)).astype(float)
                f = np.stack([amp * band, np.zeros_like(band)], axis=-1)
            else:
                raise ConfigurationError(f"unknown forcing kind {kind!r}")
        return Forces(f=f, ocean=ocean)

    def initial_field(self, mesh: Mesh2D) -> VectorField:
        kind = self._get("initial", "kind", default="bump")
        if kind == "bump":
            c = np.array([self._get("initial", "cx", default=0.5, cast=float),
                          self._get("initial", "cy", default=0.5, cast=float)])
            radius = self._get("initial", "radius", default=0.25, cast=float)
            amp = np.array([self._get("initial", "amp_x", default=1.0, cast=float),
                            self._get("initial", "amp_y", default=0.0, cast=float)])
            r = np.linalg.norm(mesh.nodes - c, axis=1) / radius
            prof = np.where(r < 1.0, (1.0 - np.minimum(r, 1.0) ** 2) ** 3, 0.0)
            return VectorField(mesh, prof[:, None] * amp)
        if kind == "zero":
            return VectorField.zero(mesh)
        if kind == "file":
            path = os.path.join(self.base_dir, self._get("initial", "path"))
            return read_velocity_table(mesh, path)
        raise ConfigurationError(f"unknown initial kind {kind!r}")

    def zeta(self):
        return self._get("initial", "zeta", default=0.0, cast=float)

    def snapshot_every(self):
        return self._get("output", "snapshot_every", default=0, cast=int)

    def _validate(self):
        # referenced files must exist (an I/O failure, not a config one);
        # numeric ranges are checked by the constructors the accessors call
        for section, key in (("forcing", "path"), ("initial", "path")):
            if self.parser.has_option(section, key):
                path = os.path.join(self.base_dir, self.parser.get(section, key))
                if not os.path.exists(path):
                    raise FileNotFoundError(f"referenced file missing: {path}")


# -- plain-text field tables -------------------------------------------------

def write_velocity_table(u: VectorField, path):
    """Node table: id, x, y, u1, u2 (17 significant digits)."""
    mesh = u.mesh
    with open(path, "w") as fh:
        fh.write("# node x y u1 u2\n")
        for i in range(mesh.n_nodes):
            x, y = mesh.nodes[i]
            u1, u2 = u.values[i]
            fh.write(f"{i} {float(x)!r} {float(y)!r} {float(u1)!r} {float(u2)!r}\n")


def read_velocity_table(mesh: Mesh2D, path):
    vals = np.zeros((mesh.n_nodes, 2))
    with open(path) as fh:
        for line in fh:
            if line.startswith("#") or not line.strip():
                continue
            parts = line.split()
            i = int(parts[0])
            vals[i] = (float(parts[3]), float(parts[4]))
    return VectorField(mesh, vals)


def write_deformation_table(u: VectorField, params: HiblerParams, path):
    """Element table: id, deformation entries and norm."""
    tu = hibler_def(u, params)
    norms = tu.norms()
    with open(path, "w") as fh:
        fh.write("# tri t11 t12 t22 tnorm\n")
        for e in range(u.mesh.n_triangles):
            c = tu.comps[e]
            fh.write(f"{e} {float(c[0])!r} {float(c[1])!r} {float(c[2])!r} "
                     f"{float(norms[e])!r}\n")


def write_stress_table(sigma_comps, half_P, path):
    """Element table of the physical stress plus the feasibility column."""
    comps = np.asarray(sigma_comps, dtype=float)
    from .algebra import fro_norm
    feas = fro_norm(comps)
    phys = half_P * comps
    with open(path, "w") as fh:
        fh.write("# tri s11 s12 s22 snorm sfeas\n")
        for e in range(len(comps)):
            c = phys[e]
            fh.write(f"{e} {float(c[0])!r} {float(c[1])!r} {float(c[2])!r} "
                     f"{float(half_P * feas[e])!r} {float(feas[e])!r}\n")


def write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_cell(row.get(k, "")) for k in header) + "\n")


def _cell(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, np.floating):
        return repr(float(v))
    return str(v)


# -- checkpoints, manifests, locks -------------------------------------------

def save_checkpoint(path, traj, config_hash):
    diag = {f"diag_{k}": np.asarray(v) for k, v in traj.diagnostics.items()
            if k not in ("tau", "delta")}
    np.savez(path, states=np.stack(traj.states), times=traj.times,
             config_hash=np.array(config_hash), **diag)


def load_checkpoint(path):
    data = np.load(path, allow_pickle=False)
    states = [data["states"][k] for k in range(len(data["states"]))]
    diag = {key[5:]: data[key] for key in data.files if key.startswith("diag_")}
    return states, diag, str(data["config_hash"])


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir, config_hash, extra=None):
    files = {}
    for name in sorted(os.listdir(out_dir)):
        full = os.path.join(out_dir, name)
        if os.path.isfile(full) and name not in ("manifest.json", "run.lock"):
            files[name] = sha256_file(full)
    manifest = {"config_hash": config_hash, "version": __version__, "files": files}
    if extra:
        manifest.update(extra)
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def verify_manifest(out_dir):
    with open(os.path.join(out_dir, "manifest.json")) as fh:
        manifest = json.load(fh)
    for name, digest in manifest["files"].items():
        if sha256_file(os.path.join(out_dir, name)) != digest:
            raise ConfigurationError(f"checksum mismatch for {name}")
    return manifest


class RunLock:
    """Exclusive ownership of a run directory via an O_EXCL lock file."""

    def __init__(self, out_dir):
        self.path = os.path.join(out_dir, "run.lock")
        self.fd = None

    def __enter__(self):
        try:
            self.fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
            os.write(self.fd, str(os.getpid()).encode())
        except FileExistsError:
            raise ConfigurationError(f"run directory is locked: {self.path}")
        return self

    def __exit__(self, *exc):
        if self.fd is not None:
            os.close(self.fd)
            os.unlink(self.path)
        return False
