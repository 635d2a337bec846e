"""Viscous-plastic sea-ice momentum solver and singular-limit verification harness.

Submodules import numpy lazily through here so the CLI can pin thread-count
environment variables before any numerical library loads.
"""

__version__ = "0.1.0"

_EXPORTS = {
    "HiblerParams": "algebra",
    "IntegrandSpec": "integrands",
    "RegularizedIntegrand": "integrands",
    "Mesh2D": "mesh",
    "build_rect_mesh": "mesh",
    "build_polygon_mesh": "mesh",
    "VectorField": "operators",
    "ElementTensorField": "operators",
    "SolverConfig": "solver",
    "Trajectory": "solver",
    "run_evolution": "solver",
    "ParamSchedule": "sweep",
    "SweepProblem": "sweep",
    "run_sweep": "sweep",
}

__all__ = sorted(_EXPORTS) + ["__version__"]


def __getattr__(name):
    if name in _EXPORTS:
        import importlib

        mod = importlib.import_module(f".{_EXPORTS[name]}", __name__)
        return getattr(mod, name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
