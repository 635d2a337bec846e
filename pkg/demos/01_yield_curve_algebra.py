#!/usr/bin/env python3
"""Pointwise rheology tour: deformation map, yield magnitude, stresses.

Walks through the closed-form identities the solver is built on, at a few
hand-checkable strain rates.
"""

import numpy as np

from icevp.algebra import (HiblerParams, delta_of, empirical_singular_range,
                           fro_norm, stress_vp, sym2, t_map, t_singular_values,
                           viscosities)

params = HiblerParams(e=2.0, P=2.0)

print("== deformation map and yield magnitude ==")
for label, z in [("uniform dilation", sym2(1, 0, 1)),
                 ("pure shear", sym2(0, 1, 0)),
                 ("mixed", sym2(1, 2, -1))]:
    tz = t_map(z, params)
    print(f"{label:>16}: |T z| = {fro_norm(tz):.6f}  Delta = {delta_of(z, params):.6f}")

print("\n== viscosities and stress at the mixed strain rate ==")
z = sym2(1, 2, -1)
zeta, eta = viscosities(z, params)
print(f"zeta = {zeta:.6f}  eta = {eta:.6f}")
print("sigma =", np.round(stress_vp(z, params), 6))

print("\n== norm equivalence of the deformation map ==")
lo, hi = t_singular_values(params)
elo, ehi = empirical_singular_range(params, n_samples=20000, seed=0)
print(f"closed form : [{lo:.8f}, {hi:.8f}]")
print(f"empirical   : [{elo:.8f}, {ehi:.8f}]")

print("\nuniform dilation sits on the yield curve: stress =",
      np.round(stress_vp(sym2(1, 0, 1), params), 12))
