"""Friedrichs model: boundary values of the sandwiched resolvent and the
scattering phase of a rank-one coupling.

Run: python3 demos/01_friedrichs.py
"""
import math

import numpy as np

from lapscatter.lap import boundary_value
from lapscatter.model import build_model, build_rigging, rank_one
from lapscatter.scattering import scatter_at

model = build_model("quadrature", (0.0, 1.0), N=64)
rig = build_rigging(model, "unit", 1)

print("boundary value T(lam + i0) against log((1 - lam) / lam) + i pi")
for lam in (0.1, 0.25, 0.5, 0.8):
    T = boundary_value(model, rig, lam).T[0, 0]
    exact = math.log((1 - lam) / lam) + 1j * math.pi
    print(f"  lam={lam:4.2f}  T={T:.10f}  error={abs(T - exact):.1e}")

v = 1 / math.pi
print(f"\nscattering matrix for coupling v = 1/pi (closed form at lam = 1/2 is -i)")
for lam in np.linspace(0.1, 0.9, 9):
    p = scatter_at(boundary_value(model, rig, lam), rank_one(rig, v))
    S = p.S.S[0, 0]
    print(f"  lam={lam:4.2f}  S={S.real:+.6f}{S.imag:+.6f}i  |S|={abs(S):.12f}  "
          f"stationary gap={p.stationary_gap:.1e}")
