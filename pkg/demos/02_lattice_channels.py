"""Tight-binding chain: two scattering channels per energy and the
transmission through a single-site impurity.

Run: python3 demos/02_lattice_channels.py
"""
import numpy as np

from lapscatter.fiber import fiber_at
from lapscatter.lap import boundary_value
from lapscatter.model import build_model, build_rigging, site_potential
from lapscatter.scattering import lead_scattering_matrix, scatter_at

model = build_model("lattice", L=40)
rig = build_rigging(model, "decay", 5)
v = 0.5
P = site_potential(rig, {0: v})

print("fiber dimension and transmission |S_lr|^2 against 4 sin^2 t / (4 sin^2 t + v^2)")
for lam in np.linspace(-1.8, 1.8, 7):
    T0 = boundary_value(model, rig, lam)
    fib, _ = fiber_at(T0)
    S = lead_scattering_matrix(scatter_at(T0, P), rig)
    s2 = 1 - lam**2 / 4
    exact = 4 * s2 / (4 * s2 + v**2)
    print(f"  lam={lam:+.2f}  rank={fib.rank}  T={abs(S[1, 0])**2:.12f}  exact={exact:.12f}  "
          f"T+R={abs(S[1, 0])**2 + abs(S[0, 0])**2:.12f}")
