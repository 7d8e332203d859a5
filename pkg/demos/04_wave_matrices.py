"""Wave matrices along a perturbation chain and the stability of the
trace-class proxy under truncation.

Run: python3 demos/04_wave_matrices.py
"""
import numpy as np

from lapscatter.lap import boundary_value
from lapscatter.model import build_model, build_rigging, site_potential
from lapscatter.scattering import multiplicativity_check, scatter_at, scatter_grid

model = build_model("lattice", L=40)
rig = build_rigging(model, "decay", 5)
P1, P2 = site_potential(rig, {0: 0.2}), site_potential(rig, {0: 0.3})

print("w(H0 -> H2) against w(H1 -> H2) w(H0 -> H1)")
for lam in (-1.5, -0.3, 0.6, 1.7):
    T0 = boundary_value(model, rig, lam)
    p = scatter_at(T0, P1)
    print(f"  lam={lam:+.1f}  chain residual={max(multiplicativity_check(lam, s, T0, P1, P2) for s in (1, -1)):.1e}"
          f"  construction gap={p.w_plus.construction_gap:.1e}  unitarity={p.w_plus.unitarity_defect:.1e}")

grid = np.linspace(-1.8, 1.8, 7)
print("\nnuclear norm of S - 1 as the auxiliary dimension grows")
for m in (5, 9, 13):
    r = build_rigging(model, "decay", m)
    nn = [p.S.nuclear_norm for p in scatter_grid(model, r, site_potential(r, {0: 0.5, 1: -0.4}), grid)]
    print(f"  m={m:2d}  " + "  ".join(f"{x:.8f}" for x in nn))
