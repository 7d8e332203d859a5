"""The stationary picture checked against explicit time evolution on a
large lattice.

Run: python3 demos/05_time_of_flight.py  (about ten seconds)
"""
import math

import numpy as np

from lapscatter.lap import boundary_value
from lapscatter.model import build_model, build_rigging, site_potential
from lapscatter.scattering import lead_scattering_matrix, scatter_at, stationary_wave_operator
from lapscatter.sheaf import lattice_grid
from lapscatter.timedomain import PropagationConfig, lattice_hamiltonian, time_wave_operator, \
    transmission_by_flight, wave_packet

v = 0.5
model = build_model("lattice", L=40)
rig = build_rigging(model, "decay", 5)
print("transmission: stationary lead matrix against a packet sent through the impurity")
for lam in (-1.0, 0.0, 1.0):
    S = lead_scattering_matrix(scatter_at(boundary_value(model, rig, lam), site_potential(rig, {0: v})), rig)
    fr = transmission_by_flight({0: v}, lam, PropagationConfig())
    print(f"  lam={lam:+.1f}  stationary={abs(S[1, 0])**2:.8f}  flight={fr.transmission:.8f}  "
          f"mass defect={fr.mass_defect:.1e}")

L_big, M = 2000, 110
f = wave_packet(L_big, 0.0, -math.pi / 2, 8.0)
td = time_wave_operator(f, lattice_hamiltonian(L_big), lattice_hamiltonian(L_big, {0: v}), 400.0, -1)
box_model = build_model("lattice", L=M)
box = build_rigging(box_model, "decay", 2 * M + 1, sites=np.arange(-M, M + 1))
grid, weights = lattice_grid(120, -1.6, 1.6)
st = stationary_wave_operator(box_model, box, site_potential(box, {0: v}), f[L_big - M:L_big + M + 1],
                              grid, weights, sign=-1)
print(f"\nW- f: Cauchy tail {td.tail:.1e}, overlap with the stationary construction "
      f"{abs(np.vdot(td.vector[L_big - M:L_big + M + 1], st)):.10f}")
