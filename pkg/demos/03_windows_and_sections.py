"""Energy windows: per-window fibers, the unitaries that glue them, and the
norm of a vector recovered from its values across the spectrum.

Run: python3 demos/03_windows_and_sections.py
"""
import numpy as np

from lapscatter.model import build_model, build_rigging
from lapscatter.sheaf import (
    evaluate_section, gluing_unitary, quadrature_grid, schmidt_window, section_norm, windowed_evaluation,
)

model = build_model("quadrature", (0.0, 1.0), N=64)
rig = build_rigging(model, "decay", 4)
windows = [(0.2, 0.6), (0.4, 0.8), (0.3, 0.7)]
wd = {w: schmidt_window(model, rig, w) for w in windows}
for w, d in wd.items():
    print(f"window {w}: rank {d.rank}, leading Schmidt values {np.round(d.kappa[:3], 6)}")

ev = {w: windowed_evaluation(model, rig, wd[w], 0.5)[1] for w in windows}
a, b, c = windows
U_ba = gluing_unitary(0.5, wd[a], wd[b], ev[a], ev[b])
U_cb = gluing_unitary(0.5, wd[b], wd[c], ev[b], ev[c])
U_ca = gluing_unitary(0.5, wd[a], wd[c], ev[a], ev[c])
print(f"\ncocycle residual at 0.5: {np.max(np.abs(U_ca.U - U_cb.U @ U_ba.U)):.1e}")

grid, weights = quadrature_grid(model)
chain = [(0.3, 0.7), (0.1, 0.9), (-0.5, 1.5)]
g = np.array([1.0, -0.5j, 0.3, 0.2])
total, norms = section_norm(evaluate_section(model, rig, g, chain, grid, weights), chain)
print("section norm restricted to growing windows:", np.round(norms, 10))
print(f"full section norm {total:.12f}  vector norm {np.linalg.norm(rig.matrix().conj().T @ g):.12f}")
