"""Threshold dt* across the Debye ratio at fixed voltage, with feature detection.

Sweeping eps over [0.05, 0.2] shows a window where a complex pair triggers
the instability. dt* has a corner where that window opens and a jump where
it closes. The same sweep is available from the command line:

    imexstab sweep --config demos/configs/eps_sweep.ini --out out/sweep

    python3 demos/epsilon_sweep.py   # takes a couple of minutes on one core
"""
import numpy as np

from imexstab.mesh import build_uniform
from imexstab.pnp_fbv import PnpParams
from imexstab.sweep import detect_features, epsilon_sweep, fit_power_law

mesh = build_uniform(90)
points = epsilon_sweep(PnpParams(eps=0.05, v=2.0), np.linspace(0.05, 0.2, 40), mesh)
for p in points:
    mark = "*" if p.crossing == "complex_pair" else " "
    print(f"{p.eps:.4f} {mark} dt* = {p.dt_star:.5e}")
feats = detect_features(points)
print("crossing changes near", [round(float(e), 4) for e in feats.crossing_change_eps])
print("jump near", [round(float(e), 4) for e in feats.jump_eps], " corner near", [round(float(e), 4) for e in feats.corner_eps])

small = [p for p in points if p.eps <= 0.1]
p_exp, c = fit_power_law([p.eps for p in small], [p.dt_star for p in small])
print(f"dt* ~ {c:.3f} eps^{p_exp:.3f} for eps <= 0.1")
