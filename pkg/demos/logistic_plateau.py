"""Adaptive VSSBDF2 on the logistic equation settles at the SBDF2 threshold.

The step-size controller keeps growing dt while the solution decays towards
u = 1. Once dt passes 4/(7r) the linearised scheme amplifies the deviation,
the error estimate rises and the controller backs off, so dt locks onto the
threshold and u stalls a small distance from the steady state.

    python3 demos/logistic_plateau.py
"""
import numpy as np

from imexstab import AdaptiveConfig, extract_dt_infinity, integrate
from imexstab.scalar_models import logistic_problem, logistic_threshold

for r in (0.5, 1.0, 2.0, 4.0):
    dt_star = logistic_threshold(r)
    cfg = AdaptiveConfig(tol=1e-6, range=1e-6 / 3, dt_max=2 * dt_star)
    traj = integrate(logistic_problem(r), np.array([0.01]), 0.0, 750.0, cfg)
    dti = extract_dt_infinity(traj.records, dt_max=cfg.dt_max)
    gap = abs(1.0 - traj.final_state[0])
    print(f"r = {r:<4g} dt* = {dt_star:.6f}  dt_inf = {dti.value:.6f}  "
          f"accepted = {len(traj.accepted):5d}  |1 - u(750)| = {gap:.2e}")
