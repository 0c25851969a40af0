"""Linear stability of SBDF2 about a PNP-FBV steady state, checked by the adaptive stepper.

For eps = 0.05 a single real eigenvalue leaves the unit disk through -1 and
the adaptive stepper's limiting step equals the threshold. For eps = 0.12 a
complex pair crosses instead; the controller then cycles around the threshold
rather than settling, and its mean step sits a few percent below it.

    python3 demos/pnp_threshold.py
"""
import numpy as np

from imexstab import AdaptiveConfig, extract_dt_infinity, integrate
from imexstab.mesh import build_uniform
from imexstab.pnp_fbv import PnpParams
from imexstab.stability import compare_deviation_to_eigvec
from imexstab.sweep import threshold_for

mesh = build_uniform(90)
cfg = AdaptiveConfig(tol=1e-6, range=1e-6 / 3, dt_max=1.0)

for eps in (0.05, 0.12):
    problem, u_ss, rep = threshold_for(PnpParams(eps=eps, v=2.0), mesh)
    print(f"eps = {eps}:")
    print(f"  dt* = {rep.dt_star:.6e}  crossing = {rep.crossing}  "
          f"eigenvalue = {rep.critical_eigenvalue:.5f}")
    traj = integrate(problem, problem.initial_state(), 0.0, 100.0, cfg, stride=1)
    dti = extract_dt_infinity(traj.records, dt_max=cfg.dt_max)
    print(f"  adaptive dt_inf = {dti.value:.6e} ({dti.reason}), ratio {dti.value / rep.dt_star:.4f}")
    align = compare_deviation_to_eigvec(traj.final_state, u_ss, rep.critical_eigvec)
    mp, mm = problem.masses(traj.final_state)
    print(f"  |<deviation, critical eigenvector>| = {align:.4f}; mass(c-) = {mm:.12f}")
    lo, hi = np.min(traj.accepted_dts()[-101:-1]), np.max(traj.accepted_dts()[-101:-1])
    print(f"  last 100 steps span {lo / rep.dt_star:.3f} .. {hi / rep.dt_star:.3f} dt*")
