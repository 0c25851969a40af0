"""Richardson extrapolation changes where the adaptive stepper settles.

The heat equation u_t = D1 u_xx + D2 u_xx with D2 explicit and D1 implicit is
conditionally stable under SBDF2 only when D2 > D1/3. Returning the
extrapolated solution instead of the coarse one moves the limiting step: it
imposes a limit even slightly below D2 = D1/3 and relaxes it for larger D2.

    python3 demos/richardson_split_diffusion.py
"""
import numpy as np

from imexstab.mesh import build_uniform
from imexstab.sweep import richardson_comparison

D1 = 2.0
grid = list(np.linspace(1.05 * D1 / 3, 2 * D1 / 3, 10)) + [0.6]
rc = richardson_comparison(D1, grid, build_uniform(20), t_end=3000.0)
print(f"{'D2':>6} {'dt*':>10} {'dt_inf':>10} {'dt_inf (RE)':>12}")
for p in rc.points:
    fmt = lambda v: f"{v:10.5f}" if v is not None else f"{'none':>10}"
    print(f"{p.D2:6.3f} {fmt(p.dt_star)} {fmt(p.dt_inf_plain)}   {fmt(p.dt_inf_richardson)}")
print(f"with extrapolation: 1/(|lam_N| dt_inf) = {rc.slope:.4f} D2 - {rc.offset:.4f} D1")
print(f"no step limit below D2/D1 = {rc.neutral_ratio:.4f}")
