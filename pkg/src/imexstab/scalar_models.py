"""Closed-form test models and the scalar SBDF2 stability theory.

The scalar theory concerns ``u' = lam*u + alpha*u`` with ``lam*u`` implicit and
``alpha*u`` explicit. Its two characteristic roots are the *spurious* root
``rho_plus`` (tends to 1/3 as dt -> 0) and the *essential* root ``rho_minus``
(tends to 1). Instability is possible only when ``alpha < 0`` and
``3*alpha < lam``, with threshold ``dt* = 4/(lam - 3*alpha)``.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import NumericFailure
from .imex_core import SplitProblem
from .mesh import Mesh, dirichlet_reduced, dxx_extreme_eigenvalues


@dataclass(frozen=True)
class ScalarSplit:
    lam: float  # implicit coefficient
    alpha: float  # explicit coefficient

    @property
    def decay_rate(self) -> float:
        return self.lam + self.alpha


@dataclass(frozen=True)
class Stability:
    """Verdict of a threshold analysis; ``dt_star`` is None when unconditional."""

    conditional: bool
    dt_star: Optional[float] = None
    case: Optional[int] = None

    @property
    def label(self) -> str:
        if not self.conditional:
            return "unconditional"
        return f"conditional(dt*={self.dt_star:.17g})"


UNCONDITIONAL = Stability(False)


def rho_roots(s: ScalarSplit, dt: float):
    """Return ``(rho_plus, rho_minus)`` as complex numbers."""
    lam, alpha = s.lam, s.alpha
    denom = -3.0 + 2.0 * dt * lam
    if denom == 0.0:
        raise NumericFailure("dt sits on the pole 3 = 2 dt lam", dt=dt)
    disc = 1.0 + 2.0 * dt * (1.0 + 2.0 * alpha * dt) * (alpha + lam)
    root = cmath.sqrt(disc)
    base = -2.0 - 2.0 * alpha * dt
    return (base + root) / denom, (base - root) / denom


def characteristic_polynomial(s: ScalarSplit, dt: float):
    """Coefficients of ``(3/2 - dt lam) rho^2 - (2 + 2 alpha dt) rho + (1/2 + alpha dt)``."""
    return (1.5 - dt * s.lam, -(2.0 + 2.0 * s.alpha * dt), 0.5 + s.alpha * dt)


def discriminant_roots(s: ScalarSplit):
    """``(dt_minus, dt_plus)``: where the roots switch between real and complex.

    Entries are None when the root is complex or not positive.
    """
    lam, alpha = s.lam, s.alpha
    if alpha == 0.0 or lam + alpha == 0.0:
        return None, None
    radicand = 1.0 - 4.0 * alpha / (lam + alpha)
    if radicand < 0:
        return None, None
    r = math.sqrt(radicand)
    out = []
    for sign in (-1.0, 1.0):
        dt = -(1.0 / (4.0 * alpha)) * (1.0 + sign * r)
        out.append(dt if dt > 0 else None)
    return out[0], out[1]


def stability_case(s: ScalarSplit) -> int:
    """Case number 1-5 of the scalar analysis (0 for a fully implicit split)."""
    lam, alpha = s.lam, s.alpha
    if lam + alpha >= 0:
        raise ValueError("the scalar theory needs lam + alpha < 0")
    if alpha == 0:
        return 0
    if alpha > 0:
        return 1
    if 3 * alpha > lam:
        return 2
    if 3 * alpha == lam:
        return 3
    return 5 if lam > 0 else 4


def classify_stability(s: ScalarSplit) -> Stability:
    case = stability_case(s)
    if case in (4, 5):
        return Stability(True, 4.0 / (s.lam - 3.0 * s.alpha), case)
    return Stability(False, None, case)


def iterate_recursion(s: ScalarSplit, dt: float, n_steps: int, u0=1.0, u1=None):
    """Run the scalar SBDF2 recursion and return the max |u| of the last 10% of steps."""
    a2, a1, a0 = characteristic_polynomial(s, dt)
    u_prev = float(u0)
    u_now = float(u1) if u1 is not None else u0 * 0.5
    tail = max(1, n_steps // 10)
    peak = 0.0
    for n in range(n_steps):
        u_new = -(a1 * u_now + a0 * u_prev) / a2
        u_prev, u_now = u_now, u_new
        if n >= n_steps - tail:
            peak = max(peak, abs(u_now))
        if not math.isfinite(u_now):
            return math.inf
    return peak


def logistic_problem(r: float) -> SplitProblem:
    """``u' = r u (1 - u)`` with ``r u`` implicit and ``-r u^2`` explicit."""
    if not r > 0:
        raise ValueError("r must be positive")
    return SplitProblem(lambda u, t: -r * u * u, np.array([[r]]), name=f"logistic(r={r:g})")


def logistic_threshold(r: float) -> float:
    return classify_stability(ScalarSplit(r, -2.0 * r)).dt_star


def scalar_problem(s: ScalarSplit) -> SplitProblem:
    return SplitProblem(lambda u, t: s.alpha * u, np.array([[s.lam]]), name="scalar")


def split_diffusion_threshold(D1: float, D2: float, lam_N: float) -> Stability:
    """``u_t = D1 u_xx (implicit) + D2 u_xx (explicit)``, Dirichlet, most negative mode ``lam_N``."""
    if D1 + D2 <= 0:
        raise ValueError("need D1 + D2 > 0")
    if not lam_N < 0:
        raise ValueError("lam_N must be negative")
    if D1 < 3 * D2:
        return Stability(True, 4.0 / (abs(lam_N) * (3 * D2 - D1)), 4)
    return UNCONDITIONAL


def sink_diffusion_threshold(D1: float, eps: float, lam_1: float) -> Stability:
    """``u_t = D1 u_xx (implicit) - u/eps^2 (explicit)``, lowest Dirichlet mode ``lam_1``."""
    if not (D1 > 0 and eps > 0 and lam_1 < 0):
        raise ValueError("need D1 > 0, eps > 0, lam_1 < 0")
    if eps * eps * D1 * abs(lam_1) < 3:
        return Stability(True, 4.0 / (D1 * lam_1 + 3.0 / eps**2), 4)
    return UNCONDITIONAL


def modal_threshold(D_implicit: float, D_explicit: float, sink: float, eigenvalues) -> Stability:
    """Minimise the scalar threshold over modes ``lam = D_implicit*mu``, ``alpha = D_explicit*mu - sink``."""
    best = None
    for mu in np.asarray(eigenvalues, dtype=float):
        st = classify_stability(ScalarSplit(D_implicit * mu, D_explicit * mu - sink))
        if st.conditional and (best is None or st.dt_star < best):
            best = st.dt_star
    return UNCONDITIONAL if best is None else Stability(True, best, 4)


def dirichlet_eigenvalues(mesh: Mesh) -> np.ndarray:
    op = dirichlet_reduced(mesh)
    return np.linalg.eigvals(op.toarray()).real


def split_diffusion_problem(D1: float, D2: float, mesh: Mesh) -> SplitProblem:
    """Heat equation on interior nodes with the diffusion split into implicit/explicit parts."""
    L = dirichlet_reduced(mesh).matrix
    L_explicit = (D2 * L).tocsr()
    return SplitProblem(lambda u, t: L_explicit @ u, (D1 * L).tocsr(),
                        name=f"split_diffusion(D1={D1:g},D2={D2:g})")


def sink_diffusion_problem(D1: float, eps: float, mesh: Mesh) -> SplitProblem:
    L = dirichlet_reduced(mesh).matrix
    k = 1.0 / eps**2
    return SplitProblem(lambda u, t: -k * u, (D1 * L).tocsr(),
                        name=f"sink_diffusion(D1={D1:g},eps={eps:g})")


def interior_sine(mesh: Mesh, k: int = 1) -> np.ndarray:
    return np.sin(k * np.pi * mesh.nodes[1:-1])


def extreme_dirichlet_eigenvalues(mesh: Mesh):
    return dxx_extreme_eigenvalues(dirichlet_reduced(mesh))
