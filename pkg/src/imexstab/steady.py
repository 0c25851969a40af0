"""Numerical steady states: long fixed-step SBDF2 runs with an optional Newton polish."""
from __future__ import annotations

from typing import NamedTuple, Optional

import numpy as np

from .errors import NumericFailure
from .imex_core import ImexProblem, StepperHistory, bootstrap_step, sbdf2_step
from .stability import jacobians


class SteadyState(NamedTuple):
    u: np.ndarray
    residual: float  # max-norm of f + g at u
    t: float  # time reached by the fixed-step run
    newton_iterations: int


def residual(problem: ImexProblem, u) -> float:
    return float(np.max(np.abs(problem.rhs(u))))


def relax(problem: ImexProblem, u0, dt: float, t_max: float, tol: float = 1e-10,
          check_every: int = 200, u1=None, rtol: float = 1e-13):
    """Fixed-step SBDF2 from ``u0`` until the steady residual drops below ``tol + rtol*|g(u)|``.

    Returns ``(u, t, residual)``. Raises :class:`NumericFailure` if the run
    blows up, which is what happens when ``dt`` is past the stability threshold.
    """
    u0 = np.asarray(u0, dtype=float)
    if u1 is None:
        u1 = bootstrap_step(problem, u0, 0.0, dt)
    hist = StepperHistory(u0, u1, dt, dt)
    n_max = int(np.ceil(t_max / dt))
    res = residual(problem, u1)
    start = res
    for n in range(1, n_max):
        u_new = sbdf2_step(problem, hist, dt)
        hist = StepperHistory(hist.u_now, u_new, hist.t_now + dt, dt, f_prev=hist.f_now)
        if n % check_every == 0:
            res = residual(problem, u_new)
            if not np.isfinite(res) or res > 1e6 * max(start, 1.0):
                raise NumericFailure("fixed-step run diverged", dt=dt, t=hist.t_now)
            if res < tol + rtol * float(np.max(np.abs(problem.apply_g(u_new)))):
                break
    res = residual(problem, hist.u_now)
    return hist.u_now, hist.t_now, res


def newton_polish(problem: ImexProblem, u, tol: float = 1e-13, max_iter: int = 6):
    """Newton iterations on ``f + g = 0``, bordered by the problem's linear invariants.

    Stops at ``tol`` or once an iteration fails to halve the residual (round-off
    floor), returning the best iterate as ``(u, iterations)``. Invariant values
    of ``u`` are left unchanged.
    """
    u = np.asarray(u, dtype=float).copy()
    W = problem.conserved_weights() if hasattr(problem, "conserved_weights") else []
    k = len(W)
    best = float(np.max(np.abs(problem.rhs(u))))
    it = 0
    for it in range(1, max_iter + 1):
        R = problem.rhs(u)
        if best < tol:
            return u, it - 1
        jac = jacobians(problem, u)
        J = jac.J_f + jac.J_g
        n = u.size
        if k:
            Wm = np.array(W)
            K = np.zeros((n + k, n + k))
            K[:n, :n] = J
            K[:n, n:] = Wm.T
            K[n:, :n] = Wm
            rhs = np.concatenate([-R, np.zeros(k)])
            try:
                delta = np.linalg.solve(K, rhs)[:n]
            except np.linalg.LinAlgError as exc:
                raise NumericFailure(f"singular Newton system: {exc}") from exc
        else:
            try:
                delta = np.linalg.solve(J, -R)
            except np.linalg.LinAlgError as exc:
                raise NumericFailure(f"singular Newton system: {exc}") from exc
        trial = u + delta
        res = float(np.max(np.abs(problem.rhs(trial))))
        if not res < 0.5 * best:
            return (trial, it) if res < best else (u, it - 1)
        u, best = trial, res
    return u, it


def find_steady_state(problem: ImexProblem, u0, dt: float, t_max: float = 100.0,
                      tol: float = 1e-10, polish: bool = True) -> SteadyState:
    """Relax with fixed-step SBDF2 at ``dt`` (which must be below the threshold), then polish."""
    u, t, _ = relax(problem, u0, dt, t_max, tol)
    iters = 0
    if polish:
        u, iters = newton_polish(problem, u)
    return SteadyState(u, residual(problem, u), t, iters)
