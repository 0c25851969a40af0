"""Constant-step SBDF2, variable-step VSSBDF2 and an IMEX Euler starter.

All schemes treat a *linear* operator ``g(u) = G u`` implicitly and the
remaining term ``f(u, t)`` explicitly, so each stage costs one solve with
``c I - dt G``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NumericFailure


class ImexProblem:
    """Interface consumed by the steppers.

    Subclasses provide ``dim``, :meth:`eval_f`, :meth:`apply_g` and
    :meth:`solve_shifted`. :meth:`post_stage` is called on every stage
    result and may project the state back onto a constraint; the default is
    the identity.
    """

    dim: int

    def eval_f(self, u: np.ndarray, t: float) -> np.ndarray:
        raise NotImplementedError

    def apply_g(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def solve_shifted(self, c: float, dt: float, rhs: np.ndarray) -> np.ndarray:
        """Solve ``(c I - dt G) x = rhs``."""
        raise NotImplementedError

    def post_stage(self, u: np.ndarray, t: float) -> np.ndarray:
        return u

    def g_matrix(self) -> np.ndarray:
        """Dense matrix of the implicit operator, assembled column by column."""
        eye = np.eye(self.dim)
        return np.column_stack([self.apply_g(eye[:, j]) for j in range(self.dim)])

    def rhs(self, u, t=0.0):
        return self.eval_f(u, t) + self.apply_g(u)


class SplitProblem(ImexProblem):
    """``u' = f(u, t) + G u`` with a user callable ``f`` and a fixed matrix ``G``.

    ``G`` may be a dense array or a scipy sparse matrix. Tridiagonal sparse
    matrices are solved with a banded LU.
    """

    def __init__(self, f: Callable[[np.ndarray, float], np.ndarray], G, name: str = ""):
        self._f = f
        self.name = name
        if sp.issparse(G):
            self.G = G.tocsr()
            self._sparse = True
            n = self.G.shape[0]
            lower, diag, upper = self.G.diagonal(-1), self.G.diagonal(0), self.G.diagonal(1)
            nnz_tri = np.count_nonzero(lower) + np.count_nonzero(diag) + np.count_nonzero(upper)
            self._tridiagonal = nnz_tri == self.G.count_nonzero()
            if self._tridiagonal:
                self._bands = np.zeros((3, n))
                self._bands[0, 1:] = upper
                self._bands[1] = diag
                self._bands[2, :-1] = lower
        else:
            self.G = np.atleast_2d(np.asarray(G, dtype=float))
            self._sparse = False
            self._tridiagonal = False
        if self.G.shape[0] != self.G.shape[1]:
            raise ValueError("G must be square")
        self.dim = self.G.shape[0]

    def eval_f(self, u, t):
        return np.asarray(self._f(u, t), dtype=float).reshape(self.dim)

    def apply_g(self, u):
        return self.G @ u

    def g_matrix(self):
        return self.G.toarray() if self._sparse else self.G.copy()

    def solve_shifted(self, c, dt, rhs):
        return solve_shifted_matrix(self.G, c, dt, rhs, bands=self._bands if self._tridiagonal else None)


def solve_shifted_matrix(G, c, dt, rhs, bands=None):
    """Solve ``(c I - dt G) x = rhs`` for dense, sparse or banded ``G``."""
    rhs = np.asarray(rhs, dtype=float)
    n = rhs.shape[0]
    try:
        with np.errstate(all="raise"):
            if bands is not None:
                ab = -dt * bands
                ab[1] += c
                x = scipy.linalg.solve_banded((1, 1), ab, rhs, check_finite=False)
            elif sp.issparse(G):
                x = spla.spsolve((c * sp.identity(n, format="csc") - dt * G).tocsc(), rhs)
            else:
                x = np.linalg.solve(c * np.eye(n) - dt * G, rhs)
    except (np.linalg.LinAlgError, FloatingPointError, ValueError) as exc:
        raise NumericFailure(f"implicit system singular: {exc}", dt=dt, c=c) from exc
    if not np.all(np.isfinite(x)):
        raise NumericFailure("implicit solve produced non-finite values", dt=dt, c=c)
    return x


@dataclass
class StepperHistory:
    """Two time levels ``u_prev`` at ``t_now - dt_old`` and ``u_now`` at ``t_now``.

    ``f_prev`` / ``f_now`` optionally cache the explicit term at those levels.
    """

    u_prev: np.ndarray
    u_now: np.ndarray
    t_now: float
    dt_old: float
    f_prev: Optional[np.ndarray] = None
    f_now: Optional[np.ndarray] = None

    def __post_init__(self):
        if not self.dt_old > 0:
            raise ValueError("dt_old must be positive")
        if np.shape(self.u_prev) != np.shape(self.u_now):
            raise ValueError("history levels have different shapes")

    def explicit_terms(self, problem: ImexProblem):
        if self.f_prev is None:
            self.f_prev = problem.eval_f(self.u_prev, self.t_now - self.dt_old)
        if self.f_now is None:
            self.f_now = problem.eval_f(self.u_now, self.t_now)
        return self.f_prev, self.f_now


def vssbdf2_coefficients(omega: float):
    """Left-hand coefficients (new, now, prev) and explicit weights (now, prev)."""
    return (
        (1 + 2 * omega) / (1 + omega),
        1 + omega,
        omega * omega / (1 + omega),
        1 + omega,
        omega,
    )


def _multistep(problem, hist, dt, omega):
    if not dt > 0:
        raise ValueError("dt must be positive")
    if not np.isfinite(omega):
        raise ValueError("step ratio is not finite")
    a_new, a_now, a_prev, b_now, b_prev = vssbdf2_coefficients(omega)
    f_prev, f_now = hist.explicit_terms(problem)
    rhs = a_now * hist.u_now - a_prev * hist.u_prev + dt * (b_now * f_now - b_prev * f_prev)
    u_new = problem.solve_shifted(a_new, dt, rhs)
    return problem.post_stage(u_new, hist.t_now + dt)


def sbdf2_step(problem: ImexProblem, hist: StepperHistory, dt: float) -> np.ndarray:
    """One constant-step SBDF2 step; ``hist.dt_old`` is assumed equal to ``dt``."""
    return _multistep(problem, hist, dt, 1.0)


def vssbdf2_step(problem: ImexProblem, hist: StepperHistory, dt_now: float) -> np.ndarray:
    """One variable-step SBDF2 step with ratio ``dt_now / hist.dt_old``."""
    return _multistep(problem, hist, dt_now, dt_now / hist.dt_old)


def bootstrap_step(problem: ImexProblem, u0, t0: float, dt: float) -> np.ndarray:
    """IMEX Euler: ``(u1 - u0)/dt = G u1 + f(u0, t0)``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    u0 = np.asarray(u0, dtype=float)
    rhs = u0 + dt * problem.eval_f(u0, t0)
    u1 = problem.solve_shifted(1.0, dt, rhs)
    return problem.post_stage(u1, t0 + dt)


def sbdf2_residual(problem, u_prev, u_now, u_new, dt, t_now=0.0, omega=1.0):
    """Max-norm residual of the (VS)SBDF2 relation, relative to ``1 + |u_new|``."""
    a_new, a_now, a_prev, b_now, b_prev = vssbdf2_coefficients(omega)
    dt_old = dt / omega
    lhs = (a_new * u_new - a_now * u_now + a_prev * u_prev) / dt
    rhs = (
        b_now * problem.eval_f(u_now, t_now)
        - b_prev * problem.eval_f(u_prev, t_now - dt_old)
        + problem.apply_g(u_new)
    )
    return float(np.max(np.abs(lhs - rhs)) / (1 + np.max(np.abs(u_new))))


def run_sbdf2(problem: ImexProblem, u0, dt: float, n_steps: int, t0: float = 0.0, u1=None,
              callback=None):
    """Fixed-step SBDF2 for ``n_steps`` steps after an IMEX Euler start.

    Returns the final two levels as a :class:`StepperHistory`. ``callback(n, t, u)``
    is invoked on every new level when given.
    """
    u0 = np.asarray(u0, dtype=float)
    if u1 is None:
        u1 = bootstrap_step(problem, u0, t0, dt)
    hist = StepperHistory(u0, np.asarray(u1, dtype=float), t0 + dt, dt)
    for n in range(1, n_steps):
        u_new = sbdf2_step(problem, hist, dt)
        f_now = hist.f_now
        hist = StepperHistory(hist.u_now, u_new, hist.t_now + dt, dt, f_prev=f_now)
        if callback is not None:
            callback(n + 1, hist.t_now, u_new)
    return hist
