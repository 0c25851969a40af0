"""Linear stability of SBDF2 about a steady state.

The scheme linearised about ``u_ss`` is the two-level recursion

    d^{n+1} = M_new M_now d^n + M_new M_old d^{n-1},
    M_new = (3/2 I - dt J_g)^{-1},  M_now = 2I + 2 dt J_f,  M_old = -1/2 I - dt J_f,

whose companion matrix ``[[0, I], [M_new M_old, M_new M_now]]`` has spectral
radius below one exactly when the steady state is a stable fixed point of the
scheme. :func:`find_threshold` locates the smallest ``dt`` at which the radius
reaches one.

Linear invariants of the dynamics (for PNP, the inventory of the unreacting
species) put an eigenvalue at exactly 1 for every ``dt``. Passing their
weight vectors as ``invariants`` restricts the analysis to perturbations that
leave them unchanged.
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from .errors import NumericFailure
from .imex_core import ImexProblem, vssbdf2_coefficients

REAL_MINUS_ONE = "real_minus_one"
REAL_PLUS_ONE = "real_plus_one"
COMPLEX_PAIR = "complex_pair"
NOT_FOUND = "no_threshold_found"


@dataclass
class Jacobians:
    J_f: np.ndarray
    J_g: np.ndarray
    u_ss: np.ndarray
    h: float
    invariants: List[np.ndarray] = field(default_factory=list)


def default_fd_step(u_ss) -> float:
    return 1e-6 * (1.0 + float(np.max(np.abs(u_ss))))


def numeric_jacobian_f(problem: ImexProblem, u_ss, h: Optional[float] = None, t: float = 0.0):
    """Centred-difference Jacobian of the explicit term, one column per basis vector."""
    u_ss = np.asarray(u_ss, dtype=float)
    if h is None:
        h = default_fd_step(u_ss)
    n = u_ss.size
    J = np.empty((problem.dim, n))
    for j in range(n):
        up = u_ss.copy()
        um = u_ss.copy()
        up[j] += h
        um[j] -= h
        try:
            J[:, j] = (problem.eval_f(up, t) - problem.eval_f(um, t)) / (2 * h)
        except Exception as exc:
            raise NumericFailure(f"explicit term failed while differencing column {j}: {exc}",
                                 column=j) from exc
    return J


def jacobians(problem: ImexProblem, u_ss, h: Optional[float] = None) -> Jacobians:
    """``J_f`` by centred differences, ``J_g`` assembled exactly from the linear operator."""
    u_ss = np.asarray(u_ss, dtype=float)
    if h is None:
        h = default_fd_step(u_ss)
    inv = problem.conserved_weights() if hasattr(problem, "conserved_weights") else []
    return Jacobians(numeric_jacobian_f(problem, u_ss, h), problem.g_matrix(), u_ss, h, list(inv))


def invariant_basis(dim: int, invariants: Sequence[np.ndarray]) -> Optional[np.ndarray]:
    """Orthonormal basis of the subspace annihilated by every invariant, or None."""
    if not invariants:
        return None
    W = np.atleast_2d(np.array(invariants, dtype=float))
    return scipy.linalg.null_space(W)


@dataclass
class CompanionSystem:
    A: np.ndarray
    dt: float
    M_new: np.ndarray
    M_now: np.ndarray
    M_old: np.ndarray

    @property
    def dim(self) -> int:
        return self.M_now.shape[0]


def build_companion(J_f, J_g, dt: float) -> CompanionSystem:
    J_f = np.atleast_2d(np.asarray(J_f, dtype=float))
    J_g = np.atleast_2d(np.asarray(J_g, dtype=float))
    n = J_f.shape[0]
    I = np.eye(n)
    try:
        with warnings.catch_warnings():
            # exact singularity is detected below and raised as NumericFailure
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            lu = scipy.linalg.lu_factor(1.5 * I - dt * J_g, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericFailure(f"3/2 I - dt J_g is singular: {exc}", dt=dt) from exc
    if np.any(np.abs(np.diag(lu[0])) < 1e-300):
        raise NumericFailure("3/2 I - dt J_g is singular", dt=dt)
    M_now = 2.0 * I + 2.0 * dt * J_f
    M_old = -0.5 * I - dt * J_f
    M_new = scipy.linalg.lu_solve(lu, I)
    A = np.zeros((2 * n, 2 * n))
    A[:n, n:] = I
    A[n:, :n] = M_new @ M_old
    A[n:, n:] = M_new @ M_now
    return CompanionSystem(A, dt, M_new, M_now, M_old)


class Eigenpair(NamedTuple):
    radius: float
    eigenvalue: complex
    eigvec: np.ndarray  # the d-half of the companion eigenvector, unit 2-norm


def normalize_eigvec(v) -> np.ndarray:
    """Unit 2-norm, phase fixed so the largest-magnitude entry is real and positive."""
    v = np.asarray(v, dtype=complex)
    v = v / np.linalg.norm(v)
    k = int(np.argmax(np.abs(v)))
    return v * (np.conj(v[k]) / abs(v[k]))


def spectral_radius(cs: CompanionSystem, vectors: bool = True) -> Eigenpair:
    """Largest eigenvalue modulus of the companion matrix with one maximising pair.

    Between a conjugate pair the member with nonnegative imaginary part is returned.
    """
    try:
        if vectors:
            w, V = scipy.linalg.eig(cs.A)
        else:
            w, V = scipy.linalg.eigvals(cs.A), None
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericFailure(f"eigensolver failed: {exc}", dt=cs.dt) from exc
    mags = np.abs(w)
    top = mags.max()
    ties = np.flatnonzero(mags >= top * (1 - 1e-12))
    k = max(ties, key=lambda i: (w[i].imag, -i))
    vec = normalize_eigvec(V[: cs.dim, k]) if V is not None else None
    return Eigenpair(float(top), complex(w[k]), vec)


@dataclass
class StabilityReport:
    dt_star: Optional[float]
    crossing: str
    critical_eigenvalue: Optional[complex]
    critical_eigvec: Optional[np.ndarray]
    radius_samples: List[Tuple[float, float]]
    bracket: Optional[Tuple[float, float]] = None
    status: str = "ok"

    @property
    def found(self) -> bool:
        return self.dt_star is not None

    @property
    def im_lambda(self) -> float:
        return 0.0 if self.critical_eigenvalue is None else abs(self.critical_eigenvalue.imag)

    def summary(self) -> str:
        lines = [f"status = {self.status}"]
        if self.found:
            lam = self.critical_eigenvalue
            lines += [
                f"dt_star = {self.dt_star:.17g}",
                f"crossing = {self.crossing}",
                f"critical_eigenvalue = {lam.real:.17g} {lam.imag:+.17g}i",
                f"bracket = {self.bracket[0]:.17g} {self.bracket[1]:.17g}",
            ]
        else:
            lines.append(f"crossing = {self.crossing}")
        return "\n".join(lines) + "\n"

    def samples_to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["dt", "spectral_radius"])
            for dt, r in self.radius_samples:
                w.writerow([f"{dt:.17g}", f"{r:.17g}"])

    def eigvec_to_csv(self, path, x=None) -> None:
        v = self.critical_eigvec
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "x", "re", "im"])
            for i, z in enumerate(v):
                xi = "" if x is None else f"{x[i % len(x)]:.17g}"
                w.writerow([i, xi, f"{z.real:.17g}", f"{z.imag:.17g}"])


class LinearizedScheme:
    """Companion-matrix evaluator for fixed Jacobians, optionally restricted by invariants."""

    def __init__(self, J_f, J_g, invariants: Sequence[np.ndarray] = ()):
        J_f = np.atleast_2d(np.asarray(J_f, dtype=float))
        J_g = np.atleast_2d(np.asarray(J_g, dtype=float))
        self.Q = invariant_basis(J_f.shape[0], invariants)
        if self.Q is not None:
            J_f = self.Q.T @ J_f @ self.Q
            J_g = self.Q.T @ J_g @ self.Q
        self.J_f, self.J_g = J_f, J_g

    def companion(self, dt) -> CompanionSystem:
        return build_companion(self.J_f, self.J_g, dt)

    def radius(self, dt, vectors=False) -> Eigenpair:
        pair = spectral_radius(self.companion(dt), vectors=vectors)
        if vectors and self.Q is not None:
            pair = pair._replace(eigvec=normalize_eigvec(self.Q @ pair.eigvec))
        return pair

    def eigenvalues(self, dt) -> np.ndarray:
        return scipy.linalg.eigvals(self.companion(dt).A)


def classify_crossing(lam: complex, tol: float = 1e-6) -> str:
    if abs(lam.imag) > tol:
        return COMPLEX_PAIR
    return REAL_MINUS_ONE if lam.real < 0 else REAL_PLUS_ONE


def find_threshold(J_f, J_g, dt_lo: float, dt_hi: float, rel_tol: float = 1e-6,
                   invariants: Sequence[np.ndarray] = (), scan_factor: float = 1.3) -> StabilityReport:
    """Scan ``dt`` geometrically from ``dt_lo`` and bisect the first radius crossing of 1.

    Failing to bracket a crossing below ``dt_hi`` is reported with status
    ``no threshold found`` and says nothing about larger steps.
    """
    if not 0 < dt_lo < dt_hi:
        raise ValueError("need 0 < dt_lo < dt_hi")
    scheme = LinearizedScheme(J_f, J_g, invariants)
    samples = []

    def rad(dt):
        r = scheme.radius(dt).radius
        samples.append((dt, r))
        return r

    if rad(dt_lo) >= 1.0:
        raise ValueError(f"spectral radius >= 1 at dt_lo={dt_lo:g}; dt_lo is not in the stable region")
    lo = dt_lo
    hi = None
    while lo < dt_hi:
        dt = min(lo * scan_factor, dt_hi)
        if rad(dt) >= 1.0:
            hi = dt
            break
        lo = dt
    if hi is None:
        return StabilityReport(None, NOT_FOUND, None, None, sorted(samples),
                               status=f"no threshold found <= {dt_hi:g}")
    while (hi - lo) > rel_tol * lo:
        mid = 0.5 * (lo + hi)
        if rad(mid) >= 1.0:
            hi = mid
        else:
            lo = mid
    dt_star = 0.5 * (lo + hi)
    pair = scheme.radius(hi, vectors=True)
    return StabilityReport(dt_star, classify_crossing(pair.eigenvalue), pair.eigenvalue,
                           pair.eigvec, sorted(samples), (lo, hi))


def analyze(problem: ImexProblem, u_ss, dt_lo: float, dt_hi: float, rel_tol: float = 1e-6,
            h: Optional[float] = None, scan_factor: float = 1.3) -> StabilityReport:
    jac = jacobians(problem, u_ss, h)
    return find_threshold(jac.J_f, jac.J_g, dt_lo, dt_hi, rel_tol, jac.invariants, scan_factor)


def compare_deviation_to_eigvec(u_tail, u_ss, critical_eigvec) -> float:
    """Modulus of the inner product between the unit deviation and the unit eigenvector."""
    d = np.asarray(u_tail, dtype=float) - np.asarray(u_ss, dtype=float)
    nd = np.linalg.norm(d)
    if nd == 0:
        return 0.0
    v = np.asarray(critical_eigvec, dtype=complex)
    v = v / np.linalg.norm(v)
    return float(min(1.0, abs(np.vdot(v, d / nd))))


def simulate_linear_recursion(cs: CompanionSystem, d0, d1, n_steps: int) -> np.ndarray:
    """Norms of ``d^n`` for the linearised recursion, n = 0..n_steps."""
    P = cs.M_new @ cs.M_now
    R = cs.M_new @ cs.M_old
    d_prev, d_now = np.asarray(d0, float), np.asarray(d1, float)
    norms = [np.linalg.norm(d_prev), np.linalg.norm(d_now)]
    for _ in range(n_steps - 1):
        d_prev, d_now = d_now, P @ d_now + R @ d_prev
        norms.append(np.linalg.norm(d_now))
    return np.array(norms)


def variable_step_growth_rate(scheme: LinearizedScheme, dts, burn_in: int = 0, seed: int = 0) -> float:
    """Mean log growth per step of the linearised VSSBDF2 along a step-size sequence.

    Zero means the sequence is neutral. For a constant sequence this tends to
    the log of the companion spectral radius at that step.
    """
    dts = np.asarray(dts, dtype=float)
    if dts.size < burn_in + 2:
        raise ValueError("step sequence shorter than burn_in + 2")
    J_f, J_g = scheme.J_f, scheme.J_g
    n = J_f.shape[0]
    eye = np.eye(n)
    rng = np.random.default_rng(seed)
    d_prev, d_now = rng.standard_normal(n), rng.standard_normal(n)
    total = 0.0
    for k in range(1, dts.size):
        dt = dts[k]
        a_new, a_now, a_prev, b_now, b_prev = vssbdf2_coefficients(dt / dts[k - 1])
        rhs = (a_now * eye + dt * b_now * J_f) @ d_now - (a_prev * eye + dt * b_prev * J_f) @ d_prev
        d_new = np.linalg.solve(a_new * eye - dt * J_g, rhs)
        scale = max(np.linalg.norm(d_new), np.linalg.norm(d_now))
        d_prev, d_now = d_now / scale, d_new / scale
        if k > burn_in:
            total += np.log(scale)
    return total / (dts.size - 1 - burn_in)
