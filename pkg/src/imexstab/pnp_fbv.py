"""Two-species PNP model with Frumkin-Butler-Volmer electrode kinetics.

Spatial discretisation is a vertex-centred finite volume scheme on the mesh
nodes: node ``i`` owns the dual cell between neighbouring midpoints, fluxes
live on cell midpoints. Diffusion is the implicit part (``g``), closed with
zero diffusive flux at both walls; electromigration and the full electrode
fluxes are the explicit part (``f``). The potential is not evolved; it is
re-solved from the concentrations whenever ``f`` is evaluated.

State packing is ``[c_plus | c_minus]`` (voltage drive) or
``[c_plus | c_minus | q]`` with ``q = phi_x(1)`` (current drive).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional

import numpy as np
import scipy.linalg

from .errors import NumericFailure
from .imex_core import ImexProblem
from .mesh import GHOST_CLOSED, Mesh, dxx_matrix

VOLTAGE = "voltage"
CURRENT = "current"
_EXP_LIMIT = 700.0


@dataclass(frozen=True)
class PnpParams:
    eps: float = 0.05
    delta: float = 1.0
    k_ca: float = 1.0
    k_cc: float = 1.0
    j_ra: float = 1.0
    j_rc: float = 1.0
    drive: str = VOLTAGE
    v: float = 2.0
    j_ext: float = 0.0

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.delta < 0:
            raise ValueError("delta must be nonnegative")
        for name in ("k_ca", "k_cc", "j_ra", "j_rc"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.drive not in (VOLTAGE, CURRENT):
            raise ValueError(f"drive must be {VOLTAGE!r} or {CURRENT!r}")

    def with_(self, **kw) -> "PnpParams":
        return replace(self, **kw)


class PnpState(NamedTuple):
    c_plus: np.ndarray
    c_minus: np.ndarray
    q: Optional[float] = None

    def pack(self) -> np.ndarray:
        parts = [self.c_plus, self.c_minus]
        if self.q is not None:
            parts.append([self.q])
        return np.concatenate(parts).astype(float)

    @classmethod
    def unpack(cls, u, n_nodes: int) -> "PnpState":
        u = np.asarray(u, dtype=float)
        if u.size == 2 * n_nodes:
            return cls(u[:n_nodes], u[n_nodes:])
        if u.size == 2 * n_nodes + 1:
            return cls(u[:n_nodes], u[n_nodes:2 * n_nodes], float(u[-1]))
        raise ValueError(f"state of length {u.size} does not fit {n_nodes} nodes")


class Potential(NamedTuple):
    phi: np.ndarray
    dphi_left: float
    dphi_right: float
    v: float  # cathode potential (applied, or recovered in current mode)
    residual: float  # max-norm of the discrete Poisson system residual


def fbv_fluxes(params: PnpParams, c_plus_0, c_plus_1, dphi_left, dphi_right):
    """Electrode reaction fluxes ``(F, G)`` at the anode (x=0) and cathode (x=1)."""
    if abs(dphi_left) > _EXP_LIMIT or abs(dphi_right) > _EXP_LIMIT:
        raise NumericFailure("Stern-layer potential drop overflows the exponentials",
                             dphi_left=dphi_left, dphi_right=dphi_right)
    F = 4 * params.k_ca * c_plus_0 * np.exp(-0.5 * dphi_left) - 4 * params.j_ra * np.exp(0.5 * dphi_left)
    G = 4 * params.k_cc * c_plus_1 * np.exp(-0.5 * dphi_right) - 4 * params.j_rc * np.exp(0.5 * dphi_right)
    return F, G


def _poisson_bands(params: PnpParams, mesh: Mesh):
    """Banded matrix (scipy ``solve_banded`` layout) of the discrete Poisson operator.

    Robin boundary rows are multiplied through by ``delta`` so that the
    ``delta -> 0`` limit is the Dirichlet row ``eps phi = eps v`` without
    any division by ``delta``.
    """
    eps, delta = params.eps, params.delta
    h = mesh.widths
    n = mesh.N
    ab = np.zeros((3, n))
    inv = eps**2 / h
    # row i: -eps^2 [ (phi_{i+1}-phi_i)/hr - (phi_i-phi_{i-1})/hl ] = V_i rho_i
    ab[1, :-1] += inv
    ab[1, 1:] += inv
    ab[0, 1:] = -inv  # super-diagonal
    ab[2, :-1] = -inv  # sub-diagonal
    ab[1, 0] = delta * inv[0] + eps
    ab[0, 1] = -delta * inv[0]
    if params.drive == VOLTAGE:
        ab[1, -1] = delta * inv[-1] + eps
        ab[2, -2] = -delta * inv[-1]
    return ab


def poisson_system(params: PnpParams, mesh: Mesh, c_plus, c_minus, q=None):
    """Banded matrix and right-hand side of the discrete Poisson problem."""
    ab = _poisson_bands(params, mesh)
    rhs = mesh.volumes * 0.5 * (np.asarray(c_plus) - np.asarray(c_minus))
    eps, delta = params.eps, params.delta
    rhs[0] *= delta
    if params.drive == VOLTAGE:
        rhs[-1] = delta * rhs[-1] + eps * params.v
    else:
        if q is None:
            raise ValueError("current drive needs q = phi_x(1)")
        rhs[-1] += eps**2 * q
    return ab, rhs


def _banded_matvec(ab, x):
    y = ab[1] * x
    y[:-1] += ab[0, 1:] * x[1:]
    y[1:] += ab[2, :-1] * x[:-1]
    return y


def solve_poisson(params: PnpParams, mesh: Mesh, c_plus, c_minus, q=None) -> Potential:
    """Potential from ``-eps^2 phi_xx = (c_plus - c_minus)/2`` with Stern-layer Robin walls.

    Voltage drive: ``-eps delta phi_x(0) = -phi(0)`` and ``eps delta phi_x(1) = v - phi(1)``.
    Current drive replaces the cathode condition by ``phi_x(1) = q`` and recovers
    ``v = phi(1) + eps delta q``.
    """
    ab, rhs = poisson_system(params, mesh, c_plus, c_minus, q)
    try:
        phi = scipy.linalg.solve_banded((1, 1), ab, rhs)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericFailure(f"Poisson system singular: {exc}") from exc
    if not np.all(np.isfinite(phi)):
        raise NumericFailure("Poisson solve produced non-finite potential")
    res = _banded_matvec(ab, phi) - rhs
    scale = max(1.0, float(np.max(np.abs(rhs))))
    if params.drive == VOLTAGE:
        v = params.v
    else:
        v = phi[-1] + params.eps * params.delta * q
    return Potential(phi, -phi[0], v - phi[-1], v, float(np.max(np.abs(res))) / scale)


def robin_residuals(params: PnpParams, mesh: Mesh, c_plus, c_minus, pot: Potential, q=None):
    """Residuals of the two discrete boundary rows of the Poisson system.

    The boundary rows are the half-cell Gauss balances into which the Robin
    (or Neumann) conditions are substituted.
    """
    ab, rhs = poisson_system(params, mesh, c_plus, c_minus, q)
    r = _banded_matvec(ab, pot.phi) - rhs
    return float(r[0]), float(r[-1])


class PnpFbvProblem(ImexProblem):
    """The PNP-FBV system as an IMEX problem on a fixed mesh."""

    def __init__(self, params: PnpParams, mesh: Mesh):
        self.params = params
        self.mesh = mesh
        self.n = mesh.N
        self.current_mode = params.drive == CURRENT
        self.dim = 2 * self.n + (1 if self.current_mode else 0)
        self.lap = dxx_matrix(mesh, GHOST_CLOSED)
        lower, diag, upper = self.lap.bands()
        self._bands = np.zeros((3, self.n))
        self._bands[0, 1:] = upper[:-1]
        self._bands[1] = diag
        self._bands[2, :-1] = lower[1:]
        self._vol = mesh.volumes
        self._h = mesh.widths

    # -- potential ---------------------------------------------------------
    def split(self, u) -> PnpState:
        return PnpState.unpack(u, self.n)

    def potential(self, u) -> Potential:
        s = self.split(u)
        return solve_poisson(self.params, self.mesh, s.c_plus, s.c_minus, s.q)

    # -- explicit part -----------------------------------------------------
    def _migration_divergence(self, c, z, dphi_half, flux_left, flux_right):
        c_half = 0.5 * (c[1:] + c[:-1])
        J = -z * c_half * dphi_half  # migration flux on midpoints
        inflow = np.empty(self.n + 1)
        inflow[0] = flux_left
        inflow[1:-1] = J
        inflow[-1] = flux_right
        return -(inflow[1:] - inflow[:-1]) / self._vol

    def eval_f(self, u, t=0.0):
        p = self.params
        s = self.split(u)
        pot = solve_poisson(p, self.mesh, s.c_plus, s.c_minus, s.q)
        dphi_half = np.diff(pot.phi) / self._h
        F, G = fbv_fluxes(p, s.c_plus[0], s.c_plus[-1], pot.dphi_left, pot.dphi_right)
        out = np.empty(self.dim)
        # total flux J = -c_x - z c phi_x; at x=0 it equals -F, at x=1 it equals G
        out[: self.n] = self._migration_divergence(s.c_plus, 1.0, dphi_half, -F, G)
        out[self.n:2 * self.n] = self._migration_divergence(s.c_minus, -1.0, dphi_half, 0.0, 0.0)
        if self.current_mode:
            react = (p.k_cc * s.c_plus[-1] * np.exp(-0.5 * pot.dphi_right)
                     - p.j_rc * np.exp(0.5 * pot.dphi_right))
            out[-1] = -(2.0 / p.eps**2) * (p.j_ext - react)
        return out

    # -- implicit part -----------------------------------------------------
    def apply_g(self, u):
        u = np.asarray(u, dtype=float)
        out = np.zeros(self.dim)
        out[: self.n] = self.lap @ u[: self.n]
        out[self.n:2 * self.n] = self.lap @ u[self.n:2 * self.n]
        return out

    def g_matrix(self):
        G = np.zeros((self.dim, self.dim))
        L = self.lap.toarray()
        G[: self.n, : self.n] = L
        G[self.n:2 * self.n, self.n:2 * self.n] = L
        return G

    def solve_shifted(self, c, dt, rhs):
        rhs = np.asarray(rhs, dtype=float)
        ab = -dt * self._bands
        ab[1] += c
        out = np.empty(self.dim)
        try:
            with np.errstate(all="raise"):
                blocks = np.column_stack([rhs[: self.n], rhs[self.n:2 * self.n]])
                x = scipy.linalg.solve_banded((1, 1), ab, blocks, check_finite=False)
        except (np.linalg.LinAlgError, FloatingPointError, ValueError) as exc:
            raise NumericFailure(f"diffusion system singular: {exc}", dt=dt) from exc
        out[: self.n] = x[:, 0]
        out[self.n:2 * self.n] = x[:, 1]
        if self.current_mode:
            out[-1] = rhs[-1] / c
        return out

    # -- diagnostics -------------------------------------------------------
    def steady_residual(self, u) -> float:
        return float(np.max(np.abs(self.eval_f(u) + self.apply_g(u))))

    def masses(self, u):
        s = self.split(u)
        return self.mesh.integrate(s.c_plus), self.mesh.integrate(s.c_minus)

    def boundary_fluxes(self, u):
        s = self.split(u)
        pot = solve_poisson(self.params, self.mesh, s.c_plus, s.c_minus, s.q)
        return fbv_fluxes(self.params, s.c_plus[0], s.c_plus[-1], pot.dphi_left, pot.dphi_right)

    def conserved_weights(self):
        """Linear invariants ``w`` with ``w @ f = w @ g = 0``: the c_minus inventory."""
        w = np.zeros(self.dim)
        w[self.n:2 * self.n] = self._vol
        return [w]

    def min_concentration(self, u) -> float:
        s = self.split(u)
        return float(min(s.c_plus.min(), s.c_minus.min()))

    def initial_state(self) -> np.ndarray:
        return default_initial_state(self.params, self.mesh).pack()

    def snapshot_to_csv(self, u, path) -> None:
        s = self.split(u)
        pot = self.potential(u)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "c_plus", "c_minus", "phi"])
            for row in zip(self.mesh.nodes, s.c_plus, s.c_minus, pot.phi):
                w.writerow([f"{v:.17g}" for v in row])


def explicit_rhs(params, mesh, state, t=0.0):
    u = state.pack() if isinstance(state, PnpState) else state
    return PnpFbvProblem(params, mesh).eval_f(u, t)


def steady_residual(params, mesh, state) -> float:
    u = state.pack() if isinstance(state, PnpState) else state
    return PnpFbvProblem(params, mesh).steady_residual(u)


def default_initial_state(params: PnpParams, mesh: Mesh) -> PnpState:
    c = 1.0 + 0.1 * np.sin(2 * np.pi * mesh.nodes)
    return PnpState(c.copy(), c.copy(), 0.0 if params.drive == CURRENT else None)
