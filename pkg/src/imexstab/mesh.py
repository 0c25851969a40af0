"""1D meshes on [0, 1] and second-difference operators on them."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .errors import NumericFailure

INTERIOR_ONLY = "interior-only"
GHOST_CLOSED = "ghost-closed"


@dataclass(frozen=True)
class Mesh:
    """Strictly increasing nodes with ``nodes[0] == 0`` and ``nodes[-1] == 1``."""

    nodes: np.ndarray
    name: str = ""

    def __post_init__(self):
        x = np.asarray(self.nodes, dtype=float)
        if x.ndim != 1 or x.size < 3:
            raise ValueError("a mesh needs at least 3 nodes")
        if x[0] != 0.0 or x[-1] != 1.0:
            raise ValueError("mesh must span [0, 1] exactly")
        if np.any(np.diff(x) <= 0):
            raise ValueError("mesh nodes must be strictly increasing")
        x.setflags(write=False)
        object.__setattr__(self, "nodes", x)

    @property
    def N(self) -> int:
        return self.nodes.size

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def volumes(self) -> np.ndarray:
        """Dual-cell lengths; also the trapezoid quadrature weights."""
        h = self.widths
        vol = np.empty(self.N)
        vol[0] = h[0] / 2
        vol[-1] = h[-1] / 2
        vol[1:-1] = (h[:-1] + h[1:]) / 2
        return vol

    def integrate(self, values) -> float:
        return float(np.dot(self.volumes, values))

    def to_csv(self, path) -> None:
        np.savetxt(path, self.nodes, fmt="%.17g")

    @classmethod
    def from_csv(cls, path, name: str = "") -> "Mesh":
        return cls(np.loadtxt(path, ndmin=1), name=name)


def build_uniform(n_cells: int) -> Mesh:
    if int(n_cells) != n_cells or n_cells < 2:
        raise ValueError(f"n_cells must be an integer >= 2, got {n_cells!r}")
    n_cells = int(n_cells)
    nodes = np.arange(n_cells + 1) / n_cells
    nodes[-1] = 1.0
    return Mesh(nodes, name=f"uniform{n_cells}")


def _count(length, dx, what):
    n = length / dx
    k = int(round(n))
    if k < 1 or abs(n - k) > 1e-9 * max(1.0, n):
        raise ValueError(f"{what}: {length} is not an integer multiple of {dx}")
    return k


def build_piecewise(edge_frac: float, dx_edge: float, dx_bulk: float) -> Mesh:
    """Spacing ``dx_edge`` on the two edge strips of width ``edge_frac``, ``dx_bulk`` between."""
    if not 0 < edge_frac < 0.5:
        raise ValueError("edge_frac must lie in (0, 1/2)")
    if dx_edge <= 0 or dx_bulk <= 0:
        raise ValueError("spacings must be positive")
    n_edge = _count(edge_frac, dx_edge, "edge strip")
    n_bulk = _count(1 - 2 * edge_frac, dx_bulk, "bulk")
    left = np.arange(n_edge + 1) * (edge_frac / n_edge)
    bulk = edge_frac + np.arange(1, n_bulk) * ((1 - 2 * edge_frac) / n_bulk)
    right = 1.0 - left[::-1]
    nodes = np.concatenate([left, bulk, right])
    nodes[0], nodes[-1] = 0.0, 1.0
    name = f"piecewise(edge={edge_frac:g},{n_edge}x{dx_edge:.6g},{n_bulk}x{dx_bulk:.6g})"
    return Mesh(nodes, name=name)


@dataclass(frozen=True)
class DiffOp:
    """Tridiagonal operator stored as a sparse matrix plus its boundary-row policy."""

    matrix: sp.csr_matrix
    policy: str
    dirichlet_reduced: bool = False

    def __matmul__(self, v):
        return self.matrix @ v

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def bands(self):
        """(lower, diag, upper) as length-N arrays, padded with zeros at the ends."""
        A = self.matrix.tocsr()
        n = A.shape[0]
        diag = A.diagonal().copy()
        lower = np.zeros(n)
        upper = np.zeros(n)
        lower[1:] = A.diagonal(-1)
        upper[:-1] = A.diagonal(1)
        return lower, diag, upper


def dxx_matrix(mesh: Mesh, policy: str = GHOST_CLOSED) -> DiffOp:
    """Three-point second difference on possibly nonuniform nodes.

    Interior rows use ``2/(hl(hl+hr)), -2/(hl hr), 2/(hr(hl+hr))``. With
    ``ghost-closed`` the boundary rows impose zero normal derivative through a
    reflected ghost node (half-cell flux balance, ``2/h^2`` on uniform meshes);
    ``interior-only`` leaves them zero.
    """
    if policy not in (INTERIOR_ONLY, GHOST_CLOSED):
        raise ValueError(f"unknown boundary-row policy {policy!r}")
    h = mesh.widths
    n = mesh.N
    lower = np.zeros(n - 1)
    diag = np.zeros(n)
    upper = np.zeros(n - 1)
    hl, hr = h[:-1], h[1:]
    lower[:-1] = 2 / (hl * (hl + hr))
    diag[1:-1] = -2 / (hl * hr)
    upper[1:] = 2 / (hr * (hl + hr))
    if policy == GHOST_CLOSED:
        diag[0] = -2 / h[0] ** 2
        upper[0] = 2 / h[0] ** 2
        diag[-1] = -2 / h[-1] ** 2
        lower[-1] = 2 / h[-1] ** 2
    A = sp.diags([lower, diag, upper], [-1, 0, 1], format="csr")
    return DiffOp(A, policy)


def dirichlet_reduced(mesh: Mesh) -> DiffOp:
    """Second difference on the interior nodes with homogeneous Dirichlet values."""
    A = dxx_matrix(mesh, INTERIOR_ONLY).matrix[1:-1, 1:-1]
    return DiffOp(A.tocsr(), INTERIOR_ONLY, dirichlet_reduced=True)


def dxx_extreme_eigenvalues(op: DiffOp):
    """Return ``(lam_1, lam_N)``: the eigenvalue nearest zero and the most negative one.

    The nonuniform stencil is similar to a symmetric tridiagonal matrix
    (diagonal scaling by the dual-cell volumes), so its spectrum is real.
    """
    lower, diag, upper = op.bands()
    prod = lower[1:] * upper[:-1]
    if np.any(prod < 0):
        raise NumericFailure("operator is not sign-symmetrizable")
    off = np.sqrt(prod)
    try:
        lam = scipy.linalg.eigvalsh_tridiagonal(diag, off)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericFailure(f"tridiagonal eigensolver failed: {exc}") from exc
    return float(lam[-1]), float(lam[0])


def first_difference(mesh: Mesh) -> sp.csr_matrix:
    """Centered first difference on interior nodes, one-sided at the ends."""
    h = mesh.widths
    n = mesh.N
    hl, hr = h[:-1], h[1:]
    lower = np.zeros(n - 1)
    diag = np.zeros(n)
    upper = np.zeros(n - 1)
    lower[:-1] = -hr / (hl * (hl + hr))
    diag[1:-1] = (hr - hl) / (hl * hr)
    upper[1:] = hl / (hr * (hl + hr))
    diag[0], upper[0] = -1 / h[0], 1 / h[0]
    lower[-1], diag[-1] = -1 / h[-1], 1 / h[-1]
    return sp.diags([lower, diag, upper], [-1, 0, 1], format="csr")
