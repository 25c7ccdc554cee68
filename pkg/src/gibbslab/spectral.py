"""One-body Schroedinger operator h = -Laplacian + V on a hard-wall grid.

Second-order central finite differences with Dirichlet walls at +-L.
Eigenvectors are stored with the quadrature weight dx^(d/2) folded in, so
a plain dot product of stored vectors is the L2 inner product and stored
vectors are orthonormal as bare numpy arrays.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

# Dense diagonalization below this many grid points, Lanczos above.
_DENSE_LIMIT = 1500
# Refuse grids that would not fit a desk machine.
MAX_GRID_POINTS = 300_000


class ConfigurationError(ValueError):
    """Bad construction parameters (grid, mode counts, potential)."""


class DomainError(ValueError):
    """Parameters outside the mathematical domain of an operation."""


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid on (-L, L)^d with hard Dirichlet walls at +-L."""

    dimension: int
    half_width: float
    points: int  # interior points per axis

    def __post_init__(self):
        if self.dimension not in (1, 2):
            raise ConfigurationError(f"dimension must be 1 or 2, got {self.dimension}")
        if self.half_width <= 0:
            raise ConfigurationError("half_width must be positive")
        if self.points < 8:
            raise ConfigurationError("need at least 8 points per axis")
        if self.points**self.dimension > MAX_GRID_POINTS:
            raise ConfigurationError(
                f"{self.points}^{self.dimension} grid points exceeds cap {MAX_GRID_POINTS}"
            )

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / (self.points + 1)

    @property
    def total_points(self) -> int:
        return self.points**self.dimension

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dimension

    def axis(self) -> np.ndarray:
        """Interior grid coordinates along one axis."""
        h = self.spacing
        return -self.half_width + h * np.arange(1, self.points + 1)

    def coordinates(self) -> np.ndarray:
        """(total_points, d) array of grid coordinates, row-major."""
        x = self.axis()
        if self.dimension == 1:
            return x[:, None]
        X, Y = np.meshgrid(x, x, indexing="ij")
        return np.column_stack([X.ravel(), Y.ravel()])


def _laplacian_1d(n: int, h: float) -> sp.csr_matrix:
    main = np.full(n, 2.0 / h**2)
    off = np.full(n - 1, -1.0 / h**2)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr")


def minus_laplacian(grid: GridSpec) -> sp.csr_matrix:
    """Sparse matrix of -Laplacian with Dirichlet walls."""
    L1 = _laplacian_1d(grid.points, grid.spacing)
    if grid.dimension == 1:
        return L1
    eye = sp.identity(grid.points, format="csr")
    return (sp.kron(L1, eye) + sp.kron(eye, L1)).tocsr()


def potential_values(grid: GridSpec, kind: str, s: float | None = None,
                     values: np.ndarray | None = None) -> np.ndarray:
    """Trap potential sampled on the grid.

    kind 'power' is |x|^s with s > 1, 'box' is zero inside the walls, and
    'custom' takes a precomputed array (used for renormalized reference
    operators built from a solved effective potential).
    """
    if kind == "box":
        return np.zeros(grid.total_points)
    if kind == "power":
        if s is None or s <= 1:
            raise ConfigurationError("power potential needs exponent s > 1")
        r = np.linalg.norm(grid.coordinates(), axis=1)
        return r**s
    if kind == "custom":
        v = np.asarray(values, dtype=float)
        if v.shape != (grid.total_points,):
            raise ConfigurationError("custom potential has wrong shape")
        return v
    raise ConfigurationError(f"unknown potential kind {kind!r}")


@dataclass(frozen=True)
class OneBodyOperator:
    """Spectral data of h = -Laplacian + V - shift on a grid.

    eigenvalues are ascending and already include the chemical shift;
    eigenvectors hold one stored (weight-folded) mode per column.
    """

    grid: GridSpec
    potential_kind: str
    potential_s: float | None
    potential: np.ndarray  # V on the grid, no shift
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # (total_points, J)
    shift: float = 0.0

    @property
    def num_modes(self) -> int:
        return len(self.eigenvalues)

    @property
    def unshifted_eigenvalues(self) -> np.ndarray:
        return self.eigenvalues + self.shift

    def hamiltonian(self) -> sp.csr_matrix:
        """Sparse h including the current shift."""
        H = minus_laplacian(self.grid) + sp.diags(self.potential - self.shift)
        return H.tocsr()

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(f"{self.grid.dimension}:{self.grid.half_width!r}:{self.grid.points}".encode())
        h.update(f"{self.potential_kind}:{self.potential_s!r}:{self.shift!r}".encode())
        h.update(np.ascontiguousarray(self.eigenvalues).tobytes())
        h.update(np.ascontiguousarray(self.eigenvectors).tobytes())
        return h.hexdigest()


def _fix_signs(vecs: np.ndarray) -> np.ndarray:
    """Deterministic sign convention: largest-magnitude entry positive."""
    idx = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vecs * signs


def build_one_body(grid: GridSpec, potential: str, num_eigs: int,
                   s: float | None = None,
                   potential_array: np.ndarray | None = None) -> OneBodyOperator:
    """Diagonalize -Laplacian + V and keep the num_eigs lowest eigenpairs."""
    if num_eigs < 1 or num_eigs > grid.total_points:
        raise ConfigurationError(
            f"num_eigs={num_eigs} out of range for {grid.total_points} grid points")
    V = potential_values(grid, potential, s=s, values=potential_array)
    H = minus_laplacian(grid) + sp.diags(V)

    n = grid.total_points
    if n <= _DENSE_LIMIT or num_eigs > n // 3:
        dense = H.toarray()
        vals, vecs = scipy.linalg.eigh(dense, subset_by_index=[0, num_eigs - 1])
    else:
        # Shift-invert at zero: h is positive definite (V >= 0, Dirichlet).
        # Fixed start vector keeps ARPACK output deterministic.
        v0 = np.ones(n)
        vals, vecs = spla.eigsh(H.tocsc(), k=num_eigs, sigma=0.0, which="LM", v0=v0)
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
    if not np.all(np.isfinite(vals)):
        raise RuntimeError("diagonalization produced non-finite eigenvalues")
    vecs = _fix_signs(np.ascontiguousarray(vecs))
    return OneBodyOperator(grid=grid, potential_kind=potential, potential_s=s,
                           potential=V, eigenvalues=vals, eigenvectors=vecs)


def shift_potential(op: OneBodyOperator, nu: float) -> OneBodyOperator:
    """Replace every eigenvalue by lambda_j - nu; eigenvectors unchanged."""
    if nu >= op.eigenvalues[0]:
        raise DomainError(
            f"shift nu={nu} >= lowest eigenvalue {op.eigenvalues[0]}: "
            "measure would be undefined")
    return OneBodyOperator(grid=op.grid, potential_kind=op.potential_kind,
                           potential_s=op.potential_s, potential=op.potential,
                           eigenvalues=op.eigenvalues - nu,
                           eigenvectors=op.eigenvectors,
                           shift=op.shift + nu)


@dataclass(frozen=True)
class SchattenTrace:
    """Partial sum of lambda_j^-p with a Weyl-type tail estimate."""

    p: float
    partial_sum: float
    tail_estimate: float
    growth_exponent: float  # fitted b in lambda_j ~ j^b
    likely_divergent: bool

    @property
    def total(self) -> float:
        return self.partial_sum + self.tail_estimate


def schatten_trace(op: OneBodyOperator, p: float) -> SchattenTrace:
    """Sum of lambda_j^-p over computed modes plus a crude tail bound.

    The tail uses a least-squares fit of log lambda_j against log j on the
    top quartile of the computed spectrum; the series is flagged likely
    divergent when the fitted growth exponent times p is <= 1.
    """
    if p <= 0:
        raise DomainError("p must be positive")
    lam = op.eigenvalues
    if np.any(lam <= 0):
        raise DomainError("all eigenvalues must be positive")
    partial = float(np.sum(lam**(-p)))

    J = len(lam)
    lo = max(3 * J // 4, 1)
    j = np.arange(lo, J + 1, dtype=float)
    slope, intercept = np.polyfit(np.log(j), np.log(lam[lo - 1:]), 1)
    b = float(slope)
    divergent = b * p <= 1.0
    if divergent:
        tail = np.inf
    else:
        # integral of (e^a j^b)^-p from J to infinity
        a = float(intercept)
        tail = float(np.exp(-a * p) * J**(1.0 - b * p) / (b * p - 1.0))
    return SchattenTrace(p=p, partial_sum=partial, tail_estimate=tail,
                         growth_exponent=b, likely_divergent=divergent)


@dataclass(frozen=True)
class GreenKernel:
    """Truncated Green kernel G_K = sum_j u_j u_j^T / lambda_j.

    matrix and diagonal use the stored (weight-folded) vectors, so the
    diagonal already carries the cell volume: summing it gives the trace.
    """

    mode_cutoff: int
    matrix: np.ndarray
    diagonal: np.ndarray = field(repr=False)

    def trace(self) -> float:
        return float(np.sum(self.diagonal))


def green_kernel(op: OneBodyOperator, K: int) -> GreenKernel:
    if K < 1 or K > op.num_modes:
        raise ConfigurationError(f"K={K} out of range (have {op.num_modes} modes)")
    U = op.eigenvectors[:, :K]
    G = (U / op.eigenvalues[:K]) @ U.T
    G = 0.5 * (G + G.T)
    return GreenKernel(mode_cutoff=K, matrix=G, diagonal=np.diag(G).copy())


def green_diagonal(op: OneBodyOperator, K: int) -> np.ndarray:
    """Diagonal of G_K without materializing the full kernel."""
    if K < 1 or K > op.num_modes:
        raise ConfigurationError(f"K={K} out of range (have {op.num_modes} modes)")
    U = op.eigenvectors[:, :K]
    return (U**2 / op.eigenvalues[:K]).sum(axis=1)
