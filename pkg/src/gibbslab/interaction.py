"""Pair interaction functionals on field samples.

Convolutions w * rho run on a zero-padded dual grid (linear convolution via
FFT, no wrap-around).  Densities follow the weight-folded convention of the
spectral module: |stored field|^2 already carries the cell volume, so the
quadrature of a double integral is a plain dot product with the convolved
density and the kernel is sampled raw at grid offsets.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft

from .gaussian import Ensemble, FieldSample, field_on_grid
from .spectral import ConfigurationError, GridSpec, OneBodyOperator, green_diagonal

# Dense K^4 tensors and mode-space quadratic forms are kept small.
MAX_TENSOR_MODES = 12


def _padded_shape(grid: GridSpec) -> tuple[int, ...]:
    P = scipy.fft.next_fast_len(2 * grid.points - 1)
    return (P,) * grid.dimension


def _offset_axis(points: int, P: int, h: float) -> np.ndarray:
    """Physical offsets for the circularly embedded difference kernel."""
    idx = np.arange(P)
    signed = np.where(idx <= P // 2, idx, idx - P)
    # offsets beyond +-(points-1) never mix into the linear convolution;
    # their kernel values are irrelevant but kept finite.
    return signed * h


@dataclass(frozen=True)
class PairPotential:
    """Even pair potential bound to a grid.

    kernel holds w at every offset of the padded difference grid;
    kernel_fft is its real FFT, reused by all convolutions.  w_hat_zero is
    the analytic integral of w; w_hat_grid tabulates the numerical Fourier
    transform on the dual grid.
    """

    kind: str
    params: dict
    grid: GridSpec
    kernel: np.ndarray = field(repr=False)
    kernel_fft: np.ndarray = field(repr=False)
    w_hat_zero: float
    w_hat_grid: np.ndarray = field(repr=False)
    w_hat_min: float

    @property
    def renormalization_safe(self) -> bool:
        return self.w_hat_min >= -1e-10


def make_pair_potential(kind: str, grid: GridSpec, amplitude: float = 1.0,
                        sigma: float = 1.0, table: np.ndarray | None = None) -> PairPotential:
    """Tabulate a pair potential and its transform on the padded grid.

    Kinds: 'gaussian-bump' a*exp(-|x|^2/(2 sigma^2)); 'grid-delta' a*delta_0
    collapsed to one grid cell (1D trace-class runs only); 'tabulated' radial
    (offset, value) pairs resampled by linear interpolation.
    """
    shape = _padded_shape(grid)
    h = grid.spacing
    axes = [_offset_axis(grid.points, P, h) for P in shape]
    if grid.dimension == 1:
        r2 = axes[0] ** 2
    else:
        r2 = axes[0][:, None] ** 2 + axes[1][None, :] ** 2
    r = np.sqrt(r2)

    params: dict = {}
    if kind == "gaussian-bump":
        if sigma <= 0:
            raise ConfigurationError("gaussian-bump needs sigma > 0")
        kernel = amplitude * np.exp(-r2 / (2.0 * sigma**2))
        w_hat_zero = amplitude * (2.0 * np.pi * sigma**2) ** (grid.dimension / 2.0)
        params = {"amplitude": amplitude, "sigma": sigma}
    elif kind == "grid-delta":
        kernel = np.zeros(shape)
        kernel[(0,) * grid.dimension] = amplitude / grid.cell_volume
        w_hat_zero = amplitude
        params = {"amplitude": amplitude}
    elif kind == "tabulated":
        if table is None:
            raise ConfigurationError("tabulated potential needs a table")
        tab = np.asarray(table, dtype=float)
        if tab.ndim != 2 or tab.shape[1] != 2:
            raise ConfigurationError("table must be two columns (offset, value)")
        order = np.argsort(tab[:, 0])
        offs, vals = tab[order, 0], tab[order, 1]
        kernel = np.interp(r, offs, vals, left=0.0, right=0.0)
        w_hat_zero = float(kernel.sum() * grid.cell_volume)
        params = {"points": len(offs)}
    else:
        raise ConfigurationError(f"unknown pair potential kind {kind!r}")

    reflect = np.ix_(*[(-np.arange(P)) % P for P in shape]) if grid.dimension == 2 \
        else ((-np.arange(shape[0])) % shape[0],)
    if not np.array_equal(kernel, kernel[reflect]):
        raise ConfigurationError("pair potential kernel is not even on the grid")

    kfft = scipy.fft.rfftn(kernel)
    w_hat_grid = kfft.real * grid.cell_volume
    return PairPotential(kind=kind, params=params, grid=grid, kernel=kernel,
                         kernel_fft=kfft, w_hat_zero=w_hat_zero,
                         w_hat_grid=w_hat_grid, w_hat_min=float(w_hat_grid.min()))


def convolve(w: PairPotential, density: np.ndarray) -> np.ndarray:
    """(w * rho)(x_i) = sum_j w(x_i - x_j) rho_j for weight-folded rho.

    Accepts a single flattened density or a batch (n, total_points).
    """
    grid = w.grid
    M = grid.points
    shape = w.kernel.shape
    batched = density.ndim == 2
    dens = density if batched else density[None, :]
    n = dens.shape[0]
    if grid.dimension == 1:
        buf = np.zeros((n, shape[0]))
        buf[:, :M] = dens
        out = scipy.fft.irfft(scipy.fft.rfft(buf, axis=-1) * w.kernel_fft,
                              n=shape[0], axis=-1)[:, :M]
    else:
        buf = np.zeros((n,) + shape)
        buf[:, :M, :M] = dens.reshape(n, M, M)
        conv = scipy.fft.irfftn(scipy.fft.rfftn(buf, axes=(1, 2)) * w.kernel_fft,
                                s=shape, axes=(1, 2))
        out = conv[:, :M, :M].reshape(n, M * M)
    return out if batched else out[0]


def quadratic_form(w: PairPotential, density: np.ndarray) -> np.ndarray | float:
    """(1/2) double-integral rho(x) w(x-y) rho(y), batched over rows."""
    conv = convolve(w, density)
    if density.ndim == 2:
        return 0.5 * np.einsum("ij,ij->i", density, conv)
    return 0.5 * float(density @ conv)


def _check_binding(sample_or_ens, op: OneBodyOperator, w: PairPotential):
    if w.grid != op.grid:
        raise ConfigurationError("pair potential bound to a different grid")


def bare_interaction(sample: FieldSample, op: OneBodyOperator, w: PairPotential) -> float:
    """(1/2) iint |u(x)|^2 w(x-y) |u(y)|^2 by grid quadrature."""
    _check_binding(sample, op, w)
    rho = np.abs(field_on_grid(sample, op)) ** 2
    return float(quadratic_form(w, rho))


def renormalized_interaction(sample: FieldSample, op: OneBodyOperator,
                             w: PairPotential, K: int) -> float:
    """Same quadratic form with the Gaussian mean density subtracted."""
    _check_binding(sample, op, w)
    if sample.cutoff != K:
        raise ConfigurationError(f"sample cutoff {sample.cutoff} does not match K={K}")
    rho = np.abs(field_on_grid(sample, op)) ** 2 - green_diagonal(op, K)
    return float(quadratic_form(w, rho))


def batch_interactions(ensemble: Ensemble, op: OneBodyOperator, w: PairPotential,
                       renormalized: bool, chunk: int = 512) -> np.ndarray:
    """Bare or renormalized interaction of every sample, grid path.

    The basis is real, so the synthesis runs as two real matrix products
    rather than one complex one.
    """
    _check_binding(ensemble, op, w)
    K = ensemble.cutoff
    Ut = np.ascontiguousarray(op.eigenvectors[:, :K].T)
    counter = green_diagonal(op, K) if renormalized else None
    out = np.empty(ensemble.size)
    for lo in range(0, ensemble.size, chunk):
        hi = min(lo + chunk, ensemble.size)
        coeff = ensemble.coefficients[lo:hi]
        re = np.ascontiguousarray(coeff.real) @ Ut
        im = np.ascontiguousarray(coeff.imag) @ Ut
        rho = re * re + im * im
        if counter is not None:
            rho -= counter
        out[lo:hi] = quadratic_form(w, rho)
    return out


def direct_term(op: OneBodyOperator, w: PairPotential, K: int) -> float:
    """(1/2) iint rho_K(x) w(x-y) rho_K(y); diverges with K in 2D."""
    _check_binding(None, op, w)
    return float(quadratic_form(w, green_diagonal(op, K)))


def _pair_density_rows(op: OneBodyOperator, K: int):
    """Yield (a, b, u_a*u_b) for a <= b < K."""
    U = op.eigenvectors[:, :K]
    for a in range(K):
        for b in range(a, K):
            yield a, b, U[:, a] * U[:, b]


def exchange_term(op: OneBodyOperator, w: PairPotential, K: int,
                  chunk: int = 256) -> float:
    """(1/2) iint |G_K(x,y)|^2 w(x-y) via mode-pair convolutions."""
    _check_binding(None, op, w)
    lam = op.eigenvalues[:K]
    total = 0.0
    rows, facs = [], []
    for a, b, rho in _pair_density_rows(op, K):
        rows.append(rho)
        facs.append((1.0 if a == b else 2.0) / (lam[a] * lam[b]))
        if len(rows) == chunk:
            total += float(facs @ quadratic_form(w, np.array(rows)))
            rows, facs = [], []
    if rows:
        total += float(np.array(facs) @ quadratic_form(w, np.array(rows)))
    return total


def wick_expectation_bare(op: OneBodyOperator, w: PairPotential, K: int) -> float:
    """Exact free-measure expectation of the bare interaction at cutoff K."""
    return direct_term(op, w, K) + exchange_term(op, w, K)


def mf_energy(sample: FieldSample, op: OneBodyOperator, w: PairPotential,
              g: float) -> float:
    """<u, h u> + g * bare interaction, with h the unshifted operator."""
    lam = op.unshifted_eigenvalues[:sample.cutoff]
    kinetic = float(np.sum(lam * np.abs(sample.coefficients) ** 2))
    return kinetic + g * bare_interaction(sample, op, w)


@dataclass(frozen=True)
class PairTensor:
    """Dense four-index interaction tensor in the mode basis.

    tensor[i, j, k, l] = iint u_i(x) u_j(y) w(x-y) u_l(x) u_k(y) dx dy for
    the real grid eigenbasis.  pair_matrix is the same data arranged as a
    PSD matrix over pair indices (i*K+l, j*K+k), used for fast mode-space
    evaluation of interaction energies.
    """

    mode_cutoff: int
    tensor: np.ndarray = field(repr=False)
    pair_matrix: np.ndarray = field(repr=False)


def build_pair_tensor(op: OneBodyOperator, w: PairPotential, K: int) -> PairTensor:
    if K > MAX_TENSOR_MODES:
        raise ConfigurationError(
            f"dense pair tensor capped at K={MAX_TENSOR_MODES}, got {K}")
    _check_binding(None, op, w)
    U = op.eigenvectors[:, :K]
    n_pairs = K * K
    dens = np.empty((n_pairs, op.grid.total_points))
    for i in range(K):
        for l in range(K):
            dens[i * K + l] = U[:, i] * U[:, l]
    conv = convolve(w, dens)
    Q = dens @ conv.T
    Q = 0.5 * (Q + Q.T)
    Q4 = Q.reshape(K, K, K, K)  # Q4[i, l, j, k]
    W = np.einsum("iljk->ijkl", Q4)
    # exchange symmetry W[i,j,k,l] = W[j,i,l,k] holds up to quadrature
    # roundoff; average it in before anything downstream relies on it.
    W = 0.5 * (W + W.transpose(1, 0, 3, 2))
    return PairTensor(mode_cutoff=K, tensor=np.ascontiguousarray(W), pair_matrix=Q)


def mode_interactions(ensemble: Ensemble, op: OneBodyOperator, tensor: PairTensor,
                      renormalized: bool) -> np.ndarray:
    """Interaction energies through the pair matrix, mode-space path.

    Exact for any sample with the tensor's cutoff; O(n K^4) instead of a
    convolution per sample.
    """
    K = tensor.mode_cutoff
    if ensemble.cutoff != K:
        raise ConfigurationError("ensemble cutoff does not match tensor")
    a = ensemble.coefficients
    B = (a.conj()[:, :, None] * a[:, None, :]).reshape(ensemble.size, K * K)
    if renormalized:
        B = B - np.diag(1.0 / op.eigenvalues[:K]).reshape(1, K * K)
    # pair_matrix is symmetric under swapping within either pair index, so
    # conjugating one factor changes nothing but keeps the result real.
    vals = 0.5 * np.sum(B * (B.conj() @ tensor.pair_matrix), axis=1)
    return vals.real
