"""Grand-canonical quantum statistical mechanics on a truncated Fock space.

The basis is cut by total particle number; every operator here conserves
particle number, so states and operators are block-diagonal over sectors.
Free (diagonal) sectors keep their Gibbs blocks as bare probability vectors
so that large cutoffs stay cheap; interacting sectors are dense.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .interaction import PairTensor
from .spectral import ConfigurationError, DomainError

MAX_SECTOR_DIM = 20_000
SATURATION_THRESHOLD = 1e-6


def _compositions(n: int, k: int):
    """Occupation vectors summing to n over k modes, lexicographic."""
    if k == 1:
        yield (n,)
        return
    for first in range(n + 1):
        for rest in _compositions(n - first, k - 1):
            yield (first,) + rest


class FockBasis:
    """Occupation-number basis over K modes with total number <= N_max."""

    def __init__(self, num_modes: int, max_particles: int):
        if num_modes < 1 or max_particles < 0:
            raise ConfigurationError("need at least one mode and N_max >= 0")
        self.num_modes = num_modes
        self.max_particles = max_particles
        base = max_particles + 1
        self._radix = base ** np.arange(num_modes - 1, -1, -1, dtype=np.int64)
        self.occupations: list[np.ndarray] = []
        self.codes: list[np.ndarray] = []
        for n in range(max_particles + 1):
            occs = np.array(list(_compositions(n, num_modes)), dtype=np.int64)
            occs = occs.reshape(-1, num_modes)
            expected = math.comb(n + num_modes - 1, num_modes - 1)
            if len(occs) != expected:
                raise RuntimeError("sector enumeration miscounted")
            if len(occs) > MAX_SECTOR_DIM:
                raise ConfigurationError(
                    f"sector n={n} has {len(occs)} states, over cap {MAX_SECTOR_DIM}")
            self.occupations.append(occs)
            self.codes.append(occs @ self._radix)  # ascending with lex order
        self._annihilators: dict[tuple[int, int], sp.csr_matrix] = {}

    @property
    def num_sectors(self) -> int:
        return self.max_particles + 1

    def sector_dim(self, n: int) -> int:
        return len(self.occupations[n])

    @property
    def dimension(self) -> int:
        return sum(len(o) for o in self.occupations)

    def index_of(self, occ) -> tuple[int, int]:
        occ = np.asarray(occ, dtype=np.int64)
        n = int(occ.sum())
        if n > self.max_particles or np.any(occ < 0):
            raise KeyError(f"occupation {tuple(occ)} not in basis")
        code = int(occ @ self._radix)
        pos = int(np.searchsorted(self.codes[n], code))
        if pos >= len(self.codes[n]) or self.codes[n][pos] != code:
            raise KeyError(f"occupation {tuple(occ)} not in basis")
        return n, pos

    def annihilator(self, mode: int, sector: int) -> sp.csr_matrix:
        """Sparse a_mode restricted to sector -> sector - 1."""
        key = (mode, sector)
        if key not in self._annihilators:
            occs = self.occupations[sector]
            src = np.nonzero(occs[:, mode] > 0)[0]
            amps = np.sqrt(occs[src, mode].astype(float))
            tgt_codes = self.codes[sector][src] - self._radix[mode]
            rows = np.searchsorted(self.codes[sector - 1], tgt_codes)
            mat = sp.csr_matrix(
                (amps, (rows, src)),
                shape=(self.sector_dim(sector - 1), self.sector_dim(sector)))
            self._annihilators[key] = mat
        return self._annihilators[key]

    def pair_annihilator(self, i: int, j: int, sector: int) -> sp.csr_matrix:
        """a_i a_j restricted to sector -> sector - 2."""
        return self.annihilator(i, sector - 1) @ self.annihilator(j, sector)


@dataclass
class FockOperator:
    """Number-conserving operator as per-sector sparse blocks."""

    basis: FockBasis
    blocks: list[sp.csr_matrix]

    def __post_init__(self):
        for n, b in enumerate(self.blocks):
            d = self.basis.sector_dim(n)
            if b.shape != (d, d):
                raise ConfigurationError(f"block {n} has shape {b.shape}, expected {d}")

    def scaled(self, factor: float) -> "FockOperator":
        return FockOperator(self.basis, [b * factor for b in self.blocks])

    def __add__(self, other: "FockOperator") -> "FockOperator":
        if other.basis is not self.basis:
            raise ConfigurationError("operators live on different bases")
        return FockOperator(self.basis,
                            [a + b for a, b in zip(self.blocks, other.blocks)])

    def is_diagonal(self) -> bool:
        return all((b - sp.diags(b.diagonal())).nnz == 0 for b in self.blocks)


@dataclass
class FockState:
    """Block-diagonal density operator; 1-D block means a diagonal block."""

    basis: FockBasis
    blocks: list[np.ndarray]

    def block_trace(self, n: int) -> float:
        b = self.blocks[n]
        return float(b.sum().real) if b.ndim == 1 else float(np.trace(b).real)

    def trace(self) -> float:
        return sum(self.block_trace(n) for n in range(self.basis.num_sectors))

    def sector_weights(self) -> np.ndarray:
        return np.array([self.block_trace(n) for n in range(self.basis.num_sectors)])

    def mean_particles(self) -> float:
        return float(np.dot(np.arange(self.basis.num_sectors), self.sector_weights()))

    def dense_block(self, n: int) -> np.ndarray:
        b = self.blocks[n]
        return np.diag(b) if b.ndim == 1 else b


def build_fock(K: int, N_max: int) -> FockBasis:
    return FockBasis(K, N_max)


def number_operator(basis: FockBasis) -> FockOperator:
    blocks = [sp.identity(basis.sector_dim(n), format="csr") * float(n)
              for n in range(basis.num_sectors)]
    return FockOperator(basis, blocks)


def second_quantize_one_body(basis: FockBasis, h1: np.ndarray) -> FockOperator:
    """Second quantization of a K x K one-body matrix, sum h_ij a+_i a_j."""
    h1 = np.asarray(h1, dtype=float)
    K = basis.num_modes
    if h1.shape == (K,):
        h1 = np.diag(h1)
    if h1.shape != (K, K):
        raise ConfigurationError(f"one-body matrix must be {K}x{K}")
    diagonal_only = np.allclose(h1, np.diag(np.diag(h1)))
    blocks = []
    for n in range(basis.num_sectors):
        occs = basis.occupations[n]
        diag = occs @ np.diag(h1)
        block = sp.diags(diag, format="csr")
        if not diagonal_only and n >= 1:
            for i in range(K):
                Ai = basis.annihilator(i, n)
                for j in range(K):
                    if i == j or h1[i, j] == 0.0:
                        continue
                    block = block + h1[i, j] * (Ai.T @ basis.annihilator(j, n))
        blocks.append(block.tocsr())
    return FockOperator(basis, blocks)


def second_quantize_pair(basis: FockBasis, tensor: PairTensor) -> FockOperator:
    """(1/2) sum W_ijkl a+_i a+_j a_k a_l assembled per sector.

    Uses the stacked pair-annihilation identity: with P_q = a_u a_v for the
    ordered pair q=(u,v), the block equals (1/2) R^T (Wp kron I) R where R
    vertically stacks the P_q and Wp[(j,i),(k,l)] = W[i,j,k,l].
    """
    K = basis.num_modes
    if tensor.mode_cutoff != K:
        raise ConfigurationError("tensor mode count does not match basis")
    W = tensor.tensor
    Wp = sp.csr_matrix(W.transpose(1, 0, 2, 3).reshape(K * K, K * K))
    blocks = []
    for n in range(basis.num_sectors):
        d = basis.sector_dim(n)
        if n < 2:
            blocks.append(sp.csr_matrix((d, d)))
            continue
        stack = sp.vstack([basis.pair_annihilator(u, v, n)
                           for u in range(K) for v in range(K)], format="csr")
        big = sp.kron(Wp, sp.identity(basis.sector_dim(n - 2), format="csr"))
        block = 0.5 * (stack.T @ (big @ stack))
        block = 0.5 * (block + block.T)  # clear quadrature roundoff
        blocks.append(block.tocsr())
    return FockOperator(basis, blocks)


# ---------------------------------------------------------------------------
# Gibbs states


@dataclass
class SectorSpectra:
    """Eigen-decompositions of H - nu N per sector; vectors None if diagonal."""

    basis: FockBasis
    nu: float
    energies: list[np.ndarray]
    vectors: list[np.ndarray | None]


def sector_eigensystems(H: FockOperator, nu: float, basis: FockBasis) -> SectorSpectra:
    """Diagonalize H - nu N blockwise.

    Diagonal blocks keep their basis ordering (vectors None); energies of
    dense blocks come out ascending from the dense solver.
    """
    energies, vectors = [], []
    for n in range(basis.num_sectors):
        block = H.blocks[n]
        shifted_diag = block.diagonal() - nu * n
        off = block - sp.diags(block.diagonal())
        if off.nnz == 0:
            energies.append(shifted_diag)
            vectors.append(None)
            continue
        dense = block.toarray().astype(float)
        dense[np.diag_indices_from(dense)] -= nu * n
        vals, vecs = scipy.linalg.eigh(dense)
        energies.append(vals)
        vectors.append(vecs)
    return SectorSpectra(basis=basis, nu=nu, energies=energies, vectors=vectors)


@dataclass
class GibbsResult:
    state: FockState
    log_partition: float
    free_energy: float
    mean_particles: float
    top_sector_weight: float
    cutoff_safe: bool


def gibbs_from_spectra(spectra: SectorSpectra, T: float, E0: float = 0.0,
                       max_sector: int | None = None) -> GibbsResult:
    """Assemble exp(-(H - nu N + E0)/T)/Z from per-sector spectra.

    The exponentials are anchored at the global ground energy so that a
    deep spectrum cannot underflow the partition function.
    """
    basis = spectra.basis
    top = basis.max_particles if max_sector is None else max_sector
    all_min = min(float(spectra.energies[n].min()) for n in range(top + 1))
    zt = sum(float(np.exp(-(spectra.energies[n] - all_min) / T).sum())
             for n in range(top + 1))
    log_Z = np.log(zt) - (all_min + E0) / T
    blocks: list[np.ndarray] = []
    for n in range(basis.num_sectors):
        if n > top:
            blocks.append(np.zeros(basis.sector_dim(n)))
            continue
        p = np.exp(-(spectra.energies[n] - all_min) / T) / zt
        V = spectra.vectors[n]
        blocks.append(p if V is None else (V * p) @ V.T)
    state = FockState(basis=basis, blocks=blocks)
    top_weight = state.block_trace(top)
    return GibbsResult(state=state, log_partition=float(log_Z),
                       free_energy=float(-T * log_Z),
                       mean_particles=state.mean_particles(),
                       top_sector_weight=top_weight,
                       cutoff_safe=top_weight <= SATURATION_THRESHOLD)


def gibbs_state(H: FockOperator, T: float, nu: float, basis: FockBasis,
                E0: float = 0.0) -> GibbsResult:
    if T <= 0:
        raise DomainError("temperature must be positive")
    spectra = sector_eigensystems(H, nu, basis)
    return gibbs_from_spectra(spectra, T, E0)


# ---------------------------------------------------------------------------
# Reduced density matrices


@dataclass(frozen=True)
class ReducedDensityMatrix:
    """Exact k-body marginal in the mode basis.

    order 1: entry (i, j) = <a+_j a_i>, trace = <N>.
    order 2: symmetric-pair basis with sqrt(2) off-diagonal weights,
    entry ((ij),(kl)) = c_ij c_kl <a+_k a+_l a_i a_j>, trace = <N(N-1)>.
    """

    order: int
    matrix: np.ndarray

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]


def _trace_sandwich(left: sp.csr_matrix, block: np.ndarray,
                    right: sp.csr_matrix) -> complex:
    """tr(left @ Gamma @ right^T) for a diagonal or dense Gamma block."""
    if block.ndim == 1:
        # columns of annihilators hold at most one entry, so work columnwise
        colsums = np.asarray(left.multiply(right).sum(axis=0)).ravel()
        return complex(colsums @ block)
    return complex((right.multiply(left @ block)).sum())


def reduced_density(state: FockState, basis: FockBasis, order: int) -> ReducedDensityMatrix:
    if order not in (1, 2):
        raise ConfigurationError("reduced density order must be 1 or 2")
    K = basis.num_modes
    if order == 1:
        M = np.zeros((K, K), dtype=complex)
        for n in range(1, basis.num_sectors):
            block = state.blocks[n]
            if block.ndim == 1 and not block.any():
                continue
            ops = [basis.annihilator(i, n) for i in range(K)]
            for i in range(K):
                for j in range(i, K):
                    val = _trace_sandwich(ops[i], block, ops[j])
                    M[i, j] += val
                    if i != j:
                        M[j, i] += np.conj(val)
        return ReducedDensityMatrix(order=1, matrix=M)

    pairs = [(i, j) for i in range(K) for j in range(i, K)]
    P = len(pairs)
    M = np.zeros((P, P), dtype=complex)
    weights = np.array([1.0 if i == j else np.sqrt(2.0) for i, j in pairs])
    for n in range(2, basis.num_sectors):
        block = state.blocks[n]
        if block.ndim == 1 and not block.any():
            continue
        ops = [basis.pair_annihilator(i, j, n) for i, j in pairs]
        for a in range(P):
            for b in range(a, P):
                val = _trace_sandwich(ops[a], block, ops[b])
                M[a, b] += val
                if a != b:
                    M[b, a] += np.conj(val)
    M *= weights[:, None] * weights[None, :]
    return ReducedDensityMatrix(order=2, matrix=M)


# ---------------------------------------------------------------------------
# Coherent states and the free-energy functional


@dataclass(frozen=True)
class CoherentReport:
    state: FockState
    captured_mass: float  # truncated share of the untruncated norm
    mean_particles: float
    truncation_warning: bool


def coherent_state(v: np.ndarray, basis: FockBasis) -> CoherentReport:
    """Block-diagonal compression of the coherent state built on v.

    The n-particle component is proportional to the n-fold tensor power of v
    over sqrt(n!); the state is renormalized on the truncated space.  All
    number-conserving observables agree with the untruncated coherent state
    up to the discarded Poisson tail.
    """
    v = np.asarray(v, dtype=complex)
    if v.shape != (basis.num_modes,):
        raise ConfigurationError(f"need {basis.num_modes} mode amplitudes")
    norm_sq = float(np.sum(np.abs(v) ** 2))
    warn = norm_sq >= basis.max_particles / 2.0
    if warn:
        warnings.warn(f"|v|^2 = {norm_sq:.3g} is large for N_max = "
                      f"{basis.max_particles}; truncation error may be sizable")
    amps = []
    total = 0.0
    for n in range(basis.num_sectors):
        occs = basis.occupations[n]
        log_fact = np.array([sum(math.lgamma(c + 1) for c in occ) for occ in occs])
        with np.errstate(divide="ignore"):
            mags = np.exp(occs @ np.log(np.abs(v) + 1e-300) - 0.5 * log_fact)
        phases = np.exp(1j * (occs @ np.angle(v)))
        c = mags * phases
        c[~np.isfinite(c)] = 0.0
        amps.append(c)
        total += float(np.sum(np.abs(c) ** 2))
    blocks = [np.outer(c, c.conj()) / total for c in amps]
    state = FockState(basis=basis, blocks=blocks)
    captured = total / float(np.exp(norm_sq))
    return CoherentReport(state=state, captured_mass=captured,
                          mean_particles=state.mean_particles(),
                          truncation_warning=warn)


def _block_entropy_sum(block: np.ndarray) -> float:
    """sum p log p over one block's spectrum with 0 log 0 = 0."""
    p = block if block.ndim == 1 else np.linalg.eigvalsh(block)
    p = np.real(p)
    p = np.clip(p, 0.0, None)
    mask = p > 0.0
    return float(np.sum(p[mask] * np.log(p[mask])))


def free_energy_functional(state: FockState, H: FockOperator, T: float,
                           nu: float, E0: float = 0.0) -> float:
    """tr((H - nu N + E0) Gamma) + T tr(Gamma log Gamma)."""
    energy = 0.0
    ent = 0.0
    for n in range(state.basis.num_sectors):
        block = state.blocks[n]
        Hn = H.blocks[n]
        if block.ndim == 1:
            tr_block = float(block.sum().real)
            energy += float(Hn.diagonal() @ np.real(block))
        else:
            tr_block = float(np.trace(block).real)
            energy += float(np.real(Hn.multiply(block.T).sum()))
        energy += (E0 - nu * n) * tr_block
        ent += _block_entropy_sum(block)
    return energy + T * ent


def random_test_state(basis: FockBasis, rng: np.random.Generator) -> FockState:
    """Random number-conserving density operator, for variational checks."""
    blocks = []
    total = 0.0
    for n in range(basis.num_sectors):
        d = basis.sector_dim(n)
        G = rng.standard_normal((d, min(d, 4))) + 1j * rng.standard_normal((d, min(d, 4)))
        B = G @ G.conj().T
        blocks.append(B)
        total += float(np.trace(B).real)
    return FockState(basis=basis, blocks=[b / total for b in blocks])


# ---------------------------------------------------------------------------
# Truncation audit


@dataclass(frozen=True)
class CutoffAuditRow:
    n_max: int
    free_energy: float
    mean_particles: float
    delta_free_energy: float
    top_sector_weight: float


@dataclass(frozen=True)
class CutoffAudit:
    rows: list[CutoffAuditRow]
    converged: bool
    tolerance: float


def cutoff_audit(H: FockOperator, T: float, nu: float, basis: FockBasis,
                 schedule: list[int], E0: float = 0.0,
                 tolerance: float | None = None) -> CutoffAudit:
    """F and <N> against the particle cutoff, sharing one diagonalization."""
    if sorted(schedule) != list(schedule) or len(set(schedule)) != len(schedule):
        raise ConfigurationError("cutoff schedule must be strictly increasing")
    if schedule[-1] > basis.max_particles:
        raise ConfigurationError("schedule exceeds basis cutoff")
    tol = 1e-6 * T if tolerance is None else tolerance
    spectra = sector_eigensystems(H, nu, basis)
    rows = []
    prev = None
    for n_max in schedule:
        res = gibbs_from_spectra(spectra, T, E0, max_sector=n_max)
        delta = np.nan if prev is None else abs(res.free_energy - prev)
        rows.append(CutoffAuditRow(n_max=n_max, free_energy=res.free_energy,
                                   mean_particles=res.mean_particles,
                                   delta_free_energy=float(delta),
                                   top_sector_weight=res.top_sector_weight))
        prev = res.free_energy
    converged = len(rows) > 1 and rows[-1].delta_free_energy < tol
    return CutoffAudit(rows=rows, converged=converged, tolerance=tol)
