"""Interacting classical measure by importance reweighting of Gaussian ensembles.

The interacting measure is z_r^-1 exp(-D[u]) d(free measure); with a
positive-transform potential D >= 0, so weights live in (0, 1] and plain
importance sampling from the free measure is exact.  Everything is reported
with effective-sample-size diagnostics.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.integrate

from .gaussian import Ensemble
from .interaction import (MAX_TENSOR_MODES, PairPotential, batch_interactions,
                          build_pair_tensor, mode_interactions)
from .spectral import ConfigurationError, OneBodyOperator

ESS_FLOOR_FRACTION = 0.05


class LowEffectiveSampleSize(UserWarning):
    pass


def effective_sample_size(weights: np.ndarray) -> float:
    s = weights.sum()
    return float(s * s / np.square(weights).sum())


def interaction_energies(ensemble: Ensemble, op: OneBodyOperator, w: PairPotential,
                         renormalized: bool) -> np.ndarray:
    """Per-sample D[u], choosing the mode-space path when the cutoff allows."""
    if ensemble.cutoff <= MAX_TENSOR_MODES:
        tensor = build_pair_tensor(op, w, ensemble.cutoff)
        return mode_interactions(ensemble, op, tensor, renormalized)
    return batch_interactions(ensemble, op, w, renormalized)


def reweight(ensemble: Ensemble, energy: str, op: OneBodyOperator,
             w: PairPotential, K: int) -> Ensemble:
    """Attach weights exp(-D[u]) for the bare or renormalized interaction."""
    if energy not in ("bare", "renormalized"):
        raise ConfigurationError(f"energy must be bare or renormalized, got {energy!r}")
    if K != ensemble.cutoff:
        raise ConfigurationError(f"K={K} does not match ensemble cutoff {ensemble.cutoff}")
    if not w.renormalization_safe:
        warnings.warn("pair potential transform dips negative; weights may exceed 1")
    D = interaction_energies(ensemble, op, w, energy == "renormalized")
    out = ensemble.with_weights(np.exp(-D), energy)
    ess = effective_sample_size(out.weights)
    if ess < ESS_FLOOR_FRACTION * out.size:
        warnings.warn(
            f"effective sample size {ess:.1f} below {ESS_FLOOR_FRACTION:.0%} of n={out.size}; "
            "results are low-confidence", LowEffectiveSampleSize)
    return out


@dataclass(frozen=True)
class PartitionEstimate:
    neg_log_zr: float
    stderr: float
    ess: float
    low_confidence: bool


def estimate_log_zr(ensemble: Ensemble) -> PartitionEstimate:
    """-log of the mean weight with a delta-method standard error."""
    w = ensemble.weights
    n = len(w)
    mean = float(w.mean())
    if mean <= 0:
        raise ArithmeticError("all weights vanished")
    stderr = float(w.std(ddof=1) / (np.sqrt(n) * mean)) if n > 1 else np.inf
    ess = effective_sample_size(w)
    return PartitionEstimate(neg_log_zr=-np.log(mean), stderr=stderr, ess=ess,
                             low_confidence=ess < ESS_FLOOR_FRACTION * n)


def symmetric_pairs(K: int) -> list[tuple[int, int]]:
    """Ordered multi-indices (i <= j) of the two-mode symmetric basis."""
    return [(i, j) for i in range(K) for j in range(i, K)]


def _pair_amplitudes(coeffs: np.ndarray) -> np.ndarray:
    """Per sample, the symmetric-basis components of the two-fold product.

    Component (i <= j) of u (x) u is c_ij alpha_i alpha_j with c = sqrt(2)
    off the diagonal, 1 on it.
    """
    n, K = coeffs.shape
    pairs = symmetric_pairs(K)
    out = np.empty((n, len(pairs)), dtype=complex)
    for col, (i, j) in enumerate(pairs):
        c = 1.0 if i == j else np.sqrt(2.0)
        out[:, col] = c * coeffs[:, i] * coeffs[:, j]
    return out


@dataclass(frozen=True)
class ReducedMoment:
    """Weighted moment matrix int |u^(k)><u^(k)| dmu in the mode basis.

    order 1: entry (i, j) = E[alpha_i conj(alpha_j)].
    order 2: symmetric-pair basis, entry ((ij),(kl)) =
             c_ij c_kl E[alpha_i alpha_j conj(alpha_k alpha_l)].
    """

    order: int
    matrix: np.ndarray
    stderr: np.ndarray
    ess: float

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]


def _weighted_moment(features: np.ndarray, weights: np.ndarray,
                     chunk: int = 4096) -> tuple[np.ndarray, np.ndarray]:
    wsum = weights.sum()
    M = (features.T * weights) @ features.conj() / wsum
    M = 0.5 * (M + M.conj().T)
    # ratio-estimator stderr per entry, chunked to bound memory
    acc = np.zeros(M.shape)
    for lo in range(0, len(weights), chunk):
        f = features[lo:lo + chunk]
        dev = f[:, :, None] * f.conj()[:, None, :] - M[None, :, :]
        acc += np.einsum("s,sij->ij", weights[lo:lo + chunk] ** 2,
                         np.abs(dev) ** 2)
    se = np.sqrt(acc) / wsum
    return M, se


def reduced_moment(ensemble: Ensemble, order: int) -> ReducedMoment:
    if order not in (1, 2):
        raise ConfigurationError("moment order must be 1 or 2")
    if order == 2 and ensemble.cutoff > MAX_TENSOR_MODES:
        raise ConfigurationError(
            f"order-2 moments capped at K={MAX_TENSOR_MODES} modes")
    feats = ensemble.coefficients if order == 1 else _pair_amplitudes(ensemble.coefficients)
    M, se = _weighted_moment(feats, ensemble.weights)
    return ReducedMoment(order=order, matrix=M, stderr=se,
                         ess=effective_sample_size(ensemble.weights))


def pseudo_moment(ensemble: Ensemble) -> np.ndarray:
    """E[alpha_i alpha_j] without conjugation; zero by phase invariance."""
    a = ensemble.coefficients
    wsum = ensemble.weights.sum()
    return (a.T * ensemble.weights) @ a / wsum


def trace_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Sum of absolute eigenvalues of the Hermitian difference."""
    diff = np.asarray(a) - np.asarray(b)
    if diff.shape[0] != diff.shape[1]:
        raise ConfigurationError("trace distance needs square matrices")
    herm = 0.5 * (diff + diff.conj().T)
    if not np.allclose(diff, herm, atol=1e-8 * max(1.0, np.abs(diff).max())):
        raise ConfigurationError("trace distance defined for Hermitian difference")
    return float(np.abs(np.linalg.eigvalsh(herm)).sum())


# ---------------------------------------------------------------------------
# Single-mode closed forms.  With one mode, X = |alpha_1|^2 is exponential
# with mean m = 1/lambda_1 and every interacting quantity reduces to a
# one-dimensional integral over the weight profile.


def _single_mode_average(lam1: float, pair_diag: float, renormalized: bool,
                         observable) -> float:
    m = 1.0 / lam1

    def weight(x):
        shift = m if renormalized else 0.0
        return np.exp(-0.5 * pair_diag * (x - shift) ** 2)

    def dens(x):
        return np.exp(-x / m) / m

    num, _ = scipy.integrate.quad(lambda x: observable(x) * weight(x) * dens(x),
                                  0, np.inf, epsabs=1e-13, epsrel=1e-13, limit=400)
    return num


def single_mode_log_zr(lam1: float, pair_diag: float, renormalized: bool = True) -> float:
    """-log E[exp(-D)] for one mode with W_1111 = pair_diag."""
    z = _single_mode_average(lam1, pair_diag, renormalized, lambda x: 1.0)
    return -float(np.log(z))


def single_mode_moment(lam1: float, pair_diag: float, renormalized: bool = True) -> float:
    """Interacting E[|alpha_1|^2] for one mode."""
    z = _single_mode_average(lam1, pair_diag, renormalized, lambda x: 1.0)
    num = _single_mode_average(lam1, pair_diag, renormalized, lambda x: x)
    return float(num / z)


def single_mode_mean_renorm_energy(lam1: float, pair_diag: float) -> float:
    """Free-measure E[D^R] for one mode; equals the exchange term."""
    m = 1.0 / lam1
    val, _ = scipy.integrate.quad(
        lambda x: 0.5 * pair_diag * (x - m) ** 2 * np.exp(-x / m) / m,
        0, np.inf, epsabs=1e-13, epsrel=1e-13, limit=400)
    return float(val)
