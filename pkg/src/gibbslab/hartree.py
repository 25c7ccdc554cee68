"""Self-consistent reduced Hartree state and the counterterm scheme.

The effective potential solves V_T = lam * (rho * w) + V - nu with
rho the thermal density of -Laplacian + V_T, occupations Bose-Einstein at
temperature T.  The chemical potential nu = lam * w_hat(0) * rho0 - kappa
cancels the uniform divergent part of the direct interaction, leaving an
effective gap kappa.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.integrate
import scipy.linalg
import scipy.sparse as sp

from .interaction import PairPotential, convolve, quadratic_form
from .spectral import DomainError, GridSpec, minus_laplacian

# The momentum integral for the free-gas density is taken without a
# (2 pi)^-d factor by default; 'angular' switches that factor on.
MOMENTUM_MEASURES = ("unit", "2pi")


def _measure_factor(measure: str, d: int) -> float:
    if measure == "unit":
        return 1.0
    if measure == "2pi":
        return (2.0 * np.pi) ** (-d)
    raise DomainError(f"momentum measure must be one of {MOMENTUM_MEASURES}")


def free_gas_density(T: float, gap: float, d: int, measure: str = "unit") -> float:
    """Momentum-space density of a free Bose gas with spectral gap > 0.

    Integral over R^d of 1/(exp((|k|^2 + gap)/T) - 1).  In two dimensions
    this has the closed form pi T * (-log(1 - exp(-gap/T))); in one
    dimension it is evaluated by adaptive quadrature.
    """
    if gap <= 0:
        raise DomainError("gap must be positive")
    if T <= 0:
        raise DomainError("temperature must be positive")
    fac = _measure_factor(measure, d)
    if d == 2:
        return fac * float(np.pi * T * (-np.log1p(-np.exp(-gap / T))))
    if d == 1:
        def integrand(k):
            x = (k * k + gap) / T
            return 0.0 if x > 700.0 else 1.0 / np.expm1(x)

        val, _ = scipy.integrate.quad(integrand, 0.0, np.inf,
                                      epsabs=1e-12, epsrel=1e-12, limit=400)
        return fac * 2.0 * float(val)
    raise DomainError("free gas density implemented for d in {1, 2}")


def free_gas_density_quadrature(T: float, gap: float, measure: str = "unit") -> float:
    """Independent 2D Cartesian quadrature of the same integral."""
    k_max = np.sqrt(max(50.0 * T, 50.0 * T + gap))

    def integrand(ky, kx):
        x = (kx * kx + ky * ky + gap) / T
        return 0.0 if x > 700.0 else 1.0 / np.expm1(x)

    val, _ = scipy.integrate.dblquad(integrand, 0.0, k_max, 0.0, k_max,
                                     epsabs=1e-12, epsrel=1e-10)
    return _measure_factor(measure, 2) * 4.0 * float(val)


def counterterm_chemical_potential(T: float, lam: float, kappa: float,
                                   w: PairPotential, measure: str = "unit") -> float:
    """nu = lam * w_hat(0) * rho0(T, kappa) - kappa."""
    if kappa <= 0:
        raise DomainError("kappa must be positive")
    rho0 = free_gas_density(T, kappa, w.grid.dimension, measure)
    return lam * w.w_hat_zero * rho0 - kappa


class GapClosedError(ArithmeticError):
    """The effective one-body gap closed; chemical potential too large."""


@dataclass
class RhfState:
    """Converged (or last) iterate of the reduced-Hartree fixed point."""

    grid: GridSpec
    effective_potential: np.ndarray  # V_T on the grid
    energies: np.ndarray             # spectrum of -Lap + V_T
    orbitals: np.ndarray             # weight-folded eigenvectors, columns
    occupations: np.ndarray          # Bose-Einstein numbers of the energies
    density: np.ndarray              # weight-folded thermal density
    free_energy: float
    residual: float
    iterations: int
    converged: bool


def _thermal_eigs(grid: GridSpec, v_eff: np.ndarray, T: float):
    H = (minus_laplacian(grid) + sp.diags(v_eff)).toarray()
    eps, psi = scipy.linalg.eigh(H, driver="evd")
    if eps[0] <= 0:
        raise GapClosedError(
            f"effective gap closed (lowest level {eps[0]:.3g}); "
            "chemical potential too large")
    with np.errstate(over="ignore"):
        occ = 1.0 / np.expm1(eps / T)
    rho = (psi * psi) @ occ
    return eps, psi, occ, rho


def _rhf_free_energy(grid, V, nu, w, lam, T, eps, occ, rho, v_eff) -> float:
    """Energy trace + direct term - T * entropy at the current iterate."""
    # tr[(-Lap + V - nu) gamma] = sum eps f - int (V_eff - V + nu) rho
    energy = float(eps @ occ) - float((v_eff - V + nu) @ rho)
    direct = lam * float(quadratic_form(w, rho))
    with np.errstate(divide="ignore", invalid="ignore"):
        ent = np.where(occ > 0,
                       (1.0 + occ) * np.log1p(occ) - occ * np.log(occ), 0.0)
    return energy + direct - T * float(ent.sum())


def solve_reduced_hartree(grid: GridSpec, V: np.ndarray, w: PairPotential,
                          T: float, lam: float, nu: float,
                          damping: float = 0.3, tol: float = 1e-8,
                          max_iter: int = 200) -> RhfState:
    """Damped fixed-point iteration for the self-consistent potential.

    The step is V <- (1 - theta) V_old + theta (V + lam rho*w - nu) with
    backtracking on theta whenever the free energy increases.
    """
    if not 0 < damping <= 1:
        raise DomainError("damping must be in (0, 1]")
    if tol <= 0:
        raise DomainError("tol must be positive")
    V = np.asarray(V, dtype=float)
    v_eff = V - nu
    eps, psi, occ, rho = _thermal_eigs(grid, v_eff, T)
    f_cur = _rhf_free_energy(grid, V, nu, w, lam, T, eps, occ, rho, v_eff)
    theta = damping
    residual = np.inf
    denom = 1.0 + np.abs(V)

    for it in range(1, max_iter + 1):
        target = V + lam * convolve(w, rho) - nu
        residual = float(np.max(np.abs(target - v_eff) / denom))
        if residual < tol:
            return RhfState(grid=grid, effective_potential=v_eff, energies=eps,
                            orbitals=psi, occupations=occ, density=rho,
                            free_energy=f_cur, residual=residual,
                            iterations=it - 1, converged=True)
        step = theta
        while True:
            v_try = (1.0 - step) * v_eff + step * target
            eps_t, psi_t, occ_t, rho_t = _thermal_eigs(grid, v_try, T)
            f_try = _rhf_free_energy(grid, V, nu, w, lam, T, eps_t, occ_t, rho_t, v_try)
            if f_try <= f_cur + 1e-12 * max(1.0, abs(f_cur)) or step < 1e-4:
                break
            step *= 0.5
        v_eff, eps, psi, occ, rho, f_cur = v_try, eps_t, psi_t, occ_t, rho_t, f_try

    return RhfState(grid=grid, effective_potential=v_eff, energies=eps,
                    orbitals=psi, occupations=occ, density=rho,
                    free_energy=f_cur, residual=residual,
                    iterations=max_iter, converged=False)


def fixed_point_residual(state: RhfState, V: np.ndarray, w: PairPotential,
                         lam: float, nu: float) -> float:
    """Re-evaluate the map on the returned potential."""
    target = V + lam * convolve(w, state.density) - nu
    return float(np.max(np.abs(target - state.effective_potential) / (1.0 + np.abs(V))))


def reference_energy(state: RhfState, w: PairPotential, lam: float) -> float:
    """(lam/2) iint rho(x) w(x-y) rho(y) at the solved density."""
    return lam * float(quadratic_form(w, state.density))


def truncated_inverse_distance(state_a: RhfState, state_b: RhfState,
                               K: int, p: float) -> float:
    """Schatten-p distance of K-mode truncations of the resolvents.

    Both truncated inverses live in the span of the 2K lowest orbitals, so
    the operator difference is diagonalized exactly in that joint subspace.
    """
    Ua = state_a.orbitals[:, :K] / state_a.energies[:K]
    Ub = state_b.orbitals[:, :K] / state_b.energies[:K]
    basis = np.column_stack([state_a.orbitals[:, :K], state_b.orbitals[:, :K]])
    Q, _ = np.linalg.qr(basis)
    A = (Q.T @ state_a.orbitals[:, :K]) @ (Q.T @ Ua).T
    B = (Q.T @ state_b.orbitals[:, :K]) @ (Q.T @ Ub).T
    diff = A - B
    vals = np.linalg.eigvalsh(0.5 * (diff + diff.T))
    return float(np.sum(np.abs(vals) ** p))


@dataclass(frozen=True)
class StabilizationRow:
    T: float
    lam: float
    nu: float
    iterations: int
    residual: float
    free_energy: float
    reference_energy: float
    delta_inf: float
    schatten_p_dist: float


@dataclass(frozen=True)
class StabilizationReport:
    rows: list[StabilizationRow]
    p: float
    shared_modes: int
    sandwich_ok: bool
    sandwich_margin: float
    delta_decreasing: bool
    schatten_decreasing: bool
    proxy_potential: np.ndarray


def counterterm_stabilization(grid: GridSpec, V: np.ndarray, w: PairPotential,
                              T_schedule: list[float], kappa: float,
                              coupling_c: float = 1.0, damping: float = 0.3,
                              tol: float = 1e-8, max_iter: int = 200,
                              shared_modes: int = 32, p: float | None = None,
                              measure: str = "unit") -> StabilizationReport:
    """Solve the fixed point along a T schedule and test stabilization.

    The largest-T solution stands in for the limiting potential; both the
    sup-distance delta_inf and the truncated-resolvent Schatten-p distance
    must shrink along the schedule (the proxy anchor is excluded).
    The sandwich V/2 <= V_proxy - kappa <= 3V/2 is checked where V > 1.
    """
    if sorted(T_schedule) != list(T_schedule):
        raise DomainError("T schedule must be increasing")
    if p is None:
        p = 2.0 if grid.dimension == 2 else 1.0
    states, nus, lams = [], [], []
    for T in T_schedule:
        lam = coupling_c / T
        nu = counterterm_chemical_potential(T, lam, kappa, w, measure)
        states.append(solve_reduced_hartree(grid, V, w, T, lam, nu,
                                            damping=damping, tol=tol,
                                            max_iter=max_iter))
        nus.append(nu)
        lams.append(lam)
    proxy = states[-1]
    denom = 1.0 + np.abs(V)
    rows = []
    for T, lam, nu, st in zip(T_schedule, lams, nus, states):
        delta = float(np.max(np.abs(st.effective_potential
                                    - proxy.effective_potential) / denom))
        dist = truncated_inverse_distance(st, proxy, shared_modes, p)
        rows.append(StabilizationRow(T=T, lam=lam, nu=nu, iterations=st.iterations,
                                     residual=st.residual, free_energy=st.free_energy,
                                     reference_energy=reference_energy(st, w, lam),
                                     delta_inf=delta, schatten_p_dist=dist))
    region = V > 1.0
    shifted = proxy.effective_potential - kappa
    if region.any():
        lower = shifted[region] - 0.5 * V[region]
        upper = 1.5 * V[region] - shifted[region]
        margin = float(min(lower.min(), upper.min()))
    else:
        margin = np.inf
    deltas = [r.delta_inf for r in rows]
    dists = [r.schatten_p_dist for r in rows]
    return StabilizationReport(
        rows=rows, p=p, shared_modes=shared_modes,
        sandwich_ok=bool(margin >= 0.0), sandwich_margin=margin,
        delta_decreasing=all(a > b for a, b in zip(deltas[:-1], deltas[1:])),
        schatten_decreasing=all(a > b for a, b in zip(dists[:-1], dists[1:])),
        proxy_potential=proxy.effective_potential)
