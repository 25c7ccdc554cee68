import numpy as np
import pytest

from gibbslab import classical_gibbs as cg
from gibbslab.gaussian import sample_gaussian
from gibbslab.interaction import build_pair_tensor, make_pair_potential
from gibbslab.spectral import GridSpec, build_one_body


@pytest.fixture(scope="module")
def op():
    return build_one_body(GridSpec(1, 6.0, 200), "power", 8, s=4.0)


@pytest.fixture(scope="module")
def bump(op):
    return make_pair_potential("gaussian-bump", op.grid, amplitude=0.5, sigma=0.6)


@pytest.fixture(scope="module")
def zero_w(op):
    return make_pair_potential("gaussian-bump", op.grid, amplitude=0.0, sigma=0.6)


@pytest.fixture(scope="module")
def ensemble(op):
    return sample_gaussian(op, 4, 50_000, seed=424)


def simpson_average(lam1, pair_diag, renormalized, observable, n=200_001, x_max=80.0):
    """Independent dense-grid oracle for single-mode averages."""
    from scipy.integrate import simpson
    m = 1.0 / lam1
    x = np.linspace(0.0, x_max * m, n)
    shift = m if renormalized else 0.0
    profile = np.exp(-0.5 * pair_diag * (x - shift) ** 2) * np.exp(-x / m) / m
    return simpson(observable(x) * profile, x=x)


def test_zero_interaction_weights(ensemble, op, zero_w):
    out = cg.reweight(ensemble, "bare", op, zero_w, 4)
    assert np.all(out.weights == 1.0)
    est = cg.estimate_log_zr(out)
    assert est.neg_log_zr == 0.0
    assert est.ess == pytest.approx(ensemble.size)


def test_single_mode_weights_closed_form(op, bump):
    ens = sample_gaussian(op, 1, 200, seed=3)
    out = cg.reweight(ens, "renormalized", op, bump, 1)
    W1 = build_pair_tensor(op, bump, 1).tensor[0, 0, 0, 0]
    x = np.abs(ens.coefficients[:, 0]) ** 2
    expected = np.exp(-0.5 * W1 * (x - 1.0 / op.eigenvalues[0]) ** 2)
    assert np.abs(out.weights - expected).max() < 1e-12


def test_weights_bounded_by_one(ensemble, op, bump):
    for kind in ("bare", "renormalized"):
        out = cg.reweight(ensemble, kind, op, bump, 4)
        assert out.weights.max() <= 1.0 + 1e-12
        assert out.weights.min() > 0.0


def test_log_zr_single_mode_oracle(op, bump):
    lam1 = op.eigenvalues[0]
    W1 = build_pair_tensor(op, bump, 1).tensor[0, 0, 0, 0]
    # package quadrature against an independent Simpson oracle
    for renorm in (True, False):
        z_pkg = cg.single_mode_log_zr(lam1, W1, renormalized=renorm)
        z_ora = -np.log(simpson_average(lam1, W1, renorm, lambda x: np.ones_like(x)))
        assert abs(z_pkg - z_ora) < 1e-8
    # Monte Carlo against the quadrature
    ens = sample_gaussian(op, 1, 100_000, seed=5150)
    out = cg.reweight(ens, "renormalized", op, bump, 1)
    est = cg.estimate_log_zr(out)
    assert abs(est.neg_log_zr - cg.single_mode_log_zr(lam1, W1)) < 4.0 * est.stderr


def test_moment_single_mode_oracle(op, bump):
    lam1 = op.eigenvalues[0]
    W1 = build_pair_tensor(op, bump, 1).tensor[0, 0, 0, 0]
    m_pkg = cg.single_mode_moment(lam1, W1)
    z = simpson_average(lam1, W1, True, lambda x: np.ones_like(x))
    m_ora = simpson_average(lam1, W1, True, lambda x: x) / z
    assert abs(m_pkg - m_ora) < 1e-8
    ens = sample_gaussian(op, 1, 100_000, seed=5151)
    out = cg.reweight(ens, "renormalized", op, bump, 1)
    mom = cg.reduced_moment(out, 1)
    assert abs(mom.matrix[0, 0].real - m_pkg) < 4.0 * mom.stderr[0, 0]


def test_mean_renorm_energy_is_exchange(op, bump):
    from gibbslab.interaction import exchange_term
    lam1 = op.eigenvalues[0]
    W1 = build_pair_tensor(op, bump, 1).tensor[0, 0, 0, 0]
    assert cg.single_mode_mean_renorm_energy(lam1, W1) == pytest.approx(
        exchange_term(op, bump, 1), rel=1e-10)


def test_free_moment_k1(ensemble, op):
    mom = cg.reduced_moment(ensemble, 1)
    lam = op.eigenvalues[:4]
    target = np.diag(1.0 / lam)
    assert np.abs(mom.matrix - target).max() < 5.0 * mom.stderr.max()
    herm = mom.matrix - mom.matrix.conj().T
    assert np.abs(herm).max() < 1e-12 * np.abs(mom.matrix).max()


def test_free_moment_k2_isserlis(ensemble, op):
    mom = cg.reduced_moment(ensemble, 2)
    lam = op.eigenvalues[:4]
    pairs = cg.symmetric_pairs(4)
    # E |a_i|^2 |a_j|^2 = (1 + delta_ij) / (lam_i lam_j), with the sqrt(2)
    # symmetric-basis weights on the off-diagonal pairs
    for col, (i, j) in enumerate(pairs):
        c2 = 1.0 if i == j else 2.0
        expected = c2 * (1.0 + (i == j)) / (lam[i] * lam[j])
        err = abs(mom.matrix[col, col].real - expected)
        assert err < 5.0 * mom.stderr[col, col], (i, j)


def test_moment_mass_consistency(ensemble, op, bump):
    out = cg.reweight(ensemble, "bare", op, bump, 4)
    mom = cg.reduced_moment(out, 1)
    mass = (np.abs(out.coefficients) ** 2).sum(axis=1)
    weighted_mass = float((out.weights * mass).sum() / out.weights.sum())
    assert np.trace(mom.matrix).real == pytest.approx(weighted_mass, rel=1e-12)


def test_moment_psd(ensemble, op, bump):
    out = cg.reweight(ensemble, "renormalized", op, bump, 4)
    for order in (1, 2):
        mom = cg.reduced_moment(out, order)
        evals = np.linalg.eigvalsh(mom.matrix)
        assert evals.min() > -3.0 * mom.stderr.max()


def test_phase_symmetry(ensemble, op, bump):
    out = cg.reweight(ensemble, "bare", op, bump, 4)
    pseudo = cg.pseudo_moment(out)
    lam = op.eigenvalues[:4]
    for i in range(4):
        for j in range(4):
            stderr = 1.0 / np.sqrt(lam[i] * lam[j] * out.size)
            assert abs(pseudo[i, j]) < 4.0 * stderr


def test_zr_in_unit_interval(ensemble, op, bump):
    out = cg.reweight(ensemble, "bare", op, bump, 4)
    est = cg.estimate_log_zr(out)
    assert est.neg_log_zr > -3.0 * est.stderr  # z_r <= 1 when D >= 0


def test_stderr_clt_scaling(op, bump):
    errs = []
    ns = [1000, 10_000, 100_000]
    for n in ns:
        ens = sample_gaussian(op, 4, n, seed=88)
        out = cg.reweight(ens, "bare", op, bump, 4)
        errs.append(cg.estimate_log_zr(out).stderr)
    slope, _ = np.polyfit(np.log(ns), np.log(errs), 1)
    assert abs(slope + 0.5) < 0.15


def test_renorm_vs_bare_zr_shift_single_mode(op):
    # small grid-delta: the renormalized weight differs from the bare one by
    # the counterterm recentering; both must match their quadrature oracles
    delta = make_pair_potential("grid-delta", op.grid, amplitude=0.05)
    lam1 = op.eigenvalues[0]
    W1 = build_pair_tensor(op, delta, 1).tensor[0, 0, 0, 0]
    ens = sample_gaussian(op, 1, 100_000, seed=4242)
    bare = cg.reweight(ens, "bare", op, delta, 1)
    ren = cg.reweight(ens, "renormalized", op, delta, 1)
    eb, er = cg.estimate_log_zr(bare), cg.estimate_log_zr(ren)
    diff_mc = eb.neg_log_zr - er.neg_log_zr
    diff_oracle = (cg.single_mode_log_zr(lam1, W1, renormalized=False)
                   - cg.single_mode_log_zr(lam1, W1, renormalized=True))
    assert abs(diff_mc - diff_oracle) < 4.0 * np.hypot(eb.stderr, er.stderr)


def test_low_ess_warning(op):
    strong = make_pair_potential("gaussian-bump", op.grid, amplitude=300.0, sigma=0.6)
    ens = sample_gaussian(op, 4, 2000, seed=11)
    with pytest.warns(cg.LowEffectiveSampleSize):
        out = cg.reweight(ens, "bare", op, strong, 4)
    assert cg.estimate_log_zr(out).low_confidence


def test_trace_distance():
    a = np.diag([1.0, 0.0])
    b = np.diag([0.0, 1.0])
    assert cg.trace_distance(a, a) == 0.0
    assert cg.trace_distance(a, b) == pytest.approx(2.0)
    with pytest.raises(Exception):
        cg.trace_distance(np.ones((2, 2)), np.ones((2, 3)))


def test_moment_order_cap(ensemble):
    with pytest.raises(Exception):
        cg.reduced_moment(ensemble, 3)
