import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from seqrpf.errors import NotConverged
from seqrpf.rpf import (
    convergence_rate_fit,
    fit_log_linear,
    nonsingular_check,
    normalize_family,
    normalized_matrices,
    pressure,
    pressure_derivatives,
    solve_family,
    solve_triplet,
    stability_sweep,
    trust_radius,
)
from seqrpf.systems import FROZEN, CircleSpec, constant_spec, full_shift, golden_mean, random_primitive_spec

PHI = (1 + np.sqrt(5)) / 2


def period_product(spec, j):
    M = np.eye(spec.alphabet_size(j))
    for t in range(j, j + spec.period):
        M = spec.operator_matrix(t) @ M
    return M


def test_full_shift_triplet():
    fam = solve_family(full_shift())
    assert fam.lam[0] == pytest.approx(2.0, abs=1e-14)
    np.testing.assert_allclose(fam.h[0], [1, 1], atol=1e-14)
    np.testing.assert_allclose(fam.nu[0], [0.5, 0.5], atol=1e-14)


def test_full_shift_complex_eigenvalue():
    z = 0.1 + 0.15j
    fam = solve_family(full_shift(), z)
    assert fam.lam[0] == pytest.approx(1 + np.exp(z), abs=1e-13)


def test_golden_mean_triplet():
    fam = solve_family(golden_mean())
    assert fam.lam[0] == pytest.approx(PHI, abs=1e-13)
    np.testing.assert_allclose(fam.nu[0], [1 / PHI, 1 / PHI**2], atol=1e-13)
    assert fam.max_residual < 1e-13


@pytest.mark.parametrize("seed", range(6))
def test_period_product_spectral_radius(seed):
    spec = random_primitive_spec(seed, window_length=7)
    fam = solve_family(spec)
    rho = np.abs(np.linalg.eigvals(period_product(spec, 0))).max()
    assert np.prod(fam.lam) == pytest.approx(rho, rel=1e-10)
    # h_0 is the Perron vector of the period product
    vals, vecs = np.linalg.eig(period_product(spec, 0))
    v = np.abs(vecs[:, np.argmax(np.abs(vals))])
    h = fam.h_at(0)[: spec.alphabet_size(0)]
    np.testing.assert_allclose(h / h.sum(), v / v.sum(), rtol=1e-9)


@given(st.integers(0, 500), st.floats(-2, 2))
def test_potential_shift_scales_eigenvalue(seed, c):
    spec = random_primitive_spec(seed, window_length=3)
    shifted = spec.replace(potentials=tuple(f + c for f in spec.potentials))
    a, b = solve_family(spec), solve_family(shifted)
    np.testing.assert_allclose(b.lam, a.lam * np.exp(c), rtol=1e-10)
    np.testing.assert_allclose(b.h, a.h, atol=1e-10)


def test_frozen_window_family():
    spec = random_primitive_spec(2, window_length=6, d_choices=(3,)).replace(extension=FROZEN)
    fam = solve_family(spec, span=(0, 20))
    assert fam.max_residual < 1e-10


def test_triplet_matches_family():
    spec = golden_mean(window=(0, 4)).replace(extension=FROZEN, potentials=tuple(np.array([0.1 * k, 0.0]) for k in range(5)))
    tr = solve_triplet(spec, 3)
    fam = solve_family(spec, span=(0, 10))
    assert tr.lam == pytest.approx(fam.lam_at(3), rel=1e-12)
    assert tr.eigen_residual < 1e-10


def test_not_converged_on_short_horizon():
    spec = random_primitive_spec(4, window_length=5)
    with pytest.raises(NotConverged):
        solve_family(spec, n=8, tol=1e-15)


def test_trust_disk_enforced():
    with pytest.raises(ValueError, match="trust disk"):
        solve_family(full_shift(), 0.3)
    assert trust_radius(full_shift()) == 0.25


def test_normalized_family_identities():
    spec = random_primitive_spec(5, window_length=6)
    f0 = solve_family(spec)
    n0 = normalize_family(f0, f0)
    np.testing.assert_allclose(n0.tilde_lambda, 1.0, atol=1e-12)
    np.testing.assert_allclose(n0.tilde_h[:, :2], 1.0, atol=1e-12)
    fz = solve_family(spec, 0.05 + 0.02j)
    nz = normalize_family(fz, f0)
    # tilde_nu(tilde_h) = 1 by construction
    np.testing.assert_allclose(np.einsum("ka,ka->k", nz.tilde_nu, nz.tilde_h), 1.0, atol=1e-12)
    ops = normalized_matrices(spec, f0, f0.indices)
    ones = spec.ones_stack(f0.indices)
    np.testing.assert_allclose(np.einsum("kba,ka->kb", ops, ones) * spec.ones_stack(f0.indices + 1), spec.ones_stack(f0.indices + 1), atol=1e-12)


def test_full_shift_pressure_derivatives():
    ps = pressure_derivatives(full_shift(), k_max=4)
    # Pi(z) = log((1 + e^z) / 2)
    np.testing.assert_allclose(ps.derivatives[:, 0].real, [0, 0.5, 0.25, 0, -0.125], atol=1e-10)
    assert ps.derivative_error.max() < 1e-8


def test_pressure_is_log_ratio():
    spec = random_primitive_spec(9, window_length=4)
    z = 0.04
    p = pressure(spec, 1, z)
    ratio = solve_family(spec, z).lam_at(1) / solve_family(spec).lam_at(1)
    assert p == pytest.approx(np.log(ratio), abs=1e-12)


def test_golden_mean_convergence_rate():
    fit = convergence_rate_fit(golden_mean(), 0)
    assert fit.delta == pytest.approx(PHI**-2, rel=0.05)
    assert fit.slope < -0.01


def test_fit_log_linear_exact():
    n = np.arange(1, 10)
    fit = fit_log_linear(n, 3 * 0.5**n)
    assert fit.delta == pytest.approx(0.5)
    assert np.exp(fit.intercept) == pytest.approx(3)


def test_stability_responses_shrink():
    # on the full shift h is identically one, so use the golden mean
    rows = stability_sweep(golden_mean(window=(0, 3)), [1e-1, 1e-2, 1e-3], seed=2)
    for a, b in zip(rows, rows[1:]):
        for key in ("lambda", "h", "nu"):
            assert b[key] * 5 <= a[key]


@pytest.mark.parametrize("seed", range(3))
def test_nonsingular_recipe(seed):
    rng = np.random.default_rng(seed)
    spec = random_primitive_spec(seed, window_length=5)
    m = [rng.dirichlet(np.ones(d)) for d in spec.alphabet_sizes]
    rep = nonsingular_check(spec, m)
    assert rep["lambda_error"] <= 1e-10
    assert rep["nu_error"] <= 1e-10


def test_circle_backend_doubling():
    spec = CircleSpec((0, 0), (2,), (np.array([0.0]),), (np.array([0.5, 0.0, 0.5]),), mode_cutoff=8)
    fam = solve_family(spec)
    assert fam.lam[0].real == pytest.approx(2.0, abs=1e-12)


def test_circle_backend_weighted():
    # f(x) = 0.1 cos(2 pi x); compare with a finer Galerkin space
    f = np.array([0.05, 0.0, 0.05])
    u = np.array([0.5, 0.0, 0.5])
    lam = [solve_family(CircleSpec((0, 0), (2,), (f,), (u,), mode_cutoff=K)).lam[0].real for K in (8, 16)]
    assert lam[0] == pytest.approx(lam[1], abs=1e-12)
    assert lam[0] > 2.0
