import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import brute_psi, finite_volume_cylinders, parry_measure_golden
from seqrpf.gibbs import (
    Cylinder,
    build_gibbs,
    correlation_decay_check,
    cylinder_mass,
    gibbs_band,
    gibbs_ratio,
    psi_by_enumeration,
    psi_coefficient,
    psi_mixing_report,
    sample_paths,
)
from seqrpf.systems import FROZEN, full_shift, golden_mean, random_primitive_spec

PHI = (1 + np.sqrt(5)) / 2


def test_golden_mean_parry_marginal():
    fam = build_gibbs(golden_mean())
    np.testing.assert_allclose(fam.marginal(0), parry_measure_golden(), atol=1e-13)


@pytest.mark.parametrize("seed", range(4))
def test_cylinders_match_finite_volume(seed):
    spec = random_primitive_spec(seed, window_length=6)
    fam = build_gibbs(spec)
    for w, m in finite_volume_cylinders(spec, 2, 4).items():
        assert cylinder_mass(fam, Cylinder(2, w)) == pytest.approx(m, rel=1e-10)


@given(st.integers(0, 1000), st.integers(0, 10), st.integers(1, 5))
def test_cylinder_masses_sum_to_one(seed, j, r):
    spec = random_primitive_spec(seed, window_length=4)
    fam = build_gibbs(spec)
    words = itertools.product(*(range(spec.alphabet_size(j + i)) for i in range(r)))
    # the closed-form mass pulls nu back, so it is exact only up to the duality residual
    tol = max(1e-12, 10 * fam.rpf.max_residual)
    assert sum(cylinder_mass(fam, Cylinder(j, w)) for w in words) == pytest.approx(1.0, abs=tol)


@given(st.integers(0, 1000), st.integers(0, 8))
def test_marginals_are_shift_consistent(seed, j):
    # mu_j o T_j^{-1} = mu_{j+1}
    spec = random_primitive_spec(seed, window_length=5)
    fam = build_gibbs(spec)
    d, dn = spec.alphabet_size(j), spec.alphabet_size(j + 1)
    np.testing.assert_allclose(fam.marginal(j)[:d] @ fam.kernel(j)[:d, :dn], fam.marginal(j + 1)[:dn], atol=1e-12)


def test_inadmissible_cylinder_has_zero_mass():
    fam = build_gibbs(golden_mean())
    assert cylinder_mass(fam, Cylinder(0, (1, 1))) == 0.0


def test_gibbs_ratio_band_contains_ratios():
    spec = random_primitive_spec(3, window_length=5)
    fam = build_gibbs(spec)
    lo, hi = gibbs_band(fam, range(5), r_max=4)
    for w in itertools.product(range(3), repeat=3):
        if spec.admissible(1, w):
            assert lo - 1e-14 <= gibbs_ratio(fam, Cylinder(1, w)) <= hi + 1e-14


def test_full_shift_psi_is_zero():
    fam = build_gibbs(full_shift())
    rep = psi_mixing_report(fam, 3, range(1, 6))
    assert np.all(rep.psi == 0.0)


def test_golden_mean_psi_closed_form():
    # the n-step kernel's second eigenvalue is -1/phi^2
    fam = build_gibbs(golden_mean())
    psi = [psi_coefficient(fam, n, [0]) for n in range(1, 12)]
    ratios = np.array(psi[1:]) / np.array(psi[:-1])
    np.testing.assert_allclose(ratios, PHI**-2, rtol=1e-9)


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_psi_double_enumeration(n):
    spec = random_primitive_spec(6, window_length=5)
    fam = build_gibbs(spec)
    # A covers times 2..4, so the endpoint kernel starts at time 4
    endpoint = psi_coefficient(fam, n, [4])
    assert endpoint == pytest.approx(psi_by_enumeration(fam, 2, n, 2, 1), rel=1e-10)
    assert endpoint == pytest.approx(brute_psi(spec, 4, n), rel=1e-8)


def test_psi_rank_zero_rejected():
    with pytest.raises(ValueError):
        psi_mixing_report(build_gibbs(golden_mean()), 0, [1])


def test_sampling_frequencies():
    spec = random_primitive_spec(2, window_length=4)
    fam = build_gibbs(spec)
    paths = sample_paths(fam, 1, 3, 200_000, seed=11)
    for w, m in finite_volume_cylinders(spec, 1, 3).items():
        freq = np.mean(np.all(paths == np.array(w), axis=1))
        sd = np.sqrt(m * (1 - m) / paths.shape[0])
        assert abs(freq - m) < 5 * sd


def test_sampling_reproducible_across_batches():
    fam = build_gibbs(golden_mean())
    a = sample_paths(fam, 0, 5, 1000, seed=3, batch=256)
    b = sample_paths(fam, 0, 5, 1000, seed=3, batch=256)
    assert np.array_equal(a, b)


def test_correlation_decay_rate_golden():
    fam = build_gibbs(golden_mean())
    fit = correlation_decay_check(fam, [1.0, 0.0], [1.0, 0.0], range(1, 15))
    assert fit.delta == pytest.approx(PHI**-2, rel=1e-6)


def test_frozen_window_gibbs():
    spec = random_primitive_spec(4, window_length=6, d_choices=(3,)).replace(extension=FROZEN)
    if not spec.is_primitive():
        pytest.skip("frozen extension not primitive for this draw")
    fam = build_gibbs(spec, (0, 12))
    np.testing.assert_allclose(fam.marginal_stack(np.arange(0, 12)).sum(axis=1), 1.0, atol=1e-12)
