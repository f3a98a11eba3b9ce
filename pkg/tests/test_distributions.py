import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import binomial_pmf, finite_volume_mgf
from seqrpf.distributions import (
    build_chain,
    center_spec,
    central_moments,
    enumeration_mgf,
    exact_distribution,
    exact_log_mgf,
    exact_mgf,
    exact_moments,
    lattice_span,
    observable_span,
    sample_sums,
)
from seqrpf.errors import StateCapExceeded
from seqrpf.gibbs import build_gibbs
from seqrpf.systems import full_shift, golden_mean, random_primitive_spec

Z_GRID = 0.1 * np.exp(2j * np.pi * np.arange(8) / 8)


def test_full_shift_mgf_closed_form():
    for n in (1, 5, 40):
        for z in Z_GRID:
            assert exact_mgf(full_shift(), n, z) == pytest.approx(((1 + np.exp(z)) / 2) ** n, rel=1e-13)


@pytest.mark.parametrize("seed", range(5))
def test_mgf_matches_two_oracles(seed):
    spec = random_primitive_spec(seed, window_length=6)
    for n in (1, 4, 7):
        got = exact_mgf(spec, n, Z_GRID, j=3)
        np.testing.assert_allclose(got, enumeration_mgf(spec, n, Z_GRID, j=3), rtol=1e-11)
        np.testing.assert_allclose(got, finite_volume_mgf(spec, 3, n, Z_GRID), rtol=1e-10)


def test_log_mgf_continues_branch():
    # on the full shift log mgf = n log((1 + e^z) / 2) even where the value winds around 0
    chain = build_chain(full_shift(), 300)
    zs = 0.2j * np.arange(1, 8)
    np.testing.assert_allclose(exact_log_mgf(chain, zs), 300 * np.log((1 + np.exp(zs)) / 2), atol=1e-10)


def test_binomial_distribution():
    d = exact_distribution(full_shift(), 200)
    k, pmf = binomial_pmf(200)
    np.testing.assert_allclose(d.support, k)
    np.testing.assert_allclose(d.probs, pmf, atol=1e-15)
    assert d.sigma**2 == pytest.approx(50.0, rel=1e-12)


@given(st.integers(0, 300), st.integers(1, 40))
def test_distribution_moments_agree(seed, n):
    spec = random_primitive_spec(seed, window_length=4)
    chain = build_chain(spec, n)
    d = exact_distribution(spec, n, chain=chain)
    assert d.probs.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(d.probs >= -1e-15)
    raw = exact_moments(chain, 3)
    assert d.mean == pytest.approx(raw[1], rel=1e-10, abs=1e-10)
    c = central_moments(chain, 3)
    assert d.sigma**2 == pytest.approx(c[2], rel=1e-9, abs=1e-10)
    assert float(d.probs @ d.centered_support**3) == pytest.approx(c[3], rel=1e-7, abs=1e-9)


def test_lattice_span():
    assert lattice_span([0.0, 0.5, 1.5]) == pytest.approx(0.5)
    assert lattice_span([0, 2, 4]) == pytest.approx(2.0)
    assert lattice_span([1.0, np.sqrt(2)]) is None
    assert observable_span(full_shift()) == 1.0


def test_non_lattice_rejected():
    spec = full_shift(3, observable=[0.0, 1.0, np.sqrt(2)])
    with pytest.raises(ValueError):
        exact_distribution(spec, 4)


def test_state_cap():
    with pytest.raises(StateCapExceeded):
        exact_distribution(full_shift(), 1000, state_cap=100)


def test_centering():
    spec = random_primitive_spec(4, window_length=5)
    c = center_spec(spec)
    fam = build_gibbs(c)
    for j in range(5):
        assert fam.marginal(j)[: spec.alphabet_size(j)] @ c.observable(j) == pytest.approx(0.0, abs=1e-13)


def test_sample_sums_match_distribution():
    spec = golden_mean()
    chain = build_chain(spec, 10)
    s = sample_sums(chain, 200_000, seed=1)
    d = exact_distribution(spec, 10, chain=chain)
    assert s.mean() == pytest.approx(d.mean, abs=5 * d.sigma / np.sqrt(s.size))
    assert np.array_equal(s, sample_sums(chain, 200_000, seed=1))
