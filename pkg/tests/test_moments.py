from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import bernoulli_cumulants
from seqrpf.errors import HorizonInsufficient
from seqrpf.moments import (
    coboundary_observable,
    coboundary_solve,
    concentration_report,
    cumulant_report,
    even_moment_constant,
    martingale_decompose,
    martingale_enumeration_check,
    moments_report,
    odd_moment_constant,
    variance_growth,
    variance_perturbation,
)
from seqrpf.systems import full_shift, golden_mean, random_primitive_spec, recode_to_memory_one


def test_moment_constants():
    assert even_moment_constant(2) == 1
    assert even_moment_constant(4) == 3
    assert even_moment_constant(6) == 15
    assert odd_moment_constant(3) == 1
    assert odd_moment_constant(5) == 10
    assert isinstance(odd_moment_constant(5), Fraction)
    with pytest.raises(ValueError):
        even_moment_constant(3)


@given(st.integers(1, 6))
def test_even_constants_are_gaussian_moments(m):
    # E Z^{2m} = (2m - 1)!!
    assert even_moment_constant(2 * m) == np.prod(np.arange(1, 2 * m, 2))


def test_full_shift_fourth_moment_gap():
    rep = moments_report(full_shift(), 0, [64, 256, 1024, 4096])
    # gamma_4 = 3 (n/4)^2 / n^2 ... - n/8 / n^2 exactly, so the gap is 1/(8n)
    np.testing.assert_allclose(rep.gap[4], 1 / (8 * rep.n_values), rtol=1e-8)
    assert rep.slopes[4] == pytest.approx(-1.0, abs=1e-6)


def test_random_spec_moment_slope():
    rep = moments_report(random_primitive_spec(2, window_length=16), 0, [64, 256, 1024, 4096])
    assert abs(rep.slopes[4] + 1) < 0.25
    assert rep.mean_gap.max() < 1e-8 * 4096


def _coboundary_spec(seed):
    base = random_primitive_spec(seed, window_length=6)
    rng = np.random.default_rng(seed)
    Y = [rng.normal(size=d) for d in base.alphabet_sizes]
    return recode_to_memory_one(coboundary_observable(base, Y))


@pytest.mark.parametrize("seed", range(3))
def test_constructed_coboundary_recovered(seed):
    spec = _coboundary_spec(seed)
    w = coboundary_solve(spec)
    assert w.residual <= 1e-8
    vg = variance_growth(spec, [16, 32, 64, 128, 256, 512])
    assert vg["classification"] == "bounded"


def test_generic_observable_is_not_coboundary():
    spec = random_primitive_spec(3, window_length=6)
    w = coboundary_solve(spec)
    assert w.residual > 1e-3
    assert variance_growth(spec, [16, 32, 64, 128, 256, 512])["classification"] == "linear"


def test_coboundary_horizon_too_short():
    with pytest.raises(HorizonInsufficient):
        coboundary_solve(_coboundary_spec(0), horizon=2)


def test_iid_variance_exact():
    vg = variance_growth(full_shift(), [64, 512])
    np.testing.assert_allclose(vg["var_over_n"], 0.25, atol=1e-12)


def test_perturbation_keeps_variance_away_from_zero():
    rep = variance_perturbation(full_shift(), 0.1, 3, seed=1, n=128, window=8)
    assert rep["delta_0"] > 0.1


@pytest.mark.parametrize("spec", [golden_mean(), random_primitive_spec(1, window_length=4)], ids=["golden", "random"])
def test_martingale_by_enumeration(spec):
    rep = martingale_enumeration_check(spec, 8)
    assert rep["conditional_mean"] < 1e-12
    assert rep["identity"] < 1e-12
    assert rep["mass_total"] == pytest.approx(1.0, abs=1e-12)


def test_full_shift_martingale_is_centered_coin():
    dec = martingale_decompose(full_shift(), 10)
    # G_t = u_t - 1/2 because L~ averages to zero on the full shift
    np.testing.assert_allclose(dec.G[5], [-0.5, 0.5], atol=1e-14)
    assert dec.C == pytest.approx(0.5)


def test_concentration_tails():
    rep = concentration_report(random_primitive_spec(1, window_length=16), 256)
    assert rep.violations == 0
    assert rep.t_grid.size == 50
    assert np.all(rep.tails <= rep.bound + 1e-15)


def test_iid_cumulants():
    rep = cumulant_report(full_shift(), 6, [256, 1024])
    kappa = bernoulli_cumulants()
    for k in (2, 4, 6):
        np.testing.assert_allclose(rep.per_step[:, k], kappa[k], atol=1e-8 if k < 6 else 1e-6)


def test_stationary_cumulants_per_step_stable():
    # tilted so that no cumulant is near zero; relative spread is ill-conditioned otherwise
    rep = cumulant_report(golden_mean(potential=[0.3, 0.0]), 6, [256, 512, 1024, 2048, 4096])
    assert np.all(rep.variation[2:] <= 0.1)
