import json
from pathlib import Path

import numpy as np
import pytest

from oracles import two_state_phi
from seqrpf.environments import (
    EnvSpec,
    IndependentDriver,
    Layer,
    MarkovDriver,
    deterministic_h_check,
    env_llt_pipeline,
    fixed_measure_layer,
    locality_check,
    marked_hits,
    phi_mixing_exact,
    power_spectral_radius,
    pressure_concentration_report,
    propgrowth_monte_carlo,
    propgrowth_report,
    realize,
    sft_driver,
    spectral_radius_table,
)
from seqrpf.errors import InvalidDriver, PreconditionFailed
from seqrpf.rpf import solve_family
from seqrpf.systems import GOLDEN_MEAN

FULL = np.ones((2, 2), int)
DATA = Path(__file__).parent / "data"


def three_state_env(window=(0, 63), marked=(0,)):
    layers = (Layer(FULL, [0, 0], [0, 1]), Layer(FULL, [0.3, -0.3], [1, 1]), Layer(FULL, [-0.2, 0.2], [0, 0]))
    K = np.array([[0.5, 0.3, 0.2], [0.4, 0.3, 0.3], [0.3, 0.3, 0.4]])
    return EnvSpec(layers, MarkovDriver([0.34, 0.33, 0.33], (K,)), marked=marked, window=window)


def test_single_state_is_constant_system():
    env = EnvSpec((Layer(FULL, [0.1, 0], [0, 1]),), IndependentDriver(([1.0],)), window=(0, 9))
    r = realize(env, 0)
    assert np.all(r.path == 0)
    assert all(np.array_equal(f, [0.1, 0]) for f in r.spec.potentials)


def test_degenerate_independent_driver():
    env = EnvSpec((Layer(FULL, [0.1, 0], [0, 1]), Layer(FULL, [0, 0], [1, 0])), IndependentDriver(([1.0, 0.0],)), window=(0, 9))
    assert np.all(realize(env, 5).path == 0)


def test_golden_trace():
    ref = json.loads((DATA / "golden_trace.json").read_text())
    r = realize(three_state_env(tuple(ref["window"])), ref["seed"])
    assert r.path.tolist() == ref["path"]


def test_realization_reproducible():
    a, b = realize(three_state_env(), 9), realize(three_state_env(), 9)
    assert np.array_equal(a.path, b.path) and np.array_equal(a.hits, b.hits)


def test_invalid_driver():
    with pytest.raises(InvalidDriver):
        MarkovDriver([0.5, 0.5], (np.array([[0.5, 0.6], [0.5, 0.5]]),))
    with pytest.raises(InvalidDriver):
        IndependentDriver(([0.7, 0.7],))
    with pytest.raises(InvalidDriver):
        EnvSpec((Layer(FULL, [0, 0], [0, 1]),), IndependentDriver(([0.5, 0.5],)))


def test_marked_hits():
    path = np.array([0, 1, 0, 1, 1, 0, 1])
    assert marked_hits(path, (0, 1), 1).tolist() == [0, 2, 5]
    assert marked_hits(path, (0, 1), 2).tolist() == [0]


def test_iid_phi_is_zero():
    rep = phi_mixing_exact(IndependentDriver(([0.2, 0.8], [0.6, 0.4])), [1, 2, 5])
    np.testing.assert_allclose(rep.phi, 0.0, atol=1e-15)


@pytest.mark.parametrize("p,q", [(0.3, 0.2), (0.1, 0.6), (0.8, 0.7)])
def test_two_state_phi_eigenvalue(p, q):
    pi = np.array([q, p]) / (p + q)
    drv = MarkovDriver(pi, (np.array([[1 - p, p], [q, 1 - q]]),))
    n = np.arange(1, 12)
    rep = phi_mixing_exact(drv, n)
    np.testing.assert_allclose(rep.phi, two_state_phi(p, q, n), rtol=1e-9, atol=1e-15)


def test_doeblin_bound():
    rng = np.random.default_rng(4)
    delta = 0.1
    kernels = tuple(delta + (1 - 3 * delta) * rng.dirichlet(np.ones(3), size=3) for _ in range(5))
    drv = MarkovDriver(np.ones(3) / 3, kernels)
    n = np.arange(1, 15)
    rep = phi_mixing_exact(drv, n)
    assert np.all(rep.phi <= (1 - 3 * delta) ** n + 1e-12)


def test_phi_bounds_empirical_statistic():
    drv = three_state_env().driver
    rng = np.random.default_rng(0)
    paths = np.array([drv.sample(rng, 6) for _ in range(20_000)])
    n = 3
    phi = phi_mixing_exact(drv, [n], origins=2).phi[0]
    marg = np.bincount(paths[:, 1 + n], minlength=3) / len(paths)
    for x in range(3):
        sel = paths[paths[:, 1] == x, 1 + n]
        cond = np.bincount(sel, minlength=3) / len(sel)
        tv = 0.5 * np.abs(cond - marg).sum()
        assert tv <= phi + 4 * np.sqrt(3 / len(sel))


def test_propgrowth_linear_lower_bound():
    env = three_state_env(marked=(0,))
    rows = propgrowth_report(env, 1, [10, 100, 1000])
    assert all(r["sum"] >= 0.3 * r["n"] for r in rows)
    assert rows[-1]["ratio"] > rows[0]["ratio"]


def test_propgrowth_unreachable():
    layers = three_state_env().layers
    env = EnvSpec(layers, MarkovDriver([0, 0.5, 0.5], (np.array([[1, 0, 0], [0, 0.5, 0.5], [0, 0.5, 0.5]]),)), marked=(0,))
    assert all(r["sum"] == 0 for r in propgrowth_report(env, 1, [10, 100]))


def test_propgrowth_log_decay_diverges():
    env = EnvSpec(three_state_env().layers, MarkovDriver(np.ones(3) / 3, log_decay=(0, 1.0)), marked=(0,))
    rows = propgrowth_report(env, 1, [10, 100, 1000, 10000])
    # numeric series oracle: sum_m 1/ln(m L + 2 + 1) with p = min(1/2, 1/ln(i + 3)) at i = m L
    oracle = np.cumsum([min(0.5, 1 / np.log(m + 3)) for m in range(1, 10001)])
    for r in rows:
        assert r["sum"] == pytest.approx(oracle[r["n"] - 1], rel=1e-12)
    ratios = [r["ratio"] for r in rows]
    assert all(b > a for a, b in zip(ratios, ratios[1:]))


def test_propgrowth_monte_carlo_agrees():
    env = three_state_env(marked=(0, 1))
    exact = propgrowth_report(env, 2, [200])[0]["sum"]
    est, se = propgrowth_monte_carlo(env, 2, 200, 100_000, seed=3)
    assert abs(est - exact) <= 4 * se


def test_bernoulli_reference_radius():
    ts, rho = spectral_radius_table(three_state_env(), (np.pi / 2, 3 * np.pi / 2), points=17)
    np.testing.assert_allclose(rho, np.abs(np.cos(ts / 2)), atol=1e-9)


def test_power_iteration_falls_back():
    assert power_spectral_radius(np.diag([0.5, 0.2]))[0] == pytest.approx(0.5)
    # rotation: two eigenvalues of equal modulus, no convergence
    assert not power_spectral_radius(np.array([[0.0, -0.9], [0.9, 0.0]]))[1]


def test_env_llt_pipeline_compliant_and_control():
    env = three_state_env(window=(0, 2047))
    res = env_llt_pipeline(env, 1, (np.pi / 2, 3 * np.pi / 2), 2, 0.2, [128, 256, 512, 1024])
    assert res.compliant and res.llt.monotone
    unreachable = EnvSpec(env.layers, MarkovDriver([0, 0.5, 0.5], (np.array([[1, 0, 0], [0, 0.5, 0.5], [0, 0.5, 0.5]]),)), marked=(0,))
    ctl = env_llt_pipeline(unreachable, 1, (np.pi / 2, 3 * np.pi / 2), 2, 0.2, [128, 256], run_llt=False)
    assert not ctl.compliant
    assert ctl.block_counts.sum() == 0


def test_single_state_pressure_has_no_spread():
    env = EnvSpec((Layer(FULL, [0.1, 0], [0, 1]),), IndependentDriver(([1.0],)), window=(0, 255))
    rep = pressure_concentration_report(env, [0.2], range(4), [16, 64])
    np.testing.assert_allclose(rep["deviation"], 0.0, atol=1e-15)


def test_pressure_concentration_rate():
    env = EnvSpec((Layer(FULL, [0, 0], [0, 1]), Layer(FULL, [0.4, -0.2], [0, 1])), IndependentDriver(([0.5, 0.5],)))
    rep = pressure_concentration_report(env, [0.2], range(32), [64, 128, 256, 512])
    assert -0.65 <= rep["exponent"][0] <= -0.35


def test_locality():
    env = EnvSpec((Layer(FULL, [0, 0], [0, 1]), Layer(FULL, [0.4, -0.2], [0, 1])), IndependentDriver(([0.5, 0.5],)))
    assert locality_check(env, 3, 0.2, 40, 120) < 1e-12


def test_deterministic_h_positive_and_control():
    m = [0.3, 0.7]
    drv = IndependentDriver(([0.5, 0.5],))
    good = EnvSpec((fixed_measure_layer(FULL, m, [0, 1]), fixed_measure_layer(FULL, m, [1, 0])), drv, window=(0, 63))
    rep = deterministic_h_check(good, range(4))
    assert rep["passed"]
    np.testing.assert_allclose(rep["h"], 1.0, atol=1e-12)
    bad = EnvSpec((fixed_measure_layer(GOLDEN_MEAN, m, [0, 1]), fixed_measure_layer(FULL, m, [1, 0])), drv, window=(0, 63))
    assert not deterministic_h_check(bad, range(4))["passed"]


def test_deterministic_h_precondition():
    drv = IndependentDriver(([0.5, 0.5],))
    env = EnvSpec((Layer(FULL, [0, 0], [0, 1]), Layer(FULL, [0.3, 0], [1, 0])), drv)
    with pytest.raises(PreconditionFailed):
        deterministic_h_check(env, range(2))


def test_fixed_measure_layer_fixes_measure():
    m = np.array([0.2, 0.8])
    layer = fixed_measure_layer(GOLDEN_MEAN, m, [0, 1])
    fam = solve_family(layer.spec(), n=300)
    assert fam.lam[0] == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(fam.nu[0], m, atol=1e-12)


def test_sft_driver_support():
    drv = sft_driver(GOLDEN_MEAN, np.ones((2, 2)), [1.0, 0.0])
    path = drv.sample(np.random.default_rng(1), 200)
    assert not np.any((path[:-1] == 1) & (path[1:] == 1))
