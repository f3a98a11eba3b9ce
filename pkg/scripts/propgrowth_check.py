"""Exact PropGrowth block-probability sums against streaming Monte Carlo, plus the log-decay driver."""

import numpy as np

from seqrpf.environments import EnvSpec, Layer, MarkovDriver, propgrowth_monte_carlo, propgrowth_report

FULL = np.ones((2, 2), int)
layers = (Layer(FULL, [0, 0], [0, 1]), Layer(FULL, [0.3, -0.3], [1, 1]), Layer(FULL, [-0.2, 0.2], [0, 0]))
K = np.array([[0.5, 0.3, 0.2], [0.4, 0.3, 0.3], [0.3, 0.3, 0.4]])

env = EnvSpec(layers, MarkovDriver([0.34, 0.33, 0.33], (K,)), marked=(0, 1))
exact = propgrowth_report(env, 2, [500])[0]["sum"]
est, se = propgrowth_monte_carlo(env, 2, 500, 100_000, seed=0)
print(f"exact {exact:.4f}   monte carlo {est:.4f} +- {se:.4f}   z = {(est - exact) / se:+.2f}")

decay = EnvSpec(layers, MarkovDriver(np.ones(3) / 3, log_decay=(0, 1.0)), marked=(0,))
for row in propgrowth_report(decay, 1, [10, 100, 1000, 10_000, 100_000]):
    print(f"  n={row['n']:6d}  sum={row['sum']:10.2f}  sum/sqrt(n ln n)={row['ratio']:.3f}")
