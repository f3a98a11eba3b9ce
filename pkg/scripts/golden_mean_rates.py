"""Golden-mean shift: convergence rate of normalized iterates and psi-mixing rate vs phi^-2."""

import numpy as np

from seqrpf.gibbs import build_gibbs, psi_mixing_report
from seqrpf.rpf import convergence_rate_fit
from seqrpf.systems import golden_mean

PHI = (1 + np.sqrt(5)) / 2

fit = convergence_rate_fit(golden_mean(), 0)
print(f"iterate residual rate  {fit.delta:.6f}  (phi^-2 = {PHI**-2:.6f}, r^2 = {fit.r_squared:.4f})")
rep = psi_mixing_report(build_gibbs(golden_mean()), 3, range(1, 12))
print(f"psi-mixing rate        {rep.delta:.6f}  C = {rep.C:.4f}")
for n, p in zip(rep.n_values, rep.psi):
    print(f"  n={n:2d}  psi={p:.3e}")
