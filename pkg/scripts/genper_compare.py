"""Block counts for the compliant Markov environment and the unreachable-state control."""

from pathlib import Path

import numpy as np
import yaml

from seqrpf.config import build_environment
from seqrpf.environments import env_llt_pipeline

ROOT = Path(__file__).resolve().parents[1]
J = (np.pi / 2, 3 * np.pi / 2)
N = [2**k for k in range(8, 15)]

for name in ("env_markov", "env_markov_unreachable"):
    env = build_environment(yaml.safe_load((ROOT / "configs" / f"{name}.yaml").read_text())["environment"])
    res = env_llt_pipeline(env, 1, J, 2, 0.2, N, run_llt=False)
    print(f"{name}: compliant={res.compliant}  max rho={res.spectral_radius.max():.4f}")
    for n, c, r, h in zip(res.n_values, res.block_counts, res.counts_per_log, res.pattern_hits):
        print(f"  n={n:6d}  blocks={c:6d}  blocks/ln n={r:8.2f}  marked hits={h}")
