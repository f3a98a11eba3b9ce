"""Random environments: layers chosen by a finite-state driver ``xi_j``.

Each environment state ``y`` carries one SFT layer ``(A_y, f_y, u_y)``.  A
realization draws a driver path over a window and stacks the matching layers
into an :class:`~seqrpf.systems.SftSpec`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .clt import LltReport, genper_block_indicators, llt_report, normalized_it_stack, reference_loop
from .distributions import build_chain
from .errors import InvalidDriver, PreconditionFailed
from .rpf import DEFAULT_HORIZON, pressure_path, solve_family
from .systems import FROZEN, PERIODIC, SftSpec, constant_spec


@dataclass(frozen=True)
class Layer:
    transition: np.ndarray
    potential: np.ndarray
    observable: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.transition)
        object.__setattr__(self, "transition", a)
        object.__setattr__(self, "potential", np.asarray(self.potential, dtype=float))
        object.__setattr__(self, "observable", np.asarray(self.observable, dtype=float))
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise InvalidDriver("environment layers need square transition matrices")
        if self.potential.shape != (a.shape[0],) or self.observable.shape != (a.shape[0],):
            raise InvalidDriver("potential and observable must have one entry per symbol")

    def spec(self) -> SftSpec:
        return constant_spec(self.transition, self.potential, self.observable)


def _check_prob(p, name):
    p = np.asarray(p, dtype=float)
    if np.any(p < -1e-15) or abs(p.sum() - 1) > 1e-12:
        raise InvalidDriver(f"{name} is not a probability vector")
    return np.clip(p, 0, None)


@dataclass(frozen=True)
class IndependentDriver:
    """Independent draws; ``probabilities[i mod K]`` is the law of ``xi_{lo+i}``."""

    probabilities: tuple

    def __post_init__(self):
        ps = tuple(_check_prob(p, f"probabilities[{k}]") for k, p in enumerate(self.probabilities))
        if not ps:
            raise InvalidDriver("no probabilities given")
        object.__setattr__(self, "probabilities", ps)

    @property
    def n_states(self) -> int:
        return self.probabilities[0].size

    def marginal(self, i: int) -> np.ndarray:
        return self.probabilities[i % len(self.probabilities)]

    def kernel(self, i: int) -> np.ndarray:
        return np.tile(self.marginal(i + 1), (self.n_states, 1))

    def marginals(self, count: int) -> np.ndarray:
        return np.array([self.marginal(i) for i in range(count)])

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        u = rng.random(count)
        out = np.empty(count, dtype=np.int64)
        for i in range(count):
            out[i] = min(np.searchsorted(np.cumsum(self.marginal(i)), u[i], side="right"), self.n_states - 1)
        return out


@dataclass(frozen=True)
class MarkovDriver:
    """Inhomogeneous Markov chain: ``kernels[i mod K]`` moves ``xi_{lo+i}`` to ``xi_{lo+i+1}``.

    With ``log_decay`` set to ``(state, c)`` the chain instead jumps to
    ``state`` with probability ``min(1/2, c / ln(i + 3))`` at step ``i`` and is
    uniform over the other states otherwise.
    """

    initial: np.ndarray
    kernels: tuple = ()
    log_decay: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "initial", _check_prob(self.initial, "initial"))
        ks = []
        for k, K in enumerate(self.kernels):
            K = np.asarray(K, dtype=float)
            if K.shape != (self.n_states, self.n_states):
                raise InvalidDriver(f"kernel {k} has shape {K.shape}")
            for r in range(K.shape[0]):
                _check_prob(K[r], f"kernel {k} row {r}")
            ks.append(np.clip(K, 0, None))
        if not ks and self.log_decay is None:
            raise InvalidDriver("a Markov driver needs kernels or a log-decay rule")
        object.__setattr__(self, "kernels", tuple(ks))

    @property
    def n_states(self) -> int:
        return self.initial.size

    def kernel(self, i: int) -> np.ndarray:
        if self.log_decay is not None:
            state, c = self.log_decay
            Y = self.n_states
            p = min(0.5, c / np.log(i + 3))
            K = np.full((Y, Y), (1 - p) / (Y - 1))
            K[:, int(state)] = p
            return K
        return self.kernels[i % len(self.kernels)]

    def marginals(self, count: int) -> np.ndarray:
        out = np.empty((count, self.n_states))
        p = self.initial
        for i in range(count):
            out[i] = p
            p = p @ self.kernel(i)
        return out

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        u = rng.random(count)
        out = np.empty(count, dtype=np.int64)
        x = min(np.searchsorted(np.cumsum(self.initial), u[0], side="right"), self.n_states - 1)
        out[0] = x
        for i in range(1, count):
            row = self.kernel(i - 1)[x]
            x = min(np.searchsorted(np.cumsum(row), u[i], side="right"), self.n_states - 1)
            out[i] = x
        return out


def sft_driver(A, weights, initial) -> MarkovDriver:
    """Homogeneous Markov driver supported on the SFT ``A`` over the state space.

    Finite stand-in for an expanding driver with a common fixed point: a state
    ``a`` with ``A[a, a] = 1`` plays the fixed point, and marking it reproduces
    the constant-loop setting.
    """
    A = np.asarray(A, dtype=float)
    W = A * np.asarray(weights, dtype=float)
    if np.any(W.sum(axis=1) <= 0):
        raise InvalidDriver("driver SFT has a dead state")
    return MarkovDriver(initial, (W / W.sum(axis=1, keepdims=True),))


@dataclass(frozen=True)
class EnvSpec:
    layers: tuple
    driver: object
    marked: tuple = ()
    window: tuple[int, int] = (0, 255)
    extension: str = PERIODIC

    def __post_init__(self):
        if not self.layers:
            raise InvalidDriver("no environment states")
        d = {l.transition.shape[0] for l in self.layers}
        if len(d) != 1:
            raise InvalidDriver("all environment layers must share the alphabet size")
        if self.driver.n_states != len(self.layers):
            raise InvalidDriver("driver and layer counts differ")
        for y in self.marked:
            if not 0 <= y < len(self.layers):
                raise InvalidDriver(f"marked state {y} is not a state")

    @property
    def m0(self) -> int:
        return len(self.marked)


@dataclass(frozen=True)
class Realization:
    seed: int
    window: tuple[int, int]
    path: np.ndarray
    spec: SftSpec
    hits: np.ndarray  # block starts m with the marked cycle present


def marked_hits(path: np.ndarray, marked, s: int) -> np.ndarray:
    """Starts ``m`` with ``path[m + i] == marked[i mod m0]`` for ``i < s m0``."""
    m0 = len(marked)
    if m0 == 0:
        return np.zeros(0, dtype=np.int64)
    L = s * m0
    pattern = np.array([marked[i % m0] for i in range(L)])
    if path.size < L:
        return np.zeros(0, dtype=np.int64)
    windows = np.lib.stride_tricks.sliding_window_view(path, L)
    return np.flatnonzero(np.all(windows == pattern, axis=1))


def realize(env: EnvSpec, seed: int, window=None, s: int = 1) -> Realization:
    lo, hi = env.window if window is None else window
    rng = np.random.default_rng(seed)
    path = env.driver.sample(rng, hi - lo + 1)
    layers = [env.layers[int(y)] for y in path]
    spec = SftSpec(
        window=(lo, hi),
        transitions=tuple(l.transition for l in layers),
        potentials=tuple(l.potential for l in layers),
        observables=tuple(l.observable for l in layers),
        extension=env.extension,
    )
    if not spec.is_primitive():
        raise InvalidDriver("realized system is not primitive")
    return Realization(seed, (lo, hi), path, spec, marked_hits(path, env.marked, s))


# ---------------------------------------------------------------------------------
# Driver statistics
# ---------------------------------------------------------------------------------


@dataclass(frozen=True)
class PhiMixingReport:
    n_values: np.ndarray
    phi: np.ndarray
    partial_sums: np.ndarray


def phi_mixing_exact(driver, n_list, origins: int = 64) -> PhiMixingReport:
    """``phi(n) = max_i max_{x: P(xi_i = x) > 0} TV(P(xi_{i+n} | xi_i = x), P(xi_{i+n}))``.

    For a Markov driver a past event can be replaced by the present state and a
    future event by the state at time ``i+n``, which gives this formula.
    """
    n_list = np.asarray(sorted(n_list))
    top = int(n_list.max())
    marg = driver.marginals(origins + top + 1)
    phi = np.zeros(n_list.size)
    want = {int(n): k for k, n in enumerate(n_list)}
    for i in range(origins):
        Q = np.eye(driver.n_states)
        live = marg[i] > 0
        for n in range(1, top + 1):
            Q = Q @ driver.kernel(i + n - 1)
            if n in want:
                tv = 0.5 * np.abs(Q[live] - marg[i + n][None, :]).sum(axis=1).max()
                phi[want[n]] = max(phi[want[n]], tv)
    return PhiMixingReport(n_list, phi, np.cumsum(phi))


def block_probability(driver, start: int, pattern) -> float:
    """``P(xi_{start+i} = pattern[i] for all i)`` as a product of kernel entries."""
    marg = driver.marginals(start + 1)[start]
    p = marg[pattern[0]]
    for i in range(1, len(pattern)):
        p *= driver.kernel(start + i - 1)[pattern[i - 1], pattern[i]]
    return float(p)


def propgrowth_report(env: EnvSpec, s: int, n_list) -> list[dict]:
    """``sum_{m=1}^{n} P(xi_{m s m0 + i} = y_i for 1 <= i <= s m0)`` against ``sqrt(n ln n)``."""
    m0 = env.m0
    if m0 == 0:
        raise InvalidDriver("no marked states configured")
    L = s * m0
    pattern = [env.marked[i % m0] for i in range(L)]
    n_list = sorted(int(n) for n in n_list)
    top = n_list[-1]
    marg = env.driver.marginals(top * L + L + 2)
    rows, total = [], 0.0
    for m in range(1, top + 1):
        start = m * L + 1
        p = marg[start][pattern[0]]
        for i in range(1, L):
            p *= env.driver.kernel(start + i - 1)[pattern[i - 1], pattern[i]]
        total += p
        if m in n_list:
            ref = np.sqrt(m * np.log(m)) if m > 1 else 1.0
            rows.append({"n": m, "sum": float(total), "ratio": float(total / ref)})
    return rows


def propgrowth_monte_carlo(env: EnvSpec, s: int, n: int, samples: int, seed: int) -> tuple[float, float]:
    """Monte Carlo estimate of the same sum with its standard error.

    Paths are generated step by step; block ``m`` covers times ``m L + 1 .. m L + L``.
    """
    m0 = env.m0
    L = s * m0
    pattern = np.array([env.marked[i % m0] for i in range(L)])
    rng = np.random.default_rng(seed)
    Y = env.driver.n_states
    x = np.minimum((rng.random(samples)[:, None] >= np.cumsum(env.driver.marginals(1)[0])[None, :]).sum(axis=1), Y - 1)
    counts = np.zeros(samples)
    ok = np.ones(samples, dtype=bool)
    for i in range(1, n * L + L + 1):
        cdf = np.cumsum(env.driver.kernel(i - 1), axis=1)[x]
        x = np.minimum((rng.random(samples)[:, None] >= cdf).sum(axis=1), Y - 1)
        if i <= L:
            continue
        off = (i - 1) % L
        if off == 0:
            ok[:] = True
        ok &= x == pattern[off]
        if off == L - 1:
            counts += ok
    return float(counts.mean()), float(counts.std(ddof=1) / np.sqrt(samples))


# ---------------------------------------------------------------------------------
# LLT pipeline
# ---------------------------------------------------------------------------------


def marked_reference(env: EnvSpec) -> SftSpec:
    """Periodic system cycling through the marked states."""
    layers = [env.layers[y] for y in env.marked]
    return SftSpec(
        window=(0, len(layers) - 1),
        transitions=tuple(l.transition for l in layers),
        potentials=tuple(l.potential for l in layers),
        observables=tuple(l.observable for l in layers),
    )


def power_spectral_radius(M: np.ndarray, steps: int = 200, tol: float = 1e-10) -> tuple[float, bool]:
    """Power iteration with a Rayleigh-quotient stopping rule.

    Returns the estimate and whether it converged.  Complex matrices whose
    top eigenvalues share a modulus make the quotient rotate forever; the
    caller falls back to a dense eigensolver then.
    """
    v = np.ones(M.shape[0], dtype=complex) / np.sqrt(M.shape[0])
    prev = None
    for _ in range(steps):
        w = M @ v
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0, True
        q = np.vdot(v, w)
        v = w / nw
        if prev is not None and abs(q - prev) <= tol * max(abs(q), 1e-300):
            return float(abs(q)), True
        prev = q
    return float(abs(prev)), False


def spectral_radius_table(env: EnvSpec, J, points: int = 64, horizon: int = DEFAULT_HORIZON) -> tuple[np.ndarray, np.ndarray]:
    ts = np.linspace(J[0], J[1], points)
    loop = reference_loop(marked_reference(env), ts, horizon)
    rho = np.empty(points)
    for k in range(points):
        r, ok = power_spectral_radius(loop[k])
        rho[k] = r if ok else np.abs(np.linalg.eigvals(loop[k])).max()
    return ts, rho


@dataclass(frozen=True)
class EnvLltResult:
    seed: int
    t_grid: np.ndarray
    spectral_radius: np.ndarray
    n_values: np.ndarray
    block_counts: np.ndarray
    counts_per_log: np.ndarray
    pattern_hits: np.ndarray
    superlog: bool
    llt: LltReport | None
    compliant: bool


def env_llt_pipeline(
    env: EnvSpec,
    seed: int,
    J,
    s: int,
    delta_0: float,
    n_list,
    points: int = 64,
    horizon: int = DEFAULT_HORIZON,
    run_llt: bool = True,
) -> EnvLltResult:
    n_list = np.asarray(sorted(n_list))
    top = int(n_list.max())
    L = s * max(env.m0, 1)
    real = realize(env, seed, (0, top + L + 1), s=s)
    ts, rho = spectral_radius_table(env, J, points, horizon)
    ind = genper_block_indicators(real.spec, marked_reference(env), J, s, delta_0, top, points=points, horizon=horizon)
    counts = np.cumsum(ind)[n_list - 1]
    per_log = counts / np.log(n_list)
    hits = np.array([(real.hits < n).sum() for n in n_list])
    superlog = bool(np.all(np.diff(per_log) > 0))
    compliant = superlog and bool(np.all(rho < 1)) and bool(hits[-1] > 0)
    report = llt_report(real.spec, n_list, 0) if run_llt else None
    return EnvLltResult(seed, ts, rho, n_list, counts, per_log, hits, superlog, report, compliant)


# ---------------------------------------------------------------------------------
# Pressure concentration
# ---------------------------------------------------------------------------------


def window_pressures(spec: SftSpec, z: complex, n: int, horizon: int = DEFAULT_HORIZON) -> np.ndarray:
    """``Pi_j(z)`` for ``j = lo .. lo+n-1`` from one solve over the realized window."""
    lo = spec.window[0]
    vals, _ = pressure_path(spec, z, span=(lo, lo + n - 1), n=horizon)
    return vals


def pressure_concentration_report(env: EnvSpec, z_grid, seeds, n_list, horizon: int = DEFAULT_HORIZON) -> dict:
    """Cross-seed spread of ``(1/n) sum_{j<n} Pi_j(z)`` and its fitted decay exponent in ``n``."""
    n_list = np.asarray(sorted(n_list))
    top = int(n_list.max())
    seeds = sorted(int(s) for s in seeds)
    means = np.zeros((len(z_grid), len(seeds), n_list.size))
    for si, seed in enumerate(seeds):
        real = realize(env, seed, (0, top + 2 * horizon))
        for zi, z in enumerate(z_grid):
            vals = window_pressures(real.spec, z, top, horizon)
            csum = np.cumsum(vals.real)
            means[zi, si] = csum[n_list - 1] / n_list
    dev = means.std(axis=1, ddof=1)
    exps = []
    for zi in range(len(z_grid)):
        if np.all(dev[zi] > 0):
            exps.append(float(np.polyfit(np.log(n_list), np.log(dev[zi]), 1)[0]))
        else:
            exps.append(float("nan"))
    return {
        "z_grid": list(z_grid),
        "n": n_list,
        "seeds": seeds,
        "means": means,
        "deviation": dev,
        "exponent": np.array(exps),
    }


def locality_check(env: EnvSpec, seed: int, z: complex, j: int, n: int, horizon: int = DEFAULT_HORIZON) -> float:
    """``|Pi_j(z)|`` from the full window against the realization cut to ``[j, j+n]``.

    ``Pi_j`` depends only on the layers from ``j`` on, so the difference is a
    truncation tail of the solver.
    """
    real = realize(env, seed)
    full, _ = pressure_path(real.spec, z, span=(j, j), n=horizon)
    cut = real.spec.with_window(j, j + n).replace(extension=FROZEN)
    part, _ = pressure_path(cut, z, span=(j, j), n=horizon)
    return float(abs(full[0] - part[0]))


# ---------------------------------------------------------------------------------
# Deterministic density
# ---------------------------------------------------------------------------------


def deterministic_h_check(env: EnvSpec, seeds, window=None, measure=None, tol: float = 1e-8, horizon: int = DEFAULT_HORIZON) -> dict:
    """Check that ``h_j`` (and thus ``mu_j``) is one fixed vector across times and seeds.

    Precondition: every layer's adjoint fixes ``measure`` with eigenvalue one
    (default: the fixed measure of the first layer).
    """
    if measure is None:
        first = env.layers[0]
        vals, vecs = np.linalg.eig(first.transition * np.exp(first.potential)[:, None])
        measure = np.abs(vecs[:, np.argmax(vals.real)].real)
        measure = measure / measure.sum()
    measure = np.asarray(measure, dtype=float)
    worst_fix = 0.0
    for y, layer in enumerate(env.layers):
        M = layer.transition.T * np.exp(layer.potential)[None, :]
        worst_fix = max(worst_fix, float(np.abs(measure @ M - measure).max()))
    if worst_fix > 1e-10:
        raise PreconditionFailed(f"layers do not share the fixed measure (defect {worst_fix:.3g})")
    ref, spread = None, 0.0
    for seed in sorted(int(s) for s in seeds):
        real = realize(env, seed, window)
        fam = solve_family(real.spec, 0.0, span=None, n=horizon)
        h = fam.h
        if ref is None:
            ref = h[0].copy()
        spread = max(spread, float(np.abs(h - ref[None, :]).max()))
    return {"passed": spread <= tol, "spread": spread, "h": ref, "measure": measure, "fix_defect": worst_fix}


def fixed_measure_layer(transition, measure, observable) -> Layer:
    """Layer whose adjoint fixes ``measure`` with eigenvalue one (potentials from the nonsingular recipe)."""
    A = np.asarray(transition)
    m = np.asarray(measure, dtype=float)
    return Layer(A, np.log(m / (A @ m)), observable)
