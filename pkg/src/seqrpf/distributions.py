"""Exact laws of Birkhoff sums ``S_{j,n} u = sum_{i<n} u_{j+i}(x_{j+i})`` under ``mu_j``.

Everything runs on a :class:`Chain`: the Gibbs marginals, Markov kernels and
normalized operators ``M~_t = diag(1/h_{t+1}) L^{(t)} diag(h_t) / lambda_t(0)``
laid out for ``t = j .. j+n-1``.  Then

    mu_j(exp(z S)) = m_{j+n}^T M~_{j+n-1}(z) ... M~_j(z) 1,

with ``M~_t(z)[b, a] = M~_t[b, a] exp(z u_t(a))``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from fractions import Fraction
from math import comb

import numpy as np

from .errors import StateCapExceeded
from .gibbs import Cylinder, GibbsFamily, build_gibbs, cylinder_mass
from .rpf import DEFAULT_HORIZON, normalized_matrices
from .systems import PERIODIC, SftSpec

DEFAULT_STATE_CAP = 50_000_000


@dataclass(frozen=True)
class Chain:
    start: int
    n: int
    ops: np.ndarray  # (n, D, D) normalized operators at z = 0
    kernels: np.ndarray  # (n, D, D) forward kernels P_t
    marginals: np.ndarray  # (n + 1, D)
    u: np.ndarray  # (n, D)
    valid: np.ndarray  # (n + 1, D) symbol masks

    def centered(self) -> "Chain":
        mean = np.einsum("td,td->t", self.marginals[:-1], self.u)
        return replace(self, u=(self.u - mean[:, None]) * self.valid[:-1])

    @property
    def means(self) -> np.ndarray:
        return np.einsum("td,td->t", self.marginals[:-1], self.u)

    @property
    def mean(self) -> float:
        return float(self.means.sum())

    def with_u(self, u) -> "Chain":
        return replace(self, u=np.asarray(u, dtype=float) * self.valid[:-1])

    def truncate(self, n: int) -> "Chain":
        return replace(
            self,
            n=n,
            ops=self.ops[:n],
            kernels=self.kernels[:n],
            marginals=self.marginals[: n + 1],
            u=self.u[:n],
            valid=self.valid[: n + 1],
        )


def gibbs_for(spec: SftSpec, j: int, n: int, horizon: int = DEFAULT_HORIZON) -> GibbsFamily:
    if spec.extension == PERIODIC:
        return build_gibbs(spec, n=horizon)
    return build_gibbs(spec, (j, j + n), n=horizon)


def build_chain(spec: SftSpec, n: int, j: int = 0, gibbs: GibbsFamily | None = None, horizon: int = DEFAULT_HORIZON) -> Chain:
    gibbs = gibbs_for(spec, j, n, horizon) if gibbs is None else gibbs
    idx = j + np.arange(n)
    idx1 = j + np.arange(n + 1)
    if spec.extension == PERIODIC and gibbs.rpf.period is not None:
        # solve one period, tile by layer index
        P = spec.period
        per = spec.window[0] + np.arange(P)
        ops_p = normalized_matrices(spec, gibbs.rpf, per)
        layer = spec.layer(idx)
        ops = ops_p[layer]
    else:
        ops = normalized_matrices(spec, gibbs.rpf, idx)
    return Chain(
        start=j,
        n=n,
        ops=np.ascontiguousarray(ops.real),
        kernels=gibbs.kernel_stack(idx),
        marginals=gibbs.marginal_stack(idx1),
        u=spec.observable_stack(idx),
        valid=spec.ones_stack(idx1),
    )


# ---------------------------------------------------------------------------------
# Moment generating function
# ---------------------------------------------------------------------------------


def mgf_sweep(chain: Chain, zs, log: bool = False):
    """``mu_j(exp(z S))`` for every ``z`` in ``zs``.

    With ``log=True`` returns the logarithm continued step by step: each step
    multiplies by the ratio of consecutive partial mgfs, whose principal log
    is used.  This keeps the branch analytic in ``z`` wherever the partial
    mgfs stay away from zero.  Otherwise the value is returned, rescaled by
    exact powers of two along the way.
    """
    zs = np.atleast_1d(np.asarray(zs, dtype=complex))
    D = chain.ops.shape[1]
    v = np.ones((zs.size, D), dtype=complex)
    acc = np.zeros(zs.size, dtype=complex) if log else np.zeros(zs.size)
    for t in range(chain.n):
        w = np.exp(zs[:, None] * chain.u[t][None, :]) * v
        v = w @ chain.ops[t].T
        if log:
            c = v @ chain.marginals[t + 1]
            acc += np.log(c)
            v = v / c[:, None]
        else:
            peak = np.abs(v).max(axis=1)
            e = np.where(peak > 0, np.round(np.log2(np.where(peak > 0, peak, 1.0))), 0.0)
            v = v * np.exp2(-e)[:, None]
            acc += e
    if log:
        return acc
    return (v @ chain.marginals[chain.n]) * np.exp2(acc)


def exact_mgf(spec: SftSpec, n: int, z, j: int = 0, chain: Chain | None = None):
    """Exact ``mu_j(exp(z S_{j,n} u))``; scalar in, scalar out."""
    chain = build_chain(spec, n, j) if chain is None else chain
    out = mgf_sweep(chain, z)
    return complex(out[0]) if np.ndim(z) == 0 else out


def exact_log_mgf(chain: Chain, zs) -> np.ndarray:
    return mgf_sweep(chain, zs, log=True)


def enumerate_words(spec: SftSpec, j: int, n: int):
    ranges = [range(spec.alphabet_size(j + i)) for i in range(n)]
    for w in itertools.product(*ranges):
        if spec.admissible(j, w):
            yield w


def enumeration_mgf(spec: SftSpec, n: int, z, j: int = 0, gibbs: GibbsFamily | None = None):
    """Sum of ``cylinder_mass * exp(z S)`` over all admissible words of length ``n``."""
    gibbs = gibbs_for(spec, j, n) if gibbs is None else gibbs
    zs = np.atleast_1d(np.asarray(z, dtype=complex))
    total = np.zeros(zs.size, dtype=complex)
    for w in enumerate_words(spec, j, n):
        s = sum(float(spec.observable(j + i)[a]) for i, a in enumerate(w))
        total += cylinder_mass(gibbs, Cylinder(j, w)) * np.exp(zs * s)
    return complex(total[0]) if np.ndim(z) == 0 else total


# ---------------------------------------------------------------------------------
# Lattice distribution
# ---------------------------------------------------------------------------------


def lattice_span(values, tol: float = 1e-9, max_den: int = 1000) -> float | None:
    """Largest ``h`` with every value in ``h Z``; ``None`` if no such span exists.

    Values are reconstructed as rationals relative to the largest magnitude;
    the span is the gcd of the rational numerators over the common denominator.
    """
    vals = np.unique(np.abs(np.asarray(values, dtype=float).ravel()))
    vals = vals[vals > tol]
    if vals.size == 0:
        return None
    ref = float(vals.max())
    fracs = []
    for v in vals:
        fr = Fraction(v / ref).limit_denominator(max_den)
        if abs(float(fr) * ref - v) > tol * max(1.0, ref):
            return None
        fracs.append(fr)
    den = 1
    for fr in fracs:
        den = den * fr.denominator // np.gcd(den, fr.denominator)
    nums = [int(fr * den) for fr in fracs]
    g = 0
    for k in nums:
        g = int(np.gcd(g, k))
    return ref * g / den


def observable_span(spec: SftSpec) -> float | None:
    vals = np.concatenate([u.ravel() for u in spec.observables])
    return lattice_span(vals)


@dataclass(frozen=True)
class ExactDistribution:
    """Law of ``S_{j,n} u`` on the lattice ``h Z``."""

    n: int
    h: float
    support: np.ndarray
    probs: np.ndarray
    mean: float
    sigma: float

    @property
    def centered_support(self) -> np.ndarray:
        return self.support - self.mean

    def cdf(self) -> np.ndarray:
        return np.cumsum(self.probs)


def exact_distribution(
    spec: SftSpec,
    n: int,
    j: int = 0,
    chain: Chain | None = None,
    h: float | None = None,
    state_cap: int = DEFAULT_STATE_CAP,
) -> ExactDistribution:
    """Dynamic programme over (symbol, lattice value) driven by the Markov kernels.

    ``u`` must take values in ``h Z``.  Zero ``u`` gives the point mass at 0.
    """
    chain = build_chain(spec, n, j) if chain is None else chain
    u = chain.u
    if h is None:
        h = lattice_span(u[chain.valid[:-1] > 0])
    if h is None:
        if np.all(np.abs(u) < 1e-12):
            return ExactDistribution(n, 1.0, np.array([0.0]), np.array([1.0]), 0.0, 0.0)
        raise ValueError("observable is not lattice valued")
    k = np.rint(u / h).astype(np.int64)
    if np.abs(k * h - u).max() > 1e-9 * max(1.0, np.abs(u).max()):
        raise ValueError(f"observable is not supported on {h} Z")
    valid = chain.valid[:-1] > 0
    kmin = np.where(valid, k, np.iinfo(np.int64).max).min(axis=1)
    kmax = np.where(valid, k, np.iinfo(np.int64).min).max(axis=1)
    width = int((kmax - kmin).sum()) + 1
    D = chain.marginals.shape[1]
    if width * D > state_cap:
        raise StateCapExceeded(f"{width * D} states exceed the cap {state_cap}")
    shift = np.where(valid, k - kmin[:, None], 0)
    p = np.zeros((D, width))
    for a in range(D):
        p[a, shift[0, a]] = chain.marginals[0, a]
    w = int(kmax[0] - kmin[0]) + 1
    for t in range(1, n):
        tmp = chain.kernels[t - 1].T @ p[:, :w]
        step = int(kmax[t] - kmin[t])
        p[:, : w + step] = 0.0
        for b in range(D):
            s = shift[t, b]
            p[b, s : s + w] += tmp[b]
        w += step
    probs = p[:, :w].sum(axis=0)
    support = (kmin.sum() + np.arange(w)) * h
    mean = float(probs @ support)
    var = float(probs @ (support - mean) ** 2)
    return ExactDistribution(n, float(h), support, probs, mean, float(np.sqrt(max(var, 0.0))))


# ---------------------------------------------------------------------------------
# Moments without a lattice
# ---------------------------------------------------------------------------------


def exact_moments(chain: Chain, k_max: int) -> np.ndarray:
    """Raw moments ``E[S^p]`` for ``p = 0..k_max`` by the binomial recursion over the chain."""
    D = chain.marginals.shape[1]
    binom = np.array([[comb(p, q) for q in range(k_max + 1)] for p in range(k_max + 1)], dtype=float)
    powers = np.arange(k_max + 1)
    R = chain.marginals[0][None, :] * chain.u[0][None, :] ** powers[:, None]
    for t in range(1, chain.n):
        tmp = R @ chain.kernels[t - 1]
        up = chain.u[t][None, :] ** powers[:, None]  # (p, D)
        new = np.zeros_like(tmp)
        for p in range(k_max + 1):
            new[p] = (binom[p, : p + 1, None] * tmp[: p + 1] * up[p::-1][: p + 1]).sum(axis=0)
        R = new
    return R.sum(axis=1)


def central_moments(chain: Chain, k_max: int) -> np.ndarray:
    return exact_moments(chain.centered(), k_max)


def center_spec(spec: SftSpec, gibbs: GibbsFamily | None = None) -> SftSpec:
    """Replace ``u_j`` by ``u_j - mu_j(u_j)`` on every window layer."""
    gibbs = build_gibbs(spec) if gibbs is None else gibbs
    lo = spec.window[0]
    obs = tuple(
        spec.observables[k] - float(gibbs.marginal(lo + k) @ spec.observables[k]) for k in range(spec.period)
    )
    return spec.replace(observables=obs)


def sample_sums(chain: Chain, paths: int, seed: int, batch: int = 65536) -> np.ndarray:
    """Monte Carlo draws of ``S`` along the chain; one seeded stream per batch."""
    out = np.empty(paths)
    children = np.random.SeedSequence(seed).spawn((paths + batch - 1) // batch)
    for b, child in enumerate(children):
        rng = np.random.default_rng(child)
        size = min(batch, paths - b * batch)
        m0 = chain.marginals[0]
        x = np.minimum(np.searchsorted(np.cumsum(m0), rng.random(size) * m0.sum(), side="right"), m0.size - 1)
        s = chain.u[0][x].copy()
        for t in range(1, chain.n):
            cdf = np.cumsum(chain.kernels[t - 1], axis=1)[x]
            x = np.minimum((rng.random(size)[:, None] * cdf[:, -1:] >= cdf).sum(axis=1), cdf.shape[1] - 1)
            s += chain.u[t][x]
        out[b * batch : b * batch + size] = s
    return out
