"""Moments against pressure derivatives, coboundaries, martingale concentration, cumulants."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from math import factorial

import numpy as np

from .distributions import (
    Chain,
    build_chain,
    central_moments,
    exact_distribution,
    exact_log_mgf,
    enumerate_words,
    gibbs_for,
)
from .errors import HorizonInsufficient
from .gibbs import Cylinder, build_gibbs, cylinder_mass
from .rpf import DEFAULT_HORIZON, cauchy_derivatives, normalized_matrices, perturb_spec, pressure_derivatives, trust_radius
from .systems import PERIODIC, SftSpec


def even_moment_constant(k: int) -> Fraction:
    """``C_k = k! / (2^{k/2} (k/2)!)``: the Gaussian moment ``E Z^k``."""
    if k % 2:
        raise ValueError("k must be even")
    return Fraction(factorial(k), 2 ** (k // 2) * factorial(k // 2))


def odd_moment_constant(k: int) -> Fraction:
    """``D_k = k!/3! * 2^{-(k-3)/2} / ((k-3)/2)!``."""
    if k % 2 == 0 or k < 3:
        raise ValueError("k must be odd and >= 3")
    m = (k - 3) // 2
    return Fraction(factorial(k), factorial(3) * 2**m * factorial(m))


def _log_slope(n, y):
    n, y = np.asarray(n, dtype=float), np.abs(np.asarray(y, dtype=float))
    keep = y > 0
    if keep.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(n[keep]), np.log(y[keep]), 1)[0])


# ---------------------------------------------------------------------------------
# Moments
# ---------------------------------------------------------------------------------


@dataclass(frozen=True)
class MomentReport:
    n_values: np.ndarray
    gamma: dict  # k -> gamma_{j,k,n}
    pi_avg: dict  # k -> Pi_{j,k,n}
    predicted: dict  # k -> C_k Pi_2^{k/2} or D_k Pi_2^{(k-3)/2} Pi_3
    gap: dict  # k -> |gamma - predicted|
    gap_self: dict  # k -> same with gamma_2, gamma_3 in place of Pi_2, Pi_3
    slopes: dict  # k -> log-log slope of gap
    mean_gap: np.ndarray  # |mu_j(S) - sum Pi'|
    constants: dict


def pressure_average(ps, j_offset: int, n: int, k: int) -> float:
    return ps.averaged(k, j_offset, n)


def moments_report(spec: SftSpec, j: int, n_list, k_max: int = 4, horizon: int = DEFAULT_HORIZON) -> MomentReport:
    n_list = np.asarray(sorted(n_list))
    top = int(n_list.max())
    chain = build_chain(spec, top, j)
    if spec.extension == PERIODIC:
        ps = pressure_derivatives(spec, k_max=max(k_max, 3), n=horizon)
        offset = int(spec.layer(j))
    else:
        ps = pressure_derivatives(spec, k_max=max(k_max, 3), span=(j, j + top), n=horizon)
        offset = 0
    gamma = {k: [] for k in range(2, k_max + 1)}
    pis = {k: [] for k in range(1, k_max + 1)}
    mean_gap = []
    for n in n_list:
        c = chain.truncate(int(n))
        mom = central_moments(c, k_max)
        for k in range(2, k_max + 1):
            gamma[k].append(mom[k] / n ** (k // 2))
        for k in range(1, k_max + 1):
            pis[k].append(pressure_average(ps, offset, int(n), k))
        mean_gap.append(abs(c.mean - n * pis[1][-1]))
    gamma = {k: np.array(v) for k, v in gamma.items()}
    pis = {k: np.array(v) for k, v in pis.items()}
    pred, gap, gap_self, slopes, consts = {}, {}, {}, {}, {}
    for k in range(2, k_max + 1):
        if k % 2 == 0:
            ck = even_moment_constant(k)
            pred[k] = float(ck) * pis[2] ** (k // 2)
            self_pred = float(ck) * gamma[2] ** (k // 2)
            consts[f"C_{k}"] = ck
        elif k >= 3:
            dk = odd_moment_constant(k)
            pred[k] = float(dk) * pis[2] ** ((k - 3) // 2) * pis[3]
            self_pred = float(dk) * gamma[2] ** ((k - 3) // 2) * gamma[3]
            consts[f"D_{k}"] = dk
        gap[k] = np.abs(gamma[k] - pred[k])
        gap_self[k] = np.abs(gamma[k] - self_pred)
        slopes[k] = _log_slope(n_list, gap[k])
    return MomentReport(n_list, gamma, pis, pred, gap, gap_self, slopes, np.array(mean_gap), consts)


# ---------------------------------------------------------------------------------
# Coboundaries and variance growth
# ---------------------------------------------------------------------------------


@dataclass(frozen=True)
class CoboundaryWitness:
    indices: np.ndarray
    W: np.ndarray  # (len(indices), D): transfer function at each index
    horizon: int
    residual: float
    tail: float
    means: np.ndarray


def coboundary_solve(spec: SftSpec, horizon: int = 200, tol: float = 1e-10, n: int = DEFAULT_HORIZON) -> CoboundaryWitness:
    """Solve ``u_k - mu_k(u_k) = W_{k+1} o T_k - W_k`` by the series ``W_k = sum_{i>=1} L~^{k-i,i} u_{k-i}``.

    The series is summed through the recursion ``W_k = L~_{k-1}(W_{k-1} + u_{k-1})``
    started ``horizon`` steps in the past.  The last series term is reported as
    the truncation tail; a tail above ``tol`` raises ``HorizonInsufficient``.
    """
    lo, hi = spec.window
    idx = np.arange(lo, hi + 2)
    if spec.extension == PERIODIC:
        gibbs = build_gibbs(spec, n=n)
    else:
        gibbs = build_gibbs(spec, (lo - horizon - 1, hi + 2), n=n)
    fam = gibbs.rpf

    def centered_u(t):
        u = spec.observable_stack(t)
        m = gibbs.marginal_stack(t)
        return (u - np.einsum("kd,kd->k", m, u)[:, None]) * spec.ones_stack(t)

    W = np.zeros((idx.size, spec.d_max))
    tail = centered_u(idx - horizon)
    for i in range(horizon):
        t = idx - horizon + i
        ops = normalized_matrices(spec, fam, t).real
        W = np.einsum("kba,ka->kb", ops, W + centered_u(t))
        tail = np.einsum("kba,ka->kb", ops, tail)
    tail_norm = float(np.abs(tail).max())
    if tail_norm > tol:
        raise HorizonInsufficient(f"series tail {tail_norm:.3g} above {tol:.3g} at horizon {horizon}")
    ubar = centered_u(idx[:-1])
    A = spec.transition_stack(idx[:-1])
    diff = ubar[:, :, None] - (W[1:, None, :] - W[:-1, :, None])
    residual = float(np.abs(np.where(A > 0, diff, 0.0)).max())
    means = np.einsum("kd,kd->k", gibbs.marginal_stack(idx[:-1]), spec.observable_stack(idx[:-1]))
    return CoboundaryWitness(idx[:-1], W[:-1], horizon, residual, tail_norm, means)


def coboundary_observable(spec: SftSpec, Y) -> SftSpec:
    """Memory-2 spec with ``u_s(a, b) = Y_{s+1}(b) - Y_s(a)`` (potentials lifted to memory 2)."""
    lo = spec.window[0]
    obs, pots = [], []
    for k in range(spec.period):
        y0 = np.asarray(Y[k], dtype=float)
        y1 = np.asarray(Y[int(spec.layer(lo + k + 1))], dtype=float)
        obs.append(y1[None, :] - y0[:, None])
        pots.append(spec.potentials[k])
    return spec.replace(memory=2, observables=tuple(obs), potentials=tuple(pots))


def variance_growth(spec: SftSpec, n_list, j: int = 0) -> dict:
    """``var_{mu_j}(S_{j,n} u)`` along ``n_list`` and a bounded/linear classification.

    The classification uses the log-log slope over the upper half of
    ``n_list``: above 1/2 is linear growth, otherwise bounded.
    """
    n_list = np.asarray(sorted(n_list))
    chain = build_chain(spec, int(n_list.max()), j).centered()
    var = np.array([central_moments(chain.truncate(int(n)), 2)[2] for n in n_list])
    half = max(2, len(n_list) // 2)
    slope = _log_slope(n_list[-half:], var[-half:]) if np.all(var[-half:] > 1e-14) else 0.0
    return {
        "n": n_list,
        "var": var,
        "var_over_n": var / n_list,
        "sup_var": float(var.max()),
        "slope": slope,
        "classification": "linear" if slope > 0.5 else "bounded",
    }


def variance_perturbation(base: SftSpec, eps: float, count: int, seed: int, n: int = 512, window: int = 16) -> dict:
    """Perturb a constant spec layerwise within ``eps`` and record ``inf_j var_{mu_j}(S_{j,n})/n``."""
    wide = base.with_window(0, window - 1) if base.period != window else base
    mins = []
    for i in range(count):
        spec = perturb_spec(wide, eps, seed + i)
        gibbs = build_gibbs(spec)
        vals = []
        for j in range(spec.period):
            c = build_chain(spec, n, j, gibbs=gibbs).centered()
            vals.append(central_moments(c, 2)[2] / n)
        mins.append(min(vals))
    return {"eps": eps, "n": n, "inf_var_over_n": np.array(mins), "delta_0": float(min(mins))}


# ---------------------------------------------------------------------------------
# Martingale decomposition and concentration
# ---------------------------------------------------------------------------------


@dataclass(frozen=True)
class MartingaleDecomposition:
    """Reverse martingale form ``S - E S = sum_{t=1}^{n-1} D_t(x_{t-1}, x_t) + G_{n-1}(x_{n-1})``.

    ``G_t = E[u_0 + ... + u_t | x_t, x_{t+1}, ...]`` and
    ``D_t = G_{t-1}(x_{t-1}) - (L~ G_{t-1})(x_t)`` has zero conditional mean
    given the future from time ``t`` on.
    """

    n: int
    G: np.ndarray  # (n, D)
    D: np.ndarray  # (n - 1, D, D), zero off admissible pairs
    C: float
    C1: float


def martingale_decompose(spec: SftSpec, n: int, j: int = 0, chain: Chain | None = None) -> MartingaleDecomposition:
    chain = (build_chain(spec, n, j) if chain is None else chain).centered()
    D_sym = chain.ops.shape[1]
    G = np.zeros((n, D_sym))
    Dm = np.zeros((max(n - 1, 0), D_sym, D_sym))
    G[0] = chain.u[0]
    for t in range(1, n):
        pushed = chain.ops[t - 1] @ G[t - 1]
        G[t] = chain.u[t] + pushed
        adm = chain.kernels[t - 1] > 0
        Dm[t - 1] = np.where(adm, G[t - 1][:, None] - pushed[None, :], 0.0)
    C = float(np.abs(Dm).max()) if n > 1 else 0.0
    C1 = float(np.abs(G[n - 1] * chain.valid[n - 1]).max())
    return MartingaleDecomposition(n, G, Dm, C, C1)


def martingale_enumeration_check(spec: SftSpec, n: int, j: int = 0) -> dict:
    """Enumerate words of length ``n``: conditional means of ``D_t`` given ``x_t..x_{n-1}`` and the pathwise identity."""
    gibbs = gibbs_for(spec, j, n)
    chain = build_chain(spec, n, j, gibbs=gibbs)
    dec = martingale_decompose(spec, n, j, chain=chain)
    cu = chain.centered().u
    words = list(enumerate_words(spec, j, n))
    mass = np.array([cylinder_mass(gibbs, Cylinder(j, w)) for w in words])
    worst = 0.0
    for t in range(1, n):
        num, den = {}, {}
        for w, m in zip(words, mass):
            key = w[t:]
            num[key] = num.get(key, 0.0) + m * dec.D[t - 1][w[t - 1], w[t]]
            den[key] = den.get(key, 0.0) + m
        worst = max(worst, max(abs(num[k]) / den[k] for k in num if den[k] > 0))
    ident = 0.0
    for w in words:
        s = sum(cu[t][a] for t, a in enumerate(w))
        m_sum = sum(dec.D[t - 1][w[t - 1], w[t]] for t in range(1, n)) + dec.G[n - 1][w[-1]]
        ident = max(ident, abs(s - m_sum))
    return {"conditional_mean": worst, "identity": ident, "mass_total": float(mass.sum()), "words": len(words)}


@dataclass(frozen=True)
class ConcentrationReport:
    n: int
    C: float
    C1: float
    t_grid: np.ndarray
    tails: np.ndarray
    bound: np.ndarray
    azuma_bound: np.ndarray
    violations: int


def concentration_report(spec: SftSpec, n: int, t_grid=None, j: int = 0, points: int = 50) -> ConcentrationReport:
    """Exact ``mu_j{|S - E S| >= t + C_1}`` against ``2 exp(-t^2 / (4 n C))``."""
    chain = build_chain(spec, n, j)
    dec = martingale_decompose(spec, n, j, chain=chain)
    dist = exact_distribution(spec, n, j, chain=chain)
    dev = np.abs(dist.centered_support)
    if t_grid is None:
        top = max(float(dev.max()) - dec.C1, 1.0)
        t_grid = np.linspace(0.0, top, points)
    t_grid = np.asarray(t_grid, dtype=float)
    order = np.argsort(dev)
    dev_sorted, p_sorted = dev[order], dist.probs[order]
    tail_cum = np.cumsum(p_sorted[::-1])[::-1]
    pos = np.searchsorted(dev_sorted, t_grid + dec.C1 - 1e-9, side="left")
    tails = np.where(pos < dev_sorted.size, tail_cum[np.minimum(pos, dev_sorted.size - 1)], 0.0)
    C = max(dec.C, 1e-300)
    bound = 2 * np.exp(-(t_grid**2) / (4 * n * C))
    azuma = 2 * np.exp(-(t_grid**2) / (2 * max(n - 1, 1) * C**2))
    violations = int((tails > bound * (1 + 1e-12)).sum())
    return ConcentrationReport(n, dec.C, dec.C1, t_grid, tails, bound, azuma, violations)


# ---------------------------------------------------------------------------------
# Cumulants
# ---------------------------------------------------------------------------------


@dataclass(frozen=True)
class CumulantReport:
    n_values: np.ndarray
    cumulants: np.ndarray  # (len(n), k_max + 1), Gamma_k(n)
    per_step: np.ndarray  # Gamma_k(n) / n
    variation: np.ndarray  # (k_max + 1,) relative spread of Gamma_k/n over n
    c0: float
    radius: float
    variance: np.ndarray


def cumulant_report(spec: SftSpec, k_max: int, n_list, j: int = 0, nodes: int = 64, radius: float | None = None) -> CumulantReport:
    """``Gamma_k(n)``: derivatives at 0 of ``log mu_j(exp(z (S - E S)))`` by Cauchy quadrature."""
    n_list = np.asarray(sorted(n_list))
    chain = build_chain(spec, int(n_list.max()), j).centered()
    if radius is None:
        radius = min(0.1, trust_radius(spec) / 4)
    zs = radius * np.exp(2j * np.pi * np.arange(nodes) / nodes)
    rows, var = [], []
    for n in n_list:
        c = chain.truncate(int(n))
        logs = exact_log_mgf(c, zs)
        der = cauchy_derivatives(logs, radius, k_max).real
        rows.append(der)
        var.append(central_moments(c, 2)[2])
    cum = np.array(rows)
    per = cum / n_list[:, None]
    spread = per.max(axis=0) - per.min(axis=0)
    scale = np.abs(per).mean(axis=0)
    variation = np.where(scale > 0, spread / np.where(scale > 0, scale, 1.0), 0.0)
    ks = np.arange(2, k_max + 1)
    fact = np.array([float(factorial(k)) ** 2 for k in ks])
    c0 = float(max(((np.abs(cum[:, k]) / (n_list * fact[i])).max()) ** (1.0 / k) for i, k in enumerate(ks)))
    return CumulantReport(n_list, cum, per, variation, c0, radius, np.array(var))
