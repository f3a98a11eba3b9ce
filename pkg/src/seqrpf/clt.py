"""Berry-Esseen distances, lattice local CLT, characteristic-function decay and block counting."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson
from scipy.special import ndtr

from .distributions import (
    Chain,
    ExactDistribution,
    build_chain,
    exact_distribution,
    mgf_sweep,
    observable_span,
    sample_sums,
)
from .errors import VarianceTooSmall
from .gibbs import build_gibbs
from .rpf import DEFAULT_HORIZON, normalized_matrices, solve_family
from .systems import PERIODIC, SftSpec


def kolmogorov_distance(dist: ExactDistribution) -> float:
    """``sup_x |P(S_bar / sigma <= x) - Phi(x)|``, checking both one-sided limits at each atom."""
    x = dist.centered_support / dist.sigma
    F = np.cumsum(dist.probs)
    F_left = F - dist.probs
    phi = ndtr(x)
    return float(max(np.abs(F - phi).max(), np.abs(F_left - phi).max()))


def esseen_bound(chain: Chain, dist: ExactDistribution, points: int = 4097) -> float:
    """Smoothing-inequality bound on the Kolmogorov distance.

    ``(2/pi) int_0^T |psi(t) - exp(-t^2/2)| / t dt + 24 / (pi T sqrt(2 pi))`` with
    ``psi`` the exact characteristic function of ``S_bar / sigma`` and
    ``T = pi sigma / h`` (half the lattice period of ``psi``).
    """
    sigma, h = dist.sigma, dist.h
    T = np.pi * sigma / h
    t = np.linspace(0.0, T, points)[1:]
    psi = mgf_sweep(chain, 1j * t / sigma) * np.exp(-1j * t * dist.mean / sigma)
    integrand = np.abs(psi - np.exp(-(t**2) / 2)) / t
    # the integrand vanishes like t^2 at the origin
    t_full = np.concatenate([[0.0], t])
    g_full = np.concatenate([[0.0], integrand])
    integral = simpson(g_full, x=t_full)
    return float(2 / np.pi * integral + 24 / (np.pi * T * np.sqrt(2 * np.pi)))


@dataclass(frozen=True)
class CltReport:
    n_values: np.ndarray
    sigma: np.ndarray
    distance: np.ndarray
    scaled: np.ndarray  # sqrt(n) * D_n
    esseen: np.ndarray
    constant: float
    band_ratio: float
    degenerate: bool = False


def empirical_kolmogorov(samples: np.ndarray) -> tuple[float, float]:
    """Kolmogorov distance of standardized samples to the normal law, and the sample sigma."""
    sigma = float(samples.std())
    x = np.sort((samples - samples.mean()) / sigma)
    m = x.size
    phi = ndtr(x)
    upper = np.arange(1, m + 1) / m
    return float(max(np.abs(upper - phi).max(), np.abs(upper - 1.0 / m - phi).max())), sigma


def berry_esseen_report(spec: SftSpec, n_list, j: int = 0, esseen_points: int = 4097, paths: int = 10**6, seed: int = 0) -> CltReport:
    """Kolmogorov distances along ``n_list``.

    Lattice observables use the exact distribution and also get the Esseen
    bound; other observables fall back to ``paths`` Monte Carlo sums (no bound).
    """
    n_list = np.asarray(sorted(n_list))
    chain = build_chain(spec, int(n_list.max()), j)
    lattice = observable_span(spec) is not None
    sig, dist_n, bound = [], [], []
    for n in n_list:
        c = chain.truncate(int(n))
        if not lattice:
            dn, sg = empirical_kolmogorov(sample_sums(c, paths, seed + int(n)))
            sig.append(sg)
            dist_n.append(dn)
            bound.append(np.nan)
            continue
        d = exact_distribution(spec, int(n), j, chain=c)
        if d.sigma < 1e-12:
            empty = np.full(n_list.size, np.nan)
            return CltReport(n_list, np.zeros(n_list.size), empty, empty, empty, np.nan, np.nan, True)
        sig.append(d.sigma)
        dist_n.append(kolmogorov_distance(d))
        bound.append(esseen_bound(c, d, esseen_points))
    dist_n = np.array(dist_n)
    scaled = np.sqrt(n_list) * dist_n
    return CltReport(
        n_values=n_list,
        sigma=np.array(sig),
        distance=dist_n,
        scaled=scaled,
        esseen=np.array(bound),
        constant=float(scaled.max()),
        band_ratio=float(scaled.max() / scaled.min()),
    )


# ---------------------------------------------------------------------------------
# Local CLT
# ---------------------------------------------------------------------------------


@dataclass(frozen=True)
class LltReport:
    n_values: np.ndarray
    h: float
    sigma: np.ndarray
    gap: np.ndarray
    monotone: bool
    slack: float
    block_counts: np.ndarray | None = None


def llt_gap(dist: ExactDistribution) -> float:
    """``sup_r |sqrt(2 pi) sigma P(S_bar = r) - h exp(-r^2 / (2 sigma^2))|`` over the lattice points."""
    r = dist.centered_support
    s = dist.sigma
    return float(np.abs(np.sqrt(2 * np.pi) * s * dist.probs - dist.h * np.exp(-(r**2) / (2 * s * s))).max())


def is_monotone(values, slack: float) -> bool:
    v = np.asarray(values)
    return bool(np.all(v[1:] <= (1 + slack) * v[:-1]))


def llt_report(spec: SftSpec, n_list, j: int = 0, c0: float = 1e-3, slack: float = 0.1, chain: Chain | None = None) -> LltReport:
    n_list = np.asarray(sorted(n_list))
    chain = build_chain(spec, int(n_list.max()), j) if chain is None else chain
    gaps, sig, h = [], [], None
    for n in n_list:
        d = exact_distribution(spec, int(n), j, chain=chain.truncate(int(n)))
        if d.sigma**2 < c0 * n:
            raise VarianceTooSmall(f"var {d.sigma**2:.3g} below {c0} * n at n={n}")
        gaps.append(llt_gap(d))
        sig.append(d.sigma)
        h = d.h
    gaps = np.array(gaps)
    return LltReport(n_list, float(h), np.array(sig), gaps, is_monotone(gaps, slack), slack)


# ---------------------------------------------------------------------------------
# Characteristic-function decay and GenPer counting
# ---------------------------------------------------------------------------------


def cf_decay_scan(spec: SftSpec, J: tuple[float, float], n_list, points: int = 256, j: int = 0, horizon: int = DEFAULT_HORIZON):
    """``sqrt(n) sup_{t in J} ||L_{it}^{j,n}|| / lambda_{j,n}(0)`` with the max-row-sum norm."""
    n_list = sorted(int(n) for n in n_list)
    top = n_list[-1]
    fam = solve_family(spec, 0.0, span=None if spec.extension == PERIODIC else (j, j + top), n=horizon)
    ts = np.linspace(J[0], J[1], points)
    D = spec.d_max
    prod = np.broadcast_to(np.eye(D, dtype=complex), (points, D, D)).copy()
    log_scale = 0.0
    rows = []
    want = set(n_list)
    for i in range(top):
        t_idx = np.array([j + i])
        base = spec.operator_stack(t_idx, 0.0)[0]
        u = spec.observable_stack(t_idx)[0]
        mats = base[None, :, :] * np.exp(1j * ts[:, None] * u[None, :])[:, None, :]
        prod = mats @ prod / fam.lam_at(j + i).real
        peak = np.abs(prod).max()
        if peak > 0:
            e = np.round(np.log2(peak))
            prod *= 2.0**-e
            log_scale += e * np.log(2.0)
        if i + 1 in want:
            norms = np.abs(prod).sum(axis=2).max(axis=1) * np.exp(log_scale)
            rows.append({"n": i + 1, "sup_ratio": float(norms.max()), "scaled": float(np.sqrt(i + 1) * norms.max())})
    return rows


def normalized_it_stack(spec: SftSpec, fam, indices, ts) -> np.ndarray:
    """``(len(indices), len(ts), D, D)`` normalized operators at ``z = i t``."""
    base = normalized_matrices(spec, fam, indices).real
    u = spec.observable_stack(indices)
    phase = np.exp(1j * ts[None, :, None] * u[:, None, :])
    return base[:, None, :, :] * phase[:, :, None, :]


@dataclass(frozen=True)
class GenPerReport:
    n_values: np.ndarray
    counts: np.ndarray
    per_log: np.ndarray
    increasing: bool
    spectral_radius: float
    B_J: float
    flagged: bool


def reference_loop(reference: SftSpec, ts, horizon: int = DEFAULT_HORIZON) -> np.ndarray:
    """One normalized loop ``L~_{it}^{(m_0-1)} ... L~_{it}^{(0)}`` of the periodic reference system."""
    fam = solve_family(reference, 0.0, n=horizon)
    lo = reference.window[0]
    ops = normalized_it_stack(reference, fam, lo + np.arange(reference.period), ts)
    loop = ops[0]
    for k in range(1, reference.period):
        loop = ops[k] @ loop
    return loop


def genper_block_indicators(
    spec: SftSpec,
    reference: SftSpec,
    J: tuple[float, float],
    s: int,
    delta_0: float,
    n: int,
    points: int = 64,
    j: int = 0,
    horizon: int = DEFAULT_HORIZON,
    chunk: int = 1024,
) -> np.ndarray:
    """Boolean per block start ``m`` in ``[j, j+n)``: ``||L~_{it}^{m, s m_0} - loop^s|| < 1 - delta_0`` for all grid ``t``.

    Operators are normalized by their own RPF data, so ``||L~_{it}|| <= 1``
    and the uniform bound ``B_J`` equals one.
    """
    ts = np.linspace(J[0], J[1], points)
    m0 = reference.period
    L = s * m0
    loop = reference_loop(reference, ts, horizon)
    target = np.broadcast_to(np.eye(loop.shape[-1], dtype=complex), loop.shape).copy()
    for _ in range(s):
        target = loop @ target
    span = None if spec.extension == PERIODIC else (j, j + n + L)
    fam = solve_family(spec, 0.0, span=span, n=horizon)
    out = np.zeros(n, dtype=bool)
    for c0 in range(0, n, chunk):
        starts = j + np.arange(c0, min(n, c0 + chunk))
        prod = None
        for k in range(L):
            ops = normalized_it_stack(spec, fam, starts + k, ts)
            prod = ops if prod is None else ops @ prod
        diff = np.abs(prod - target[None]).sum(axis=3).max(axis=2)
        out[c0 : c0 + starts.size] = np.all(diff < 1 - delta_0, axis=1)
    return out


def genper_block_count(spec, reference, J, s, delta_0, n, **kw) -> int:
    return int(genper_block_indicators(spec, reference, J, s, delta_0, n, **kw).sum())


def genper_report(spec, reference, J, s, delta_0, n_list, points: int = 64, horizon: int = DEFAULT_HORIZON) -> GenPerReport:
    n_list = np.asarray(sorted(n_list))
    ind = genper_block_indicators(spec, reference, J, s, delta_0, int(n_list.max()), points=points, horizon=horizon)
    csum = np.cumsum(ind)
    counts = csum[n_list - 1]
    per_log = counts / np.log(n_list)
    ts = np.linspace(J[0], J[1], points)
    loop = reference_loop(reference, ts, horizon)
    rho = float(np.abs(np.linalg.eigvals(loop)).max())
    increasing = bool(np.all(np.diff(per_log) > 0))
    return GenPerReport(n_list, counts, per_log, increasing, rho, 1.0, not increasing)
