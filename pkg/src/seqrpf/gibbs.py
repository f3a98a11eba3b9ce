"""Sequential Gibbs measures on SFTs: marginals, Markov kernels, cylinders, mixing.

The measure ``mu_j = h_j dnu_j`` restricted to cylinders is a non-homogeneous
Markov chain with marginals ``m_j = h_j * nu_j`` and forward kernels

    P_j(a, b) = A_j(a, b) exp(f_j(a)) nu_{j+1}(b) / (lambda_j nu_j(a)).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .rpf import DEFAULT_HORIZON, ConvergenceFit, RpfFamily, fit_log_linear, solve_family
from .systems import SftSpec


@dataclass(frozen=True)
class Cylinder:
    start: int
    word: tuple[int, ...]


@dataclass(frozen=True)
class GibbsFamily:
    spec: SftSpec
    rpf: RpfFamily
    marginals: np.ndarray  # (L+1, D) or (P, D) for periodic tables
    kernels: np.ndarray  # (L, D, D) or (P, D, D)

    def _pos(self, j, vec=False):
        return self.rpf._pos(j, vec)

    def marginal(self, j: int) -> np.ndarray:
        return self.marginals[self._pos(j, True)][: self.spec.alphabet_size(j)]

    def kernel(self, j: int) -> np.ndarray:
        d0, d1 = self.spec.alphabet_size(j), self.spec.alphabet_size(j + 1)
        return self.kernels[self._pos(j)][:d0, :d1]

    def kernel_stack(self, j) -> np.ndarray:
        return self.kernels[self._pos(j)]

    def marginal_stack(self, j) -> np.ndarray:
        return self.marginals[self._pos(j, True)]

    @property
    def indices(self) -> np.ndarray:
        return self.rpf.indices

    def log_lambda_sum(self, j: int, n: int) -> float:
        """``ln lambda_{j,n}(0)``."""
        return float(np.log(self.rpf.lam_at(j + np.arange(n)).real).sum())


def build_gibbs(spec: SftSpec, window=None, n: int = DEFAULT_HORIZON, reference: str = "point") -> GibbsFamily:
    """``window=None`` builds a periodic table; otherwise ``(j0, j1)`` inclusive."""
    fam = solve_family(spec, 0.0, span=window, n=n, reference=reference)
    idx = fam.indices
    h = fam.h_at(idx)
    nu = fam.nu_at(idx)
    nu_next = fam.nu_at(idx + 1)
    A = spec.transition_stack(idx)
    w = np.exp(spec.potential_stack(idx))
    lam = fam.lam_at(idx)
    denom = lam[:, None] * nu
    safe = np.where(denom > 0, denom, 1.0)
    kern = A * (w / safe)[:, :, None] * nu_next[:, None, :]
    kern[denom <= 0] = 0.0
    if fam.period is not None:
        marg = h * nu
    else:
        marg = fam.h * fam.nu
    return GibbsFamily(spec, fam, marg, kern)


def cylinder_mass(family: GibbsFamily, cyl: Cylinder) -> float:
    """Exact ``mu_j`` mass of ``{x_{j+i} = a_i}``; zero for inadmissible words."""
    spec = family.spec
    j, word = cyl.start, tuple(cyl.word)
    if not spec.admissible(j, word):
        return 0.0
    r = len(word) - 1
    fam = family.rpf
    log_f = sum(float(spec.potential(j + i)[a]) for i, a in enumerate(word))
    tail = float(spec.transition(j + r)[word[-1]] @ fam.nu_at(j + r + 1)[: spec.alphabet_size(j + r + 1)])
    return float(fam.h_at(j)[word[0]] * tail * np.exp(log_f - family.log_lambda_sum(j, r + 1)))


def gibbs_ratio(family: GibbsFamily, cyl: Cylinder) -> float:
    """Mass divided by ``exp(S f - ln lambda_{j,r+1})``: equals ``h_j(a_0) (A nu)(a_r)``."""
    spec = family.spec
    j, word = cyl.start, cyl.word
    r = len(word) - 1
    tail = float(spec.transition(j + r)[word[-1]] @ family.rpf.nu_at(j + r + 1)[: spec.alphabet_size(j + r + 1)])
    return float(family.rpf.h_at(j)[word[0]] * tail)


def gibbs_band(family: GibbsFamily, indices, r_max: int = 8) -> tuple[float, float]:
    """Inf and sup of the Gibbs ratio over admissible words of length ``<= r_max`` starting in ``indices``.

    The ratio factors through the first and last symbols, so only pairs
    ``(a_0, a_r)`` reachable in ``r`` steps need to be visited.
    """
    spec = family.spec
    lo, hi = np.inf, -np.inf
    for j in indices:
        d0 = spec.alphabet_size(j)
        hj = family.rpf.h_at(j)[:d0]
        reach = np.eye(d0, dtype=np.int64)
        for r in range(r_max):
            t = j + r
            tail = spec.transition(t) @ family.rpf.nu_at(t + 1)[: spec.alphabet_size(t + 1)]
            vals = (hj[:, None] * tail[None, :])[reach > 0]
            lo, hi = min(lo, float(vals.min())), max(hi, float(vals.max()))
            reach = np.minimum(reach @ spec.transition(t), 1)
    return lo, hi


def sample_paths(family: GibbsFamily, j: int, n: int, count: int, seed: int, batch: int = 8192) -> np.ndarray:
    """``count`` paths ``(x_j, ..., x_{j+n-1})`` drawn from ``mu_j``.

    Batch ``b`` uses the stream ``SeedSequence(seed).spawn`` child ``b``, so the
    output does not depend on how batches are scheduled.
    """
    out = np.empty((count, n), dtype=np.int64)
    children = np.random.SeedSequence(seed).spawn((count + batch - 1) // batch)
    m0 = family.marginal(j)
    for b, child in enumerate(children):
        rng = np.random.default_rng(child)
        sl = slice(b * batch, min(count, (b + 1) * batch))
        size = sl.stop - sl.start
        u = rng.random((size, n))
        x = np.searchsorted(np.cumsum(m0), u[:, 0] * m0.sum(), side="right")
        x = np.minimum(x, len(m0) - 1)
        out[sl, 0] = x
        for i in range(1, n):
            cdf = np.cumsum(family.kernel(j + i - 1), axis=1)
            rows = cdf[x]
            x = (u[:, i : i + 1] * rows[:, -1:] >= rows).sum(axis=1)
            x = np.minimum(x, rows.shape[1] - 1)
            out[sl, i] = x
    return out


def kernel_product(family: GibbsFamily, t: int, n: int) -> np.ndarray:
    """Padded ``P_t P_{t+1} ... P_{t+n-1}``."""
    q = None
    for i in range(n):
        k = family.kernel_stack(t + i)
        q = k if q is None else q @ k
    return q


def correlation(family: GibbsFamily, j: int, n: int, g, f_obs) -> float:
    """``mu_j(g * f o T^n) - mu_j(g) mu_{j+n}(f)`` for depth-1 ``g`` (at time j) and ``f_obs`` (at time j+n)."""
    spec = family.spec
    d0, dn = spec.alphabet_size(j), spec.alphabet_size(j + n)
    g = np.asarray(g, dtype=float)[:d0]
    f = np.asarray(f_obs, dtype=float)[:dn]
    m = family.marginal(j)
    if n == 0:
        return float(m @ (g * f) - (m @ g) * (m @ f))
    q = kernel_product(family, j, n)[:d0, :dn]
    return float(m @ (g * (q @ f)) - (m @ g) * (family.marginal(j + n) @ f))


def correlation_decay_check(family: GibbsFamily, g, f_obs, n_list, j: int = 0) -> ConvergenceFit:
    n_list = list(n_list)
    vals = [abs(correlation(family, j, n, g, f_obs)) for n in n_list]
    return fit_log_linear(n_list, vals, floor_level=1e-15)


@dataclass(frozen=True)
class MixingReport:
    n_values: np.ndarray
    psi: np.ndarray
    C: float
    delta: float


def psi_coefficient(family: GibbsFamily, n: int, times) -> float:
    """``sup |mu(A & B) / (mu(A) mu(B)) - 1|`` over cylinders with gap ``n``.

    By the Markov property the ratio equals ``Q(a, b) / m_{t+n}(b)`` where ``a``
    ends ``A`` at time ``t`` and ``b`` starts ``B``; ``Q`` is the n-step kernel.
    """
    spec = family.spec
    best = 0.0
    for t in times:
        d0, dn = spec.alphabet_size(t), spec.alphabet_size(t + n)
        q = kernel_product(family, t, n)[:d0, :dn]
        m = family.marginal(t + n)
        best = max(best, float(np.abs(q / m[None, :] - 1.0).max()))
    return best


def psi_by_enumeration(family: GibbsFamily, j: int, n: int, r: int, s: int) -> float:
    """Double enumeration over cylinders ``A`` (ranks ``r``) and ``B`` (rank ``s``) at gap ``n``.

    ``A`` fixes ``x_j..x_{j+r}``, ``B`` fixes ``x_{j+r+n}..x_{j+r+n+s}``; the
    joint mass sums over all admissible gap words.
    """
    spec = family.spec

    def words(start, length):
        ranges = [range(spec.alphabet_size(start + i)) for i in range(length)]
        return [w for w in itertools.product(*ranges) if spec.admissible(start, w)]

    A_words = words(j, r + 1)
    b0 = j + r + n
    B_words = words(b0, s + 1)
    gaps = words(j + r + 1, n - 1) if n > 1 else [()]
    best = 0.0
    for a in A_words:
        ma = cylinder_mass(family, Cylinder(j, a))
        for b in B_words:
            # mu_j(B) = mu_{b0}(B) by the pushforward identity
            mb = cylinder_mass(family, Cylinder(b0, b))
            joint = sum(cylinder_mass(family, Cylinder(j, a + g + b)) for g in gaps)
            best = max(best, abs(joint - ma * mb) / (ma * mb))
    return best


def psi_mixing_report(family: GibbsFamily, r_max: int, n_list, times=None) -> MixingReport:
    """psi(n) for cylinder ranks up to ``r_max``.

    With no zero rows or columns every symbol ends some rank-r word and starts
    some rank-s word, so the endpoint reduction gives the same supremum for any
    ``r_max >= 1``.
    """
    if r_max < 1:
        raise ValueError("r_max must be >= 1")
    if times is None:
        times = family.indices
    n_list = np.asarray(list(n_list))
    psi = np.array([psi_coefficient(family, int(n), times) for n in n_list])
    fit = fit_log_linear(n_list, psi, floor_level=1e-15)
    if fit.floor and not np.isfinite(fit.slope):
        return MixingReport(n_list, psi, 0.0, 0.0)
    return MixingReport(n_list, psi, float(np.exp(fit.intercept)), fit.delta)
