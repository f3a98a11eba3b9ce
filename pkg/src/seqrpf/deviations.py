"""Averaged pressure, its Legendre transform, local large and moderate deviations."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .distributions import build_chain, center_spec, exact_distribution, exact_log_mgf
from .gibbs import build_gibbs
from .rpf import DEFAULT_HORIZON, cauchy_derivatives, solve_family, trust_radius
from .systems import PERIODIC, SftSpec, compose_scaled


class AveragedPressure:
    """``Pi(z) = lim n^{-1} sum_{j<n} Pi_j(z)`` for a periodic spec: the average over one period.

    Values are cached per ``z``; real ``z`` uses the principal log of the
    positive ratio ``lambda_j(z) / lambda_j(0)``.
    """

    def __init__(self, spec: SftSpec, horizon: int = DEFAULT_HORIZON):
        if spec.extension != PERIODIC:
            raise ValueError("averaged pressure needs a periodic spec")
        self.spec = spec
        self.horizon = horizon
        self.base = solve_family(spec, 0.0, n=horizon)
        self._cache: dict[complex, complex] = {}

    def __call__(self, z) -> complex:
        z = complex(z)
        if z not in self._cache:
            fam = solve_family(self.spec, z, n=self.horizon, r_max=np.inf, strict=False)
            self._cache[z] = complex(np.log(fam.lam / self.base.lam).mean())
        return self._cache[z]

    def real(self, s: float) -> float:
        return self(s).real

    def derivative(self, s: float, step: float = 1e-20) -> float:
        """Complex-step derivative at real ``s``: exact to rounding for analytic ``Pi``."""
        return self(complex(s, step)).imag / step

    def taylor(self, k_max: int, radius: float, nodes: int = 64) -> np.ndarray:
        zs = radius * np.exp(2j * np.pi * np.arange(nodes) / nodes)
        return cauchy_derivatives(np.array([self(z) for z in zs]), radius, k_max).real


def legendre(pi: AveragedPressure, t: float, delta: float, xatol: float = 1e-12) -> tuple[float, float, bool]:
    """``L(t) = sup_{|s| <= delta} (s t - Pi(s))``; returns value, maximizer, and a boundary flag."""
    res = minimize_scalar(lambda s: pi.real(s) - s * t, bounds=(-delta, delta), method="bounded", options={"xatol": xatol})
    s = float(res.x)
    at_edge = abs(abs(s) - delta) < 1e-6 * max(delta, 1.0)
    return float(-res.fun), s, at_edge


def cramer_bernoulli(t):
    """Rate of a fair coin mean at ``t in (0, 1)``."""
    t = np.asarray(t, dtype=float)
    return t * np.log(2 * t) + (1 - t) * np.log(2 * (1 - t))


def convexity_defect(values: np.ndarray) -> float:
    """Largest violation of midpoint convexity on an equispaced grid."""
    v = np.asarray(values)
    return float(max(0.0, (2 * v[1:-1] - v[:-2] - v[2:]).max())) if v.size >= 3 else 0.0


@dataclass(frozen=True)
class LdpReport:
    delta: float
    s_grid: np.ndarray
    pi_values: np.ndarray
    t_grid: np.ndarray
    rate: np.ndarray
    maximizers: np.ndarray
    out_of_range: np.ndarray
    duality_error: float
    convexity_defect: float
    non_convex: bool
    sigma2: float
    limit_gaps: dict
    x: float
    eps: float
    n_values: np.ndarray
    local_gap: np.ndarray
    md_x: float
    md_a_gap: np.ndarray
    md_b_gap: np.ndarray
    extras: dict = field(default_factory=dict)


def pressure_limit_gaps(spec: SftSpec, pi: AveragedPressure, s_values, n: int, j: int = 0) -> dict:
    """Compare the averaged pressure with the two finite-n expressions of the same limit.

    ``(1/n) ln mu_j(exp(s S))`` and ``(1/n) ln [(L_s^{j,n} 1)(x) / (L_0^{j,n} 1)(x)]``
    with ``x`` the symbol 0 at time ``j+n``.  Both differ from ``Pi`` by ``O(1/n)``.
    """
    chain = build_chain(spec, n, j)
    s_values = np.asarray(s_values, dtype=float)
    mgf = exact_log_mgf(chain, s_values).real / n
    ln_vals = []
    p0 = compose_scaled(spec, j, n, 0.0)
    base = np.log(p0.matrix[0].sum()) + p0.log_scale
    for s in s_values:
        p = compose_scaled(spec, j, n, s)
        ln_vals.append((np.log(p.matrix[0].sum().real) + p.log_scale - base) / n)
    avg = np.array([pi.real(s) for s in s_values])
    return {
        "n": n,
        "mgf_gap": float(np.abs(mgf - avg).max()),
        "point_gap": float(np.abs(np.array(ln_vals) - avg).max()),
    }


def ldp_report(
    spec: SftSpec,
    delta: float | None = None,
    t_grid=None,
    n_list=(256, 1024, 4096),
    x: float | None = None,
    eps: float | None = None,
    md_x: float = 1.0,
    j: int = 0,
    grid_points: int = 21,
    horizon: int = DEFAULT_HORIZON,
) -> LdpReport:
    """Legendre rate of the averaged pressure of the centered observable and finite-n deviation gaps.

    ``delta`` defaults to the trust radius of the centered spec.  ``t_grid``
    defaults to ``grid_points`` points strictly inside ``(Pi'(-delta), Pi'(delta))``.
    The local gap uses the interval ``[x - eps, x + eps]`` for ``S_bar / n``;
    ``eps`` defaults to five percent of the range of ``u``.
    """
    cspec = center_spec(spec, build_gibbs(spec, n=horizon))
    pi = AveragedPressure(cspec, horizon)
    delta = trust_radius(cspec) if delta is None else float(delta)
    lo_t, hi_t = pi.derivative(-delta), pi.derivative(delta)
    if t_grid is None:
        t_grid = np.linspace(0.9 * lo_t, 0.9 * hi_t, grid_points)
    t_grid = np.asarray(t_grid, dtype=float)
    s_grid = np.linspace(-delta, delta, 41)
    pi_vals = np.array([pi.real(s) for s in s_grid])
    defect = convexity_defect(pi_vals)
    rates, maxi, edge = [], [], []
    for t in t_grid:
        r, s, e = legendre(pi, t, delta)
        rates.append(r)
        maxi.append(s)
        edge.append(e)
    dual = 0.0
    for s in np.linspace(-0.8 * delta, 0.8 * delta, 9):
        d1 = pi.derivative(s)
        lhs = legendre(pi, d1, delta)[0]
        dual = max(dual, abs(lhs - (s * d1 - pi.real(s))))
    sigma2 = float(pi.taylor(2, delta / 2)[2])

    u_all = np.concatenate([u.ravel() for u in spec.observables])
    if eps is None:
        eps = 0.05 * float(u_all.max() - u_all.min())
    if x is None:
        x = 0.5 * hi_t
    n_list = np.asarray(sorted(n_list))
    chain = build_chain(spec, int(n_list.max()), j)

    def rate_min(a, b):
        if a <= 0 <= b:
            return 0.0
        edge_t = a if a > 0 else b
        return legendre(pi, edge_t, delta)[0]

    target = rate_min(x - eps, x + eps)
    local, md_a, md_b = [], [], []
    for n in n_list:
        d = exact_distribution(spec, int(n), j, chain=chain.truncate(int(n)))
        w = d.centered_support / n
        tol = 1e-12
        p = d.probs[(w >= x - eps - tol) & (w <= x + eps + tol)].sum()
        local.append(abs(np.log(p) / n + target) if p > 0 else np.inf)
        a_n = n**0.1
        pa = d.probs[d.centered_support / (d.sigma * a_n) >= md_x - tol].sum()
        md_a.append(abs(np.log(pa) / a_n**2 + md_x**2 / 2) if pa > 0 else np.inf)
        b_n = n**0.75
        x_b = md_x * np.sqrt(sigma2)
        pb = d.probs[d.centered_support / b_n >= x_b - tol].sum()
        md_b.append(abs(np.log(pb) * n / b_n**2 + x_b**2 / (2 * sigma2)) if pb > 0 else np.inf)
    return LdpReport(
        delta=delta,
        s_grid=s_grid,
        pi_values=pi_vals,
        t_grid=t_grid,
        rate=np.array(rates),
        maximizers=np.array(maxi),
        out_of_range=np.array(edge),
        duality_error=float(dual),
        convexity_defect=defect,
        non_convex=defect > 1e-9,
        sigma2=sigma2,
        limit_gaps=pressure_limit_gaps(cspec, pi, np.linspace(-delta, delta, 5), int(n_list.max()), j),
        x=float(x),
        eps=float(eps),
        n_values=n_list,
        local_gap=np.array(local),
        md_x=float(md_x),
        md_a_gap=np.array(md_a),
        md_b_gap=np.array(md_b),
        extras={"pi_prime_range": (lo_t, hi_t), "local_target": target},
    )
