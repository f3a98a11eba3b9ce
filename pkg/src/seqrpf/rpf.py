"""Sequential RPF triplets, the normalized family, pressure and stability.

Every layer ``j`` gets its own finite horizon: ``h_j`` is read off the
normalized past product ``L^{j-n,n} 1`` and ``nu_j`` off the normalized
future product ``theta_{j+n} L^{j,n}``.  The eigenvalue then follows from the
duality ``lambda_j = nu_{j+1}(L^{(j)} 1)``.  Errors of all three decay like
``delta^n`` for primitive specs.

Work is batched over ``j``: a family over a window is a handful of stacked
``(J, D, D)`` matrix-vector sweeps.  For periodic specs a single period is
solved and looked up modulo the period.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BranchLoss, NonPrimitive, NotConverged, SpecError
from .systems import PERIODIC, SftSpec

DEFAULT_HORIZON = 60
CAUCHY_NODES = 64


def trust_radius(system) -> float:
    if isinstance(system, SftSpec):
        usup = system.u_sup
    else:
        usup = float(max(np.abs(c).sum() for c in system.observables))
    return 0.5 / (1.0 + usup)


@dataclass(frozen=True)
class RpfTriplet:
    j: int
    z: complex
    lam: complex
    h: np.ndarray
    nu: np.ndarray
    n_used: int
    eigen_residual: float
    duality_residual: float


@dataclass(frozen=True)
class RpfFamily:
    """Triplets for consecutive indices, with lookup by absolute time.

    For a periodic table (``period`` set) arrays have one row per layer of the
    period.  Otherwise ``lam`` covers ``start .. start+L-1`` and ``h``/``nu``
    cover one more index so that ``h_{j+1}`` is available for every ``j``.
    Residuals are relative: divided by ``|lambda_j|``.
    """

    start: int
    z: complex
    lam: np.ndarray
    h: np.ndarray
    nu: np.ndarray
    n_used: int
    eigen_residual: np.ndarray
    duality_residual: np.ndarray
    period: int | None = None

    def _pos(self, j, vec: bool):
        j = np.asarray(j)
        k = j - self.start
        if self.period is not None:
            return np.mod(k, self.period)
        size = self.h.shape[0] if vec else self.lam.shape[0]
        if np.any(k < 0) or np.any(k >= size):
            raise IndexError(f"index {j} outside solved range starting at {self.start}")
        return k

    def lam_at(self, j):
        return self.lam[self._pos(j, False)]

    def h_at(self, j):
        return self.h[self._pos(j, True)]

    def nu_at(self, j):
        return self.nu[self._pos(j, True)]

    @property
    def indices(self) -> np.ndarray:
        return self.start + np.arange(self.lam.shape[0])

    @property
    def max_residual(self) -> float:
        return float(max(self.eigen_residual.max(), self.duality_residual.max()))

    def triplet(self, j: int) -> RpfTriplet:
        k = int(self._pos(j, False))
        return RpfTriplet(
            j=int(j),
            z=self.z,
            lam=complex(self.lam[k]),
            h=self.h_at(j),
            nu=self.nu_at(j),
            n_used=self.n_used,
            eigen_residual=float(self.eigen_residual[k]),
            duality_residual=float(self.duality_residual[k]),
        )


def _span_indices(system, span):
    if span is None:
        if system.extension != PERIODIC:
            span = system.window
        else:
            lo, hi = system.window
            return np.arange(lo, hi + 1), True
    j0, j1 = int(span[0]), int(span[1])
    return np.arange(j0, j1 + 2), False


def _check_horizon(system, n: int):
    if isinstance(system, SftSpec):
        try:
            n0 = system.primitivity_horizon
        except NonPrimitive:
            raise
        if n < 2 * n0:
            raise ValueError(f"horizon n={n} is below twice the primitivity horizon {n0}")


def _past_vectors(system, idx, z, n, reference):
    """``L^{j-n,n} 1`` normalized by ``theta_j`` for every ``j`` in ``idx``."""
    v = system.ones_stack(idx - n).astype(complex)
    for i in range(n):
        t = idx - n + i
        v = np.einsum("kba,ka->kb", system.operator_stack(t, z), v)
        norm = np.einsum("kb,kb->k", system.theta_stack(t + 1, reference), v)
        if np.any(np.abs(norm) < 1e-280):
            raise BranchLoss("reference functional vanished on the forward iterate")
        v = v / norm[:, None]
    return v


def _future_covectors(system, idx, z, n, reference):
    """``theta_{j+n} L^{j,n}`` normalized by its action on ``1``."""
    w = system.theta_stack(idx + n, reference).astype(complex)
    for i in range(n - 1, -1, -1):
        t = idx + i
        w = np.einsum("kb,kba->ka", w, system.operator_stack(t, z))
        norm = np.einsum("ka,ka->k", w, system.ones_stack(t))
        if np.any(np.abs(norm) < 1e-280):
            raise BranchLoss("covector lost its mass on the backward iterate")
        w = w / norm[:, None]
    return w


def solve_family(
    system,
    z: complex = 0.0,
    span: tuple[int, int] | None = None,
    n: int = DEFAULT_HORIZON,
    reference: str = "point",
    tol: float = 1e-8,
    strict: bool = True,
    r_max: float | None = None,
) -> RpfFamily:
    """Solve the RPF triplets for all ``j`` in ``span`` (inclusive).

    With ``span=None`` a periodic system is solved over one period and the
    returned family answers lookups for any ``j``.
    """
    z = complex(z)
    r_max = trust_radius(system) if r_max is None else r_max
    if abs(z) > r_max:
        raise ValueError(f"|z|={abs(z):.3g} is outside the trust disk of radius {r_max:.3g}")
    _check_horizon(system, n)
    idx, periodic = _span_indices(system, span)
    zz = z if z != 0 else 0.0
    h_raw = _past_vectors(system, idx, zz, n, reference)
    nu = _future_covectors(system, idx, zz, n, reference)
    if periodic:
        nu_next = np.roll(nu, -1, axis=0)
        lam_idx = idx
    else:
        nu_next = nu[1:]
        lam_idx = idx[:-1]
    mats = system.operator_stack(lam_idx, zz)
    ones = system.ones_stack(lam_idx)
    row = np.einsum("kb,kba->ka", nu_next, mats)
    lam = np.einsum("ka,ka->k", row, ones)
    scale = np.abs(mats).sum(axis=2).max(axis=1)
    if np.any(np.abs(lam) < 1e-12 * scale):
        raise BranchLoss("eigenvalue estimate is numerically zero")
    gauge = np.einsum("ka,ka->k", nu, h_raw)
    if np.any(np.abs(gauge) < 1e-280):
        raise BranchLoss("nu(h) vanished; cannot normalize h")
    h = h_raw / gauge[:, None]
    if z == 0 and np.isrealobj(system.operator_stack(idx[:1], 0.0)):
        h, nu, lam = h.real.copy(), nu.real.copy(), lam.real.copy()
    h_next = np.roll(h, -1, axis=0) if periodic else h[1:]
    h_cur = h if periodic else h[:-1]
    nu_cur = nu if periodic else nu[:-1]
    eig = np.abs(np.einsum("kba,ka->kb", mats, h_cur) - lam[:, None] * h_next).max(axis=1)
    dual = np.abs(np.einsum("kb,kba->ka", nu_next, mats) - lam[:, None] * nu_cur).sum(axis=1)
    eig = eig / np.abs(lam)
    dual = dual / np.abs(lam)
    fam = RpfFamily(
        start=int(idx[0]),
        z=z,
        lam=lam,
        h=h,
        nu=nu,
        n_used=n,
        eigen_residual=eig,
        duality_residual=dual,
        period=len(idx) if periodic else None,
    )
    if strict and fam.max_residual > tol:
        raise NotConverged(f"residual {fam.max_residual:.3g} above tol {tol:.3g} at n={n}")
    return fam


def solve_triplet(system, j: int, z: complex = 0.0, n: int = DEFAULT_HORIZON, reference: str = "point", **kw) -> RpfTriplet:
    return solve_family(system, z, span=(j, j), n=n, reference=reference, **kw).triplet(j)


# ---------------------------------------------------------------------------------
# Normalized family
# ---------------------------------------------------------------------------------


@dataclass(frozen=True)
class NormalizedFamily:
    """The tilde family: ``tilde_lambda(0) = 1``, ``tilde_h(0) = 1``, ``tilde_nu(0) = mu_j``."""

    indices: np.ndarray
    z: complex
    a: np.ndarray
    tilde_lambda: np.ndarray
    tilde_h: np.ndarray
    tilde_nu: np.ndarray
    gibbs_marginal: np.ndarray


def normalize_family(fam_z: RpfFamily, fam_0: RpfFamily, indices=None, b: float = 1e-3) -> NormalizedFamily:
    if fam_z.start != fam_0.start or fam_z.period != fam_0.period:
        raise SpecError("families must be solved over the same range")
    if indices is None:
        indices = fam_z.indices
    indices = np.asarray(indices)
    h0, h0n = fam_0.h_at(indices), fam_0.h_at(indices + 1)
    a = np.einsum("ka,ka->k", fam_z.nu_at(indices), h0)
    a_next = np.einsum("ka,ka->k", fam_z.nu_at(indices + 1), h0n)
    if np.any(np.abs(a) < b) or np.any(np.abs(a_next) < b):
        raise BranchLoss(f"|a_j(z)| fell below {b}")
    tl = a * fam_z.lam_at(indices) / (a_next * fam_0.lam_at(indices))
    safe_h0 = np.where(h0 != 0, h0, 1.0)
    th = a[:, None] * fam_z.h_at(indices) / safe_h0
    tn = fam_z.nu_at(indices) * h0 / a[:, None]
    marginal = fam_0.h_at(indices) * fam_0.nu_at(indices)
    return NormalizedFamily(indices, fam_z.z, a, tl, th, tn, marginal)


def normalized_matrices(system, fam_0: RpfFamily, indices, z: complex = 0.0) -> np.ndarray:
    """Stack of ``diag(1/h_{j+1}) L_z^{(j)} diag(h_j) / lambda_j(0)``.

    At ``z = 0`` each matrix preserves the all-ones vector; its transpose
    sends the marginal ``m_{j+1}`` to ``m_j``.
    """
    indices = np.asarray(indices)
    h = fam_0.h_at(indices)
    hn = fam_0.h_at(indices + 1)
    inv = np.where(hn != 0, 1.0 / np.where(hn != 0, hn, 1.0), 0.0)
    mats = system.operator_stack(indices, z)
    lam = fam_0.lam_at(indices)
    return inv[:, :, None] * mats * h[:, None, :] / lam[:, None, None]


# ---------------------------------------------------------------------------------
# Pressure
# ---------------------------------------------------------------------------------


@dataclass(frozen=True)
class PressureSequence:
    indices: np.ndarray
    z_grid: np.ndarray
    values: np.ndarray  # (len(z_grid), len(indices))
    derivatives: np.ndarray  # (k_max+1, len(indices)), derivatives at 0
    derivative_error: np.ndarray
    continuation_steps: np.ndarray

    def averaged(self, k: int, j_offset: int, n: int) -> float:
        """``n^{-1} sum_{m<n} Pi^{(k)}_{j+m}(0)`` (indices read cyclically)."""
        P = len(self.indices)
        pos = (j_offset + np.arange(n)) % P
        return float(self.derivatives[k, pos].real.mean())


def _ratio(system, z, span, n, fam_0, reference):
    fam = solve_family(system, z, span=span, n=n, reference=reference, strict=False, r_max=np.inf)
    return fam.lam / fam_0.lam


def pressure_path(system, z: complex, span=None, n: int = DEFAULT_HORIZON, reference: str = "point", fam_0=None, max_steps: int = 1024):
    """``Pi_j(z)`` for all ``j`` by continuation of ``log(lambda_j(z)/lambda_j(0))`` along ``[0, z]``."""
    z = complex(z)
    r_max = trust_radius(system)
    if abs(z) > r_max + 1e-15:
        raise ValueError(f"|z|={abs(z):.3g} outside trust disk {r_max:.3g}")
    if fam_0 is None:
        fam_0 = solve_family(system, 0.0, span=span, n=n, reference=reference)
    if z == 0:
        return np.zeros(fam_0.lam.shape, dtype=complex), 0
    if z.imag == 0:
        steps = 1
    else:
        steps = 4
    while steps <= max_steps:
        prev = np.ones(fam_0.lam.shape, dtype=complex)
        acc = np.zeros(fam_0.lam.shape, dtype=complex)
        ok = True
        for s in range(1, steps + 1):
            cur = _ratio(system, z * s / steps, span, n, fam_0, reference)
            if np.any(np.abs(cur) < 1e-6):
                raise BranchLoss("lambda_j(z)/lambda_j(0) came near zero on the path")
            step = cur / prev
            if np.any(np.abs(np.angle(step)) > np.pi / 4):
                ok = False
                break
            acc += np.log(step)
            prev = cur
        if ok:
            return acc, steps
        steps *= 2
    raise BranchLoss("argument continuation did not settle")


def pressure(system, j: int, z: complex, n: int = DEFAULT_HORIZON, reference: str = "point") -> complex:
    span = None if system.extension == PERIODIC else (j, j)
    vals, _ = pressure_path(system, z, span=span, n=n, reference=reference)
    fam_idx = _family_indices(system, span)
    pos = _lookup(system, fam_idx, j)
    return complex(vals[pos])


def _family_indices(system, span):
    idx, periodic = _span_indices(system, span)
    return idx if periodic else idx[:-1]


def _lookup(system, fam_idx, j):
    if system.extension == PERIODIC and len(fam_idx) == system.period and fam_idx[0] == system.window[0]:
        return int((j - fam_idx[0]) % system.period)
    return int(j - fam_idx[0])


def cauchy_derivatives(func_values: np.ndarray, radius: float, k_max: int) -> np.ndarray:
    """Taylor derivatives at 0 from samples on ``|z| = radius`` at ``M`` equispaced nodes.

    ``func_values`` has the node axis first.
    """
    M = func_values.shape[0]
    coeffs = np.fft.fft(func_values, axis=0) / M
    out = []
    fact = 1.0
    for k in range(k_max + 1):
        if k > 0:
            fact *= k
        out.append(fact * coeffs[k] / radius**k)
    return np.array(out)


def pressure_derivatives(
    system,
    k_max: int = 6,
    span=None,
    n: int = DEFAULT_HORIZON,
    nodes: int = CAUCHY_NODES,
    radius: float | None = None,
    reference: str = "point",
) -> PressureSequence:
    """``Pi_j^{(k)}(0)`` for ``k <= k_max`` by trapezoidal Cauchy quadrature.

    The error estimate compares ``nodes`` against ``nodes // 2`` nodes.
    """
    radius = trust_radius(system) / 2 if radius is None else radius
    fam_0 = solve_family(system, 0.0, span=span, n=n, reference=reference)
    zs = radius * np.exp(2j * np.pi * np.arange(nodes) / nodes)
    vals, steps = [], []
    for zk in zs:
        v, s = pressure_path(system, zk, span=span, n=n, reference=reference, fam_0=fam_0)
        vals.append(v)
        steps.append(s)
    vals = np.array(vals)
    der = cauchy_derivatives(vals, radius, k_max)
    coarse = cauchy_derivatives(vals[::2], radius, k_max)
    err = np.abs(der - coarse).max(axis=1)
    return PressureSequence(
        indices=_family_indices(system, span),
        z_grid=zs,
        values=vals,
        derivatives=der,
        derivative_error=err,
        continuation_steps=np.array(steps),
    )


# ---------------------------------------------------------------------------------
# Convergence rate
# ---------------------------------------------------------------------------------


@dataclass(frozen=True)
class ConvergenceFit:
    horizons: np.ndarray
    residuals: np.ndarray
    slope: float
    intercept: float
    r_squared: float
    floor: bool

    @property
    def delta(self) -> float:
        return float(np.exp(self.slope))


def fit_log_linear(horizons, residuals, floor_level: float = 1e-13) -> ConvergenceFit:
    horizons = np.asarray(horizons, dtype=float)
    residuals = np.asarray(residuals, dtype=float)
    keep = residuals > floor_level
    if keep.sum() < 2:
        return ConvergenceFit(horizons, residuals, -np.inf, np.nan, np.nan, True)
    x, y = horizons[keep], np.log(residuals[keep])
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    ss = ((y - y.mean()) ** 2).sum()
    r2 = 1.0 - ((y - pred) ** 2).sum() / ss if ss > 0 else 1.0
    return ConvergenceFit(horizons, residuals, float(slope), float(intercept), float(r2), bool(keep.sum() < len(keep)))


def convergence_rate_fit(
    system,
    j: int,
    z: complex = 0.0,
    horizons=range(2, 26),
    observable: str = "one",
    n_ref: int = 200,
) -> ConvergenceFit:
    """Fit ``|| L^{j,n} g / lambda_{j,n} - nu_j(g) h_{j+n} ||`` against ``n``.

    ``observable`` selects ``g = 1`` (``"one"``) or ``g = u_j`` (``"u"``).
    """
    horizons = np.asarray(list(horizons))
    if len(horizons) < 4:
        raise ValueError("need at least four horizons")
    top = int(horizons.max())
    span = None if system.extension == PERIODIC else (j, j + top)
    fam = solve_family(system, z, span=span, n=n_ref, strict=False, r_max=np.inf)
    j_idx = np.array([j])
    if observable == "one":
        g = system.ones_stack(j_idx)[0].astype(complex)
    elif observable == "u":
        g = system.observable_stack(j_idx)[0].astype(complex)
    else:
        raise ValueError(observable)
    coef = complex(fam.nu_at(j) @ g)
    v = g
    res = {}
    for i in range(top):
        v = system.operator_stack(np.array([j + i]), z)[0] @ v / fam.lam_at(j + i)
        if i + 1 in set(horizons.tolist()):
            res[i + 1] = float(np.abs(v - coef * fam.h_at(j + i + 1)).max())
    return fit_log_linear(horizons, [res[int(k)] for k in horizons])


# ---------------------------------------------------------------------------------
# Stability
# ---------------------------------------------------------------------------------


def perturb_spec(spec: SftSpec, delta: float, seed: int) -> SftSpec:
    rng = np.random.default_rng(seed)
    pots = tuple(f + delta * rng.uniform(-1, 1, size=f.shape) for f in spec.potentials)
    obs = tuple(u + delta * rng.uniform(-1, 1, size=u.shape) for u in spec.observables)
    return spec.replace(potentials=pots, observables=obs)


def stability_sweep(spec: SftSpec, deltas, radius: float | None = None, seed: int = 0, n_angles: int = 8, n: int = DEFAULT_HORIZON):
    """Sup over a z-grid in the closed disk and over the period of the triplet responses.

    The grid is ``z = 0`` plus ``n_angles`` points on the circle of the given
    radius (default: half the trust radius of the unperturbed spec).
    Returns one dict per ``delta``.
    """
    radius = trust_radius(spec) / 2 if radius is None else radius
    zs = [0.0] + [radius * np.exp(2j * np.pi * k / n_angles) for k in range(n_angles)]
    base = [solve_family(spec, z, n=n, r_max=np.inf) for z in zs]
    rows = []
    for d in deltas:
        pert = perturb_spec(spec, d, seed)
        dl = dh = dn = 0.0
        for z, b in zip(zs, base):
            p = solve_family(pert, z, n=n, r_max=np.inf)
            dl = max(dl, float(np.abs(b.lam - p.lam).max()))
            dh = max(dh, float(np.abs(b.h - p.h).max()))
            dn = max(dn, float(np.abs(b.nu - p.nu).sum(axis=1).max()))
        rows.append({"delta": float(d), "lambda": dl, "h": dh, "nu": dn})
    return rows


# ---------------------------------------------------------------------------------
# Nonsingular potentials
# ---------------------------------------------------------------------------------


def nonsingular_potentials(spec: SftSpec, m_family) -> SftSpec:
    """Potentials ``f_j`` whose operators have adjoint fixing the given marginals.

    ``exp(f_j(a)) = m_j(a) / sum_b A_j(a, b) m_{j+1}(b)``, so that
    ``nu_{j+1} L^{(j)} = nu_j`` with ``nu = m``.
    """
    m_family = [np.asarray(m, dtype=float) for m in m_family]
    if len(m_family) != spec.period:
        raise SpecError("one marginal per window index is required")
    for k, m in enumerate(m_family):
        if m.shape != (spec.alphabet_sizes[k],):
            raise SpecError(f"marginal {k} has wrong length")
        if np.any(m <= 0):
            raise SpecError("marginals must be strictly positive")
        if abs(m.sum() - 1) > 1e-12:
            raise SpecError("marginals must sum to one")
    lo = spec.window[0]
    pots = []
    for k in range(spec.period):
        nxt = m_family[int(spec.layer(lo + k + 1))]
        pots.append(np.log(m_family[k] / (spec.transitions[k] @ nxt)))
    return spec.replace(potentials=tuple(pots))


def nonsingular_check(spec: SftSpec, m_family, n: int = DEFAULT_HORIZON) -> dict:
    ns = nonsingular_potentials(spec, m_family)
    fam = solve_family(ns, 0.0, n=n)
    m = np.zeros_like(fam.nu)
    for k, mk in enumerate(m_family):
        m[k, : len(mk)] = mk
    return {
        "lambda_error": float(np.abs(fam.lam - 1).max()),
        "nu_error": float(np.abs(fam.nu - m).max()),
        "residual": fam.max_residual,
    }
