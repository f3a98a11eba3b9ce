"""Sequential expanding systems and their complex transfer operators.

Two concrete backends are provided:

* :class:`SftSpec` -- a non-stationary subshift of finite type with locally
  constant potential ``f_j`` and observable ``u_j``.  On functions of the first
  symbol the operator ``L_z^{(j)}`` is the finite matrix
  ``M[b, a] = A_j(a, b) * exp(f_j(a) + z u_j(a))``.
* :class:`CircleSpec` -- maps ``x -> m_j x mod 1`` with trigonometric
  potentials, discretised by a Fourier-Galerkin truncation.

Both expose the same padded "stack" interface used by the solvers: for an
integer array of time indices they return a ``(len, D, D)`` array of operator
matrices, where ``D`` is the maximal dimension and unused symbols are zero.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import NonPrimitive, SpecError

PERIODIC = "periodic"
FROZEN = "frozen"
_LN2 = float(np.log(2.0))


def _resolve(j, lo: int, period: int, extension: str):
    """Map absolute time index(es) ``j`` to layer offsets in ``[0, period)``."""
    k = np.asarray(j) - lo
    if extension == PERIODIC:
        return np.mod(k, period)
    return np.clip(k, 0, period - 1)


@dataclass(frozen=True, eq=False)
class SftSpec:
    """A sequential subshift of finite type over the window ``[j_lo, j_hi]``.

    ``transitions[k]`` is the 0/1 matrix ``A_j`` for ``j = j_lo + k`` with shape
    ``d_j x d_{j+1}``.  Potentials and observables of memory ``k`` are arrays of
    shape ``(d_j, ..., d_{j+k-1})``; lower-rank arrays are broadcast along the
    trailing symbols.  Outside the window the layers repeat periodically or are
    frozen at the end layers, depending on ``extension``.
    """

    window: tuple[int, int]
    transitions: tuple
    potentials: tuple
    observables: tuple
    memory: int = 1
    extension: str = PERIODIC
    hoelder_exponent: float = 1.0
    labels: tuple | None = None

    def __post_init__(self):
        lo, hi = (int(v) for v in self.window)
        if hi < lo:
            raise SpecError(f"window must satisfy j_lo <= j_hi, got {self.window}")
        object.__setattr__(self, "window", (lo, hi))
        period = hi - lo + 1
        if self.extension not in (PERIODIC, FROZEN):
            raise SpecError(f"unknown extension {self.extension!r}")
        if self.memory < 1:
            raise SpecError("memory must be >= 1")
        for name in ("transitions", "potentials", "observables"):
            seq = getattr(self, name)
            if len(seq) != period:
                raise SpecError(f"{name} needs {period} entries for window {self.window}, got {len(seq)}")
        mats = []
        for k, a in enumerate(self.transitions):
            a = np.asarray(a)
            if a.ndim != 2:
                raise SpecError(f"transition {k} is not a matrix")
            if not np.all((a == 0) | (a == 1)):
                raise SpecError(f"transition {k} has entries other than 0/1")
            a = a.astype(np.int8)
            a.setflags(write=False)
            if np.any(a.sum(axis=1) == 0) or np.any(a.sum(axis=0) == 0):
                raise SpecError(f"transition {k} has an empty row or column")
            mats.append(a)
        for k in range(period):
            nxt = k + 1
            if nxt == period:
                if self.extension == PERIODIC:
                    nxt = 0
                else:
                    nxt = period - 1
            if mats[k].shape[1] != mats[nxt].shape[0]:
                raise SpecError(
                    f"transition shapes do not chain at layer {k}: {mats[k].shape} then {mats[nxt].shape}"
                )
        if self.extension == FROZEN and mats[0].shape[0] != mats[0].shape[1]:
            raise SpecError("frozen extension needs a square first transition matrix")
        object.__setattr__(self, "transitions", tuple(mats))
        object.__setattr__(self, "potentials", self._broadcast("potentials"))
        object.__setattr__(self, "observables", self._broadcast("observables"))

    def _broadcast(self, name):
        out = []
        for k, arr in enumerate(getattr(self, name)):
            arr = np.asarray(arr, dtype=float)
            shape = self.word_shape(self.window[0] + k)
            if arr.ndim > self.memory or arr.shape != shape[: arr.ndim]:
                raise SpecError(f"{name}[{k}] has shape {arr.shape}, expected a prefix of {shape}")
            if not np.all(np.isfinite(arr)):
                raise SpecError(f"{name}[{k}] has non-finite entries")
            arr = np.broadcast_to(arr.reshape(arr.shape + (1,) * (len(shape) - arr.ndim)), shape).copy()
            arr.setflags(write=False)
            out.append(arr)
        return tuple(out)

    # -- indexing -----------------------------------------------------------------
    @property
    def period(self) -> int:
        return self.window[1] - self.window[0] + 1

    def layer(self, j):
        return _resolve(j, self.window[0], self.period, self.extension)

    def alphabet_size(self, j: int) -> int:
        return int(self.transitions[int(self.layer(j))].shape[0])

    @property
    def alphabet_sizes(self) -> tuple[int, ...]:
        return tuple(a.shape[0] for a in self.transitions)

    @cached_property
    def d_max(self) -> int:
        return max(self.alphabet_sizes)

    def transition(self, j: int) -> np.ndarray:
        return self.transitions[int(self.layer(j))]

    def potential(self, j: int) -> np.ndarray:
        return self.potentials[int(self.layer(j))]

    def observable(self, j: int) -> np.ndarray:
        return self.observables[int(self.layer(j))]

    def word_shape(self, j: int) -> tuple[int, ...]:
        return tuple(self.alphabet_size(j + i) for i in range(self.memory))

    @property
    def bound(self) -> float:
        """Uniform bound ``B`` on ``|f_j|`` and ``|u_j|``."""
        vals = [np.abs(a).max() for a in self.potentials + self.observables]
        return float(max(vals))

    @property
    def u_sup(self) -> float:
        return float(max(np.abs(a).max() for a in self.observables))

    # -- structure ----------------------------------------------------------------
    def admissible(self, j: int, word: Sequence[int]) -> bool:
        for i, a in enumerate(word):
            if not 0 <= a < self.alphabet_size(j + i):
                return False
        return all(self.transition(j + i)[word[i], word[i + 1]] == 1 for i in range(len(word) - 1))

    @cached_property
    def primitivity_horizon(self) -> int:
        """Smallest ``n0`` making every ``A_j ... A_{j+n0-1}`` strictly positive."""
        cap = 4 * self.d_max**2 + self.period
        starts = range(self.window[0], self.window[1] + 1) if self.extension == PERIODIC else range(
            self.window[0] - 1, self.window[1] + 2
        )
        best = 1
        for j in starts:
            prod = self.transition(j).astype(np.int64)
            n = 1
            while not np.all(prod > 0):
                if n >= cap:
                    raise NonPrimitive(f"no positive transition product from j={j} within {cap} steps")
                prod = np.minimum(prod @ self.transition(j + n), 1)
                n += 1
            best = max(best, n)
        return best

    def is_primitive(self) -> bool:
        try:
            self.primitivity_horizon
        except NonPrimitive:
            return False
        return True

    # -- padded stacks used by the solvers -------------------------------------------
    @cached_property
    def _padded(self):
        if self.memory != 1:
            raise SpecError("operator matrices need a memory-1 spec; call recode_to_memory_one first")
        P, D = self.period, self.d_max
        A = np.zeros((P, D, D))
        f = np.zeros((P, D))
        u = np.zeros((P, D))
        mask = np.zeros((P, D))
        for k in range(P):
            a = self.transitions[k]
            A[k, : a.shape[0], : a.shape[1]] = a
            d = a.shape[0]
            f[k, :d] = self.potentials[k]
            u[k, :d] = self.observables[k]
            mask[k, :d] = 1.0
        return A, f, u, mask

    @property
    def dim_max(self) -> int:
        return self.d_max

    def operator_stack(self, j, z: complex = 0.0) -> np.ndarray:
        """Padded operator matrices ``M[b, a]`` for each index in ``j``."""
        A, f, u, _ = self._padded
        k = self.layer(np.atleast_1d(j))
        expo = f[k] + z * u[k] if z != 0 else f[k]
        w = np.exp(expo)
        out = np.swapaxes(A[k], 1, 2) * w[:, None, :]
        return out.astype(complex) if z != 0 else out

    def ones_stack(self, j) -> np.ndarray:
        return self._padded[3][self.layer(np.atleast_1d(j))]

    def theta_stack(self, j, reference: str = "point") -> np.ndarray:
        mask = self.ones_stack(j)
        if reference == "point":
            out = np.zeros_like(mask)
            out[:, 0] = 1.0
            return out
        if reference == "uniform":
            return mask / mask.sum(axis=1, keepdims=True)
        raise ValueError(f"unknown reference functional {reference!r}")

    def observable_stack(self, j) -> np.ndarray:
        return self._padded[2][self.layer(np.atleast_1d(j))]

    def potential_stack(self, j) -> np.ndarray:
        return self._padded[1][self.layer(np.atleast_1d(j))]

    def transition_stack(self, j) -> np.ndarray:
        return self._padded[0][self.layer(np.atleast_1d(j))]

    def operator_matrix(self, j: int, z: complex = 0.0) -> np.ndarray:
        d0, d1 = self.alphabet_size(j), self.alphabet_size(j + 1)
        m = self.operator_stack(j, z)[0]
        return m[:d1, :d0]

    # -- derived specs --------------------------------------------------------------
    def replace(self, **changes) -> "SftSpec":
        kw = dict(
            window=self.window,
            transitions=self.transitions,
            potentials=self.potentials,
            observables=self.observables,
            memory=self.memory,
            extension=self.extension,
            hoelder_exponent=self.hoelder_exponent,
            labels=self.labels,
        )
        kw.update(changes)
        return SftSpec(**kw)

    def with_window(self, lo: int, hi: int) -> "SftSpec":
        """Restrict/extend to a new window, reading layers through the extension rule."""
        idx = range(lo, hi + 1)
        return self.replace(
            window=(lo, hi),
            transitions=tuple(self.transition(j) for j in idx),
            potentials=tuple(self.potential(j) for j in idx),
            observables=tuple(self.observable(j) for j in idx),
            labels=None if self.labels is None else tuple(self.labels[int(self.layer(j))] for j in idx),
        )


@dataclass(frozen=True)
class OperatorMatrix:
    entries: np.ndarray
    j: int
    z: complex


@dataclass(frozen=True)
class ScaledProduct:
    """``matrix * exp(log_scale)`` equals the operator product over ``span = (j, n)``."""

    matrix: np.ndarray
    log_scale: float
    span: tuple[int, int]
    underflow: bool = False

    def dense(self) -> np.ndarray:
        return self.matrix * np.exp(self.log_scale)


def _rescale(m: np.ndarray):
    peak = float(np.abs(m).max())
    if peak == 0.0 or not np.isfinite(peak):
        return m, 0
    e = int(np.round(np.log2(peak)))
    return m * 2.0 ** (-e), e


def build_sft_operator(spec: SftSpec, j: int, z: complex = 0.0) -> OperatorMatrix:
    return OperatorMatrix(spec.operator_matrix(j, z), j, complex(z))


def compose_scaled(system, j: int, n: int, z: complex = 0.0) -> ScaledProduct:
    """Compose ``L^{(j+n-1)} ... L^{(j)}`` keeping the peak entry within ``[1/2, 2]``.

    Rescaling uses exact powers of two, so the only rounding is the one of the
    matrix products themselves.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    mat, e = _rescale(system.operator_matrix(j, z))
    log2_scale = e
    underflow = False
    for i in range(1, n):
        nxt = system.operator_matrix(j + i, z) @ mat
        if np.abs(nxt).max() < 1e-300:
            underflow = True
        mat, e = _rescale(nxt)
        log2_scale += e
    return ScaledProduct(mat, log2_scale * _LN2, (j, n), underflow)


def log_weak_norm(p: ScaledProduct) -> float:
    rows = np.abs(p.matrix).sum(axis=1).max()
    return p.log_scale + (float(np.log(rows)) if rows > 0 else -np.inf)


def weak_norm(p: ScaledProduct) -> float:
    """Max-row-sum norm: the sup-norm operator norm on functions of the first symbol."""
    return float(np.exp(log_weak_norm(p)))


def primitivity_check(spec: SftSpec, j: int, n0: int) -> bool:
    prod = spec.transition(j).astype(np.int64)
    for i in range(1, n0):
        prod = np.minimum(prod @ spec.transition(j + i), 1)
    return bool(np.all(prod > 0))


def recode_to_memory_one(spec: SftSpec) -> SftSpec:
    """Higher-block recoding: symbols at time ``j`` become admissible ``k``-words."""
    k = spec.memory
    if k == 1:
        return spec
    lo, hi = spec.window
    words = []
    for j in range(lo, hi + 1):
        ws = [
            w
            for w in itertools.product(*(range(d) for d in spec.word_shape(j)))
            if all(spec.transition(j + i)[w[i], w[i + 1]] for i in range(k - 1))
        ]
        if not ws:
            raise SpecError(f"no admissible {k}-words at j={j}")
        words.append(ws)

    def words_at(j):
        return words[int(spec.layer(j))]

    trans, pots, obs = [], [], []
    for off, j in enumerate(range(lo, hi + 1)):
        cur, nxt = words[off], words_at(j + 1)
        index = {w: i for i, w in enumerate(nxt)}
        a = np.zeros((len(cur), len(nxt)), dtype=np.int8)
        for r, w in enumerate(cur):
            for b in range(spec.alphabet_size(j + k)):
                c = index.get(w[1:] + (b,))
                if c is not None:
                    a[r, c] = 1
        trans.append(a)
        pots.append(np.array([spec.potentials[off][w] for w in cur]))
        obs.append(np.array([spec.observables[off][w] for w in cur]))
    return SftSpec(
        window=spec.window,
        transitions=tuple(trans),
        potentials=tuple(pots),
        observables=tuple(obs),
        memory=1,
        extension=spec.extension,
        hoelder_exponent=spec.hoelder_exponent,
        labels=tuple(tuple(ws) for ws in words),
    )


# ---------------------------------------------------------------------------------
# Circle backend
# ---------------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CircleSpec:
    """Maps ``T_j x = m_j x mod 1`` with trigonometric-polynomial potentials.

    Coefficient vectors hold modes ``-K_pot..K_pot``; the Galerkin space holds
    modes ``-K..K``.
    """

    window: tuple[int, int]
    multipliers: tuple
    potentials: tuple
    observables: tuple
    mode_cutoff: int
    extension: str = PERIODIC
    alias_tol: float = 1e-12

    def __post_init__(self):
        lo, hi = (int(v) for v in self.window)
        object.__setattr__(self, "window", (lo, hi))
        period = hi - lo + 1
        if len(self.multipliers) != period:
            raise SpecError("one multiplier per window index is required")
        if any(int(m) < 2 for m in self.multipliers):
            raise SpecError("multipliers must be integers >= 2")
        coeffs = []
        for name in ("potentials", "observables"):
            seq = getattr(self, name)
            if len(seq) != period:
                raise SpecError(f"{name} needs {period} coefficient vectors")
            out = []
            for c in seq:
                c = np.asarray(c, dtype=complex)
                if c.ndim != 1 or c.size % 2 == 0:
                    raise SpecError(f"{name} coefficient vectors need odd length 2*K_pot+1")
                if not np.allclose(c, np.conj(c[::-1]), atol=1e-12):
                    raise SpecError(f"{name} coefficients are not conjugate-symmetric")
                c.setflags(write=False)
                out.append(c)
            coeffs.append(tuple(out))
        object.__setattr__(self, "potentials", coeffs[0])
        object.__setattr__(self, "observables", coeffs[1])
        if self.k_pot > self.mode_cutoff:
            raise SpecError("potential modes exceed the Galerkin cutoff")

    @property
    def period(self) -> int:
        return self.window[1] - self.window[0] + 1

    @property
    def k_pot(self) -> int:
        return max(c.size // 2 for c in self.potentials + self.observables)

    def layer(self, j):
        return _resolve(j, self.window[0], self.period, self.extension)

    @property
    def dim_max(self) -> int:
        return 2 * self.mode_cutoff + 1

    def quadrature_points(self, j: int) -> int:
        m = int(self.multipliers[int(self.layer(j))])
        need = 4 * (m * self.mode_cutoff + self.mode_cutoff + self.k_pot)
        return 1 << int(np.ceil(np.log2(need)))

    def weight_coefficients(self, j: int, z: complex, n_grid: int | None = None):
        """Fourier coefficients of ``exp(f_j + z u_j)`` and an aliasing flag."""
        k = int(self.layer(j))
        n_grid = n_grid or self.quadrature_points(j)
        x = np.arange(n_grid) / n_grid
        w = np.exp(_trig_eval(self.potentials[k], x) + z * _trig_eval(self.observables[k], x))
        coef = np.fft.fft(w) / n_grid
        tail = np.abs(coef[n_grid // 2 - 2 : n_grid // 2 + 3]).max()
        return coef, bool(tail > self.alias_tol)

    def operator_matrix(self, j: int, z: complex = 0.0) -> np.ndarray:
        m = int(self.multipliers[int(self.layer(j))])
        K = self.mode_cutoff
        coef, _ = self.weight_coefficients(j, z)
        modes = np.arange(-K, K + 1)
        q = m * modes[:, None] - modes[None, :]
        return m * coef[np.mod(q, coef.size)]

    def aliasing_flag(self, j: int, z: complex = 0.0) -> bool:
        return self.weight_coefficients(j, z)[1]

    def operator_stack(self, j, z: complex = 0.0) -> np.ndarray:
        return np.stack([self.operator_matrix(int(i), z) for i in np.atleast_1d(j)])

    def ones_stack(self, j) -> np.ndarray:
        out = np.zeros((np.atleast_1d(j).size, self.dim_max))
        out[:, self.mode_cutoff] = 1.0
        return out

    def theta_stack(self, j, reference: str = "point") -> np.ndarray:
        count = np.atleast_1d(j).size
        if reference == "point":
            return np.ones((count, self.dim_max))
        if reference == "uniform":
            return self.ones_stack(j)
        raise ValueError(f"unknown reference functional {reference!r}")


def _trig_eval(coef: np.ndarray, x: np.ndarray) -> np.ndarray:
    K = coef.size // 2
    modes = np.arange(-K, K + 1)
    return (np.exp(2j * np.pi * np.outer(x, modes)) @ coef).real


def build_circle_operator(spec: CircleSpec, j: int, z: complex = 0.0) -> OperatorMatrix:
    return OperatorMatrix(spec.operator_matrix(j, z), j, complex(z))


# ---------------------------------------------------------------------------------
# Constructors
# ---------------------------------------------------------------------------------


def constant_spec(transition, potential, observable, window=(0, 0), extension=PERIODIC) -> SftSpec:
    """The same layer repeated over the whole window."""
    P = window[1] - window[0] + 1
    return SftSpec(
        window=window,
        transitions=(np.asarray(transition),) * P,
        potentials=(np.asarray(potential, dtype=float),) * P,
        observables=(np.asarray(observable, dtype=float),) * P,
        extension=extension,
    )


def full_shift(d: int = 2, potential=None, observable=None, window=(0, 0)) -> SftSpec:
    f = np.zeros(d) if potential is None else potential
    u = np.arange(d, dtype=float) if observable is None else observable
    return constant_spec(np.ones((d, d), dtype=int), f, u, window)


GOLDEN_MEAN = np.array([[1, 1], [1, 0]])


def golden_mean(potential=None, observable=None, window=(0, 0)) -> SftSpec:
    f = np.zeros(2) if potential is None else potential
    u = np.arange(2, dtype=float) if observable is None else observable
    return constant_spec(GOLDEN_MEAN, f, u, window)


def random_transition(rng: np.random.Generator, d_in: int, d_out: int, density: float = 0.7) -> np.ndarray:
    while True:
        a = (rng.random((d_in, d_out)) < density).astype(int)
        if a.sum(axis=1).all() and a.sum(axis=0).all():
            return a


def random_primitive_spec(
    seed: int,
    window_length: int = 16,
    d_choices: Sequence[int] = (2, 3),
    density: float = 0.7,
    potential_range: tuple[float, float] = (-1.0, 1.0),
    observable: str = "binary",
    max_horizon: int = 4,
) -> SftSpec:
    """A seeded primitive non-stationary SFT with periodic extension.

    ``observable`` selects ``u``: ``"binary"`` draws symbol values in {0, 1}
    (a lattice observable with span 1, both values present at every time),
    ``"uniform"`` draws from ``U(-1, 1)``.
    """
    rng = np.random.default_rng(seed)
    P = window_length
    while True:
        dims = [int(rng.choice(d_choices)) for _ in range(P)]
        trans = [random_transition(rng, dims[k], dims[(k + 1) % P], density) for k in range(P)]
        pots = [rng.uniform(*potential_range, size=d) for d in dims]
        if observable == "binary":
            obs = []
            for d in dims:
                v = rng.integers(0, 2, size=d).astype(float)
                v[rng.integers(d)] = 0.0
                v[(np.flatnonzero(v == 0)[0] + 1) % d] = 1.0
                obs.append(v)
        elif observable == "uniform":
            obs = [rng.uniform(-1.0, 1.0, size=d) for d in dims]
        else:
            raise ValueError(f"unknown observable kind {observable!r}")
        spec = SftSpec((0, P - 1), tuple(trans), tuple(pots), tuple(obs))
        if spec.is_primitive() and spec.primitivity_horizon <= max_horizon:
            return spec
