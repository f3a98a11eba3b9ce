"""YAML experiment configs: schema checks, named generators, spec construction.

Layout::

    kind: rpf
    seed: 0
    system:            # or `environment:` for env-* kinds
      window: [0, 15]
      alphabet: 2
      transitions: full
      potentials: seeded-uniform(-1, 1, 7)
      observables: symbol-linear(0, 1)
    grids: {n: [64, 128], z: [0.0, 0.1]}
    tolerances: {residual: 1.0e-9}
    params: {}

Unknown keys anywhere raise :class:`ConfigError` naming the key.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .environments import EnvSpec, IndependentDriver, Layer, MarkovDriver, fixed_measure_layer, sft_driver
from .errors import ConfigError, InvalidDriver, SpecError
from .systems import FROZEN, GOLDEN_MEAN, PERIODIC, SftSpec, full_shift, golden_mean, random_primitive_spec, random_transition

TOP_KEYS = {"kind", "seed", "system", "environment", "grids", "tolerances", "params", "out"}
SYSTEM_KEYS = {"preset", "args", "window", "extension", "memory", "alphabet", "transitions", "potentials", "observables"}
ENV_KEYS = {"alphabet", "states", "driver", "marked", "window", "extension"}
STATE_KEYS = {"transition", "potential", "observable", "fixed_measure"}
DRIVER_KEYS = {
    "independent": {"kind", "probabilities"},
    "markov": {"kind", "initial", "kernels", "log_decay"},
    "sft": {"kind", "transitions", "weights", "initial"},
}
GRID_KEYS = {"z", "t_interval", "t", "n", "seeds", "deltas", "horizons", "j", "points", "x", "eps", "s", "delta_0", "k_max"}
TOLERANCE_KEYS = {"residual", "relative", "slack", "c0", "state_cap"}
PRESETS = {"full-shift", "golden-mean", "random-primitive"}

_CALL = re.compile(r"^\s*([a-z][a-z0-9-]*)\s*(?:\((.*)\))?\s*$")


def _check_keys(section: dict, allowed: set, where: str):
    if not isinstance(section, dict):
        raise ConfigError(f"{where}: expected a mapping")
    extra = sorted(set(section) - allowed)
    if extra:
        raise ConfigError(f"{where}: unknown key {extra[0]!r}")


def _require(section: dict, key: str, where: str):
    if key not in section:
        raise ConfigError(f"{where}: missing key {key!r}")
    return section[key]


def parse_call(text: str) -> tuple[str, list[float]]:
    m = _CALL.match(text)
    if not m:
        raise ConfigError(f"cannot parse generator {text!r}")
    name, args = m.group(1), m.group(2)
    vals = [float(a) for a in args.split(",")] if args and args.strip() else []
    return name, vals


# ---------------------------------------------------------------------------------
# Generators
# ---------------------------------------------------------------------------------


def vector_generator(text: str, dims: list[int]) -> list[np.ndarray]:
    """One vector per layer from a named generator.

    ``constant(c)``, ``symbol-linear(a, b)`` (value ``a + b * symbol``),
    ``seeded-uniform(lo, hi, seed)``, ``seeded-integer(lo, hi, seed)``
    (integers in ``[lo, hi]``).
    """
    name, a = parse_call(text)
    if name == "constant" and len(a) == 1:
        return [np.full(d, a[0]) for d in dims]
    if name == "symbol-linear" and len(a) == 2:
        return [a[0] + a[1] * np.arange(d, dtype=float) for d in dims]
    if name == "seeded-uniform" and len(a) == 3:
        rng = np.random.default_rng(int(a[2]))
        return [rng.uniform(a[0], a[1], size=d) for d in dims]
    if name == "seeded-integer" and len(a) == 3:
        rng = np.random.default_rng(int(a[2]))
        return [rng.integers(int(a[0]), int(a[1]) + 1, size=d).astype(float) for d in dims]
    raise ConfigError(f"unknown vector generator {text!r}")


def transition_generator(text: str, dims: list[int]) -> list[np.ndarray]:
    """``full``, ``golden-mean``, or ``seeded-primitive(seed[, density])`` (cyclic shapes)."""
    name, a = parse_call(text)
    P = len(dims)
    if name == "full":
        return [np.ones((dims[k], dims[(k + 1) % P]), dtype=int) for k in range(P)]
    if name == "golden-mean":
        if any(d != 2 for d in dims):
            raise ConfigError("golden-mean needs alphabet 2")
        return [GOLDEN_MEAN.copy() for _ in range(P)]
    if name == "seeded-primitive" and len(a) in (1, 2):
        rng = np.random.default_rng(int(a[0]))
        density = a[1] if len(a) == 2 else 0.7
        return [random_transition(rng, dims[k], dims[(k + 1) % P], density) for k in range(P)]
    raise ConfigError(f"unknown transition generator {text!r}")


def _per_layer(value, dims, gen, where, matrix: bool):
    if isinstance(value, str):
        return gen(value, dims)
    arr = value
    depth = 3 if matrix else 2
    try:
        nd = np.asarray(arr, dtype=float).ndim
    except ValueError:
        nd = None  # ragged: per-layer list of different shapes
    if nd == depth - 1:
        return [np.asarray(arr, dtype=int if matrix else float)] * len(dims)
    if nd is None or nd == depth:
        if len(arr) != len(dims):
            raise ConfigError(f"{where}: expected {len(dims)} layers, got {len(arr)}")
        out = []
        for k, item in enumerate(arr):
            out.append(gen(item, [dims[k]])[0] if isinstance(item, str) else np.asarray(item, dtype=int if matrix else float))
        return out
    raise ConfigError(f"{where}: bad array shape")


def build_system(section: dict) -> SftSpec:
    _check_keys(section, SYSTEM_KEYS, "system")
    if "preset" in section:
        preset = section["preset"]
        args = dict(section.get("args", {}))
        if preset not in PRESETS:
            raise ConfigError(f"system.preset: unknown preset {preset!r}")
        try:
            if preset == "random-primitive":
                for k in ("d_choices", "potential_range"):
                    if k in args:
                        args[k] = tuple(args[k])
                return random_primitive_spec(**args)
            window = tuple(section.get("window", (0, 0)))
            ctor = full_shift if preset == "full-shift" else golden_mean
            return ctor(window=window, **args)
        except TypeError as exc:
            raise ConfigError(f"system.args: {exc}") from None
    window = _require(section, "window", "system")
    if len(window) != 2 or window[1] < window[0]:
        raise ConfigError("system.window: expected [lo, hi] with lo <= hi")
    P = int(window[1]) - int(window[0]) + 1
    alphabet = section.get("alphabet", 2)
    dims = [int(alphabet)] * P if np.isscalar(alphabet) else [int(d) for d in alphabet]
    if len(dims) != P:
        raise ConfigError("system.alphabet: one size per layer expected")
    trans = _per_layer(_require(section, "transitions", "system"), dims, transition_generator, "system.transitions", True)
    pots = _per_layer(section.get("potentials", "constant(0)"), dims, vector_generator, "system.potentials", False)
    obs = _per_layer(section.get("observables", "symbol-linear(0, 1)"), dims, vector_generator, "system.observables", False)
    ext = section.get("extension", PERIODIC)
    if ext not in (PERIODIC, FROZEN):
        raise ConfigError(f"system.extension: unknown extension {ext!r}")
    try:
        return SftSpec(
            (int(window[0]), int(window[1])),
            tuple(trans),
            tuple(pots),
            tuple(obs),
            memory=int(section.get("memory", 1)),
            extension=ext,
        )
    except SpecError as exc:
        raise ConfigError(f"system: {exc}") from None


def build_environment(section: dict) -> EnvSpec:
    _check_keys(section, ENV_KEYS, "environment")
    d = int(section.get("alphabet", 2))
    layers = []
    for k, st in enumerate(_require(section, "states", "environment")):
        where = f"environment.states[{k}]"
        _check_keys(st, STATE_KEYS, where)
        tr = st.get("transition", "full")
        A = transition_generator(tr, [d])[0] if isinstance(tr, str) else np.asarray(tr, dtype=int)
        u = st.get("observable", "symbol-linear(0, 1)")
        u = vector_generator(u, [d])[0] if isinstance(u, str) else np.asarray(u, dtype=float)
        if "fixed_measure" in st:
            layers.append(fixed_measure_layer(A, st["fixed_measure"], u))
            continue
        f = st.get("potential", "constant(0)")
        f = vector_generator(f, [d])[0] if isinstance(f, str) else np.asarray(f, dtype=float)
        layers.append(Layer(A, f, u))
    drv = _require(section, "driver", "environment")
    kind = _require(drv, "kind", "environment.driver")
    if kind not in DRIVER_KEYS:
        raise ConfigError(f"environment.driver.kind: unknown driver {kind!r}")
    _check_keys(drv, DRIVER_KEYS[kind], "environment.driver")
    try:
        if kind == "independent":
            driver = IndependentDriver(tuple(np.asarray(p, dtype=float) for p in _require(drv, "probabilities", "environment.driver")))
        elif kind == "markov":
            ld = drv.get("log_decay")
            driver = MarkovDriver(
                np.asarray(_require(drv, "initial", "environment.driver"), dtype=float),
                tuple(np.asarray(K, dtype=float) for K in drv.get("kernels", ())),
                None if ld is None else (int(ld[0]), float(ld[1])),
            )
        else:
            driver = sft_driver(drv["transitions"], drv["weights"], np.asarray(drv["initial"], dtype=float))
        window = tuple(int(w) for w in section.get("window", (0, 255)))
        return EnvSpec(tuple(layers), driver, tuple(int(m) for m in section.get("marked", ())), window, section.get("extension", PERIODIC))
    except (InvalidDriver, KeyError) as exc:
        raise ConfigError(f"environment: {exc}") from None


# ---------------------------------------------------------------------------------
# Experiment config
# ---------------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    seed: int
    raw: dict
    system: SftSpec | None = None
    environment: EnvSpec | None = None
    grids: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    out: str | None = None

    @property
    def hash(self) -> str:
        return config_hash(self.raw)


def config_hash(raw: dict) -> str:
    """SHA-256 of the canonical JSON form; independent of key order."""
    return hashlib.sha256(json.dumps(raw, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def parse_config(raw: dict, kind: str | None = None, param_keys: set | None = None, needs: str | None = None) -> ExperimentConfig:
    """Validate ``raw`` and build specs.  ``needs`` is ``"system"``, ``"environment"`` or ``None``."""
    if not isinstance(raw, dict):
        raise ConfigError("config: top level must be a mapping")
    _check_keys(raw, TOP_KEYS, "config")
    k = raw.get("kind", kind)
    if k is None:
        raise ConfigError("config: missing key 'kind'")
    if kind is not None and k != kind:
        raise ConfigError(f"config: kind {k!r} does not match command {kind!r}")
    grids = raw.get("grids", {}) or {}
    _check_keys(grids, GRID_KEYS, "grids")
    tols = raw.get("tolerances", {}) or {}
    _check_keys(tols, TOLERANCE_KEYS, "tolerances")
    params = raw.get("params", {}) or {}
    if param_keys is not None:
        _check_keys(params, param_keys, "params")
    system = env = None
    if needs == "system":
        system = build_system(_require(raw, "system", "config"))
    elif needs == "environment":
        env = build_environment(_require(raw, "environment", "config"))
    for other in ("system", "environment"):
        if other in raw and other != needs:
            raise ConfigError(f"config: key {other!r} is not used by kind {k!r}")
    return ExperimentConfig(k, int(raw.get("seed", 0)), raw, system, env, grids, tols, params, raw.get("out"))


def load_config(path, **kw) -> ExperimentConfig:
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return parse_config(raw, **kw)
