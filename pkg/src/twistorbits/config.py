"""TOML experiment configuration.

The radius ``C``, the perturbation size ``epsilon`` and the metric type have no
defaults and must be written out. Every validation failure raises
``ConfigError`` naming the offending field with its dotted path.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
import tomli

from .dynamics import HamiltonianSpec, PotentialTerm
from .errors import ConfigError, InvalidInputError
from .geometry import MetricField
from .linking import GeneratingTwistMap, Product, ReversedShear, Shear, StandardLike, TranslatedShear

COMMANDS = ("decompose", "census", "md-sweep", "lambda-sweep", "stability", "linking")
LAMBDA_GRID = (0.0, 0.25, 0.5, 0.75, 1.0)
LINKING_MAPS = ("shear", "reversed-shear", "translated-shear", "standard-like")


@dataclass(frozen=True)
class MetricConfig:
    type: str
    n: int
    mode: str = "torus"
    fourier_terms: tuple = ()
    injectivity_radius: float | None = None


@dataclass(frozen=True)
class HamiltonianConfig:
    C: float
    epsilon: float
    potential_fourier_terms: tuple = ()
    bump_type: str = "cos2"
    delta: float | None = None
    time_dependent: bool = False
    step: float = 1e-3


@dataclass(frozen=True)
class SearchConfig:
    targets: tuple = ((((0,), 1)),)
    grid: int = 8
    jitter: float = 0.0
    N: object = "auto"
    mode: str = "twist"


@dataclass(frozen=True)
class LinkingConfig:
    map: str
    C: float
    eps: tuple = ()
    shift: float = 0.0
    n: int = 1
    q_grid: int = 32
    p_grid: int = 16


@dataclass(frozen=True)
class Tolerances:
    critical: float = 1e-10
    dedup: float = 1e-6
    pairing: float = 1e-4


@dataclass(frozen=True)
class ExperimentConfig:
    metric: MetricConfig | None
    hamiltonian: HamiltonianConfig | None
    search: SearchConfig = field(default_factory=SearchConfig)
    linking: LinkingConfig | None = None
    tolerances: Tolerances = field(default_factory=Tolerances)
    seed: int = 0
    threads: int = 1
    out: str = "out"
    format: str = "json"

    def echo(self) -> dict:
        return _jsonable(asdict(self))

    def build_metric(self) -> MetricField:
        m = self.metric
        try:
            return MetricField(m.n, m.type, m.fourier_terms, m.injectivity_radius, m.mode)
        except InvalidInputError as exc:
            raise ConfigError("metric", str(exc)) from exc

    def build_hamiltonian(self) -> HamiltonianSpec:
        h = self.hamiltonian
        metric = self.build_metric()
        if h.C >= metric.R and metric.mode == "torus":
            raise ConfigError("hamiltonian.C", f"C = {h.C} must be below the injectivity radius {metric.R}")
        try:
            return HamiltonianSpec(
                metric, h.C, h.epsilon, h.potential_fourier_terms, h.delta, h.bump_type, step=h.step
            )
        except InvalidInputError as exc:
            raise ConfigError("hamiltonian", str(exc)) from exc

    def build_linking_map(self) -> GeneratingTwistMap:
        lk = self.linking
        if lk.map == "shear":
            return Shear(lk.n)
        if lk.map == "reversed-shear":
            return ReversedShear(lk.n)
        if lk.map == "translated-shear":
            return TranslatedShear(lk.n, lk.shift)
        eps = lk.eps if lk.eps else (0.0,) * lk.n
        if len(eps) == 1:
            return StandardLike(eps)
        return Product(tuple(StandardLike((e,)) for e in eps))


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.generic):
        return x.item()
    return x


def _req(table, key, path):
    if key not in table:
        raise ConfigError(f"{path}.{key}" if path else key, "required field is missing")
    return table[key]


def _num(value, path, positive=False, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    if integer and not isinstance(value, int):
        raise ConfigError(path, f"expected an integer, got {value!r}")
    if not np.isfinite(value):
        raise ConfigError(path, "must be finite")
    if positive and not value > 0:
        raise ConfigError(path, f"must be positive, got {value!r}")
    return value


def _int_vec(value, n, path):
    v = value if isinstance(value, list) else [value]
    if len(v) != n or not all(isinstance(x, int) and not isinstance(x, bool) for x in v):
        raise ConfigError(path, f"expected {n} integers, got {value!r}")
    return tuple(v)


def _parse_metric(t) -> MetricConfig:
    kind = _req(t, "type", "metric")
    if kind not in ("flat", "conformal"):
        raise ConfigError("metric.type", f"must be 'flat' or 'conformal', got {kind!r}")
    n = _num(_req(t, "n", "metric"), "metric.n", positive=True, integer=True)
    mode = t.get("mode", "torus")
    if mode not in ("torus", "lifted"):
        raise ConfigError("metric.mode", f"must be 'torus' or 'lifted', got {mode!r}")
    terms = []
    for i, term in enumerate(t.get("fourier_terms", [])):
        path = f"metric.fourier_terms[{i}]"
        if not isinstance(term, dict):
            raise ConfigError(path, "expected a table {k = [...], c = ...}")
        terms.append((_int_vec(_req(term, "k", path), n, path + ".k"), float(_num(_req(term, "c", path), path + ".c"))))
    radius = t.get("injectivity_radius")
    if radius is not None:
        radius = float(_num(radius, "metric.injectivity_radius", positive=True))
    if kind == "conformal" and mode == "torus" and radius is None:
        raise ConfigError("metric.injectivity_radius", "required for a conformal metric in torus mode")
    return MetricConfig(kind, n, mode, tuple(terms), radius)


def _parse_hamiltonian(t, n) -> HamiltonianConfig:
    C = float(_num(_req(t, "C", "hamiltonian"), "hamiltonian.C", positive=True))
    eps = float(_num(_req(t, "epsilon", "hamiltonian"), "hamiltonian.epsilon"))
    terms = []
    for i, term in enumerate(t.get("potential_fourier_terms", [])):
        path = f"hamiltonian.potential_fourier_terms[{i}]"
        if not isinstance(term, dict):
            raise ConfigError(path, "expected a table {k = [...], c = ..., harmonic = ..., phase = ...}")
        k = _int_vec(_req(term, "k", path), n, path + ".k")
        c = float(_num(_req(term, "c", path), path + ".c"))
        harmonic = _num(term.get("harmonic", 0), path + ".harmonic", integer=True)
        phase = float(_num(term.get("phase", 0.0), path + ".phase"))
        terms.append(PotentialTerm(k, c, harmonic, phase))
    td = t.get("time_dependent", False)
    if not isinstance(td, bool):
        raise ConfigError("hamiltonian.time_dependent", "expected true or false")
    if not td and any(x.harmonic != 0 for x in terms):
        raise ConfigError("hamiltonian.time_dependent", "is false but a potential term has a nonzero harmonic")
    bump = t.get("bump", {})
    btype = bump.get("type", "cos2")
    if btype not in ("cos2", "cos4", "flat-top"):
        raise ConfigError("hamiltonian.bump.type", f"unknown bump {btype!r}")
    delta = bump.get("delta")
    if delta is not None:
        delta = float(_num(delta, "hamiltonian.bump.delta", positive=True))
        if not delta < C:
            raise ConfigError("hamiltonian.bump.delta", "must be below C")
    step = float(_num(t.get("step", 1e-3), "hamiltonian.step", positive=True))
    return HamiltonianConfig(C, eps, tuple(terms), btype, delta, td, step)


def _parse_search(t, n, C) -> SearchConfig:
    targets = []
    for i, tgt in enumerate(t.get("targets", [{"m": [0] * n, "d": 1}])):
        path = f"search.targets[{i}]"
        if not isinstance(tgt, dict):
            raise ConfigError(path, "expected a table {m = [...], d = ...}")
        m = _int_vec(_req(tgt, "m", path), n, path + ".m")
        d = _num(_req(tgt, "d", path), path + ".d", positive=True, integer=True)
        if C is not None and np.linalg.norm(m) / d >= C:
            raise ConfigError(path, f"||m||/d = {np.linalg.norm(m) / d:.6g} must be below C = {C}")
        targets.append((m, d))
    grid = _num(t.get("grid", 8), "search.grid", positive=True, integer=True)
    jitter = float(_num(t.get("jitter", 0.0), "search.jitter"))
    if jitter < 0:
        raise ConfigError("search.jitter", "must be non-negative")
    N = t.get("N", "auto")
    if N != "auto":
        N = _num(N, "search.N", positive=True, integer=True)
    mode = t.get("mode", "twist")
    if mode not in ("twist", "convex"):
        raise ConfigError("search.mode", f"must be 'twist' or 'convex', got {mode!r}")
    return SearchConfig(tuple(targets), grid, jitter, N, mode)


def _parse_linking(t) -> LinkingConfig:
    kind = _req(t, "map", "linking")
    if kind not in LINKING_MAPS:
        raise ConfigError("linking.map", f"must be one of {LINKING_MAPS}, got {kind!r}")
    C = float(_num(_req(t, "C", "linking"), "linking.C", positive=True))
    n = _num(t.get("n", 1), "linking.n", positive=True, integer=True)
    eps = t.get("eps", [])
    eps = tuple(float(_num(e, f"linking.eps[{i}]")) for i, e in enumerate(eps if isinstance(eps, list) else [eps]))
    if kind == "standard-like":
        if not eps:
            raise ConfigError("linking.eps", "required for the standard-like map")
        n = len(eps)
    shift = float(_num(t.get("shift", 0.0), "linking.shift"))
    q_grid = _num(t.get("q_grid", 32), "linking.q_grid", positive=True, integer=True)
    p_grid = _num(t.get("p_grid", 16), "linking.p_grid", positive=True, integer=True)
    return LinkingConfig(kind, C, eps, shift, n, q_grid, p_grid)


def _parse_tolerances(t) -> Tolerances:
    vals = {}
    for key in ("critical", "dedup", "pairing"):
        if key in t:
            vals[key] = float(_num(t[key], f"tolerances.{key}", positive=True))
    unknown = set(t) - {"critical", "dedup", "pairing"}
    if unknown:
        raise ConfigError(f"tolerances.{sorted(unknown)[0]}", "unknown tolerance")
    return Tolerances(**vals)


def parse_config(data: dict, command: str | None = None) -> ExperimentConfig:
    """Validate a parsed TOML document."""
    needs_system = command != "linking"
    metric = hamiltonian = None
    if needs_system or "metric" in data:
        metric = _parse_metric(_req(data, "metric", ""))
    if needs_system or "hamiltonian" in data:
        hamiltonian = _parse_hamiltonian(_req(data, "hamiltonian", ""), metric.n)
        R = 0.5 if metric.type == "flat" else metric.injectivity_radius
        if metric.mode == "torus" and hamiltonian.C >= R:
            raise ConfigError("hamiltonian.C", f"C = {hamiltonian.C} must be below the injectivity radius {R}")
    search = _parse_search(data.get("search", {}), metric.n if metric else 1,
                           hamiltonian.C if hamiltonian else None)
    linking = None
    if command == "linking" or "linking" in data:
        linking = _parse_linking(_req(data, "linking", ""))
    run = data.get("run", {})
    seed = _num(run.get("seed", 0), "run.seed", integer=True)
    if not 0 <= seed < 2 ** 64:
        raise ConfigError("run.seed", "must be an unsigned 64-bit integer")
    threads = _num(run.get("threads", 1), "run.threads", positive=True, integer=True)
    out = data.get("output", {})
    fmt = out.get("format", "json")
    if fmt not in ("json", "csv"):
        raise ConfigError("output.format", f"must be 'json' or 'csv', got {fmt!r}")
    return ExperimentConfig(
        metric, hamiltonian, search, linking, _parse_tolerances(data.get("tolerances", {})),
        seed, threads, out.get("dir", "out"), fmt,
    )


def load_config(path, command: str | None = None) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            data = tomli.load(fh)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError("<file>", f"not valid TOML: {exc}") from exc
    return parse_config(data, command)
