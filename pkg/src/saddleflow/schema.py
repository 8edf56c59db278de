"""Problem files and run configurations (YAML, ``schema_version: 1``).

See ``docs/schema.md`` for the full field reference.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml

from .errors import ConfigurationError, SaddleFlowError
from .flow import IntegratorConfig
from .problem import Affine, Problem, Quadratic, SmoothConvexFunction, State
from .sets import Box, ConvexSet, NonnegOrthant, Polyhedron, ProductSet, WholeSpace

SCHEMA_VERSION = 1
ANALYSES = ("kkt", "monotonicity", "dissipation", "zero_dissipation", "hamiltonian", "cycle")
OUTPUT_DIR_ENV = "SADDLEFLOW_OUTPUT_DIR"


class SchemaError(ConfigurationError):
    """A document does not follow the schema; carries the field path and line."""

    def __init__(self, message: str, path: tuple = (), line: Optional[int] = None):
        self.path = path
        self.line = line
        where = _format_path(path)
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(f"{prefix}{where}: {message}" if where else f"{prefix}{message}")


def _format_path(path) -> str:
    out = ""
    for p in path:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out


class _Doc:
    """Parsed YAML plus a map from field paths to source line numbers."""

    def __init__(self, text: str):
        try:
            node = yaml.compose(text, Loader=yaml.SafeLoader)
            self.data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            raise SchemaError(f"invalid YAML: {getattr(exc, 'problem', exc)}",
                              line=mark.line + 1 if mark else None) from None
        self.lines: dict[tuple, int] = {}
        if node is not None:
            self._index(node, ())

    def _index(self, node, path):
        self.lines[path] = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                self._index(v, path + (k.value,))
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                self._index(v, path + (i,))

    def error(self, message, path) -> SchemaError:
        line = None
        for cut in range(len(path), -1, -1):
            if path[:cut] in self.lines:
                line = self.lines[path[:cut]]
                break
        return SchemaError(message, path, line)


def _get(doc: _Doc, obj: dict, key: str, path: tuple, default: Any = ...):
    if not isinstance(obj, dict):
        raise doc.error("expected a mapping", path)
    if key not in obj:
        if default is ...:
            raise doc.error(f"missing required field '{key}'", path)
        return default
    return obj[key]


def _float(doc, v, path) -> float:
    if isinstance(v, str) and v.strip().lower() in ("inf", "+inf", "-inf"):
        return float(v)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise doc.error(f"expected a number, got {v!r}", path)
    return float(v)


def _vector(doc, v, path) -> np.ndarray:
    if not isinstance(v, list):
        raise doc.error("expected a list of numbers", path)
    return np.array([_float(doc, x, path + (i,)) for i, x in enumerate(v)], dtype=float)


def _matrix(doc, v, path) -> np.ndarray:
    if not isinstance(v, list) or not all(isinstance(r, list) for r in v):
        raise doc.error("expected a list of rows", path)
    rows = [_vector(doc, r, path + (i,)) for i, r in enumerate(v)]
    if len({r.shape for r in rows}) > 1:
        raise doc.error("rows have different lengths", path)
    return np.array(rows, dtype=float).reshape(len(rows), -1)


def _check_keys(doc, obj, allowed, path):
    extra = sorted(set(obj) - set(allowed))
    if extra:
        raise doc.error(f"unknown field(s) {extra}", path)


def _function(doc, obj, path) -> SmoothConvexFunction:
    kind = _get(doc, obj, "kind", path)
    try:
        if kind == "affine":
            _check_keys(doc, obj, ("kind", "a", "b"), path)
            return Affine(_vector(doc, _get(doc, obj, "a", path), path + ("a",)),
                          _float(doc, _get(doc, obj, "b", path, 0.0), path + ("b",)))
        if kind == "quadratic":
            _check_keys(doc, obj, ("kind", "Q", "q", "c0"), path)
            return Quadratic(_matrix(doc, _get(doc, obj, "Q", path), path + ("Q",)),
                             _vector(doc, _get(doc, obj, "q", path), path + ("q",)),
                             _float(doc, _get(doc, obj, "c0", path, 0.0), path + ("c0",)))
    except SchemaError:
        raise
    except SaddleFlowError as exc:
        raise doc.error(str(exc), path) from None
    raise doc.error(f"unknown function kind {kind!r} (expected 'affine' or 'quadratic')",
                    path + ("kind",))


def _set(doc, obj, path) -> ConvexSet:
    kind = _get(doc, obj, "kind", path)
    try:
        if kind in ("whole-space", "nonneg-orthant"):
            _check_keys(doc, obj, ("kind", "dim"), path)
            dim = _get(doc, obj, "dim", path)
            if isinstance(dim, bool) or not isinstance(dim, int) or dim < 0:
                raise doc.error("dim must be a nonnegative integer", path + ("dim",))
            return WholeSpace(dim) if kind == "whole-space" else NonnegOrthant(dim)
        if kind == "box":
            _check_keys(doc, obj, ("kind", "lower", "upper"), path)
            return Box(_vector(doc, _get(doc, obj, "lower", path), path + ("lower",)),
                       _vector(doc, _get(doc, obj, "upper", path), path + ("upper",)))
        if kind == "halfspace-intersection":
            _check_keys(doc, obj, ("kind", "A", "b"), path)
            return Polyhedron(_matrix(doc, _get(doc, obj, "A", path), path + ("A",)),
                              _vector(doc, _get(doc, obj, "b", path), path + ("b",)))
        if kind == "product":
            _check_keys(doc, obj, ("kind", "factors"), path)
            factors = _get(doc, obj, "factors", path)
            if not isinstance(factors, list) or not factors:
                raise doc.error("factors must be a nonempty list", path + ("factors",))
            return ProductSet([_set(doc, f, path + ("factors", i)) for i, f in enumerate(factors)])
    except SchemaError:
        raise
    except SaddleFlowError as exc:
        raise doc.error(str(exc), path) from None
    raise doc.error(f"unknown set kind {kind!r}", path + ("kind",))


def _check_version(doc, obj):
    version = _get(doc, obj, "schema_version", ())
    if version != SCHEMA_VERSION:
        raise doc.error(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})",
                        ("schema_version",))


PROBLEM_KEYS = ("schema_version", "name", "objective", "constraints", "hard_set",
                "rho", "tau_x", "tau_mu")


def _problem(doc, obj, path=()) -> Problem:
    if not isinstance(obj, dict):
        raise doc.error("expected a mapping", path)
    _check_keys(doc, obj, PROBLEM_KEYS, path)
    objective = _function(doc, _get(doc, obj, "objective", path), path + ("objective",))
    cons = _get(doc, obj, "constraints", path, [])
    if not isinstance(cons, list):
        raise doc.error("constraints must be a list", path + ("constraints",))
    constraints = []
    for i, c in enumerate(cons):
        g = _function(doc, c, path + ("constraints", i))
        if g.dim != objective.dim:
            raise doc.error(f"constraint has dimension {g.dim}, objective has {objective.dim}",
                            path + ("constraints", i))
        constraints.append(g)
    X = _set(doc, _get(doc, obj, "hard_set", path), path + ("hard_set",))
    if X.dim != objective.dim:
        raise doc.error(f"hard set has dimension {X.dim}, objective has {objective.dim}",
                        path + ("hard_set",))
    name = _get(doc, obj, "name", path, "")
    try:
        return Problem(objective, constraints, X,
                       rho=_float(doc, _get(doc, obj, "rho", path, 0.0), path + ("rho",)),
                       tau_x=_float(doc, _get(doc, obj, "tau_x", path, 1.0), path + ("tau_x",)),
                       tau_mu=_float(doc, _get(doc, obj, "tau_mu", path, 1.0), path + ("tau_mu",)),
                       name=str(name))
    except SchemaError:
        raise
    except SaddleFlowError as exc:
        raise doc.error(str(exc), path) from None


def parse_problem_file(text: str) -> Problem:
    """Parse and validate a problem document."""
    doc = _Doc(text)
    _check_version(doc, doc.data)
    return _problem(doc, doc.data)


# ---------------------------------------------------------------------------
# serialization


def _num(v: float):
    v = float(v)
    return v if math.isfinite(v) else ("inf" if v > 0 else "-inf")


def function_to_dict(f: SmoothConvexFunction) -> dict:
    if isinstance(f, Affine):
        return {"kind": "affine", "a": [float(v) for v in f.a], "b": float(f.b)}
    if isinstance(f, Quadratic):
        return {"kind": "quadratic", "Q": [[float(v) for v in r] for r in f.Q],
                "q": [float(v) for v in f.q], "c0": float(f.c0)}
    raise TypeError(f"cannot serialize {f!r}")


def set_to_dict(s: ConvexSet) -> dict:
    if isinstance(s, WholeSpace):
        return {"kind": "whole-space", "dim": s.dim}
    if isinstance(s, NonnegOrthant):
        return {"kind": "nonneg-orthant", "dim": s.dim}
    if isinstance(s, Box):
        return {"kind": "box", "lower": [_num(v) for v in s.lower],
                "upper": [_num(v) for v in s.upper]}
    if isinstance(s, Polyhedron):
        return {"kind": "halfspace-intersection", "A": [[float(v) for v in r] for r in s.A],
                "b": [float(v) for v in s.b]}
    if isinstance(s, ProductSet):
        return {"kind": "product", "factors": [set_to_dict(f) for f in s.factors]}
    raise TypeError(f"cannot serialize {s!r}")


def problem_to_dict(p: Problem) -> dict:
    out = {"schema_version": SCHEMA_VERSION}
    if p.name:
        out["name"] = p.name
    out.update({
        "objective": function_to_dict(p.objective),
        "constraints": [function_to_dict(g) for g in p.constraints],
        "hard_set": set_to_dict(p.hard_set),
        "rho": float(p.rho),
        "tau_x": float(p.tau_x),
        "tau_mu": float(p.tau_mu),
    })
    return out


def serialize_problem(p: Problem) -> str:
    return yaml.safe_dump(problem_to_dict(p), sort_keys=False, default_flow_style=None)


# ---------------------------------------------------------------------------
# run configuration


@dataclass
class SamplingSpec:
    count: int = 0
    x_range: tuple[float, float] = (-3.0, 3.0)
    mu_range: tuple[float, float] = (0.0, 3.0)

    def draw(self, p: Problem, rng: np.random.Generator, count: Optional[int] = None) -> list[State]:
        """Draw states uniformly in the ranges; ``x`` is projected onto ``X``."""
        out = []
        for _ in range(self.count if count is None else count):
            x = p.hard_set._project(rng.uniform(*self.x_range, size=p.n))
            mu = rng.uniform(*self.mu_range, size=p.m)
            out.append(State(x, mu))
        return out


@dataclass
class CycleSettings:
    tol_radius: float = 5e-3
    tol_return: float = 1e-2
    field_tol: float = 1e-6


@dataclass
class RunConfig:
    problem: Problem
    initial_states: list[State]
    rho_values: list[float]
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    analyses: frozenset = frozenset()
    output_dir: Path = Path("out")
    seed: int = 0
    sampling: SamplingSpec = field(default_factory=SamplingSpec)
    cycle: CycleSettings = field(default_factory=CycleSettings)
    property_samples: int = 200
    workers: Optional[int] = None

    def all_initial_states(self) -> list[State]:
        rng = np.random.default_rng(self.seed)
        return list(self.initial_states) + self.sampling.draw(self.problem, rng)


CONFIG_KEYS = ("schema_version", "problem", "initial_states", "sampling", "rho_values",
               "integrator", "analyses", "cycle", "property_samples", "output_dir", "seed",
               "workers")


def parse_run_config(text: str, base_dir: Path | str = ".") -> RunConfig:
    """Parse a run configuration; a string ``problem`` is a path relative to ``base_dir``."""
    base_dir = Path(base_dir)
    doc = _Doc(text)
    obj = doc.data
    _check_version(doc, obj)
    _check_keys(doc, obj, CONFIG_KEYS, ())

    pobj = _get(doc, obj, "problem", ())
    if isinstance(pobj, str):
        ppath = base_dir / pobj
        try:
            ptext = ppath.read_text()
        except OSError as exc:
            raise doc.error(f"cannot read problem file: {exc.strerror}", ("problem",)) from None
        try:
            problem = parse_problem_file(ptext)
        except SchemaError as exc:
            raise SchemaError(f"in {pobj}: {exc}", ("problem",), doc.lines.get(("problem",))) from None
    else:
        pdoc_obj = dict(pobj) if isinstance(pobj, dict) else pobj
        if isinstance(pdoc_obj, dict):
            pdoc_obj.pop("schema_version", None)
        problem = _problem(_Prefixed(doc, ("problem",)), pdoc_obj)

    states = []
    for i, s in enumerate(_get(doc, obj, "initial_states", (), [])):
        path = ("initial_states", i)
        x = _vector(doc, _get(doc, s, "x", path), path + ("x",))
        mu = _vector(doc, _get(doc, s, "mu", path, []), path + ("mu",))
        if x.shape != (problem.n,) or mu.shape != (problem.m,):
            raise doc.error(f"expected x of length {problem.n} and mu of length {problem.m}", path)
        if np.any(mu < 0.0) or problem.hard_set.residual(x) > 1e-9:
            raise doc.error("initial state lies outside X x R^m_+", path)
        states.append(State(x, mu))

    samp = _get(doc, obj, "sampling", (), {}) or {}
    _check_keys(doc, samp, ("count", "x_range", "mu_range"), ("sampling",))
    count = _get(doc, samp, "count", ("sampling",), 0)
    if isinstance(count, bool) or not isinstance(count, int) or count < 0:
        raise doc.error("count must be a nonnegative integer", ("sampling", "count"))
    ranges = {}
    for key, default in (("x_range", (-3.0, 3.0)), ("mu_range", (0.0, 3.0))):
        r = _get(doc, samp, key, ("sampling",), list(default))
        rv = _vector(doc, r, ("sampling", key))
        if rv.shape != (2,) or not rv[0] <= rv[1]:
            raise doc.error("expected [low, high] with low <= high", ("sampling", key))
        ranges[key] = (float(rv[0]), float(rv[1]))
    if ranges["mu_range"][0] < 0.0:
        raise doc.error("mu_range must be nonnegative", ("sampling", "mu_range"))
    sampling = SamplingSpec(count, ranges["x_range"], ranges["mu_range"])

    rho_values = [float(v) for v in _vector(doc, _get(doc, obj, "rho_values", (), [problem.rho]),
                                            ("rho_values",))]
    if any(r < 0.0 for r in rho_values):
        raise doc.error("rho values must be nonnegative", ("rho_values",))

    integ = _get(doc, obj, "integrator", (), {}) or {}
    _check_keys(doc, integ, ("h", "T", "scheme", "equilibrium_tol", "record_stride"), ("integrator",))
    try:
        defaults = IntegratorConfig()
        icfg = IntegratorConfig(
            h=_float(doc, integ.get("h", defaults.h), ("integrator", "h")),
            T=_float(doc, integ.get("T", defaults.T), ("integrator", "T")),
            scheme=integ.get("scheme", defaults.scheme),
            equilibrium_tol=_float(doc, integ.get("equilibrium_tol", defaults.equilibrium_tol),
                                   ("integrator", "equilibrium_tol")),
            record_stride=integ.get("record_stride", defaults.record_stride),
        )
    except SchemaError:
        raise
    except ConfigurationError as exc:
        raise doc.error(str(exc), ("integrator",)) from None

    analyses = _get(doc, obj, "analyses", (), [])
    if not isinstance(analyses, list) or any(a not in ANALYSES for a in analyses):
        raise doc.error(f"analyses must be a list drawn from {list(ANALYSES)}", ("analyses",))

    cyc = _get(doc, obj, "cycle", (), {}) or {}
    _check_keys(doc, cyc, ("tol_radius", "tol_return", "field_tol"), ("cycle",))
    cycle = CycleSettings(**{k: _float(doc, v, ("cycle", k)) for k, v in cyc.items()})

    seed = _get(doc, obj, "seed", (), 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise doc.error("seed must be a nonnegative integer", ("seed",))
    samples = _get(doc, obj, "property_samples", (), 200)
    if isinstance(samples, bool) or not isinstance(samples, int) or samples < 0:
        raise doc.error("property_samples must be a nonnegative integer", ("property_samples",))
    workers = _get(doc, obj, "workers", (), None)
    if workers is not None and (isinstance(workers, bool) or not isinstance(workers, int) or workers < 1):
        raise doc.error("workers must be a positive integer", ("workers",))

    out_dir = os.environ.get(OUTPUT_DIR_ENV) or _get(doc, obj, "output_dir", (), "out")
    out_path = Path(out_dir)
    if not out_path.is_absolute():
        out_path = base_dir / out_path

    cfg = RunConfig(problem=problem, initial_states=states, rho_values=rho_values,
                    integrator=icfg, analyses=frozenset(analyses), output_dir=out_path,
                    seed=seed, sampling=sampling, cycle=cycle, property_samples=samples,
                    workers=workers)
    if not states and sampling.count == 0:
        raise doc.error("give initial_states or a sampling spec with count > 0", ())
    return cfg


class _Prefixed(_Doc):
    """View of a document rooted at a sub-path (for inline problems)."""

    def __init__(self, doc: _Doc, prefix: tuple):
        self.data = doc.data
        self.lines = doc.lines
        self.prefix = prefix

    def error(self, message, path):
        return _Doc.error(self, message, self.prefix + tuple(path))
