"""Convex-set geometry: Euclidean projection, tangent and normal cones.

Every set is described by finitely many linear inequalities ``C x <= d``
(possibly none, and with ``d = +inf`` for absent box faces).  The row order
defines the constraint indices reported by :func:`active_set`:

* box-like sets: rows ``0..n-1`` are the lower faces ``-x_i <= -l_i`` and
  rows ``n..2n-1`` the upper faces ``x_i <= u_i``;
* :class:`NonnegOrthant`: only the lower faces ``-x_i <= 0``;
* :class:`Polyhedron`: the rows of ``A x <= b`` in their given order;
* :class:`ProductSet`: the rows of each factor, offset by the row counts of
  the preceding factors.

Indices are zero-based.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import nnls

from .errors import ConfigurationError, DimensionError, PreconditionError, ProjectionError

DEFAULT_EPS_ACT = 1e-9
MAX_ENUMERATED_ROWS = 12


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ActiveIndexSet:
    """Sorted constraint indices that are active at a point."""

    indices: tuple[int, ...]
    tolerance: float

    def __iter__(self):
        return iter(self.indices)

    def __len__(self) -> int:
        return len(self.indices)

    def __contains__(self, i) -> bool:
        return i in self.indices


class ConvexSet:
    """Closed convex subset of R^n given by linear inequalities."""

    kind: str = "abstract"

    @property
    def dim(self) -> int:
        raise NotImplementedError

    def rows(self) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(C, d)`` such that the set is ``{x | C x <= d}``."""
        raise NotImplementedError

    @property
    def n_rows(self) -> int:
        return self.rows()[0].shape[0]

    def residual(self, x: np.ndarray) -> float:
        """Largest constraint violation at ``x`` (zero inside the set)."""
        C, d = self.rows()
        if C.shape[0] == 0:
            return 0.0
        with np.errstate(invalid="ignore"):
            viol = C @ x - d
        viol = viol[np.isfinite(viol)]
        return float(max(0.0, viol.max())) if viol.size else 0.0

    def contains(self, x, tol: float = DEFAULT_EPS_ACT) -> bool:
        return self.residual(_check_vector(self, x)) <= tol

    def _project(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _tangent(self, x: np.ndarray, v: np.ndarray, eps_act: float) -> np.ndarray:
        raise NotImplementedError


class Box(ConvexSet):
    """Axis-aligned box ``lower <= x <= upper``; bounds may be infinite."""

    kind = "box"

    def __init__(self, lower, upper):
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        upper = np.atleast_1d(np.asarray(upper, dtype=float))
        if lower.ndim != 1 or lower.shape != upper.shape:
            raise DimensionError(f"box bounds have shapes {lower.shape} and {upper.shape}")
        if np.any(np.isnan(lower)) or np.any(np.isnan(upper)):
            raise ConfigurationError("box bounds must not be NaN")
        if np.any(lower > upper):
            bad = int(np.argmax(lower > upper))
            raise ConfigurationError(
                f"empty box: lower[{bad}] = {lower[bad]} > upper[{bad}] = {upper[bad]}"
            )
        if np.any(lower == np.inf) or np.any(upper == -np.inf):
            raise ConfigurationError("empty box: a bound excludes every real value")
        self.lower = _frozen(lower)
        self.upper = _frozen(upper)

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    def rows(self):
        n = self.dim
        eye = np.eye(n)
        return np.vstack([-eye, eye]), np.concatenate([-self.lower, self.upper])

    def residual(self, x):
        viol = np.maximum(self.lower - x, x - self.upper)
        return float(max(0.0, viol.max())) if viol.size else 0.0

    def _project(self, y):
        return np.minimum(np.maximum(y, self.lower), self.upper)

    def _tangent(self, x, v, eps_act):
        w = v.copy()
        at_lower = np.abs(x - self.lower) <= eps_act
        at_upper = np.abs(self.upper - x) <= eps_act
        w[at_lower] = np.maximum(w[at_lower], 0.0)
        w[at_upper] = np.minimum(w[at_upper], 0.0)
        return w

    def __repr__(self):
        return f"Box(lower={self.lower.tolist()}, upper={self.upper.tolist()})"


class WholeSpace(Box):
    """All of R^n."""

    kind = "whole-space"

    def __init__(self, dim: int):
        if dim < 0:
            raise ConfigurationError("dimension must be nonnegative")
        super().__init__(np.full(dim, -np.inf), np.full(dim, np.inf))

    def rows(self):
        return np.zeros((0, self.dim)), np.zeros(0)

    def residual(self, x):
        return 0.0

    def _project(self, y):
        return y.copy()

    def _tangent(self, x, v, eps_act):
        return v.copy()

    def __repr__(self):
        return f"WholeSpace({self.dim})"


class NonnegOrthant(Box):
    """The cone ``{x | x >= 0}``."""

    kind = "nonneg-orthant"

    def __init__(self, dim: int):
        if dim < 0:
            raise ConfigurationError("dimension must be nonnegative")
        super().__init__(np.zeros(dim), np.full(dim, np.inf))

    def rows(self):
        return -np.eye(self.dim), np.zeros(self.dim)

    def __repr__(self):
        return f"NonnegOrthant({self.dim})"


class Polyhedron(ConvexSet):
    """Intersection of halfspaces ``{x | A x <= b}``."""

    kind = "halfspace-intersection"

    def __init__(self, A, b):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.atleast_1d(np.asarray(b, dtype=float))
        if A.ndim != 2 or b.ndim != 1 or A.shape[0] != b.shape[0]:
            raise DimensionError(f"halfspace data have shapes A{A.shape}, b{b.shape}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise ConfigurationError("halfspace data must be finite")
        norms = np.linalg.norm(A, axis=1)
        if np.any(norms == 0.0):
            raise ConfigurationError(f"row {int(np.argmin(norms))} of A is zero")
        self.A = _frozen(A)
        self.b = _frozen(b)
        self._row_norms = _frozen(norms)

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    def rows(self):
        return self.A, self.b

    def _project(self, y):
        A, b = self.A, self.b
        r = A @ y - b
        if np.all(r <= 0.0):
            return y.copy()
        if A.shape[0] == 1:
            a = A[0]
            return y - (r[0] / (a @ a)) * a
        return _least_distance_project(A, b, y)

    def _tangent(self, x, v, eps_act):
        idx = _active_rows(self.A, self.b, x, eps_act)
        return _polyhedral_cone_project(self.A[idx], v)

    def __repr__(self):
        return f"Polyhedron(A={self.A.tolist()}, b={self.b.tolist()})"


class ProductSet(ConvexSet):
    """Cartesian product of convex sets, coordinates concatenated in order."""

    kind = "product"

    def __init__(self, factors: Sequence[ConvexSet]):
        factors = tuple(factors)
        if not factors:
            raise ConfigurationError("product of zero sets")
        for f in factors:
            if not isinstance(f, ConvexSet):
                raise ConfigurationError(f"product factor {f!r} is not a ConvexSet")
        self.factors = factors
        offsets = np.cumsum([0] + [f.dim for f in factors])
        self._slices = tuple(slice(int(a), int(b)) for a, b in zip(offsets[:-1], offsets[1:]))
        self._dim = int(offsets[-1])

    @property
    def dim(self) -> int:
        return self._dim

    def split(self, z: np.ndarray) -> list[np.ndarray]:
        return [z[s] for s in self._slices]

    def rows(self):
        blocks = [f.rows() for f in self.factors]
        p = sum(C.shape[0] for C, _ in blocks)
        C_all = np.zeros((p, self.dim))
        r = 0
        for (C, _), s in zip(blocks, self._slices):
            C_all[r : r + C.shape[0], s] = C
            r += C.shape[0]
        d_all = np.concatenate([d for _, d in blocks]) if p else np.zeros(0)
        return C_all, d_all

    def residual(self, x):
        return max(f.residual(x[s]) for f, s in zip(self.factors, self._slices))

    def _project(self, y):
        return np.concatenate([f._project(y[s]) for f, s in zip(self.factors, self._slices)])

    def _tangent(self, x, v, eps_act):
        return np.concatenate(
            [f._tangent(x[s], v[s], eps_act) for f, s in zip(self.factors, self._slices)]
        )

    def box_bounds(self) -> tuple[np.ndarray, np.ndarray] | None:
        """Concatenated bounds if every factor is box-like, else ``None``."""
        lows, ups = [], []
        for f in self.factors:
            bb = box_bounds(f)
            if bb is None:
                return None
            lows.append(bb[0])
            ups.append(bb[1])
        return np.concatenate(lows), np.concatenate(ups)

    def __repr__(self):
        return f"ProductSet({list(self.factors)!r})"


def box_bounds(s: ConvexSet) -> tuple[np.ndarray, np.ndarray] | None:
    """Return ``(lower, upper)`` when ``s`` is a box (or product of boxes)."""
    if isinstance(s, Box):
        return np.array(s.lower), np.array(s.upper)
    if isinstance(s, ProductSet):
        return s.box_bounds()
    return None


# ---------------------------------------------------------------------------
# helpers


def _check_vector(s: ConvexSet, y) -> np.ndarray:
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if y.shape != (s.dim,):
        raise DimensionError(f"expected a vector of length {s.dim}, got shape {y.shape}")
    return y


def _active_rows(C, d, x, eps_act) -> np.ndarray:
    if C.shape[0] == 0:
        return np.zeros(0, dtype=int)
    with np.errstate(invalid="ignore"):
        slack = C @ x - d
    return np.flatnonzero(np.abs(slack) <= eps_act)


def _least_distance_project(A, b, y):
    """Project ``y`` onto ``{A w <= b}`` via the least-distance problem.

    With ``w = y + s`` the problem is ``min ||s||`` s.t. ``-A s >= A y - b``,
    which Lawson & Hanson reduce to one NNLS solve.  The NNLS support is then
    used to re-solve the equality-constrained projection exactly.
    """
    n = A.shape[1]
    r = A @ y - b
    E = np.vstack([-A.T, r[None, :]])
    f = np.zeros(n + 1)
    f[-1] = 1.0
    u, _ = nnls(E, f, maxiter=50 * (A.shape[0] + n + 1))
    res = E @ u - f
    if abs(res[-1]) < 1e-14 or np.linalg.norm(res) < 1e-12:
        raise ConfigurationError("halfspace-intersection is empty")
    w = y - res[:n] / res[-1]
    support = np.flatnonzero(u > 0.0)
    if support.size:
        As = A[support]
        lam, *_ = np.linalg.lstsq(As @ As.T, As @ y - b[support], rcond=None)
        w_polished = y - As.T @ lam
        if np.max(A @ w_polished - b) <= max(0.0, np.max(A @ w - b)):
            w = w_polished
    return w


def _polyhedral_cone_project(M: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Project ``v`` onto the cone ``{w | M w <= 0}`` by active-subset enumeration.

    A subset ``S`` of rows is accepted when ``w = v - M_S^T lam`` with
    ``M_S w = 0`` has ``lam >= 0`` and ``M w <= 0``; these are the KKT
    conditions of the projection, so the first accepted subset gives the
    unique minimiser.  Only linearly independent subsets are tried, which
    suffices by Caratheodory's theorem.
    """
    k = M.shape[0]
    if k == 0:
        return v.copy()
    scale = max(1.0, float(np.linalg.norm(v)))
    row_norms = np.linalg.norm(M, axis=1)
    feas_tol = 1e-12 * scale * row_norms
    if np.all(M @ v <= feas_tol):
        return v.copy()
    if k > MAX_ENUMERATED_ROWS:
        raise ProjectionError(
            f"{k} active rows exceed the enumeration limit of {MAX_ENUMERATED_ROWS}"
        )
    dual_tol = 1e-12 * scale
    for size in range(1, min(k, v.shape[0]) + 1):
        for S in itertools.combinations(range(k), size):
            MS = M[list(S)]
            if np.linalg.matrix_rank(MS) < size:
                continue
            lam, *_ = np.linalg.lstsq(MS.T, v, rcond=None)
            if np.any(lam < -dual_tol):
                continue
            w = v - MS.T @ lam
            if np.all(M @ w <= feas_tol):
                return w
    raise ProjectionError("tangent-cone projection could not be certified")


# ---------------------------------------------------------------------------
# public operations


def euclidean_project(s: ConvexSet, y) -> np.ndarray:
    """Nearest point of ``s`` to ``y``."""
    y = _check_vector(s, y)
    return s._project(y)


def active_set(s: ConvexSet, x, eps_act: float = DEFAULT_EPS_ACT) -> ActiveIndexSet:
    """Indices of the defining inequalities that hold with equality at ``x``."""
    x = _check_vector(s, x)
    res = s.residual(x)
    if res > eps_act:
        raise PreconditionError(f"point lies outside the set (violation {res:.3e})")
    C, d = s.rows()
    idx = _active_rows(C, d, x, eps_act)
    return ActiveIndexSet(tuple(int(i) for i in idx), eps_act)


def tangent_cone_project(s: ConvexSet, x, v, eps_act: float = DEFAULT_EPS_ACT) -> np.ndarray:
    """Minimum-norm projection of ``v`` onto the tangent cone of ``s`` at ``x``."""
    x = _check_vector(s, x)
    v = _check_vector(s, v)
    res = s.residual(x)
    if res > eps_act:
        raise PreconditionError(f"point lies outside the set (violation {res:.3e})")
    return s._tangent(x, v, eps_act)


def active_normals(s: ConvexSet, x, eps_act: float = DEFAULT_EPS_ACT) -> np.ndarray:
    """Rows ``C_i`` of the active inequalities; they generate the normal cone."""
    x = _check_vector(s, x)
    C, d = s.rows()
    return C[_active_rows(C, d, x, eps_act)]


def normal_cone_distance(s: ConvexSet, x, eta, eps_act: float = DEFAULT_EPS_ACT) -> float:
    """Euclidean distance from ``eta`` to the normal cone of ``s`` at ``x``."""
    eta = _check_vector(s, eta)
    G = active_normals(s, x, eps_act)
    if G.shape[0] == 0:
        return float(np.linalg.norm(eta))
    _, rnorm = nnls(G.T, eta)
    return float(rnorm)


def normal_cone_contains(s: ConvexSet, x, eta, tol: float = 1e-9,
                         eps_act: float = DEFAULT_EPS_ACT) -> bool:
    """Whether ``eta`` is a nonnegative combination of active normals, to ``tol``."""
    x = _check_vector(s, x)
    res = s.residual(x)
    if res > eps_act:
        raise PreconditionError(f"point lies outside the set (violation {res:.3e})")
    return normal_cone_distance(s, x, eta, eps_act) <= tol
