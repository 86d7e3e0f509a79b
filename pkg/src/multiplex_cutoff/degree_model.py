"""Degree-type ensembles and the polytope of doubly stochastic layer probabilities.

A model is a finite set of vertex types, each carrying an out-degree and an
in-degree per layer, together with the number of vertices of each type.
Probability vectors ``p`` (one entry per layer) are plain numpy arrays; the
permissible ones satisfy ``sum_i p_i a_i^+ = sum_i p_i a_i^- = 1`` for every
type ``a``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any

import numpy as np
from scipy.optimize import linprog

from .errors import ConfigError, EmptyPolytope

MEMBERSHIP_TOL = 1e-12
CHART_TOL = 1e-10
RANK_RTOL = 1e-9
INTERIOR_SLACK = 1e-9


@dataclass(frozen=True)
class DegreeType:
    out_degrees: tuple[int, ...]
    in_degrees: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "out_degrees", tuple(int(d) for d in self.out_degrees))
        object.__setattr__(self, "in_degrees", tuple(int(d) for d in self.in_degrees))

    @property
    def layers(self) -> int:
        return len(self.out_degrees)

    @property
    def total_out(self) -> int:
        return sum(self.out_degrees)

    @property
    def total_in(self) -> int:
        return sum(self.in_degrees)


@dataclass(frozen=True)
class Violation:
    kind: str
    message: str
    layer: int | None = None
    type_index: int | None = None

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, "message": self.message,
                "layer": self.layer, "type_index": self.type_index}


@dataclass(frozen=True)
class DegreeModel:
    """The type set with its frequencies.

    ``counts[j]`` is the number of vertices of type ``types[j]``; ``N`` is
    their sum. Construction does not validate; call :func:`validate_model`.
    """

    types: tuple[DegreeType, ...]
    counts: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "types", tuple(self.types))
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))

    @property
    def N(self) -> int:
        return sum(self.counts)

    @property
    def I(self) -> int:
        return self.types[0].layers

    @property
    def max_degree(self) -> int:
        """The degree bound (largest entry over all types and layers)."""
        return max(max(t.out_degrees + t.in_degrees) for t in self.types)

    @property
    def out_matrix(self) -> np.ndarray:
        return np.array([t.out_degrees for t in self.types], dtype=float)

    @property
    def in_matrix(self) -> np.ndarray:
        return np.array([t.in_degrees for t in self.types], dtype=float)

    @property
    def frequencies(self) -> np.ndarray:
        c = np.array(self.counts, dtype=float)
        return c / c.sum()

    @property
    def mean_out(self) -> np.ndarray:
        """Mean out-degree of every layer, ``m_i = sum_a (k(a)/N) a_i^+``."""
        return self.frequencies @ self.out_matrix

    @property
    def mean_in(self) -> np.ndarray:
        return self.frequencies @ self.in_matrix

    def constraint_matrix(self) -> np.ndarray:
        """Rows are every type's out-degree vector followed by every in-degree vector."""
        return np.vstack([self.out_matrix, self.in_matrix])

    def with_population(self, N: int) -> "DegreeModel":
        """Rescale the counts to a new population, keeping the type fractions exactly."""
        total = self.N
        scaled = []
        for c in self.counts:
            value = Fraction(c * N, total)
            if value.denominator != 1:
                raise ConfigError(f"count {c}/{total} of N={N} is not an integer")
            scaled.append(int(value))
        return DegreeModel(self.types, tuple(scaled))

    def to_dict(self) -> dict[str, Any]:
        return {
            "layers": self.I,
            "N": self.N,
            "types": [
                {"out": list(t.out_degrees), "in": list(t.in_degrees), "count": c}
                for t, c in zip(self.types, self.counts)
            ],
        }


def validate_model(spec: DegreeModel) -> list[Violation]:
    """Return every violated invariant of ``spec``; an empty list means constructible."""
    out: list[Violation] = []
    if not spec.types:
        return [Violation("empty", "model has no types")]
    if len(spec.counts) != len(spec.types):
        out.append(Violation("shape", "number of counts differs from number of types"))
        return out
    I = spec.types[0].layers
    if I < 1:
        out.append(Violation("shape", "types must have at least one layer"))
        return out
    for j, t in enumerate(spec.types):
        if t.layers != I or len(t.in_degrees) != I:
            out.append(Violation("shape", f"type {j} does not have {I} out- and in-degrees",
                                 type_index=j))
            continue
        for i in range(I):
            if t.out_degrees[i] < 1 or t.in_degrees[i] < 1:
                out.append(Violation("degree", f"type {j} has a degree below 1 in layer {i}",
                                     layer=i, type_index=j))
    for j, c in enumerate(spec.counts):
        if c < 1:
            out.append(Violation("count", f"type {j} has non-positive count {c}", type_index=j))
    if any(v.kind == "shape" for v in out):
        return out
    counts = np.array(spec.counts, dtype=np.int64)
    heads = counts @ np.array([t.out_degrees for t in spec.types], dtype=np.int64)
    tails = counts @ np.array([t.in_degrees for t in spec.types], dtype=np.int64)
    for i in range(I):
        if heads[i] != tails[i]:
            out.append(Violation(
                "balance",
                f"layer {i}: {int(heads[i])} out-stubs but {int(tails[i])} in-stubs",
                layer=i,
            ))
    return out


def is_permissible(spec: DegreeModel, p: np.ndarray, tol: float = MEMBERSHIP_TOL) -> bool:
    p = np.asarray(p, dtype=float)
    if p.shape != (spec.I,) or np.any(p < -tol) or np.any(p > 1 + tol):
        return False
    residual = spec.constraint_matrix() @ p - 1.0
    return bool(np.max(np.abs(residual)) <= tol)


@dataclass(frozen=True, eq=False)
class PolytopeRepr:
    """Affine chart ``p = base_point + basis @ x`` of the permissible set.

    ``basis`` has orthonormal columns spanning the nullspace of the constraint
    matrix. The box constraint ``0 <= p <= 1`` pulled back to chart
    coordinates is ``-base_point <= basis @ x <= 1 - base_point``;
    ``lower``/``upper`` hold the coordinate-wise bounding box of that region.
    """

    base_point: np.ndarray
    basis: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    rank: int

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    @property
    def I(self) -> int:
        return self.base_point.shape[0]

    def to_p(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.base_point + x @ self.basis.T

    def to_chart(self, p) -> np.ndarray:
        return (np.asarray(p, dtype=float) - self.base_point) @ self.basis

    def contains(self, x, tol: float = CHART_TOL) -> bool:
        p = self.to_p(x)
        return bool(np.all(p >= -tol) and np.all(p <= 1 + tol))

    def chord(self, x, direction) -> tuple[float, float]:
        """Interval of ``s`` keeping ``x + s * direction`` inside the box."""
        p = self.to_p(x)
        dp = self.basis @ np.asarray(direction, dtype=float)
        lo, hi = -math.inf, math.inf
        for pi, di in zip(p, dp):
            if abs(di) < 1e-15:
                continue
            a, b = (-pi) / di, (1.0 - pi) / di
            if a > b:
                a, b = b, a
            lo, hi = max(lo, a), min(hi, b)
        return lo, hi

    def sample(self, rng: np.random.Generator, n: int, start=None, burn: int = 20,
               thin: int = 3) -> np.ndarray:
        """Hit-and-run samples of chart coordinates, approximately uniform on the polytope."""
        if self.dim == 0:
            return np.zeros((n, 0))
        x = self.center() if start is None else np.asarray(start, dtype=float)
        out = np.empty((n, self.dim))
        k = 0
        step = 0
        while k < n:
            d = rng.standard_normal(self.dim)
            d /= np.linalg.norm(d)
            lo, hi = self.chord(x, d)
            x = x + rng.uniform(lo, hi) * d
            step += 1
            if step > burn and step % thin == 0:
                out[k] = x
                k += 1
        return out

    def center(self) -> np.ndarray:
        """Chart point maximizing the smallest probability (an interior point when one exists)."""
        x, _ = _max_min_coordinate(self)
        return x

    def endpoints(self) -> tuple[np.ndarray, np.ndarray]:
        """The two vertices of a one-dimensional chart, larger first coordinate first."""
        if self.dim != 1:
            raise ValueError("endpoints are defined only for one-dimensional charts")
        a, b = self.to_p([self.lower[0]]), self.to_p([self.upper[0]])
        if tuple(b) > tuple(a):
            a, b = b, a
        return np.clip(a, 0.0, 1.0), np.clip(b, 0.0, 1.0)

    def segment_parameter(self, p) -> float:
        """``s`` with ``p = s * first + (1 - s) * second`` on a one-dimensional chart."""
        a, b = self.endpoints()
        d = a - b
        return float(np.dot(np.asarray(p, dtype=float) - b, d) / np.dot(d, d))

    def to_dict(self) -> dict[str, Any]:
        return {
            "dim": self.dim,
            "rank": self.rank,
            "base_point": self.base_point.tolist(),
            "basis": self.basis.T.tolist(),
            "lower": self.lower.tolist(),
            "upper": self.upper.tolist(),
        }


def build_polytope(spec: DegreeModel) -> PolytopeRepr:
    A = spec.constraint_matrix()
    U, s, Vt = np.linalg.svd(A)
    rank = int(np.sum(s > RANK_RTOL * s[0])) if s.size else 0
    # minimum-norm solution of A p = 1 from the truncated SVD
    ones = np.ones(A.shape[0])
    base = Vt[:rank].T @ ((U[:, :rank].T @ ones) / s[:rank])
    if np.max(np.abs(A @ base - 1.0)) > CHART_TOL:
        raise EmptyPolytope("the equality constraints are inconsistent")
    basis = Vt[rank:].T.copy()
    d = basis.shape[1]
    if d == 0:
        if np.any(base < -CHART_TOL) or np.any(base > 1 + CHART_TOL):
            raise EmptyPolytope("the unique solution of the equalities leaves [0,1]^I")
        return PolytopeRepr(np.clip(base, 0.0, 1.0), basis, np.zeros(0), np.zeros(0), rank)

    A_ub = np.vstack([-basis, basis])
    b_ub = np.concatenate([base, 1.0 - base])
    lower, upper = np.empty(d), np.empty(d)
    for j in range(d):
        c = np.zeros(d)
        c[j] = 1.0
        lo = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=[(None, None)] * d, method="highs")
        if lo.status == 2:
            raise EmptyPolytope("no point of [0,1]^I satisfies the equalities")
        hi = linprog(-c, A_ub=A_ub, b_ub=b_ub, bounds=[(None, None)] * d, method="highs")
        lower[j], upper[j] = lo.x[j], hi.x[j]
    return PolytopeRepr(base, basis, lower, upper, rank)


def _max_min_coordinate(chart: PolytopeRepr) -> tuple[np.ndarray, float]:
    """LP: maximize slack ``s`` subject to ``p_i >= s`` over the chart."""
    d = chart.dim
    if d == 0:
        return np.zeros(0), float(chart.base_point.min())
    B, p0 = chart.basis, chart.base_point
    # variables (x, s); -(p0 + B x)_i + s <= 0 and (p0 + B x)_i <= 1
    A_ub = np.vstack([
        np.hstack([-B, np.ones((chart.I, 1))]),
        np.hstack([B, np.zeros((chart.I, 1))]),
    ])
    b_ub = np.concatenate([p0, 1.0 - p0])
    c = np.zeros(d + 1)
    c[-1] = -1.0
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=[(None, None)] * d + [(None, 1.0)],
                  method="highs")
    if res.status != 0:
        raise EmptyPolytope(f"interior-point LP failed: {res.message}")
    return res.x[:d], float(res.x[-1])


@dataclass(frozen=True, eq=False)
class AssumptionReport:
    has_interior_point: bool
    non_regular: bool
    max_min_coordinate: float
    interior_point: np.ndarray = field(repr=False)

    def to_dict(self) -> dict[str, Any]:
        return {
            "has_interior_point": self.has_interior_point,
            "non_regular": self.non_regular,
            "max_min_coordinate": self.max_min_coordinate,
            "interior_point": self.interior_point.tolist(),
        }


def check_assumptions(spec: DegreeModel, chart: PolytopeRepr | None = None) -> AssumptionReport:
    chart = build_polytope(spec) if chart is None else chart
    x, slack = _max_min_coordinate(chart)
    outs = {t.total_out for t in spec.types}
    ins = {t.total_in for t in spec.types}
    return AssumptionReport(
        has_interior_point=slack > INTERIOR_SLACK,
        non_regular=len(outs) > 1 or len(ins) > 1,
        max_min_coordinate=slack,
        interior_point=chart.to_p(x),
    )


def in_restricted_set(p, A: float, N: float | None = None, *, log_n: float | None = None) -> bool:
    """Whether ``min(p) >= A * log(N)^(-1/3)``; pass ``log_n`` for populations beyond float range."""
    if log_n is None:
        if N is None:
            raise TypeError("either N or log_n is required")
        log_n = math.log(N)
    return bool(np.min(p) >= A * log_n ** (-1.0 / 3.0))


# -- reference ensembles ----------------------------------------------------

def two_type_model(N: int = 100_000) -> DegreeModel:
    """Two equally frequent symmetric types (2,3,1) and (2,1,2) on three layers."""
    if N % 2:
        raise ValueError("N must be even")
    a = DegreeType((2, 3, 1), (2, 3, 1))
    b = DegreeType((2, 1, 2), (2, 1, 2))
    return DegreeModel((a, b), (N // 2, N // 2))


def regular_model(I: int, N: int, degree: int = 1) -> DegreeModel:
    """A single type with the same degree in every layer and direction."""
    t = DegreeType((degree,) * I, (degree,) * I)
    return DegreeModel((t,), (N,))


# -- file parsing -----------------------------------------------------------

def _as_fraction(value) -> Fraction:
    if isinstance(value, float):
        return Fraction(repr(value))
    return Fraction(value)


def model_from_dict(data: dict[str, Any], N: int | None = None) -> DegreeModel:
    """Parse the model section of a config.

    Keys: ``layers`` (optional check), ``N``, and ``types``: a list of
    ``{out: [...], in: [...], count: int}`` or ``{..., fraction: 0.5 | "1/2"}``.
    """
    try:
        raw_types = data["types"]
    except (KeyError, TypeError):
        raise ConfigError("model needs a 'types' list") from None
    N = data.get("N") if N is None else N
    types, counts = [], []
    for j, entry in enumerate(raw_types):
        try:
            t = DegreeType(entry["out"], entry["in"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"type {j}: needs integer 'out' and 'in' lists ({exc})") from None
        if "count" in entry:
            c = _as_fraction(entry["count"])
        elif "fraction" in entry:
            if N is None:
                raise ConfigError("fractional counts need N")
            c = _as_fraction(entry["fraction"]) * int(N)
        else:
            raise ConfigError(f"type {j}: needs 'count' or 'fraction'")
        if c.denominator != 1:
            raise ConfigError(f"type {j}: resolved count {c} is not an integer")
        types.append(t)
        counts.append(int(c))
    model = DegreeModel(tuple(types), tuple(counts))
    if N is not None and model.N != int(N):
        raise ConfigError(f"counts sum to {model.N}, expected N={N}")
    if "layers" in data and any(t.layers != int(data["layers"]) for t in types):
        raise ConfigError(f"types do not all have {data['layers']} layers")
    return model
