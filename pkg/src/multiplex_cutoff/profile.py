"""Gaussian cutoff profiles and the minimum-over-p envelope of TV curves."""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass
from typing import Any, Sequence, TextIO

import numpy as np

from .degree_model import DegreeModel, PolytopeRepr
from .errors import GridTooLarge, ZeroWindow
from .graph_gen import MultiplexGraph
from .layer_chain import LayerChainAnalytics, build_chain, gaussian_cdf
from .walk_engine import TVCurve, tv_curve

MIN_GRID_PROB = 1e-6
DEFAULT_GRID_CAP = 10_000


@dataclass(frozen=True)
class CutoffProfile:
    t_p: float
    w_p: float
    N: int

    def to_dict(self) -> dict[str, Any]:
        return {"t_p": self.t_p, "w_p": self.w_p, "N": self.N}


def profile_of(chain: LayerChainAnalytics, N: int) -> CutoffProfile:
    """``t_p = log N / mu`` and ``w_p = sigma sqrt(log N / mu^3)``."""
    if chain.mu <= 0:
        raise ValueError("entropy rate must be positive")
    logn = math.log(N)
    return CutoffProfile(logn / chain.mu, chain.sigma * math.sqrt(logn / chain.mu**3), int(N))


def profile_coefficients(chain: LayerChainAnalytics) -> tuple[float, float]:
    """``(a, b)`` with ``(t mu - log N) / sigma * sqrt(mu / log N) = a t / sqrt(log N) - b sqrt(log N)``."""
    return chain.mu**1.5 / chain.sigma, math.sqrt(chain.mu) / chain.sigma


def theory_curve(profile: CutoffProfile, times) -> np.ndarray:
    """``1 - Phi((t - t_p) / w_p)``."""
    if profile.w_p <= 0:
        raise ZeroWindow("window is zero; the profile degenerates to a step")
    t = np.asarray(times, dtype=float)
    return 1.0 - gaussian_cdf((t - profile.t_p) / profile.w_p)


@dataclass(frozen=True)
class ProfileGap:
    sup_gap: float
    gap_at: int


def profile_gap(curve: TVCurve, profile: CutoffProfile) -> ProfileGap:
    if curve.N is not None and curve.N != profile.N:
        raise ValueError(f"curve has N={curve.N} but profile has N={profile.N}")
    gaps = np.abs(curve.values - theory_curve(profile, curve.times))
    k = int(np.argmax(gaps))
    return ProfileGap(float(gaps[k]), int(curve.times[k]))


def crossing_time(times, values, level: float = 0.5) -> float:
    """First time the curve reaches ``level``, interpolated linearly between integer times."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    below = np.flatnonzero(values <= level)
    if below.size == 0:
        return math.inf
    k = int(below[0])
    if k == 0:
        return float(times[0])
    v0, v1 = values[k - 1], values[k]
    return float(times[k - 1] + (v0 - level) / (v0 - v1) * (times[k] - times[k - 1]))


# -- envelope -----------------------------------------------------------------

def chart_grid(chart: PolytopeRepr, size: int, cap: int = DEFAULT_GRID_CAP) -> list[np.ndarray]:
    """Probability vectors on a uniform chart grid, dropping points with ``min p < 1e-6``."""
    if size < 1:
        raise ValueError("grid size must be positive")
    if size ** chart.dim > cap:
        raise GridTooLarge(f"{size}^{chart.dim} grid points exceed the cap {cap}")
    axes = [np.linspace(lo, hi, size) for lo, hi in zip(chart.lower, chart.upper)]
    out = []
    for x in itertools.product(*axes):
        p = chart.to_p(np.array(x))
        if p.min() >= MIN_GRID_PROB and p.max() <= 1.0 + 1e-10:
            out.append(p)
    return out


@dataclass(frozen=True, eq=False)
class EnvelopeResult:
    times: np.ndarray
    envelope: np.ndarray
    theory: np.ndarray
    sup_gap: float
    grid: list
    curves: np.ndarray            # curves[g, t]
    argmin: np.ndarray            # grid index attaining the minimum at each t
    chart_coords: np.ndarray      # chart coordinates of every grid point
    segment: np.ndarray | None    # 1-D charts: segment parameter of every grid point
    optimizer_index: int | None

    def argmin_coords(self) -> np.ndarray:
        return self.chart_coords[self.argmin]

    def write_csv(self, fh: TextIO, header: str | None = None) -> None:
        if header:
            for line in header.splitlines():
                fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        d = self.chart_coords.shape[1]
        cols = ["t", "envelope", "theory"] + [f"argmin_chart_{j}" for j in range(d)]
        if self.segment is not None:
            cols.append("argmin_segment")
        w.writerow(cols)
        for k, t in enumerate(self.times):
            g = self.argmin[k]
            row = [int(t), repr(float(self.envelope[k])), repr(float(self.theory[k]))]
            row += [repr(float(c)) for c in self.chart_coords[g]]
            if self.segment is not None:
                row.append(repr(float(self.segment[g])))
            w.writerow(row)


def envelope(g: MultiplexGraph, spec: DegreeModel, chart: PolytopeRepr, p_grid_size: int,
             times: Sequence[int], sources: Sequence[int], p_star=None,
             cap: int = DEFAULT_GRID_CAP, threads: int = 1, grid=None) -> EnvelopeResult:
    """Pointwise minimum over a chart grid of the sampled-source TV curves.

    ``p_star`` (when given) is appended to the grid so the envelope is
    bounded by the optimizer's own curve, and its profile supplies the
    theory column. ``grid`` replaces the chart grid with explicit vectors.
    """
    if chart.dim < 1 and grid is None:
        raise ValueError("envelope needs a chart of dimension at least 1")
    times = np.asarray(times, dtype=int)
    if grid is None:
        grid = [] if p_grid_size == 1 and p_star is not None else chart_grid(chart, p_grid_size, cap)
    grid = [np.asarray(p, dtype=float) for p in grid]
    optimizer_index = None
    if p_star is not None:
        p_star = np.asarray(p_star, dtype=float)
        hit = [k for k, p in enumerate(grid) if np.allclose(p, p_star, atol=1e-12, rtol=0)]
        if hit:
            optimizer_index = hit[0]
        else:
            grid.append(p_star)
            optimizer_index = len(grid) - 1
    if not grid:
        raise ValueError("empty grid")
    t_max = int(times.max())
    curves = np.array([tv_curve(g, p, sources, t_max, threads=threads).values[times]
                       for p in grid])
    argmin = curves.argmin(axis=0)
    env = curves.min(axis=0)
    ref = p_star if p_star is not None else grid[0]
    theory = theory_curve(profile_of(build_chain(spec, ref), g.N), times)
    coords = np.array([chart.to_chart(p) for p in grid]).reshape(len(grid), chart.dim)
    segment = np.array([chart.segment_parameter(p) for p in grid]) if chart.dim == 1 else None
    return EnvelopeResult(times, env, theory, float(np.abs(env - theory).max()), grid, curves,
                          argmin, coords, segment, optimizer_index)
