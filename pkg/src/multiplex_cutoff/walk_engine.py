"""Exact evolution of the walk law, TV-distance curves and network path weights."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Sequence, TextIO

import numpy as np
import scipy.sparse as sp

from .errors import PreconditionViolated, StateSpaceTooLarge
from .graph_gen import MultiplexGraph, WalkOperator, is_nice_vertex
from .layer_chain import (
    BE_GRID, BE_WIDTH, MAX_CLASSES, CountLaw, LayerChainAnalytics, _compositions, class_count,
    gaussian_tail_comparator,
)

DEFAULT_SOURCES = 32


def default_sources(g: MultiplexGraph, count: int = DEFAULT_SOURCES, seed: int = 0) -> list[int]:
    """Source vertices stratified by type, proportional to type frequency (at least one per type)."""
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(0x5EED,)))
    types, freq = np.unique(g.type_of, return_counts=True)
    count = min(count, g.N)
    alloc = np.maximum(1, np.floor(count * freq / g.N).astype(int))
    while alloc.sum() > count:
        alloc[np.argmax(alloc)] -= 1
    k = 0
    while alloc.sum() < count:
        j = k % len(types)
        if alloc[j] < freq[j]:
            alloc[j] += 1
        k += 1
    out: list[int] = []
    for t, a in zip(types, alloc):
        members = np.flatnonzero(g.type_of == t)
        out.extend(int(v) for v in np.sort(rng.choice(members, size=min(a, len(members)),
                                                       replace=False)))
    return out


@dataclass(frozen=True, eq=False)
class TVCurve:
    """TV distance to uniform over time; ``per_source[t, s]`` and its max over sources."""

    sources: list
    times: np.ndarray
    per_source: np.ndarray
    N: int | None = None

    @property
    def values(self) -> np.ndarray:
        return self.per_source.max(axis=1)

    def at(self, t: int) -> float:
        return float(self.values[int(np.searchsorted(self.times, t))])

    def write_csv(self, fh: TextIO, header: str | None = None) -> None:
        if header:
            for line in header.splitlines():
                fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "D_max"] + [f"D_source_{k}" for k in range(len(self.sources))])
        for t, row, m in zip(self.times, self.per_source, self.values):
            w.writerow([int(t), repr(float(m))] + [repr(float(x)) for x in row])


def tv_to_uniform(X: np.ndarray) -> np.ndarray:
    """Column-wise TV distance to uniform, summed as ``sum_w (X[w] - 1/N)^+``.

    Equal to half the L1 distance for probability vectors; the one-sided
    form gives exactly ``1 - 1/N`` for a point mass.
    """
    N = X.shape[0]
    return np.maximum(X - 1.0 / N, 0.0).sum(axis=0)


def _evolve_block(op: WalkOperator, X: np.ndarray, t_max: int) -> np.ndarray:
    out = np.empty((t_max + 1, X.shape[1]))
    out[0] = tv_to_uniform(X)
    for t in range(1, t_max + 1):
        X = op.apply(X)
        out[t] = tv_to_uniform(X)
    return out


def evolve_tv(op: WalkOperator, initial: np.ndarray, t_max: int, threads: int = 1,
              chunk: int = 8) -> np.ndarray:
    """TV curves (``(t_max+1) x k``) for the ``k`` initial distributions in the columns of ``initial``.

    Columns are processed in fixed chunks, each owning its buffer, so the
    result does not depend on ``threads``.
    """
    initial = np.asarray(initial, dtype=float)
    if initial.ndim == 1:
        initial = initial[:, None]
    k = initial.shape[1]
    blocks = [(a, min(a + chunk, k)) for a in range(0, k, chunk)]

    def run(ab):
        a, b = ab
        return _evolve_block(op, initial[:, a:b].copy(), t_max)

    if threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, blocks))
    else:
        parts = [run(ab) for ab in blocks]
    return np.hstack(parts)


def point_masses(N: int, sources: Sequence[int]) -> np.ndarray:
    X = np.zeros((N, len(sources)))
    X[np.asarray(sources, dtype=int), np.arange(len(sources))] = 1.0
    return X


def tv_curve(g: MultiplexGraph, p, sources: Sequence[int], t_max: int, threads: int = 1,
             op: WalkOperator | None = None) -> TVCurve:
    if len(sources) == 0:
        raise ValueError("sources must be nonempty")
    op = WalkOperator(g, p) if op is None else op
    per = evolve_tv(op, point_masses(g.N, sources), t_max, threads=threads)
    return TVCurve(list(sources), np.arange(t_max + 1), per, g.N)


def tv_curve_uniform_start(g: MultiplexGraph, p, t_max: int) -> TVCurve:
    """Curve started from the uniform law (identically zero for a doubly stochastic walk)."""
    op = WalkOperator(g, p)
    per = evolve_tv(op, np.full(g.N, 1.0 / g.N), t_max)
    return TVCurve(["uniform"], np.arange(t_max + 1), per, g.N)


# -- path weights on the network ---------------------------------------------

def network_count_law(g: MultiplexGraph, p, v: int, t: int) -> CountLaw:
    """Exact law of the per-layer step counts of ``t`` walk steps from ``v``.

    Path weights depend only on those counts, so a DP over
    (vertex, count class) with the vertex marginalized at the end gives the
    law of the path weight.
    """
    if t < 1:
        raise ValueError("t must be at least 1")
    p = np.asarray(p, dtype=float)
    I, N = g.I, g.N
    n_classes = class_count(t, I)
    if n_classes * N > MAX_CLASSES:
        raise StateSpaceTooLarge(f"{n_classes} count classes x {N} vertices")
    adj_T = []
    for l in g.layers:
        A = sp.csr_matrix((np.ones(len(l.targets)), (l.sources, l.targets)), shape=(N, N))
        adj_T.append(A.T.tocsr())
    radix = (t + 1) ** np.arange(I, dtype=np.int64)
    counts = np.zeros((1, I), dtype=np.int64)
    mass = np.zeros((N, 1))
    mass[v, 0] = 1.0
    for k in range(1, t + 1):
        nxt_counts = _compositions(k, I)
        keys = nxt_counts @ radix
        order = np.argsort(keys)
        keys_sorted = keys[order]
        nxt = np.zeros((N, len(nxt_counts)))
        for i in range(I):
            if p[i] == 0:
                continue
            dest = order[np.searchsorted(keys_sorted, counts @ radix + radix[i])]
            nxt[:, dest] += p[i] * (adj_T[i] @ mass)
        counts, mass = nxt_counts, nxt
    probs = mass.sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        logp = np.log(p)
        log_weights = np.where(counts > 0, counts * logp, 0.0).sum(axis=1)
    return CountLaw(counts, probs, log_weights)


def _splitmix64(x: np.ndarray) -> np.ndarray:
    x = x + np.uint64(0x9E3779B97F4A7C15)
    x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return x ^ (x >> np.uint64(31))


def counter_uniforms(seed: int, walker_ids: np.ndarray, step: int) -> np.ndarray:
    """Uniforms in [0,1) from a hash of (seed, walker id, step); stream per walker."""
    with np.errstate(over="ignore"):
        key = _splitmix64(np.full(walker_ids.shape, np.uint64(int(seed) & (2**64 - 1))))
        x = _splitmix64(key ^ _splitmix64(walker_ids.astype(np.uint64) * np.uint64(0x100000001B3)
                                          + np.uint64(step)))
    return (x >> np.uint64(11)).astype(np.float64) * (1.0 / 2**53)


class EdgeSampler:
    """Draws one out-edge per walker according to the walk law."""

    def __init__(self, g: MultiplexGraph, p):
        p = np.asarray(p, dtype=float)
        src = np.concatenate([l.sources for l in g.layers])
        tgt = np.concatenate([l.targets for l in g.layers])
        lay = np.concatenate([np.full(len(l.targets), i) for i, l in enumerate(g.layers)])
        order = np.lexsort((lay, src))
        self.src, self.tgt, self.layer = src[order], tgt[order], lay[order]
        prob = p[self.layer]
        self.offsets = np.zeros(g.N + 1, dtype=np.int64)
        np.cumsum(np.bincount(self.src, minlength=g.N), out=self.offsets[1:])
        cum = np.cumsum(prob)
        row_start = np.concatenate([[0.0], cum])[self.offsets[:-1]][self.src]
        # monotone key: vertex index plus within-row cumulative probability
        self.key = self.src + (cum - row_start)

    def step(self, at: np.ndarray, u: np.ndarray) -> np.ndarray:
        e = np.searchsorted(self.key, at + u, side="right")
        return np.clip(e, self.offsets[at], self.offsets[at + 1] - 1)


@dataclass(frozen=True, eq=False)
class PathWeightSample:
    source: int
    t: int
    method: str
    value: float
    stderr: float
    phi: float
    counts: np.ndarray = field(repr=False)
    terminal: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self) -> dict[str, Any]:
        return {"source": self.source, "t": self.t, "method": self.method, "phi": self.phi,
                "value": self.value, "standard_error": self.stderr}


def sample_walkers(g: MultiplexGraph, p, v: int, t: int, walkers: int, seed: int,
                   sampler: EdgeSampler | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Run ``walkers`` independent walks of ``t`` steps from ``v``; return (layer counts, terminal)."""
    sampler = EdgeSampler(g, p) if sampler is None else sampler
    ids = np.arange(walkers, dtype=np.uint64)
    at = np.full(walkers, int(v), dtype=np.int64)
    counts = np.zeros((walkers, g.I), dtype=np.int64)
    rows = np.arange(walkers)
    for k in range(t):
        e = sampler.step(at, counter_uniforms(seed, ids, k))
        counts[rows, sampler.layer[e]] += 1
        at = sampler.tgt[e]
    return counts, at


def path_weight_tail(g: MultiplexGraph, p, v: int, t: int, phi: float, method: str = "exact",
                     walkers: int = 100_000, seed: int = 0) -> PathWeightSample:
    """``Q_{v,t}(phi)``: probability of the t-step paths from ``v`` with weight above ``phi``."""
    if t < 1:
        raise ValueError("t must be at least 1")
    p = np.asarray(p, dtype=float)
    if method == "exact":
        law = network_count_law(g, p, v, t)
        return PathWeightSample(v, t, "exact", law.tail(phi), 0.0, phi, law.counts)
    if method != "monte_carlo":
        raise ValueError(f"unknown method {method!r}")
    counts, terminal = sample_walkers(g, p, v, t, walkers, seed)
    with np.errstate(divide="ignore", invalid="ignore"):
        logw = np.where(counts > 0, counts * np.log(p), 0.0).sum(axis=1)
    hits = logw > math.log(phi) if phi > 0 else np.ones(walkers, dtype=bool)
    q = float(hits.mean())
    return PathWeightSample(v, t, "monte_carlo", q, math.sqrt(q * (1 - q) / walkers), phi,
                            counts, terminal)


@dataclass(frozen=True)
class QComparison:
    sup_gap: float
    log_phi_at: float


def compare_Q_to_layer_chain(g: MultiplexGraph, chain: LayerChainAnalytics, v: int, t: int,
                             log_phi_grid=None, h: int | None = None) -> QComparison:
    """Sup over the grid of ``|Q_{v,t}(phi) - Phi((-mu t - log phi) / (sigma sqrt t))|``."""
    if h is not None and not is_nice_vertex(g, v, h):
        raise PreconditionViolated(f"vertex {v} is not nice at radius {h}")
    if log_phi_grid is None:
        spread = BE_WIDTH * chain.sigma * math.sqrt(t)
        log_phi_grid = np.linspace(-chain.mu * t - spread, -chain.mu * t + spread, BE_GRID)
    log_phi_grid = np.asarray(log_phi_grid, dtype=float)
    law = network_count_law(g, chain.p, v, t)
    gaps = np.abs(law.tail_log(log_phi_grid) - gaussian_tail_comparator(chain, t, log_phi_grid))
    k = int(np.argmax(gaps))
    return QComparison(float(gaps[k]), float(log_phi_grid[k]))


# -- slow mixing near a permutation layer -------------------------------------

@dataclass(frozen=True, eq=False)
class SlowMixingReport:
    min_D: float
    per_source: np.ndarray
    support: np.ndarray
    dominant_layer: int
    support_bound: float
    threshold: float

    def to_dict(self) -> dict[str, Any]:
        return {"min_D": self.min_D, "per_source": self.per_source.tolist(),
                "support": self.support.tolist(), "support_bound": self.support_bound,
                "dominant_layer": self.dominant_layer, "threshold": self.threshold}


def slow_mixing_threshold(max_degree: int, I: int) -> float:
    """``1 - 1 / (3 (Delta I)^(Delta^2) log(Delta I))``; ``-inf`` when ``Delta I = 1``."""
    DI = max_degree * I
    if DI <= 1:
        return -math.inf
    return 1.0 - 1.0 / (3.0 * DI ** (max_degree**2) * math.log(DI))


def slow_mixing_witness(g: MultiplexGraph, q, t: int, sources: Sequence[int] | None = None,
                        sigmas: float = 5.0) -> SlowMixingReport:
    q = np.asarray(q, dtype=float)
    max_degree = max(int(max(l.out_degree().max(), l.in_degree().max())) for l in g.layers)
    threshold = slow_mixing_threshold(max_degree, g.I)
    i = int(np.argmax(q))
    if q[i] < threshold:
        raise PreconditionViolated(f"max probability {q[i]:.4g} below threshold {threshold:.6g}")
    layer = g.layers[i]
    if not (np.all(layer.out_degree() == 1) and np.all(layer.in_degree() == 1)):
        raise PreconditionViolated(f"layer {i} is not a permutation layer")
    sources = default_sources(g) if sources is None else list(sources)
    op = WalkOperator(g, q)
    X = point_masses(g.N, sources)
    for _ in range(t):
        X = op.apply(X)
    per = tv_to_uniform(X)
    support = (X > 1e-15).sum(axis=0)
    eps = 1.0 - q[i]
    b_hi = t * eps + sigmas * math.sqrt(t * eps * (1 - eps))
    return SlowMixingReport(float(per.min()), per, support, i,
                            float((max_degree * g.I) ** b_hi), threshold)
