"""Sampling the multiplex directed configuration model and the walk operator on it."""

from __future__ import annotations

import csv
import math
from collections import deque
from dataclasses import dataclass
from typing import TextIO

import numpy as np
import scipy.sparse as sp

from .degree_model import DegreeModel


def layer_rng(seed: int, layer: int) -> np.random.Generator:
    """Independent Philox stream for one layer, keyed by (master seed, layer index)."""
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=(int(layer),))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True, eq=False)
class Layer:
    """Compressed out-adjacency of one layer: targets of ``v`` are ``targets[offsets[v]:offsets[v+1]]``."""

    offsets: np.ndarray
    targets: np.ndarray

    @property
    def sources(self) -> np.ndarray:
        return np.repeat(np.arange(len(self.offsets) - 1), np.diff(self.offsets))

    def out_degree(self) -> np.ndarray:
        return np.diff(self.offsets)

    def in_degree(self) -> np.ndarray:
        return np.bincount(self.targets, minlength=len(self.offsets) - 1)


@dataclass(frozen=True, eq=False)
class MultiplexGraph:
    N: int
    type_of: np.ndarray
    layers: tuple[Layer, ...]

    @property
    def I(self) -> int:
        return len(self.layers)

    def edge_count(self, layer: int | None = None) -> int:
        if layer is None:
            return sum(len(l.targets) for l in self.layers)
        return len(self.layers[layer].targets)

    def out_neighbors(self, v: int):
        """Yield ``(layer, target)`` for every out-edge of ``v``."""
        for i, l in enumerate(self.layers):
            for w in l.targets[l.offsets[v]:l.offsets[v + 1]]:
                yield i, int(w)

    def write_csv(self, fh: TextIO, header: str | None = None) -> None:
        """Edge list with columns ``layer,source,target``."""
        if header:
            for line in header.splitlines():
                fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["layer", "source", "target"])
        for i, l in enumerate(self.layers):
            for s, t in zip(l.sources, l.targets):
                w.writerow([i, int(s), int(t)])


def sample_graph(spec: DegreeModel, seed: int) -> MultiplexGraph:
    """One realization: per layer, a uniform matching of out-stubs to in-stubs.

    Vertices get types in contiguous blocks following the order of
    ``spec.types``. Out-stubs are laid out in vertex order and receive the
    owners of a Fisher-Yates shuffled in-stub array.
    """
    type_of = np.repeat(np.arange(len(spec.types)), spec.counts)
    out_deg = spec.out_matrix.astype(np.int64)[type_of]
    in_deg = spec.in_matrix.astype(np.int64)[type_of]
    vertices = np.arange(spec.N)
    layers = []
    for i in range(spec.I):
        offsets = np.zeros(spec.N + 1, dtype=np.int64)
        np.cumsum(out_deg[:, i], out=offsets[1:])
        in_stubs = np.repeat(vertices, in_deg[:, i])
        layer_rng(seed, i).shuffle(in_stubs)
        layers.append(Layer(offsets, in_stubs))
    return MultiplexGraph(spec.N, type_of, tuple(layers))


def graph_from_edges(N: int, edges_per_layer: list[list[tuple[int, int]]],
                     type_of=None) -> MultiplexGraph:
    """Build a graph from explicit ``(source, target)`` lists, one list per layer."""
    layers = []
    for edges in edges_per_layer:
        edges = sorted(edges, key=lambda e: e[0])
        src = np.array([e[0] for e in edges], dtype=np.int64)
        tgt = np.array([e[1] for e in edges], dtype=np.int64)
        offsets = np.zeros(N + 1, dtype=np.int64)
        np.cumsum(np.bincount(src, minlength=N), out=offsets[1:])
        layers.append(Layer(offsets, tgt))
    if type_of is None:
        type_of = np.zeros(N, dtype=np.int64)
    return MultiplexGraph(N, np.asarray(type_of), tuple(layers))


class WalkOperator:
    """The transition matrix of the walk picking each layer-``i`` out-edge with probability ``p_i``.

    Parallel edges are merged by summing their probabilities. Both ``P`` and
    its transpose are kept in CSR form; :meth:`apply` computes ``dist @ P``.
    """

    def __init__(self, graph: MultiplexGraph, p):
        self.graph = graph
        self.p = np.asarray(p, dtype=float)
        if self.p.shape != (graph.I,):
            raise ValueError(f"p must have {graph.I} entries")
        rows = np.concatenate([l.sources for l in graph.layers])
        cols = np.concatenate([l.targets for l in graph.layers])
        vals = np.concatenate([np.full(len(l.targets), self.p[i])
                               for i, l in enumerate(graph.layers)])
        N = graph.N
        self.P = sp.csr_matrix((vals, (rows, cols)), shape=(N, N))
        self.P.sum_duplicates()
        self.PT = self.P.T.tocsr()
        self.PT.sort_indices()

    @property
    def N(self) -> int:
        return self.graph.N

    def apply(self, dist: np.ndarray) -> np.ndarray:
        """``dist @ P`` for a length-N vector or an ``N x k`` block of column distributions."""
        return self.PT @ dist

    def row_sums(self) -> np.ndarray:
        return np.asarray(self.P.sum(axis=1)).ravel()

    def column_sums(self) -> np.ndarray:
        return np.asarray(self.P.sum(axis=0)).ravel()

    def dense(self) -> np.ndarray:
        return self.P.toarray()


def apply_operator(op: WalkOperator, dist: np.ndarray) -> np.ndarray:
    return op.apply(dist)


def is_nice_vertex(g: MultiplexGraph, v: int, h: int) -> bool:
    """True iff the out-ball of radius ``h`` around ``v`` (all layers) is a tree.

    Every explored out-edge must discover a fresh vertex; a self-loop, a
    parallel edge or any edge back into the ball makes it fail.
    """
    if h <= 0:
        return True
    seen = {int(v)}
    frontier = deque([(int(v), 0)])
    while frontier:
        u, depth = frontier.popleft()
        if depth == h:
            continue
        for l in g.layers:
            for w in l.targets[l.offsets[u]:l.offsets[u + 1]]:
                w = int(w)
                if w in seen:
                    return False
                seen.add(w)
                frontier.append((w, depth + 1))
    return True


def nice_radius(spec: DegreeModel, N: int | None = None) -> int:
    """``floor(log N / (10 log Delta + 10 log I))``."""
    N = spec.N if N is None else N
    denom = 10 * math.log(spec.max_degree) + 10 * math.log(spec.I)
    if spec.max_degree * spec.I < 2:
        raise ValueError("nice radius needs Delta * I >= 2")
    return int(math.floor(math.log(N) / denom))


def nice_fraction(g: MultiplexGraph, h: int, vertices=None) -> float:
    vertices = range(g.N) if vertices is None else vertices
    vertices = list(vertices)
    return sum(is_nice_vertex(g, v, h) for v in vertices) / len(vertices)
