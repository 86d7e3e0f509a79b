import io
import math
from collections import Counter
from itertools import permutations

import numpy as np
from scipy.stats import chisquare

from multiplex_cutoff.degree_model import regular_model, two_type_model
from multiplex_cutoff.graph_gen import (
    WalkOperator, apply_operator, graph_from_edges, is_nice_vertex, nice_fraction, nice_radius,
    sample_graph,
)


def dense_walk(g, p):
    """Transition matrix assembled edge by edge, independent of the sparse code path."""
    P = np.zeros((g.N, g.N))
    for i, layer in enumerate(g.layers):
        for v in range(g.N):
            for w in layer.targets[layer.offsets[v]:layer.offsets[v + 1]]:
                P[v, w] += p[i]
    return P


def test_degrees_are_exact():
    spec = two_type_model(40)
    g = sample_graph(spec, 3)
    for i, layer in enumerate(g.layers):
        assert np.array_equal(layer.out_degree(), spec.out_matrix[g.type_of, i])
        assert np.array_equal(layer.in_degree(), spec.in_matrix[g.type_of, i])
        assert g.edge_count(i) == int(spec.counts @ spec.out_matrix[:, i])


def test_layer_edge_count_arithmetic():
    g = sample_graph(two_type_model(10), 0)
    assert g.edge_count(1) == 5 * 3 + 5 * 1 == 20


def test_same_seed_same_graph():
    spec = two_type_model(100)
    a, b = sample_graph(spec, 42), sample_graph(spec, 42)
    for la, lb in zip(a.layers, b.layers):
        assert np.array_equal(la.targets, lb.targets)
    assert any(not np.array_equal(la.targets, lc.targets)
               for la, lc in zip(a.layers, sample_graph(spec, 43).layers))


def test_unit_degree_layer_is_uniform_permutation():
    spec = regular_model(1, 4)
    seen = Counter()
    trials = 12_000
    for s in range(trials):
        g = sample_graph(spec, s)
        seen[tuple(g.layers[0].targets)] += 1
    assert set(seen) <= set(permutations(range(4)))
    assert len(seen) == 24
    assert chisquare([seen[k] for k in sorted(seen)]).pvalue > 1e-3


def test_unit_degree_n5_in_out_one():
    g = sample_graph(regular_model(2, 5), 9)
    for layer in g.layers:
        assert np.all(layer.out_degree() == 1) and np.all(layer.in_degree() == 1)
        assert sorted(layer.targets) == list(range(5))


def test_operator_is_doubly_stochastic():
    spec = two_type_model(60)
    g = sample_graph(spec, 5)
    op = WalkOperator(g, np.array([0.3, 0.08, 0.16]))
    assert np.allclose(op.row_sums(), 1, atol=1e-10)
    assert np.allclose(op.column_sums(), 1, atol=1e-10)


def test_uniform_is_stationary():
    g = sample_graph(two_type_model(50), 1)
    op = WalkOperator(g, [0.25, 0.1, 0.2])
    u = np.full(50, 1 / 50)
    assert np.allclose(apply_operator(op, u), u, atol=1e-14)


def test_hand_built_graph_matches_dense():
    # two layers on 4 vertices: a 4-cycle and a pair of swaps
    edges = [[(0, 1), (1, 2), (2, 3), (3, 0)], [(0, 1), (1, 0), (2, 3), (3, 2)]]
    g = graph_from_edges(4, edges)
    p = np.array([0.7, 0.3])
    op = WalkOperator(g, p)
    P = dense_walk(g, p)
    e1 = np.eye(4)[1]
    assert np.allclose(apply_operator(op, e1), e1 @ P, atol=1e-15)
    assert np.allclose(op.dense(), P)


def test_output_nonnegative(rng):
    g = sample_graph(two_type_model(30), 2)
    op = WalkOperator(g, [0.1, 0.16, 0.32])
    x = rng.dirichlet(np.ones(30))
    assert apply_operator(op, x).min() >= 0


def test_parallel_edges_accumulate():
    g = graph_from_edges(2, [[(0, 1), (0, 1), (1, 0), (1, 0)]])
    P = WalkOperator(g, [0.5]).dense()
    assert np.allclose(P, [[0, 1], [1, 0]])


# -- nice vertices -----------------------------------------------------------

def test_radius_zero_always_nice():
    g = graph_from_edges(2, [[(0, 0), (1, 1)]])
    assert is_nice_vertex(g, 0, 0)


def test_self_loop_not_nice():
    g = graph_from_edges(3, [[(0, 0), (1, 2), (2, 1)], [(0, 1), (1, 0), (2, 2)]])
    assert not is_nice_vertex(g, 0, 1)
    assert not is_nice_vertex(g, 2, 1)


def test_tree_ball_is_nice():
    g = graph_from_edges(4, [[(0, 1), (1, 2), (2, 3), (3, 0)]])
    assert is_nice_vertex(g, 0, 3)
    assert not is_nice_vertex(g, 0, 4)


def test_nice_radius_arithmetic():
    spec = regular_model(2, 10, degree=3)
    assert nice_radius(spec, math.exp(18)) == math.floor(18 / (10 * math.log(3) + 10 * math.log(2))) == 1
    assert nice_radius(spec, 1) == 0
    assert nice_radius(two_type_model(), 100_000) == 0


def test_nice_fraction_at_desk_scale():
    spec = two_type_model(10_000)
    g = sample_graph(spec, 0)
    h = nice_radius(spec, spec.N)
    assert nice_fraction(g, h) >= 0.99


def test_write_csv_header_and_rows():
    g = sample_graph(two_type_model(10), 0)
    buf = io.StringIO()
    g.write_csv(buf, "seed=0")
    lines = buf.getvalue().splitlines()
    assert lines[0] == "# seed=0"
    assert lines[1] == "layer,source,target"
    assert len(lines) == 2 + g.edge_count()
