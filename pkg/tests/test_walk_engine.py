import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from multiplex_cutoff.degree_model import regular_model, two_type_model
from multiplex_cutoff.errors import PreconditionViolated
from multiplex_cutoff.graph_gen import graph_from_edges, sample_graph
from multiplex_cutoff.layer_chain import build_chain, gaussian_cdf
from multiplex_cutoff.optimizer import entropy_rate
from multiplex_cutoff.walk_engine import (
    counter_uniforms, default_sources, network_count_law, path_weight_tail,
    compare_Q_to_layer_chain, slow_mixing_threshold, slow_mixing_witness, tv_curve,
    tv_curve_uniform_start, tv_to_uniform,
)

from test_graph_gen import dense_walk


def dense_tv(g, p, sources, t_max):
    P = dense_walk(g, p)
    out = np.zeros((t_max + 1, len(sources)))
    for k, s in enumerate(sources):
        x = np.zeros(g.N)
        x[s] = 1.0
        for t in range(t_max + 1):
            out[t, k] = 0.5 * np.abs(x - 1 / g.N).sum()
            x = x @ P
    return out


def six_vertex_graph():
    edges = [
        [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0)],
        [(0, 3), (3, 0), (1, 4), (4, 1), (2, 5), (5, 2)],
        [(0, 0), (1, 5), (5, 1), (2, 4), (4, 2), (3, 3)],
    ]
    return graph_from_edges(6, edges)


# -- TV curves ---------------------------------------------------------------

def test_start_value_is_one_minus_one_over_n():
    g = sample_graph(two_type_model(100), 0)
    curve = tv_curve(g, [0.2, 0.12, 0.24], [0, 50, 99], 3)
    assert np.all(curve.per_source[0] == 1 - 1 / 100)


def test_six_vertex_graph_matches_dense_powers():
    g = six_vertex_graph()
    p = np.array([0.5, 0.3, 0.2])
    sources = list(range(6))
    curve = tv_curve(g, p, sources, 10)
    assert np.abs(curve.per_source - dense_tv(g, p, sources, 10)).max() <= 1e-12


def test_curve_is_monotone_and_bounded():
    g = sample_graph(two_type_model(2000), 1)
    curve = tv_curve(g, [0.19, 0.124, 0.248], default_sources(g, 8), 20)
    assert np.all(np.diff(curve.values) <= 1e-12)
    assert curve.values.min() >= 0 and curve.values.max() <= 1


def test_uniform_start_stays_uniform():
    g = sample_graph(two_type_model(500), 2)
    curve = tv_curve_uniform_start(g, [0.19, 0.124, 0.248], 15)
    assert np.abs(curve.values).max() <= 1e-12


def test_thread_count_does_not_change_values():
    g = sample_graph(two_type_model(3000), 4)
    sources = default_sources(g, 20)
    a = tv_curve(g, [0.19, 0.124, 0.248], sources, 12, threads=1)
    b = tv_curve(g, [0.19, 0.124, 0.248], sources, 12, threads=3)
    assert np.array_equal(a.per_source, b.per_source)


def test_default_sources_are_stratified():
    g = sample_graph(two_type_model(1000), 0)
    s = default_sources(g, 32, seed=5)
    assert len(s) == len(set(s)) == 32
    assert sorted(np.bincount(g.type_of[s])) == [16, 16]
    assert s == default_sources(g, 32, seed=5)


def test_curve_csv_layout():
    g = six_vertex_graph()
    curve = tv_curve(g, [0.5, 0.3, 0.2], [0, 1], 2)
    buf = io.StringIO()
    curve.write_csv(buf, "seed=3")
    lines = buf.getvalue().splitlines()
    assert lines[:2] == ["# seed=3", "t,D_max,D_source_0,D_source_1"]
    assert len(lines) == 5


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 50), st.integers(0, 2**32 - 1))
def test_tv_to_uniform_range(n, seed):
    x = np.random.default_rng(seed).dirichlet(np.ones(n))
    d = tv_to_uniform(x[:, None])[0]
    assert -1e-15 <= d <= 1 - 1 / n + 1e-15


# -- path weights on the network ---------------------------------------------

def test_one_step_network_tail():
    g = six_vertex_graph()
    p = np.array([0.5, 0.3, 0.2])
    for phi in (0.1, 0.25, 0.4):
        expected = sum(p[i] for i, _ in g.out_neighbors(0) if p[i] > phi)
        assert path_weight_tail(g, p, 0, 1, phi).value == pytest.approx(expected, abs=1e-15)


def test_all_paths_pass_below_support():
    g = six_vertex_graph()
    p = np.array([0.5, 0.3, 0.2])
    assert path_weight_tail(g, p, 2, 6, 0.2**6 * 0.99).value == pytest.approx(1.0, abs=1e-12)


def test_network_law_sums_to_one():
    g = sample_graph(two_type_model(500), 3)
    law = network_count_law(g, [0.19, 0.124, 0.248], 7, 9)
    assert abs(law.probs.sum() - 1) <= 1e-9


def test_exact_matches_walkers():
    spec = two_type_model(10_000)
    g = sample_graph(spec, 0)
    p = np.array([0.18872305, 0.12451078, 0.24902156])
    t = 15
    phi = math.exp(-entropy_rate(spec.mean_out, p) * t)
    exact = path_weight_tail(g, p, 17, t, phi).value
    mc = path_weight_tail(g, p, 17, t, phi, method="monte_carlo", walkers=100_000, seed=9)
    assert abs(exact - mc.value) <= 3 * mc.stderr


def test_counter_uniforms_independent_of_batching():
    ids = np.arange(10, dtype=np.uint64)
    full = counter_uniforms(7, ids, 3)
    assert np.array_equal(full[4:], counter_uniforms(7, ids[4:], 3))
    assert not np.array_equal(full, counter_uniforms(7, ids, 4))
    assert 0 <= full.min() and full.max() < 1


def test_iid_layers_close_to_gaussian():
    spec = regular_model(3, 10_000)
    p = np.array([0.5, 0.3, 0.2])
    g = sample_graph(spec, 1)
    chain = build_chain(spec, p)
    assert compare_Q_to_layer_chain(g, chain, 0, 15).sup_gap <= 0.1


def test_one_step_comparison_closed_form():
    spec = regular_model(3, 50)
    p = np.array([0.5, 0.3, 0.2])
    g = sample_graph(spec, 2)
    chain = build_chain(spec, p)
    grid = np.linspace(-2.5, -0.2, 400)
    one_step = np.array([sum(p[i] for i, _ in g.out_neighbors(4) if math.log(p[i]) > lp)
                         for lp in grid])
    expected = np.abs(one_step - gaussian_cdf((-chain.mu - grid) / chain.sigma)).max()
    assert compare_Q_to_layer_chain(g, chain, 4, 1, grid).sup_gap == pytest.approx(expected, abs=1e-12)


def test_comparison_outside_support():
    spec = regular_model(3, 50)
    p = np.array([0.5, 0.3, 0.2])
    g = sample_graph(spec, 2)
    chain = build_chain(spec, p)
    t = 8
    far = np.array([-200.0, 200.0])  # far below / above every path weight
    assert compare_Q_to_layer_chain(g, chain, 0, t, far).sup_gap <= 1e-9


# -- slow mixing -------------------------------------------------------------

def test_permutation_walk_stays_a_point_mass():
    g = sample_graph(regular_model(2, 200), 5)
    rep = slow_mixing_witness(g, [1.0, 0.0], 30, sources=[0, 1, 2])
    assert np.allclose(rep.per_source, 1 - 1 / 200, atol=1e-15)


def test_threshold_precondition():
    g = sample_graph(regular_model(2, 200), 5)
    with pytest.raises(PreconditionViolated):
        slow_mixing_witness(g, [0.6, 0.4], 5)
    assert slow_mixing_threshold(1, 2) == pytest.approx(1 - 1 / (6 * math.log(2)))


def test_non_permutation_layer_rejected():
    g = sample_graph(two_type_model(100), 0)
    with pytest.raises(PreconditionViolated):
        slow_mixing_witness(g, [1 - 1e-12, 5e-13, 5e-13], 3)


@pytest.mark.xfail(strict=True, reason="t = log N / mu_q is the walk's own mixing time, so "
                   "D is near 1/2 there; see notes/decisions.md")
def test_cycle_layer_slow_mixing():
    N = 10_000
    spec = regular_model(2, N)
    q = np.array([0.95, 0.05])
    t = math.ceil(math.log(N) / entropy_rate(spec.mean_out, q))
    rep = slow_mixing_witness(sample_graph(spec, 11), q, t)
    assert rep.min_D >= 1 - 1 / math.sqrt(N)


@pytest.mark.xfail(strict=True, reason="the binomial support proxy bounds conditional "
                   "supports, not the support of the full law; see notes/decisions.md")
def test_cycle_layer_support_bound():
    N = 10_000
    spec = regular_model(2, N)
    q = np.array([0.95, 0.05])
    t = math.ceil(math.log(N) / entropy_rate(spec.mean_out, q))
    rep = slow_mixing_witness(sample_graph(spec, 11), q, t)
    assert np.all(rep.support <= rep.support_bound)
