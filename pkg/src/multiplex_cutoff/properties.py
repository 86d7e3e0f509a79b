"""Randomized property suites over degree models, chains, graphs and optimizers.

Each suite returns a :class:`PropertyResult` holding the observed extreme and
the bound it is compared against. ``run_all`` is what ``props`` runs.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Any, Callable

import numpy as np
from scipy.linalg import qr

from .degree_model import (
    DegreeModel, DegreeType, PolytopeRepr, build_polytope, check_assumptions, regular_model,
)
from .graph_gen import WalkOperator, sample_graph
from .layer_chain import (
    LayerChainAnalytics, build_chain, contraction_check, mixed_norm,
)
from .optimizer import (
    entropy_rate, entropy_gradient, local_quadratic_check, maximize_entropy_rate,
)
from .profile import CutoffProfile, theory_curve
from .walk_engine import default_sources, tv_curve


@dataclass
class PropertyResult:
    name: str
    passed: bool
    instances: int
    observed: float
    bound: float
    detail: str = ""
    seconds: float = 0.0

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name, "passed": bool(self.passed), "instances": int(self.instances),
                "observed": float(self.observed), "bound": float(self.bound), "detail": self.detail}


# -- random instances --------------------------------------------------------

def random_model(rng: np.random.Generator, max_layers: int = 5, max_types: int = 3,
                 max_degree: int = 4, N: int | None = None) -> tuple[DegreeModel, PolytopeRepr]:
    """A random balanced model whose permissible set has a strictly positive point.

    Types are either symmetric (equal in- and out-degrees) or come in
    mirrored pairs with equal counts, which keeps every layer balanced.
    A single symmetric type gives a layer chain with identical rows, so
    most draws use several types.
    """
    while True:
        I = int(rng.integers(2, max_layers + 1))
        D = int(rng.integers(1, max_degree + 1))
        n_groups = 1 if max_types < 2 or rng.random() < 0.15 else int(rng.integers(2, max_types + 1))
        types, counts = [], []
        for _ in range(n_groups):
            out = tuple(int(x) for x in rng.integers(1, D + 1, size=I))
            c = int(rng.integers(1, 6))
            if rng.random() < 0.3:
                inn = tuple(int(x) for x in rng.permutation(out))
                types += [DegreeType(out, inn), DegreeType(inn, out)]
                counts += [c, c]
            else:
                types.append(DegreeType(out, out))
                counts.append(c)
        model = DegreeModel(tuple(types), tuple(counts))
        if N is not None:
            scale = max(1, N // model.N)
            model = DegreeModel(model.types, tuple(c * scale for c in model.counts))
        try:
            chart = build_polytope(model)
        except Exception:
            continue
        if chart.dim == 0:
            if chart.base_point.min() > 1e-3:
                return model, chart
            continue
        if check_assumptions(model, chart).max_min_coordinate > 1e-3:
            return model, chart


def random_chain_pool(rng: np.random.Generator, target: int, per_model: int = 50,
                      **kw) -> list[tuple[DegreeModel, LayerChainAnalytics]]:
    """Chains at hit-and-run points of random models, until ``target`` have ``Var_pi f > 0``."""
    out = []
    informative = 0
    while informative < target:
        model, chart = random_model(rng, **kw)
        xs = chart.sample(rng, per_model) if chart.dim else np.zeros((per_model, 0))
        for x in xs:
            p = chart.to_p(x)
            if p.min() <= 1e-9:
                continue
            chain = build_chain(model, p)
            out.append((model, chain))
            informative += chain.stationary_variance > 1e-14
    return out


def simplex_points(rng: np.random.Generator, m: int, n: int) -> np.ndarray:
    return rng.dirichlet(np.full(m, rng.choice([0.1, 0.5, 1.0, 5.0])), size=n)


def simulate_variance(chain: LayerChainAnalytics, steps: int, rng: np.random.Generator,
                      batches: int = 1000) -> tuple[float, float]:
    """Monte Carlo ``Var(S_n)/n`` over independent stationary runs and its standard error.

    ``batches`` chains of ``steps // batches`` steps each are run in
    lockstep from the stationary law.
    """
    n = steps // batches
    cum = np.cumsum(chain.L, axis=1)
    cum[:, -1] = 1.0
    x = rng.choice(chain.I, size=batches, p=chain.pi / chain.pi.sum())
    S = np.zeros(batches)
    for _ in range(n):
        x = (cum[x] < rng.random(batches)[:, None]).sum(axis=1)
        S += chain.f[x]
    est = S.var(ddof=1) / n
    c = S - S.mean()
    m4 = np.mean(c**4)
    var_of_var = (m4 - (batches - 3) / (batches - 1) * np.mean(c**2) ** 2) / batches
    return float(est), float(math.sqrt(max(var_of_var, 0.0)) / n)


# -- suites -------------------------------------------------------------------

def _timed(fn: Callable[..., PropertyResult]) -> Callable[..., PropertyResult]:
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        r = fn(*args, **kwargs)
        r.seconds = time.perf_counter() - t0
        return r
    wrapper.__name__ = fn.__name__
    return wrapper


@_timed
def chart_round_trip(rng, models: int = 20, points: int = 1000) -> PropertyResult:
    worst = 0.0
    for _ in range(models):
        model, chart = random_model(rng)
        A = model.constraint_matrix()
        xs = chart.sample(rng, points) if chart.dim else np.zeros((1, 0))
        P = chart.to_p(xs).reshape(-1, model.I)
        worst = max(worst, float(np.abs(P @ A.T - 1.0).max()))
        if chart.dim:
            worst = max(worst, float(np.abs(chart.basis.T @ chart.basis - np.eye(chart.dim)).max()))
    return PropertyResult("chart_round_trip", worst <= 1e-10, models * points, worst, 1e-10)


@_timed
def chart_dimension(rng, models: int = 200) -> PropertyResult:
    bad = 0
    for _ in range(models):
        model, chart = random_model(rng)
        R = qr(model.constraint_matrix(), mode="r", pivoting=True)[0]
        diag = np.abs(np.diag(R))
        rank = int(np.sum(diag > 1e-9 * diag[0]))
        bad += chart.dim != model.I - rank
    return PropertyResult("chart_dimension", bad == 0, models, float(bad), 0.0)


@_timed
def constant_vector_regular(rng, models: int = 50) -> PropertyResult:
    worst = 0.0
    for _ in range(models):
        I = int(rng.integers(2, 7))
        d = int(rng.integers(1, 5))
        n_types = int(rng.integers(1, 4))
        # every type has the same total degree, split differently across layers
        types = []
        for _ in range(n_types):
            cuts = np.sort(rng.choice(np.arange(1, d * I), size=I - 1, replace=False)) \
                if d * I > I else np.arange(1, I)
            parts = np.diff(np.concatenate([[0], cuts, [d * I]]))
            types.append(DegreeType(tuple(parts), tuple(parts)))
        model = DegreeModel(tuple(types), (1,) * n_types)
        assert not check_assumptions(model).non_regular
        p = np.full(I, 1.0 / (d * I))
        worst = max(worst, float(np.abs(model.constraint_matrix() @ p - 1).max()))
    return PropertyResult("remark2_constant_vector", worst <= 1e-12, models, worst, 1e-12)


@_timed
def double_stochasticity(rng, models: int = 4, ps: int = 20, seeds: int = 5,
                         N: int = 400) -> PropertyResult:
    worst = 0.0
    for _ in range(models):
        model, chart = random_model(rng, N=N)
        xs = chart.sample(rng, ps) if chart.dim else np.zeros((ps, 0))
        for s in range(seeds):
            g = sample_graph(model, int(rng.integers(2**63)))
            for x in xs:
                op = WalkOperator(g, chart.to_p(x))
                worst = max(worst, float(np.abs(op.column_sums() - 1).max()),
                            float(np.abs(op.row_sums() - 1).max()))
    return PropertyResult("double_stochasticity", worst <= 1e-10, models * ps * seeds,
                          worst, 1e-10)


@_timed
def degree_conservation(rng, models: int = 20, N: int = 300) -> PropertyResult:
    bad = 0
    for _ in range(models):
        model, _ = random_model(rng, N=N)
        g = sample_graph(model, int(rng.integers(2**63)))
        for i, layer in enumerate(g.layers):
            bad += int(np.any(layer.out_degree() != model.out_matrix[g.type_of, i]))
            bad += int(np.any(layer.in_degree() != model.in_matrix[g.type_of, i]))
    return PropertyResult("degree_conservation", bad == 0, models, float(bad), 0.0)


@_timed
def variance_sandwich(pool, inject_bad_sigma: bool = False) -> PropertyResult:
    """``Var/Delta^2 <= sigma2 <= (2 Delta - 1) Var`` for the log-weight functional."""
    worst = -math.inf
    n = 0
    for model, chain in pool:
        var = chain.stationary_variance
        if var <= 1e-14:
            continue
        s2 = chain.sigma2 * (1e3 if inject_bad_sigma else 1.0)
        D = chain.max_degree
        # margin > 0 means a violation
        margin = max(var / D**2 - s2, s2 - (2 * D - 1) * var) / var
        worst = max(worst, margin)
        n += 1
    return PropertyResult("variance_sandwich", worst <= 1e-9, n, worst, 1e-9,
                          "largest relative violation (negative = inside)")


@_timed
def sigma_max(pool) -> PropertyResult:
    worst = -math.inf
    for _, chain in pool:
        bound = 2 * chain.max_degree**2 * math.log(max(chain.I, 8)) ** 2
        worst = max(worst, chain.sigma2 / bound)
    return PropertyResult("sigma2_max", worst <= 1.0, len(pool), worst, 1.0,
                          "largest sigma2 / bound")


@_timed
def mu_max(pool) -> PropertyResult:
    worst = -math.inf
    for _, chain in pool:
        worst = max(worst, chain.mu - math.log(chain.max_degree * chain.I))
    return PropertyResult("mu_max", worst <= 1e-12, len(pool), worst, 1e-12,
                          "largest mu - log(Delta I)")


@_timed
def square_entropy(rng, per_m: int = 700) -> PropertyResult:
    worst = -math.inf
    n = 0
    for m in range(2, 17):
        Q = simplex_points(rng, m, per_m)
        with np.errstate(divide="ignore", invalid="ignore"):
            vals = np.nansum(Q * np.log(Q) ** 2, axis=1)
        worst = max(worst, float((vals - math.log(max(m, 8)) ** 2).max()))
        n += per_m
    return PropertyResult("square_entropy", worst <= 1e-12, n, worst, 1e-12,
                          "largest sum q log^2 q - log^2(m v 8)")


@_timed
def banach_algebra(rng, pool, pairs: int = 10_000) -> PropertyResult:
    worst = -math.inf
    for k in range(pairs):
        _, chain = pool[k % len(pool)]
        c = 1.0 / math.sqrt(chain.p_min)
        f = rng.standard_normal(chain.I) * rng.exponential()
        g = rng.standard_normal(chain.I) * rng.exponential()
        lhs = mixed_norm(f * g, chain.pi, c)
        rhs = mixed_norm(f, chain.pi, c) * mixed_norm(g, chain.pi, c)
        worst = max(worst, (lhs - rhs) / max(rhs, 1e-300))
    return PropertyResult("banach_algebra", worst <= 1e-12, pairs, worst, 1e-12,
                          "largest (||fg|| - ||f|| ||g||) / (||f|| ||g||)")


@_timed
def covariance_decay(pool, t_max: int = 30, chains: int = 500) -> PropertyResult:
    worst = -math.inf
    n = 0
    for _, chain in pool[:chains]:
        var = chain.stationary_variance
        if var <= 1e-14:
            continue
        g = chain.f - chain.mu
        v = g.copy()
        D = chain.max_degree
        for t in range(1, t_max + 1):
            v = chain.L @ v
            cov = float(chain.pi @ (g * v))
            worst = max(worst, (cov - (1 - 1 / D) ** t * var) / var)
        n += 1
    return PropertyResult("covariance_decay", worst <= 1e-10, n * t_max, worst, 1e-10,
                          "largest (Cov_t - (1-1/Delta)^t Var) / Var")


def _concentrated_chains():
    # type i puts degree D on layer i and 1 elsewhere; these contract far more
    # slowly than typical random draws
    out = []
    for I in (2, 3, 4):
        for D in (4, 8):
            degs = [tuple(D if j == i else 1 for j in range(I)) for i in range(I)]
            model = DegreeModel(tuple(DegreeType(d, d) for d in degs), (1,) * I)
            out.append(build_chain(model, build_polytope(model).base_point))
    return out


@_timed
def contraction(rng, pool, chains: int = 20, trials: int = 10_000) -> PropertyResult:
    worst = -math.inf
    step = max(1, len(pool) // chains)
    picked = [c for _, c in pool[::step][:chains]] + _concentrated_chains()
    for chain in picked:
        r = contraction_check(chain, trials, rng)
        worst = max(worst, r.max_ratio - r.bound)
    return PropertyResult("contraction", worst <= 1e-12, len(picked) * trials, worst,
                          1e-12, "largest max_ratio - (1 - 1/(4 Delta))")


@_timed
def variance_perturbation(rng, pairs: int = 100) -> PropertyResult:
    from .layer_chain import variance_perturbation_check
    worst = -math.inf
    n = 0
    while n < pairs:
        model, chart = random_model(rng)
        if chart.dim == 0:
            continue
        x = chart.sample(rng, 1)[0]
        p = chart.to_p(x)
        if p.min() < 1e-3:
            continue
        d = rng.standard_normal(chart.dim)
        d /= np.linalg.norm(d)
        lo, hi = chart.chord(x, d)
        s = rng.uniform(lo, hi) * rng.uniform(0, 1) ** 3
        q = chart.to_p(x + s * d)
        eps = np.abs(1 - q / p).max()
        if eps > 1 / (2 * model.I):
            q = p + (q - p) * (1 / (2 * model.I)) / eps * 0.999
        r = variance_perturbation_check(model, p, q)
        worst = max(worst, r.lhs - r.rhs)
        n += 1
    return PropertyResult("variance_perturbation", worst <= 0, pairs, worst, 0.0,
                          "largest lhs - rhs")


@_timed
def concavity(rng, models: int = 10, pairs: int = 100) -> PropertyResult:
    worst = -math.inf
    for _ in range(models):
        model, chart = random_model(rng)
        if chart.dim == 0:
            continue
        m = model.mean_out
        xs = chart.sample(rng, 2 * pairs)
        for a, b in zip(xs[::2], xs[1::2]):
            pa, pb = chart.to_p(a), chart.to_p(b)
            gap = (entropy_rate(m, pa) + entropy_rate(m, pb)) / 2 - entropy_rate(m, (pa + pb) / 2)
            worst = max(worst, gap)
    return PropertyResult("mu_concavity", worst <= 1e-12, models * pairs, worst, 1e-12,
                          "largest midpoint defect")


@_timed
def optimality(rng, models: int = 10, samples: int = 10_000) -> PropertyResult:
    worst = -math.inf
    for _ in range(models):
        model, chart = random_model(rng)
        res = maximize_entropy_rate(model, chart)
        if chart.dim == 0:
            continue
        m = model.mean_out
        P = chart.to_p(chart.sample(rng, samples, thin=1))
        P = np.maximum(P, 1e-300)
        mus = -(m * P * np.log(P)).sum(axis=1)
        worst = max(worst, float(mus.max() - res.mu_star))
    return PropertyResult("optimizer_optimality", worst <= 1e-12, models * samples, worst, 1e-12,
                          "largest mu(q) - mu*")


@_timed
def restart_invariance(rng, models: int = 10, starts: int = 10) -> PropertyResult:
    worst = 0.0
    for _ in range(models):
        model, chart = random_model(rng)
        if chart.dim == 0:
            continue
        ref = maximize_entropy_rate(model, chart).p_star
        for x in chart.sample(rng, starts):
            if chart.to_p(x).min() <= 1e-9:
                continue
            p = maximize_entropy_rate(model, chart, start=x).p_star
            worst = max(worst, float(np.abs(p - ref).max()))
    return PropertyResult("optimizer_restart_invariance", worst <= 1e-7, models * starts, worst,
                          1e-7)


@_timed
def stationary_constant(rng, layers=range(2, 9)) -> PropertyResult:
    worst = 0.0
    for I in layers:
        model = regular_model(I, I)
        chart = build_polytope(model)
        p = np.full(I, 1.0 / I)
        g = chart.basis.T @ entropy_gradient(model.mean_out, p)
        worst = max(worst, float(np.linalg.norm(g)))
    return PropertyResult("remark2_stationary_constant", worst <= 1e-9, len(list(layers)), worst,
                          1e-9)


@_timed
def quadratic_sandwich(rng, models: int = 10, per_model: int = 20) -> PropertyResult:
    bad = 0
    n = 0
    worst = -math.inf
    for _ in range(models):
        model, chart = random_model(rng)
        if chart.dim == 0:
            continue
        res = maximize_entropy_rate(model, chart)
        for _ in range(per_model):
            d = rng.standard_normal(chart.dim)
            d /= np.linalg.norm(d)
            lo, hi = chart.chord(res.chart_coords, d)
            s = rng.uniform(lo, hi)
            q = chart.to_p(res.chart_coords + s * d)
            eps = np.abs(1 - q / res.p_star).max()
            if eps > 0.5:
                q = res.p_star + (q - res.p_star) * 0.5 / eps * rng.uniform(0, 1)
            r = local_quadratic_check(model, res.p_star, q)
            worst = max(worst, r.lower - r.mu_q, r.mu_q - r.upper)
            bad += not r.ok
            n += 1
    return PropertyResult("quadratic_sandwich", bad == 0, n, worst, 1e-12,
                          "largest excursion outside the sandwich")


@_timed
def walk_mass_and_monotonicity(rng, models: int = 5, N: int = 2000, t_max: int = 25
                               ) -> PropertyResult:
    worst = -math.inf
    for _ in range(models):
        model, chart = random_model(rng, N=N)
        p = maximize_entropy_rate(model, chart).p_star
        g = sample_graph(model, int(rng.integers(2**63)))
        curve = tv_curve(g, p, default_sources(g, 8), t_max)
        worst = max(worst, float(np.diff(curve.values).max()))
        op = WalkOperator(g, p)
        x = np.zeros(g.N)
        x[0] = 1.0
        for t in range(1, t_max + 1):
            x = op.apply(x)
            worst = max(worst, abs(x.sum() - 1))
    return PropertyResult("tv_monotone_mass_conserved", worst <= 1e-12, models, worst, 1e-12,
                          "largest D(t+1) - D(t) or |mass - 1|")


@_timed
def theory_monotone(rng, n: int = 100) -> PropertyResult:
    bad = 0
    for _ in range(n):
        prof = CutoffProfile(rng.uniform(1, 50), rng.uniform(0.1, 5), 1000)
        ts = np.linspace(prof.t_p - 8 * prof.w_p, prof.t_p + 8 * prof.w_p, 200)
        v = theory_curve(prof, ts)
        bad += bool(np.any(np.diff(v) >= 0) or v.min() < 0 or v.max() > 1)
    return PropertyResult("theory_curve_decreasing", bad == 0, n, float(bad), 0.0)


@_timed
def geometry(rng, models: int = 20, grid: int = 50, N: int = 10**5) -> PropertyResult:
    worst = -math.inf
    for _ in range(models):
        model, chart = random_model(rng)
        if chart.dim == 0:
            continue
        res = maximize_entropy_rate(model, chart)
        t_star = math.log(N) / res.mu_star
        m = model.mean_out
        for x in chart.sample(rng, grid):
            q = chart.to_p(x)
            if q.min() <= 0:
                continue
            worst = max(worst, t_star - math.log(N) / entropy_rate(m, q))
    return PropertyResult("cutoff_time_order", worst <= 1e-9, models * grid, worst, 1e-9,
                          "largest t* - t_q")


@_timed
def sigma_monte_carlo(rng, pool, chains: int = 3, steps: int = 10**6) -> PropertyResult:
    worst = -math.inf
    # constant f gives sigma^2 = 0 and a relative test on rounding noise
    live = [c for _, c in pool if c.stationary_variance > 1e-14]
    step = max(1, len(live) // chains)
    for chain in live[::step][:chains]:
        est, se = simulate_variance(chain, steps, rng)
        worst = max(worst, abs(est - chain.sigma2) / max(se, 1e-300))
    return PropertyResult("sigma2_monte_carlo", worst <= 3.0, chains, worst, 3.0,
                          "largest |MC - Poisson| in standard errors")


def run_all(seed: int, instances: int = 10_000, inject_bad_sigma: bool = False,
            quick: bool = False) -> list[PropertyResult]:
    """Run every suite from a single seed; ``instances`` sizes the per-chain inequality suites."""
    ss = np.random.SeedSequence(int(seed))
    rngs = [np.random.default_rng(s) for s in ss.spawn(24)]
    pool = random_chain_pool(rngs[0], instances)
    scale = 0.1 if quick else 1.0
    return [
        chart_round_trip(rngs[1], models=max(2, int(20 * scale))),
        chart_dimension(rngs[2], models=max(10, int(200 * scale))),
        constant_vector_regular(rngs[3]),
        double_stochasticity(rngs[4], models=1 if quick else 4),
        degree_conservation(rngs[5], models=max(2, int(20 * scale))),
        variance_sandwich(pool, inject_bad_sigma=inject_bad_sigma),
        sigma_max(pool),
        mu_max(pool),
        square_entropy(rngs[6], per_m=max(50, -(-instances // 15))),
        banach_algebra(rngs[7], pool, pairs=instances),
        covariance_decay(pool),
        contraction(rngs[8], pool, trials=max(100, int(10_000 * scale))),
        variance_perturbation(rngs[9], pairs=max(10, int(100 * scale))),
        concavity(rngs[10]),
        optimality(rngs[11], models=max(2, int(10 * scale))),
        restart_invariance(rngs[12], models=max(2, int(10 * scale))),
        stationary_constant(rngs[13]),
        quadratic_sandwich(rngs[14], models=max(2, int(10 * scale))),
        walk_mass_and_monotonicity(rngs[15], models=max(1, int(5 * scale))),
        theory_monotone(rngs[16]),
        geometry(rngs[17], models=max(2, int(20 * scale))),
        sigma_monte_carlo(rngs[18], pool, steps=10**5 if quick else 10**6),
    ]
