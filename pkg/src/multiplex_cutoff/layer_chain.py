"""Exact analytics of the I-state layer chain.

For a permissible ``p`` the layer chain has stationary law
``pi_i = m_i p_i`` (``m_i`` the mean out-degree of layer ``i``) and transition
matrix ``L_ij = sum_a k(a) a_i^- a_j^+ p_j / sum_a k(a) a_i^-``. The walk's
log-weight functional is ``f_i = -log p_i``; its stationary mean is the
entropy rate ``mu`` and its asymptotic variance is ``sigma2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations_with_replacement
from typing import Any

import numpy as np
from scipy.special import comb, ndtr

from .degree_model import DegreeModel, DegreeType
from .errors import NotErgodic, PreconditionViolated, StateSpaceTooLarge, ZeroProbability

MAX_CLASSES = 10**7
POISSON_RESIDUAL_TOL = 1e-12
BE_GRID = 1000
BE_WIDTH = 6.0


def gaussian_cdf(x):
    return ndtr(x)


def stationary_layer_law(spec: DegreeModel, p) -> np.ndarray:
    return spec.mean_out * np.asarray(p, dtype=float)


def layer_transition_matrix(spec: DegreeModel, p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    k = np.array(spec.counts, dtype=float)
    A_in, A_out = spec.in_matrix, spec.out_matrix
    num = (A_in * k[:, None]).T @ A_out          # sum_a k(a) a_i^- a_j^+
    den = k @ A_in                               # sum_a k(a) a_i^-
    return num * p[None, :] / den[:, None]


def weighted_variance(f, pi) -> float:
    f = np.asarray(f, dtype=float)
    m = float(pi @ f)
    return float(pi @ (f - m) ** 2)


def check_ergodic(L: np.ndarray) -> None:
    """Raise NotErgodic unless ``sum_{k=1}^{I} L^k`` is entrywise positive."""
    n = L.shape[0]
    acc = np.zeros_like(L)
    power = np.eye(n)
    for _ in range(n):
        power = power @ L
        acc += power
    if np.any(acc <= 0):
        raise NotErgodic("some layer is unreachable from another within I steps")


def poisson_solve(L: np.ndarray, pi: np.ndarray, g: np.ndarray) -> tuple[np.ndarray, float]:
    """Solve ``(Id - L) h = g`` with ``pi(h) = 0`` for a pi-centered ``g``.

    Uses the invertible rank-one correction ``Id - L + 1 pi``. Returns the
    solution and the max-norm residual of the original equation.
    """
    n = L.shape[0]
    M = np.eye(n) - L + np.outer(np.ones(n), pi)
    h = np.linalg.solve(M, g)
    residual = float(np.max(np.abs(h - L @ h - g))) if n else 0.0
    return h, residual


def asymptotic_variance(L: np.ndarray, pi: np.ndarray, f) -> float:
    """Asymptotic variance of ``sum_k f(X_k)`` per step for the stationary chain ``L``.

    ``sigma2 = 2 <g, h>_pi - Var_pi(f)`` where ``g = f - pi(f)`` and ``h``
    solves the Poisson equation for ``g``.
    """
    f = np.asarray(f, dtype=float)
    g = f - pi @ f
    h, residual = poisson_solve(L, pi, g)
    scale = max(1.0, float(np.max(np.abs(g))) if g.size else 1.0, float(np.max(np.abs(h))))
    if residual > POISSON_RESIDUAL_TOL * scale * 10:
        raise ArithmeticError(f"Poisson residual {residual:.3e} too large")
    var = float(pi @ g**2)
    return max(2.0 * float(pi @ (g * h)) - var, 0.0)


@dataclass(frozen=True, eq=False)
class LayerChainAnalytics:
    p: np.ndarray
    pi: np.ndarray
    L: np.ndarray
    mu: float
    sigma2: float
    f: np.ndarray
    max_degree: int

    @property
    def I(self) -> int:
        return len(self.p)

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma2)

    @property
    def p_min(self) -> float:
        return float(self.p.min())

    @property
    def stationary_variance(self) -> float:
        return weighted_variance(self.f, self.pi)

    def to_dict(self, N: int | None = None) -> dict[str, Any]:
        out: dict[str, Any] = {
            "p": self.p.tolist(),
            "pi": self.pi.tolist(),
            "L": self.L.tolist(),
            "mu": self.mu,
            "sigma2": self.sigma2,
        }
        if N is not None:
            out["N"] = int(N)
            out["t_p"] = math.log(N) / self.mu
            out["w_p"] = self.sigma * math.sqrt(math.log(N) / self.mu**3)
        out["bounds"] = chain_bounds(self)
        return out


def build_chain(spec: DegreeModel, p) -> LayerChainAnalytics:
    p = np.asarray(p, dtype=float)
    if np.any(p <= 0):
        raise ZeroProbability(f"layer probabilities must be positive, got {p.tolist()}")
    pi = stationary_layer_law(spec, p)
    L = layer_transition_matrix(spec, p)
    f = -np.log(p)
    mu = float(pi @ f)
    chain = LayerChainAnalytics(p, pi, L, mu, 0.0, f, spec.max_degree)
    return LayerChainAnalytics(p, pi, L, mu, dynamical_variance(chain), f, spec.max_degree)


def dynamical_variance(chain: LayerChainAnalytics) -> float:
    check_ergodic(chain.L)
    return asymptotic_variance(chain.L, chain.pi, chain.f)


def chain_bounds(chain: LayerChainAnalytics) -> dict[str, float]:
    """The closed-form bounds attached to a chain, for reports."""
    D, I = chain.max_degree, chain.I
    var = chain.stationary_variance
    return {
        "variance_lower": var / D**2,
        "variance_upper": (2 * D - 1) * var,
        "sigma2_max": 2 * D**2 * math.log(max(I, 8)) ** 2,
        "mu_max": math.log(D * I),
        "contraction": 1 - 1 / (4 * D),
    }


# -- contraction in the mixed norm ------------------------------------------

def mixed_norm(f, pi, c: float) -> float:
    """``||f||_inf + c * sqrt(Var_pi f)``."""
    f = np.asarray(f, dtype=float)
    return float(np.max(np.abs(f))) + c * math.sqrt(weighted_variance(f, pi))


@dataclass(frozen=True)
class ContractionReport:
    max_ratio: float
    bound: float

    @property
    def ok(self) -> bool:
        return self.max_ratio <= self.bound + 1e-12


def contraction_ratio(chain: LayerChainAnalytics, f) -> float:
    c = 1.0 / math.sqrt(chain.p_min)
    f = np.asarray(f, dtype=float)
    f = f - chain.pi @ f
    return mixed_norm(chain.L @ f, chain.pi, c) / mixed_norm(f, chain.pi, c)


def contraction_check(chain: LayerChainAnalytics, trials: int,
                      rng: np.random.Generator | None = None) -> ContractionReport:
    rng = np.random.default_rng(0) if rng is None else rng
    c = 1.0 / math.sqrt(chain.p_min)
    F = rng.standard_normal((trials, chain.I))
    F -= (F @ chain.pi)[:, None]
    LF = F @ chain.L.T
    num = np.abs(LF).max(axis=1) + c * np.sqrt(np.maximum(LF**2 @ chain.pi, 0.0))
    den = np.abs(F).max(axis=1) + c * np.sqrt(np.maximum(F**2 @ chain.pi, 0.0))
    keep = den > 0
    ratio = float(np.max(num[keep] / den[keep])) if keep.any() else 0.0
    return ContractionReport(ratio, 1.0 - 1.0 / (4 * chain.max_degree))


# -- exact law of the path weight along the layer chain ---------------------

def _compositions(k: int, I: int) -> np.ndarray:
    """All count vectors of ``k`` steps over ``I`` layers, one per row."""
    if k == 0:
        return np.zeros((1, I), dtype=np.int64)
    rows = [np.bincount(c, minlength=I) for c in combinations_with_replacement(range(I), k)]
    return np.array(rows, dtype=np.int64)


def class_count(t: int, I: int) -> int:
    return int(comb(t + I - 1, I - 1, exact=True))


@dataclass(frozen=True, eq=False)
class CountLaw:
    """Distribution of the per-layer step counts after ``t`` steps.

    ``log_weights[c] = sum_i counts[c, i] log p_i``; ``probs`` sum to one.
    """

    counts: np.ndarray
    probs: np.ndarray
    log_weights: np.ndarray

    def __post_init__(self):
        order = np.argsort(self.log_weights, kind="stable")
        object.__setattr__(self, "_sorted_lw", self.log_weights[order])
        # upper tail mass: tail[k] = mass of classes with sorted index >= k
        tail = np.concatenate([np.cumsum(self.probs[order][::-1])[::-1], [0.0]])
        object.__setattr__(self, "_tail", tail)

    def tail(self, phi) -> np.ndarray | float:
        """Probability that the path weight is strictly greater than ``phi``."""
        phi = np.asarray(phi, dtype=float)
        with np.errstate(divide="ignore"):
            log_phi = np.log(phi)
        idx = np.searchsorted(self._sorted_lw, log_phi, side="right")
        out = np.clip(self._tail[idx], 0.0, 1.0)
        return float(out) if out.ndim == 0 else out

    def tail_log(self, log_phi) -> np.ndarray:
        idx = np.searchsorted(self._sorted_lw, np.asarray(log_phi, dtype=float), side="right")
        return np.clip(self._tail[idx], 0.0, 1.0)


def layer_count_law(chain: LayerChainAnalytics, alpha: DegreeType | np.ndarray, t: int) -> CountLaw:
    """Exact law of the layer counts of ``t`` steps of the layer chain.

    The first layer is drawn with ``P(M_1 = i) = a_i^+ p_i``. The state is
    (current layer, count vector); the count classes of each level are
    indexed through a mixed-radix key.
    """
    if t < 1:
        raise ValueError("t must be at least 1")
    I = chain.I
    n_classes = class_count(t, I)
    if n_classes * I > MAX_CLASSES:
        raise StateSpaceTooLarge(f"{n_classes} count classes for t={t}, I={I}")
    out_deg = np.asarray(alpha.out_degrees if isinstance(alpha, DegreeType) else alpha,
                         dtype=float)
    start = out_deg * chain.p
    radix = (t + 1) ** np.arange(I, dtype=np.int64)

    counts = np.eye(I, dtype=np.int64)
    mass = np.diag(start)                          # mass[class, current layer]
    for k in range(2, t + 1):
        nxt_counts = _compositions(k, I)
        keys = nxt_counts @ radix
        order = np.argsort(keys)
        keys_sorted = keys[order]
        flow = mass @ chain.L                       # flow[class, next layer]
        nxt = np.zeros((len(nxt_counts), I))
        for j in range(I):
            dest = np.searchsorted(keys_sorted, counts @ radix + radix[j])
            nxt[order[dest], j] += flow[:, j]
        counts, mass = nxt_counts, nxt
    probs = mass.sum(axis=1)
    log_weights = counts @ np.log(chain.p)
    return CountLaw(counts, probs, log_weights)


def layer_path_tail(chain: LayerChainAnalytics, alpha, t: int, phi) -> float:
    """``P(prod_k p_{M_k} > phi)`` computed exactly."""
    return layer_count_law(chain, alpha, t).tail(phi)


@dataclass(frozen=True)
class BerryEsseenReport:
    sup_gap: float
    bound: float
    log_phi_at: float
    t: int

    @property
    def ok(self) -> bool:
        return self.sup_gap <= self.bound


def gaussian_tail_comparator(chain: LayerChainAnalytics, t: int, log_phi) -> np.ndarray:
    """``Phi((-mu t - log phi) / (sigma sqrt t))``."""
    return gaussian_cdf((-chain.mu * t - np.asarray(log_phi)) / (chain.sigma * math.sqrt(t)))


def berry_esseen_gap(chain: LayerChainAnalytics, alpha, t: int,
                     n_grid: int = BE_GRID) -> BerryEsseenReport:
    if chain.sigma2 <= 0:
        raise PreconditionViolated("the dynamical variance is zero")
    if t < 1:
        raise PreconditionViolated("t must be at least 1")
    law = layer_count_law(chain, alpha, t)
    spread = BE_WIDTH * chain.sigma * math.sqrt(t)
    grid = np.linspace(-chain.mu * t - spread, -chain.mu * t + spread, n_grid)
    gaps = np.abs(law.tail_log(grid) - gaussian_tail_comparator(chain, t, grid))
    k = int(np.argmax(gaps))
    bound = (10 * chain.max_degree) ** 5 / math.sqrt(chain.p_min**3 * t)
    return BerryEsseenReport(float(gaps[k]), bound, float(grid[k]), t)


# -- perturbation of the dynamical variance ---------------------------------

@dataclass(frozen=True)
class PerturbationReport:
    lhs: float
    rhs: float
    eps_inf: float

    @property
    def ok(self) -> bool:
        return self.lhs <= self.rhs + 1e-15


def relative_errors(p, q) -> np.ndarray:
    return np.abs(1.0 - np.asarray(q, dtype=float) / np.asarray(p, dtype=float))


def variance_perturbation_check(spec: DegreeModel, p, q) -> PerturbationReport:
    p, q = np.asarray(p, dtype=float), np.asarray(q, dtype=float)
    if np.any(p <= 0) or np.any(q <= 0):
        raise PreconditionViolated("both vectors must be strictly positive")
    eps = relative_errors(p, q)
    if np.any(eps > 1.0 / (2 * spec.I)):
        raise PreconditionViolated(f"relative error {eps.max():.3g} exceeds 1/(2I)")
    lhs = abs(build_chain(spec, q).sigma2 - build_chain(spec, p).sigma2)
    D, I = spec.max_degree, spec.I
    rhs = 11 * I * D**3 * math.log(max(I, 8)) ** 2 * float(eps.max())
    return PerturbationReport(lhs, rhs, float(eps.max()))
