"""Maximizing the entropy rate over the permissible polytope.

The objective ``mu(p) = sum_i m_i p_i log(1/p_i)`` is strictly concave on the
positive orthant and its gradient blows up at ``p_i = 0``, so the maximizer
is interior. Ascent runs in the orthonormal chart coordinates of
:class:`~multiplex_cutoff.degree_model.PolytopeRepr`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .degree_model import (
    DegreeModel, PolytopeRepr, _max_min_coordinate, build_polytope, check_assumptions,
    is_permissible,
)
from .errors import CertificateFailed, NoInteriorPoint, PreconditionViolated
from .layer_chain import LayerChainAnalytics, stationary_layer_law, weighted_variance

FLOOR = 1e-12
ARMIJO = 1e-4
BACKTRACK = 0.5


def entropy_rate(m: np.ndarray, p) -> float:
    p = np.maximum(np.asarray(p, dtype=float), FLOOR)
    return float(-(m * p * np.log(p)).sum())


def entropy_gradient(m: np.ndarray, p) -> np.ndarray:
    p = np.maximum(np.asarray(p, dtype=float), FLOOR)
    return -m * (np.log(p) + 1.0)


@dataclass(frozen=True, eq=False)
class OptimizerResult:
    p_star: np.ndarray
    mu_star: float
    chart_coords: np.ndarray
    gradient_norm_projected: float
    iterations: int
    trace: list = field(default_factory=list, repr=False)
    certificate: dict | None = None

    def with_certificate(self, cert: dict) -> "OptimizerResult":
        return OptimizerResult(self.p_star, self.mu_star, self.chart_coords,
                               self.gradient_norm_projected, self.iterations, self.trace, cert)

    def to_dict(self, include_trace: bool = False) -> dict[str, Any]:
        out = {
            "p_star": self.p_star.tolist(),
            "mu_star": self.mu_star,
            "chart_coords": self.chart_coords.tolist(),
            "gradient_norm_projected": self.gradient_norm_projected,
            "iterations": self.iterations,
            "certificate": self.certificate,
        }
        if include_trace:
            out["trace"] = self.trace
        return out


def _ascent_direction(B: np.ndarray, m: np.ndarray, p: np.ndarray, g: np.ndarray,
                      method: str) -> np.ndarray:
    if method == "gradient":
        return g
    # Newton step: the chart Hessian is -B^T diag(m/p) B, negative definite
    H = (B * (m / np.maximum(p, FLOOR))[:, None]).T @ B
    try:
        d = np.linalg.solve(H, g)
    except np.linalg.LinAlgError:
        return g
    return d if g @ d > 0 else g


def maximize_entropy_rate(spec: DegreeModel, chart: PolytopeRepr | None = None,
                          tol: float = 1e-10, start=None, method: str = "newton",
                          max_iter: int = 10_000, record_trace: bool = False) -> OptimizerResult:
    """Ascent with backtracking line search from the max-min-coordinate LP point.

    Stops when the chart gradient has norm at most ``tol`` and the last step
    changed the objective by at most ``tol**2``.
    """
    chart = build_polytope(spec) if chart is None else chart
    m = spec.mean_out
    B = chart.basis
    if start is None:
        x, slack = _max_min_coordinate(chart)
        if slack <= 1e-9:
            raise NoInteriorPoint(f"largest achievable min_i p_i is {slack:.3e}")
    else:
        x = np.asarray(start, dtype=float)
    if chart.dim == 0:
        p = chart.base_point
        if p.min() <= 0:
            raise NoInteriorPoint("the unique permissible vector has a zero coordinate")
        return OptimizerResult(p.copy(), entropy_rate(m, p), x, 0.0, 0)

    p = chart.to_p(x)
    if p.min() <= 0:
        raise PreconditionViolated("start point must be strictly positive")
    mu = entropy_rate(m, p)
    trace = []
    change = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        g = B.T @ entropy_gradient(m, p)
        gnorm = float(np.linalg.norm(g))
        if record_trace:
            trace.append({"iteration": it - 1, "mu": mu, "grad_norm": gnorm})
        if gnorm <= tol and change <= tol**2:
            it -= 1
            break
        d = _ascent_direction(B, m, p, g, method)
        s = 1.0
        # stay strictly inside the positive orthant
        while True:
            trial = chart.to_p(x + s * d)
            if trial.min() > 0 and trial.max() <= 1.0:
                break
            s *= BACKTRACK
        slope = float(g @ d)
        while True:
            trial = chart.to_p(x + s * d)
            new_mu = entropy_rate(m, trial)
            if s * slope <= 64 * np.finfo(float).eps * max(abs(mu), 1.0):
                # objective gain below rounding; judge the step by the gradient instead
                g_trial = B.T @ entropy_gradient(m, trial)
                if np.linalg.norm(g_trial) < gnorm or s < 1e-16:
                    break
            elif new_mu >= mu + ARMIJO * s * slope or s < 1e-16:
                break
            s *= BACKTRACK
        x = x + s * d
        p = np.maximum(chart.to_p(x), FLOOR)
        change = abs(new_mu - mu)
        mu = new_mu
        if s < 1e-16:
            # line search exhausted: no representable progress left
            break
    g = B.T @ entropy_gradient(m, p)
    return OptimizerResult(p, entropy_rate(m, p), x, float(np.linalg.norm(g)), it, trace)


def positivity_bound(spec: DegreeModel) -> float:
    """``(Delta I)^(-Delta^2)``."""
    D, I = spec.max_degree, spec.I
    return float((D * I) ** (-(D**2)))


def kkt_residual(spec: DegreeModel, p) -> float:
    """Distance from the gradient of ``mu`` to the row space of the constraint matrix."""
    grad = entropy_gradient(spec.mean_out, p)
    A = spec.constraint_matrix()
    lam, *_ = np.linalg.lstsq(A.T, grad, rcond=None)
    return float(np.linalg.norm(A.T @ lam - grad))


def optimizer_certificates(spec: DegreeModel, result: OptimizerResult,
                           chain: LayerChainAnalytics | None = None,
                           raise_on_failure: bool = True) -> dict[str, Any]:
    p = result.p_star
    pi = stationary_layer_law(spec, p) if chain is None else chain.pi
    bound = positivity_bound(spec)
    non_regular = check_assumptions(spec).non_regular
    variance = weighted_variance(np.log(p), pi)
    cert: dict[str, Any] = {
        "min_coord": float(p.min()),
        "lower_bound": bound,
        "min_coord_ok": bool(p.min() >= bound),
        "variance": variance,
        "variance_bound": bound,
        "variance_applicable": non_regular,
        "variance_ok": bool(variance >= bound) if non_regular else None,
        "kkt_residual": kkt_residual(spec, p),
        "permissible": is_permissible(spec, p, tol=1e-10),
    }
    cert["kkt_ok"] = cert["kkt_residual"] <= 1e-8
    if raise_on_failure:
        if not cert["min_coord_ok"]:
            raise CertificateFailed("min_coord", f"{cert['min_coord']:.3e} < {bound:.3e}")
        if non_regular and not cert["variance_ok"]:
            raise CertificateFailed("variance", f"{variance:.3e} < {bound:.3e}")
        if not cert["kkt_ok"]:
            raise CertificateFailed("kkt", f"residual {cert['kkt_residual']:.3e}")
    return cert


@dataclass(frozen=True)
class QuadraticCheck:
    mu_q: float
    lower: float
    upper: float

    @property
    def ok(self) -> bool:
        return self.lower - 1e-12 <= self.mu_q <= self.upper + 1e-12


def local_quadratic_check(spec: DegreeModel, p_star, q) -> QuadraticCheck:
    """``mu* - ||eps||^2 <= mu_q <= mu* - ||eps||^2 / 3`` with ``eps = |1 - q/p*|`` in ``L^2(pi*)``."""
    p_star, q = np.asarray(p_star, dtype=float), np.asarray(q, dtype=float)
    if not is_permissible(spec, q, tol=1e-10):
        raise PreconditionViolated("q is not permissible")
    eps = np.abs(1.0 - q / p_star)
    if eps.max() > 0.5:
        raise PreconditionViolated(f"relative error {eps.max():.3g} exceeds 1/2")
    m = spec.mean_out
    mu_p = entropy_rate(m, p_star)
    pi = stationary_layer_law(spec, p_star)
    e2 = float(pi @ eps**2)
    return QuadraticCheck(entropy_rate(m, q), mu_p - e2, mu_p - e2 / 3.0)
