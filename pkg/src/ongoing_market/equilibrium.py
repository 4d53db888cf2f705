"""High-precision equilibrium prices, used as the reference point everywhere.

The solver iterates on spending: at prices p each good's total spending
S_i(p) is recomputed from the demand oracle and the price moves halfway to
S_i / w_i.  For homothetic buyers this damped fixed point is stable at desk
scale; its residual is checked independently through the demand oracle, so
a wrong fixed point cannot pass silently.  If it stalls, a small-step
multiplicative tatonnement polish is tried before giving up, and the result
records which route produced it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .demand import MarketDemand
from .market import MarketSpec


class NonConvergenceError(RuntimeError):
    def __init__(self, residuals):
        self.residuals = list(residuals)
        tail = ", ".join(f"{r:.3e}" for r in self.residuals[-5:])
        super().__init__(f"equilibrium solve did not converge; residual tail [{tail}]")


@dataclass(frozen=True)
class EquilibriumResult:
    p_star: np.ndarray
    residual: float       # max_i |z_i| p_i / M
    iterations: int
    method: str           # "fixed-point" or "fixed-point+tatonnement"


def solve_equilibrium(spec: MarketSpec, tol: float = 1e-10, max_iter: int = 10**6) -> EquilibriumResult:
    """Deterministic equilibrium solve with damping 0.5.

    Residual is max_i |z_i(p)| p_i / M; the returned prices satisfy
    residual <= tol and the budget identity makes sum_i p_i z_i vanish.
    """
    demand = MarketDemand(spec)
    w = np.array(spec.supplies())
    money = spec.total_money_M
    p = np.full(spec.n_goods, money / (spec.n_goods * w.mean()))
    residuals = []

    def residual_of(p):
        x = demand(p)
        return float(np.max(np.abs(x - w) * p) / money), x

    it = 0
    method = "fixed-point"
    while it < max_iter:
        x = demand(p)
        spending = x * p
        res = float(np.max(np.abs(spending - p * w)) / money)
        residuals.append(res)
        if res <= tol:
            return EquilibriumResult(p_star=p.copy(), residual=res, iterations=it, method=method)
        p = 0.5 * p + 0.5 * spending / w
        it += 1
        # stall detector: no real progress over a long window
        if it % 5000 == 0 and len(residuals) > 5000:
            if residuals[-1] > 0.5 * residuals[-5000]:
                break

    # small-step tatonnement polish (rarely needed; recorded when used)
    method = "fixed-point+tatonnement"
    lam = 0.02
    for jt in range(max_iter):
        x = demand(p)
        z = (x - w) / w
        res = float(np.max(np.abs(x - w) * p) / money)
        residuals.append(res)
        if res <= tol:
            return EquilibriumResult(p_star=p.copy(), residual=res, iterations=it + jt, method=method)
        p = p * (1.0 + lam * np.clip(z, -1.0, 1.0))
    raise NonConvergenceError(residuals)


def f_bound(prices, p_star) -> float:
    """Largest multiplicative distance to equilibrium: max_i max(p/p*, p*/p)."""
    prices = np.asarray(prices, dtype=float)
    p_star = np.asarray(p_star, dtype=float)
    if prices.shape != p_star.shape:
        raise ValueError("price vectors must have the same length")
    ratio = prices / p_star
    return float(np.max(np.maximum(ratio, 1.0 / ratio)))
