"""Market elasticity constants: measured numerically and in closed form.

Five constants summarize a market for the parameter planner:

* gamma  -- least upper bound on income elasticities (1 for homothetic trees);
* alpha  -- greatest lower bound on own-price elasticities;
* E      -- least upper bound on own-price elasticities (>= 1);
* beta   -- lower bound on the adverse market elasticity: the worst-case
  relative demand response of a good whose price rises by a factor (1+d)
  while every other price moves adversarially within the same band;
* alpha_prime -- spending-transfer bound: when p_i moves by dp, the spending
  shifted onto i's complements is at most alpha_prime * x_i * |dp|.

The closed forms walk each leaf's root path: with sigma_q = 1/(1-rho_q)
ordered leaf-parent first,

    beta_i  = sigma_1 - |sigma_N - 1| - sum_q |sigma_q - sigma_{q+1}|
    E_i     = max(1, max_k sigma_k)
    alpha_i = min(1, min_k sigma_k)
    raw_i   = |sigma_N - 1| + sum_q |sigma_q - sigma_{q+1}|,
    alpha_prime_i = (1 - lam)^(-E) * raw_i,

reduced by min/max across goods and buyers.  The numeric estimators treat
the definitions directly (finite differences, adversarial corners) and probe
the share configurations where the closed forms become tight, so the two
routes can be compared within a stated tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .demand import MarketDemand, good_index, nested_demand
from .market import Aggregate, Buyer, Leaf, MarketSpec, leaf_paths, tree_leaves


class DegenerateDemandError(ValueError):
    """Demand too small for a relative finite difference."""


class UnsupportedUtilityError(ValueError):
    """Closed forms only exist for (nested-)CES trees."""


_TINY = 1e-12


@dataclass(frozen=True)
class MarketConstants:
    gamma: float
    alpha: float
    E: float
    beta: float
    alpha_prime: float

    @property
    def alpha_double_prime(self) -> float:
        # exact by construction
        return self.alpha_prime + 2.0 * (self.E - 1.0)

    def to_dict(self) -> dict:
        return {
            "gamma": self.gamma,
            "alpha": self.alpha,
            "E": self.E,
            "beta": self.beta,
            "alpha_prime": self.alpha_prime,
            "alpha_double_prime": self.alpha_double_prime,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MarketConstants":
        return cls(
            gamma=d["gamma"],
            alpha=d["alpha"],
            E=d["E"],
            beta=d["beta"],
            alpha_prime=d["alpha_prime"],
        )


# ---------------------------------------------------------------------------
# finite-difference estimators
# ---------------------------------------------------------------------------


def income_elasticity(buyer: Buyer, prices, good: int, idx=None, rel_step: float = 1e-5) -> float:
    """(dx_i/db) / (x_i/b) by central difference; 1.0 for homothetic buyers."""
    prices = np.asarray(prices, dtype=float)
    b = buyer.budget_b
    x0 = nested_demand(buyer, prices, idx)[good if idx is None else idx[good]]
    if x0 < _TINY:
        raise DegenerateDemandError(f"demand for good {good} is below {_TINY}")
    h = rel_step * b
    x_hi = nested_demand(buyer, prices, idx, budget=b + h)[good if idx is None else idx[good]]
    x_lo = nested_demand(buyer, prices, idx, budget=b - h)[good if idx is None else idx[good]]
    return (x_hi - x_lo) / (2 * h) * b / x0


def _own_price_elasticity_fn(demand_fn, prices, gi: int, rel_step: float = 1e-5) -> float:
    prices = np.asarray(prices, dtype=float)
    x0 = demand_fn(prices)[gi]
    if x0 < _TINY * 1e-200:
        raise DegenerateDemandError(f"demand for good index {gi} vanished")
    h = rel_step * prices[gi]
    p_hi = prices.copy()
    p_hi[gi] += h
    p_lo = prices.copy()
    p_lo[gi] -= h
    dx = demand_fn(p_hi)[gi] - demand_fn(p_lo)[gi]
    return -dx / (2 * h) * prices[gi] / x0


def own_price_elasticity(spec: MarketSpec, prices, good: int, rel_step: float = 1e-5) -> float:
    """-(dx_i/dp_i) / (x_i/p_i) of aggregate demand, central difference."""
    demand = MarketDemand(spec)
    gi = good_index(spec)[good]
    return _own_price_elasticity_fn(demand, prices, gi, rel_step)


def _cross_signs(demand_fn, prices, gi: int, rel_step: float = 1e-4) -> np.ndarray:
    """complement flag per good j != gi: does raising p_j lower x_gi?"""
    prices = np.asarray(prices, dtype=float)
    x0 = demand_fn(prices)[gi]
    flags = np.zeros(len(prices), dtype=bool)
    for j in range(len(prices)):
        if j == gi:
            continue
        p2 = prices.copy()
        p2[j] *= 1.0 + rel_step
        flags[j] = demand_fn(p2)[gi] <= x0
    return flags


def _ame_at(demand_fn, prices, gi: int, delta: float, complement: np.ndarray) -> float:
    prices = np.asarray(prices, dtype=float)
    x0 = demand_fn(prices)[gi]
    p_bar = prices.copy()
    p_bar[gi] *= 1.0 + delta
    for j in range(len(prices)):
        if j == gi:
            continue
        # adversary fights the demand drop: complements cheaper, substitutes dearer
        p_bar[j] = prices[j] / (1.0 + delta) if complement[j] else prices[j] * (1.0 + delta)
    x1 = demand_fn(p_bar)[gi]
    return -(x1 - x0) / (delta * x0)


def adverse_market_elasticity(spec: MarketSpec, prices, good: int, probe_delta: float = 0.01) -> float:
    """Worst-case demand response of ``good`` under adversarial co-movement.

    The corner of the price band is picked by cross-effect sign (exact for
    sign-definite cross effects, which covers every utility class here), and
    the finite-delta estimates at probe_delta and probe_delta/2 are Richardson
    extrapolated toward delta -> 0.
    """
    if not 0 < probe_delta <= 0.01:
        raise ValueError("probe_delta must lie in (0, 0.01]")
    demand = MarketDemand(spec)
    gi = good_index(spec)[good]
    complement = _cross_signs(demand, prices, gi)
    a1 = _ame_at(demand, prices, gi, probe_delta, complement)
    a2 = _ame_at(demand, prices, gi, probe_delta / 2, complement)
    return 2 * a2 - a1


@dataclass(frozen=True)
class SpendingTransfer:
    delta_s_complements: float   # sum |delta s_j| over complements of the good
    delta_s_substitutes: float   # sum |delta s_j| over substitutes (own good excluded)
    alpha_prime_estimate: float  # delta_s_complements / (x_i |delta p_i|)


def spending_transfer_constant(spec: MarketSpec, prices, good: int, price_step: float) -> SpendingTransfer:
    """Measure the spending shifted by one price move of ``good``.

    Other goods are classified complement/substitute by the sign of their
    demand response; the implied ratio is the empirical spending-transfer
    constant for this configuration.
    """
    prices = np.asarray(prices, dtype=float)
    demand = MarketDemand(spec)
    gi = good_index(spec)[good]
    x0 = demand(prices)
    p1 = prices.copy()
    p1[gi] *= 1.0 + price_step
    x1 = demand(p1)
    dp = p1[gi] - prices[gi]
    ds = prices * (x1 - x0)        # p_j unchanged for j != gi
    ds[gi] = p1[gi] * x1[gi] - prices[gi] * x0[gi]
    dsc = 0.0
    dss = 0.0
    for j in range(len(prices)):
        if j == gi:
            continue
        # complement: demand moves with own demand (drops when p_i rises)
        if (x1[j] - x0[j]) * dp <= 0:
            dsc += abs(ds[j])
        else:
            dss += abs(ds[j])
    denom = x0[gi] * abs(dp)
    return SpendingTransfer(
        delta_s_complements=dsc,
        delta_s_substitutes=dss,
        alpha_prime_estimate=dsc / denom if denom > 0 else 0.0,
    )


# ---------------------------------------------------------------------------
# closed forms from the utility-tree paths
# ---------------------------------------------------------------------------


def _sigma_paths(buyer: Buyer) -> dict:
    """good id -> (sigma_1, ..., sigma_N), leaf parent first, root last."""
    out = {}
    for good, rhos in leaf_paths(buyer.utility).items():
        for rho in rhos:
            if rho >= 1:
                raise UnsupportedUtilityError(f"buyer {buyer.id}: rho {rho} >= 1")
        out[good] = tuple(1.0 / (1.0 - r) for r in rhos)
    return out


def path_constants(sigmas: tuple) -> dict:
    """Per-good constants along one root path (empty path = single-good buyer)."""
    if not sigmas:
        return {"beta": 1.0, "E": 1.0, "alpha": 1.0, "raw_transfer": 0.0}
    gaps = abs(sigmas[-1] - 1.0) + sum(
        abs(sigmas[q] - sigmas[q + 1]) for q in range(len(sigmas) - 1)
    )
    return {
        "beta": sigmas[0] - gaps,
        "E": max(1.0, max(sigmas)),
        "alpha": min(1.0, min(sigmas)),
        "raw_transfer": gaps,
    }


def closed_form_constants(spec: MarketSpec, update_step_bound: float = 0.0) -> MarketConstants:
    """Exact constants for a (nested-)CES market.

    ``update_step_bound`` is the largest price-update step the dynamics may
    take; it enters only the spending-transfer constant through the factor
    (1 - step)^(-E) that covers a full downward move.
    """
    betas, es, alphas, raws = [], [], [], []
    for buyer in spec.buyers:
        for good, sigmas in _sigma_paths(buyer).items():
            c = path_constants(sigmas)
            betas.append(c["beta"])
            es.append(c["E"])
            alphas.append(c["alpha"])
            raws.append(c["raw_transfer"])
    e_market = max(es)
    if not 0 <= update_step_bound < 1:
        raise ValueError("update_step_bound must lie in [0, 1)")
    inflate = (1.0 - update_step_bound) ** (-e_market)
    return MarketConstants(
        gamma=1.0,
        alpha=min(alphas),
        E=e_market,
        beta=min(betas),
        alpha_prime=inflate * max(raws),
    )


# ---------------------------------------------------------------------------
# numeric estimation of the market constants
# ---------------------------------------------------------------------------


def _path_structure(buyer: Buyer, good: int):
    """(sigmas leaf->root, sibling good-ids per level) for one leaf."""

    def walk(node, trail):
        if isinstance(node, Leaf):
            return [node] if node.good == good else None
        for child in node.children:
            found = walk(child, trail)
            if found is not None:
                return found + [node]
        return None

    path = walk(buyer.utility, [])
    if path is None:
        raise KeyError(f"good {good} not in buyer {buyer.id}'s tree")
    nodes = path[1:]  # aggregates only, leaf parent first
    sigmas = tuple(1.0 / (1.0 - a.rho) for a in nodes)
    siblings = []
    below = {good}
    for agg in nodes:
        here = {leaf.good for leaf in tree_leaves(agg)}
        siblings.append(sorted(here - below))
        below = here
    return sigmas, siblings


def _directed_prices(n, idx, good, sigmas, siblings, dominant_from: int, L: float) -> np.ndarray:
    """Price vector steering sibling shares level by level.

    Levels with index >= dominant_from get dominant siblings (their share of
    the enclosing node tends to 1); lower levels get suppressed siblings.
    ``dominant_from = 0`` also suppresses the good's own in-group share.
    """
    p = np.ones(n)
    for q, (sig, sibs) in enumerate(zip(sigmas, siblings)):
        if sig == 1.0 or not sibs:
            continue
        dominant = q >= dominant_from
        # share of a child subtree scales like (price index)^(1 - sigma)
        up = (sig < 1.0) if dominant else (sig > 1.0)
        for j in sibs:
            p[idx[j]] *= math.exp(L if up else -L)
    if dominant_from == 0 and sigmas and sigmas[0] != 1.0:
        p[idx[good]] *= math.exp(L if sigmas[0] > 1.0 else -L)
    return p


def _price_grid(n, f_grid: float, samples: int, rng, p_star=None) -> list:
    base = np.ones(n) if p_star is None else np.asarray(p_star, dtype=float)
    out = [base.copy()]
    for _ in range(samples):
        u = rng.uniform(-1.0, 1.0, size=n)
        out.append(base * f_grid**u)
    return out


def estimate_constants(
    spec: MarketSpec,
    p_star=None,
    f_grid: float = 8.0,
    grid_samples: int = 200,
    probe_delta: float = 0.01,
    seed: int = 0,
    update_step_bound: float = 0.0,
    corner_levels=(4.0, 8.0, 16.0, 24.0),
) -> MarketConstants:
    """Numeric market constants from the demand oracle alone.

    The sup/inf in the definitions range over all prices; a log-uniform
    f-bounded grid acts as a safety net while directed share-corner price
    vectors (per buyer, good, and tree level) chase the analytic extremes.
    """
    idx = good_index(spec)
    n = spec.n_goods
    rng = np.random.default_rng(seed)
    grid = _price_grid(n, f_grid, grid_samples, rng, p_star)

    gamma_hat = 1.0
    e_hat = 1.0
    alpha_hat = math.inf
    beta_hat = math.inf
    raw_transfer_hat = 0.0

    for buyer in spec.buyers:
        demand_fn = lambda p, _b=buyer: nested_demand(_b, p, idx)
        goods = sorted(leaf_paths(buyer.utility).keys())
        single = len(goods) == 1
        for g in goods:
            gi = idx[g]
            sigmas, siblings = _path_structure(buyer, g)
            candidates = [np.ones(n)]
            for L in corner_levels:
                for k_star in range(len(sigmas) + 1):
                    candidates.append(
                        _directed_prices(n, idx, g, sigmas, siblings, k_star, L)
                    )
            sub = grid[:: max(1, len(grid) // 25)]
            for p in candidates + sub:
                try:
                    e = _own_price_elasticity_fn(demand_fn, p, gi)
                except DegenerateDemandError:
                    continue
                e_hat = max(e_hat, e)
                alpha_hat = min(alpha_hat, e)
                if not single:
                    complement = _cross_signs(demand_fn, p, gi)
                    a1 = _ame_at(demand_fn, p, gi, probe_delta, complement)
                    a2 = _ame_at(demand_fn, p, gi, probe_delta / 2, complement)
                    beta_hat = min(beta_hat, 2 * a2 - a1)
                else:
                    beta_hat = min(beta_hat, 1.0)
            # income elasticity: homothetic, so a few grid points suffice
            for p in grid[:: max(1, len(grid) // 8)]:
                gamma_hat = max(gamma_hat, income_elasticity(buyer, p, gi))

    # spending transfer, measured at the most adverse allowed downward step
    demand = MarketDemand(spec)
    steps = [1e-4]
    if update_step_bound > 0:
        steps.append(-update_step_bound)
    if n > 1:
        for g in (gg.id for gg in spec.goods):
            for p in grid[:: max(1, len(grid) // 25)]:
                for step in steps:
                    st = spending_transfer_constant(spec, p, g, step)
                    raw_transfer_hat = max(raw_transfer_hat, st.alpha_prime_estimate)

    return MarketConstants(
        gamma=gamma_hat,
        alpha=alpha_hat,
        E=e_hat,
        beta=beta_hat,
        alpha_prime=raw_transfer_hat,
    )


# ---------------------------------------------------------------------------
# Keller's two-level elasticity formulas as a self-check
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KellerReport:
    rel_err_own: float
    rel_err_same_group: float
    rel_err_cross_group: float
    same_group_sign_ok: bool
    cross_group_sign_ok: bool

    @property
    def max_rel_err(self) -> float:
        return max(self.rel_err_own, self.rel_err_same_group, self.rel_err_cross_group)


def keller_elasticity_check(buyer: Buyer, prices, idx=None, rel_step: float = 1e-5) -> KellerReport:
    """Compare Keller's two-level nested-CES derivatives with finite differences.

    Checks, for every good i, a same-group partner j and a cross-group good k:
      (dx_i/dp_i)/(x_i/p_i), (dx_i/dp_j)/(x_i/p_j), and ds_k/dp_i.
    """
    root = buyer.utility
    if not isinstance(root, Aggregate) or not all(
        isinstance(c, Aggregate) and all(isinstance(l, Leaf) for l in c.children)
        for c in root.children
    ):
        raise UnsupportedUtilityError("buyer does not have a two-level tree")
    prices = np.asarray(prices, dtype=float)
    n = len(prices)
    if idx is None:
        idx = {i: i for i in range(n)}
    sigma = 1.0 / (1.0 - root.rho)
    b = buyer.budget_b
    demand_fn = lambda p: nested_demand(buyer, p, idx)
    x0 = demand_fn(prices)
    s = prices * x0

    groups = [[idx[l.good] for l in grp.children] for grp in root.children]
    group_of = {}
    sigma_g = {}
    for grp, members in zip(root.children, groups):
        for gi in members:
            group_of[gi] = members
            sigma_g[gi] = 1.0 / (1.0 - grp.rho)

    worst_own = worst_same = worst_cross = 0.0
    same_sign_ok = cross_sign_ok = True
    for gi in range(n):
        members = group_of[gi]
        s_g = s[members].sum()
        si = s[gi]
        # own-price elasticity
        pred_own = -(
            sigma_g[gi] * (1 - si / s_g)
            + sigma * (si / s_g - si / b)
            + si / b
        )
        h = rel_step * prices[gi]
        p_hi, p_lo = prices.copy(), prices.copy()
        p_hi[gi] += h
        p_lo[gi] -= h
        x_hi, x_lo = demand_fn(p_hi), demand_fn(p_lo)
        fd_own = (x_hi[gi] - x_lo[gi]) / (2 * h) * prices[gi] / x0[gi]
        worst_own = max(worst_own, abs(pred_own - fd_own) / abs(pred_own))

        for gj in members:
            if gj == gi:
                continue
            pred_same = (s[gj] / b) * (sigma_g[gi] * b / s_g - sigma * (b / s_g - 1) - 1)
            hj = rel_step * prices[gj]
            pj_hi, pj_lo = prices.copy(), prices.copy()
            pj_hi[gj] += hj
            pj_lo[gj] -= hj
            fd_same = (
                (demand_fn(pj_hi)[gi] - demand_fn(pj_lo)[gi]) / (2 * hj) * prices[gj] / x0[gi]
            )
            worst_same = max(worst_same, abs(pred_same - fd_same) / abs(pred_same))
            same_sign_ok = same_sign_ok and fd_same >= -1e-9
            break

        for gk in range(n):
            if gk in members:
                continue
            pred_cross = (s[gk] / b) * (root.rho / (1 - root.rho)) * x0[gi]
            fd_cross = (prices[gk] * x_hi[gk] - prices[gk] * x_lo[gk]) / (2 * h)
            worst_cross = max(worst_cross, abs(pred_cross - fd_cross) / abs(pred_cross))
            cross_sign_ok = cross_sign_ok and fd_cross <= 1e-9
            break

    return KellerReport(
        rel_err_own=worst_own,
        rel_err_same_group=worst_same,
        rel_err_cross_group=worst_cross,
        same_group_sign_ok=same_sign_ok,
        cross_group_sign_ok=cross_sign_ok,
    )
