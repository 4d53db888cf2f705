"""Demand oracles for CES and nested-CES buyers.

Demands come from two independent routes:

* closed-form/recursive evaluation (`ces_demand`, `nested_demand`,
  `aggregate_demand`) -- a bottom-up price-index pass followed by a top-down
  budget-share pass, all in log space so extreme price ratios cannot
  overflow; and
* a grid maximizer (`brute_force_demand`) that searches the spending simplex
  directly and exists purely to validate the first route.

Budgets are always exhausted exactly (shares are normalized), so the
spending identity sum_i p_i x_i = b holds to rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .market import Aggregate, Buyer, Leaf, MarketSpec, UtilityNode, tree_leaves


class DomainError(ValueError):
    """Demand evaluation left its numeric domain (bad price, non-finite index)."""


class DimensionError(ValueError):
    """Brute-force search is restricted to at most four goods."""


def _check_prices(prices: np.ndarray):
    prices = np.asarray(prices, dtype=float)
    bad = ~(np.isfinite(prices) & (prices > 0))
    if bad.any():
        i = int(np.argmax(bad))
        raise DomainError(f"price of good {i} must be positive and finite, got {prices[i]}")
    return prices


def _softmax(log_terms: np.ndarray) -> np.ndarray:
    z = np.exp(log_terms - np.max(log_terms))
    return z / z.sum()


def ces_demand(budget: float, weights, rho: float, prices) -> np.ndarray:
    """Single-level CES demand.

    Spending share of good i is proportional to a_i^sigma * p_i^(1-sigma)
    with sigma = 1/(1-rho); rho == 0 dispatches to the Cobb-Douglas shares
    a_i / sum(a).  Requires rho < 1 and strictly positive weights and prices.
    """
    prices = _check_prices(prices)
    weights = np.asarray(weights, dtype=float)
    if weights.shape != prices.shape:
        raise ValueError("weights and prices must have the same length")
    if not (weights > 0).all():
        raise DomainError("weights must be strictly positive")
    if not rho < 1:
        raise DomainError(f"rho must be < 1, got {rho}")
    if rho == 0.0:
        shares = weights / weights.sum()
    else:
        sigma = 1.0 / (1.0 - rho)
        shares = _softmax(sigma * np.log(weights) + (1.0 - sigma) * np.log(prices))
    return shares * budget / prices


def _log_price_index(node: UtilityNode, log_p: np.ndarray, idx) -> float:
    """Unit-cost index of a subtree, in logs.

    For an aggregate with parameter rho (sigma = 1/(1-rho)) over children
    with indices P_k and weights a_k:
        sigma != 1:  P = (sum_k a_k^sigma P_k^(1-sigma))^(1/(1-sigma))
        sigma == 1:  P = prod_k (P_k / abar_k)^abar_k,  abar = a / sum(a)
    """
    if isinstance(node, Leaf):
        return float(log_p[idx[node.good]])
    child_lp = np.array([_log_price_index(c, log_p, idx) for c in node.children])
    a = np.array([c.weight for c in node.children])
    if node.rho == 0.0:
        abar = a / a.sum()
        return float(np.dot(abar, child_lp - np.log(abar)))
    sigma = 1.0 / (1.0 - node.rho)
    terms = sigma * np.log(a) + (1.0 - sigma) * child_lp
    m = terms.max()
    lse = m + math.log(np.exp(terms - m).sum())
    return float(lse / (1.0 - sigma))


def _fill_spending(node: UtilityNode, log_budget: float, log_p, idx, out: np.ndarray):
    if isinstance(node, Leaf):
        out[idx[node.good]] += math.exp(log_budget)
        return
    a = np.array([c.weight for c in node.children])
    if node.rho == 0.0:
        shares = a / a.sum()
    else:
        sigma = 1.0 / (1.0 - node.rho)
        child_lp = np.array([_log_price_index(c, log_p, idx) for c in node.children])
        shares = _softmax(sigma * np.log(a) + (1.0 - sigma) * child_lp)
    with np.errstate(divide="ignore"):
        log_shares = np.log(shares)
    for child, ls in zip(node.children, log_shares):
        if ls == -np.inf:
            continue
        _fill_spending(child, log_budget + ls, log_p, idx, out)


def nested_demand(buyer: Buyer, prices, idx=None, budget=None) -> np.ndarray:
    """Demand of one buyer with an arbitrary-depth utility tree.

    Two passes: price indices bottom-up, budget shares top-down.  Goods not
    referenced by the tree get zero.  ``idx`` maps good id -> position in
    ``prices`` (identity when omitted).  Agrees with `ces_demand` exactly on
    depth-1 trees and is validated against `brute_force_demand` in tests.
    """
    prices = _check_prices(prices)
    n = len(prices)
    if idx is None:
        idx = {i: i for i in range(n)}
    b = buyer.budget_b if budget is None else float(budget)
    log_p = np.log(prices)
    lp_root = _log_price_index(buyer.utility, log_p, idx)
    if not math.isfinite(lp_root):
        raise DomainError(f"non-finite price index for buyer {buyer.id}")
    spending = np.zeros(n)
    _fill_spending(buyer.utility, math.log(b), log_p, idx, spending)
    return spending / prices


@dataclass
class AggregateDemand:
    """Market demand at one price vector, with the per-buyer breakdown."""

    quantities: np.ndarray
    per_buyer: np.ndarray  # shape (m, n)

    def excess(self, supplies) -> np.ndarray:
        return self.quantities - np.asarray(supplies, dtype=float)


def good_index(spec: MarketSpec) -> dict:
    return {g.id: k for k, g in enumerate(spec.goods)}


def aggregate_demand(spec: MarketSpec, prices) -> AggregateDemand:
    """Sum of per-buyer demands; errors from buyer evaluation propagate."""
    prices = _check_prices(prices)
    idx = good_index(spec)
    per_buyer = np.zeros((len(spec.buyers), len(prices)))
    for k, buyer in enumerate(spec.buyers):
        per_buyer[k] = nested_demand(buyer, prices, idx)
    return AggregateDemand(quantities=per_buyer.sum(axis=0), per_buyer=per_buyer)


class MarketDemand:
    """Precompiled aggregate-demand evaluator for one market.

    Single-level CES markets get a fully vectorized path (one (m, n) softmax
    per call); anything else falls back to the recursive evaluator.  Used in
    the simulation hot loop.
    """

    def __init__(self, spec: MarketSpec):
        self.spec = spec
        self.idx = good_index(spec)
        self.n = spec.n_goods
        self._budgets = np.array([b.budget_b for b in spec.buyers])
        self._flat = all(
            isinstance(b.utility, Aggregate)
            and all(isinstance(c, Leaf) for c in b.utility.children)
            for b in spec.buyers
        )
        if self._flat:
            m = len(spec.buyers)
            self._sigma = np.empty((m, 1))
            self._log_a = np.full((m, self.n), -np.inf)
            for k, b in enumerate(spec.buyers):
                root = b.utility
                self._sigma[k, 0] = 1.0 / (1.0 - root.rho)
                for leaf in root.children:
                    self._log_a[k, self.idx[leaf.good]] = math.log(leaf.weight)

    def __call__(self, prices: np.ndarray) -> np.ndarray:
        if self._flat:
            log_p = np.log(prices)
            terms = self._sigma * self._log_a + (1.0 - self._sigma) * log_p
            z = np.exp(terms - terms.max(axis=1, keepdims=True))
            shares = z / z.sum(axis=1, keepdims=True)
            return (self._budgets @ shares) / prices
        x = np.zeros(self.n)
        for buyer in self.spec.buyers:
            x += nested_demand(buyer, prices, self.idx)
        return x

    def per_buyer(self, prices: np.ndarray) -> np.ndarray:
        out = np.zeros((len(self.spec.buyers), self.n))
        for k, buyer in enumerate(self.spec.buyers):
            out[k] = nested_demand(buyer, prices, self.idx)
        return out


def utility_values(node: UtilityNode, quantities: np.ndarray, idx) -> np.ndarray:
    """Tree utility of each row of ``quantities`` (shape (N, n)), vectorized.

    Zero quantities are handled by limits: under a rho < 0 aggregate any zero
    child collapses the aggregate to zero.
    """
    if isinstance(node, Leaf):
        return quantities[:, idx[node.good]]
    child_u = [utility_values(c, quantities, idx) for c in node.children]
    a = np.array([c.weight for c in node.children])
    if node.rho == 0.0:
        abar = a / a.sum()
        out = np.ones(quantities.shape[0])
        for u, e in zip(child_u, abar):
            out = out * np.power(u, e)
        return out
    if node.rho > 0:
        acc = np.zeros(quantities.shape[0])
        for u, w in zip(child_u, a):
            acc = acc + w * np.power(u, node.rho)
        return np.power(acc, 1.0 / node.rho)
    # rho < 0: evaluate on strictly positive rows, zero elsewhere
    stacked = np.stack(child_u, axis=0)
    positive = (stacked > 0).all(axis=0)
    out = np.zeros(quantities.shape[0])
    if positive.any():
        acc = np.zeros(int(positive.sum()))
        for u, w in zip(child_u, a):
            acc = acc + w * np.power(u[positive], node.rho)
        out[positive] = np.power(acc, 1.0 / node.rho)
    return out


def brute_force_demand(buyer: Buyer, prices, resolution: float, idx=None) -> np.ndarray:
    """Grid-search utility maximizer on the budget simplex; test oracle only.

    Searches spending allocations over the goods the buyer values, refining
    the grid around the incumbent until the pitch reaches ``resolution``
    (money units).  Restricted to <= 4 goods.
    """
    prices = _check_prices(prices)
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    n = len(prices)
    if idx is None:
        idx = {i: i for i in range(n)}
    leaves = tree_leaves(buyer.utility)
    goods = [idx[leaf.good] for leaf in leaves]
    k = len(goods)
    if k > 4:
        raise DimensionError(f"brute force supports at most 4 goods, tree has {k}")
    b = buyer.budget_b

    if k == 1:
        out = np.zeros(n)
        out[goods[0]] = b / prices[goods[0]]
        return out

    def evaluate(spend_free: np.ndarray) -> np.ndarray:
        # spend_free: (N, k-1) spending on the first k-1 goods; last gets the rest
        last = b - spend_free.sum(axis=1)
        ok = last >= -1e-12 * b
        full = np.concatenate([spend_free, np.clip(last, 0.0, None)[:, None]], axis=1)
        quantities = np.zeros((len(full), n))
        for j, g in enumerate(goods):
            quantities[:, g] = full[:, j] / prices[g]
        u = np.full(len(full), -np.inf)
        u[ok] = utility_values(buyer.utility, quantities[ok], idx)
        return u, full

    center = np.full(k - 1, b / k)
    step = b / 12.0
    while True:
        axes = [
            np.clip(center[j] + step * np.arange(-6, 7), 0.0, b) for j in range(k - 1)
        ]
        grids = np.meshgrid(*axes, indexing="ij")
        cand = np.stack([g.ravel() for g in grids], axis=1)
        u, full = evaluate(cand)
        best = int(np.argmax(u))
        center = cand[best]
        if step <= resolution:
            break
        step = max(resolution, step / 4.0)

    out = np.zeros(n)
    spend_last = b - center.sum()
    for j, g in enumerate(goods[:-1]):
        out[g] = center[j] / prices[g]
    out[goods[-1]] = max(spend_last, 0.0) / prices[goods[-1]]
    return out
