"""Shared instance generators for the test suite (all seeded, all valid)."""

from __future__ import annotations

import numpy as np

from ongoing_market import Aggregate, Buyer, Good, Leaf, MarketSpec


def ces_market(
    n: int,
    m: int,
    rho_range=(-0.9, 0.0),
    r: float = 2048.0,
    seed: int = 0,
    budget_range=(1.0, 3.0),
    weight_range=(0.5, 2.0),
    supply_range=(1.0, 1.0),
) -> MarketSpec:
    """Market of single-level CES buyers (pairwise complements for rho <= 0)."""
    rng = np.random.default_rng(seed)
    supplies = rng.uniform(*supply_range, size=n)
    goods = [Good(i, float(supplies[i]), float(supplies[i] * r)) for i in range(n)]
    buyers = []
    for k in range(m):
        rho = float(rng.uniform(*rho_range))
        leaves = tuple(Leaf(i, float(rng.uniform(*weight_range))) for i in range(n))
        buyers.append(Buyer(k, float(rng.uniform(*budget_range)), Aggregate(rho, leaves)))
    return MarketSpec.build(goods, buyers)


def two_level_market(
    n_groups: int = 2,
    per_group: int = 2,
    m: int = 1,
    rho_group_range=(0.3, 0.7),
    rho_root_range=(-0.7, -0.3),
    r: float = 2048.0,
    seed: int = 0,
) -> MarketSpec:
    """Substitute groups nested under a complements root (one tree per buyer)."""
    rng = np.random.default_rng(seed)
    n = n_groups * per_group
    goods = [Good(i, 1.0, r) for i in range(n)]
    buyers = []
    for k in range(m):
        groups = []
        for g in range(n_groups):
            leaves = tuple(
                Leaf(g * per_group + j, float(rng.uniform(0.6, 1.6))) for j in range(per_group)
            )
            groups.append(
                Aggregate(float(rng.uniform(*rho_group_range)), leaves, weight=float(rng.uniform(0.7, 1.4)))
            )
        root = Aggregate(float(rng.uniform(*rho_root_range)), tuple(groups))
        buyers.append(Buyer(k, float(rng.uniform(1.0, 3.0)), root))
    return MarketSpec.build(goods, buyers)


def three_level_market(
    seed: int = 0,
    r: float = 2048.0,
    rho_levels=((0.4, 0.7), (0.05, 0.35), (-0.5, -0.05)),
) -> MarketSpec:
    """Eight goods in a 2x2x2 tree; sigma decreases from leaves to root."""
    rng = np.random.default_rng(seed)
    goods = [Good(i, 1.0, r) for i in range(8)]

    def agg(level, children):
        return Aggregate(
            float(rng.uniform(*rho_levels[level])), tuple(children), weight=float(rng.uniform(0.7, 1.4))
        )

    leaves = [Leaf(i, float(rng.uniform(0.6, 1.6))) for i in range(8)]
    bottom = [agg(0, leaves[2 * j : 2 * j + 2]) for j in range(4)]
    middle = [agg(1, bottom[2 * j : 2 * j + 2]) for j in range(2)]
    root = Aggregate(float(rng.uniform(*rho_levels[2])), tuple(middle))
    return MarketSpec.build(goods, [Buyer(0, float(rng.uniform(2.0, 4.0)), root)])


def balanced_tree_market(seed: int = 0, n: int = 4, depth: int = 2, r: float = 2048.0) -> MarketSpec:
    """Random small tree for oracle-equivalence tests; shares kept non-tiny."""
    rng = np.random.default_rng(seed)
    goods = [Good(i, 1.0, r) for i in range(n)]
    ids = list(range(n))
    if depth == 1 or n < 4:
        root = Aggregate(
            float(rng.uniform(-0.8, -0.05)),
            tuple(Leaf(i, float(rng.uniform(0.7, 1.4))) for i in ids),
        )
    else:
        half = n // 2
        g1 = Aggregate(
            float(rng.uniform(0.1, 0.7)),
            tuple(Leaf(i, float(rng.uniform(0.7, 1.4))) for i in ids[:half]),
        )
        g2 = Aggregate(
            float(rng.uniform(0.1, 0.7)),
            tuple(Leaf(i, float(rng.uniform(0.7, 1.4))) for i in ids[half:]),
            weight=float(rng.uniform(0.8, 1.2)),
        )
        root = Aggregate(float(rng.uniform(-0.8, -0.1)), (g1, g2))
    return MarketSpec.build(goods, [Buyer(0, float(rng.uniform(1.0, 3.0)), root)])
