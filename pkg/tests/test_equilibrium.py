import numpy as np
import pytest

from ongoing_market import (
    Aggregate,
    Buyer,
    Good,
    Leaf,
    MarketSpec,
    aggregate_demand,
    f_bound,
    solve_equilibrium,
)

from helpers import ces_market, two_level_market


def test_cobb_douglas_hand_solution():
    goods = [Good(0, 1.0, 16.0), Good(1, 1.0, 16.0)]
    spec = MarketSpec.build(goods, [Buyer(0, 10.0, Aggregate(0.0, (Leaf(0, 1.0), Leaf(1, 1.0))))])
    eq = solve_equilibrium(spec)
    assert eq.p_star == pytest.approx([5.0, 5.0], rel=1e-9)
    assert eq.residual <= 1e-10


def test_single_good_budget_over_supply():
    spec = MarketSpec.build([Good(0, 2.0, 32.0)], [Buyer(0, 7.0, Leaf(0, 1.0))])
    eq = solve_equilibrium(spec)
    assert eq.p_star == pytest.approx([3.5], rel=1e-10)


def test_symmetric_ces_market():
    n, w, m_budget = 4, 1.5, 12.0
    goods = [Good(i, w, 32 * w) for i in range(n)]
    buyers = [Buyer(0, m_budget, Aggregate(-0.5, tuple(Leaf(i, 1.0) for i in range(n))))]
    eq = solve_equilibrium(MarketSpec.build(goods, buyers))
    assert eq.p_star == pytest.approx([m_budget / (n * w)] * n, rel=1e-9)


def test_walras_and_residual_invariants():
    for seed in (1, 2, 3):
        spec = ces_market(4, 3, rho_range=(-0.8, 0.0), seed=seed)
        eq = solve_equilibrium(spec)
        assert eq.residual <= 1e-10
        z = aggregate_demand(spec, eq.p_star).excess(spec.supplies())
        assert abs(float(np.dot(eq.p_star, z))) <= 1e-9 * spec.total_money_M
        # excess demand itself is tolerance-small
        assert np.max(np.abs(z) * eq.p_star) <= 1e-10 * spec.total_money_M


def test_permutation_invariance():
    spec = ces_market(3, 2, seed=9)
    eq = solve_equilibrium(spec)
    perm = [2, 0, 1]
    goods = [Good(k, spec.goods[i].supply_w, spec.goods[i].warehouse_capacity_chi)
             for k, i in enumerate(perm)]

    def remap(node):
        if isinstance(node, Leaf):
            return Leaf(perm.index(node.good), node.weight)
        return Aggregate(node.rho, tuple(remap(c) for c in node.children), node.weight)

    buyers = [Buyer(b.id, b.budget_b, remap(b.utility)) for b in spec.buyers]
    eq2 = solve_equilibrium(MarketSpec.build(goods, buyers))
    assert np.allclose(eq2.p_star, eq.p_star[perm], rtol=1e-8)


def test_scaling_invariance():
    spec = two_level_market(seed=4)
    eq = solve_equilibrium(spec)
    c = 3.0
    scaled_budgets = MarketSpec.build(
        spec.goods, [Buyer(b.id, c * b.budget_b, b.utility) for b in spec.buyers]
    )
    assert np.allclose(solve_equilibrium(scaled_budgets).p_star, c * eq.p_star, rtol=1e-8)
    scaled_supplies = MarketSpec.build(
        [Good(g.id, c * g.supply_w, c * g.warehouse_capacity_chi) for g in spec.goods],
        spec.buyers,
    )
    assert np.allclose(solve_equilibrium(scaled_supplies).p_star, eq.p_star / c, rtol=1e-8)


def test_f_bound_examples():
    p_star = np.array([2.0, 5.0])
    assert f_bound(p_star, p_star) == 1.0
    assert f_bound([4.0, 5.0], p_star) == pytest.approx(2.0, rel=1e-12)
    assert f_bound([1.0, 15.0], p_star) == pytest.approx(3.0, rel=1e-12)
    with pytest.raises(ValueError):
        f_bound([1.0], p_star)
