import math

import numpy as np
import pytest

from ongoing_market import (
    Aggregate,
    Buyer,
    Good,
    Leaf,
    MarketSpec,
    adverse_market_elasticity,
    closed_form_constants,
    estimate_constants,
    income_elasticity,
    keller_elasticity_check,
    own_price_elasticity,
    spending_transfer_constant,
)
from ongoing_market.elasticity import MarketConstants, path_constants

from helpers import ces_market, three_level_market, two_level_market


def test_income_elasticity_is_one_for_homothetic_buyers():
    prices = np.array([1.0, 1.7, 0.6])
    ces = Buyer(0, 2.0, Aggregate(-0.5, (Leaf(0, 1.0), Leaf(1, 1.2), Leaf(2, 0.8))))
    cd = Buyer(0, 2.0, Aggregate(0.0, (Leaf(0, 1.0), Leaf(1, 1.0), Leaf(2, 1.0))))
    nested = two_level_market(seed=1).buyers[0]
    for buyer, p in ((ces, prices), (cd, prices), (nested, np.array([1.0, 1.4, 0.7, 1.1]))):
        for good in range(len(p)):
            assert income_elasticity(buyer, p, good) == pytest.approx(1.0, abs=1e-6)


def test_own_price_elasticity_single_good():
    spec = MarketSpec.build([Good(0, 2.0, 32.0)], [Buyer(0, 7.0, Leaf(0, 1.0))])
    assert own_price_elasticity(spec, np.array([3.5]), 0) == pytest.approx(1.0, abs=1e-6)


def test_own_price_elasticity_ces_bounds():
    # symmetric 2-good, rho=-0.5: elasticity between 1/(1-rho)=2/3 and 1
    goods = [Good(i, 1.0, 16.0) for i in range(2)]
    spec = MarketSpec.build(
        goods, [Buyer(0, 2.0, Aggregate(-0.5, (Leaf(0, 1.0), Leaf(1, 1.0))))]
    )
    e = own_price_elasticity(spec, np.array([1.0, 1.0]), 0)
    assert 2.0 / 3.0 - 1e-6 <= e <= 1.0 + 1e-6


def test_own_price_elasticity_two_level_cap():
    spec = two_level_market(seed=2, rho_group_range=(0.5, 0.5), rho_root_range=(-0.5, -0.5))
    cap = 1.0 / (1.0 - 0.5)
    for good in range(spec.n_goods):
        e = own_price_elasticity(spec, np.ones(spec.n_goods), good)
        assert e <= cap + 1e-3


def test_adverse_elasticity_single_good_is_one():
    spec = MarketSpec.build([Good(0, 2.0, 32.0)], [Buyer(0, 7.0, Leaf(0, 1.0))])
    assert adverse_market_elasticity(spec, np.array([3.5]), 0) == pytest.approx(1.0, abs=1e-3)


def test_adverse_elasticity_scale_invariant():
    spec = ces_market(3, 2, rho_range=(-0.6, -0.2), seed=8)
    p = np.array([1.0, 1.4, 0.8])
    a1 = adverse_market_elasticity(spec, p, 1)
    a2 = adverse_market_elasticity(spec, 3.0 * p, 1)
    assert a1 == pytest.approx(a2, rel=1e-9)


def test_adverse_elasticity_vs_two_alpha_minus_gamma():
    # for pure complements the adverse elasticity dominates 2 alpha - gamma
    spec = ces_market(4, 2, rho_range=(-0.7, -0.2), seed=12)
    est = estimate_constants(spec, grid_samples=40, seed=3)
    assert est.beta >= 2 * est.alpha - est.gamma - 2e-2


def test_probe_delta_domain():
    spec = ces_market(2, 1, seed=0)
    with pytest.raises(ValueError):
        adverse_market_elasticity(spec, np.ones(2), 0, probe_delta=0.05)


# --- spending transfer ----------------------------------------------------------


def test_spending_transfer_single_good_market():
    spec = MarketSpec.build([Good(0, 2.0, 32.0)], [Buyer(0, 7.0, Leaf(0, 1.0))])
    st = spending_transfer_constant(spec, np.array([3.5]), 0, 0.01)
    assert st.delta_s_complements == 0.0
    assert st.delta_s_substitutes == 0.0


def test_spending_transfer_ces_complements_bound():
    # everything other than the probed good is a complement; the transfer
    # ratio stays below -rho/(1-rho) for small steps
    rho = -0.5
    goods = [Good(i, 1.0, 64.0) for i in range(3)]
    spec = MarketSpec.build(
        goods, [Buyer(0, 3.0, Aggregate(rho, tuple(Leaf(i, 1.0) for i in range(3))))]
    )
    bound = -rho / (1.0 - rho)
    for p in (np.ones(3), np.array([1.0, 1.6, 0.7])):
        st = spending_transfer_constant(spec, p, 0, 0.01)
        assert st.delta_s_substitutes == 0.0
        assert st.alpha_prime_estimate <= bound + 1e-6


def test_spending_transfer_two_level_substitute_bound():
    # substitute-side spending change stays below the alpha'' = alpha' + 2(E-1) cap
    from ongoing_market.demand import MarketDemand

    spec = two_level_market(seed=5, rho_group_range=(0.4, 0.6), rho_root_range=(-0.6, -0.4))
    lam_bound = 0.1
    cf = closed_form_constants(spec, lam_bound)
    demand = MarketDemand(spec)
    p = np.ones(spec.n_goods)
    x0 = demand(p)
    for good in range(spec.n_goods):
        for step in (0.01, -lam_bound):
            st = spending_transfer_constant(spec, p, good, step)
            cap = cf.alpha_double_prime * x0[good] * abs(step * p[good])
            assert st.delta_s_substitutes <= cap + 1e-6


# --- closed forms ---------------------------------------------------------------


def test_path_constants_single_level():
    c = path_constants((2.0 / 3.0,))
    assert c["beta"] == pytest.approx(1.0 / 3.0, rel=1e-12)
    assert c["E"] == 1.0
    assert c["alpha"] == pytest.approx(2.0 / 3.0)


def test_path_constants_two_level():
    c = path_constants((2.0, 2.0 / 3.0))
    assert c["beta"] == pytest.approx(2.0 - 1.0 / 3.0 - 4.0 / 3.0, rel=1e-12)  # = 1/3
    assert c["E"] == 2.0


def test_path_constants_three_level():
    c = path_constants((2.0, 1.0, 2.0 / 3.0))
    assert c["beta"] == pytest.approx(1.0 / 3.0, rel=1e-12)


def test_closed_form_consistency_with_group_formulas():
    # E = max over groups of 1/(1-rho_G); beta = min over buyers 2/(1-rho)-1
    spec = two_level_market(
        seed=6, m=2, rho_group_range=(0.3, 0.6), rho_root_range=(-0.6, -0.2)
    )
    cf = closed_form_constants(spec)
    exp_e = max(
        1.0 / (1.0 - grp.rho) for b in spec.buyers for grp in b.utility.children
    )
    exp_beta = min(2.0 / (1.0 - b.utility.rho) - 1.0 for b in spec.buyers)
    assert cf.E == pytest.approx(exp_e, rel=1e-12)
    assert cf.beta == pytest.approx(exp_beta, rel=1e-12)


def test_alpha_double_prime_identity():
    c = MarketConstants(gamma=1.0, alpha=0.7, E=1.8, beta=0.3, alpha_prime=0.21)
    assert c.alpha_double_prime == c.alpha_prime + 2 * (c.E - 1)


# --- numeric vs closed form -----------------------------------------------------


def test_estimates_match_closed_forms_single_level():
    spec = ces_market(3, 2, rho_range=(-0.5, -0.5), seed=21)
    cf = closed_form_constants(spec)
    est = estimate_constants(spec, grid_samples=40, seed=2)
    assert abs(est.beta - cf.beta) <= 2e-2
    assert abs(est.E - cf.E) <= 2e-2
    assert abs(est.alpha - cf.alpha) <= 2e-2
    assert abs(est.gamma - cf.gamma) <= 2e-2


def test_estimates_match_closed_forms_three_level():
    spec = three_level_market(seed=5)
    cf = closed_form_constants(spec)
    est = estimate_constants(spec, grid_samples=30, seed=2)
    assert abs(est.beta - cf.beta) <= 2e-2
    assert abs(est.E - cf.E) <= 2e-2


# --- Keller's two-level formulas -------------------------------------------------


def test_keller_symmetric_two_by_two():
    tree = Aggregate(
        -0.5,
        (
            Aggregate(0.5, (Leaf(0, 1.0), Leaf(1, 1.0))),
            Aggregate(0.5, (Leaf(2, 1.0), Leaf(3, 1.0))),
        ),
    )
    rep = keller_elasticity_check(Buyer(0, 4.0, tree), np.ones(4))
    assert rep.max_rel_err <= 1e-4
    assert rep.same_group_sign_ok and rep.cross_group_sign_ok


def test_keller_on_random_two_level_instances():
    for seed in range(8):
        spec = two_level_market(seed=seed)
        rng = np.random.default_rng(seed)
        p = np.exp(rng.uniform(-0.5, 0.5, size=spec.n_goods))
        rep = keller_elasticity_check(spec.buyers[0], p)
        assert rep.max_rel_err <= 1e-4
        assert rep.same_group_sign_ok and rep.cross_group_sign_ok
