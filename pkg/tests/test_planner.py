import math

import numpy as np
import pytest

from ongoing_market import (
    EXPONENTIAL,
    LINEAR,
    InfeasiblePlanError,
    ParamSet,
    phase_two_bound,
    plan_complements,
    plan_market,
    plan_mixture,
    update_monotonicity_conditions,
    warehouse_sizing,
    zone_of,
)
from ongoing_market.elasticity import MarketConstants
from ongoing_market.planner import alpha_bar, feasible_lambda_interval

from helpers import ces_market


REGRESSION = MarketConstants(gamma=1.0, alpha=0.75, E=1.0, beta=0.5, alpha_prime=0.0)

# frozen from independent arithmetic: kappa = (2/2048) min(1/9, ln2/32) = ln2/32768
KAPPA_PIN = math.log(2.0) / 32768.0
LAMBDA_LO_PIN = 24.0 / 2048.0
LAMBDA_HI_PIN = math.sqrt(KAPPA_PIN * 2048.0 / 32.0)


def test_regression_instance_kappa_and_lambda_interval():
    params = plan_complements(REGRESSION, 2048.0)
    assert params.kappa == pytest.approx(KAPPA_PIN, rel=1e-9)
    assert params.kappa <= 2.1154e-5  # headline rounding of the same number
    lo, hi = feasible_lambda_interval(REGRESSION, 2048.0, LINEAR, "complements")
    assert lo == pytest.approx(LAMBDA_LO_PIN, rel=1e-9)
    assert hi == pytest.approx(LAMBDA_HI_PIN, rel=1e-9)
    # the interval rounds to the coarse [0.011719, 0.036794] display
    assert round(lo, 6) == 0.011719
    assert abs(hi - 0.036794) < 1e-6
    assert params.delta == params.kappa * 2048.0 / 2.0
    assert params.c1 == params.delta and params.c2 == 2.0


def test_small_r_is_infeasible_with_certificate():
    with pytest.raises(InfeasiblePlanError) as err:
        plan_complements(REGRESSION, 100.0)
    cert = err.value.certificate
    assert "24/r" in cert.inequality
    assert cert.lhs == pytest.approx(0.24)
    assert cert.lhs > cert.rhs


def test_mixture_alpha_prime_precondition():
    consts = MarketConstants(gamma=1.0, alpha=0.8, E=2.0, beta=1.0 / 3.0, alpha_prime=0.6)
    with pytest.raises(InfeasiblePlanError) as err:
        plan_mixture(consts, 4096.0)
    assert "alpha_prime" in err.value.certificate.inequality


def test_mixture_regression_instance():
    consts = MarketConstants(gamma=1.0, alpha=0.8, E=2.0, beta=1.0 / 3.0, alpha_prime=0.3)
    params = plan_mixture(consts, 4096.0)
    teb = 2 * 2.0 - 1.0 / 3.0
    expected = (2.0 / 4096.0) * min(
        (1.0 / 3.0) / (1.0 / 3.0 + 4.0 * teb),
        (1.0 - 0.6) * (1.0 / 3.0) / (8.0 * 0.3 * teb + 4.0 / 3.0),
    )
    assert params.kappa == pytest.approx(expected, rel=1e-12)
    # frozen value of the same arithmetic
    assert params.kappa == pytest.approx(6.424753289473685e-06, rel=1e-9)


def test_nonpositive_beta_infeasible():
    consts = MarketConstants(gamma=1.0, alpha=0.4, E=1.0, beta=-0.2, alpha_prime=0.0)
    with pytest.raises(InfeasiblePlanError) as err:
        plan_complements(consts, 4096.0)
    assert "beta" in err.value.certificate.inequality


def test_complements_and_mixture_routes_overlap_at_e_equal_one():
    consts = MarketConstants(gamma=1.0, alpha=0.75, E=1.0, beta=0.5, alpha_prime=0.1)
    lo_c, hi_c = feasible_lambda_interval(consts, 4096.0, LINEAR, "complements")
    lo_m, hi_m = feasible_lambda_interval(consts, 4096.0, LINEAR, "mixture")
    assert max(lo_c, lo_m) < min(hi_c, hi_m)


def test_planner_output_passes_all_conditions():
    for seed in range(5):
        spec = ces_market(4, 2, rho_range=(-0.7, -0.1), r=4096.0, seed=seed)
        from ongoing_market.harness import prepare_market

        constants, kind = prepare_market(spec)
        params = plan_market(constants, 4096.0, LINEAR, kind)
        rep = update_monotonicity_conditions(constants, params, kind)
        assert rep.all_pass, [c.to_dict() for c in rep.conditions if not c.passed]
        # decay hypothesis: 4 kappa (1+c2) <= lambda c1 <= 1/2
        assert 4 * params.kappa * (1 + params.c2) <= params.lambda_ * params.c1 <= 0.5


def test_forced_large_lambda_fails_step_cap():
    params = ParamSet(lambda_=0.9, kappa=1e-4, delta=0.05, c1=0.05, c2=2.0, r=1000.0)
    rep = update_monotonicity_conditions(REGRESSION, params, "complements")
    failed = {c.name for c in rep.conditions if not c.passed}
    assert "update-step-cap" in failed


def test_alpha_bar_delta_zero_limit():
    params = ParamSet(lambda_=0.1, kappa=0.0, delta=0.0, c1=0.0, c2=2.0, r=1000.0)
    consts = MarketConstants(gamma=1.0, alpha=0.75, E=1.0, beta=0.5, alpha_prime=0.0)
    expected = 2 * 0.25 * (1.0 + 0.75 * 0.1 / (2 * (1 - 0.1)))
    assert alpha_bar(consts, params) == pytest.approx(expected, rel=1e-12)


def test_exponential_rule_waives_step_square_cap():
    # the sqrt cap is independent of r; below it the linear interval is empty
    # while exponential planning still succeeds
    consts = MarketConstants(gamma=1.0, alpha=0.55, E=1.0, beta=0.1, alpha_prime=0.0)
    r = 2600.0
    with pytest.raises(InfeasiblePlanError) as err:
        plan_complements(consts, r, LINEAR)
    assert "sqrt" in err.value.certificate.inequality
    params = plan_complements(consts, r, EXPONENTIAL)
    assert params.rule == EXPONENTIAL
    lo, hi = feasible_lambda_interval(consts, r, EXPONENTIAL, "complements")
    assert hi == pytest.approx(min(3.0 / 7.0, (3.0 / 7.0) * math.log(1.0 / 0.9)), rel=1e-9)


def test_lambda_interval_monotone_in_r():
    widths = []
    for r in (2048.0, 4096.0, 8192.0):
        lo, hi = feasible_lambda_interval(REGRESSION, r, LINEAR, "complements")
        widths.append((lo, hi))
    for (lo1, hi1), (lo2, hi2) in zip(widths, widths[1:]):
        assert lo2 <= lo1 and hi2 >= hi1 - 1e-15


def test_phase_two_bound_value():
    params = ParamSet(lambda_=0.02, kappa=1e-5, delta=0.01, c1=0.01, c2=2.0, r=2000.0)
    consts = MarketConstants(gamma=1.0, alpha=0.75, E=1.0, beta=0.5, alpha_prime=0.0)
    # min((1-0.02)^(-2), 1.99) = 1.0412328196584757
    assert phase_two_bound(consts, params, "complements") == pytest.approx(
        0.98 ** (-2.0), rel=1e-12
    )
    assert phase_two_bound(consts, params, "complements") == pytest.approx(1.0412328, abs=1e-6)


def test_zone_classification():
    chi = 80.0
    z = zone_of(chi / 2, chi)
    assert (z.index, z.safe) == (4, True)
    assert z.label == "high central"
    z = zone_of(chi / 16, chi)
    assert (z.index, z.label, z.safe) == (0, "low outer buffer", False)
    z = zone_of(3 * chi / 4, chi)
    assert (z.index, z.safe) == (6, True)  # boundary: closed safe interval
    assert zone_of(chi, chi).index == 7
    with pytest.raises(ValueError):
        zone_of(-1.0, chi)


def test_warehouse_sizing_power_laws():
    consts_c = MarketConstants(gamma=1.0, alpha=0.75, E=1.0, beta=0.5, alpha_prime=0.0)
    params = plan_complements(consts_c, 2048.0)
    sz = warehouse_sizing(consts_c, params, f_init=4.0, kind="complements")
    assert sz.d_f_init == pytest.approx(4.0, rel=1e-12)
    check = {c.name: c for c in sz.capacity_checks}
    assert check["r >= 512/beta"].lhs == pytest.approx(1024.0)

    consts_m = MarketConstants(gamma=1.0, alpha=0.8, E=2.0, beta=1.0 / 3.0, alpha_prime=0.3)
    params_m = plan_mixture(consts_m, 65536.0)
    sz_m = warehouse_sizing(consts_m, params_m, f_init=2.0, kind="mixture")
    assert sz_m.d_f_init == pytest.approx(2.0 ** (11.0 / 3.0), rel=1e-12)
    assert sz_m.d_f_init == pytest.approx(12.699, abs=1e-3)
