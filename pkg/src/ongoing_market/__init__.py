"""Ongoing Fisher market simulation and convergence certification.

Layers, bottom to top: static market model, demand oracles, equilibrium
solver, elasticity constants, parameter planner, event-driven simulator,
potential monitor, and the CLI harness tying them together.
"""

from .demand import (
    AggregateDemand,
    MarketDemand,
    aggregate_demand,
    brute_force_demand,
    ces_demand,
    nested_demand,
)
from .elasticity import (
    MarketConstants,
    adverse_market_elasticity,
    closed_form_constants,
    estimate_constants,
    income_elasticity,
    keller_elasticity_check,
    own_price_elasticity,
    spending_transfer_constant,
)
from .engine import (
    RandomWithDeadline,
    SimState,
    SimTrace,
    Staggered,
    Synchronous,
    UpdateEvent,
    advance,
    one_time_update,
    ongoing_update,
    run,
    run_one_time,
)
from .equilibrium import EquilibriumResult, f_bound, solve_equilibrium
from .inequalities import daily_contraction_inequalities, spending_change_inequalities
from .lyapunov import (
    CertificationReport,
    certify_one_time_trace,
    certify_trace,
    check_daily_contraction,
    check_derivative_bound,
    check_update_monotonicity,
    misspending,
    phase_tracker,
    potential,
    span,
)
from .market import (
    Aggregate,
    Buyer,
    Good,
    Leaf,
    MarketSpec,
    load_spec,
    load_spec_file,
    serialize,
    validate,
)
from .planner import (
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

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
