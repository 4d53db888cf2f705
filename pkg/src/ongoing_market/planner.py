"""Parameter planning: admissible (lambda, kappa, delta, c1, c2) from market constants.

The planner turns measured or closed-form market constants into update-rule
parameters that provably keep the potential monitor happy:

* kappa is set to its upper bound,
    complements:  (2/r) min( beta/(4 gamma + beta),
                             ln(1/(2(1-alpha))) / (2 (8 + 4 gamma/beta)) )
    mixtures:     (2/r) min( beta/(beta + 4(2E - beta)),
                             (1-2 alpha') beta / (8 alpha' (2E-beta) + 4 beta) )
* delta = kappa r / 2 exactly, c1 = delta, c2 = 2;
* lambda is the log-midpoint of [24/r, min(caps)], where the caps are
    complements:  3/7,  (3/7) ln(1/(2(1-alpha))),  sqrt(kappa r / 32)
    mixtures:     1/(8E + 4 alpha' - 6),           sqrt(kappa r / 32)
  and the sqrt cap is waived for the exponential update rule.

An empty lambda interval raises with a certificate naming the binding
inequality.  Warehouse geometry (eight equal zones, safe = [chi/4, 3 chi/4])
and capacity sizing live here too.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .elasticity import MarketConstants

LINEAR = "linear"
EXPONENTIAL = "exponential"

ZONE_LABELS = (
    "low outer buffer",
    "low middle buffer",
    "low inner buffer",
    "low central",
    "high central",
    "high inner buffer",
    "high middle buffer",
    "high outer buffer",
)


@dataclass(frozen=True)
class ParamSet:
    lambda_: float
    kappa: float
    delta: float
    c1: float
    c2: float
    r: float
    rule: str = LINEAR

    def to_dict(self) -> dict:
        return {
            "lambda": self.lambda_,
            "kappa": self.kappa,
            "delta": self.delta,
            "c1": self.c1,
            "c2": self.c2,
            "r": self.r,
            "rule": self.rule,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ParamSet":
        return cls(
            lambda_=d["lambda"],
            kappa=d["kappa"],
            delta=d["delta"],
            c1=d["c1"],
            c2=d["c2"],
            r=d["r"],
            rule=d.get("rule", LINEAR),
        )


@dataclass(frozen=True)
class InfeasibilityCertificate:
    inequality: str
    lhs: float
    rhs: float
    detail: str = ""

    def to_dict(self) -> dict:
        return {
            "inequality": self.inequality,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "detail": self.detail,
        }


class InfeasiblePlanError(ValueError):
    def __init__(self, certificate: InfeasibilityCertificate):
        self.certificate = certificate
        super().__init__(
            f"infeasible plan: {certificate.inequality} "
            f"(lhs={certificate.lhs:.6g}, rhs={certificate.rhs:.6g}) {certificate.detail}"
        )


def _log_midpoint(lo: float, hi: float) -> float:
    return math.exp(0.5 * (math.log(lo) + math.log(hi)))


def _finish_plan(kappa: float, caps: dict, r: float, rule: str) -> ParamSet:
    lam_lo = 24.0 / r
    name, lam_hi = min(caps.items(), key=lambda kv: kv[1])
    if lam_lo > lam_hi:
        raise InfeasiblePlanError(
            InfeasibilityCertificate(
                inequality=f"24/r <= {name}",
                lhs=lam_lo,
                rhs=lam_hi,
                detail="warehouse ratio r too small for any admissible step size",
            )
        )
    return ParamSet(
        lambda_=_log_midpoint(lam_lo, lam_hi),
        kappa=kappa,
        delta=kappa * r / 2.0,
        c1=kappa * r / 2.0,
        c2=2.0,
        r=r,
        rule=rule,
    )


def feasible_lambda_interval(constants: MarketConstants, r: float, rule: str = LINEAR, kind: str = "") -> tuple:
    """[lambda_lo, lambda_hi] the planner selects from (may be empty: lo > hi)."""
    kind = kind or market_kind(constants)
    plan = plan_complements if kind == "complements" else plan_mixture
    try:
        params = plan(constants, r, rule)
    except InfeasiblePlanError as exc:
        return exc.certificate.lhs, exc.certificate.rhs
    # reconstruct the bounds from the chosen log-midpoint
    lo = 24.0 / r
    hi = math.exp(2.0 * math.log(params.lambda_) - math.log(lo))
    return lo, hi


def plan_complements(constants: MarketConstants, r: float, rule: str = LINEAR) -> ParamSet:
    """Plan for a market of pairwise complements (E = 1 regime)."""
    beta, gamma, alpha = constants.beta, constants.gamma, constants.alpha
    if not beta > 0:
        raise InfeasiblePlanError(
            InfeasibilityCertificate("beta > 0", beta, 0.0, "adverse elasticity not positive")
        )
    if not alpha > 0.5:
        raise InfeasiblePlanError(
            InfeasibilityCertificate(
                "alpha > 1/2", alpha, 0.5, "price elasticity floor too small"
            )
        )
    log_term = math.inf if alpha >= 1.0 else math.log(1.0 / (2.0 * (1.0 - alpha)))
    kappa = (2.0 / r) * min(
        beta / (4.0 * gamma + beta),
        log_term / (2.0 * (8.0 + 4.0 * gamma / beta)),
    )
    caps = {
        "lambda <= 3/7": 3.0 / 7.0,
        "lambda <= (3/7) ln(1/(2(1-alpha)))": (3.0 / 7.0) * log_term,
    }
    if rule == LINEAR:
        caps["lambda <= sqrt(kappa r / 32)"] = math.sqrt(kappa * r / 32.0)
    return _finish_plan(kappa, caps, r, rule)


def plan_mixture(constants: MarketConstants, r: float, rule: str = LINEAR) -> ParamSet:
    """Plan for a market mixing substitutes and complements."""
    beta, e_up, a_p = constants.beta, constants.E, constants.alpha_prime
    if not beta > 0:
        raise InfeasiblePlanError(
            InfeasibilityCertificate("beta > 0", beta, 0.0, "adverse elasticity not positive")
        )
    if not a_p < 0.5:
        raise InfeasiblePlanError(
            InfeasibilityCertificate(
                "alpha_prime < 1/2", a_p, 0.5, "spending-transfer bound violated"
            )
        )
    two_e_minus_beta = 2.0 * e_up - beta
    kappa = (2.0 / r) * min(
        beta / (beta + 4.0 * two_e_minus_beta),
        (1.0 - 2.0 * a_p) * beta / (8.0 * a_p * two_e_minus_beta + 4.0 * beta),
    )
    caps = {"lambda <= 1/(8E + 4 alpha' - 6)": 1.0 / (8.0 * e_up + 4.0 * a_p - 6.0)}
    if rule == LINEAR:
        caps["lambda <= sqrt(kappa r / 32)"] = math.sqrt(kappa * r / 32.0)
    return _finish_plan(kappa, caps, r, rule)


def market_kind(constants: MarketConstants, tol: float = 1e-9) -> str:
    return "mixture" if constants.E > 1.0 + tol else "complements"


def plan_market(constants: MarketConstants, r: float, rule: str = LINEAR, kind: str = "") -> ParamSet:
    kind = kind or market_kind(constants)
    if kind == "complements":
        return plan_complements(constants, r, rule)
    return plan_mixture(constants, r, rule)


# ---------------------------------------------------------------------------
# condition checking
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Condition:
    name: str
    lhs: float
    rhs: float

    @property
    def passed(self) -> bool:
        return self.lhs <= self.rhs

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "pass": self.passed,
            "slack": self.slack,
        }


@dataclass
class ConditionReport:
    kind: str
    conditions: list = field(default_factory=list)

    @property
    def all_pass(self) -> bool:
        return all(c.passed for c in self.conditions)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "conditions": [c.to_dict() for c in self.conditions]}


def alpha_bar(constants: MarketConstants, params: ParamSet) -> float:
    """Transfer coefficient for the complements-case update check."""
    a, g, b = constants.alpha, constants.gamma, constants.beta
    lam, d = params.lambda_, params.delta
    return (
        2.0
        * (1.0 - a)
        * (1.0 - 2.0 * d) ** (-g / b)
        * (1.0 + a * lam * (1.0 + d) / (2.0 * (1.0 - lam * (1.0 + d))))
    )


def update_monotonicity_conditions(
    constants: MarketConstants, params: ParamSet, kind: str = ""
) -> ConditionReport:
    """Numeric pass/fail for the conditions under which a price update cannot
    raise the potential, plus the between-update decay hypothesis."""
    kind = kind or market_kind(constants)
    lam, d, c1, c2, kap = params.lambda_, params.delta, params.c1, params.c2, params.kappa
    g, b = constants.gamma, constants.beta
    conds = []
    if kind == "complements":
        conds.append(
            Condition(
                "phase2-band-fits-demand-cap",
                (1.0 - 2.0 * d) ** (-1.0 / b),
                (2.0 - d) ** (1.0 / g),
            )
        )
        conds.append(
            Condition(
                "update-transfer-margin",
                alpha_bar(constants, params) + c1 + c2 * d,
                1.0 - d,
            )
        )
        conds.append(Condition("update-step-cap", (1.0 + d + c1 + c2 * d) * lam, 1.0))
    else:
        e_up, a_p = constants.E, constants.alpha_prime
        a_pp = constants.alpha_double_prime
        teb = 2.0 * e_up - b
        blow = (1.0 - 2.0 * d) ** (-teb / b)
        conds.append(
            Condition(
                "phase2-band-fits-demand-cap",
                (1.0 - 2.0 * d) ** (-1.0 / b),
                (2.0 - d) ** (1.0 / teb),
            )
        )
        conds.append(
            Condition("update-transfer-margin", 2.0 * a_p * blow + c1 + c2 * d, 1.0 - d)
        )
        conds.append(
            Condition(
                "update-step-cap",
                (2.0 * a_pp * blow + 1.0 + d + c1 + c2 * d) * lam,
                1.0,
            )
        )
    conds.append(Condition("decay-hypothesis-lower", 4.0 * kap * (1.0 + c2), lam * c1))
    conds.append(Condition("decay-hypothesis-upper", lam * c1, 0.5))
    return ConditionReport(kind=kind, conditions=conds)


def phase_two_bound(constants: MarketConstants, params: ParamSet, kind: str = "") -> float:
    """Price band below which the potential monitor takes over (f_II)."""
    kind = kind or market_kind(constants)
    d, b = params.delta, constants.beta
    expo = 1.0 / constants.gamma if kind == "complements" else 1.0 / (2.0 * constants.E - b)
    return min((1.0 - 2.0 * d) ** (-1.0 / b), (2.0 - d) ** expo)


# ---------------------------------------------------------------------------
# warehouse geometry and sizing
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Zone:
    index: int      # 0 (emptiest) .. 7 (fullest)
    label: str
    safe: bool


def zone_of(v: float, chi: float) -> Zone:
    """Zone of a stock level: eight equal zones, half-open upward except the top.

    Safe means v in the closed band [chi/4, 3 chi/4] (central zones plus
    inner buffers).
    """
    if not 0 <= v <= chi:
        raise ValueError(f"stock {v} outside [0, {chi}]")
    index = min(7, int(math.floor(8.0 * v / chi)))
    return Zone(index=index, label=ZONE_LABELS[index], safe=chi / 4.0 <= v <= 3.0 * chi / 4.0)


def demand_cap(constants: MarketConstants, f: float, kind: str = "") -> float:
    """Upper bound on x_i / w_i while prices stay within factor f of equilibrium."""
    kind = kind or market_kind(constants)
    if kind == "complements":
        return f**constants.gamma
    return f ** (2.0 * constants.E - constants.beta)


@dataclass(frozen=True)
class SizingReport:
    d_f_init: float
    d_two: float
    phase1_stock_drift: float     # in units of w_i (v(f_I) estimate)
    phase1_days: float            # D(f_I) estimate
    safe_after_days: float        # phase1_days + 32/beta + 2/kappa
    capacity_checks: tuple        # Condition objects on r
    safety_multiplier: float

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.capacity_checks)

    def to_dict(self) -> dict:
        return {
            "d_f_init": self.d_f_init,
            "d_two": self.d_two,
            "phase1_stock_drift": self.phase1_stock_drift,
            "phase1_days": self.phase1_days,
            "safe_after_days": self.safe_after_days,
            "capacity_checks": [c.to_dict() for c in self.capacity_checks],
            "safety_multiplier": self.safety_multiplier,
        }


def warehouse_sizing(
    constants: MarketConstants,
    params: ParamSet,
    f_init: float,
    kind: str = "",
    safety: float = 4.0,
) -> SizingReport:
    """Capacity checks and duration estimates for planned parameters.

    The drift and duration formulas have unspecified leading constants; they
    are taken as 1 and scaled by a configurable safety multiplier, and the
    simulator validates the resulting sizes empirically.
    """
    kind = kind or market_kind(constants)
    lam, b, kap, d = params.lambda_, constants.beta, params.kappa, params.delta
    d_fi = demand_cap(constants, f_init, kind)
    d_two = demand_cap(constants, 2.0, kind)
    drift = safety * (d_fi / lam + d_two * max(0.0, math.log(b / d)) / (lam * b))
    phase1 = safety * (math.log(f_init) / lam + math.log(1.0 / d) / (lam * b))
    checks = (
        Condition("r >= 512/beta", 512.0 / b, params.r),
        Condition("r >= 8 v(f_init)", 8.0 * drift, params.r),
    )
    return SizingReport(
        d_f_init=d_fi,
        d_two=d_two,
        phase1_stock_drift=drift,
        phase1_days=phase1,
        safe_after_days=phase1 + 32.0 / b + 2.0 / kap,
        capacity_checks=checks,
        safety_multiplier=safety,
    )
