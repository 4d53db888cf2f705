"""Event-driven tatonnement simulator.

Between price-update events nothing discrete happens: demand is constant at
the posted prices, buyers spend at a uniform rate, and each warehouse stock
moves linearly at (w_i - x_i).  Integration is therefore exact sums of
products, no ODE solver.  Updates arrive per good from a pluggable schedule
(synchronous, staggered, or random gaps truncated at the one-day deadline);
a good's update rescales its price by

    linear:       1 + lam * min(1, zbar/w) * dt
    exponential:  exp(lam * min(1, zbar/w) * dt)

where zbar is the average demand since the good's previous update minus the
stock-corrected target w + kappa (v - v*), and dt is the time since that
update.  Simultaneous events are applied in good order with demand
re-evaluated after each one.  Runs are deterministic given (market, params,
schedule): replaying a seed reproduces the trace byte for byte.

The one-time variant drops the warehouses: updates use the instantaneous
excess demand and no dt factor.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .demand import MarketDemand
from .equilibrium import f_bound
from .lyapunov import misspending, potential
from .market import MarketSpec
from .planner import EXPONENTIAL, LINEAR, ParamSet, zone_of


class WarehouseBreachError(RuntimeError):
    def __init__(self, good: int, time: float, stock: float):
        self.good, self.time, self.stock = good, time, stock
        super().__init__(f"warehouse of good {good} breached at t={time}: stock {stock}")


# ---------------------------------------------------------------------------
# schedules
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Synchronous:
    """Every good updates at every integer day."""


@dataclass(frozen=True)
class Staggered:
    """Good i updates at offsets[i] + k for k = 0, 1, ...; offsets in [0, 1)."""

    offsets: tuple


@dataclass(frozen=True)
class RandomWithDeadline:
    """Exponential gaps with the given mean, truncated at the one-day deadline.

    min_gap caps the event rate (at most 1/min_gap events per good per day).
    """

    seed: int
    mean_gap: float = 0.5
    min_gap: float = 1e-4


Schedule = Union[Synchronous, Staggered, RandomWithDeadline]


class _ScheduleState:
    def __init__(self, schedule: Schedule, n_goods: int):
        self.schedule = schedule
        if isinstance(schedule, RandomWithDeadline):
            seqs = np.random.SeedSequence(schedule.seed).spawn(n_goods)
            self._rngs = [np.random.default_rng(s) for s in seqs]

    def first_time(self, good: int) -> float:
        sched = self.schedule
        if isinstance(sched, Synchronous):
            return 1.0
        if isinstance(sched, Staggered):
            off = sched.offsets[good] % 1.0
            return off if off > 0 else 1.0
        return self._gap(good)

    def next_time(self, good: int, tau: float) -> float:
        sched = self.schedule
        if isinstance(sched, Synchronous):
            return math.floor(tau + 1e-9) + 1.0
        if isinstance(sched, Staggered):
            return tau + 1.0
        return tau + self._gap(good)

    def _gap(self, good: int) -> float:
        sched = self.schedule
        g = self._rngs[good].exponential(sched.mean_gap)
        return min(max(g, sched.min_gap), 1.0)


def describe_schedule(schedule: Schedule) -> dict:
    if isinstance(schedule, Synchronous):
        return {"policy": "sync"}
    if isinstance(schedule, Staggered):
        return {"policy": "staggered", "offsets": list(schedule.offsets)}
    return {
        "policy": "random",
        "seed": schedule.seed,
        "mean_gap": schedule.mean_gap,
        "min_gap": schedule.min_gap,
    }


# ---------------------------------------------------------------------------
# state and single-step operations
# ---------------------------------------------------------------------------


@dataclass
class SimState:
    time: float
    prices: np.ndarray
    stocks: np.ndarray            # empty array for one-time runs
    last_update_tau: np.ndarray
    demand_integral: np.ndarray
    demand: np.ndarray            # x at current prices

    def copy(self) -> "SimState":
        return SimState(
            time=self.time,
            prices=self.prices.copy(),
            stocks=self.stocks.copy(),
            last_update_tau=self.last_update_tau.copy(),
            demand_integral=self.demand_integral.copy(),
            demand=self.demand.copy(),
        )


@dataclass(frozen=True)
class UpdateEvent:
    time: float
    good: int
    old_price: float
    new_price: float
    x_bar: float
    w_tilde: float
    z_bar: float
    delta_t: float


def one_time_update(price: float, x: float, w: float, lam: float, rule: str = LINEAR) -> float:
    """Single price step from instantaneous excess demand (no warehouses)."""
    ratio = min(1.0, (x - w) / w)
    if rule == EXPONENTIAL:
        return price * math.exp(lam * ratio)
    return price * (1.0 + lam * ratio)


def ongoing_price_factor(z_bar: float, w: float, lam: float, dt: float, rule: str) -> float:
    ratio = min(1.0, z_bar / w)
    if rule == EXPONENTIAL:
        return math.exp(lam * ratio * dt)
    return 1.0 + lam * ratio * dt


def kappa_per_good(spec: MarketSpec, params: ParamSet) -> np.ndarray:
    """Common kappa normally; per-good kappa_i = 2 delta / r_i when the
    chi/w ratios differ (then the common-rate guarantee uses min_i kappa_i)."""
    if spec.has_equal_ratios():
        return np.full(spec.n_goods, params.kappa)
    return 2.0 * params.delta / np.array(spec.ratios())


def advance(state: SimState, spec: MarketSpec, until: float) -> SimState:
    """Pure flow step: no events inside (state.time, until).

    Prices and demand stay fixed; stocks and the per-good demand integrals
    accumulate linearly.  Raises WarehouseBreachError if a stock leaves
    (0, chi).
    """
    if until < state.time:
        raise ValueError("cannot advance backwards")
    out = state.copy()
    dt = until - state.time
    if dt == 0:
        return out
    out.time = until
    out.demand_integral += out.demand * dt
    if out.stocks.size:
        w = np.array(spec.supplies())
        out.stocks += (w - out.demand) * dt
        chi = np.array(spec.capacities())
        bad = (out.stocks <= 0) | (out.stocks >= chi)
        if bad.any():
            g = int(np.argmax(bad))
            raise WarehouseBreachError(g, until, float(out.stocks[g]))
    return out


def ongoing_update(
    state: SimState, spec: MarketSpec, good: int, params: ParamSet, rule: str = ""
) -> tuple:
    """Apply one warehouse-aware price update to ``good`` at state.time.

    Returns (new state, UpdateEvent); demands of all goods are re-evaluated
    at the new price vector.
    """
    rule = rule or params.rule
    out = state.copy()
    t = out.time
    dt = t - out.last_update_tau[good]
    if not 0 < dt <= 1 + 1e-9:
        raise AssertionError(f"update gap {dt} outside (0, 1] for good {good}")
    kap = kappa_per_good(spec, params)
    w = spec.goods[good].supply_w
    x_bar = float(out.demand_integral[good] / dt)
    w_tilde = w + kap[good] * (out.stocks[good] - spec.goods[good].ideal_stock_vstar)
    z_bar = x_bar - w_tilde
    old_price = float(out.prices[good])
    new_price = old_price * ongoing_price_factor(z_bar, w, params.lambda_, dt, rule)
    if new_price <= 0:
        raise AssertionError("price update drove the price non-positive")
    out.prices[good] = new_price
    out.last_update_tau[good] = t
    out.demand_integral[good] = 0.0
    out.demand = MarketDemand(spec)(out.prices)
    event = UpdateEvent(
        time=t,
        good=good,
        old_price=old_price,
        new_price=new_price,
        x_bar=x_bar,
        w_tilde=w_tilde,
        z_bar=z_bar,
        delta_t=dt,
    )
    return out, event


# ---------------------------------------------------------------------------
# full runs
# ---------------------------------------------------------------------------


@dataclass
class SimTrace:
    records: list
    meta: dict
    failure: Optional[dict] = None

    def day_series(self, key: str) -> list:
        return [(r["t"], r[key]) for r in self.records if r["kind"] in ("init", "day", "final")]

    def series(self, key: str) -> list:
        return [(r["t"], r[key]) for r in self.records if r.get(key) is not None]

    def events(self) -> list:
        return [r for r in self.records if r["kind"] == "event"]

    def to_jsonl(self) -> str:
        return "\n".join(json.dumps(r) for r in self.records) + "\n"

    def to_csv(self) -> str:
        n = self.meta["n_goods"]
        scalar_cols = [
            "t", "kind", "good", "old_price", "new_price", "x_bar_i", "w_tilde_i",
            "z_bar", "delta_t", "f", "phi", "misspending",
        ]
        array_cols = [("p", "prices"), ("x", "x"), ("xbar", "x_bar"), ("v", "v"),
                      ("wtilde", "w_tilde"), ("tau", "tau"), ("zone", "zones")]
        header = scalar_cols + [f"{nm}{i}" for nm, _ in array_cols for i in range(n)]
        lines = [",".join(header)]
        for r in self.records:
            row = [
                "" if r.get(c) is None else (r[c] if isinstance(r[c], str) else repr(r[c]))
                for c in scalar_cols
            ]
            for _, key in array_cols:
                vals = r.get(key) or []
                row.extend([repr(v) for v in vals] + [""] * (n - len(vals)))
            lines.append(",".join(row))
        return "\n".join(lines) + "\n"


class _Runner:
    """Shared machinery for ongoing and one-time runs."""

    def __init__(self, spec, params, schedule, p_star, record, ongoing: bool):
        self.spec = spec
        self.params = params
        self.demand = MarketDemand(spec)
        self.n = spec.n_goods
        self.w = np.array(spec.supplies())
        self.chi = np.array(spec.capacities())
        self.vstar = self.chi / 2.0
        self.kappa = kappa_per_good(spec, params)
        self.p_star = None if p_star is None else np.asarray(p_star, dtype=float)
        self.record_mode = record
        self.ongoing = ongoing
        self.sched = _ScheduleState(schedule, self.n)
        self.records: list = []
        self.failure = None

    def snapshot_fields(self, t, p, x, v, tau, integral):
        elapsed = t - tau
        if self.ongoing:
            with np.errstate(invalid="ignore", divide="ignore"):
                x_bar = np.where(elapsed > 0, integral / np.where(elapsed > 0, elapsed, 1.0), x)
            w_tilde = self.w + self.kappa * (v - self.vstar)
            zones = [zone_of(float(vi), float(ci)).index for vi, ci in zip(v, self.chi)]
            v_list = [float(q) for q in v]
            pot = potential(p, x, x_bar, self.w, w_tilde, elapsed, self.params)
        else:
            # no warehouses: the rule sees instantaneous demand, phi reduces
            # to the spending imbalance
            x_bar = x
            w_tilde = self.w
            zones = []
            v_list = []
            pot = potential(p, x, x, self.w, self.w, np.zeros(self.n), self.params)
        mis = misspending(p, x, self.w, w_tilde)
        fv = None if self.p_star is None else f_bound(p, self.p_star)
        return {
            "prices": [float(q) for q in p],
            "x": [float(q) for q in x],
            "x_bar": [float(q) for q in x_bar],
            "v": v_list,
            "w_tilde": [float(q) for q in w_tilde],
            "tau": [float(q) for q in tau],
            "phi": pot.phi,
            "misspending": mis,
            "f": fv,
            "zones": zones,
        }

    def emit(self, kind, t, p, x, v, tau, integral, event: dict = None):
        rec = {"t": float(t), "kind": kind}
        if event:
            rec.update(event)
        rec.update(self.snapshot_fields(t, p, x, v, tau, integral))
        self.records.append(rec)


def run(
    spec: MarketSpec,
    params: ParamSet,
    schedule: Schedule,
    p0,
    v0,
    horizon: float,
    p_star=None,
    record: str = "full",
) -> SimTrace:
    """Ongoing run: warehouses flow continuously, events update prices.

    Emits a record at t=0, at every event (record="full"), and at every
    integer day.  A stock leaving (0, chi) terminates the run with a labeled
    failure record.  Deterministic given all arguments.
    """
    rn = _Runner(spec, params, schedule, p_star, record, ongoing=True)
    p = np.array(p0, dtype=float)
    v = np.array(v0, dtype=float)
    if ((v <= 0) | (v >= rn.chi)).any():
        raise ValueError("initial stocks must lie strictly inside (0, chi)")
    tau = np.zeros(rn.n)
    integral = np.zeros(rn.n)
    x = rn.demand(p)
    t = 0.0
    rn.emit("init", t, p, x, v, tau, integral)

    heap = [(rn.sched.first_time(g), g) for g in range(rn.n)]
    heapq.heapify(heap)
    next_day = 1.0

    while True:
        t_ev = heap[0][0] if heap else math.inf
        target = min(t_ev, next_day, horizon)
        dt = target - t
        if dt > 0:
            v_new = v + (rn.w - x) * dt
            integral += x * dt
            t = target
            bad = (v_new <= 0) | (v_new >= rn.chi)
            if bad.any():
                g = int(np.argmax(bad))
                rn.failure = {"kind": "failure", "t": t, "good": g, "stock": float(v_new[g])}
                rn.records.append(rn.failure)
                break
            v = v_new
        t = target

        if t_ev == target and t_ev <= horizon:
            batch = []
            while heap and heap[0][0] == t_ev:
                batch.append(heapq.heappop(heap))
            for te, g in batch:  # heap pops already ordered by (time, good)
                gap = t - tau[g]
                assert 0 < gap <= 1 + 1e-9, "scheduler deadline violated"
                x_bar = float(integral[g] / gap)
                w_tilde = float(rn.w[g] + rn.kappa[g] * (v[g] - rn.vstar[g]))
                z_bar = x_bar - w_tilde
                old_price = float(p[g])
                new_price = old_price * ongoing_price_factor(
                    z_bar, float(rn.w[g]), params.lambda_, gap, params.rule
                )
                assert new_price > 0, "price update drove a price non-positive"
                p[g] = new_price
                tau[g] = t
                integral[g] = 0.0
                x = rn.demand(p)
                if record == "full":
                    rn.emit(
                        "event", t, p, x, v, tau, integral,
                        event={
                            "good": int(g),
                            "old_price": old_price,
                            "new_price": new_price,
                            "x_bar_i": x_bar,
                            "w_tilde_i": w_tilde,
                            "z_bar": z_bar,
                            "delta_t": gap,
                        },
                    )
                nxt = rn.sched.next_time(g, te)
                if nxt <= horizon:
                    heapq.heappush(heap, (nxt, g))

        if next_day == target:
            rn.emit("day", t, p, x, v, tau, integral)
            next_day += 1.0
        if target >= horizon:
            if horizon > 0 and horizon != math.floor(horizon):
                rn.emit("final", t, p, x, v, tau, integral)
            break

    meta = {
        "scenario": "ongoing",
        "n_goods": rn.n,
        "params": params.to_dict(),
        "schedule": describe_schedule(schedule),
        "horizon": horizon,
        "p_star": None if rn.p_star is None else [float(q) for q in rn.p_star],
    }
    return SimTrace(records=rn.records, meta=meta, failure=rn.failure)


def run_one_time(
    spec: MarketSpec,
    params: ParamSet,
    schedule: Schedule,
    p0,
    horizon: float,
    p_star=None,
    record: str = "full",
    stop_f: float = 0.0,
) -> SimTrace:
    """Run without warehouses: instantaneous excess demand, no dt factor.

    ``stop_f`` > 0 ends the run early at the first day boundary with
    f <= stop_f (requires p_star)."""
    rn = _Runner(spec, params, schedule, p_star, record, ongoing=False)
    p = np.array(p0, dtype=float)
    tau = np.zeros(rn.n)
    integral = np.zeros(rn.n)
    empty = np.zeros(0)
    x = rn.demand(p)
    t = 0.0
    rn.emit("init", t, p, x, empty, tau, integral)

    heap = [(rn.sched.first_time(g), g) for g in range(rn.n)]
    heapq.heapify(heap)
    next_day = 1.0

    while True:
        t_ev = heap[0][0] if heap else math.inf
        target = min(t_ev, next_day, horizon)
        dt = target - t
        if dt > 0:
            integral += x * dt
        t = target

        if t_ev == target and t_ev <= horizon:
            batch = []
            while heap and heap[0][0] == t_ev:
                batch.append(heapq.heappop(heap))
            for te, g in batch:
                gap = t - tau[g]
                old_price = float(p[g])
                new_price = one_time_update(
                    old_price, float(x[g]), float(rn.w[g]), params.lambda_, params.rule
                )
                xg = float(x[g])
                p[g] = new_price
                tau[g] = t
                integral[g] = 0.0
                x = rn.demand(p)
                if record == "full":
                    rn.emit(
                        "event", t, p, x, empty, tau, integral,
                        event={
                            "good": int(g),
                            "old_price": old_price,
                            "new_price": new_price,
                            "x_bar_i": xg,
                            "w_tilde_i": float(rn.w[g]),
                            "z_bar": xg - float(rn.w[g]),
                            "delta_t": gap,
                        },
                    )
                nxt = rn.sched.next_time(g, te)
                if nxt <= horizon:
                    heapq.heappush(heap, (nxt, g))

        if next_day == target:
            rn.emit("day", t, p, x, empty, tau, integral)
            next_day += 1.0
            if stop_f > 0 and rn.records[-1]["f"] is not None and rn.records[-1]["f"] <= stop_f:
                break
        if target >= horizon:
            if horizon > 0 and horizon != math.floor(horizon):
                rn.emit("final", t, p, x, empty, tau, integral)
            break

    meta = {
        "scenario": "onetime",
        "n_goods": rn.n,
        "params": params.to_dict(),
        "schedule": describe_schedule(schedule),
        "horizon": horizon,
        "p_star": None if rn.p_star is None else [float(q) for q in rn.p_star],
    }
    return SimTrace(records=rn.records, meta=meta, failure=None)
