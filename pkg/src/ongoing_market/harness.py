"""Experiment pipeline shared by the CLI and the acceptance suite.

One run goes: load market -> closed-form constants -> plan parameters ->
solve equilibrium -> draw initial prices -> simulate -> certify the trace in
memory -> summarize.  Every artifact (trace, run metadata, certification,
summary) serializes to JSON; traces replay byte-identically for a fixed
seed because nothing here consults wall-clock time or global RNG state.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from . import engine, lyapunov
from .elasticity import MarketConstants, closed_form_constants
from .equilibrium import f_bound, solve_equilibrium
from .market import MarketSpec, load_spec_file
from .planner import (
    LINEAR,
    InfeasiblePlanError,
    ParamSet,
    market_kind,
    phase_two_bound,
    plan_market,
    update_monotonicity_conditions,
    warehouse_sizing,
)


def lambda_cap_for_transfer(constants: MarketConstants) -> float:
    """Largest step size used when inflating the spending-transfer constant.

    The transfer constant depends on lambda, which the planner has not chosen
    yet; one conservative pass evaluates it at the rule's own lambda cap.
    """
    if market_kind(constants) == "complements":
        return 3.0 / 7.0
    return min(1.0 / (8.0 * constants.E - 6.0), 0.5)


def prepare_market(spec: MarketSpec, rule: str = LINEAR, kind: str = ""):
    """(constants, kind) with the transfer constant at its planning cap."""
    base = closed_form_constants(spec, 0.0)
    kind = kind or market_kind(base)
    constants = closed_form_constants(spec, lambda_cap_for_transfer(base))
    return constants, kind


def plan_report(spec: MarketSpec, rule: str = LINEAR, f_init: float = 2.0, safety: float = 4.0) -> dict:
    """Full planning report; raises InfeasiblePlanError with a certificate."""
    constants, kind = prepare_market(spec, rule)
    params = plan_market(constants, spec.common_ratio_r, rule, kind)
    conds = update_monotonicity_conditions(constants, params, kind)
    sizing = warehouse_sizing(constants, params, f_init, kind, safety)
    return {
        "kind": kind,
        "constants": constants.to_dict(),
        "params": params.to_dict(),
        "conditions": conds.to_dict()["conditions"],
        "sizing": sizing.to_dict(),
        "f_two": phase_two_bound(constants, params, kind),
    }


def initial_prices(p_star, f_init: float, seed: int) -> np.ndarray:
    """p0_i = p*_i f_init^(u_i), u uniform on [-1, 1], one good pinned at +-1.

    The pin makes the initial distance exactly f_init.
    """
    p_star = np.asarray(p_star, dtype=float)
    if f_init < 1.0:
        raise ValueError("f_init must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x1CE5]))
    u = rng.uniform(-1.0, 1.0, size=len(p_star))
    pin = int(rng.integers(len(p_star)))
    u[pin] = 1.0 if rng.integers(2) else -1.0
    return p_star * f_init**u


@dataclass
class RunConfig:
    scenario: str = "ongoing"            # "ongoing" | "onetime"
    rule: str = LINEAR
    scheduler: str = "sync"              # "sync" | "staggered" | "random"
    seed: int = 0
    days: float = 10.0
    f_init: float = 2.0
    etas: tuple = (0.1,)
    mean_gap: float = 0.5
    offsets: tuple = ()
    v_init_frac: float = 0.5
    price_multipliers: tuple = ()        # overrides the seeded draw when set
    safety: float = 4.0
    record: str = "full"

    def schedule(self, n: int) -> engine.Schedule:
        if self.scheduler == "sync":
            return engine.Synchronous()
        if self.scheduler == "staggered":
            offs = self.offsets or tuple(i / n for i in range(n))
            return engine.Staggered(offsets=tuple(offs))
        return engine.RandomWithDeadline(seed=self.seed, mean_gap=self.mean_gap)


@dataclass
class RunArtifacts:
    trace: engine.SimTrace
    meta: dict
    certification: dict
    summary: dict

    @property
    def exit_code(self) -> int:
        if self.trace.failure is not None:
            return 1
        if not self.certification.get("clean", False):
            return 3
        return 0


def execute_run(spec: MarketSpec, config: RunConfig) -> RunArtifacts:
    constants, kind = prepare_market(spec, config.rule)
    params = plan_market(constants, spec.common_ratio_r, config.rule, kind)
    eq = solve_equilibrium(spec)
    p_star = eq.p_star

    if config.price_multipliers:
        p0 = p_star * np.asarray(config.price_multipliers, dtype=float)
        f_init = f_bound(p0, p_star)
    else:
        p0 = initial_prices(p_star, config.f_init, config.seed)
        f_init = config.f_init

    schedule = config.schedule(spec.n_goods)
    if config.scenario == "ongoing":
        v0 = np.array(spec.capacities()) * config.v_init_frac
        trace = engine.run(
            spec, params, schedule, p0, v0, config.days, p_star=p_star, record=config.record
        )
        cert = lyapunov.certify_trace(spec, params, constants, p_star, trace.records, kind)
    else:
        trace = engine.run_one_time(
            spec, params, schedule, p0, config.days, p_star=p_star, record=config.record
        )
        cert = lyapunov.certify_one_time_trace(spec, params, constants, p_star, trace.records)

    meta = {
        "scenario": config.scenario,
        "kind": kind,
        "seed": config.seed,
        "days": config.days,
        "f_init": f_init,
        "etas": list(config.etas),
        "constants": constants.to_dict(),
        "params": params.to_dict(),
        "p_star": [float(q) for q in p_star],
        "equilibrium_method": eq.method,
        "schedule": engine.describe_schedule(schedule),
        "v_init_frac": config.v_init_frac,
    }
    summary = summarize_run(spec, trace, params, constants, p_star, kind, config.etas, cert)
    return RunArtifacts(trace=trace, meta=meta, certification=cert.to_dict(), summary=summary)


def summarize_run(spec, trace, params: ParamSet, constants, p_star, kind, etas, cert) -> dict:
    f_two = phase_two_bound(constants, params, kind)
    f_steps = trace.series("f")
    horizon = trace.records[-1]["t"]
    phases = lyapunov.phase_tracker(f_steps, horizon, f_two, etas)

    decay = None
    zone_extremes = None
    if trace.meta["scenario"] == "ongoing":
        rate = min(lyapunov.decay_rates(params.kappa, params.c2))
        if phases.entry_time is not None:
            decay_chk = lyapunov.check_phase2_decay(trace.series("phi"), phases.entry_time, rate)
            decay = {
                "bound_rate": rate,
                "fitted_rate": decay_chk.fitted_rate,
                "worst_ratio": decay_chk.worst_ratio,
                "ok": decay_chk.ok,
            }
        zones = [r["zones"] for r in trace.records if r.get("zones")]
        if zones:
            arr = np.array(zones)
            zone_extremes = {"min": arr.min(axis=0).tolist(), "max": arr.max(axis=0).tolist()}

    # observed days to each eta target against the planning-time duration bound
    w = np.array(spec.supplies())
    duration_audit = {}
    f_init = max(v for _, v in f_steps[:1]) if f_steps else 1.0
    for eta, t_hit in phases.eta_times.items():
        bound = (
            math.log(max(f_init, 1.0 + 1e-12)) / params.lambda_
            + math.log(1.0 / params.delta) / (params.lambda_ * constants.beta)
            + math.log(spec.total_money_M / (eta * float(np.min(w * p_star)))) / params.kappa
        )
        duration_audit[str(eta)] = {
            "days": t_hit,
            "bound": bound,
            "ratio": None if t_hit is None else t_hit / bound,
        }

    return {
        "scenario": trace.meta["scenario"],
        "seed": trace.meta["schedule"].get("seed"),
        "failure": trace.failure,
        "max_f": phases.max_f,
        "f_two": f_two,
        "phase2_entry": phases.entry_time,
        "eta_days": {str(k): v for k, v in phases.eta_times.items()},
        "decay": decay,
        "zone_extremes": zone_extremes,
        "duration_audit": duration_audit,
        "events": sum(1 for r in trace.records if r["kind"] == "event"),
        "certification": {
            "clean": cert.clean,
            "violations": len(cert.violations),
            "mismatches": len(cert.mismatches),
            "condition_not_met": len(cert.condition_not_met),
            "events_checked": cert.events_checked,
            "derivative_points_checked": cert.derivative_points_checked,
        },
    }


# ---------------------------------------------------------------------------
# artifact I/O
# ---------------------------------------------------------------------------


def _atomic_write(path: str, text: str):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_artifacts(artifacts: RunArtifacts, out_dir: str, fmt: str = "jsonl"):
    paths = {
        "trace": os.path.join(out_dir, "trace.jsonl"),
        "meta": os.path.join(out_dir, "run_meta.json"),
        "certification": os.path.join(out_dir, "certification.json"),
        "summary": os.path.join(out_dir, "summary.json"),
    }
    _atomic_write(paths["trace"], artifacts.trace.to_jsonl())
    if fmt == "csv":
        paths["trace_csv"] = os.path.join(out_dir, "trace.csv")
        _atomic_write(paths["trace_csv"], artifacts.trace.to_csv())
    _atomic_write(paths["meta"], json.dumps(artifacts.meta, indent=2))
    _atomic_write(paths["certification"], json.dumps(artifacts.certification, indent=2))
    _atomic_write(paths["summary"], json.dumps(artifacts.summary, indent=2))
    return paths


def aggregate_summaries(summaries: list) -> dict:
    """Cross-seed quantiles of the headline per-run numbers."""

    def quantiles(values):
        vals = [v for v in values if v is not None]
        if not vals:
            return None
        arr = np.array(vals, dtype=float)
        return {
            "min": float(arr.min()),
            "p25": float(np.percentile(arr, 25)),
            "median": float(np.percentile(arr, 50)),
            "p75": float(np.percentile(arr, 75)),
            "max": float(arr.max()),
        }

    return {
        "runs": len(summaries),
        "failures": sum(1 for s in summaries if s["failure"] is not None),
        "violations": sum(s["certification"]["violations"] for s in summaries),
        "phase2_entry": quantiles([s["phase2_entry"] for s in summaries]),
        "max_f": quantiles([s["max_f"] for s in summaries]),
        "decay_fitted_rate": quantiles(
            [s["decay"]["fitted_rate"] for s in summaries if s.get("decay")]
        ),
    }


def certify_stored(trace_path: str, market_path: str, meta_path: str) -> dict:
    """Offline re-check of a stored trace against its market and parameters."""
    spec = load_spec_file(market_path)
    with open(meta_path, "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    params = ParamSet.from_dict(meta["params"])
    constants = MarketConstants.from_dict(meta["constants"])
    p_star = np.array(meta["p_star"], dtype=float)
    records = []
    with open(trace_path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    if meta["scenario"] == "ongoing":
        report = lyapunov.certify_trace(
            spec, params, constants, p_star, records, meta.get("kind", "")
        )
    else:
        report = lyapunov.certify_one_time_trace(spec, params, constants, p_star, records)
    return report.to_dict()
