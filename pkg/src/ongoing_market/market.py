"""Static market description: goods with warehouses, buyers with utility trees.

A market couples n goods (daily supply ``w``, warehouse capacity ``chi``) with
m buyers (daily budget ``b``, CES-style utility tree).  Everything here is
immutable once constructed; dynamic state lives in the simulation engine.

Utility trees nest constant-elasticity aggregators.  Each internal node
carries a curvature parameter ``rho < 1``; ``rho == 0`` is stored literally
and means the Cobb-Douglas limit (geometric mean with normalized weights),
never a small-rho approximation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Union


class ConfigError(ValueError):
    """Malformed configuration document; ``locus`` names the offending field."""

    def __init__(self, message: str, locus: str = ""):
        self.locus = locus
        super().__init__(f"{locus}: {message}" if locus else message)


class SpecValidationError(ValueError):
    """A structurally parsable market failed validation; carries the report."""

    def __init__(self, report: "ValidationReport"):
        self.report = report
        super().__init__("invalid market: " + "; ".join(report.violations))


@dataclass(frozen=True)
class Leaf:
    """Terminal node: quantity of one good, weighted inside its parent."""

    good: int
    weight: float


@dataclass(frozen=True)
class Aggregate:
    """CES aggregator over child nodes: (sum_k a_k u_k^rho)^(1/rho), rho < 1."""

    rho: float
    children: tuple
    weight: float = 1.0


UtilityNode = Union[Leaf, Aggregate]


def tree_leaves(node: UtilityNode) -> list:
    """All Leaf nodes below ``node`` in deterministic (left-to-right) order."""
    if isinstance(node, Leaf):
        return [node]
    out = []
    for child in node.children:
        out.extend(tree_leaves(child))
    return out


def tree_depth(node: UtilityNode) -> int:
    """Number of aggregator levels above the deepest leaf (a bare Leaf has 0)."""
    if isinstance(node, Leaf):
        return 0
    return 1 + max(tree_depth(c) for c in node.children)


def leaf_paths(node: UtilityNode, _trail=()) -> dict:
    """Map good id -> tuple of rho values on the path leaf -> root.

    The first entry is the leaf's immediate parent, the last is the root.
    A bare-Leaf tree maps its good to an empty path.
    """
    if isinstance(node, Leaf):
        return {node.good: tuple(_trail)}
    out = {}
    for child in node.children:
        for good, path in leaf_paths(child, (node.rho,) + tuple(_trail)).items():
            out[good] = path
    return out


@dataclass(frozen=True)
class Good:
    id: int
    supply_w: float
    warehouse_capacity_chi: float

    @property
    def ideal_stock_vstar(self) -> float:
        # Ideal stock is pinned at half capacity.
        return self.warehouse_capacity_chi / 2.0

    @property
    def ratio_r(self) -> float:
        return self.warehouse_capacity_chi / self.supply_w


@dataclass(frozen=True)
class Buyer:
    id: int
    budget_b: float
    utility: UtilityNode


@dataclass(frozen=True)
class MarketSpec:
    goods: tuple
    buyers: tuple
    total_money_M: float

    @classmethod
    def build(cls, goods, buyers) -> "MarketSpec":
        return cls(
            goods=tuple(goods),
            buyers=tuple(buyers),
            total_money_M=float(sum(b.budget_b for b in buyers)),
        )

    @property
    def n_goods(self) -> int:
        return len(self.goods)

    @property
    def n_buyers(self) -> int:
        return len(self.buyers)

    def supplies(self) -> list:
        return [g.supply_w for g in self.goods]

    def capacities(self) -> list:
        return [g.warehouse_capacity_chi for g in self.goods]

    def ratios(self) -> list:
        return [g.ratio_r for g in self.goods]

    @property
    def common_ratio_r(self) -> float:
        """Warehouse-days ratio chi/w; the minimum when ratios are unequal."""
        return min(self.ratios())

    def has_equal_ratios(self, rtol: float = 1e-9) -> bool:
        r = self.ratios()
        return (max(r) - min(r)) <= rtol * max(r)


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        """No hard violations (warnings allowed)."""
        return not self.violations

    @property
    def empty(self) -> bool:
        return not self.violations and not self.warnings


def _validate_node(node: UtilityNode, good_ids: set, seen: list, out: ValidationReport, locus: str):
    if isinstance(node, Leaf):
        if node.good not in good_ids:
            out.violations.append(f"{locus}: leaf references unknown good {node.good}")
        if node.good in seen:
            out.violations.append(f"{locus}: good {node.good} referenced more than once")
        seen.append(node.good)
        if not (node.weight > 0 and math.isfinite(node.weight)):
            out.violations.append(f"{locus}: leaf weight must be strictly positive")
        return
    if not node.children:
        out.violations.append(f"{locus}: aggregate has no children")
        return
    if not math.isfinite(node.rho) or node.rho >= 1:
        out.violations.append(f"{locus}: rho must be finite and < 1, got {node.rho}")
    if not (node.weight > 0 and math.isfinite(node.weight)):
        out.violations.append(f"{locus}: aggregate weight must be strictly positive")
    for k, child in enumerate(node.children):
        _validate_node(child, good_ids, seen, out, f"{locus}.children[{k}]")


def validate(spec: MarketSpec) -> ValidationReport:
    """Check every structural invariant; pure, never raises.

    Violations make the spec unusable.  Warnings flag departures from the
    convergence regime (unequal chi/w ratios, root rho outside (-1, 0],
    group rho outside (0, 1) in two-level trees): the simulator still runs,
    but the parameter planner may be infeasible.
    """
    out = ValidationReport()
    good_ids = set()
    for i, g in enumerate(spec.goods):
        if g.id in good_ids:
            out.violations.append(f"goods[{i}]: duplicate good id {g.id}")
        good_ids.add(g.id)
        if not (g.supply_w > 0 and math.isfinite(g.supply_w)):
            out.violations.append(f"goods[{i}]: supply_w must be strictly positive")
        if not (g.warehouse_capacity_chi > 0 and math.isfinite(g.warehouse_capacity_chi)):
            out.violations.append(f"goods[{i}]: warehouse_capacity_chi must be strictly positive")
    if not spec.goods:
        out.violations.append("market has no goods")
    if not spec.buyers:
        out.violations.append("market has no buyers")

    buyer_ids = set()
    for i, b in enumerate(spec.buyers):
        locus = f"buyers[{i}]"
        if b.id in buyer_ids:
            out.violations.append(f"{locus}: duplicate buyer id {b.id}")
        buyer_ids.add(b.id)
        if not (b.budget_b > 0 and math.isfinite(b.budget_b)):
            out.violations.append(f"{locus}: budget_b must be strictly positive")
        seen: list = []
        _validate_node(b.utility, good_ids, seen, out, f"{locus}.utility")
        if not seen:
            out.violations.append(f"{locus}: utility tree has no leaves")

        root = b.utility
        if isinstance(root, Aggregate):
            if not (-1 < root.rho <= 0):
                out.warnings.append(
                    f"{locus}: root rho {root.rho} outside (-1, 0]; convergence regime not guaranteed"
                )
            if tree_depth(root) == 2:
                for k, child in enumerate(root.children):
                    if isinstance(child, Aggregate) and not (0 < child.rho < 1):
                        out.warnings.append(
                            f"{locus}.children[{k}]: group rho {child.rho} outside (0, 1)"
                        )

    if spec.goods:
        money = sum(b.budget_b for b in spec.buyers)
        if spec.total_money_M != money:
            out.violations.append(
                f"total_money_M {spec.total_money_M} != sum of budgets {money}"
            )
        if not spec.has_equal_ratios():
            out.warnings.append(
                "chi/w ratios are unequal; the simulator falls back to per-good kappa "
                "and the rate is controlled by the smallest one"
            )
    return out


# ---------------------------------------------------------------------------
# Configuration documents (JSON).  Schema:
#   {"goods":  [{"id": int, "w": float, "chi": float}, ...],
#    "buyers": [{"id": int, "b": float, "utility": <node>}, ...]}
# where <node> is either {"good": int, "a": float}
# or {"rho": float, "children": [<node>, ...], "a": float (optional, default 1)}.
# ---------------------------------------------------------------------------


def _need(obj: dict, key: str, locus: str):
    if key not in obj:
        raise ConfigError(f"missing required field '{key}'", locus)
    return obj[key]


def _number(obj: dict, key: str, locus: str) -> float:
    val = _need(obj, key, locus)
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"field '{key}' must be a number, got {val!r}", locus)
    return float(val)


def _parse_node(obj, locus: str) -> UtilityNode:
    if not isinstance(obj, dict):
        raise ConfigError("utility node must be an object", locus)
    if "good" in obj:
        return Leaf(good=int(_number(obj, "good", locus)), weight=_number(obj, "a", locus))
    if "rho" in obj:
        children = _need(obj, "children", locus)
        if not isinstance(children, list) or not children:
            raise ConfigError("'children' must be a non-empty array", locus)
        weight = _number(obj, "a", locus) if "a" in obj else 1.0
        parsed = tuple(
            _parse_node(c, f"{locus}.children[{k}]") for k, c in enumerate(children)
        )
        return Aggregate(rho=_number(obj, "rho", locus), children=parsed, weight=weight)
    raise ConfigError("utility node needs either 'good' or 'rho'", locus)


def load_spec(text: str) -> MarketSpec:
    """Parse a configuration document and validate it.

    Raises ConfigError with a field locus on parse problems, and
    SpecValidationError (report attached) when invariants are violated.
    Warning-only departures load fine.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"not valid JSON (line {exc.lineno}, column {exc.colno}): {exc.msg}")
    if not isinstance(doc, dict):
        raise ConfigError("top level must be an object")

    goods = []
    for k, g in enumerate(_need(doc, "goods", "$")):
        locus = f"goods[{k}]"
        if not isinstance(g, dict):
            raise ConfigError("good must be an object", locus)
        goods.append(
            Good(
                id=int(_number(g, "id", locus)),
                supply_w=_number(g, "w", locus),
                warehouse_capacity_chi=_number(g, "chi", locus),
            )
        )
    buyers = []
    for k, b in enumerate(_need(doc, "buyers", "$")):
        locus = f"buyers[{k}]"
        if not isinstance(b, dict):
            raise ConfigError("buyer must be an object", locus)
        buyers.append(
            Buyer(
                id=int(_number(b, "id", locus)),
                budget_b=_number(b, "b", locus),
                utility=_parse_node(_need(b, "utility", locus), f"{locus}.utility"),
            )
        )
    spec = MarketSpec.build(goods, buyers)
    report = validate(spec)
    if not report.ok:
        raise SpecValidationError(report)
    return spec


def load_spec_file(path) -> MarketSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return load_spec(fh.read())


def _node_to_dict(node: UtilityNode, is_root: bool = False):
    if isinstance(node, Leaf):
        return {"good": node.good, "a": node.weight}
    out = {"rho": node.rho, "children": [_node_to_dict(c) for c in node.children]}
    if not is_root or node.weight != 1.0:
        out["a"] = node.weight
    return out


def serialize(spec: MarketSpec) -> str:
    """Inverse of load_spec; round-trips bit-exactly (JSON float repr)."""
    doc = {
        "goods": [
            {"id": g.id, "w": g.supply_w, "chi": g.warehouse_capacity_chi}
            for g in spec.goods
        ],
        "buyers": [
            {"id": b.id, "b": b.budget_b, "utility": _node_to_dict(b.utility, is_root=True)}
            for b in spec.buyers
        ],
    }
    return json.dumps(doc, indent=2)
