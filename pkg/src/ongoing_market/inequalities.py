"""Scalar inequality oracles backing the convergence certification.

Two families.  The daily-contraction inequalities bound the one-day price
factors produced by the update rule; the spending-change inequalities bound
powers of (1 +/- eps) that control how much spending one price move can
shift.  Each part samples its stated domain densely -- corners first, then
log-spaced interior points, then a seeded uniform fill -- and reports the
worst slack observed.  Slack below -1e-12 (scaled) counts as a violation;
everything here holds with equality only at isolated corners.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class IneqCheck:
    name: str
    domain: str
    samples: int
    worst_slack: float
    violations: int

    @property
    def ok(self) -> bool:
        return self.violations == 0


def _axis_points(lo: float, hi: float, rng, count: int) -> np.ndarray:
    interior = lo + np.geomspace(1e-9 * (hi - lo) + 1e-300, hi - lo, 100)
    fill = rng.uniform(lo, hi, size=max(count - 102, 0))
    return np.concatenate([[lo, hi], interior, fill])


def _pairs(bounds_a, bounds_b, rng, count: int):
    a = _axis_points(*bounds_a, rng, count)
    b = _axis_points(*bounds_b, rng, count)
    rng.shuffle(b)
    # corners of the rectangle always present
    corners_a = np.array([bounds_a[0], bounds_a[0], bounds_a[1], bounds_a[1]])
    corners_b = np.array([bounds_b[0], bounds_b[1], bounds_b[0], bounds_b[1]])
    return np.concatenate([corners_a, a]), np.concatenate([corners_b, b])


def _check(name: str, domain: str, lhs: np.ndarray, rhs: np.ndarray) -> IneqCheck:
    slack = rhs - lhs
    tol = 1e-12 * np.maximum(1.0, np.maximum(np.abs(lhs), np.abs(rhs)))
    return IneqCheck(
        name=name,
        domain=domain,
        samples=len(slack),
        worst_slack=float(np.min(slack)),
        violations=int(np.sum(slack < -tol)),
    )


def daily_contraction_inequalities(samples: int = 10**5, seed: int = 2024) -> list:
    """Bounds used when turning one day of price updates into an f-contraction.

    (a) 1/(1+lam) <= 1 - lam/2                     lam in [0, 1]
    (b) 1 - lam (1 - 1/x) <= x^(-lam / (2 ln 2))   lam in [0, 1], x in [1, 2]
    (c) 1/(1 + lam (x-1)) <= x^(-lam)              same domain
    """
    rng = np.random.default_rng(seed)
    out = []

    lam = _axis_points(0.0, 1.0, rng, samples)
    out.append(_check("one-day-reciprocal", "lam in [0,1]", 1.0 / (1.0 + lam), 1.0 - lam / 2))

    lam, x = _pairs((0.0, 1.0), (1.0, 2.0), rng, samples)
    out.append(
        _check(
            "down-factor-power",
            "lam in [0,1], x in [1,2]",
            1.0 - lam * (1.0 - 1.0 / x),
            x ** (-lam / (2 * np.log(2.0))),
        )
    )
    out.append(
        _check(
            "up-factor-power",
            "lam in [0,1], x in [1,2]",
            1.0 / (1.0 + lam * (x - 1.0)),
            x ** (-lam),
        )
    )
    return out


def spending_change_inequalities(samples: int = 10**5, seed: int = 2025) -> list:
    """Power bounds for the spending moved by a single price step.

    (a) (1+e)^x - 1 <= e x                          e in [0,1], x in [0,1]
    (b) 1 - (1-e)^x <= (1 + e/(2(1-e))) e x         e in [0,1), x in [0,1]
    (c) (1-e)^(1-E) - 1 <= (E-1) e / (1-r),         E >= 1, r = max(E e/2, e) < 1
    (d) 1 - (1+e)^(1-E) <= (E-1) e                  E >= 1, e in [0,1]
    (e) (1-e)^(-x) <= 1 + x e / (1 - e x)           x >= 1, e x < 1
    """
    rng = np.random.default_rng(seed)
    out = []

    e, x = _pairs((0.0, 1.0), (0.0, 1.0), rng, samples)
    out.append(_check("up-power-linear", "e,x in [0,1]", (1.0 + e) ** x - 1.0, e * x))

    e, x = _pairs((0.0, 1.0 - 1e-12), (0.0, 1.0), rng, samples)
    out.append(
        _check(
            "down-power-linear",
            "e in [0,1), x in [0,1]",
            1.0 - (1.0 - e) ** x,
            (1.0 + e / (2.0 * (1.0 - e))) * e * x,
        )
    )

    # (c): dependent domain, e < min(1, 2/E)
    E = _axis_points(1.0, 10.0, rng, samples)
    u = _axis_points(0.0, 1.0 - 1e-9, rng, samples)
    rng.shuffle(u)
    m = min(len(E), len(u))
    E, u = E[:m], u[:m]
    e = u * np.minimum(1.0, 2.0 / E)
    r = np.maximum(E * e / 2.0, e)
    out.append(
        _check(
            "strong-down-power",
            "E in [1,10], max(E e/2, e) < 1",
            (1.0 - e) ** (1.0 - E) - 1.0,
            (E - 1.0) * e / (1.0 - r),
        )
    )

    E, e = _pairs((1.0, 10.0), (0.0, 1.0), rng, samples)
    out.append(
        _check(
            "up-power-elastic",
            "E in [1,10], e in [0,1]",
            1.0 - (1.0 + e) ** (1.0 - E),
            (E - 1.0) * e,
        )
    )

    x = _axis_points(1.0, 10.0, rng, samples)
    u = _axis_points(0.0, 1.0 - 1e-9, rng, samples)
    rng.shuffle(u)
    m = min(len(x), len(u))
    x, u = x[:m], u[:m]
    e = u / x
    out.append(
        _check(
            "inverse-power-ratio",
            "x in [1,10], e x < 1",
            (1.0 - e) ** (-x),
            1.0 + x * e / (1.0 - e * x),
        )
    )
    return out
