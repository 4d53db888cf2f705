import math

import pytest

from ongoing_market import daily_contraction_inequalities, spending_change_inequalities


def test_daily_contraction_hand_values():
    # part (a) at lam = 0.5
    assert 1.0 / 1.5 <= 1.0 - 0.25
    # boundary equality at lam = 0
    assert 1.0 / (1.0 + 0.0) == 1.0 - 0.0
    # part (c) equality at lam = 1, x = 2
    assert 1.0 / (1.0 + 1.0 * (2.0 - 1.0)) == pytest.approx(2.0 ** -1.0, rel=1e-15)


def test_spending_change_hand_values():
    # (a) equality at eps = 1, x = 1
    assert (1 + 1) ** 1 - 1 == 1 * 1
    # (d) E=2, eps=0.5
    assert 1 - 1.5 ** (1 - 2) == pytest.approx(1.0 / 3.0, rel=1e-12)
    assert 1.0 / 3.0 <= (2 - 1) * 0.5
    # (e) x=2, eps=0.25
    assert 0.75 ** -2 == pytest.approx(1.7777777777777777, rel=1e-12)
    assert 0.75 ** -2 <= 1 + 2 * 0.25 / (1 - 0.5)


def test_daily_contraction_sampled_domains_clean():
    checks = daily_contraction_inequalities(samples=20000, seed=11)
    assert len(checks) == 3
    for chk in checks:
        assert chk.ok, (chk.name, chk.worst_slack)
        assert chk.samples >= 20000
        # slack may touch zero at corners but never goes meaningfully negative
        assert chk.worst_slack >= -1e-12


def test_spending_change_sampled_domains_clean():
    checks = spending_change_inequalities(samples=20000, seed=13)
    assert len(checks) == 5
    for chk in checks:
        assert chk.ok, (chk.name, chk.worst_slack)
        assert chk.worst_slack >= -1e-12


def test_checks_are_deterministic_for_fixed_seed():
    a = daily_contraction_inequalities(samples=5000, seed=7)
    b = daily_contraction_inequalities(samples=5000, seed=7)
    assert [c.worst_slack for c in a] == [c.worst_slack for c in b]
