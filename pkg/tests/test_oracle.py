import random

import pytest

from anytime_sched.oracle import InstanceTooLarge, brute_force, random_rows
from anytime_sched.planner import plan_is_feasible
from helpers import make_row


def test_single_task():
    rows = [make_row("a", [1, 1], [0.4, 0.7], d_adj=2.0)]
    res = brute_force(rows)
    assert res.reward == pytest.approx(0.7)
    assert res.depths == {"a": 2}


def test_two_task_instance():
    rows = [
        make_row("T1", [1], [0.5], d_adj=1.0),
        make_row("T2", [1, 1], [0.4, 0.8], d_adj=3.0),
    ]
    res = brute_force(rows)
    assert res.reward == pytest.approx(1.3)
    assert res.depths == {"T1": 1, "T2": 2}


def test_only_mandatory_parts_fit():
    rows = [
        make_row("a", [1, 1], [0.3, 0.9], d_adj=1.0),
        make_row("b", [1, 1], [0.2, 0.9], d_adj=2.0),
    ]
    res = brute_force(rows, drop_allowed=False)
    assert res.reward == pytest.approx(0.5)
    assert res.depths == {"a": 1, "b": 1}


def test_nothing_feasible():
    rows = [make_row("a", [2.0], [0.5], d_adj=1.0)]
    res = brute_force(rows, drop_allowed=False)
    assert res.reward == float("-inf") and res.depths == {}


def test_cap():
    rows = [make_row(i, [1] * 4, [0.1, 0.2, 0.3, 0.4], d_adj=100.0) for i in range(6)]
    with pytest.raises(InstanceTooLarge):
        brute_force(rows, cap=1000)


def test_random_rows_shape():
    rng = random.Random(3)
    for _ in range(50):
        rows = random_rows(rng, max_tasks=4, max_stages=3, grid=0.1)
        assert 1 <= len(rows) <= 4
        assert all(1 <= r.adjusted.num_stages <= 3 for r in rows)
        assert [r.deadline for r in rows] == sorted(r.deadline for r in rows)
        for r in rows:
            assert all(abs(v * 10 - round(v * 10)) < 1e-9 for v in r.curve.values)
        assert plan_is_feasible(rows, brute_force(rows).depths, 0.0)
