"""Exhaustive depth assignment for small instances (validation only)."""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass
from typing import Optional, Sequence

from .planner import TIME_EPS, TaskRow
from .task_model import Job, StageProfile, adjust_deadline
from .utility import RewardCurve

DEFAULT_CAP = 10**7


class InstanceTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class OracleResult:
    reward: float
    depths: dict
    examined: int


def _choices(row: TaskRow, drop_allowed: bool) -> list[int]:
    adj = row.adjusted
    c = row.committed
    deeper = list(range(max(c + 1, adj.mandatory), adj.num_stages + 1))
    if drop_allowed or c >= adj.mandatory:
        return [c] + deeper
    return deeper


def brute_force(
    rows: Sequence[TaskRow],
    now: float = 0.0,
    drop_allowed: bool = True,
    cap: int = DEFAULT_CAP,
) -> OracleResult:
    """Best total (unquantized) marginal reward over every EDF-feasible depth vector.

    Ties go to the lexicographically smallest depth vector in deadline order.
    Returns reward ``-inf`` and no assignment when nothing is feasible.
    """
    ordered = sorted(rows, key=lambda r: (r.deadline, str(r.id)))
    choices = [_choices(r, drop_allowed) for r in ordered]
    space = 1
    for c in choices:
        space *= max(1, len(c))
    if space > cap:
        raise InstanceTooLarge(f"{space} depth vectors exceed cap {cap}")

    best_reward = float("-inf")
    best = None
    examined = 0
    for vector in itertools.product(*choices):
        t = now
        ok = True
        reward = 0.0
        for row, d in zip(ordered, vector):
            if d == row.committed:
                continue
            cum = row.adjusted.cum_exec
            t += cum[d] - cum[row.committed]
            if t > row.deadline + TIME_EPS:
                ok = False
                break
            reward += row.curve.at(d) - (row.curve.at(row.committed) if row.committed else 0.0)
        if not ok:
            continue
        examined += 1
        if reward > best_reward:
            best_reward = reward
            best = vector
    depths = {} if best is None else {r.id: d for r, d in zip(ordered, best)}
    return OracleResult(best_reward, depths, examined)


def random_rows(
    rng: random.Random,
    max_tasks: int = 6,
    max_stages: int = 4,
    mandatory: int = 1,
    grid: Optional[float] = None,
) -> list[TaskRow]:
    """Random planning instance at time 0: 1..max_tasks tasks, 1..max_stages
    stages each, random monotone curves in [0, 1], sorted by deadline.

    With ``grid`` every curve value is a multiple of it. Deadlines are drawn so
    that typically some but not all stages fit.
    """
    rows = []
    for i in range(rng.randint(1, max_tasks)):
        n = rng.randint(1, max_stages)
        wcet = [round(rng.uniform(0.5, 2.0), 3) for _ in range(n)]
        if grid is None:
            values = sorted(rng.random() for _ in range(n))
        else:
            steps = round(1.0 / grid)
            values = [k * grid for k in sorted(rng.randint(0, steps) for _ in range(n))]
        stages = tuple(StageProfile(w, v, True) for w, v in zip(wcet, values))
        rel = rng.uniform(0.5, 1.5) * sum(wcet) + max(wcet)
        job = Job(i, 0.0, rel, stages, min(mandatory, n))
        rows.append(TaskRow(adjust_deadline(job), RewardCurve(1, tuple(values))))
    rows.sort(key=lambda r: r.deadline)
    return rows
