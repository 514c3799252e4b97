"""Quantized dynamic-programming depth assignment and greedy runtime repair.

Tasks are ranked by adjusted deadline. Row ``i`` of the table holds, for each
quantized total reward ``r``, the least execution time with which tasks
``1..i`` can collect exactly ``r`` while every selected task still finishes by
its own deadline under EDF. The best plan is read back from the largest
reachable reward of the last row.

Only work that has not happened yet is planned. A task that has already
completed (or started) ``c`` stages contributes marginal reward
``R(l) - R(c)`` for the ``P(l) - P(c)`` additional seconds of depth ``l``;
stopping at ``c`` is its zero-cost "skip".
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field, replace
from typing import Hashable, Optional, Sequence

import numpy as np

from .task_model import AdjustedJob
from .utility import RewardCurve

# Absolute slack on deadline comparisons, absorbs float error in prefix sums.
TIME_EPS = 1e-9
# Relative slack on reward/delta before flooring: 0.7 / 0.1 must give 7.
_QUANT_EPS = 1e-9

SKIP = 0
NONE = -1


class InfeasibleError(RuntimeError):
    """No depth vector satisfies the mandatory parts of every task."""


def quantize(reward: float, delta: float) -> int:
    return math.floor(reward / delta + _QUANT_EPS)


@dataclass(frozen=True)
class TaskRow:
    """Planner view of one task: deadline, stage times, predicted curve and
    the number of stages already committed (finished or on the GPU)."""

    adjusted: AdjustedJob
    curve: RewardCurve
    committed: int = 0

    @property
    def id(self) -> Hashable:
        return self.adjusted.id

    @property
    def deadline(self) -> float:
        return self.adjusted.d_adj

    def reward_at(self, depth: int) -> float:
        if depth == 0:
            return 0.0
        return self.curve.at(depth)

    def options(self) -> list[tuple[int, float, float]]:
        """``(depth, extra_time, marginal_reward)`` for every deeper choice."""
        adj = self.adjusted
        c = self.committed
        base_reward = self.reward_at(c)
        first = max(c + 1, adj.mandatory)
        return [
            (l, adj.cum_exec[l] - adj.cum_exec[c], self.reward_at(l) - base_reward)
            for l in range(first, adj.num_stages + 1)
        ]

    def can_skip(self, drop_allowed: bool) -> bool:
        return drop_allowed or self.committed >= self.adjusted.mandatory


@dataclass
class DpTable:
    """``cost[i][r]`` is P(i+1, r); ``choice[i][r]`` is -1 (no solution),
    0 (task stops at its committed depth) or 1 + option index."""

    delta: float
    now: float
    drop_allowed: bool
    rows: list[TaskRow] = field(default_factory=list)
    cost: list[np.ndarray] = field(default_factory=list)
    choice: list[np.ndarray] = field(default_factory=list)
    options: list[list[tuple[int, float, float]]] = field(default_factory=list)
    quanta: list[list[int]] = field(default_factory=list)
    work: int = 0  # cell updates performed by the last build

    def __len__(self) -> int:
        return len(self.rows)


@dataclass(frozen=True)
class DepthPlan:
    """Target depth per task id. Depth equal to a task's committed depth means
    no further stages; 0 for an unstarted task means dropped."""

    depths: dict
    quantized_reward: int
    predicted_reward: float
    delta: float

    def depth(self, job_id: Hashable) -> int:
        return self.depths.get(job_id, 0)


def _row_bounds(row: TaskRow, delta: float):
    opts = row.options()
    qs = [max(0, quantize(reward, delta)) for _, _, reward in opts]
    return opts, qs


def build_table(
    rows: Sequence[TaskRow],
    delta: float,
    now: float,
    start_rank: int = 1,
    base: Optional[DpTable] = None,
    drop_allowed: bool = True,
) -> DpTable:
    """Fill rows ``start_rank..N`` (1-based) of the table.

    Rows below ``start_rank`` are taken from ``base``, which must have been
    built with the same delta, clock and leading tasks. ``rows`` must be in
    non-decreasing adjusted-deadline order.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    if any(a.deadline > b.deadline for a, b in zip(rows, rows[1:])):
        raise ValueError("rows must be sorted by adjusted deadline")
    keep = max(0, start_rank - 1)
    if base is not None and keep:
        if keep > len(base):
            keep = len(base)
        table = DpTable(
            delta, now, drop_allowed,
            rows=list(base.rows[:keep]),
            cost=list(base.cost[:keep]),
            choice=list(base.choice[:keep]),
            options=list(base.options[:keep]),
            quanta=list(base.quanta[:keep]),
        )
    else:
        keep = 0
        table = DpTable(delta, now, drop_allowed)

    prev = table.cost[-1] if table.cost else np.zeros(1)
    work = 0
    for row in rows[keep:]:
        opts, qs = _row_bounds(row, delta)
        w_prev = len(prev)
        width = w_prev + (max(qs) if qs else 0)
        cur = np.full(width, np.inf)
        ch = np.full(width, NONE, dtype=np.int32)
        if row.can_skip(drop_allowed):
            cur[:w_prev] = prev
            ch[:w_prev] = np.where(np.isfinite(prev), SKIP, NONE)
        limit = row.deadline - now + TIME_EPS
        # options are in increasing depth, strict '<' keeps the shallower choice on ties
        for j, ((_, extra, _), q) in enumerate(zip(opts, qs)):
            cand = np.full(width, np.inf)
            shifted = prev + extra
            cand[q : q + w_prev] = np.where(shifted <= limit, shifted, np.inf)
            better = cand < cur
            cur = np.where(better, cand, cur)
            ch = np.where(better, j + 1, ch)
        work += width * (len(opts) + 1)
        table.rows.append(row)
        table.cost.append(cur)
        table.choice.append(ch)
        table.options.append(opts)
        table.quanta.append(qs)
        prev = cur
    table.work = work
    return table


def extract_plan(table: DpTable) -> DepthPlan:
    if not table.rows:
        return DepthPlan({}, 0, 0.0, table.delta)
    last = table.cost[-1]
    finite = np.flatnonzero(np.isfinite(last))
    if finite.size == 0:
        raise InfeasibleError("no feasible assignment keeps every mandatory part")
    r_best = int(finite[-1])
    r = r_best
    depths = {}
    reward = 0.0
    for i in range(len(table.rows) - 1, -1, -1):
        row = table.rows[i]
        c = int(table.choice[i][r])
        if c == NONE:
            raise AssertionError("broken back-pointer chain")
        if c == SKIP:
            depths[row.id] = row.committed
        else:
            depth, _, marginal = table.options[i][c - 1]
            depths[row.id] = depth
            reward += marginal
            r -= table.quanta[i][c - 1]
    return DepthPlan(depths, r_best, reward, table.delta)


def feasible_reward_cap(rows: Sequence[TaskRow], now: float) -> float:
    """Largest single-task marginal reward that fits by itself."""
    best = 0.0
    for row in rows:
        for _, extra, reward in row.options():
            if now + extra <= row.deadline + TIME_EPS:
                best = max(best, reward)
    return best


def choose_delta(epsilon: float, rows: Sequence[TaskRow], now: float = 0.0) -> float:
    """Quantum giving a (1 - epsilon) guarantee: epsilon * R / N.

    R only counts options that fit on their own; an option that can never be
    scheduled cannot be part of any solution, and ignoring it keeps OPT >= R.
    """
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    if not rows:
        raise ValueError("need at least one task")
    cap = feasible_reward_cap(rows, now)
    if cap <= 0:
        cap = 1.0
    return epsilon * cap / len(rows)


def plan_is_feasible(rows: Sequence[TaskRow], depths: dict, now: float) -> bool:
    """Run the plan in deadline order and check every selected task's finish."""
    t = now
    for row in sorted(rows, key=lambda r: r.deadline):
        d = depths.get(row.id, row.committed)
        if d > row.committed:
            adj = row.adjusted
            t += adj.cum_exec[d] - adj.cum_exec[row.committed]
            if t > row.deadline + TIME_EPS:
                return False
    return True


def plan_reward(rows: Sequence[TaskRow], depths: dict) -> float:
    total = 0.0
    for row in rows:
        d = depths.get(row.id, row.committed)
        if d > row.committed:
            total += row.reward_at(d) - row.reward_at(row.committed)
    return total


def greedy_reassign(
    plan: DepthPlan,
    rows: Sequence[TaskRow],
    current: Hashable,
    old_curve: RewardCurve,
    now: float,
) -> DepthPlan:
    """Hand the unfinished stages of the current task to a better task.

    ``rows`` reflect the state after the completed stage: the current task's
    ``committed`` is its finished depth and its curve is the fresh prediction.
    """
    by_id = {row.id: row for row in rows}
    head = by_id[current]
    l_done = head.committed
    l_target = plan.depth(current)
    if l_target <= l_done:
        return plan
    # Value of the still-planned stages, before and after the new observation.
    loss = head.curve.at(l_target) - head.curve.at(l_done)
    if loss >= old_curve.at(l_target) - old_curve.at(l_done):
        return plan

    cum = head.adjusted.cum_exec
    budget = cum[l_target] - cum[l_done]

    best = None
    best_gain = -math.inf
    for row in sorted(rows, key=lambda r: r.deadline):
        if row.id == current:
            continue
        adj = row.adjusted
        base = max(plan.depth(row.id), row.committed)
        first = max(base + 1, adj.mandatory)
        for l in range(first, adj.num_stages + 1):
            extra = adj.cum_exec[l] - adj.cum_exec[base]
            if extra > budget + TIME_EPS:
                break
            gain = row.reward_at(l) - row.reward_at(base)
            if gain <= best_gain:
                continue
            trial = dict(plan.depths)
            trial[current] = l_done
            trial[row.id] = l
            if plan_is_feasible(rows, trial, now):
                best, best_gain = trial, gain

    if best is None or best_gain <= loss:
        return plan
    q = sum(
        quantize(by_id[i].reward_at(d) - by_id[i].reward_at(by_id[i].committed), plan.delta)
        for i, d in best.items()
        if i in by_id and d > by_id[i].committed
    )
    return replace(
        plan,
        depths=best,
        quantized_reward=q,
        predicted_reward=plan_reward(rows, best),
    )


class PlannerState:
    """Deadline-ordered task set with a cached table.

    The table stays valid across arrivals that happen at the same planning
    instant; any stage completion or clock change invalidates it.
    """

    def __init__(self, delta: float = 0.1, epsilon: Optional[float] = None,
                 drop_allowed: bool = True):
        if epsilon is None and delta <= 0:
            raise ValueError("delta must be positive")
        self.delta = delta
        self.epsilon = epsilon
        self.drop_allowed = drop_allowed
        self.rows: list[TaskRow] = []
        self._keys: list[tuple] = []
        self._seq = 0
        self.table: Optional[DpTable] = None
        self._valid = 0
        self.plan = DepthPlan({}, 0, 0.0, delta)
        self.last_work = 0
        self.rebuilt_from = 0

    def __len__(self) -> int:
        return len(self.rows)

    def __contains__(self, job_id) -> bool:
        return any(r.id == job_id for r in self.rows)

    def index(self, job_id) -> int:
        for i, r in enumerate(self.rows):
            if r.id == job_id:
                return i
        raise KeyError(job_id)

    def insert(self, row: TaskRow) -> int:
        """Add a task; returns its 1-based rank."""
        key = (row.deadline, self._seq)
        self._seq += 1
        k = bisect.bisect_right(self._keys, key)
        self._keys.insert(k, key)
        self.rows.insert(k, row)
        self._valid = min(self._valid, k)
        return k + 1

    def update(self, row: TaskRow) -> None:
        i = self.index(row.id)
        self.rows[i] = row
        self._valid = min(self._valid, i)

    def remove(self, job_id) -> None:
        i = self.index(job_id)
        del self.rows[i]
        del self._keys[i]
        self._valid = min(self._valid, i)
        self.plan.depths.pop(job_id, None)

    def invalidate(self) -> None:
        self._valid = 0

    def replan(self, now: float) -> DepthPlan:
        delta = self.delta
        if self.epsilon is not None and self.rows:
            delta = choose_delta(self.epsilon, self.rows, now)
        base = self.table
        if base is None or base.now != now or base.delta != delta:
            self._valid = 0
        start = self._valid + 1
        self.rebuilt_from = start
        self.table = build_table(self.rows, delta, now, start, base, self.drop_allowed)
        self._valid = len(self.rows)
        self.last_work = self.table.work
        self.plan = extract_plan(self.table)
        return self.plan

    def reassign(self, current, old_curve: RewardCurve, now: float) -> DepthPlan:
        self.plan = greedy_reassign(self.plan, self.rows, current, old_curve, now)
        self.last_work = len(self.rows) * 4
        return self.plan
