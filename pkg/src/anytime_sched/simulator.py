"""Trace-driven simulation of one non-preemptive GPU serving staged inference.

The scheduler runs on arrivals and stage completions. A stage, once on the
GPU, runs for its full time. Scheduling work is charged to a serial CPU
timeline that gates the next dispatch.
"""

from __future__ import annotations

import heapq
import logging
import random
import time
from dataclasses import dataclass, field, replace
from enum import Enum, IntEnum
from typing import Hashable, Iterable, Optional, Union

from .planner import TIME_EPS, InfeasibleError, PlannerState, TaskRow
from .task_model import AdjustedJob, Job, adjust_deadline
from .utility import RewardCurve, UtilityModel, predict_curve, prior_curve
from .workload import Workload

log = logging.getLogger(__name__)


class PolicyKind(str, Enum):
    PLANNER = "planner"
    EDF = "edf"
    LCF = "lcf"
    RR = "rr"


@dataclass(frozen=True)
class Policy:
    kind: PolicyKind
    utility: UtilityModel = UtilityModel.EXP
    delta: float = 0.1
    epsilon: Optional[float] = None
    drop_allowed: bool = True

    @classmethod
    def parse(cls, name: str, **kw) -> "Policy":
        """``planner-exp``, ``planner-max``, ``planner-lin``, ``planner-oracle``,
        ``edf``, ``lcf`` or ``rr``."""
        name = name.strip().lower()
        if name.startswith("planner-"):
            return cls(PolicyKind.PLANNER, UtilityModel(name.split("-", 1)[1]), **kw)
        return cls(PolicyKind(name))

    @property
    def name(self) -> str:
        if self.kind is PolicyKind.PLANNER:
            return f"planner-{self.utility.value}"
        return self.kind.value


POLICY_NAMES = (
    "planner-exp", "planner-max", "planner-lin", "planner-oracle", "edf", "lcf", "rr",
)


@dataclass(frozen=True)
class SimConfig:
    """``overhead`` picks how scheduler compute time enters the timeline:
    ``none``; ``modeled`` (``cost_per_call`` per invocation plus
    ``cost_per_cell`` per DP cell update, deterministic); ``measured``
    (wall clock of planner calls times ``measured_scale``)."""

    cpu_overhead: float = 0.0
    prior: Optional[float] = None
    num_classes: int = 10
    overhead: str = "modeled"
    cost_per_call: float = 2e-6
    cost_per_cell: float = 2e-8
    measured_scale: float = 1.0
    jitter: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.overhead not in ("none", "modeled", "measured"):
            raise ValueError(f"unknown overhead mode {self.overhead!r}")
        if not 0.0 <= self.jitter < 1.0:
            raise ValueError("jitter must lie in [0, 1)")


class EventKind(IntEnum):
    # value order is the tie-break order at equal timestamps
    ARRIVAL = 0
    STAGE_COMPLETE = 1
    EXPIRE = 2


@dataclass(order=True, frozen=True)
class SimEvent:
    time: float
    kind: EventKind
    job_id: int
    seq: int
    payload: object = field(default=None, compare=False)


@dataclass(frozen=True)
class StageRecord:
    job_id: Hashable
    depth: int
    start: float
    end: float
    planned: bool


@dataclass(frozen=True)
class JobOutcome:
    job_id: Hashable
    depth_executed: int
    finished_by_deadline: bool
    final_correct: bool
    missed: bool
    final_confidence: float
    retired_at: float


@dataclass
class SimReport:
    policy: str
    accuracy: float
    accuracy_served: float
    miss_rate: float
    mean_depth: float
    mean_confidence: float
    scheduler_overhead_fraction: float
    scheduler_time: float
    gpu_busy_time: float
    outcomes: list[JobOutcome]
    stages: list[StageRecord]
    adjusted_deadlines: dict

    @property
    def n_jobs(self) -> int:
        return len(self.outcomes)

    def summary(self) -> dict:
        return {
            "policy": self.policy,
            "jobs": self.n_jobs,
            "accuracy": self.accuracy,
            "accuracy_served": self.accuracy_served,
            "miss_rate": self.miss_rate,
            "mean_depth": self.mean_depth,
            "mean_confidence": self.mean_confidence,
            "overhead_fraction": self.scheduler_overhead_fraction,
        }


@dataclass
class LiveJob:
    job: Job
    adj: AdjustedJob
    seq: int
    done: int = 0
    finished_in_time: int = 0
    running: bool = False
    expired: bool = False
    target: int = 0
    curve: Optional[RewardCurve] = None

    @property
    def confidence(self) -> float:
        return self.job.stages[self.done - 1].confidence if self.done else -1.0

    @property
    def committed(self) -> int:
        return self.done + (1 if self.running else 0)


class Simulator:
    def __init__(self, policy: Policy, config: SimConfig = SimConfig()):
        self.policy = policy
        self.config = config
        self.prior = config.prior if config.prior is not None else 1.0 / config.num_classes
        self.clock = 0.0
        self.gpu_free_at = 0.0
        self.cpu_free_at = 0.0
        self.running: Optional[Hashable] = None
        self.live: dict[Hashable, LiveJob] = {}
        self.outcomes: list[JobOutcome] = []
        self.stage_log: list[StageRecord] = []
        self.adjusted: dict = {}
        self.scheduler_time = 0.0
        self.gpu_busy = 0.0
        self.last_served = -1
        self._seq = 0
        self._events: list[SimEvent] = []
        self._ev_seq = 0
        self._rng = random.Random(config.seed)
        self._retire_hook = None
        self._last_cost = 0.0
        self.planner: Optional[PlannerState] = None
        if policy.kind is PolicyKind.PLANNER:
            self.planner = PlannerState(policy.delta, policy.epsilon, policy.drop_allowed)

    # -- event plumbing -------------------------------------------------

    def push(self, t: float, kind: EventKind, job_id, payload=None) -> None:
        self._ev_seq += 1
        heapq.heappush(self._events, SimEvent(t, kind, job_id, self._ev_seq, payload))

    def _charge(self, cost: float) -> None:
        if cost <= 0:
            return
        self.cpu_free_at = max(self.cpu_free_at, self.clock) + cost
        self.scheduler_time += cost

    def _planner_cost(self, work: int, elapsed: float) -> float:
        cfg = self.config
        if cfg.overhead == "modeled":
            return cfg.cost_per_call + cfg.cost_per_cell * work
        if cfg.overhead == "measured":
            return elapsed * cfg.measured_scale
        return 0.0

    def _baseline_cost(self) -> float:
        return self.config.cost_per_call if self.config.overhead == "modeled" else 0.0

    # -- planner helpers ------------------------------------------------

    def _curve_for(self, lj: LiveJob) -> RewardCurve:
        model = self.policy.utility
        trace = lj.job.confidences if model is UtilityModel.ORACLE else None
        if lj.done == 0:
            return prior_curve(model, lj.adj, self.prior, trace)
        return predict_curve(model, lj.confidence, lj.done, lj.adj, trace)

    def _row(self, lj: LiveJob) -> TaskRow:
        # Each stage dispatch tends to follow a scheduler call, so the planner
        # sees every stage as longer by the latest call's cost.
        adj = lj.adj
        pad = self._last_cost
        if pad > 0:
            adj = replace(adj, cum_exec=tuple(c + i * pad for i, c in enumerate(adj.cum_exec)))
        return TaskRow(adj, lj.curve, lj.committed)

    def _plan_now(self) -> float:
        return max(self.clock, self.gpu_free_at, self.cpu_free_at)

    def _replan(self) -> None:
        # plan for when the GPU can next be handed out, counting this call's
        # own cost (estimated by the previous call's)
        t0 = time.perf_counter()
        try:
            plan = self.planner.replan(self._plan_now() + self._last_cost)
        except InfeasibleError:
            log.debug("mandatory parts infeasible at t=%.6f; dropping to committed depths",
                      self.clock)
            plan = None
        elapsed = time.perf_counter() - t0
        self._last_cost = self._planner_cost(self.planner.last_work, elapsed)
        self._charge(self._last_cost)
        for jid, lj in self.live.items():
            lj.target = plan.depth(jid) if plan is not None else lj.committed
            lj.target = max(lj.target, lj.committed)

    # -- events ---------------------------------------------------------

    def on_arrival(self, job: Job) -> None:
        adj = adjust_deadline(job, self.config.cpu_overhead)
        self.adjusted[job.id] = adj.d_adj
        lj = LiveJob(job, adj, self._seq)
        self._seq += 1
        self.live[job.id] = lj
        self.push(max(job.arrival, adj.d_adj), EventKind.EXPIRE, job.id)
        if self.planner is None:
            lj.target = job.num_stages
            self._charge(self._baseline_cost())
            return
        lj.curve = self._curve_for(lj)
        self.planner.insert(self._row(lj))
        self._replan()

    def on_stage_complete(self, job_id, confidence: float) -> None:
        lj = self.live[job_id]
        lj.running = False
        lj.done += 1
        if self.clock <= lj.job.deadline + TIME_EPS:
            lj.finished_in_time = lj.done
        if self.planner is None:
            self._charge(self._baseline_cost())
        if lj.expired or lj.done >= lj.job.num_stages or lj.done >= lj.target:
            self.retire(job_id)
            self._after_planner_change()
            return
        if self.planner is None:
            return
        old_curve = lj.curve
        lj.curve = self._curve_for(lj)
        self.planner.update(self._row(lj))
        t0 = time.perf_counter()
        plan = self.planner.reassign(job_id, old_curve, self.clock)
        elapsed = time.perf_counter() - t0
        self._charge(self._planner_cost(self.planner.last_work, elapsed))
        for jid, other in self.live.items():
            other.target = max(plan.depth(jid), other.committed)
        if lj.done >= lj.target:
            self.retire(job_id)
        self._after_planner_change()

    def _after_planner_change(self) -> None:
        """Replan when the GPU would idle although some live job still has a
        stage that fits."""
        if self.planner is None or self.running is not None or not self.live:
            return
        if any(self._dispatchable(lj, self._plan_now()) for lj in self.live.values()):
            return
        now = self._plan_now()
        if any(
            lj.done < lj.job.num_stages
            and now + lj.job.stages[lj.done].wcet <= lj.adj.d_adj + TIME_EPS
            for lj in self.live.values()
        ):
            self._replan()

    def on_expire(self, job_id) -> None:
        lj = self.live.get(job_id)
        if lj is None:
            return
        if lj.running:
            lj.expired = True
            return
        self.retire(job_id)
        self._after_planner_change()

    def retire(self, job_id) -> None:
        lj = self.live.pop(job_id)
        if self.planner is not None and job_id in self.planner:
            self.planner.remove(job_id)
        depth = lj.finished_in_time
        stage = lj.job.stages[depth - 1] if depth else None
        self.outcomes.append(
            JobOutcome(
                job_id,
                depth,
                depth >= 1 and depth >= lj.target,
                bool(stage and stage.correct),
                depth == 0,
                stage.confidence if stage else 0.0,
                self.clock,
            )
        )
        if self._retire_hook is not None:
            self._retire_hook(lj.job, self.clock)

    # -- dispatch -------------------------------------------------------

    def _dispatchable(self, lj: LiveJob, start: float) -> bool:
        if lj.running or lj.expired or lj.done >= lj.job.num_stages or lj.done >= lj.target:
            return False
        if self.policy.kind is PolicyKind.PLANNER:
            return start + lj.job.stages[lj.done].wcet <= lj.adj.d_adj + TIME_EPS
        return start <= lj.adj.d_adj + TIME_EPS

    def pick_next(self, now: float) -> Optional[Hashable]:
        ready = [lj for lj in self.live.values() if self._dispatchable(lj, now)]
        if not ready:
            return None
        kind = self.policy.kind
        if kind in (PolicyKind.EDF, PolicyKind.PLANNER):
            best = min(ready, key=lambda lj: (lj.adj.d_adj, lj.seq))
        elif kind is PolicyKind.LCF:
            best = min(ready, key=lambda lj: (lj.confidence, lj.adj.d_adj, lj.seq))
        else:
            after = [lj for lj in ready if lj.seq > self.last_served]
            best = min(after or ready, key=lambda lj: lj.seq)
        return best.job.id

    def _truncate_stale_plans(self, now: float) -> None:
        """Planned stages that no longer fit (scheduler delay) are given up."""
        if self.planner is None:
            return
        for jid in list(self.live):
            lj = self.live[jid]
            if lj.running or lj.done >= lj.target:
                continue
            if now + lj.job.stages[lj.done].wcet > lj.adj.d_adj + TIME_EPS:
                lj.target = lj.done
                if lj.done >= 1:
                    self.retire(jid)

    def maybe_dispatch(self) -> None:
        if self.running is not None or not self.live:
            return
        start = max(self.clock, self.cpu_free_at)
        self._truncate_stale_plans(start)
        jid = self.pick_next(start)
        if jid is None:
            return
        lj = self.live[jid]
        stage = lj.job.stages[lj.done]
        dur = stage.wcet
        if self.config.jitter:
            dur *= 1.0 - self.config.jitter * self._rng.random()
        lj.running = True
        self.running = jid
        self.last_served = lj.seq
        end = start + dur
        self.gpu_free_at = end
        self.gpu_busy += dur
        self.stage_log.append(
            StageRecord(jid, lj.done + 1, start, end, self.planner is not None)
        )
        if self.planner is not None:
            self.planner.update(self._row(lj))
        self.push(end, EventKind.STAGE_COMPLETE, jid, stage.confidence)

    # -- main loop ------------------------------------------------------

    def process(self, ev: SimEvent) -> None:
        self.clock = ev.time
        if ev.kind is EventKind.ARRIVAL:
            self.on_arrival(ev.payload)
        elif ev.kind is EventKind.STAGE_COMPLETE:
            self.running = None
            self.on_stage_complete(ev.job_id, ev.payload)
        else:
            self.on_expire(ev.job_id)
        # simultaneous events are all seen before the GPU is handed out
        if not self._events or self._events[0].time > self.clock:
            self.maybe_dispatch()

    def run_events(self) -> None:
        while self._events:
            self.process(heapq.heappop(self._events))

    def report(self) -> SimReport:
        n = len(self.outcomes)
        outcomes = sorted(self.outcomes, key=lambda o: o.job_id)
        if n == 0:
            acc = served = 1.0
            miss = depth = conf = 0.0
        else:
            correct = sum(o.final_correct for o in outcomes)
            missed = sum(o.missed for o in outcomes)
            acc = correct / n
            served = correct / (n - missed) if n > missed else 0.0
            miss = missed / n
            depth = sum(o.depth_executed for o in outcomes) / n
            conf = sum(o.final_confidence for o in outcomes) / n
        total = self.scheduler_time + self.gpu_busy
        frac = self.scheduler_time / total if total > 0 else 0.0
        return SimReport(
            self.policy.name, acc, served, miss, depth, conf, frac,
            self.scheduler_time, self.gpu_busy, outcomes, self.stage_log,
            dict(self.adjusted),
        )


def run(
    workload: Union[Workload, Iterable[Job]],
    policy: Policy,
    config: SimConfig = SimConfig(),
) -> SimReport:
    """Simulate a workload to completion under one policy.

    A ``Workload`` in closed-loop mode issues each client's next request when
    the previous one is answered; any other input is a fixed, arrival-sorted
    job stream.
    """
    if isinstance(workload, Workload):
        if config.prior is None:
            config = replace(config, num_classes=workload.library.num_classes)
        sim = Simulator(policy, config)
        if workload.arrivals is None:
            queues = [list(reversed(q)) for q in workload.per_client()]
            think = workload.spec.think_time
            client_of = {r.id: r.client for r in workload.requests}

            def next_request(job: Job, t: float) -> None:
                q = queues[client_of[job.id]]
                if q:
                    req = q.pop()
                    nxt = workload.make_job(req, t + think)
                    sim.push(nxt.arrival, EventKind.ARRIVAL, nxt.id, nxt)

            sim._retire_hook = next_request
            for c, q in enumerate(queues):
                if q:
                    job = workload.make_job(q.pop(), workload.start[c])
                    sim.push(job.arrival, EventKind.ARRIVAL, job.id, job)
        else:
            for job in workload.jobs():
                sim.push(job.arrival, EventKind.ARRIVAL, job.id, job)
    else:
        sim = Simulator(policy, config)
        for job in workload:
            sim.push(job.arrival, EventKind.ARRIVAL, job.id, job)
    sim.run_events()
    return sim.report()
