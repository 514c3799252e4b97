"""Jobs, stages and deadline adjustment for non-preemptive staged inference."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import accumulate
from typing import Hashable


@dataclass(frozen=True)
class StageProfile:
    """One exit of a multi-exit network: its worst-case time and what it produced."""

    wcet: float
    confidence: float
    correct: bool

    def __post_init__(self) -> None:
        if not self.wcet > 0:
            raise ValueError(f"stage wcet must be positive, got {self.wcet}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must lie in [0, 1], got {self.confidence}")


@dataclass(frozen=True)
class Job:
    id: Hashable
    arrival: float
    rel_deadline: float
    stages: tuple[StageProfile, ...]
    mandatory: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "stages", tuple(self.stages))
        if not self.stages:
            raise ValueError("a job needs at least one stage")
        if not 1 <= self.mandatory <= len(self.stages):
            raise ValueError(
                f"mandatory depth {self.mandatory} outside [1, {len(self.stages)}]"
            )
        if self.rel_deadline < 0:
            raise ValueError("relative deadline cannot be negative")

    @property
    def num_stages(self) -> int:
        return len(self.stages)

    @property
    def deadline(self) -> float:
        """Absolute (raw) deadline."""
        return self.arrival + self.rel_deadline

    @property
    def confidences(self) -> tuple[float, ...]:
        return tuple(s.confidence for s in self.stages)


@dataclass(frozen=True)
class AdjustedJob:
    """A job plus its planning deadline and prefix sums of stage times.

    ``cum_exec[0]`` is 0 so that ``cum_exec[l]`` is the time of the first
    ``l`` stages.
    """

    job: Job
    d_adj: float
    cum_exec: tuple[float, ...]

    @property
    def id(self) -> Hashable:
        return self.job.id

    @property
    def num_stages(self) -> int:
        return self.job.num_stages

    @property
    def mandatory(self) -> int:
        return self.job.mandatory

    @property
    def feasible_at_arrival(self) -> bool:
        return self.d_adj >= self.job.arrival


def adjust_deadline(job: Job, cpu_overhead: float = 0.0) -> AdjustedJob:
    """Shrink the deadline by the CPU constant and one worst-case stage.

    Blocking from a non-preemptive stage is at most one stage long, so planning
    against the shrunk deadline keeps EDF valid. The result may precede the
    arrival time; such jobs can only miss.
    """
    if cpu_overhead < 0:
        raise ValueError("cpu_overhead must be non-negative")
    longest = max(s.wcet for s in job.stages)
    cum = (0.0, *accumulate(s.wcet for s in job.stages))
    return AdjustedJob(job=job, d_adj=job.deadline - cpu_overhead - longest, cum_exec=cum)


def cumulative_exec(adjusted: AdjustedJob, depth: int) -> float:
    if not 1 <= depth <= adjusted.num_stages:
        raise IndexError(f"depth {depth} outside [1, {adjusted.num_stages}]")
    return adjusted.cum_exec[depth]
