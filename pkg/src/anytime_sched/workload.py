"""Trace files, synthetic traces, request generation and WCET profiling.

Trace format (UTF-8, one record per line)::

    #stages=3 classes=10 wcet=0.004,0.004,0.004
    0.412,0;0.706,1;0.853,1
    0.951,1;0.975,1;0.988,1

Each record lists ``confidence,correct`` per stage, separated by ``;``.
"""

from __future__ import annotations

import math
import random
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .task_model import Job, StageProfile

Z_995 = 2.5758293035489004  # two-sided 99% normal quantile


class TraceFormatError(ValueError):
    pass


@dataclass(frozen=True)
class TraceRecord:
    confidences: tuple[float, ...]
    correct: tuple[bool, ...]


@dataclass
class TraceLibrary:
    num_classes: int
    stage_wcet: tuple[float, ...]
    records: list[TraceRecord] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.stage_wcet = tuple(self.stage_wcet)
        if self.num_classes < 1:
            raise TraceFormatError("num_classes must be positive")
        if not self.stage_wcet or any(w <= 0 for w in self.stage_wcet):
            raise TraceFormatError("every stage needs a positive wcet")
        for i, rec in enumerate(self.records):
            if len(rec.confidences) != self.num_stages or len(rec.correct) != self.num_stages:
                raise TraceFormatError(f"record {i} does not have {self.num_stages} stages")
            if any(not 0.0 <= c <= 1.0 for c in rec.confidences):
                raise TraceFormatError(f"record {i} has a confidence outside [0, 1]")

    @property
    def num_stages(self) -> int:
        return len(self.stage_wcet)

    def __len__(self) -> int:
        return len(self.records)

    def stages(self, index: int) -> tuple[StageProfile, ...]:
        rec = self.records[index]
        return tuple(
            StageProfile(w, c, ok)
            for w, c, ok in zip(self.stage_wcet, rec.confidences, rec.correct)
        )

    def dumps(self) -> str:
        wcet = ",".join(repr(w) for w in self.stage_wcet)
        lines = [f"#stages={self.num_stages} classes={self.num_classes} wcet={wcet}"]
        for rec in self.records:
            lines.append(
                ";".join(f"{c!r},{int(ok)}" for c, ok in zip(rec.confidences, rec.correct))
            )
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")


def loads_trace(text: str) -> TraceLibrary:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("#"):
        raise TraceFormatError("missing '#stages=... classes=... wcet=...' header")
    header = {}
    for part in lines[0][1:].split():
        key, sep, value = part.partition("=")
        if not sep:
            raise TraceFormatError(f"bad header field {part!r}")
        header[key] = value
    try:
        stages = int(header["stages"])
        classes = int(header["classes"])
        wcet = tuple(float(x) for x in header["wcet"].split(","))
    except (KeyError, ValueError) as exc:
        raise TraceFormatError(f"bad header: {lines[0]!r}") from exc
    if len(wcet) != stages:
        raise TraceFormatError(f"header lists {len(wcet)} wcets for {stages} stages")

    records = []
    for lineno, line in enumerate(lines[1:], start=2):
        confs, oks = [], []
        for cell in line.split(";"):
            try:
                c, ok = cell.split(",")
                confs.append(float(c))
                oks.append(bool(int(ok)))
            except ValueError as exc:
                raise TraceFormatError(f"line {lineno}: bad stage entry {cell!r}") from exc
        records.append(TraceRecord(tuple(confs), tuple(oks)))
    return TraceLibrary(classes, wcet, records)


def load_trace(path) -> TraceLibrary:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise TraceFormatError(f"cannot read trace {path}: {exc}") from exc
    return loads_trace(text)


def synth_library(
    num_stages: int = 3,
    num_classes: int = 10,
    family: str = "saturating",
    seed: int = 0,
    num_records: int = 2000,
    stage_wcet: Optional[Sequence[float]] = None,
    easy_fraction: float = 0.4,
) -> TraceLibrary:
    """Synthetic stand-in for per-exit confidences of a multi-exit classifier.

    Every record gets a difficulty ``d``: a share ``easy_fraction`` of records
    draw ``d`` from [0, 0.4), the rest from [0.4, 1].

    ``saturating``: the first exit starts near 0.97 - 0.8 d and every later
    exit closes a fraction ``0.7 (1 - d)`` of the remaining gap to 1, so hard
    inputs start low and improve slowly.
    ``halving``: difficulty sets only the first exit; each later exit closes
    about half of the remaining gap whatever the difficulty.
    ``linear``: confidence grows by a fixed per-record step, capped at 1.

    Correctness uses one uniform draw per record, ``correct_l = u < conf_l``,
    so each exit is right with probability equal to its confidence and a
    correct exit stays correct deeper down.
    """
    if num_stages < 1 or num_classes < 1 or num_records < 1:
        raise ValueError("num_stages, num_classes and num_records must be positive")
    if not 0.0 <= easy_fraction <= 1.0:
        raise ValueError("easy_fraction must lie in [0, 1]")
    if stage_wcet is None:
        stage_wcet = [0.001] * num_stages
    if len(stage_wcet) != num_stages:
        raise ValueError("stage_wcet length must equal num_stages")
    rng = random.Random(seed)
    chance = 1.0 / num_classes
    records = []
    for _ in range(num_records):
        d = rng.uniform(0.0, 0.4) if rng.random() < easy_fraction else rng.uniform(0.4, 1.0)
        first = min(0.99, max(chance, 0.97 - 0.8 * d + rng.gauss(0.0, 0.03)))
        confs = [first]
        if family == "saturating":
            rate = min(0.95, max(0.02, 0.7 * (1.0 - d) + rng.gauss(0.0, 0.05)))
            for _ in range(1, num_stages):
                confs.append(confs[-1] + rate * (1.0 - confs[-1]))
        elif family == "halving":
            for _ in range(1, num_stages):
                gain = min(1.0, max(0.0, rng.gauss(0.5, 0.12)))
                confs.append(confs[-1] + gain * (1.0 - confs[-1]))
        elif family == "linear":
            step = rng.uniform(0.05, 0.3)
            for _ in range(1, num_stages):
                confs.append(min(1.0, confs[-1] + step))
        else:
            raise ValueError(f"unknown confidence family {family!r}")
        confs = [round(min(1.0, c), 6) for c in confs]
        u = rng.random()
        records.append(TraceRecord(tuple(confs), tuple(u < c for c in confs)))
    return TraceLibrary(num_classes, tuple(stage_wcet), records)


def profile_wcet(samples: Sequence[Sequence[float]], method: str = "ci") -> list[float]:
    """Per-stage WCET from timing samples.

    ``ci``: upper end of the two-sided 99% confidence interval of the mean.
    ``percentile``: empirical 99th percentile.
    """
    out = []
    for stage, xs in enumerate(samples):
        xs = list(xs)
        if len(xs) < 2:
            raise ValueError(f"stage {stage}: need at least 2 samples, got {len(xs)}")
        if method == "ci":
            mean = statistics.fmean(xs)
            out.append(mean + Z_995 * statistics.stdev(xs) / math.sqrt(len(xs)))
        elif method == "percentile":
            out.append(statistics.quantiles(xs, n=100, method="inclusive")[98])
        else:
            raise ValueError(f"unknown wcet method {method!r}")
    return out


def load_samples(path) -> list[list[float]]:
    """Read ``stage,seconds`` lines (stage is 1-based) into per-stage lists."""
    per_stage: dict[int, list[float]] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#") or line.lower().startswith("stage"):
            continue
        try:
            s, t = line.split(",")
            per_stage.setdefault(int(s), []).append(float(t))
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: expected 'stage,seconds'") from exc
    if not per_stage:
        raise ValueError(f"{path}: no samples")
    stages = sorted(per_stage)
    if stages != list(range(1, len(stages) + 1)):
        raise ValueError(f"{path}: stages must be numbered 1..n")
    return [per_stage[s] for s in stages]


@dataclass(frozen=True)
class WorkloadSpec:
    k: int = 20
    d_lower: float = 0.01
    d_upper: float = 0.3
    count: int = 600
    seed: int = 0
    mode: str = "closed"
    rate: float = 100.0  # poisson mode, requests per second
    think_time: float = 0.0
    mandatory: int = 1

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if not 0 < self.d_lower <= self.d_upper:
            raise ValueError("need 0 < d_lower <= d_upper")
        if self.count < 0:
            raise ValueError("count must be non-negative")
        if self.mode not in ("closed", "poisson"):
            raise ValueError(f"unknown arrival mode {self.mode!r}")
        if self.mode == "poisson" and self.rate <= 0:
            raise ValueError("poisson rate must be positive")
        if self.think_time < 0:
            raise ValueError("think_time must be non-negative")


@dataclass(frozen=True)
class Request:
    id: int
    client: int
    record: int
    rel_deadline: float


@dataclass
class Workload:
    """Requests drawn up front; arrival times depend on ``mode``.

    Closed loop: client ``c`` sends its first request at ``start[c]`` and each
    later one ``think_time`` after the previous request is answered, so the
    simulator fixes those arrivals. Poisson: ``arrivals`` is fixed here.
    """

    spec: WorkloadSpec
    library: TraceLibrary
    requests: list[Request]
    start: list[float]
    arrivals: Optional[list[float]] = None

    def per_client(self) -> list[list[Request]]:
        out: list[list[Request]] = [[] for _ in range(self.spec.k)]
        for req in self.requests:
            out[req.client].append(req)
        return out

    def make_job(self, req: Request, arrival: float) -> Job:
        return Job(
            req.id,
            arrival,
            req.rel_deadline,
            self.library.stages(req.record),
            min(self.spec.mandatory, self.library.num_stages),
        )

    def jobs(self) -> list[Job]:
        """Fixed job stream (poisson mode only)."""
        if self.arrivals is None:
            raise ValueError("closed-loop arrivals are decided during simulation")
        return [self.make_job(r, t) for r, t in zip(self.requests, self.arrivals)]


def _record_draws(n_records: int, count: int, rng: random.Random) -> Iterable[int]:
    pool: list[int] = []
    for _ in range(count):
        if not pool:
            pool = list(range(n_records))
            rng.shuffle(pool)
            pool.reverse()
        yield pool.pop()


def generate(spec: WorkloadSpec, library: TraceLibrary) -> Workload:
    if len(library) == 0:
        raise ValueError("trace library is empty")
    rng = random.Random(spec.seed)
    draws = list(_record_draws(len(library), spec.count, rng))
    requests = [
        Request(n, n % spec.k, rec, rng.uniform(spec.d_lower, spec.d_upper))
        for n, rec in enumerate(draws)
    ]
    start = [rng.uniform(0.0, spec.d_lower) for _ in range(spec.k)]
    arrivals = None
    if spec.mode == "poisson":
        t = 0.0
        arrivals = []
        for _ in requests:
            t += rng.expovariate(spec.rate)
            arrivals.append(t)
    return Workload(spec, library, requests, start, arrivals)
