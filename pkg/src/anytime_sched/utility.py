"""Predicting the confidence of stages that have not run yet."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

from .task_model import AdjustedJob


class UtilityModel(str, Enum):
    MAX = "max"
    EXP = "exp"
    LIN = "lin"
    ORACLE = "oracle"


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class RewardCurve:
    """Predicted reward for depths ``start .. start + len(values) - 1``."""

    start: int
    values: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", tuple(self.values))
        for v in self.values:
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"reward {v} outside [0, 1]")

    @property
    def last(self) -> int:
        return self.start + len(self.values) - 1

    def at(self, depth: int) -> float:
        if not self.start <= depth <= self.last:
            raise IndexError(f"depth {depth} outside [{self.start}, {self.last}]")
        return self.values[depth - self.start]

    def max_reward(self) -> float:
        return max(self.values)


def predict_next(
    model: UtilityModel,
    r_cur: float,
    p_cur: float,
    p_next: float,
    oracle_next: Optional[float] = None,
) -> float:
    """Reward expected after one more stage, given the reward now.

    ``p_cur`` and ``p_next`` are cumulative execution times up to the current
    and the next stage; only the linear model looks at them.
    """
    if model is UtilityModel.ORACLE:
        if oracle_next is None:
            raise ConfigurationError("oracle utility needs the traced confidence")
        return oracle_next
    if model is UtilityModel.MAX:
        return 1.0
    if model is UtilityModel.EXP:
        return r_cur + 0.5 * (1.0 - r_cur)
    if model is UtilityModel.LIN:
        return min(1.0, r_cur * p_next / p_cur)
    raise ConfigurationError(f"unknown utility model {model!r}")


def predict_curve(
    model: UtilityModel,
    r_observed: float,
    l_obs: int,
    adjusted: AdjustedJob,
    oracle_trace: Optional[Sequence[float]] = None,
) -> RewardCurve:
    """Curve from depth ``l_obs`` (whose reward is known) to the last stage.

    Heuristics are compounded one stage at a time.
    """
    n = adjusted.num_stages
    if not 1 <= l_obs <= n:
        raise IndexError(f"observed depth {l_obs} outside [1, {n}]")
    if model is UtilityModel.ORACLE:
        if oracle_trace is None:
            raise ConfigurationError("oracle utility needs the traced confidences")
        return RewardCurve(l_obs, tuple(oracle_trace[l_obs - 1 : n]))
    values = [r_observed]
    cum = adjusted.cum_exec
    for l in range(l_obs, n):
        values.append(predict_next(model, values[-1], cum[l], cum[l + 1]))
    return RewardCurve(l_obs, tuple(values))


def prior_curve(
    model: UtilityModel,
    adjusted: AdjustedJob,
    prior: float,
    oracle_trace: Optional[Sequence[float]] = None,
) -> RewardCurve:
    """Curve for a job with no executed stage.

    ``prior`` is the confidence of a guess made before any computation
    (chance level, 1/num_classes by default) and the heuristic predicts depth 1
    from it. The linear model has no elapsed time to extrapolate from, so it
    takes ``prior`` as the depth-1 value. The oracle ignores the prior.
    """
    if model is UtilityModel.ORACLE or model is UtilityModel.LIN:
        return predict_curve(model, prior, 1, adjusted, oracle_trace)
    first = predict_next(model, prior, 0.0, adjusted.cum_exec[1])
    return predict_curve(model, first, 1, adjusted)
