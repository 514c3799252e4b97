from anytime_sched.planner import TaskRow
from anytime_sched.task_model import Job, StageProfile, adjust_deadline
from anytime_sched.utility import RewardCurve


def make_job(job_id, wcets, confs=None, arrival=0.0, rel_deadline=10.0, mandatory=1,
             correct=None):
    confs = confs or [0.5] * len(wcets)
    correct = correct or [True] * len(wcets)
    stages = tuple(StageProfile(w, c, ok) for w, c, ok in zip(wcets, confs, correct))
    return Job(job_id, arrival, rel_deadline, stages, mandatory)


def make_row(job_id, wcets, curve, d_adj, committed=0, mandatory=1):
    """Row whose adjusted deadline is exactly ``d_adj`` (arrival 0, no cpu overhead)."""
    job = make_job(job_id, wcets, curve, rel_deadline=d_adj + max(wcets), mandatory=mandatory)
    adj = adjust_deadline(job)
    assert abs(adj.d_adj - d_adj) < 1e-12
    return TaskRow(adj, RewardCurve(1, tuple(curve)), committed)
