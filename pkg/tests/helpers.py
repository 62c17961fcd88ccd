"""Small builders for hand-written subject timelines."""

from pathlib import Path

from occlude.model import (
    ALL_STREAMS,
    Assessment,
    AssessmentStream,
    Component,
    Continuity,
    EstimandSpec,
    IntercurrentOccurrence,
    Objectivity,
    OcclusionHandling,
    Outcome,
    Strategy,
    StrategyAssignment,
    SubjectRecord,
    WithdrawalRecord,
)

FIXTURES = Path(__file__).parent / "fixtures"
WEEK = 7


def weeks(*w):
    return tuple(WEEK * x for x in w)


def discrete(cid, schedule, attended=(), events=None, unscheduled=()):
    """Stream attending the listed target days; ``events`` maps day -> cause."""
    events = events or {}
    acts = []
    for d in attended:
        idx = schedule.index(d)
        cause = events.get(d)
        acts.append(Assessment(d, Outcome.EVENT if cause else Outcome.NORMAL, cause, idx))
    for d in unscheduled:
        cause = events.get(d)
        acts.append(Assessment(d, Outcome.EVENT if cause else Outcome.NORMAL, cause, None))
    acts.sort(key=lambda a: a.day)
    return AssessmentStream(cid, Continuity.DISCRETE_SCHEDULED, tuple(schedule), tuple(acts))


def continuous(cid, events=None):
    events = events or {}
    acts = tuple(Assessment(d, Outcome.EVENT, c) for d, c in sorted(events.items()))
    return AssessmentStream(cid, Continuity.CONTINUOUS, (), acts)


def ie(kind, detection, onset=None, subjective=False, identification=None):
    return IntercurrentOccurrence(
        kind, detection, onset, identification, Objectivity.SUBJECTIVE if subjective else Objectivity.OBJECTIVE
    )


def withdrawal(day, trigger=None, streams=(ALL_STREAMS,)):
    return WithdrawalRecord(day, frozenset(streams), trigger)


def subject(sid="X", arm="A", cutoff=400, streams=(), ies=(), withdrawals=(), death=None, last_dose=None, entry=0):
    return SubjectRecord(sid, arm, cutoff, tuple(streams), tuple(ies), tuple(withdrawals), death, last_dose, entry)


def assignment(kind, strategy, handling=None, override=None):
    return StrategyAssignment(
        kind,
        Strategy(strategy),
        None if handling is None else OcclusionHandling(handling),
        None if override is None else Objectivity(override),
    )


def pfs_spec(*table, **kw):
    comps = (Component("tumor", ("progression",), 1), Component("survival", ("death",), 2))
    return EstimandSpec(kw.pop("estimand_id", "pfs"), comps, tuple(table), **kw)


def os_spec(*table, **kw):
    return EstimandSpec(kw.pop("estimand_id", "os"), (Component("survival", ("death",), 1),), tuple(table), **kw)


Q6W = weeks(*range(6, 61, 6))
