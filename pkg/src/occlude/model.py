"""Core data types: subject timelines, estimand definitions, derived records.

All days are integers counted from randomization (day 0). Every type is a
frozen dataclass holding tuples, so values can be shared freely between
threads and worker processes.
"""

from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

ALL_STREAMS = "ALL"
DEATH = "death"


class Continuity(enum.Enum):
    CONTINUOUS = "continuous"
    DISCRETE_SCHEDULED = "discrete_scheduled"


class Outcome(enum.Enum):
    NONE = "none"  # visit happened, result not evaluable
    NORMAL = "normal"
    EVENT = "event"


class Objectivity(enum.Enum):
    OBJECTIVE = "objective"
    SUBJECTIVE = "subjective"


class Strategy(enum.Enum):
    TREATMENT_POLICY = "treatment_policy"
    COMPOSITE = "composite"
    HYPOTHETICAL = "hypothetical"
    WHILE_PRIOR_TO_OCCLUSION = "while_prior_to_occlusion"
    PRINCIPAL_STRATUM = "principal_stratum"

    @property
    def occludes_by_dating(self):
        return self in (Strategy.HYPOTHETICAL, Strategy.WHILE_PRIOR_TO_OCCLUSION)


class OcclusionHandling(enum.Enum):
    CENSOR = "censor"
    COMPETING_RISK = "competing_risk"


class Dating(enum.Enum):
    RIGHT = "right"
    LEFT = "left"
    MIDPOINT = "midpoint"


class UnscheduledAssumption(enum.Enum):
    """Whether unscheduled assessments are rare (discrete) or common (continuous)."""

    DISCRETE = "discrete"
    CONTINUOUS = "continuous"


class StatusKind(enum.Enum):
    EVENT = "event"
    CENSORED = "censored"
    COMPETING = "competing"


class CensorReason(enum.Enum):
    PHENOMENAL_INDIVIDUAL = "phenomenal_individual"
    NOUMENAL_STRATEGY = "noumenal_strategy"
    NOUMENAL_IMPLICIT_DESIGN = "noumenal_implicit_design"
    ADMIN_CUTOFF = "admin_cutoff"


class OcclusionBasis(enum.Enum):
    TRIGGER_DATE = "trigger_date"
    LAST_ASSESSMENT = "last_assessment"
    ACTUAL_WITHDRAWAL = "actual_withdrawal"
    CUTOFF_DATE = "cutoff_date"
    NONE = "none"


TIE_KINDS = ("event", "ie", "window")


@dataclass(frozen=True)
class Assessment:
    day: int
    outcome: Outcome = Outcome.NORMAL
    cause: Optional[str] = None
    target_index: Optional[int] = None

    @property
    def evaluable(self):
        return self.outcome is not Outcome.NONE

    @property
    def is_event(self):
        return self.outcome is Outcome.EVENT


@dataclass(frozen=True)
class AssessmentStream:
    component_id: str
    continuity: Continuity
    schedule: tuple[int, ...] = ()
    actual: tuple[Assessment, ...] = ()

    @property
    def discrete(self):
        return self.continuity is Continuity.DISCRETE_SCHEDULED

    def evaluable_days(self):
        return [a.day for a in self.actual if a.evaluable]


@dataclass(frozen=True)
class IntercurrentOccurrence:
    ie_type: str
    detection_day: int
    onset_day: Optional[int] = None
    identification_day: Optional[int] = None
    objectivity: Objectivity = Objectivity.OBJECTIVE

    @property
    def trigger_day(self):
        """Onset when known, otherwise the first assessment showing the event."""
        return self.onset_day if self.onset_day is not None else self.detection_day


@dataclass(frozen=True)
class WithdrawalRecord:
    withdrawal_day: int
    withdrawn_streams: frozenset[str] = frozenset({ALL_STREAMS})
    linked_trigger: Optional[str] = None

    def covers(self, component_id):
        return ALL_STREAMS in self.withdrawn_streams or component_id in self.withdrawn_streams


@dataclass(frozen=True)
class SubjectRecord:
    subject_id: str
    arm: str
    cutoff_day: int
    streams: tuple[AssessmentStream, ...] = ()
    ie_occurrences: tuple[IntercurrentOccurrence, ...] = ()
    withdrawals: tuple[WithdrawalRecord, ...] = ()
    death_day: Optional[int] = None
    last_dose_day: Optional[int] = None
    entry_day: int = 0  # calendar day of accrual, used by trial-level cutoffs

    def stream(self, component_id):
        for s in self.streams:
            if s.component_id == component_id:
                return s
        return None


@dataclass(frozen=True)
class Component:
    component_id: str
    event_causes: tuple[str, ...]
    priority: int


@dataclass(frozen=True)
class StrategyAssignment:
    ie_type: str
    strategy: Strategy
    occlusion_handling: Optional[OcclusionHandling] = None
    objectivity_override: Optional[Objectivity] = None

    def __post_init__(self):
        if self.strategy.occludes_by_dating != (self.occlusion_handling is not None):
            raise ValueError(
                f"strategy assignment for {self.ie_type!r}: occlusion_handling must be given "
                "for hypothetical/while_prior_to_occlusion and only for those"
            )


@dataclass(frozen=True)
class EstimandSpec:
    estimand_id: str
    components: tuple[Component, ...]
    strategy_table: tuple[StrategyAssignment, ...] = ()
    gap_rule: int = 2
    dating: Dating = Dating.RIGHT
    unscheduled_assumption: UnscheduledAssumption = UnscheduledAssumption.DISCRETE
    treatment_emergent_window_days: Optional[int] = None
    precluding_causes: tuple[str, ...] = (DEATH,)
    design_noumenal_events: frozenset[str] = frozenset()
    tie_order: tuple[str, ...] = TIE_KINDS

    def __post_init__(self):
        if not self.components:
            raise ValueError(f"estimand {self.estimand_id!r} has no components")
        priorities = [c.priority for c in self.components]
        if len(set(priorities)) != len(priorities):
            raise ValueError(f"estimand {self.estimand_id!r}: component priorities must be unique")
        ids = [c.component_id for c in self.components]
        if len(set(ids)) != len(ids):
            raise ValueError(f"estimand {self.estimand_id!r}: duplicate component ids")
        types = [a.ie_type for a in self.strategy_table]
        if len(set(types)) != len(types):
            raise ValueError(f"estimand {self.estimand_id!r}: ie_type listed twice in strategy table")
        if sorted(self.tie_order) != sorted(TIE_KINDS):
            raise ValueError(f"tie_order must be a permutation of {TIE_KINDS}")
        if self.gap_rule < 0:
            raise ValueError("gap_rule must be >= 0")
        if self.treatment_emergent_window_days is not None and self.treatment_emergent_window_days < 0:
            raise ValueError("treatment_emergent_window_days must be >= 0")

    def assignment(self, ie_type):
        for a in self.strategy_table:
            if a.ie_type == ie_type:
                return a
        return None

    @property
    def event_causes(self):
        return {cause for c in self.components for cause in c.event_causes}

    @property
    def is_safety(self):
        return self.treatment_emergent_window_days is not None


@dataclass(frozen=True)
class DerivedAnalysisRecord:
    subject_id: str
    arm: str
    estimand_id: str
    time_days: int
    status: StatusKind
    cause: Optional[str] = None
    censor_reason: Optional[CensorReason] = None
    occlusion_basis: OcclusionBasis = OcclusionBasis.NONE
    # Stream whose assessment fixed time_days; None for continuous dates.
    source_component: Optional[str] = None
    audit: tuple[str, ...] = field(default=(), compare=True)

    def __post_init__(self):
        if self.time_days < 0:
            raise ValueError("time_days must be >= 0")
        if not self.audit:
            raise ValueError("audit trail must not be empty")
        if self.status is StatusKind.EVENT and self.occlusion_basis is not OcclusionBasis.NONE:
            raise ValueError("an event record has no occlusion basis")
        if (self.status is StatusKind.CENSORED) != (self.censor_reason is not None):
            raise ValueError("censor_reason is required exactly for censored records")


# --------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class Violation:
    subject_id: str
    field: str
    rule: str

    def __str__(self):
        return f"{self.subject_id}: {self.field}: {self.rule}"


class FindingKind(enum.Enum):
    IMPLICIT_NOUMENAL_OCCLUSION = "implicit_noumenal_occlusion"
    UNUSED_STRATEGY = "unused_strategy"
    MISSING_COMPONENT_STREAM = "missing_component_stream"


@dataclass(frozen=True)
class Finding:
    kind: FindingKind
    subject: str  # ie_type or component_id the finding is about
    detail: str
    subjects: tuple[str, ...] = ()

    @property
    def informational(self):
        return self.kind is not FindingKind.IMPLICIT_NOUMENAL_OCCLUSION

    def __str__(self):
        return f"{self.kind.value}({self.subject}): {self.detail}"


def validate_subject(record: SubjectRecord) -> list[Violation]:
    """Check every timeline invariant of one subject.

    Violations are returned as data, in a fixed order, never raised.
    """
    out = []
    sid = record.subject_id

    def bad(fld, rule):
        out.append(Violation(sid, fld, rule))

    if record.cutoff_day < 0:
        bad("cutoff_day", "cutoff_day must be >= 0")
    if record.entry_day < 0:
        bad("entry_day", "entry_day must be >= 0")

    seen = set()
    for s in record.streams:
        where = f"streams[{s.component_id}]"
        if s.component_id in seen:
            bad(where, "duplicate component_id")
        seen.add(s.component_id)
        if s.discrete and not s.schedule:
            bad(where + ".schedule", "discrete scheduled stream needs a nonempty schedule")
        if not s.discrete and s.schedule:
            bad(where + ".schedule", "continuous stream must have an empty schedule")
        if any(b <= a for a, b in zip(s.schedule, s.schedule[1:])):
            bad(where + ".schedule", "target days must be strictly increasing")
        days = [a.day for a in s.actual]
        if any(d < 0 for d in days):
            bad(where + ".actual", "actual days must be >= 0")
        if any(b <= a for a, b in zip(days, days[1:])):
            bad(where + ".actual", "actual days must be strictly increasing")
        if days and days[-1] > record.cutoff_day:
            bad(where + ".actual", "assessment after cutoff")
        if record.death_day is not None and days and days[-1] > record.death_day:
            bad(where + ".actual", "assessment after death")
        for a in s.actual:
            if a.target_index is not None and not 0 <= a.target_index < len(s.schedule):
                bad(where + ".actual", f"target_index {a.target_index} outside schedule")
            if a.is_event and not a.cause:
                bad(where + ".actual", "event outcome needs a cause")
        indices = [a.target_index for a in s.actual if a.target_index is not None]
        if len(set(indices)) != len(indices):
            bad(where + ".actual", "schedule target attended twice")

    for k, ie in enumerate(record.ie_occurrences):
        where = f"ie_occurrences[{k}:{ie.ie_type}]"
        if ie.onset_day is not None and ie.onset_day > ie.detection_day:
            bad(where, "onset_day <= detection_day violated")
        if ie.identification_day is not None and ie.detection_day > ie.identification_day:
            bad(where, "detection_day <= identification_day violated")
        if min(ie.detection_day, ie.onset_day if ie.onset_day is not None else ie.detection_day) < 0:
            bad(where, "days must be >= 0")
        if ie.detection_day > record.cutoff_day or (
            ie.identification_day is not None and ie.identification_day > record.cutoff_day
        ):
            bad(where, "intercurrent event after cutoff")

    for k, w in enumerate(record.withdrawals):
        where = f"withdrawals[{k}]"
        if not 0 <= w.withdrawal_day <= record.cutoff_day:
            bad(where, "withdrawal_day must lie in [0, cutoff_day]")
        for c in sorted(w.withdrawn_streams - {ALL_STREAMS}):
            if c not in seen:
                bad(where, f"withdrawn stream {c!r} does not exist")
        if w.linked_trigger is not None:
            trig = [ie for ie in record.ie_occurrences if ie.ie_type == w.linked_trigger]
            if not trig:
                bad(where, f"linked trigger {w.linked_trigger!r} not among ie_occurrences")
            elif w.withdrawal_day < min(ie.detection_day for ie in trig):
                bad(where, "withdrawal precedes detection of its linked trigger")

    if record.death_day is not None and not 0 <= record.death_day <= record.cutoff_day:
        bad("death_day", "death_day must lie in [0, cutoff_day]")
    if record.last_dose_day is not None and not 0 <= record.last_dose_day <= record.cutoff_day:
        bad("last_dose_day", "last_dose_day must lie in [0, cutoff_day]")
    return out


def validate_spec_against_data(spec: EstimandSpec, subjects) -> list[Finding]:
    """Cross-check an estimand's strategy table against observed data.

    Intercurrent event types that occur in the data but have no strategy are
    reported as implicit noumenal occlusion; strategies that never fire are
    reported as informational.
    """
    observed = {}
    for s in subjects:
        kinds = {ie.ie_type for ie in s.ie_occurrences}
        if s.death_day is not None and spec.assignment(DEATH) is not None:
            kinds.add(DEATH)
        for k in kinds:
            observed.setdefault(k, []).append(s.subject_id)

    findings = []
    for ie_type in sorted(observed):
        if spec.assignment(ie_type) is None:
            who = tuple(sorted(observed[ie_type]))
            findings.append(
                Finding(
                    FindingKind.IMPLICIT_NOUMENAL_OCCLUSION,
                    ie_type,
                    f"observed in {len(who)} subject(s) but absent from the strategy table of "
                    f"{spec.estimand_id!r}; any assessment stop it causes is censored implicitly",
                    who,
                )
            )
    for a in sorted(spec.strategy_table, key=lambda a: a.ie_type):
        if a.ie_type not in observed:
            findings.append(
                Finding(FindingKind.UNUSED_STRATEGY, a.ie_type, f"{a.strategy.value} assignment never exercised")
            )
    missing = Counter()
    for s in subjects:
        for c in spec.components:
            if s.stream(c.component_id) is None:
                missing[c.component_id] += 1
    for cid in sorted(missing):
        findings.append(
            Finding(FindingKind.MISSING_COMPONENT_STREAM, cid, f"stream absent in {missing[cid]} subject(s)")
        )
    return findings
