"""The occlusion engine.

Turns one subject's observed timeline plus an estimand definition into a
single analysis record (time, status, why the subject left the risk set) and
keeps a human-readable audit trail of every decision taken along the way.

The engine works in three stages:

1. ``composite_risk_window`` decides until when the subject is assessable for
   the composite endpoint as a whole.
2. Candidate exits from the risk set are collected: events of interest,
   intercurrent events handled by an occluding strategy, and the end of the
   risk window itself.
3. The earliest exit wins; same-day ties follow the estimand's tie order.
"""

from __future__ import annotations

import enum
import math
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Optional

from .errors import ContractViolation, DataError, NotAssessableError
from .model import (
    DEATH,
    CensorReason,
    Dating,
    DerivedAnalysisRecord,
    EstimandSpec,
    IntercurrentOccurrence,
    Objectivity,
    OcclusionBasis,
    OcclusionHandling,
    StatusKind,
    Strategy,
    StrategyAssignment,
    SubjectRecord,
    UnscheduledAssumption,
)
from .parallel import parallel_map


class WindowBasis(enum.Enum):
    LAST_OWN_ASSESSMENT = "last_own_assessment"
    LAST_CROSS_COMPONENT_ASSESSMENT = "last_cross_component_assessment"
    CUTOFF = "cutoff"


@dataclass(frozen=True)
class RiskWindow:
    """Span over which a subject is assessable for every component.

    ``end_day`` is the last day known to be event-free (the censoring date).
    ``event_horizon`` is the last day on which a continuously observed event
    (death, an intercurrent event) still counts: it is the day before the
    first scheduled assessment that was missed while follow-up continued.
    """

    end_day: int
    ending_component: Optional[str]
    basis: WindowBasis
    event_horizon: int
    cutoff_bound: bool = False
    bound_by: str = "assessment"  # assessment | cutoff | death | withdrawal
    end_source: Optional[str] = None
    notes: tuple[str, ...] = ()


@dataclass(frozen=True)
class GapOutcome:
    counted: bool
    censor_day: Optional[int] = None
    missed: int = 0


# --------------------------------------------------------------------------
# risk window


def _stream_withdrawal_day(subject, component_id):
    days = [w.withdrawal_day for w in subject.withdrawals if w.covers(component_id)]
    return min(days) if days else None


def _follow_up_end(subject):
    if subject.death_day is not None:
        return min(subject.death_day, subject.cutoff_day)
    return subject.cutoff_day


def component_assessment_end(subject: SubjectRecord, component, audit=None) -> int:
    """Last day on which ``component`` (a stream of ``subject``) is assessed.

    Continuous streams run to death or cutoff unless withdrawn earlier;
    discrete streams end at their last evaluable assessment.
    """
    if component.discrete:
        days = component.evaluable_days()
        if not days:
            if audit is not None:
                audit.append(f"{component.component_id}: no evaluable assessment, at risk never established (day 0)")
            return 0
        return days[-1]
    end = _follow_up_end(subject)
    w = _stream_withdrawal_day(subject, component.component_id)
    return end if w is None else min(end, w)


def _first_missed_target(stream, limit):
    """Day of the first scheduled target after the last assessment, if due by ``limit``."""
    attended = {a.target_index for a in stream.actual if a.target_index is not None}
    evaluable = [a for a in stream.actual if a.evaluable]
    if evaluable and evaluable[-1].target_index is not None:
        k = evaluable[-1].target_index
        candidates = range(k + 1, len(stream.schedule))
    else:
        last = evaluable[-1].day if evaluable else 0
        candidates = [i for i, t in enumerate(stream.schedule) if t > last]
    for i in candidates:
        if i in attended:
            continue
        if stream.schedule[i] <= limit:
            return stream.schedule[i]
        return None
    return None


def _component_streams(subject, spec):
    out = []
    for comp in spec.components:
        s = subject.stream(comp.component_id)
        if s is not None:
            out.append((comp, s))
    return out


def composite_risk_window(subject: SubjectRecord, spec: EstimandSpec) -> RiskWindow:
    """Until when is ``subject`` at risk for every component of the estimand?

    For each discretely assessed component the first missed scheduled
    assessment is located. Under the discrete assumption (unscheduled
    assessments are rare) the component keeps the subject at risk up to the
    last assessment of *any* discrete component strictly before that missed
    visit; under the continuous assumption only up to its own last
    assessment. The window ends at the earliest such day. Continuous
    components bound the window only through death, withdrawal or cutoff.
    """
    notes = []
    pairs = _component_streams(subject, spec)
    limit = _follow_up_end(subject)
    discrete = [(c, s) for c, s in pairs if s.discrete]
    continuous = [(c, s) for c, s in pairs if not s.discrete]

    cont_ends = []
    for c, s in continuous:
        end = component_assessment_end(subject, s, notes)
        if end == subject.cutoff_day and subject.death_day != end:
            how = "cutoff"
        elif subject.death_day is not None and end == subject.death_day:
            how = "death"
        else:
            how = "withdrawal"
        cont_ends.append((end, c.component_id, how))

    if not discrete:
        end, cid, how = min(cont_ends, key=lambda x: x[0])
        basis = WindowBasis.CUTOFF if how == "cutoff" else WindowBasis.LAST_OWN_ASSESSMENT
        notes.append(f"risk window: continuous follow-up ends day {end} ({how}, {cid})")
        return RiskWindow(end, cid, basis, end, cutoff_bound=how == "cutoff", bound_by=how, notes=tuple(notes))

    all_days = sorted({d for _, s in discrete for d in s.evaluable_days()})
    per_component = []
    for c, s in discrete:
        last = component_assessment_end(subject, s, notes)
        missed = _first_missed_target(s, limit)
        if spec.unscheduled_assumption is UnscheduledAssumption.CONTINUOUS:
            ext = last
        else:
            before = [d for d in all_days if missed is None or d < missed]
            ext = before[-1] if before else 0
        per_component.append((ext, c.priority, c.component_id, last, missed))
        if missed is None:
            notes.append(f"{c.component_id}: last assessment day {last}, no missed scheduled assessment")
        else:
            notes.append(
                f"{c.component_id}: last assessment day {last}, first missed scheduled assessment day {missed}, "
                f"assessed through day {ext} ({spec.unscheduled_assumption.value} assumption)"
            )

    ext, _, cid, last, _ = min(per_component, key=lambda x: (x[0], x[1]))
    basis = WindowBasis.LAST_OWN_ASSESSMENT if ext == last else WindowBasis.LAST_CROSS_COMPONENT_ASSESSMENT
    misses = [m for *_, m in per_component if m is not None]
    horizon = min(misses) - 1 if misses else limit
    bound_by = "assessment"
    for cend, ccid, how in cont_ends:
        horizon = min(horizon, cend)
        if cend < ext:
            ext, cid, bound_by = cend, ccid, how
            basis = WindowBasis.CUTOFF if how == "cutoff" else WindowBasis.LAST_OWN_ASSESSMENT
    horizon = max(horizon, ext)
    withdrawn_cont = any(how == "withdrawal" and cend <= horizon for cend, _, how in cont_ends)
    cutoff_bound = not misses and subject.death_day is None and not withdrawn_cont

    source = None
    if bound_by == "assessment":
        for c, s in sorted(discrete, key=lambda p: (p[0].component_id != cid, p[0].priority)):
            if ext in s.evaluable_days():
                source = c.component_id
                break
    notes.append(
        f"risk window ends day {ext} ({basis.value}, component {cid}); continuous events count through day {horizon}"
    )
    return RiskWindow(ext, cid, basis, horizon, cutoff_bound, bound_by, source, tuple(notes))


# --------------------------------------------------------------------------
# gap rule


def apply_gap_rule(candidate_event_day: int, stream, G: int) -> GapOutcome:
    """Discard an event detected after ``G`` or more consecutive missed visits.

    The event is censored at the last attended assessment before the gap.
    ``G == 0`` disables the rule.
    """
    if G == 0 or not stream.discrete:
        return GapOutcome(True)
    prior = [a for a in stream.actual if a.evaluable and a.day < candidate_event_day]
    detecting = next((a for a in stream.actual if a.day == candidate_event_day), None)
    attended = {a.target_index for a in stream.actual if a.target_index is not None}
    if prior and prior[-1].target_index is not None:
        lo_index = prior[-1].target_index
    else:
        lo_day = prior[-1].day if prior else 0
        lo_index = max((i for i, t in enumerate(stream.schedule) if t <= lo_day), default=-1)
    hi_index = detecting.target_index if detecting is not None and detecting.target_index is not None else None
    missed = 0
    for i, t in enumerate(stream.schedule):
        if i <= lo_index or i in attended or t >= candidate_event_day:
            continue
        if hi_index is not None and i >= hi_index:
            continue
        missed += 1
    if missed >= G:
        return GapOutcome(False, prior[-1].day if prior else 0, missed)
    return GapOutcome(True, None, missed)


# --------------------------------------------------------------------------
# occlusion dating


def effective_objectivity(ie: IntercurrentOccurrence, strategy: StrategyAssignment) -> Objectivity:
    return strategy.objectivity_override or ie.objectivity


def _relevant_withdrawal(ie, subject, spec):
    ids = [c.component_id for c in spec.components]
    days = [
        w.withdrawal_day
        for w in subject.withdrawals
        if w.linked_trigger == ie.ie_type and any(w.covers(c) for c in ids) and w.withdrawal_day >= ie.detection_day
    ]
    return min(days) if days else None


def _date_occlusion(ie, subject, spec, strategy, force=None):
    """Return (time, basis, source_component, order_day) or None.

    ``force`` overrides the objectivity rule: TRIGGER_DATE dates every
    trigger at onset, ACTUAL_WITHDRAWAL dates every trigger at its linked
    withdrawal (falling back to the trigger date when none is linked).
    """
    if not strategy.strategy.occludes_by_dating:
        raise ContractViolation(
            f"occlusion dating applies to hypothetical/while_prior_to_occlusion, not {strategy.strategy.value}"
        )
    start = ie.trigger_day
    objective = effective_objectivity(ie, strategy) is Objectivity.OBJECTIVE
    if force is OcclusionBasis.TRIGGER_DATE or (force is None and objective):
        return start, OcclusionBasis.TRIGGER_DATE, None, start
    w = _relevant_withdrawal(ie, subject, spec)
    if w is None:
        if force is OcclusionBasis.ACTUAL_WITHDRAWAL:
            return start, OcclusionBasis.TRIGGER_DATE, None, start
        return None
    pairs = _component_streams(subject, spec)
    if not any(s.discrete for _, s in pairs):
        return w, OcclusionBasis.ACTUAL_WITHDRAWAL, None, w
    best, src = None, None
    for c, s in pairs:
        if not s.discrete:
            continue
        for d in s.evaluable_days():
            if start <= d <= w and (best is None or d > best):
                best, src = d, c.component_id
    if best is None:
        # no assessment between trigger and withdrawal: the trigger is the last look
        return start, OcclusionBasis.TRIGGER_DATE, None, w
    return best, OcclusionBasis.LAST_ASSESSMENT, src, w


def occlusion_dating(ie: IntercurrentOccurrence, subject: SubjectRecord, spec: EstimandSpec, strategy: StrategyAssignment):
    """Date the point where an occluding intercurrent event removes the subject.

    Objective triggers occlude at the trigger date. Subjective triggers keep
    the subject in the risk set until the linked withdrawal: the withdrawal
    day for continuously assessed endpoints, the last endpoint assessment on
    or before it for discretely assessed ones. A subjective trigger with no
    linked withdrawal does not occlude and ``None`` is returned.
    """
    r = _date_occlusion(ie, subject, spec, strategy)
    return None if r is None else (r[0], r[1])


# --------------------------------------------------------------------------
# record derivation


@dataclass(frozen=True, order=True)
class _Exit:
    order_day: int
    rank: int
    tiebreak: int
    time: int = field(compare=False)
    status: StatusKind = field(compare=False)
    cause: Optional[str] = field(default=None, compare=False)
    reason: Optional[CensorReason] = field(default=None, compare=False)
    basis: OcclusionBasis = field(default=OcclusionBasis.NONE, compare=False)
    source: Optional[str] = field(default=None, compare=False)
    note: str = field(default="", compare=False)


def _ies_with_death(subject, spec):
    ies = list(subject.ie_occurrences)
    if subject.death_day is not None and DEATH not in spec.event_causes and spec.assignment(DEATH) is not None:
        ies.append(IntercurrentOccurrence(DEATH, subject.death_day, subject.death_day, subject.death_day))
    return sorted(ies, key=lambda ie: (ie.trigger_day, ie.detection_day, ie.ie_type))


def _ie_label(ie, strategy=None):
    obj = (strategy.objectivity_override if strategy else None) or ie.objectivity
    onset = "unknown" if ie.onset_day is None else ie.onset_day
    ident = "" if ie.identification_day is None else f", identified {ie.identification_day}"
    return f"IE {ie.ie_type} (onset {onset}, detected {ie.detection_day}{ident}, {obj.value})"


def derive_record(subject: SubjectRecord, spec: EstimandSpec, force_dating=None) -> DerivedAnalysisRecord:
    """Derive the analysis record of one subject for one estimand.

    ``force_dating`` (an :class:`OcclusionBasis`) pins the dating of every
    hypothetical/while-prior-to-occlusion trigger; used by the dual-dating
    sensitivity analysis.
    """
    if spec.is_safety:
        return derive_safety_record(subject, spec)
    pairs = _component_streams(subject, spec)
    if not pairs:
        raise NotAssessableError(f"estimand not assessable: subject {subject.subject_id} has none of its streams")

    rank = {k: i for i, k in enumerate(spec.tie_order)}
    audit = [
        f"estimand {spec.estimand_id}: components "
        + ", ".join(f"{c.component_id}[{'/'.join(c.event_causes)}]" for c, _ in pairs)
        + f"; cutoff day {subject.cutoff_day}"
    ]
    window = composite_risk_window(subject, spec)
    audit.extend(window.notes)
    if window.bound_by == "cutoff":
        wbasis = OcclusionBasis.CUTOFF_DATE
    elif window.bound_by == "withdrawal":
        wbasis = OcclusionBasis.ACTUAL_WITHDRAWAL
    else:
        wbasis = OcclusionBasis.LAST_ASSESSMENT
    exits = []

    for comp, s in pairs:
        if s.discrete:
            hit = next((a for a in s.actual if a.is_event and a.cause in comp.event_causes), None)
            if hit is None:
                continue
            if hit.day > window.end_day:
                audit.append(f"{comp.component_id}: {hit.cause} on day {hit.day} lies beyond the risk window, not counted")
                continue
            gap = apply_gap_rule(hit.day, s, spec.gap_rule)
            if not gap.counted:
                audit.append(
                    f"{comp.component_id}: {hit.cause} on day {hit.day} follows {gap.missed} missed assessment(s) "
                    f"(gap rule G={spec.gap_rule}); censored at last contiguous assessment day {gap.censor_day}"
                )
                exits.append(
                    _Exit(gap.censor_day, rank["window"], -1, gap.censor_day, StatusKind.CENSORED,
                          reason=CensorReason.PHENOMENAL_INDIVIDUAL, basis=OcclusionBasis.LAST_ASSESSMENT,
                          source=comp.component_id, note="gap rule censoring")
                )
                continue
            exits.append(
                _Exit(hit.day, rank["event"], comp.priority, hit.day, StatusKind.EVENT, hit.cause,
                      source=comp.component_id, note=f"{hit.cause} detected at {comp.component_id} assessment")
            )
        else:
            end = component_assessment_end(subject, s)
            candidates = [(a.day, a.cause) for a in s.actual if a.is_event and a.cause in comp.event_causes]
            if DEATH in comp.event_causes and subject.death_day is not None:
                candidates.append((subject.death_day, DEATH))
            for day, cause in sorted(candidates):
                if day > min(end, window.event_horizon):
                    audit.append(f"{comp.component_id}: {cause} on day {day} lies beyond the risk window, not counted")
                    continue
                exits.append(
                    _Exit(day, rank["event"], comp.priority, day, StatusKind.EVENT, cause,
                          note=f"{cause} observed on {comp.component_id}")
                )
                break

    for pos, ie in enumerate(_ies_with_death(subject, spec)):
        a = spec.assignment(ie.ie_type)
        if a is None:
            audit.append(f"{_ie_label(ie)}: no strategy assigned; ignored (implicit noumenal occlusion)")
            continue
        label = _ie_label(ie, a)
        if a.strategy in (Strategy.TREATMENT_POLICY, Strategy.PRINCIPAL_STRATUM):
            audit.append(f"{label}: strategy {a.strategy.value}; ignored, follow-up continues")
            continue
        if a.strategy is Strategy.COMPOSITE:
            day = ie.trigger_day
            audit.append(f"{label}: strategy composite; becomes an event of interest on day {day}")
            exits.append(_Exit(day, rank["ie"], pos, day, StatusKind.EVENT, ie.ie_type, note=f"composite {ie.ie_type}"))
            continue
        dated = _date_occlusion(ie, subject, spec, a, force_dating)
        handling = a.occlusion_handling.value
        if dated is None:
            audit.append(
                f"{label}: strategy {a.strategy.value}/{handling}; subjective trigger without linked withdrawal, "
                "does not occlude"
            )
            continue
        time, basis, source, order = dated
        audit.append(
            f"{label}: strategy {a.strategy.value}/{handling}; occlusion dated day {time} ({basis.value})"
            + (f", events through withdrawal day {order} still count" if order != time else "")
        )
        if time > window.end_day:
            time, basis, source = window.end_day, wbasis, window.end_source
            audit.append(f"occlusion date capped at risk window end day {time}")
        if a.occlusion_handling is OcclusionHandling.CENSOR:
            ex = _Exit(order, rank["ie"], pos, time, StatusKind.CENSORED, reason=CensorReason.NOUMENAL_STRATEGY,
                       basis=basis, source=source, note=f"occluded by {ie.ie_type}")
        else:
            ex = _Exit(order, rank["ie"], pos, time, StatusKind.COMPETING, ie.ie_type, basis=basis, source=source,
                       note=f"occluded by {ie.ie_type} as competing risk")
        exits.append(ex)

    if window.cutoff_bound:
        reason = CensorReason.ADMIN_CUTOFF
    elif any(
        ie.ie_type in spec.design_noumenal_events and ie.detection_day <= window.event_horizon
        for ie in subject.ie_occurrences
    ):
        reason = CensorReason.NOUMENAL_IMPLICIT_DESIGN
    else:
        reason = CensorReason.PHENOMENAL_INDIVIDUAL
    exits.append(
        _Exit(window.event_horizon, rank["window"], 0, window.end_day, StatusKind.CENSORED, reason=reason,
              basis=wbasis, source=window.end_source, note="end of risk window")
    )

    chosen = min(exits)
    for ex in sorted(exits):
        if ex is not chosen and ex.order_day >= chosen.order_day and ex.note != "end of risk window":
            audit.append(f"discarded: {ex.note} (day {ex.time}) after exit")
    if chosen.status is StatusKind.EVENT:
        audit.append(f"decision: event {chosen.cause} on day {chosen.time} ({chosen.note})")
        basis = OcclusionBasis.NONE
    elif chosen.status is StatusKind.COMPETING:
        audit.append(f"decision: competing {chosen.cause} on day {chosen.time} ({chosen.basis.value})")
        basis = chosen.basis
    else:
        audit.append(f"decision: censored on day {chosen.time}, {chosen.reason.value} ({chosen.basis.value}; {chosen.note})")
        basis = chosen.basis
    rec = DerivedAnalysisRecord(
        subject.subject_id, subject.arm, spec.estimand_id, chosen.time, chosen.status, chosen.cause,
        chosen.reason, basis, chosen.source, tuple(audit),
    )
    if spec.dating is not Dating.RIGHT:
        rec = redate_record(rec, subject, spec.dating)
    return rec


def derive_safety_record(subject: SubjectRecord, spec: EstimandSpec) -> DerivedAnalysisRecord:
    """Competing-risk while-treatment-emergent derivation.

    Observation runs from day 0 to last dose plus the treatment-emergent
    window. Safety events inside it are events, precluding events (death by
    default) are competing, and reaching the end of the window censors.
    """
    if subject.last_dose_day is None:
        raise DataError(f"subject {subject.subject_id}: last_dose_day is required for a safety estimand")
    w = spec.treatment_emergent_window_days
    if w is None:
        raise ContractViolation("derive_safety_record needs treatment_emergent_window_days")
    rank = {k: i for i, k in enumerate(spec.tie_order)}
    window_end = subject.last_dose_day + w
    end = min(window_end, subject.cutoff_day)
    audit = [
        f"estimand {spec.estimand_id}: treatment-emergent window day 0 to {window_end} "
        f"(last dose {subject.last_dose_day} + {w}); cutoff day {subject.cutoff_day}"
    ]
    exits = []
    for comp, s in _component_streams(subject, spec):
        for a in s.actual:
            if a.is_event and a.cause in comp.event_causes and a.day <= end:
                exits.append(_Exit(a.day, rank["event"], comp.priority, a.day, StatusKind.EVENT, a.cause,
                                   source=comp.component_id if s.discrete else None, note=f"{a.cause} in window"))
                break
        wd = _stream_withdrawal_day(subject, comp.component_id)
        if wd is not None and wd < end:
            day = wd
            if s.discrete:
                prior = [d for d in s.evaluable_days() if d <= wd]
                day = prior[-1] if prior else 0
            exits.append(_Exit(wd, rank["window"], comp.priority, day, StatusKind.CENSORED,
                               reason=CensorReason.PHENOMENAL_INDIVIDUAL,
                               basis=OcclusionBasis.LAST_ASSESSMENT if s.discrete else OcclusionBasis.ACTUAL_WITHDRAWAL,
                               source=comp.component_id if s.discrete else None,
                               note=f"withdrawn from {comp.component_id}"))
    if DEATH in spec.event_causes and subject.death_day is not None and subject.death_day <= end:
        exits.append(_Exit(subject.death_day, rank["event"], -1, subject.death_day, StatusKind.EVENT, DEATH,
                           note="death in window"))
    if DEATH in spec.precluding_causes and DEATH not in spec.event_causes and subject.death_day is not None and subject.death_day <= end:
        exits.append(_Exit(subject.death_day, rank["ie"], 0, subject.death_day, StatusKind.COMPETING, DEATH,
                           note="death precludes further safety events"))
    for pos, ie in enumerate(sorted(subject.ie_occurrences, key=lambda x: (x.trigger_day, x.ie_type)), start=1):
        if ie.ie_type in spec.precluding_causes and ie.trigger_day <= end:
            audit.append(f"{_ie_label(ie)}: precluding event")
            exits.append(_Exit(ie.trigger_day, rank["ie"], pos, ie.trigger_day, StatusKind.COMPETING, ie.ie_type,
                               basis=OcclusionBasis.TRIGGER_DATE, note=f"{ie.ie_type} precludes"))
        else:
            a = spec.assignment(ie.ie_type)
            how = a.strategy.value if a else "no strategy assigned"
            audit.append(f"{_ie_label(ie)}: strategy {how}; not precluding, ignored")
    if end < window_end:
        exits.append(_Exit(end, rank["window"], 0, end, StatusKind.CENSORED, reason=CensorReason.ADMIN_CUTOFF,
                           basis=OcclusionBasis.CUTOFF_DATE, note="data cutoff inside treatment-emergent window"))
    else:
        exits.append(_Exit(end, rank["window"], 0, end, StatusKind.CENSORED, reason=CensorReason.NOUMENAL_STRATEGY,
                           basis=OcclusionBasis.TRIGGER_DATE, note="end of treatment-emergent window"))
    chosen = min(exits)
    basis = OcclusionBasis.NONE if chosen.status is StatusKind.EVENT else chosen.basis
    audit.append(f"decision: {chosen.status.value} on day {chosen.time} ({chosen.note})")
    return DerivedAnalysisRecord(
        subject.subject_id, subject.arm, spec.estimand_id, chosen.time, chosen.status, chosen.cause,
        chosen.reason, basis, chosen.source, tuple(audit),
    )


# --------------------------------------------------------------------------
# re-dating (shared with the sensitivity module)


def redated_day(day, prior, mode: Dating):
    """Move ``day`` inside the interval (prior, day] according to ``mode``."""
    if mode is Dating.RIGHT:
        return day
    if mode is Dating.LEFT:
        return prior + 1
    return math.ceil((prior + day) / 2)


def redate_record(record: DerivedAnalysisRecord, subject: SubjectRecord, mode: Dating) -> DerivedAnalysisRecord:
    """Re-date a record fixed by a discrete assessment; other records pass through."""
    if mode is Dating.RIGHT or record.source_component is None:
        return record
    stream = subject.stream(record.source_component)
    if stream is None or not stream.discrete or record.time_days <= 0:
        return record  # day 0 has no interval to move within
    prior = [d for d in stream.evaluable_days() if d < record.time_days]
    p = prior[-1] if prior else 0
    new = redated_day(record.time_days, p, mode)
    note = f"re-dated {mode.value}: day {record.time_days} -> {new} (last prior {record.source_component} assessment day {p})"
    if not prior:
        note += "; no prior assessment, interval starts at day 0"
    return replace(record, time_days=new, audit=record.audit + (note,))


# --------------------------------------------------------------------------
# datasets


@dataclass(frozen=True)
class DatasetAudit:
    n_records: int
    by_status: dict
    by_censor_reason: dict

    def lines(self):
        out = [f"records: {self.n_records}"]
        out += [f"status {k}: {v}" for k, v in sorted(self.by_status.items())]
        out += [f"censor reason {k}: {v}" for k, v in sorted(self.by_censor_reason.items())]
        return out


@dataclass(frozen=True)
class DerivedDataset:
    estimand_id: str
    records: tuple[DerivedAnalysisRecord, ...]
    audit: DatasetAudit


def summarize(records) -> DatasetAudit:
    status = Counter(r.status.value for r in records)
    reasons = Counter(r.censor_reason.value for r in records if r.censor_reason is not None)
    return DatasetAudit(len(records), dict(sorted(status.items())), dict(sorted(reasons.items())))


def _derive_one(args):
    subject, spec, force = args
    try:
        return derive_record(subject, spec, force)
    except DataError as exc:
        raise DataError(f"subject {subject.subject_id}: {exc}") from exc


def derive_dataset(subjects, spec: EstimandSpec, workers: int = 1, force_dating=None) -> DerivedDataset:
    """Derive every subject; records are ordered by subject_id."""
    ordered = sorted(subjects, key=lambda s: s.subject_id)
    records = parallel_map(_derive_one, [(s, spec, force_dating) for s in ordered], workers)
    return DerivedDataset(spec.estimand_id, tuple(records), summarize(records))
