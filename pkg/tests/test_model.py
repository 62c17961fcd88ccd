from dataclasses import replace

import pytest

from helpers import Q6W, assignment, continuous, discrete, ie, pfs_spec, subject, withdrawal
from occlude.model import (
    Component,
    DerivedAnalysisRecord,
    EstimandSpec,
    FindingKind,
    OcclusionBasis,
    StatusKind,
    StrategyAssignment,
    Strategy,
    OcclusionHandling,
    CensorReason,
    validate_spec_against_data,
    validate_subject,
)


def good():
    return subject(
        streams=[discrete("tumor", Q6W, attended=Q6W[:3]), continuous("survival")],
        ies=[ie("switch", 70, onset=60)],
        withdrawals=[withdrawal(90, "switch")],
    )


def test_well_formed_record_has_no_violations():
    assert validate_subject(good()) == []


def test_onset_after_detection_is_one_violation():
    s = replace(good(), ie_occurrences=(ie("switch", 50, onset=60),), withdrawals=())
    v = validate_subject(s)
    assert len(v) == 1
    assert "onset_day <= detection_day" in v[0].rule
    assert v[0].subject_id == "X"


def test_assessment_after_death():
    s = subject(death=40, streams=[discrete("tumor", Q6W, attended=(42,))])
    rules = [v.rule for v in validate_subject(s)]
    assert "assessment after death" in rules


@pytest.mark.parametrize(
    "mutate, needle",
    [
        (lambda s: replace(s, cutoff_day=60), "assessment after cutoff"),
        (lambda s: replace(s, withdrawals=(withdrawal(65, "switch"),)), "precedes detection"),
        (lambda s: replace(s, withdrawals=(withdrawal(95, "nothing"),)), "not among"),
        (lambda s: replace(s, withdrawals=(withdrawal(95, None, ("pro",)),)), "does not exist"),
        (lambda s: replace(s, death_day=500), "death_day"),
    ],
)
def test_violations_name_their_rule(mutate, needle):
    assert any(needle in v.rule for v in validate_subject(mutate(good())))


def test_discrete_stream_needs_schedule():
    s = subject(streams=[discrete("tumor", (), attended=())])
    assert any("nonempty schedule" in v.rule for v in validate_subject(s))


def test_validation_is_pure():
    s = replace(good(), cutoff_day=30, death_day=20)
    assert validate_subject(s) == validate_subject(s)


def test_strategy_assignment_handling_invariant():
    with pytest.raises(ValueError):
        StrategyAssignment("x", Strategy.TREATMENT_POLICY, OcclusionHandling.CENSOR)
    with pytest.raises(ValueError):
        StrategyAssignment("x", Strategy.HYPOTHETICAL)
    assert StrategyAssignment("x", Strategy.HYPOTHETICAL, OcclusionHandling.CENSOR).strategy.occludes_by_dating


def test_spec_priorities_unique():
    with pytest.raises(ValueError, match="priorit"):
        EstimandSpec("e", (Component("a", ("x",), 1), Component("b", ("y",), 1)))


def test_derived_record_invariants():
    base = dict(subject_id="s", arm="A", estimand_id="e", audit=("x",))
    with pytest.raises(ValueError):
        DerivedAnalysisRecord(time_days=-1, status=StatusKind.EVENT, **base)
    with pytest.raises(ValueError):
        DerivedAnalysisRecord(time_days=1, status=StatusKind.EVENT, occlusion_basis=OcclusionBasis.TRIGGER_DATE, **base)
    with pytest.raises(ValueError):
        DerivedAnalysisRecord(time_days=1, status=StatusKind.CENSORED, **base)
    with pytest.raises(ValueError):
        DerivedAnalysisRecord("s", "A", "e", 1, StatusKind.EVENT, "x", audit=())
    DerivedAnalysisRecord(time_days=1, status=StatusKind.CENSORED, censor_reason=CensorReason.ADMIN_CUTOFF, **base)


def test_unacknowledged_event_is_implicit_noumenal_occlusion():
    sched = tuple(range(14, 200, 14))
    pro = discrete("pro", sched, attended=sched[:4])
    subs = [subject("P1", streams=[pro], ies=[ie("radiological_progression", 56)]), good()]
    spec = pfs_spec(assignment("switch", "treatment_policy"))
    findings = validate_spec_against_data(spec, subs)
    alarms = [f for f in findings if f.kind is FindingKind.IMPLICIT_NOUMENAL_OCCLUSION]
    assert [f.subject for f in alarms] == ["radiological_progression"]
    assert alarms[0].subjects == ("P1",)


def test_covered_types_give_no_findings():
    spec = pfs_spec(assignment("switch", "treatment_policy"))
    assert validate_spec_against_data(spec, [good()]) == []


def test_unused_strategy_is_informational_only():
    spec = pfs_spec(assignment("switch", "treatment_policy"), assignment("rescue", "composite"))
    findings = validate_spec_against_data(spec, [good()])
    assert [f.kind for f in findings] == [FindingKind.UNUSED_STRATEGY]
    assert findings[0].informational


def test_every_observed_type_maps_to_exactly_one_outcome():
    subs = [good(), subject("Y", streams=[continuous("survival")], ies=[ie("a", 3), ie("b", 4)])]
    spec = pfs_spec(assignment("a", "composite"))
    findings = validate_spec_against_data(spec, subs)
    flagged = {f.subject for f in findings if f.kind is FindingKind.IMPLICIT_NOUMENAL_OCCLUSION}
    covered = {a.ie_type for a in spec.strategy_table}
    observed = {o.ie_type for s in subs for o in s.ie_occurrences}
    assert flagged | covered >= observed
    assert not flagged & covered
