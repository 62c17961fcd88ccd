from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import (
    Q6W,
    assignment,
    continuous,
    discrete,
    ie,
    os_spec,
    pfs_spec,
    subject,
    weeks,
    withdrawal,
)
from occlude.derivation import (
    WindowBasis,
    apply_gap_rule,
    component_assessment_end,
    composite_risk_window,
    derive_dataset,
    derive_record,
    occlusion_dating,
)
from occlude.errors import ContractViolation, NotAssessableError, DataError
from occlude.model import (
    CensorReason,
    Component,
    Dating,
    EstimandSpec,
    OcclusionBasis,
    StatusKind,
    UnscheduledAssumption,
)

Q2W = weeks(*range(2, 61, 2))


def symptom_spec(assumption):
    comps = (Component("tumor", ("progression",), 1), Component("symptoms", ("deterioration",), 2),
             Component("survival", ("death",), 3))
    return EstimandSpec("spfs", comps, unscheduled_assumption=UnscheduledAssumption(assumption))


# --------------------------------------------------------------------------
# component end


def test_discrete_component_ends_at_last_scan():
    s = subject(streams=[discrete("tumor", Q6W, attended=weeks(6, 12, 18))])
    assert component_assessment_end(s, s.stream("tumor")) == 126


def test_continuous_component_runs_to_cutoff():
    s = subject(streams=[continuous("survival")])
    assert component_assessment_end(s, s.stream("survival")) == 400


def test_continuous_component_stops_at_its_withdrawal():
    s = subject(streams=[continuous("survival")], withdrawals=[withdrawal(77, streams=("survival",))], death=300)
    assert component_assessment_end(s, s.stream("survival")) == 77


def test_empty_discrete_component_is_day_zero_with_note():
    s = subject(streams=[discrete("pro", Q2W)])
    notes = []
    assert component_assessment_end(s, s.stream("pro"), notes) == 0
    assert "never established" in notes[0]


# --------------------------------------------------------------------------
# risk window


def early_tumor_end():
    return subject(streams=[
        discrete("tumor", Q6W, attended=weeks(6, 12, 18)),
        discrete("symptoms", Q2W, attended=weeks(*range(2, 31, 2))),
        continuous("survival"),
    ])


def test_window_discrete_assumption_counts_later_symptom_visits():
    w = composite_risk_window(early_tumor_end(), symptom_spec("discrete"))
    assert w.end_day == weeks(22)[0] == 154
    assert w.ending_component == "tumor"
    assert w.basis is WindowBasis.LAST_CROSS_COMPONENT_ASSESSMENT


def test_window_continuous_assumption_stops_at_last_scan():
    w = composite_risk_window(early_tumor_end(), symptom_spec("continuous"))
    assert w.end_day == 126
    assert w.basis is WindowBasis.LAST_OWN_ASSESSMENT


@pytest.mark.parametrize("assumption", ["discrete", "continuous"])
def test_window_symptoms_ending_first(assumption):
    s = subject(streams=[
        discrete("tumor", Q6W, attended=weeks(6, 12, 18, 24, 30)),
        discrete("symptoms", Q2W, attended=weeks(*range(2, 27, 2))),
        continuous("survival"),
    ])
    assert composite_risk_window(s, symptom_spec(assumption)).end_day == 182


def test_window_with_full_attendance_binds_at_cutoff():
    s = subject(cutoff=130, streams=[discrete("tumor", Q6W, attended=weeks(6, 12, 18)), continuous("survival")])
    w = composite_risk_window(s, pfs_spec())
    assert w.cutoff_bound
    rec = derive_record(s, pfs_spec())
    assert rec.censor_reason is CensorReason.ADMIN_CUTOFF


def test_window_end_not_after_cutoff():
    s = subject(cutoff=100, streams=[continuous("survival")])
    assert composite_risk_window(s, os_spec()).end_day == 100


def test_death_between_scans_counts():
    s = subject(death=150, streams=[discrete("tumor", Q6W, attended=weeks(6, 12, 18)), continuous("survival")])
    rec = derive_record(s, pfs_spec())
    assert (rec.status, rec.cause, rec.time_days) == (StatusKind.EVENT, "death", 150)


def test_death_after_missed_scan_is_censored_at_last_scan():
    s = subject(death=200, streams=[discrete("tumor", Q6W, attended=weeks(6, 12, 18)), continuous("survival")])
    rec = derive_record(s, pfs_spec())
    assert (rec.status, rec.time_days) == (StatusKind.CENSORED, 126)
    assert rec.censor_reason is CensorReason.PHENOMENAL_INDIVIDUAL
    assert rec.occlusion_basis is OcclusionBasis.LAST_ASSESSMENT


# --------------------------------------------------------------------------
# gap rule

GAP_SCHED = weeks(6, 12, 18, 24, 30)


def gap_stream():
    return discrete("tumor", GAP_SCHED, attended=weeks(6, 12, 30), events={210: "progression"})


def test_gap_rule_two_missed_censors_at_last_contiguous():
    out = apply_gap_rule(210, gap_stream(), 2)
    assert not out.counted
    assert out.censor_day == 84
    assert out.missed == 2


def test_gap_rule_one_missed_counts():
    s = discrete("tumor", GAP_SCHED, attended=weeks(6, 12, 24), events={168: "progression"})
    assert apply_gap_rule(168, s, 2).counted


def test_gap_rule_disabled():
    assert apply_gap_rule(210, gap_stream(), 0).counted


@pytest.mark.parametrize("G, expected", [(2, (StatusKind.CENSORED, 84)), (0, (StatusKind.EVENT, 210))])
def test_gap_rule_in_derivation(G, expected):
    s = subject(streams=[gap_stream(), continuous("survival")])
    rec = derive_record(s, pfs_spec(gap_rule=G))
    assert (rec.status, rec.time_days) == expected


# --------------------------------------------------------------------------
# occlusion dating


def hyp(subjective=False):
    return assignment("trig", "hypothetical", "censor", "subjective" if subjective else None)


def test_objective_trigger_dated_at_trigger():
    s = subject(streams=[continuous("survival")], ies=[ie("trig", 42)], withdrawals=[withdrawal(56, "trig")])
    assert occlusion_dating(s.ie_occurrences[0], s, os_spec(hyp()), hyp()) == (42, OcclusionBasis.TRIGGER_DATE)


def test_objective_trigger_uses_onset_when_known():
    s = subject(streams=[continuous("survival")], ies=[ie("trig", 42, onset=30)])
    assert occlusion_dating(s.ie_occurrences[0], s, os_spec(hyp()), hyp())[0] == 30


def test_subjective_trigger_continuous_endpoint_dated_at_withdrawal():
    s = subject(streams=[continuous("survival")], ies=[ie("trig", 42)], withdrawals=[withdrawal(56, "trig")])
    a = hyp(True)
    assert occlusion_dating(s.ie_occurrences[0], s, os_spec(a), a) == (56, OcclusionBasis.ACTUAL_WITHDRAWAL)


def test_subjective_trigger_discrete_endpoint_dated_at_last_assessment():
    tumor = discrete("tumor", Q6W, attended=(42,), unscheduled=(55,))
    s = subject(streams=[tumor, continuous("survival")], ies=[ie("trig", 42)], withdrawals=[withdrawal(56, "trig")])
    a = hyp(True)
    assert occlusion_dating(s.ie_occurrences[0], s, pfs_spec(a), a) == (55, OcclusionBasis.LAST_ASSESSMENT)


def test_subjective_trigger_without_withdrawal_does_not_occlude():
    s = subject(streams=[continuous("survival")], ies=[ie("trig", 42)], death=90)
    a = hyp(True)
    assert occlusion_dating(s.ie_occurrences[0], s, os_spec(a), a) is None
    assert derive_record(s, os_spec(a)).status is StatusKind.EVENT


def test_occlusion_dating_rejects_other_strategies():
    a = assignment("trig", "composite")
    s = subject(streams=[continuous("survival")], ies=[ie("trig", 42)])
    with pytest.raises(ContractViolation):
        occlusion_dating(s.ie_occurrences[0], s, os_spec(a), a)


def test_identification_day_never_dates():
    s = subject(streams=[continuous("survival")], ies=[ie("trig", 42, identification=80)])
    assert occlusion_dating(s.ie_occurrences[0], s, os_spec(hyp()), hyp())[0] == 42


# --------------------------------------------------------------------------
# strategy dispatch


def ie_death(strategy, subjective=False):
    handling = "censor" if strategy in ("hypothetical", "while_prior_to_occlusion") else None
    a = assignment("trig", strategy, handling, "subjective" if subjective else None)
    s = subject(streams=[continuous("survival")], ies=[ie("trig", 50 if strategy != "hypothetical" else 42)],
                withdrawals=[withdrawal(56, "trig")] if strategy == "hypothetical" else (), death=80 if
                strategy != "hypothetical" else 50)
    return derive_record(s, os_spec(a))


def test_composite_ie_becomes_event_and_later_death_is_discarded():
    r = ie_death("composite")
    assert (r.status, r.cause, r.time_days) == (StatusKind.EVENT, "trig", 50)
    assert any("discarded" in line and "death" in line for line in r.audit)


def test_treatment_policy_ie_is_transparent():
    r = ie_death("treatment_policy")
    assert (r.status, r.cause, r.time_days) == (StatusKind.EVENT, "death", 80)


def test_hypothetical_objective_censors_at_trigger():
    r = ie_death("hypothetical")
    assert (r.status, r.time_days, r.censor_reason) == (StatusKind.CENSORED, 42, CensorReason.NOUMENAL_STRATEGY)


def test_hypothetical_subjective_counts_event_before_withdrawal():
    r = ie_death("hypothetical", subjective=True)
    assert (r.status, r.cause, r.time_days) == (StatusKind.EVENT, "death", 50)


def test_competing_risk_handling():
    a = assignment("trig", "while_prior_to_occlusion", "competing_risk")
    s = subject(streams=[continuous("survival")], ies=[ie("trig", 30)], death=80)
    r = derive_record(s, os_spec(a))
    assert (r.status, r.cause, r.time_days, r.occlusion_basis) == (
        StatusKind.COMPETING, "trig", 30, OcclusionBasis.TRIGGER_DATE)


def test_unassigned_ie_is_audited_and_ignored():
    s = subject(streams=[continuous("survival")], ies=[ie("mystery", 30)], death=80)
    r = derive_record(s, os_spec())
    assert r.status is StatusKind.EVENT
    assert any("implicit noumenal" in line for line in r.audit)


def test_design_noumenal_end_reason():
    tumor = discrete("tumor", Q6W, attended=weeks(6, 12))
    s = subject(streams=[tumor, continuous("survival")], ies=[ie("radiological_progression", 84)])
    r = derive_record(s, pfs_spec(design_noumenal_events=frozenset({"radiological_progression"})))
    assert (r.status, r.censor_reason) == (StatusKind.CENSORED, CensorReason.NOUMENAL_IMPLICIT_DESIGN)


def test_same_day_tie_prefers_event_by_default():
    a = assignment("trig", "hypothetical", "censor")
    s = subject(streams=[continuous("survival")], ies=[ie("trig", 60)], death=60)
    assert derive_record(s, os_spec(a)).status is StatusKind.EVENT
    flipped = os_spec(a, tie_order=("ie", "event", "window"))
    assert derive_record(s, flipped).status is StatusKind.CENSORED


def test_component_priority_breaks_same_day_ties():
    tumor = discrete("tumor", Q6W, attended=(42, 84), events={84: "progression"})
    s = subject(streams=[tumor, continuous("survival")], death=84)
    assert derive_record(s, pfs_spec()).cause == "progression"


def test_not_assessable():
    s = subject(streams=[discrete("pro", Q6W, attended=(42,))])
    with pytest.raises(NotAssessableError, match="not assessable"):
        derive_record(s, pfs_spec())


def test_dataset_errors_carry_subject_id():
    s = subject("Z9", streams=[discrete("pro", Q6W, attended=(42,))])
    with pytest.raises(DataError, match="Z9"):
        derive_dataset([s], pfs_spec())


def test_dataset_all_event_free_is_admin_cutoff():
    subs = [subject(f"S{i}", streams=[continuous("survival")]) for i in (3, 1, 2)]
    ds = derive_dataset(subs, os_spec())
    assert [r.subject_id for r in ds.records] == ["S1", "S2", "S3"]
    assert all(r.censor_reason is CensorReason.ADMIN_CUTOFF and r.time_days == 400 for r in ds.records)
    assert all(r.occlusion_basis is OcclusionBasis.CUTOFF_DATE for r in ds.records)
    assert ds.audit.by_censor_reason == {"admin_cutoff": 3}


def test_empty_dataset():
    ds = derive_dataset([], os_spec())
    assert ds.records == () and ds.audit.n_records == 0 and ds.audit.by_status == {}


# --------------------------------------------------------------------------
# safety estimand


def safety_spec():
    comps = (Component("ae", ("ae_of_interest",), 1),)
    return EstimandSpec("teae", comps, treatment_emergent_window_days=30)


@pytest.mark.parametrize(
    "events, death, expected",
    [
        ({120: "ae_of_interest"}, None, (StatusKind.EVENT, 120, "ae_of_interest")),
        ({}, 110, (StatusKind.COMPETING, 110, "death")),
        ({}, None, (StatusKind.CENSORED, 130, None)),
        ({140: "ae_of_interest"}, None, (StatusKind.CENSORED, 130, None)),
    ],
)
def test_safety_window(events, death, expected):
    s = subject(streams=[continuous("ae", events)], last_dose=100, death=death)
    r = derive_record(s, safety_spec())
    assert (r.status, r.time_days, r.cause) == expected
    if r.status is StatusKind.CENSORED:
        assert r.censor_reason is CensorReason.NOUMENAL_STRATEGY


def test_safety_needs_last_dose():
    with pytest.raises(DataError, match="last_dose"):
        derive_record(subject(streams=[continuous("ae")]), safety_spec())


def test_safety_cutoff_inside_window():
    s = subject(cutoff=115, streams=[continuous("ae")], last_dose=100)
    r = derive_record(s, safety_spec())
    assert (r.time_days, r.censor_reason) == (115, CensorReason.ADMIN_CUTOFF)


# --------------------------------------------------------------------------
# spec-level dating


def test_spec_dating_redates_discrete_events():
    tumor = discrete("tumor", Q6W, attended=weeks(6, 12, 18, 24), events={168: "progression"})
    s = subject(streams=[tumor, continuous("survival")])
    got = {m: derive_record(s, pfs_spec(dating=Dating(m))).time_days for m in ("right", "left", "midpoint")}
    assert got == {"right": 168, "left": 127, "midpoint": 147}


# --------------------------------------------------------------------------
# properties


@st.composite
def timelines(draw):
    n_targets = 8
    sched = Q6W[:n_targets]
    attended = sorted(draw(st.sets(st.sampled_from(sched), max_size=n_targets)))
    ev_day = draw(st.one_of(st.none(), st.sampled_from(attended))) if attended else None
    if ev_day is not None:
        attended = [d for d in attended if d <= ev_day]
    cutoff = draw(st.integers(min_value=max(attended, default=0), max_value=500))
    death = draw(st.one_of(st.none(), st.integers(min_value=max(attended, default=0), max_value=cutoff)))
    trig = draw(st.integers(min_value=0, max_value=cutoff))
    wd = draw(st.one_of(st.none(), st.integers(min_value=trig, max_value=cutoff)))
    tumor = discrete("tumor", sched, attended=attended, events={ev_day: "progression"} if ev_day else None)
    return subject(
        cutoff=cutoff,
        streams=[tumor, continuous("survival")],
        ies=[ie("trig", trig)],
        withdrawals=[withdrawal(wd, "trig")] if wd is not None else (),
        death=death,
    )


@settings(max_examples=150, deadline=None)
@given(timelines())
def test_treatment_policy_equals_principal_stratum(s):
    a = derive_record(s, pfs_spec(assignment("trig", "treatment_policy")))
    b = derive_record(s, pfs_spec(assignment("trig", "principal_stratum")))
    strip = lambda r: replace(r, audit=("-",))  # noqa: E731
    assert strip(a) == strip(b)


@settings(max_examples=150, deadline=None)
@given(timelines())
def test_strategy_monotonicity(s):
    obj = derive_record(s, pfs_spec(assignment("trig", "hypothetical", "censor"))).time_days
    subj = derive_record(s, pfs_spec(assignment("trig", "hypothetical", "censor", "subjective"))).time_days
    tp = derive_record(s, pfs_spec(assignment("trig", "treatment_policy"))).time_days
    assert obj <= subj <= tp


@settings(max_examples=150, deadline=None)
@given(timelines())
def test_record_invariants(s):
    for strategy in ("treatment_policy", "composite", "hypothetical", "while_prior_to_occlusion"):
        handling = "competing_risk" if strategy == "while_prior_to_occlusion" else (
            "censor" if strategy == "hypothetical" else None)
        r = derive_record(s, pfs_spec(assignment("trig", strategy, handling)))
        assert 0 <= r.time_days <= s.cutoff_day
        assert any(strategy in line for line in r.audit)
        if r.status is StatusKind.EVENT:
            assert r.occlusion_basis is OcclusionBasis.NONE


@settings(max_examples=100, deadline=None)
@given(timelines())
def test_discrete_window_not_shorter_than_continuous(s):
    d = composite_risk_window(s, pfs_spec(unscheduled_assumption=UnscheduledAssumption.DISCRETE)).end_day
    c = composite_risk_window(s, pfs_spec(unscheduled_assumption=UnscheduledAssumption.CONTINUOUS)).end_day
    assert d >= c


@settings(max_examples=100, deadline=None)
@given(timelines())
def test_events_ignore_later_data(s):
    spec = pfs_spec(assignment("trig", "treatment_policy"))
    r = derive_record(s, spec)
    if r.status is not StatusKind.EVENT or r.time_days >= s.cutoff_day:
        return
    later = replace(s, ie_occurrences=s.ie_occurrences + (ie("other", r.time_days + 1),),
                    death_day=s.death_day if s.death_day is not None and s.death_day <= r.time_days else None)
    spec2 = pfs_spec(assignment("trig", "treatment_policy"), assignment("other", "composite"))
    r2 = derive_record(later, spec2)
    assert (r2.status, r2.time_days, r2.cause) == (r.status, r.time_days, r.cause)


def test_parallel_derivation_matches_sequential():
    from occlude.io import read_specs, read_subjects
    from helpers import FIXTURES

    subs = read_subjects(FIXTURES / "golden_subjects.csv")
    spec = read_specs(FIXTURES / "golden_spec.json")[0]
    assert derive_dataset(subs, spec, workers=1) == derive_dataset(subs, spec, workers=3)
