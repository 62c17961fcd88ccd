"""File formats: subject data, estimand specs, derived datasets.

Subject CSV has one row per timeline element. Column order is fixed::

    subject_id, arm, record_kind, component_id, target_day, actual_day,
    outcome, ie_type, onset_day, detection_day, identification_day,
    objectivity, withdrawal_day, cutoff_day

``record_kind`` is one of ``subject`` (cutoff_day), ``entry`` (calendar
accrual day in actual_day), ``stream`` (declares component_id), ``schedule``
(one target_day), ``assessment`` (target_day blank when unscheduled; outcome
``normal``, ``none`` or ``event:<cause>``), ``ie``, ``withdrawal``
(component_id ``ALL`` or ``a;b``, ie_type = linked trigger), ``death`` and
``last_dose`` (day in actual_day). A stream with schedule rows is discretely
scheduled, otherwise continuous.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
import warnings
from pathlib import Path

from .errors import DataError, MissingFieldError, SpecError, SpecSyntaxError, UnknownStrategyError
from .model import (
    ALL_STREAMS,
    Assessment,
    AssessmentStream,
    CensorReason,
    Component,
    Continuity,
    Dating,
    DerivedAnalysisRecord,
    EstimandSpec,
    IntercurrentOccurrence,
    Objectivity,
    OcclusionBasis,
    OcclusionHandling,
    Outcome,
    StatusKind,
    Strategy,
    StrategyAssignment,
    SubjectRecord,
    UnscheduledAssumption,
    WithdrawalRecord,
)

SUBJECT_COLUMNS = (
    "subject_id", "arm", "record_kind", "component_id", "target_day", "actual_day", "outcome", "ie_type",
    "onset_day", "detection_day", "identification_day", "objectivity", "withdrawal_day", "cutoff_day",
)
DERIVED_COLUMNS = (
    "subject_id", "arm", "estimand_id", "time_days", "status", "cause", "censor_reason", "occlusion_basis",
    "source_component",
)


class SpecNote(UserWarning):
    """Non-fatal remark raised while parsing a spec (e.g. a deprecated alias)."""


def atomic_write(path, text):
    """Write ``text`` so that ``path`` is either complete or absent."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# --------------------------------------------------------------------------
# subjects: JSON


def _opt(v):
    return None if v is None else int(v)


def subject_to_dict(s: SubjectRecord) -> dict:
    return {
        "subject_id": s.subject_id,
        "arm": s.arm,
        "cutoff_day": s.cutoff_day,
        "entry_day": s.entry_day,
        "death_day": s.death_day,
        "last_dose_day": s.last_dose_day,
        "streams": [
            {
                "component_id": st.component_id,
                "continuity": st.continuity.value,
                "schedule": list(st.schedule),
                "actual": [
                    {"day": a.day, "outcome": a.outcome.value, "cause": a.cause, "target_index": a.target_index}
                    for a in st.actual
                ],
            }
            for st in s.streams
        ],
        "ie_occurrences": [
            {
                "ie_type": ie.ie_type,
                "onset_day": ie.onset_day,
                "detection_day": ie.detection_day,
                "identification_day": ie.identification_day,
                "objectivity": ie.objectivity.value,
            }
            for ie in s.ie_occurrences
        ],
        "withdrawals": [
            {
                "withdrawal_day": w.withdrawal_day,
                "withdrawn_streams": sorted(w.withdrawn_streams),
                "linked_trigger": w.linked_trigger,
            }
            for w in s.withdrawals
        ],
    }


def subject_from_dict(d: dict) -> SubjectRecord:
    try:
        return SubjectRecord(
            subject_id=str(d["subject_id"]),
            arm=str(d["arm"]),
            cutoff_day=int(d["cutoff_day"]),
            entry_day=int(d.get("entry_day", 0)),
            death_day=_opt(d.get("death_day")),
            last_dose_day=_opt(d.get("last_dose_day")),
            streams=tuple(
                AssessmentStream(
                    st["component_id"],
                    Continuity(st["continuity"]),
                    tuple(int(t) for t in st.get("schedule", ())),
                    tuple(
                        Assessment(int(a["day"]), Outcome(a.get("outcome", "normal")), a.get("cause"),
                                   _opt(a.get("target_index")))
                        for a in st.get("actual", ())
                    ),
                )
                for st in d.get("streams", ())
            ),
            ie_occurrences=tuple(
                IntercurrentOccurrence(
                    ie["ie_type"], int(ie["detection_day"]), _opt(ie.get("onset_day")),
                    _opt(ie.get("identification_day")), Objectivity(ie.get("objectivity", "objective")),
                )
                for ie in d.get("ie_occurrences", ())
            ),
            withdrawals=tuple(
                WithdrawalRecord(
                    int(w["withdrawal_day"]), frozenset(w.get("withdrawn_streams", [ALL_STREAMS])),
                    w.get("linked_trigger"),
                )
                for w in d.get("withdrawals", ())
            ),
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise DataError(f"subject {d.get('subject_id', '?')}: malformed record ({exc!r})") from exc


def subjects_to_json(subjects) -> str:
    return json.dumps({"subjects": [subject_to_dict(s) for s in subjects]}, indent=1) + "\n"


def subjects_from_json(text) -> list[SubjectRecord]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"subject JSON: {exc.msg} at line {exc.lineno} column {exc.colno}") from exc
    items = doc["subjects"] if isinstance(doc, dict) else doc
    return [subject_from_dict(d) for d in items]


# --------------------------------------------------------------------------
# subjects: CSV


def _fmt(v):
    return "" if v is None else str(v)


def _outcome_str(a):
    return f"event:{a.cause}" if a.is_event else a.outcome.value


def subjects_to_csv(subjects) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUBJECT_COLUMNS)

    def row(s, kind, **kw):
        w.writerow([s.subject_id, s.arm, kind] + [_fmt(kw.get(c)) for c in SUBJECT_COLUMNS[3:]])

    for s in subjects:
        row(s, "subject", cutoff_day=s.cutoff_day)
        if s.entry_day:
            row(s, "entry", actual_day=s.entry_day)
        for st in s.streams:
            row(s, "stream", component_id=st.component_id)
            for t in st.schedule:
                row(s, "schedule", component_id=st.component_id, target_day=t)
            for a in st.actual:
                target = None if a.target_index is None else st.schedule[a.target_index]
                row(s, "assessment", component_id=st.component_id, target_day=target, actual_day=a.day,
                    outcome=_outcome_str(a))
        for ie in s.ie_occurrences:
            row(s, "ie", ie_type=ie.ie_type, onset_day=ie.onset_day, detection_day=ie.detection_day,
                identification_day=ie.identification_day, objectivity=ie.objectivity.value)
        for wd in s.withdrawals:
            row(s, "withdrawal", component_id=";".join(sorted(wd.withdrawn_streams)), ie_type=wd.linked_trigger,
                withdrawal_day=wd.withdrawal_day)
        if s.death_day is not None:
            row(s, "death", actual_day=s.death_day)
        if s.last_dose_day is not None:
            row(s, "last_dose", actual_day=s.last_dose_day)
    return buf.getvalue()


def _int_or_none(v, where):
    if v is None or v == "":
        return None
    try:
        return int(v)
    except ValueError as exc:
        raise DataError(f"{where}: expected an integer day, got {v!r}") from exc


def _csv_enum(cls, value, where):
    try:
        return cls(value)
    except ValueError:
        raise DataError(f"{where}: {value!r} is not one of {', '.join(m.value for m in cls)}") from None


def subjects_from_csv(text) -> list[SubjectRecord]:
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != SUBJECT_COLUMNS:
        raise DataError(f"subject CSV header must be exactly: {','.join(SUBJECT_COLUMNS)}")
    order, acc = [], {}
    for lineno, r in enumerate(reader, start=2):
        where = f"line {lineno}"
        sid = r["subject_id"]
        if not sid:
            raise DataError(f"{where}: empty subject_id")
        if sid not in acc:
            order.append(sid)
            acc[sid] = {"subject_id": sid, "arm": r["arm"], "streams": {}, "stream_order": [], "ie": [], "wd": []}
        d = acc[sid]
        if r["arm"] != d["arm"]:
            raise DataError(f"{where}: subject {sid} has inconsistent arm {r['arm']!r}")
        kind = r["record_kind"]
        day = lambda col: _int_or_none(r[col], f"{where} {col}")  # noqa: E731

        def stream(cid):
            if not cid:
                raise DataError(f"{where}: component_id required for {kind} row")
            if cid not in d["streams"]:
                d["streams"][cid] = {"schedule": [], "actual": []}
                d["stream_order"].append(cid)
            return d["streams"][cid]

        if kind == "subject":
            d["cutoff_day"] = day("cutoff_day")
        elif kind == "entry":
            d["entry_day"] = day("actual_day")
        elif kind == "stream":
            stream(r["component_id"])
        elif kind == "schedule":
            stream(r["component_id"])["schedule"].append(day("target_day"))
        elif kind == "assessment":
            oc = r["outcome"] or "normal"
            cause = None
            if oc.startswith("event:"):
                oc, cause = "event", oc[len("event:"):]
            try:
                outcome = Outcome(oc)
            except ValueError as exc:
                raise DataError(f"{where}: unknown outcome {r['outcome']!r}") from exc
            stream(r["component_id"])["actual"].append((day("target_day"), day("actual_day"), outcome, cause))
        elif kind == "ie":
            d["ie"].append(
                IntercurrentOccurrence(
                    r["ie_type"], day("detection_day"), day("onset_day"), day("identification_day"),
                    _csv_enum(Objectivity, r["objectivity"] or "objective", f"{where}, objectivity"),
                )
            )
        elif kind == "withdrawal":
            streams = frozenset(x for x in (r["component_id"] or ALL_STREAMS).split(";") if x)
            d["wd"].append(WithdrawalRecord(day("withdrawal_day"), streams, r["ie_type"] or None))
        elif kind == "death":
            d["death_day"] = day("actual_day")
        elif kind == "last_dose":
            d["last_dose_day"] = day("actual_day")
        else:
            raise DataError(f"{where}: unknown record_kind {kind!r}")

    out = []
    for sid in order:
        d = acc[sid]
        if d.get("cutoff_day") is None:
            raise DataError(f"subject {sid}: missing 'subject' row with cutoff_day")
        streams = []
        for cid in d["stream_order"]:
            st = d["streams"][cid]
            sched = tuple(st["schedule"])
            actual = []
            for target, actual_day, outcome, cause in st["actual"]:
                idx = None
                if target is not None:
                    if target not in sched:
                        raise DataError(f"subject {sid}: assessment target day {target} not in {cid} schedule")
                    idx = sched.index(target)
                actual.append(Assessment(actual_day, outcome, cause, idx))
            cont = Continuity.DISCRETE_SCHEDULED if sched else Continuity.CONTINUOUS
            streams.append(AssessmentStream(cid, cont, sched, tuple(actual)))
        out.append(
            SubjectRecord(sid, d["arm"], d["cutoff_day"], tuple(streams), tuple(d["ie"]), tuple(d["wd"]),
                          d.get("death_day"), d.get("last_dose_day"), d.get("entry_day", 0))
        )
    return out


def read_subjects(path) -> list[SubjectRecord]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from exc
    if path.suffix.lower() == ".json":
        return subjects_from_json(text)
    return subjects_from_csv(text)


# --------------------------------------------------------------------------
# estimand specs

_STRATEGY_ALIASES = {"while_on_treatment": Strategy.WHILE_PRIOR_TO_OCCLUSION}

_SPEC_FIELDS = {
    "estimand_id": True, "components": True, "strategy_table": False, "gap_rule": False, "dating": False,
    "unscheduled_assumption": False, "treatment_emergent_window_days": False, "precluding_causes": False,
    "design_noumenal_events": False, "tie_order": False, "description": False,
}
_COMPONENT_FIELDS = {"component_id": True, "event_causes": True, "priority": True}
_ASSIGNMENT_FIELDS = {"ie_type": True, "strategy": True, "occlusion_handling": False, "objectivity_override": False}


def _check_keys(obj, fields, where):
    if not isinstance(obj, dict):
        raise SpecError(f"expected an object, got {type(obj).__name__}", where)
    for k in obj:
        if k not in fields:
            raise SpecError(f"unknown key {k!r}", where)
    for k, required in fields.items():
        if required and k not in obj:
            raise MissingFieldError(f"missing required field {k!r}", where)


def _enum(cls, value, where, key):
    try:
        return cls(value)
    except ValueError:
        allowed = ", ".join(m.value for m in cls)
        raise SpecError(f"{key}: {value!r} is not one of {allowed}", where) from None


def _parse_assignment(obj, where):
    _check_keys(obj, _ASSIGNMENT_FIELDS, where)
    name = obj["strategy"]
    if name in _STRATEGY_ALIASES:
        strategy = _STRATEGY_ALIASES[name]
        warnings.warn(
            f"{where}: strategy 'while_on_treatment' is read as 'while_prior_to_occlusion'; the general name "
            "applies to any occluding event, not only end of treatment",
            SpecNote,
            stacklevel=3,
        )
    else:
        try:
            strategy = Strategy(name)
        except ValueError:
            allowed = ", ".join([s.value for s in Strategy] + sorted(_STRATEGY_ALIASES))
            raise UnknownStrategyError(f"unknown strategy {name!r} (expected one of {allowed})", where) from None
    handling = obj.get("occlusion_handling")
    if strategy.occludes_by_dating and handling is None:
        raise MissingFieldError(
            f"occlusion_handling is required for strategy {strategy.value} (censor or competing_risk)", where
        )
    if not strategy.occludes_by_dating and handling is not None:
        raise SpecError(
            f"occlusion_handling is only allowed for hypothetical/while_prior_to_occlusion, not {strategy.value}",
            where,
        )
    override = obj.get("objectivity_override")
    return StrategyAssignment(
        obj["ie_type"],
        strategy,
        None if handling is None else _enum(OcclusionHandling, handling, where, "occlusion_handling"),
        None if override is None else _enum(Objectivity, override, where, "objectivity_override"),
    )


def spec_from_dict(obj, where="$") -> EstimandSpec:
    try:
        return _spec_from_dict(obj, where)
    except (TypeError, ValueError) as exc:
        raise SpecError(f"malformed value: {exc}", where) from exc


def _spec_from_dict(obj, where):
    _check_keys(obj, _SPEC_FIELDS, where)
    comps = []
    for i, c in enumerate(obj["components"]):
        w = f"{where}.components[{i}]"
        _check_keys(c, _COMPONENT_FIELDS, w)
        comps.append(Component(c["component_id"], tuple(c["event_causes"]), int(c["priority"])))
    table = tuple(
        _parse_assignment(a, f"{where}.strategy_table[{i}]") for i, a in enumerate(obj.get("strategy_table", []))
    )
    kwargs = {}
    if "gap_rule" in obj:
        kwargs["gap_rule"] = 0 if obj["gap_rule"] is None else int(obj["gap_rule"])
    if "dating" in obj:
        kwargs["dating"] = _enum(Dating, obj["dating"], where, "dating")
    if "unscheduled_assumption" in obj:
        kwargs["unscheduled_assumption"] = _enum(
            UnscheduledAssumption, obj["unscheduled_assumption"], where, "unscheduled_assumption"
        )
    if obj.get("treatment_emergent_window_days") is not None:
        kwargs["treatment_emergent_window_days"] = int(obj["treatment_emergent_window_days"])
    if "precluding_causes" in obj:
        kwargs["precluding_causes"] = tuple(obj["precluding_causes"])
    if "design_noumenal_events" in obj:
        kwargs["design_noumenal_events"] = frozenset(obj["design_noumenal_events"])
    if "tie_order" in obj:
        kwargs["tie_order"] = tuple(obj["tie_order"])
    try:
        return EstimandSpec(str(obj["estimand_id"]), tuple(comps), table, **kwargs)
    except ValueError as exc:
        raise SpecError(str(exc), where) from exc


def spec_to_dict(spec: EstimandSpec) -> dict:
    return {
        "estimand_id": spec.estimand_id,
        "components": [
            {"component_id": c.component_id, "event_causes": list(c.event_causes), "priority": c.priority}
            for c in spec.components
        ],
        "strategy_table": [
            {
                k: v
                for k, v in {
                    "ie_type": a.ie_type,
                    "strategy": a.strategy.value,
                    "occlusion_handling": a.occlusion_handling.value if a.occlusion_handling else None,
                    "objectivity_override": a.objectivity_override.value if a.objectivity_override else None,
                }.items()
                if v is not None
            }
            for a in spec.strategy_table
        ],
        "gap_rule": spec.gap_rule,
        "dating": spec.dating.value,
        "unscheduled_assumption": spec.unscheduled_assumption.value,
        "treatment_emergent_window_days": spec.treatment_emergent_window_days,
        "precluding_causes": list(spec.precluding_causes),
        "design_noumenal_events": sorted(spec.design_noumenal_events),
        "tie_order": list(spec.tie_order),
    }


def _load_json(text, what):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecSyntaxError(f"{what}: {exc.msg} at line {exc.lineno} column {exc.colno}") from exc


def parse_specs(text) -> list[EstimandSpec]:
    """Parse a spec document holding one estimand or ``{"estimands": [...]}``."""
    doc = _load_json(text, "estimand spec")
    if isinstance(doc, dict) and "estimands" in doc:
        extra = set(doc) - {"estimands", "description"}
        if extra:
            raise SpecError(f"unknown key {sorted(extra)[0]!r}", "$")
        specs = [spec_from_dict(e, f"$.estimands[{i}]") for i, e in enumerate(doc["estimands"])]
    else:
        specs = [spec_from_dict(doc)]
    ids = [s.estimand_id for s in specs]
    if len(set(ids)) != len(ids):
        raise SpecError("estimand_id values must be unique", "$.estimands")
    return specs


def parse_spec(text) -> EstimandSpec:
    specs = parse_specs(text)
    if len(specs) != 1:
        raise SpecError(f"expected exactly one estimand, found {len(specs)}", "$")
    return specs[0]


def read_specs(path) -> list[EstimandSpec]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from exc
    return parse_specs(text)


def specs_to_json(specs) -> str:
    return json.dumps({"estimands": [spec_to_dict(s) for s in specs]}, indent=2) + "\n"


# --------------------------------------------------------------------------
# derived datasets


def derived_to_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(DERIVED_COLUMNS)
    for r in records:
        w.writerow([
            r.subject_id, r.arm, r.estimand_id, r.time_days, r.status.value, _fmt(r.cause),
            r.censor_reason.value if r.censor_reason else "", r.occlusion_basis.value, _fmt(r.source_component),
        ])
    return buf.getvalue()


def record_to_dict(r: DerivedAnalysisRecord) -> dict:
    return {
        "subject_id": r.subject_id,
        "arm": r.arm,
        "estimand_id": r.estimand_id,
        "time_days": r.time_days,
        "status": r.status.value,
        "cause": r.cause,
        "censor_reason": r.censor_reason.value if r.censor_reason else None,
        "occlusion_basis": r.occlusion_basis.value,
        "source_component": r.source_component,
        "audit": list(r.audit),
    }


def record_from_dict(d) -> DerivedAnalysisRecord:
    try:
        return DerivedAnalysisRecord(
            d["subject_id"], d["arm"], d["estimand_id"], int(d["time_days"]), StatusKind(d["status"]),
            d.get("cause") or None, CensorReason(d["censor_reason"]) if d.get("censor_reason") else None,
            OcclusionBasis(d.get("occlusion_basis") or "none"), d.get("source_component") or None,
            tuple(d.get("audit") or ("imported without audit trail",)),
        )
    except (KeyError, ValueError) as exc:
        raise DataError(f"derived record {d.get('subject_id', '?')}: {exc}") from exc


def derived_to_json(dataset) -> str:
    doc = {
        "estimand_id": dataset.estimand_id,
        "audit": {
            "n_records": dataset.audit.n_records,
            "by_status": dataset.audit.by_status,
            "by_censor_reason": dataset.audit.by_censor_reason,
        },
        "records": [record_to_dict(r) for r in dataset.records],
    }
    return json.dumps(doc, indent=1) + "\n"


def derived_from_csv(text) -> list[DerivedAnalysisRecord]:
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != DERIVED_COLUMNS:
        raise DataError(f"derived CSV header must be exactly: {','.join(DERIVED_COLUMNS)}")
    return [record_from_dict(r) for r in reader]


def derived_from_json(text) -> list[DerivedAnalysisRecord]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"derived JSON: {exc.msg} at line {exc.lineno} column {exc.colno}") from exc
    return [record_from_dict(r) for r in doc["records"]]


def read_derived(path) -> list[DerivedAnalysisRecord]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from exc
    return derived_from_json(text) if path.suffix.lower() == ".json" else derived_from_csv(text)
