"""Sensitivity analyses on top of the derivation engine.

* ``redate`` moves event and censoring dates fixed by a discrete assessment
  inside the interval since the last prior assessment (left or midpoint).
* ``impute_target_times`` replaces attended assessment days by their
  protocol target days.
* ``departure_summary`` describes actual-minus-target assessment timing per
  arm and stream.
* ``dual_occlusion_dating`` derives a dataset with every occluding trigger
  dated at the trigger, and again at the actual withdrawal.

Each analysis can be condensed into a :class:`SensitivityReport`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .derivation import DerivedDataset, derive_dataset, redate_record, summarize
from .errors import ContractViolation, DataError
from .model import Dating, EstimandSpec, OcclusionBasis, StatusKind, SubjectRecord, validate_subject
from .estimators import aalen_johansen, kaplan_meier, rmst

PRIMARY = "primary"


# --------------------------------------------------------------------------
# re-dating


def redate(records, subjects, mode: Dating) -> DerivedDataset:
    """Re-date right-dated records under ``mode``; statuses never change."""
    if isinstance(records, DerivedDataset):
        estimand_id, records = records.estimand_id, records.records
    else:
        records = tuple(records)
        estimand_id = records[0].estimand_id if records else ""
    by_id = {s.subject_id: s for s in subjects}
    out = []
    for r in records:
        if any(line.startswith("re-dated ") for line in r.audit):
            raise ContractViolation(f"record {r.subject_id} is already re-dated; start from right-dated records")
        subj = by_id.get(r.subject_id)
        if subj is None:
            raise DataError(f"no subject timeline for record {r.subject_id}")
        out.append(redate_record(r, subj, mode))
    return DerivedDataset(estimand_id, tuple(out), summarize(out))


# --------------------------------------------------------------------------
# target-time imputation


def impute_target_times(subjects, spec: Optional[EstimandSpec] = None):
    """Put each attended scheduled assessment on its target day.

    Only discrete streams are touched (restricted to ``spec``'s components
    when given). Unscheduled assessments keep their day. A target lying past
    death or cutoff is not used, since no data can exist there.

    Returns ``(subjects, audit)`` where audit is a list of text lines.
    """
    wanted = None if spec is None else {c.component_id for c in spec.components}
    result, audit, broken = [], [], []
    for s in subjects:
        limit = s.cutoff_day if s.death_day is None else min(s.cutoff_day, s.death_day)
        streams = []
        for st in s.streams:
            if not st.discrete or (wanted is not None and st.component_id not in wanted):
                streams.append(st)
                continue
            actual = []
            for a in st.actual:
                if a.target_index is None:
                    audit.append(f"{s.subject_id}/{st.component_id}: unscheduled assessment day {a.day} unchanged")
                    actual.append(a)
                    continue
                target = st.schedule[a.target_index]
                if target > limit:
                    audit.append(
                        f"{s.subject_id}/{st.component_id}: target day {target} beyond follow-up end {limit}; "
                        f"day {a.day} kept"
                    )
                    actual.append(a)
                    continue
                if target != a.day:
                    audit.append(f"{s.subject_id}/{st.component_id}: day {a.day} -> target {target}")
                actual.append(replace(a, day=target))
            days = [a.day for a in actual]
            if any(b <= a for a, b in zip(days, days[1:])):
                broken.append(f"{s.subject_id}/{st.component_id}")
            streams.append(replace(st, actual=tuple(actual)))
        result.append(replace(s, streams=tuple(streams)))
    if broken:
        raise DataError("target imputation breaks assessment ordering for: " + ", ".join(broken))
    for s in result:
        v = validate_subject(s)
        if v:
            raise DataError(f"subject {s.subject_id} invalid after target imputation: {v[0]}")
    return result, audit


# --------------------------------------------------------------------------
# departures


@dataclass(frozen=True)
class DepartureStats:
    arm: str
    component_id: str
    count: int
    mean: float
    sd: float
    minimum: float
    q25: float
    median: float
    q75: float
    maximum: float

    def to_dict(self):
        return {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in self.__dict__.items()}


def departure_summary(subjects) -> list[DepartureStats]:
    """Signed (actual - target) days per arm and discrete stream, sorted by (arm, stream)."""
    pools: dict = {}
    for s in subjects:
        for st in s.streams:
            if not st.discrete:
                continue
            key = (s.arm, st.component_id)
            pools.setdefault(key, [])
            pools[key].extend(a.day - st.schedule[a.target_index] for a in st.actual if a.target_index is not None)
    out = []
    for (arm, cid), vals in sorted(pools.items()):
        x = np.asarray(vals, dtype=float)
        if x.size == 0:
            nan = float("nan")
            out.append(DepartureStats(arm, cid, 0, nan, nan, nan, nan, nan, nan, nan))
            continue
        q = np.quantile(x, [0, 0.25, 0.5, 0.75, 1.0])
        sd = float(x.std(ddof=1)) if x.size > 1 else 0.0
        out.append(DepartureStats(arm, cid, int(x.size), float(x.mean()), sd, *map(float, q)))
    return out


# --------------------------------------------------------------------------
# reports


@dataclass(frozen=True)
class VariantSummary:
    n_events: int
    n_censored: int
    n_competing: int
    km_at_landmark: dict
    rmst: dict
    notes: tuple[str, ...] = ()

    def to_dict(self):
        return {
            "n_events": self.n_events,
            "n_censored": self.n_censored,
            "n_competing": self.n_competing,
            "km_at_landmark": self.km_at_landmark,
            "rmst": self.rmst,
            "notes": list(self.notes),
        }


@dataclass(frozen=True)
class SubjectDiff:
    subject_id: str
    variant: str
    primary_status: str
    primary_time: int
    variant_status: str
    variant_time: int


@dataclass(frozen=True)
class SensitivityReport:
    analysis_id: str
    variants: dict  # name -> VariantSummary, primary first
    deltas: dict  # name -> {"km_at_landmark": {arm: d}, "rmst": {arm: d}, "n_events": d}
    diffs: tuple[SubjectDiff, ...] = ()
    tau: Optional[float] = None
    landmark: Optional[float] = None
    records: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self.variants or PRIMARY not in self.variants:
            raise ContractViolation("a sensitivity report needs a primary variant")

    @property
    def identical(self):
        return not self.diffs

    def to_dict(self):
        return {
            "analysis_id": self.analysis_id,
            "tau": self.tau,
            "landmark": self.landmark,
            "variants": {k: v.to_dict() for k, v in self.variants.items()},
            "deltas": self.deltas,
            "identical": self.identical,
            "diffs": [d.__dict__ for d in self.diffs],
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def text_table(self):
        arms = sorted({a for v in self.variants.values() for a in list(v.rmst) + list(v.km_at_landmark)})
        head = ["variant", "n_events", "n_censored", "n_competing"]
        head += [f"rmst[{a}]" for a in arms] + [f"km_landmark[{a}]" for a in arms]
        rows = []
        for name, v in self.variants.items():
            row = [name, str(v.n_events), str(v.n_censored), str(v.n_competing)]
            row += [_num(v.rmst.get(a)) for a in arms] + [_num(v.km_at_landmark.get(a)) for a in arms]
            rows.append(row)
        widths = [max(len(r[i]) for r in [head] + rows) for i in range(len(head))]
        fmt = lambda r: "  ".join(c.rjust(w) if i else c.ljust(w) for i, (c, w) in enumerate(zip(r, widths)))  # noqa: E731
        lines = [f"sensitivity analysis: {self.analysis_id}",
                 f"tau: {_num(self.tau)}  landmark: {_num(self.landmark)}", fmt(head)]
        lines += [fmt(r) for r in rows]
        if self.identical:
            lines.append("all variants identical to primary")
        else:
            lines.append(f"subject-level differences: {len(self.diffs)}")
            for d in self.diffs:
                lines.append(
                    f"  {d.variant}: {d.subject_id} {d.primary_status}@{d.primary_time} -> "
                    f"{d.variant_status}@{d.variant_time}"
                )
        return "\n".join(lines) + "\n"


def _num(v):
    if v is None:
        return "NA"
    return f"{v:.4f}" if isinstance(v, float) else str(v)


def summarize_variant(records, tau=None, landmark=None) -> VariantSummary:
    """Event counts plus per-arm KM at ``landmark`` and RMST to ``tau``.

    When competing records are present the curve is the all-cause
    event-free survival (events and competing exits both end it).
    """
    records = list(records)
    n_ev = sum(r.status is StatusKind.EVENT for r in records)
    n_ce = sum(r.status is StatusKind.CENSORED for r in records)
    n_co = sum(r.status is StatusKind.COMPETING for r in records)
    notes = []
    if n_co:
        notes.append("competing exits present: KM and RMST use all-cause event-free survival")
    km, rm = {}, {}
    for arm in sorted({r.arm for r in records}):
        sub = [r for r in records if r.arm == arm]
        curve = kaplan_meier([r.time_days for r in sub], [r.status is not StatusKind.CENSORED for r in sub])
        if landmark is not None:
            km[arm] = float(curve(landmark))
        if tau is not None:
            try:
                rm[arm] = float(rmst(curve, tau)[0])
            except DataError as exc:
                rm[arm] = None
                notes.append(f"arm {arm}: {exc}")
    return VariantSummary(n_ev, n_ce, n_co, km, rm, tuple(notes))


def _delta(a: dict, b: dict):
    return {k: (None if a.get(k) is None or b.get(k) is None else a[k] - b[k]) for k in sorted(set(a) | set(b))}


def build_report(analysis_id, variants: dict, tau=None, landmark=None) -> SensitivityReport:
    """Assemble a report from ``{variant name: records}``; must contain ``primary``."""
    if PRIMARY not in variants:
        raise ContractViolation("variants must include 'primary'")
    names = [PRIMARY] + [k for k in variants if k != PRIMARY]
    summaries = {k: summarize_variant(variants[k], tau, landmark) for k in names}
    base = summaries[PRIMARY]
    deltas = {
        k: {
            "n_events": summaries[k].n_events - base.n_events,
            "km_at_landmark": _delta(summaries[k].km_at_landmark, base.km_at_landmark),
            "rmst": _delta(summaries[k].rmst, base.rmst),
        }
        for k in names[1:]
    }
    prim = {r.subject_id: r for r in variants[PRIMARY]}
    diffs = []
    for k in names[1:]:
        for r in variants[k]:
            p = prim.get(r.subject_id)
            if p is None or (p.status, p.time_days) != (r.status, r.time_days):
                diffs.append(SubjectDiff(
                    r.subject_id, k, p.status.value if p else "absent", p.time_days if p else -1,
                    r.status.value, r.time_days,
                ))
    return SensitivityReport(analysis_id, summaries, deltas, tuple(diffs), tau, landmark,
                             {k: tuple(variants[k]) for k in names})


# --------------------------------------------------------------------------
# drivers


def dual_occlusion_dating(subjects, spec: EstimandSpec, tau=None, landmark=None, workers=1) -> SensitivityReport:
    """Primary dataset plus trigger-date and actual-withdrawal variants."""
    variants = {
        PRIMARY: derive_dataset(subjects, spec, workers).records,
        "trigger_date": derive_dataset(subjects, spec, workers, OcclusionBasis.TRIGGER_DATE).records,
        "actual_withdrawal": derive_dataset(subjects, spec, workers, OcclusionBasis.ACTUAL_WITHDRAWAL).records,
    }
    return build_report(f"{spec.estimand_id}:dual_occlusion_dating", variants, tau, landmark)


def redating_analysis(subjects, spec: EstimandSpec, tau=None, landmark=None, workers=1) -> SensitivityReport:
    """Right (primary), left and midpoint dating of the same derivation."""
    primary = derive_dataset(subjects, replace(spec, dating=Dating.RIGHT), workers)
    variants = {PRIMARY: primary.records}
    for mode in (Dating.LEFT, Dating.MIDPOINT):
        variants[mode.value] = redate(primary, subjects, mode).records
    return build_report(f"{spec.estimand_id}:redating", variants, tau, landmark)


def target_time_analysis(subjects, spec: EstimandSpec, tau=None, landmark=None, workers=1) -> SensitivityReport:
    """Primary derivation against one on target-imputed assessment days."""
    imputed, _ = impute_target_times(subjects, spec)
    variants = {
        PRIMARY: derive_dataset(subjects, spec, workers).records,
        "target_times": derive_dataset(imputed, spec, workers).records,
    }
    return build_report(f"{spec.estimand_id}:target_times", variants, tau, landmark)


ANALYSES = {
    "dual": dual_occlusion_dating,
    "redate": redating_analysis,
    "target": target_time_analysis,
}
