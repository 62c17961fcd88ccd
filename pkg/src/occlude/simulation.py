"""Trial simulator.

Event, death and withdrawal times come from piecewise-constant hazards.
Subjects accrue over a calendar window, are assessed on jittered schedules
with missed visits, and are cut at an administrative data cutoff. Every
subject draws from its own random stream, spawned from the master seed and
the (replicate, subject index) pair, so results do not depend on how work is
split across processes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np
from scipy import stats

from .derivation import derive_record
from .errors import ContractViolation, DataError, EstimationError, MissingFieldError, SpecError, UsageError
from .estimators import cox_fit, kaplan_meier, logrank_test, rmst
from .model import (
    ALL_STREAMS,
    DEATH,
    Assessment,
    AssessmentStream,
    Component,
    Continuity,
    EstimandSpec,
    Outcome,
    StatusKind,
    SubjectRecord,
    WithdrawalRecord,
)
from .parallel import parallel_map

MONTH = 30.4375  # days


# --------------------------------------------------------------------------
# hazards


@dataclass(frozen=True)
class HazardSpec:
    """Piecewise-constant hazard: ``segments`` is ((start_day, rate_per_day), ...)."""

    segments: tuple[tuple[float, float], ...] = ((0.0, 0.0),)

    def __post_init__(self):
        segs = tuple((float(a), float(b)) for a, b in self.segments)
        object.__setattr__(self, "segments", segs)
        if not segs or segs[0][0] != 0:
            raise ValueError("hazard segments must start at day 0")
        starts = [a for a, _ in segs]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ValueError("hazard segment start days must be strictly increasing")
        if any(r < 0 or not math.isfinite(r) for _, r in segs):
            raise ValueError("hazard rates must be finite and >= 0")

    @classmethod
    def constant(cls, rate):
        return cls(((0.0, rate),))

    @classmethod
    def from_median(cls, median_days):
        return cls.constant(math.log(2) / median_days)

    def cumulative(self, t):
        """H(t) for a scalar ``t``."""
        total = 0.0
        for k, (start, rate) in enumerate(self.segments):
            if t <= start:
                break
            stop = self.segments[k + 1][0] if k + 1 < len(self.segments) else math.inf
            total += rate * (min(t, stop) - start)
        return total

    def inverse(self, e):
        """Smallest t with H(t) = e; ``inf`` when the hazard never accumulates ``e``."""
        acc = 0.0
        for k, (start, rate) in enumerate(self.segments):
            stop = self.segments[k + 1][0] if k + 1 < len(self.segments) else math.inf
            mass = rate * (stop - start) if rate > 0 else 0.0
            if rate > 0 and acc + mass >= e:
                return start + (e - acc) / rate
            acc += mass
        return math.inf

    def scaled(self, start, stop, factor):
        """Copy with the rate multiplied by ``factor`` on [start, stop)."""
        start, stop = max(0.0, float(start)), float(stop)
        if stop <= start:
            return self
        knots = sorted({a for a, _ in self.segments} | {start, stop})
        segs = []
        for a in knots:
            rate = self.rate_at(a) * (factor if start <= a < stop else 1.0)
            if not segs or segs[-1][1] != rate:
                segs.append((a, rate))
        return HazardSpec(tuple(segs))

    def rate_at(self, t):
        rate = self.segments[0][1]
        for a, r in self.segments:
            if a <= t:
                rate = r
        return rate

    @property
    def is_zero(self):
        return all(r == 0 for _, r in self.segments)


def sample_piecewise_exponential(hazard: HazardSpec, rng):
    """Draw an integer event day (ceiling of the continuous time, at least 1), or ``inf``."""
    t = hazard.inverse(rng.standard_exponential())
    if math.isinf(t):
        return math.inf
    return max(1, math.ceil(t))


# --------------------------------------------------------------------------
# scenarios


@dataclass(frozen=True)
class ArmSpec:
    n: int
    event_hazard: HazardSpec
    withdrawal_hazard: HazardSpec = HazardSpec()
    death_hazard: Optional[HazardSpec] = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n per arm must be >= 1")


@dataclass(frozen=True)
class StreamSchedule:
    """``period_days`` 0 means continuous observation."""

    component_id: str
    period_days: int = 0
    jitter_sd: float = 0.0
    miss_prob: float = 0.0

    def __post_init__(self):
        if self.period_days < 0:
            raise ValueError("period_days must be >= 0")
        if self.jitter_sd < 0:
            raise ValueError("jitter sd must be >= 0")
        if not 0 <= self.miss_prob < 1:
            raise ValueError("miss probability must lie in [0, 1)")

    @property
    def continuous(self):
        return self.period_days == 0


@dataclass(frozen=True)
class CalendarDay:
    day: int


@dataclass(frozen=True)
class EventCount:
    k: int


CutoffRule = Union[CalendarDay, EventCount]


@dataclass(frozen=True)
class InformativeWithdrawal:
    """Withdrawal hazard multiplied by ``multiplier`` in the ``window_days`` before the latent event."""

    multiplier: float
    window_days: int


@dataclass(frozen=True)
class TrialScenario:
    arms: tuple[tuple[str, ArmSpec], ...]
    streams: tuple[StreamSchedule, ...]
    event_component: str
    event_cause: str = "progression"
    accrual_days: float = 0.0
    accrual_list: Optional[tuple[int, ...]] = None
    max_follow_up_days: int = 1826
    cutoff: Optional[CutoffRule] = None
    delay_point_tau: Optional[float] = None
    death_component: Optional[str] = None
    informative_withdrawal: Optional[InformativeWithdrawal] = None
    gap_rule: int = 2

    def __post_init__(self):
        if isinstance(self.arms, dict):
            object.__setattr__(self, "arms", tuple(self.arms.items()))
        if len(self.arms) < 1:
            raise ValueError("scenario needs at least one arm")
        names = [a for a, _ in self.arms]
        if len(set(names)) != len(names):
            raise ValueError("arm names must be unique")
        ids = [s.component_id for s in self.streams]
        if len(set(ids)) != len(ids):
            raise ValueError("stream component ids must be unique")
        by_id = {s.component_id: s for s in self.streams}
        if self.event_component not in by_id:
            raise ValueError(f"event_component {self.event_component!r} is not a configured stream")
        if self.event_cause == DEATH and not by_id[self.event_component].continuous:
            raise ValueError("death as the event needs a continuous event stream")
        if self.death_component is not None:
            if self.death_component not in by_id or not by_id[self.death_component].continuous:
                raise ValueError("death_component must name a continuous stream")
        if self.accrual_days < 0:
            raise ValueError("accrual_days must be >= 0")
        if self.accrual_list is not None and len(self.accrual_list) != self.n_total:
            raise ValueError("accrual_list needs one entry day per subject")
        if self.max_follow_up_days < 1:
            raise ValueError("max_follow_up_days must be >= 1")

    @property
    def n_total(self):
        return sum(a.n for _, a in self.arms)

    @property
    def arm_names(self):
        return tuple(a for a, _ in self.arms)

    def arm(self, name):
        return dict(self.arms)[name]


def scenario_estimand(scenario: TrialScenario) -> EstimandSpec:
    """Estimand used to analyse simulated trials: the event stream, plus death if observed."""
    comps = [Component(scenario.event_component, (scenario.event_cause,), 1)]
    if scenario.death_component is not None and scenario.event_cause != DEATH:
        comps.append(Component(scenario.death_component, (DEATH,), 2))
    return EstimandSpec("simulated", tuple(comps), gap_rule=scenario.gap_rule)


# --------------------------------------------------------------------------
# simulation


@dataclass(frozen=True)
class LatentTimes:
    subject_id: str
    event_day: float
    death_day: float
    withdrawal_day: float


def subject_rng(seed, replicate, index):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(replicate, index)))


def _subject_id(index):
    return f"S{index + 1:05d}"


def _simulate_subject(task):
    scen, seed, rep, idx, arm_name = task
    rng = subject_rng(seed, rep, idx)
    arm = scen.arm(arm_name)
    u = rng.random()
    entry = scen.accrual_list[idx] if scen.accrual_list is not None else int(u * scen.accrual_days)
    latent_event = sample_piecewise_exponential(arm.event_hazard, rng)
    latent_death = sample_piecewise_exponential(arm.death_hazard, rng) if arm.death_hazard else math.inf
    wh = arm.withdrawal_hazard
    inf_w = scen.informative_withdrawal
    if inf_w is not None and math.isfinite(latent_event):
        wh = wh.scaled(latent_event - inf_w.window_days, latent_event, inf_w.multiplier)
    latent_wd = sample_piecewise_exponential(wh, rng)

    horizon = scen.max_follow_up_days
    event_is_death = scen.event_cause == DEATH
    death = min(latent_death, latent_event) if event_is_death else latent_death
    end = min(horizon, death)
    withdrawn = latent_wd if latent_wd < end else None
    obs_end = end if withdrawn is None else withdrawn

    streams = []
    for sch in scen.streams:
        is_event_stream = sch.component_id == scen.event_component
        if sch.continuous:
            actual = ()
            if is_event_stream and not event_is_death and latent_event <= obs_end:
                actual = (Assessment(int(latent_event), Outcome.EVENT, scen.event_cause),)
            streams.append(AssessmentStream(sch.component_id, Continuity.CONTINUOUS, (), actual))
            continue
        targets = tuple(range(sch.period_days, horizon + 1, sch.period_days)) or (sch.period_days,)
        jitter = rng.normal(0.0, sch.jitter_sd, len(targets)) if sch.jitter_sd > 0 else np.zeros(len(targets))
        missed = rng.random(len(targets)) < sch.miss_prob
        actual, prev = [], 0
        for k, t in enumerate(targets):
            if missed[k]:
                continue
            day = max(t + int(np.rint(jitter[k])), prev + 1)
            if day > obs_end:
                break
            if is_event_stream and day >= latent_event:
                actual.append(Assessment(day, Outcome.EVENT, scen.event_cause, k))
                break
            actual.append(Assessment(day, Outcome.NORMAL, None, k))
            prev = day
        streams.append(AssessmentStream(sch.component_id, Continuity.DISCRETE_SCHEDULED, targets, tuple(actual)))

    sid = _subject_id(idx)
    rec = SubjectRecord(
        sid,
        arm_name,
        horizon,
        tuple(streams),
        (),
        () if withdrawn is None else (WithdrawalRecord(int(withdrawn), frozenset({ALL_STREAMS})),),
        int(death) if death <= horizon else None,
        None,
        entry,
    )
    return rec, LatentTimes(sid, latent_event, latent_death if not event_is_death else death, latent_wd)


def _tasks(scen, seed, rep):
    out, idx = [], 0
    for name, arm in scen.arms:
        for _ in range(arm.n):
            out.append((scen, seed, rep, idx, name))
            idx += 1
    return out


def simulate_trial(scenario: TrialScenario, seed: int, replicate: int = 0, workers: int = 1, with_latent=False):
    """Simulate one trial; the scenario's cutoff rule, if any, is applied.

    Returns a list of :class:`SubjectRecord` (and the latent times when
    ``with_latent`` is set). Identical for a given (scenario, seed,
    replicate) whatever ``workers`` is.
    """
    if seed is None:
        raise UsageError("a seed is required for simulation")
    pairs = parallel_map(_simulate_subject, _tasks(scenario, seed, replicate), workers)
    subjects = [p[0] for p in pairs]
    if scenario.cutoff is not None:
        subjects = apply_cutoff(subjects, scenario.cutoff, drop_unaccrued=True)
    if with_latent:
        return subjects, [p[1] for p in pairs]
    return subjects


# --------------------------------------------------------------------------
# cutoffs


def _first_event_day(s: SubjectRecord):
    days = [a.day for st in s.streams for a in st.actual if a.is_event]
    if s.death_day is not None:
        days.append(s.death_day)
    return min(days) if days else None


def resolve_cutoff_day(subjects, rule: CutoffRule, audit=None) -> int:
    """Calendar cutoff day implied by ``rule``."""
    if isinstance(rule, CalendarDay):
        return int(rule.day)
    if not isinstance(rule, EventCount):
        raise ContractViolation(f"unknown cutoff rule {rule!r}")
    if rule.k < 1:
        raise DataError("event count cutoff needs k >= 1")
    cal = sorted(s.entry_day + d for s in subjects if (d := _first_event_day(s)) is not None)
    if not cal:
        raise DataError("event count cutoff: no events in the data")
    if rule.k > len(cal):
        if audit is not None:
            audit.append(f"event count {rule.k} exceeds the {len(cal)} events observed; cutoff at last event day {cal[-1]}")
        return cal[-1]
    if audit is not None:
        audit.append(f"event count {rule.k} reached on calendar day {cal[rule.k - 1]}")
    return cal[rule.k - 1]


def _trim(s: SubjectRecord, c: int) -> SubjectRecord:
    if c >= s.cutoff_day:
        return s
    streams = []
    for st in s.streams:
        actual = tuple(a for a in st.actual if a.day <= c)
        sched = st.schedule
        if sched:
            used = max((a.target_index for a in actual if a.target_index is not None), default=-1)
            keep = max(1, used + 1, sum(t <= c for t in sched))
            sched = sched[:keep]
        streams.append(replace(st, schedule=sched, actual=actual))
    return replace(
        s,
        cutoff_day=c,
        streams=tuple(streams),
        ie_occurrences=tuple(
            ie for ie in s.ie_occurrences
            if ie.detection_day <= c and (ie.identification_day is None or ie.identification_day <= c)
        ),
        withdrawals=tuple(
            w for w in s.withdrawals
            if w.withdrawal_day <= c and all(
                ie.detection_day <= c for ie in s.ie_occurrences if ie.ie_type == w.linked_trigger
            )
        ),
        death_day=s.death_day if s.death_day is not None and s.death_day <= c else None,
        last_dose_day=None if s.last_dose_day is None else min(s.last_dose_day, c),
    )


def apply_cutoff(subjects, rule: CutoffRule, drop_unaccrued=False, audit=None):
    """Truncate every subject at a trial-level data cutoff.

    The calendar cutoff ``d`` becomes subject day ``d - entry_day``; data after
    it are removed. Subjects accrued after ``d`` raise :class:`DataError`
    unless ``drop_unaccrued`` is set, in which case they are left out.
    """
    subjects = list(subjects)
    d = resolve_cutoff_day(subjects, rule, audit)
    late = [s.subject_id for s in subjects if d - s.entry_day < 0]
    if late and not drop_unaccrued:
        raise DataError(
            f"cutoff calendar day {d} precedes accrual of {len(late)} subject(s) (cutoff_day < 0): "
            + ", ".join(late[:10]) + (" ..." if len(late) > 10 else "")
        )
    if late and audit is not None:
        audit.append(f"{len(late)} subject(s) accrued after calendar day {d} left out")
    return [_trim(s, d - s.entry_day) for s in subjects if d - s.entry_day >= 0]


# --------------------------------------------------------------------------
# operating characteristics


@dataclass(frozen=True)
class Analysis:
    kind: str  # logrank | cox | rmst | km
    param: Optional[float] = None
    arm: Optional[str] = None

    def __str__(self):
        parts = [self.kind] + ([f"{self.param:g}"] if self.param is not None else []) + ([self.arm] if self.arm else [])
        return ":".join(parts)


def parse_analysis(text) -> Analysis:
    """``logrank``, ``cox``, ``rmst:TAU`` or ``km:T[:ARM]`` (days)."""
    if isinstance(text, Analysis):
        return text
    parts = str(text).strip().split(":")
    kind = parts[0].lower()
    try:
        if kind in ("logrank", "cox") and len(parts) == 1:
            return Analysis(kind)
        if kind == "rmst" and len(parts) == 2:
            return Analysis(kind, float(parts[1]))
        if kind == "km" and len(parts) in (2, 3):
            return Analysis(kind, float(parts[1]), parts[2] if len(parts) == 3 else None)
    except ValueError:
        pass
    raise UsageError(f"unknown analysis {text!r}; use logrank, cox, rmst:TAU or km:T[:ARM]")


def estimate(records, analysis: Analysis, arms):
    """Return ``(estimate, p_value)``; ``None`` when not estimable.

    logrank: signed z, positive when the second arm has excess events.
    cox: hazard ratio of the second arm. rmst: difference second minus
    first arm. km: survival difference at ``param`` (or one arm's value).
    """
    records = list(records)
    present = {r.arm for r in records}
    if analysis.kind == "km" and analysis.arm is not None:
        sub = [r for r in records if r.arm == analysis.arm]
        if not sub:
            return None
        curve = kaplan_meier([r.time_days for r in sub], [r.status is StatusKind.EVENT for r in sub])
        if curve.max_time < analysis.param:
            return None
        return float(curve(analysis.param)), float("nan")
    if len(arms) != 2 or set(arms) != present:
        return None
    try:
        if analysis.kind == "logrank":
            res = logrank_test(records, arms)
            return res.z, res.p_value
        if analysis.kind == "cox":
            fit = cox_fit(records, arms)
            return fit.hazard_ratio, fit.p_value
        curves = [
            kaplan_meier(
                [r.time_days for r in records if r.arm == a],
                [r.status is StatusKind.EVENT for r in records if r.arm == a],
            )
            for a in arms
        ]
        if analysis.kind == "rmst":
            (e0, v0), (e1, v1) = (rmst(c, analysis.param) for c in curves)
            diff, var = e1 - e0, v0 + v1
        else:
            if min(c.max_time for c in curves) < analysis.param:
                return None
            diff = curves[1](analysis.param) - curves[0](analysis.param)
            var = curves[0].variance_at(analysis.param) + curves[1].variance_at(analysis.param)
    except (EstimationError, DataError):
        return None
    p = float(2 * stats.norm.sf(abs(diff) / math.sqrt(var))) if var > 0 else float("nan")
    return float(diff), p


def _derive_all(subjects, spec):
    return [derive_record(s, spec) for s in subjects]


def _rep_task(task):
    scen, analysis, cutoffs, seed, rep, spec = task
    subjects = simulate_trial(replace(scen, cutoff=None), seed, rep)
    arms = scen.arm_names
    ref = estimate(_derive_all(subjects, spec), analysis, arms)
    out = []
    for c in cutoffs:
        trimmed = apply_cutoff(subjects, CalendarDay(c), drop_unaccrued=True)
        recs = _derive_all(trimmed, spec)
        n_ev = sum(r.status is StatusKind.EVENT for r in recs)
        out.append((estimate(recs, analysis, arms), n_ev))
    return ref, out


@dataclass(frozen=True)
class OpCharRow:
    cutoff_day: int
    n_valid: int
    mean_events: float
    power: float
    power_mcse: float
    mean_estimate: float
    sd_estimate: float
    mean_mcse: float
    bias_vs_full: float
    bias_mcse: float

    @property
    def cutoff_months(self):
        return self.cutoff_day / MONTH


OPCHAR_COLUMNS = (
    "cutoff_day", "cutoff_months", "n_valid", "mean_events", "power", "power_mcse", "mean_estimate",
    "sd_estimate", "mean_mcse", "bias_vs_full", "bias_mcse",
)


@dataclass(frozen=True)
class OpCharTable:
    analysis: str
    n_reps: int
    seed: int
    rows: tuple[OpCharRow, ...]
    full_follow_up_mean: float
    estimates: np.ndarray = field(repr=False, compare=False, default=None)  # (reps, cutoffs)
    reference: np.ndarray = field(repr=False, compare=False, default=None)  # (reps,)

    def row(self, cutoff_day):
        return next(r for r in self.rows if r.cutoff_day == cutoff_day)

    def to_records(self):
        return [
            {k: (round(r.cutoff_months, 6) if k == "cutoff_months" else getattr(r, k)) for k in OPCHAR_COLUMNS}
            for r in self.rows
        ]


def _mean_sd(x):
    x = x[~np.isnan(x)]
    if x.size == 0:
        return float("nan"), float("nan"), 0
    sd = float(x.std(ddof=1)) if x.size > 1 else 0.0
    return float(x.mean()), sd, int(x.size)


def operating_characteristics(
    scenario: TrialScenario, analysis, cutoffs, n_reps: int, seed: int, workers: int = 1, min_reps: int = 100
) -> OpCharTable:
    """Monte-Carlo power, mean estimate and bias per calendar cutoff.

    Each replicate simulates full follow-up once and cuts it at every day in
    ``cutoffs`` (subjects not yet accrued are left out). Bias is measured
    against the same replicate analysed at full follow-up.
    """
    analysis = parse_analysis(analysis)
    if n_reps < min_reps:
        raise UsageError(f"n_reps must be >= {min_reps}")
    if seed is None:
        raise UsageError("a seed is required for operating characteristics")
    cutoffs = [int(c.day if isinstance(c, CalendarDay) else c) for c in cutoffs]
    if not cutoffs:
        raise UsageError("cutoff grid is empty")
    spec = scenario_estimand(scenario)
    results = parallel_map(
        _rep_task, [(scenario, analysis, tuple(cutoffs), seed, rep, spec) for rep in range(n_reps)], workers
    )
    nan = float("nan")
    ref = np.array([r[0][0] if r[0] is not None else nan for r in results])
    est = np.array([[o[0][0] if o[0] is not None else nan for o in r[1]] for r in results])
    pval = np.array([[o[0][1] if o[0] is not None else nan for o in r[1]] for r in results])
    nev = np.array([[o[1] for o in r[1]] for r in results], dtype=float)
    rows = []
    for j, c in enumerate(cutoffs):
        m, sd, n = _mean_sd(est[:, j])
        p = pval[:, j]
        p = p[~np.isnan(p)]
        power = float(np.mean(p < 0.05)) if p.size else nan
        power_se = math.sqrt(power * (1 - power) / p.size) if p.size else nan
        bm, bsd, bn = _mean_sd(est[:, j] - ref)
        rows.append(OpCharRow(
            c, n, float(nev[:, j].mean()), power, power_se, m, sd, sd / math.sqrt(n) if n else nan,
            bm, bsd / math.sqrt(bn) if bn else nan,
        ))
    return OpCharTable(str(analysis), n_reps, seed, tuple(rows), _mean_sd(ref)[0], est, ref)


# --------------------------------------------------------------------------
# scenario files

_SCENARIO_FIELDS = {
    "arms", "streams", "event_component", "event_cause", "accrual", "max_follow_up_days", "cutoff",
    "delay_point_tau", "death_component", "informative_withdrawal", "gap_rule", "description",
}
_ARM_FIELDS = {"n", "event_hazard", "withdrawal_hazard", "death_hazard"}
_STREAM_FIELDS = {"component_id", "period_days", "jitter_sd", "miss_prob"}


def _keys(obj, allowed, required, where):
    if not isinstance(obj, dict):
        raise SpecError("expected an object", where)
    for k in obj:
        if k not in allowed:
            raise SpecError(f"unknown key {k!r}", where)
    for k in required:
        if k not in obj:
            raise MissingFieldError(f"missing required field {k!r}", where)


def _hazard(v, where):
    if isinstance(v, (int, float)):
        return HazardSpec.constant(v)
    return HazardSpec(tuple((a, b) for a, b in v))


def scenario_from_dict(d) -> TrialScenario:
    """Build a scenario from its JSON form (rates per day; segments as [start_day, rate])."""
    _keys(d, _SCENARIO_FIELDS, ("arms", "streams", "event_component"), "$")
    try:
        arms = []
        for name, a in d["arms"].items():
            w = f"$.arms.{name}"
            _keys(a, _ARM_FIELDS, ("n", "event_hazard"), w)
            arms.append((name, ArmSpec(
                int(a["n"]), _hazard(a["event_hazard"], w),
                _hazard(a.get("withdrawal_hazard", 0.0), w),
                None if a.get("death_hazard") is None else _hazard(a["death_hazard"], w),
            )))
        streams = []
        for i, s in enumerate(d["streams"]):
            _keys(s, _STREAM_FIELDS, ("component_id",), f"$.streams[{i}]")
            streams.append(StreamSchedule(s["component_id"], int(s.get("period_days", 0)),
                                          float(s.get("jitter_sd", 0.0)), float(s.get("miss_prob", 0.0))))
        acc = d.get("accrual", {"uniform_days": 0})
        _keys(acc, {"uniform_days", "days"}, (), "$.accrual")
        cut = d.get("cutoff")
        rule = None
        if cut is not None:
            _keys(cut, {"calendar_day", "event_count"}, (), "$.cutoff")
            if len(cut) != 1:
                raise SpecError("cutoff needs exactly one of calendar_day, event_count", "$.cutoff")
            rule = CalendarDay(int(cut["calendar_day"])) if "calendar_day" in cut else EventCount(int(cut["event_count"]))
        iw = d.get("informative_withdrawal")
        if iw is not None:
            _keys(iw, {"multiplier", "window_days"}, ("multiplier", "window_days"), "$.informative_withdrawal")
            iw = InformativeWithdrawal(float(iw["multiplier"]), int(iw["window_days"]))
        return TrialScenario(
            tuple(arms), tuple(streams), d["event_component"], d.get("event_cause", "progression"),
            float(acc.get("uniform_days", 0.0)),
            None if acc.get("days") is None else tuple(int(x) for x in acc["days"]),
            int(d.get("max_follow_up_days", 1826)), rule,
            d.get("delay_point_tau"), d.get("death_component"), iw, int(d.get("gap_rule", 2)),
        )
    except (TypeError, ValueError, AttributeError) as exc:
        raise SpecError(f"invalid scenario: {exc}", "$") from exc


def scenario_to_dict(s: TrialScenario) -> dict:
    segs = lambda h: [list(x) for x in h.segments]  # noqa: E731
    out = {
        "arms": {
            name: {k: v for k, v in {
                "n": a.n,
                "event_hazard": segs(a.event_hazard),
                "withdrawal_hazard": segs(a.withdrawal_hazard),
                "death_hazard": segs(a.death_hazard) if a.death_hazard else None,
            }.items() if v is not None}
            for name, a in s.arms
        },
        "streams": [sc.__dict__.copy() for sc in s.streams],
        "event_component": s.event_component,
        "event_cause": s.event_cause,
        "accrual": {"days": list(s.accrual_list)} if s.accrual_list is not None else {"uniform_days": s.accrual_days},
        "max_follow_up_days": s.max_follow_up_days,
        "gap_rule": s.gap_rule,
    }
    if s.cutoff is not None:
        out["cutoff"] = ({"calendar_day": s.cutoff.day} if isinstance(s.cutoff, CalendarDay)
                         else {"event_count": s.cutoff.k})
    if s.delay_point_tau is not None:
        out["delay_point_tau"] = s.delay_point_tau
    if s.death_component is not None:
        out["death_component"] = s.death_component
    if s.informative_withdrawal is not None:
        out["informative_withdrawal"] = s.informative_withdrawal.__dict__.copy()
    return out


def delayed_effect_scenario(n_per_arm=150, accrual_months=12.0, median_months=12.0, tau_months=6.0,
                            late_hr=0.5, withdrawal_rate=0.0, max_follow_up_months=60.0, cutoff=None):
    """Control exponential; treatment equal before ``tau`` and ``late_hr`` times the hazard after.

    Overall survival is observed continuously, so detection timing plays no part.
    """
    lam = math.log(2) / (median_months * MONTH)
    tau = tau_months * MONTH
    treat = HazardSpec(((0.0, lam), (tau, lam * late_hr))) if late_hr != 1 else HazardSpec.constant(lam)
    wd = HazardSpec.constant(withdrawal_rate)
    return TrialScenario(
        (("control", ArmSpec(n_per_arm, HazardSpec.constant(lam), wd)), ("treatment", ArmSpec(n_per_arm, treat, wd))),
        (StreamSchedule("survival"),),
        "survival",
        event_cause=DEATH,
        accrual_days=accrual_months * MONTH,
        max_follow_up_days=int(round(max_follow_up_months * MONTH)),
        cutoff=cutoff,
        delay_point_tau=tau,
    )
