"""Plain-text and JSON renderings of datasets, curves and tests."""

from __future__ import annotations

import csv
import io
import json
import math

from .derivation import DerivedDataset
from .errors import DataError, EstimationError
from .estimators import CIFCurve, SurvivalCurve, cif_aalen_johansen, cox_fit, km_estimate, logrank_test, rmst
from .model import EstimandSpec, StatusKind


def _cell(v):
    if v is None:
        return "NA"
    if isinstance(v, float):
        return "NA" if math.isnan(v) else f"{v:.6g}"
    return str(v)


def text_table(header, rows, title=None):
    """Aligned plain-text table; the first column is left-aligned."""
    rows = [[_cell(c) for c in r] for r in rows]
    header = [str(h) for h in header]
    widths = [max(len(r[i]) for r in [header] + rows) for i in range(len(header))]
    fmt = lambda r: "  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths)))  # noqa: E731
    out = [title] if title else []
    out += [fmt(header), "  ".join("-" * w for w in widths)] + [fmt(r) for r in rows]
    return "\n".join(out) + "\n"


def csv_table(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow(["" if c is None else c for c in r])
    return buf.getvalue()


# --------------------------------------------------------------------------
# curves

CURVE_COLUMNS = ("arm", "time", "estimate", "lower", "upper", "n_at_risk", "n_events")
CIF_COLUMNS = ("arm", "cause", "time", "estimate", "lower", "upper", "n_at_risk")


def curve_rows(arm, curve: SurvivalCurve):
    lower, upper = curve.confidence_band()
    rows = [[arm, 0.0, 1.0, 1.0, 1.0, curve.n_subjects, 0]]
    for t, s, lo, hi, n, d in zip(curve.jump_times, curve.estimates, lower, upper, curve.at_risk, curve.n_events):
        rows.append([arm, float(t), float(s), float(lo), float(hi), int(n), int(d)])
    return rows


def cif_rows(arm, curve: CIFCurve, z=1.959963984540054):
    rows = []
    for k in curve.causes:
        rows.append([arm, k, 0.0, 0.0, 0.0, 0.0, curve.n_subjects])
        for t, f, v, n in zip(curve.jump_times, curve.cif[k], curve.variance[k], curve.at_risk):
            se = math.sqrt(v)
            rows.append([arm, k, float(t), float(f), max(0.0, f - z * se), min(1.0, f + z * se), int(n)])
    return rows


def curve_to_dict(curve: SurvivalCurve):
    lower, upper = curve.confidence_band()
    return {
        "n_subjects": curve.n_subjects,
        "max_time": curve.max_time,
        "time": curve.jump_times.tolist(),
        "estimate": curve.estimates.tolist(),
        "variance": curve.variance.tolist(),
        "lower": lower.tolist(),
        "upper": upper.tolist(),
        "n_at_risk": curve.at_risk.tolist(),
        "n_events": curve.n_events.tolist(),
    }


def cif_to_dict(curve: CIFCurve):
    return {
        "n_subjects": curve.n_subjects,
        "time": curve.jump_times.tolist(),
        "event_free": curve.event_free.tolist(),
        "cif": {k: curve.cif[k].tolist() for k in curve.causes},
        "variance": {k: curve.variance[k].tolist() for k in curve.causes},
        "n_at_risk": curve.at_risk.tolist(),
    }


# --------------------------------------------------------------------------
# derivation audit


def strategy_summary(spec: EstimandSpec):
    lines = [f"estimand: {spec.estimand_id}"]
    lines.append("components: " + ", ".join(
        f"{c.component_id} (causes {'/'.join(c.event_causes)}, priority {c.priority})" for c in spec.components
    ))
    if spec.is_safety:
        lines.append(f"treatment-emergent window: last dose + {spec.treatment_emergent_window_days} days")
    lines.append(f"gap rule G={spec.gap_rule}; dating {spec.dating.value}; "
                 f"unscheduled assessments {spec.unscheduled_assumption.value}")
    if spec.strategy_table:
        lines.append("strategy table:")
        for a in spec.strategy_table:
            extra = []
            if a.occlusion_handling:
                extra.append(a.occlusion_handling.value)
            if a.objectivity_override:
                extra.append(f"objectivity {a.objectivity_override.value}")
            lines.append(f"  {a.ie_type}: {a.strategy.value}" + (f" ({', '.join(extra)})" if extra else ""))
    else:
        lines.append("strategy table: empty")
    return lines


def audit_text(dataset: DerivedDataset, spec: EstimandSpec):
    lines = strategy_summary(spec) + [""] + dataset.audit.lines() + [""]
    for r in dataset.records:
        lines.append(f"[{r.subject_id}] {r.status.value} day {r.time_days}")
        lines += [f"    {a}" for a in r.audit]
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# analysis report


def analysis_report(records, estimand_id=None, tau=None, landmark=None):
    """Everything the analyze command computes, as a JSON-ready dict."""
    records = list(records)
    if not records:
        raise DataError("empty dataset")
    arms = sorted({r.arm for r in records})
    competing = any(r.status is StatusKind.COMPETING for r in records)
    out = {
        "estimand_id": estimand_id or records[0].estimand_id,
        "tau": tau,
        "landmark": landmark,
        "n_records": len(records),
        "arms": arms,
        "status_counts": {
            a: {k.value: sum(r.arm == a and r.status is k for r in records) for k in StatusKind} for a in arms
        },
        "notes": [],
    }
    if competing:
        out["notes"].append("competing exits present: cumulative incidence reported instead of Kaplan-Meier")
        out["cif"] = {a: cif_to_dict(cif_aalen_johansen(records, a)) for a in arms}
        if landmark is not None:
            out["cif_at_landmark"] = {a: {k: c(k, landmark) for k in c.causes} for a, c in
                                      ((a, cif_aalen_johansen(records, a)) for a in arms)}
        return out
    curves = {a: km_estimate(records, a) for a in arms}
    out["km"] = {a: curve_to_dict(c) for a, c in curves.items()}
    if landmark is not None:
        out["km_at_landmark"] = {a: c(landmark) for a, c in curves.items()}
    if tau is not None:
        res = {}
        for a, c in curves.items():
            try:
                est, var = rmst(c, tau)
                res[a] = {"estimate": est, "variance": var, "se": math.sqrt(var)}
            except DataError as exc:
                res[a] = {"error": str(exc)}
        out["rmst"] = res
        if len(arms) == 2 and all("estimate" in res[a] for a in arms):
            diff = res[arms[1]]["estimate"] - res[arms[0]]["estimate"]
            se = math.sqrt(res[arms[0]]["variance"] + res[arms[1]]["variance"])
            out["rmst_difference"] = {"contrast": f"{arms[1]} - {arms[0]}", "estimate": diff, "se": se}
    if len(arms) == 2:
        lr = logrank_test(records, tuple(arms))
        out["logrank"] = {
            "statistic": lr.statistic, "df": lr.degrees_of_freedom, "p_value": lr.p_value,
            "observed": lr.observed, "expected": lr.expected, "observed_minus_expected": lr.observed_minus_expected,
            "variance": lr.variance,
        }
        try:
            fit = cox_fit(records, tuple(arms))
            out["cox"] = {
                "contrast": f"{arms[1]} vs {arms[0]}", "beta_hat": fit.beta_hat, "standard_error": fit.standard_error,
                "hazard_ratio": fit.hazard_ratio, "iterations": fit.iterations, "p_value": fit.p_value,
            }
        except EstimationError as exc:
            out["cox"] = {"error": str(exc)}
    return out


def analysis_text(rep):
    lines = [f"analysis of estimand {rep['estimand_id']}"]
    lines.append(f"RMST horizon tau: {_cell(rep['tau'])}" + ("" if rep["tau"] is not None else " (not requested)"))
    lines.append(f"landmark: {_cell(rep['landmark'])}")
    lines += rep["notes"]
    rows = [[a] + [c for c in rep["status_counts"][a].values()] for a in rep["arms"]]
    lines.append(text_table(["arm"] + [k.value for k in StatusKind], rows, "status counts"))
    if "km_at_landmark" in rep:
        lines.append(text_table(["arm", "KM"], list(rep["km_at_landmark"].items()), "KM at landmark"))
    if "cif_at_landmark" in rep:
        rows = [[a, k, v] for a, d in rep["cif_at_landmark"].items() for k, v in d.items()]
        lines.append(text_table(["arm", "cause", "CIF"], rows, "cumulative incidence at landmark"))
    if "rmst" in rep:
        rows = [[a, d.get("estimate"), d.get("se"), d.get("error", "")] for a, d in rep["rmst"].items()]
        lines.append(text_table(["arm", "RMST", "se", "note"], rows, f"RMST to tau = {_cell(rep['tau'])}"))
        if "rmst_difference" in rep:
            d = rep["rmst_difference"]
            lines.append(f"RMST difference {d['contrast']}: {_cell(d['estimate'])} (se {_cell(d['se'])})\n")
    if "logrank" in rep:
        lr = rep["logrank"]
        lines.append(f"log-rank: chi2 {_cell(lr['statistic'])} on {lr['df']} df, p = {_cell(lr['p_value'])}")
    if "cox" in rep:
        c = rep["cox"]
        if "error" in c:
            lines.append(f"Cox: {c['error']}")
        else:
            lines.append(
                f"Cox {c['contrast']}: HR {_cell(c['hazard_ratio'])}, beta {_cell(c['beta_hat'])} "
                f"(se {_cell(c['standard_error'])}), p = {_cell(c['p_value'])}, {c['iterations']} iterations"
            )
    return "\n".join(lines) + "\n"


def curves_csv(records):
    """Plot-ready curve table: KM rows, or CIF rows when competing exits exist."""
    records = list(records)
    arms = sorted({r.arm for r in records})
    if any(r.status is StatusKind.COMPETING for r in records):
        rows = [row for a in arms for row in cif_rows(a, cif_aalen_johansen(records, a))]
        return csv_table(CIF_COLUMNS, rows)
    rows = [row for a in arms for row in curve_rows(a, km_estimate(records, a))]
    return csv_table(CURVE_COLUMNS, rows)


def dumps(obj):
    return json.dumps(obj, indent=2, sort_keys=False, default=_json_default) + "\n"


def _json_default(o):
    if hasattr(o, "item"):
        return o.item()
    if hasattr(o, "tolist"):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o).__name__}")
