"""Command-line entry point: ``occlude <command> [options]``.

Exit status 0 on success, 1 on data errors, 2 on usage errors; spec syntax
errors, unknown strategies and missing spec fields exit with 3, 4 and 5,
other spec violations with 6.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

from . import io as oio
from . import plotting, reporting
from .derivation import derive_dataset
from .errors import DataError, OccludeError, SpecError, SpecSyntaxError, UsageError
from .model import validate_spec_against_data, validate_subject
from .parallel import worker_count
from .sensitivity import ANALYSES
from .simulation import (
    MONTH,
    OPCHAR_COLUMNS,
    CalendarDay,
    operating_characteristics,
    scenario_from_dict,
    simulate_trial,
)

COMMANDS = ("validate", "derive", "analyze", "sensitivity", "simulate", "opchar")
FORMATS = ("json", "csv", "text")


@dataclass(frozen=True)
class RunConfig:
    command: str
    data: Optional[str] = None
    spec: Optional[str] = None
    out: Optional[str] = None
    format: str = "text"
    seed: Optional[int] = None
    cutoff: Optional[str] = None
    reps: int = 1000
    variant: str = "dual"
    tau: Optional[float] = None
    landmark: Optional[float] = None
    analysis: str = "logrank"
    workers: int = 1

    def check(self):
        if self.command not in COMMANDS:
            raise UsageError(f"unknown command {self.command!r}")
        if self.format not in FORMATS:
            raise UsageError(f"--format must be one of {', '.join(FORMATS)}")
        need = {
            "validate": ("data", "spec"),
            "derive": ("data", "spec", "out"),
            "analyze": ("data", "out"),
            "sensitivity": ("data", "spec", "out"),
            "simulate": ("spec", "out", "seed"),
            "opchar": ("spec", "out", "seed", "cutoff"),
        }[self.command]
        for name in need:
            v = getattr(self, name)
            if v is None or v == "":
                raise UsageError(f"{self.command} requires --{name}")
        if self.command == "sensitivity" and self.variant not in ANALYSES:
            raise UsageError(f"--variant must be one of {', '.join(ANALYSES)}")
        return self


def build_parser():
    p = argparse.ArgumentParser(prog="occlude", description="Estimand-driven time-to-event derivation and analysis.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--data", help="subject timeline (CSV/JSON); derived dataset for analyze without --spec")
    p.add_argument("--spec", help="estimand spec JSON, or scenario JSON for simulate/opchar")
    p.add_argument("--out", help="output directory")
    p.add_argument("--format", default="text", choices=FORMATS)
    p.add_argument("--seed", type=int)
    p.add_argument("--cutoff", help="calendar cutoff day(s); comma-separated grid for opchar, suffix m for months")
    p.add_argument("--reps", type=int, default=1000)
    p.add_argument("--variant", default="dual", help="sensitivity analysis: dual, redate or target")
    p.add_argument("--tau", type=float, help="RMST horizon in days (required for RMST output)")
    p.add_argument("--landmark", type=float, help="landmark day for KM/CIF summaries")
    p.add_argument("--analysis", default="logrank", help="opchar analysis: logrank, cox, rmst:TAU, km:T[:ARM]")
    p.add_argument("--workers", type=int, default=1)
    return p


def _days(token):
    token = token.strip()
    if token.endswith("m"):
        return int(round(float(token[:-1]) * MONTH))
    return int(token)


def _cutoffs(text):
    try:
        return [_days(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"--cutoff: cannot parse {text!r}") from None


def _ext(fmt):
    return {"json": "json", "csv": "csv", "text": "txt"}[fmt]


class Runner:
    def __init__(self, cfg: RunConfig, stdout=None):
        self.cfg = cfg
        self.stdout = stdout or sys.stdout
        self.written = []
        self.out = Path(cfg.out) if cfg.out else None
        if self.out is not None:
            self.out.mkdir(parents=True, exist_ok=True)

    def write(self, name, text):
        path = self.out / name
        oio.atomic_write(path, text)
        self.written.append(str(path))
        return path

    def figure(self, fn, name, *args, **kw):
        path = self.out / name
        fn(*args, str(path), **kw)
        self.written.append(str(path))

    def specs(self):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", oio.SpecNote)
            specs = oio.read_specs(self.cfg.spec)
        for w in caught:
            print(f"note: {w.message}", file=sys.stderr)
        return specs

    def subjects(self):
        subjects = oio.read_subjects(self.cfg.data)
        bad = [v for s in subjects for v in validate_subject(s)]
        if bad:
            raise DataError(f"{len(bad)} timeline violation(s); first: {bad[0]}")
        return subjects

    # ---- commands

    def validate(self):
        subjects = oio.read_subjects(self.cfg.data)
        specs = self.specs()
        violations = [v for s in subjects for v in validate_subject(s)]
        findings = {sp.estimand_id: validate_spec_against_data(sp, subjects) for sp in specs}
        if self.cfg.format == "json":
            doc = {
                "n_subjects": len(subjects),
                "violations": [v.__dict__ for v in violations],
                "findings": {
                    k: [{"kind": f.kind.value, "subject": f.subject, "detail": f.detail, "subjects": list(f.subjects)}
                        for f in fs]
                    for k, fs in findings.items()
                },
            }
            text = reporting.dumps(doc)
        else:
            lines = [f"subjects: {len(subjects)}", f"timeline violations: {len(violations)}"]
            lines += [f"  {v}" for v in violations]
            for k, fs in findings.items():
                lines.append(f"estimand {k}:")
                alarms = [f for f in fs if not f.informational]
                for f in alarms:
                    lines.append(f"  !! {f}")
                    lines.append(f"     subjects: {', '.join(f.subjects)}")
                for f in fs:
                    if f.informational:
                        lines.append(f"  {f}")
                if not fs:
                    lines.append("  no findings")
            text = "\n".join(lines) + "\n"
        if self.out is not None:
            self.write(f"validation.{_ext(self.cfg.format)}", text)
        self.stdout.write(text)
        return 1 if violations else 0

    def derive(self):
        subjects, specs = self.subjects(), self.specs()
        for sp in specs:
            ds = derive_dataset(subjects, sp, worker_count(self.cfg.workers))
            if self.cfg.format == "json":
                self.write(f"derived_{sp.estimand_id}.json", oio.derived_to_json(ds))
            else:
                self.write(f"derived_{sp.estimand_id}.csv", oio.derived_to_csv(ds.records))
            self.write(f"audit_{sp.estimand_id}.txt", reporting.audit_text(ds, sp))
            self.stdout.write(f"{sp.estimand_id}: " + "; ".join(ds.audit.lines()) + "\n")
        return 0

    def _datasets(self):
        if self.cfg.spec:
            subjects, specs = self.subjects(), self.specs()
            return [(sp.estimand_id, derive_dataset(subjects, sp, worker_count(self.cfg.workers)).records)
                    for sp in specs]
        recs = oio.read_derived(self.cfg.data)
        ids = sorted({r.estimand_id for r in recs})
        return [(e, [r for r in recs if r.estimand_id == e]) for e in ids]

    def analyze(self):
        for eid, recs in self._datasets():
            rep = reporting.analysis_report(recs, eid, self.cfg.tau, self.cfg.landmark)
            text = reporting.analysis_text(rep)
            if self.cfg.format == "json":
                self.write(f"analysis_{eid}.json", reporting.dumps(rep))
            else:
                self.write(f"analysis_{eid}.txt", text)
            self.write(f"curves_{eid}.csv", reporting.curves_csv(recs))
            self.figure(plotting.plot_survival, f"curves_{eid}.png", recs, title=eid, tau=self.cfg.tau)
            self.stdout.write(text)
        return 0

    def sensitivity(self):
        subjects, specs = self.subjects(), self.specs()
        fn = ANALYSES[self.cfg.variant]
        for sp in specs:
            rep = fn(subjects, sp, self.cfg.tau, self.cfg.landmark, worker_count(self.cfg.workers))
            stem = f"sensitivity_{self.cfg.variant}_{sp.estimand_id}"
            self.write(f"{stem}.json", rep.to_json())
            self.write(f"{stem}.txt", rep.text_table())
            self.figure(plotting.plot_variants, f"{stem}.png", rep)
            self.stdout.write(rep.text_table())
        return 0

    def _scenario(self):
        try:
            doc = json.loads(Path(self.cfg.spec).read_text())
        except json.JSONDecodeError as exc:
            raise SpecSyntaxError(f"scenario: {exc.msg} at line {exc.lineno} column {exc.colno}") from exc
        except OSError as exc:
            raise DataError(f"cannot read {self.cfg.spec}: {exc.strerror}") from exc
        return scenario_from_dict(doc)

    def simulate(self):
        days = _cutoffs(self.cfg.cutoff) if self.cfg.cutoff else None
        if days is not None and len(days) != 1:
            raise UsageError("simulate takes a single --cutoff")
        scen = self._scenario()
        if days:
            scen = replace(scen, cutoff=CalendarDay(days[0]))
        subjects = simulate_trial(scen, self.cfg.seed, workers=worker_count(self.cfg.workers))
        if self.cfg.format == "json":
            self.write("subjects.json", oio.subjects_to_json(subjects))
        else:
            self.write("subjects.csv", oio.subjects_to_csv(subjects))
        self.stdout.write(f"simulated {len(subjects)} subjects (seed {self.cfg.seed})\n")
        return 0

    def opchar(self):
        cutoffs = _cutoffs(self.cfg.cutoff)
        scen = self._scenario()
        table = operating_characteristics(
            scen, self.cfg.analysis, cutoffs, self.cfg.reps, self.cfg.seed,
            worker_count(self.cfg.workers),
        )
        rows = table.to_records()
        self.write("opchar.csv", reporting.csv_table(OPCHAR_COLUMNS, [[r[k] for k in OPCHAR_COLUMNS] for r in rows]))
        self.write("opchar.json", reporting.dumps({
            "analysis": table.analysis, "n_reps": table.n_reps, "seed": table.seed,
            "full_follow_up_mean": table.full_follow_up_mean, "rows": rows,
        }))
        self.figure(plotting.plot_opchar, "opchar.png", table)
        self.stdout.write(reporting.text_table(
            OPCHAR_COLUMNS, [[r[k] for k in OPCHAR_COLUMNS] for r in rows],
            f"operating characteristics: {table.analysis}, {table.n_reps} replicates, seed {table.seed}",
        ))
        return 0


def run(cfg: RunConfig, stdout=None) -> int:
    cfg.check()
    return getattr(Runner(cfg, stdout), cfg.command)()


def main(argv=None):
    args = build_parser().parse_args(argv)
    cfg = RunConfig(**{k: v for k, v in vars(args).items()})
    try:
        return run(cfg)
    except OccludeError as exc:
        code = exc.exit_code
        print(f"error: {exc}", file=sys.stderr)
        if cfg.format == "json":
            kind = "spec" if isinstance(exc, SpecError) else type(exc).__name__
            print(json.dumps({"error": type(exc).__name__, "category": kind, "message": str(exc), "exit_code": code}),
                  file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
