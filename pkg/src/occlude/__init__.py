"""Estimand-driven derivation and analysis of time-to-event trial data."""

from .derivation import (
    DerivedDataset,
    RiskWindow,
    apply_gap_rule,
    component_assessment_end,
    composite_risk_window,
    derive_dataset,
    derive_record,
    occlusion_dating,
)
from .errors import (
    ContractViolation,
    DataError,
    EstimationError,
    NonfiniteMLEError,
    NotAssessableError,
    OccludeError,
    SpecError,
    UsageError,
)
from .estimators import (
    CIFCurve,
    CoxFit,
    SurvivalCurve,
    TestResult,
    cif_aalen_johansen,
    cox_fit,
    km_estimate,
    logrank_test,
    rmst,
)
from .io import parse_spec, parse_specs, read_derived, read_specs, read_subjects
from .model import *  # noqa: F401,F403
from .sensitivity import (
    SensitivityReport,
    departure_summary,
    dual_occlusion_dating,
    impute_target_times,
    redate,
)
from .simulation import (
    ArmSpec,
    CalendarDay,
    EventCount,
    HazardSpec,
    StreamSchedule,
    TrialScenario,
    apply_cutoff,
    operating_characteristics,
    sample_piecewise_exponential,
    simulate_trial,
)

__version__ = "0.1.0"
