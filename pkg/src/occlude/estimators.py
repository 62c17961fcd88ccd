"""Survival estimators for derived analysis datasets.

Product-limit (Kaplan-Meier) survival with Greenwood variance, Aalen-Johansen
cumulative incidence, the two-sample log-rank test, restricted mean survival
time and a two-arm Cox model on the treatment indicator.

Conventions shared by every estimator:

* a subject censored at an event time is still in that time's risk set;
* tied event times are pooled (hypergeometric pooling in the log-rank test,
  Breslow's approximation in the Cox partial likelihood).

References
----------
    * E. L. Kaplan and P. Meier (1958). Nonparametric estimation from
      incomplete observations. JASA 53, 457-481.
    * O. O. Aalen and S. Johansen (1978). An empirical transition matrix for
      non-homogeneous Markov chains based on censored observations.
      Scand. J. Statist. 5, 141-150.
    * E. Marubini and M. G. Valsecchi (1995). Analysing Survival Data from
      Clinical Trials and Observational Studies. Wiley. (delta-method
      variance of the cumulative incidence function)
    * P. Royston and M. K. B. Parmar (2011). The use of restricted mean
      survival time to estimate the treatment effect in randomized clinical
      trials when the proportional hazards assumption is in doubt.
      Stat. Med. 30, 2409-2421.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import DataError, EstimationError, NonfiniteMLEError
from .model import StatusKind

Z95 = stats.norm.ppf(0.975)


@dataclass(frozen=True, eq=False)
class SurvivalCurve:
    """Right-continuous step function S(t) with jumps at event times."""

    jump_times: np.ndarray
    estimates: np.ndarray
    variance: np.ndarray
    at_risk: np.ndarray
    n_events: np.ndarray
    n_subjects: int
    max_time: float  # largest observed time, event or censored

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.jump_times.size == 0:
            return float(1.0) if t.ndim == 0 else np.ones_like(t)
        idx = np.searchsorted(self.jump_times, t, side="right") - 1
        out = np.where(idx < 0, 1.0, self.estimates[np.maximum(idx, 0)])
        return float(out) if out.ndim == 0 else out

    def variance_at(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.jump_times, t, side="right") - 1
        out = np.where(idx < 0, 0.0, self.variance[np.maximum(idx, 0)])
        return float(out) if out.ndim == 0 else out

    def confidence_band(self, z=Z95):
        """Pointwise normal-approximation interval on the log(-log S) scale."""
        s = self.estimates
        lower, upper = s.copy(), s.copy()
        inner = (s > 0) & (s < 1)
        se = np.zeros_like(s)
        se[inner] = np.sqrt(self.variance[inner]) / (s[inner] * np.abs(np.log(s[inner])))
        lower[inner] = s[inner] ** np.exp(z * se[inner])
        upper[inner] = s[inner] ** np.exp(-z * se[inner])
        return lower, upper


@dataclass(frozen=True, eq=False)
class CIFCurve:
    """Cumulative incidence per cause; ``event_free`` is the all-cause KM."""

    jump_times: np.ndarray
    causes: tuple
    cif: dict
    variance: dict
    event_free: np.ndarray
    at_risk: np.ndarray
    n_subjects: int
    max_time: float

    def __call__(self, cause, t):
        t = np.asarray(t, dtype=float)
        if self.jump_times.size == 0:
            return float(0.0) if t.ndim == 0 else np.zeros_like(t)
        idx = np.searchsorted(self.jump_times, t, side="right") - 1
        out = np.where(idx < 0, 0.0, self.cif[cause][np.maximum(idx, 0)])
        return float(out) if out.ndim == 0 else out

    def event_free_at(self, t):
        t = np.asarray(t, dtype=float)
        if self.jump_times.size == 0:
            return float(1.0) if t.ndim == 0 else np.ones_like(t)
        idx = np.searchsorted(self.jump_times, t, side="right") - 1
        out = np.where(idx < 0, 1.0, self.event_free[np.maximum(idx, 0)])
        return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class TestResult:
    __test__ = False  # not a pytest class

    statistic: float
    degrees_of_freedom: int
    p_value: float
    observed_minus_expected: dict
    observed: dict = field(default_factory=dict)
    expected: dict = field(default_factory=dict)
    variance: float = 0.0

    @property
    def z(self):
        """Signed square root of the statistic, positive when the second arm has excess events."""
        oe = list(self.observed_minus_expected.values())
        if not oe or self.variance <= 0:
            return 0.0
        return oe[-1] / math.sqrt(self.variance)


@dataclass(frozen=True)
class CoxFit:
    beta_hat: float
    standard_error: float
    hazard_ratio: float
    iterations: int
    log_likelihood: float
    score: float
    arms: tuple = ()

    @property
    def p_value(self):
        return float(2 * stats.norm.sf(abs(self.beta_hat / self.standard_error)))


# --------------------------------------------------------------------------
# array level


def _as_arrays(time, event):
    time = np.asarray(time, dtype=float)
    event = np.asarray(event, dtype=bool)
    if time.shape != event.shape or time.ndim != 1:
        raise ValueError("time and event must be 1-d arrays of equal length")
    if time.size == 0:
        raise DataError("empty dataset")
    if np.any(time < 0) or not np.all(np.isfinite(time)):
        raise DataError("times must be finite and >= 0")
    return time, event


def _risk_table(time, event):
    """Distinct times with number at risk and number of events at each."""
    uniq, inv = np.unique(time, return_inverse=True)
    d = np.bincount(inv, weights=event.astype(float), minlength=uniq.size)
    total = np.bincount(inv, minlength=uniq.size)
    n = total[::-1].cumsum()[::-1].astype(float)
    return uniq, n, d


def kaplan_meier(time, event) -> SurvivalCurve:
    """Product-limit estimate with Greenwood variance."""
    time, event = _as_arrays(time, event)
    uniq, n, d = _risk_table(time, event)
    keep = d > 0
    t, n, d = uniq[keep], n[keep], d[keep]
    s = np.cumprod(1.0 - d / n)
    with np.errstate(divide="ignore", invalid="ignore"):
        term = np.where(n > d, d / (n * (n - d)), 0.0)
    var = s**2 * np.cumsum(term)
    var[s == 0] = 0.0
    return SurvivalCurve(t, s, var, n.astype(int), d.astype(int), int(time.size), float(time.max()))


def aalen_johansen(time, cause) -> CIFCurve:
    """Cumulative incidence functions for competing causes.

    ``cause`` holds a cause label per subject, ``None`` for censored ones.

    Variance is the delta-method (Greenwood-type) estimator, treating the
    per-time cause counts as multinomial given the risk set. With
    F_k the cause-k incidence, S the all-cause survival, n_j at risk,
    d_j all events and d_kj cause-k events at jump time t_j::

        Var F_k(t) = sum_{t_j <= t} (F_k(t) - F_k(t_j))^2 d_j / (n_j (n_j - d_j))
                   + sum_{t_j <= t} S(t_j-)^2 d_kj (n_j - d_kj) / n_j^3
                   - 2 sum_{t_j <= t} (F_k(t) - F_k(t_j)) S(t_j-) d_kj / n_j^2

    (Marubini & Valsecchi 1995). The squared and cross terms are expanded
    into cumulative sums so the whole curve costs O(n log n).
    """
    time = np.asarray(time, dtype=float)
    labels = list(cause)
    if time.size == 0:
        raise DataError("empty dataset")
    if len(labels) != time.size:
        raise ValueError("time and cause must have equal length")
    event = np.array([c is not None for c in labels])
    causes = tuple(sorted({c for c in labels if c is not None}))
    time, event = _as_arrays(time, event)
    uniq, inv = np.unique(time, return_inverse=True)
    total = np.bincount(inv, minlength=uniq.size)
    n_all = total[::-1].cumsum()[::-1].astype(float)
    d_all = np.bincount(inv, weights=event.astype(float), minlength=uniq.size)
    keep = d_all > 0
    t, n, d = uniq[keep], n_all[keep], d_all[keep]

    s = np.cumprod(1.0 - d / n) if t.size else np.zeros(0)
    s_prev = np.concatenate([[1.0], s[:-1]]) if t.size else np.zeros(0)
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(n > d, d / (n * (n - d)), 0.0)
    cif, var = {}, {}
    for k in causes:
        mask = np.array([c == k for c in labels])
        dk = np.bincount(inv, weights=mask.astype(float), minlength=uniq.size)[keep]
        f = np.cumsum(s_prev * dk / n)
        # expand sum_j (F(t) - F_j)^2 a_j and sum_j (F(t) - F_j) b_j
        ca, caf, caf2 = np.cumsum(a), np.cumsum(a * f), np.cumsum(a * f**2)
        b = s_prev * dk / n**2
        cb, cbf = np.cumsum(b), np.cumsum(b * f)
        second = np.cumsum(s_prev**2 * dk * (n - dk) / n**3)
        v = f**2 * ca - 2 * f * caf + caf2 + second - 2 * (f * cb - cbf)
        if len(causes) == 1:
            f = 1.0 - s  # same quantity; avoids rounding drift from the cumulative sum
        cif[k] = f
        var[k] = np.maximum(v, 0.0)
    return CIFCurve(t, causes, cif, var, s, n.astype(int), int(time.size), float(time.max()))


def logrank(time, event, group) -> TestResult:
    """Unweighted two-sample log-rank test; ``group`` holds 0/1 labels."""
    time, event = _as_arrays(time, event)
    g = np.asarray(group, dtype=int)
    if set(np.unique(g)) - {0, 1}:
        raise ValueError("group must be coded 0/1")
    uniq, inv = np.unique(time, return_inverse=True)
    tot = np.bincount(inv, minlength=uniq.size)
    tot1 = np.bincount(inv, weights=(g == 1).astype(float), minlength=uniq.size)
    n = tot[::-1].cumsum()[::-1].astype(float)
    n1 = tot1[::-1].cumsum()[::-1]
    d = np.bincount(inv, weights=event.astype(float), minlength=uniq.size)
    d1 = np.bincount(inv, weights=(event & (g == 1)).astype(float), minlength=uniq.size)
    keep = d > 0
    n, n1, d, d1 = n[keep], n1[keep], d[keep], d1[keep]
    e1 = d * n1 / n
    with np.errstate(divide="ignore", invalid="ignore"):
        v = np.where(n > 1, d * (n1 / n) * (1 - n1 / n) * (n - d) / (n - 1), 0.0)
    o1, ex1, var = float(d1.sum()), float(e1.sum()), float(v.sum())
    o0, ex0 = float(d.sum()) - o1, float(d.sum()) - ex1
    oe = {0: o0 - ex0, 1: o1 - ex1}
    if d.sum() < 1 or var <= 0:
        return TestResult(0.0, 1, 1.0, oe, {0: o0, 1: o1}, {0: ex0, 1: ex1}, var)
    stat = (o1 - ex1) ** 2 / var
    return TestResult(float(stat), 1, float(stats.chi2.sf(stat, 1)), oe, {0: o0, 1: o1}, {0: ex0, 1: ex1}, var)


def _cox_tables(time, event, x):
    uniq, inv = np.unique(time, return_inverse=True)
    tot = np.bincount(inv, minlength=uniq.size)
    tot1 = np.bincount(inv, weights=x.astype(float), minlength=uniq.size)
    n = tot[::-1].cumsum()[::-1].astype(float)
    n1 = tot1[::-1].cumsum()[::-1]
    d = np.bincount(inv, weights=event.astype(float), minlength=uniq.size)
    s = np.bincount(inv, weights=(event & (x == 1)).astype(float), minlength=uniq.size)
    keep = d > 0
    return n[keep] - n1[keep], n1[keep], d[keep], s[keep]


def cox_loglik(beta, n0, n1, d, s):
    """Breslow log partial likelihood, score and information for a 0/1 covariate."""
    eb = math.exp(beta)
    s0 = n0 + n1 * eb
    p = n1 * eb / s0
    ll = float(np.sum(beta * s - d * np.log(s0)))
    score = float(np.sum(s - d * p))
    info = float(np.sum(d * p * (1 - p)))
    return ll, score, info


def cox_two_arm(time, event, x, tol=1e-10, max_iter=50) -> CoxFit:
    """Newton-Raphson fit of the Breslow partial likelihood on a treatment indicator."""
    time, event = _as_arrays(time, event)
    x = np.asarray(x, dtype=int)
    n0, n1, d, s = _cox_tables(time, event, x)
    if d.sum() < 1 or not np.any((n0 > 0) & (n1 > 0)):
        raise EstimationError("Cox fit needs at least one event in a risk set holding both arms")
    # The score decreases in beta; the MLE is finite iff it changes sign.
    lim_hi = float(np.sum(s - d * (n1 > 0)))
    lim_lo = float(np.sum(s - d * (n0 == 0)))
    if lim_hi >= 0:
        raise NonfiniteMLEError("+")
    if lim_lo <= 0:
        raise NonfiniteMLEError("-")
    beta = 0.0
    ll, score, info = cox_loglik(beta, n0, n1, d, s)
    it = 0
    while abs(score) >= tol and it < max_iter:
        it += 1
        step = score / info
        new = beta + step
        new_ll, new_score, new_info = cox_loglik(new, n0, n1, d, s)
        halvings = 0
        while new_ll < ll and halvings < 30:
            step /= 2
            new = beta + step
            new_ll, new_score, new_info = cox_loglik(new, n0, n1, d, s)
            halvings += 1
        beta, ll, score, info = new, new_ll, new_score, new_info
    return CoxFit(beta, 1.0 / math.sqrt(info), math.exp(beta), it, ll, score)


def km_area(curve: SurvivalCurve, start: float, stop: float) -> float:
    """Exact area under the KM step function over [start, stop]."""
    if stop < start:
        raise ValueError("stop must be >= start")
    inner = curve.jump_times[(curve.jump_times > start) & (curve.jump_times < stop)]
    knots = np.concatenate([[start], inner, [stop]])
    heights = curve(knots[:-1])
    return float(np.sum(heights * np.diff(knots)))


def rmst(curve: SurvivalCurve, tau: float):
    """Restricted mean survival time up to ``tau`` and its plug-in variance.

    Var = sum_{t_j <= tau} A_j^2 d_j / (n_j (n_j - d_j)), with A_j the area
    under the curve between t_j and tau.
    """
    if tau > curve.max_time:
        raise DataError(f"tau {tau} exceeds follow-up; max permissible tau is {curve.max_time:g}")
    if tau < 0:
        raise DataError("tau must be >= 0")
    est = km_area(curve, 0.0, tau)
    var = 0.0
    for tj, nj, dj in zip(curve.jump_times, curve.at_risk, curve.n_events):
        if tj > tau or nj == dj:
            continue
        a = km_area(curve, tj, tau)
        var += a * a * dj / (nj * (nj - dj))
    return est, var


# --------------------------------------------------------------------------
# record level


def _select(records, arm=None):
    recs = [r for r in records if arm is None or r.arm == arm]
    if not recs:
        raise DataError("empty dataset" + (f" for arm {arm!r}" if arm is not None else ""))
    return recs


def _reject_competing(recs, what):
    if any(r.status is StatusKind.COMPETING for r in recs):
        raise DataError(f"{what} cannot use competing-risk records; use the cumulative incidence estimator")


def _arm_coding(recs, arms):
    present = sorted({r.arm for r in recs})
    if arms is None:
        arms = tuple(present)
    if len(arms) != 2 or set(present) - set(arms):
        raise DataError(f"exactly two arms required, found {present}")
    return tuple(arms)


def km_estimate(records, arm=None) -> SurvivalCurve:
    recs = _select(records, arm)
    _reject_competing(recs, "Kaplan-Meier")
    return kaplan_meier([r.time_days for r in recs], [r.status is StatusKind.EVENT for r in recs])


def cif_aalen_johansen(records, arm=None) -> CIFCurve:
    recs = _select(records, arm)
    return aalen_johansen(
        [r.time_days for r in recs],
        [None if r.status is StatusKind.CENSORED else (r.cause or r.status.value) for r in recs],
    )


def logrank_test(records, arms=None) -> TestResult:
    """Log-rank test; the second arm of ``arms`` (default: sorted labels) is coded 1."""
    recs = _select(records)
    _reject_competing(recs, "log-rank test")
    arms = _arm_coding(recs, arms)
    res = logrank(
        [r.time_days for r in recs],
        [r.status is StatusKind.EVENT for r in recs],
        [int(r.arm == arms[1]) for r in recs],
    )
    relabel = lambda dct: {arms[k]: v for k, v in dct.items()}  # noqa: E731
    return TestResult(res.statistic, res.degrees_of_freedom, res.p_value, relabel(res.observed_minus_expected),
                      relabel(res.observed), relabel(res.expected), res.variance)


def cox_fit(records, arms=None) -> CoxFit:
    """Cox model on the indicator of the second arm; HR is arm 2 vs arm 1."""
    recs = _select(records)
    _reject_competing(recs, "Cox model")
    arms = _arm_coding(recs, arms)
    fit = cox_two_arm(
        [r.time_days for r in recs],
        [r.status is StatusKind.EVENT for r in recs],
        [int(r.arm == arms[1]) for r in recs],
    )
    return CoxFit(fit.beta_hat, fit.standard_error, fit.hazard_ratio, fit.iterations, fit.log_likelihood,
                  fit.score, arms)
