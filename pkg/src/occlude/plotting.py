"""Figures written next to the delimited outputs (Agg backend, PNG)."""

from __future__ import annotations

import os
import tempfile

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .estimators import cif_aalen_johansen, kaplan_meier  # noqa: E402
from .model import StatusKind  # noqa: E402


def _save(fig, path):
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".png")
    os.close(fd)
    try:
        fig.savefig(tmp, dpi=110, metadata={"Software": None})
        os.replace(tmp, path)
    finally:
        plt.close(fig)
        if os.path.exists(tmp):
            os.remove(tmp)
    return path


def _step(ax, curve, label, band=True, **kw):
    x = np.concatenate([[0.0], curve.jump_times])
    y = np.concatenate([[1.0], curve.estimates])
    (line,) = ax.step(x, y, where="post", label=label, **kw)
    if band and curve.jump_times.size:
        lo, hi = curve.confidence_band()
        ax.fill_between(x, np.concatenate([[1.0], lo]), np.concatenate([[1.0], hi]), step="post",
                        alpha=0.15, color=line.get_color())
    ax.plot([x[-1], curve.max_time], [y[-1], y[-1]], color=line.get_color(), **kw)


def plot_survival(records, path, title=None, tau=None):
    """KM by arm with pointwise log(-log) bands; or CIF by arm and cause with competing exits."""
    records = list(records)
    arms = sorted({r.arm for r in records})
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    if any(r.status is StatusKind.COMPETING for r in records):
        for a in arms:
            c = cif_aalen_johansen(records, a)
            for k in c.causes:
                ax.step(np.concatenate([[0.0], c.jump_times]), np.concatenate([[0.0], c.cif[k]]),
                        where="post", label=f"{a}: {k}")
        ax.set_ylabel("cumulative incidence")
    else:
        for a in arms:
            sub = [r for r in records if r.arm == a]
            _step(ax, kaplan_meier([r.time_days for r in sub], [r.status is StatusKind.EVENT for r in sub]), a)
        ax.set_ylabel("event-free probability")
        if tau is not None:
            ax.axvline(tau, ls=":", color="grey", lw=1)
    ax.set_xlabel("day")
    ax.set_ylim(-0.02, 1.02)
    ax.legend(frameon=False, fontsize=8)
    if title:
        ax.set_title(title, fontsize=10)
    return _save(fig, path)


def plot_variants(report, path):
    """Overlay the all-cause event-free curves of each sensitivity variant, one panel per arm."""
    arms = sorted({r.arm for recs in report.records.values() for r in recs})
    fig, axes = plt.subplots(1, len(arms), figsize=(4.2 * len(arms), 3.8), squeeze=False, sharey=True)
    for ax, a in zip(axes[0], arms):
        for name, recs in report.records.items():
            sub = [r for r in recs if r.arm == a]
            if not sub:
                continue
            curve = kaplan_meier([r.time_days for r in sub], [r.status is not StatusKind.CENSORED for r in sub])
            _step(ax, curve, name, band=False, lw=1.2)
        ax.set_title(a, fontsize=10)
        ax.set_xlabel("day")
        ax.set_ylim(-0.02, 1.02)
    axes[0][0].set_ylabel("event-free probability")
    axes[0][0].legend(frameon=False, fontsize=8)
    fig.suptitle(report.analysis_id, fontsize=10)
    return _save(fig, path)


def plot_opchar(table, path):
    """Power and mean estimate against calendar cutoff, with 2 MC-se bars."""
    x = np.array([r.cutoff_months for r in table.rows])
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(9, 3.6))
    a1.errorbar(x, [r.power for r in table.rows], yerr=[2 * r.power_mcse for r in table.rows], marker="o", capsize=3)
    a1.set_xlabel("cutoff (months)")
    a1.set_ylabel("rejection rate")
    a1.axhline(0.05, ls=":", color="grey", lw=1)
    a2.errorbar(x, [r.mean_estimate for r in table.rows], yerr=[2 * r.mean_mcse for r in table.rows],
                marker="o", capsize=3)
    a2.axhline(table.full_follow_up_mean, ls="--", color="grey", lw=1, label="full follow-up")
    a2.set_xlabel("cutoff (months)")
    a2.set_ylabel(f"mean estimate ({table.analysis})")
    a2.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    return _save(fig, path)
