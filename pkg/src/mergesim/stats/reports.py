"""Quantitative, qualitative and regression tables plus plot-data series."""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from ..metrics import EmptySample, MetricsRow, Summary, aggregate
from ..domain import RegressionFit
from .indicators import IndicatorScore, score_indicators
from .intervals import t_interval, wilson_interval
from .regression import FitError, fmt_p, linear_fit, logistic_fit


@dataclass
class Analysis:
    label: str
    summary: Optional[Summary]
    logit: Optional[RegressionFit]
    gap: Optional[RegressionFit]
    indicators: IndicatorScore
    notes: list[str]


def analyze_rows(label: str, rows: Sequence[MetricsRow], alpha: float = 0.05) -> Analysis:
    notes: list[str] = []
    try:
        summary = aggregate(rows)
    except EmptySample as exc:
        summary = None
        notes.append(f"summary: {exc}")
    kept = [r for r in rows if r.included]
    logit = gap = None
    try:
        logit = logistic_fit([r.metrics.merge_first for r in kept], [r.h for r in kept], [r.dv for r in kept])
    except FitError as exc:
        notes.append(f"logistic fit: {exc}")
    try:
        gap = linear_fit([r.metrics.gap_at_merge for r in kept], [r.h for r in kept], [r.dv for r in kept])
    except FitError as exc:
        notes.append(f"linear fit: {exc}")
    pw = summary.mean_piecewise if summary else None
    if pw is None:
        notes.append("piecewise score unavailable (no per-step data)")
    return Analysis(label, summary, logit, gap, score_indicators(logit, gap, pw, alpha), notes)


def _num(x: Optional[float], digits: int = 2) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return f"{x:.{digits}f}"


def format_table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    widths = [max(len(str(h)), *(len(str(r[i])) for r in rows)) if rows else len(str(h)) for i, h in enumerate(header)]
    lines = ["  ".join(str(h).ljust(w) for h, w in zip(header, widths)),
             "  ".join("-" * w for w in widths)]
    lines += ["  ".join(str(c).rjust(w) if i else str(c).ljust(w) for i, (c, w) in enumerate(zip(r, widths)))
              for r in rows]
    return "\n".join(lines) + "\n"


def _write(out_dir: Path, stem: str, header: Sequence[str], rows: Sequence[Sequence[str]], title: str) -> None:
    with (out_dir / f"{stem}.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    (out_dir / f"{stem}.txt").write_text(f"{title}\n\n{format_table(header, rows)}", encoding="utf-8")


QUANT_HEADER = ("setting", "n_trials", "n_included", "collision_pct", "gap_m", "rmse_mps", "joint_pct")
QUAL_HEADER = ("setting", "I1", "I2", "I3", "I4", "I5", "S")
REG_HEADER = ("setting", "model", "term", "estimate", "se", "statistic", "p", "n")
PLOT_HEADER = ("setting", "dv", "h", "n", "p_left_first", "p_lo", "p_hi",
               "gap_mean", "gap_lo", "gap_hi", "rmse_mean", "rmse_lo", "rmse_hi")


def quantitative_rows(analyses: Sequence[Analysis]) -> list[list[str]]:
    out = []
    for a in analyses:
        s = a.summary
        if s is None:
            out.append([a.label, "", "", "", "", "", ""])
            continue
        out.append([a.label, str(s.n_trials), str(s.n_included), _num(s.collision_rate),
                    _num(s.mean_gap), _num(s.mean_rmse), _num(s.joint_rate, 1)])
    return out


def qualitative_rows(analyses: Sequence[Analysis]) -> list[list[str]]:
    return [[a.label, *("Y" if f else "X" for f in a.indicators.flags), f"{a.indicators.total}/5"]
            for a in analyses]


def regression_rows(analyses: Sequence[Analysis]) -> list[list[str]]:
    out = []
    for a in analyses:
        for fit in (a.logit, a.gap):
            if fit is None:
                continue
            for name, b, se, stat, p in zip(fit.names, fit.coefficients, fit.standard_errors,
                                            fit.test_statistics, fit.p_values):
                out.append([a.label, fit.model_kind, name, _num(b), _num(se, 3), _num(stat), fmt_p(p),
                            str(fit.n_observations)])
    return out


def plot_rows(label: str, rows: Sequence[MetricsRow]) -> list[list[str]]:
    """Per (dv, h) cell: merge-first proportion with Wilson interval, gap and
    per-driver RMSE means with t intervals. Collisions excluded."""
    cells: dict[tuple[float, float], list[MetricsRow]] = defaultdict(list)
    for r in rows:
        if r.included:
            cells[(r.dv, r.h)].append(r)
    out = []
    for (dv, h), group in sorted(cells.items()):
        n = len(group)
        k = sum(r.metrics.merge_first for r in group)
        p_lo, p_hi = wilson_interval(k, n)
        gaps = [r.metrics.gap_at_merge for r in group]
        rmses = [v for r in group for v in (r.metrics.speed_rmse_left, r.metrics.speed_rmse_right)]
        g_lo, g_hi = t_interval(gaps) if n >= 2 else (None, None)
        r_lo, r_hi = t_interval(rmses)
        out.append([label, _num(dv), _num(h), str(n), _num(k / n, 4), _num(p_lo, 4), _num(p_hi, 4),
                    _num(math.fsum(gaps) / n, 4), _num(g_lo, 4), _num(g_hi, 4),
                    _num(math.fsum(rmses) / len(rmses), 4), _num(r_lo, 4), _num(r_hi, 4)])
    return out


def render_reports(datasets: dict[str, Sequence[MetricsRow]], out_dir: Path,
                   reference: Optional[tuple[str, Sequence[MetricsRow]]] = None) -> list[Analysis]:
    """Write quantitative.*, indicators.*, regression.*, plot_data.csv and notes.txt into ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    items = list(datasets.items())
    if reference is not None:
        items.insert(0, reference)
    analyses = [analyze_rows(label, rows) for label, rows in items]

    _write(out_dir, "quantitative", QUANT_HEADER, quantitative_rows(analyses),
           "Quantitative indicators (collisions and non-finished trials excluded except from collision %)")
    _write(out_dir, "indicators", QUAL_HEADER, qualitative_rows(analyses),
           "Qualitative indicators: I1 headway up -> merge-first; I2 dv up -> merge-first down; "
           "I3 headway up -> gap; I4 gap independent of dv; I5 piecewise-constant control")
    _write(out_dir, "regression", REG_HEADER, regression_rows(analyses),
           "Regression coefficients (logistic: Wald z; linear: t)")
    with (out_dir / "plot_data.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(PLOT_HEADER)
        for label, rows in items:
            w.writerows(plot_rows(label, rows))
    notes = [f"{a.label}: {n}" for a in analyses for n in a.notes]
    (out_dir / "notes.txt").write_text("\n".join(notes) + ("\n" if notes else ""), encoding="utf-8")
    return analyses
