"""
Ranking metrics and multi-seed summaries.

AUC-ROC is the Mann-Whitney statistic computed from average ranks, so tied
scores contribute one half. AUC-PR is average precision over the
precision-recall step curve with tied scores entering together.
"""

from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
from scipy.stats import rankdata
from sklearn.metrics import average_precision_score

from ..core.exceptions import MetricError
from ..schemas.reports import AggregateReport, MetricsReport


def _check(scores, labels):
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise MetricError(f"{scores.size} scores for {labels.size} labels")
    if not np.isin(labels, (0, 1)).all():
        raise MetricError("labels must be 0 or 1")
    n_pos = int(labels.sum())
    if n_pos == 0 or n_pos == labels.size:
        raise MetricError("metric undefined: labels contain a single class")
    if not np.all(np.isfinite(scores)):
        raise MetricError("scores contain non-finite values")
    return scores, labels.astype(np.int64)


def auc_roc(scores, labels) -> float:
    """P(score_anomaly > score_normal) + 1/2 P(equal) over all anomaly-normal pairs."""
    scores, labels = _check(scores, labels)
    ranks = rankdata(scores, method="average")
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    u = ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def auc_pr(scores, labels) -> float:
    """Average precision: sum over distinct thresholds of (R_k - R_{k-1}) P_k."""
    scores, labels = _check(scores, labels)
    return float(average_precision_score(labels, scores))


def evaluate_scores(
    scores,
    labels,
    seed: Optional[int] = None,
    variant: Optional[str] = None,
) -> MetricsReport:
    scores, labels = _check(scores, labels)
    return MetricsReport(
        auc_roc=auc_roc(scores, labels),
        auc_pr=auc_pr(scores, labels),
        prevalence=float(labels.mean()),
        seed=seed,
        variant=variant,
    )


def summarize_runs(reports: Sequence[MetricsReport], variant: Optional[str] = None) -> AggregateReport:
    """
    Mean and population std of per-seed reports, formatted to 3 decimals

    Raises:
        ValueError: no reports
    """
    reports = list(reports)
    if not reports:
        raise ValueError("summarize_runs needs at least one report")

    roc = np.array([r.auc_roc for r in reports])
    pr = np.array([r.auc_pr for r in reports])
    return AggregateReport(
        variant=variant if variant is not None else reports[0].variant,
        n_runs=len(reports),
        auc_roc_mean=float(roc.mean()),
        auc_roc_std=float(roc.std()),
        auc_pr_mean=float(pr.mean()),
        auc_pr_std=float(pr.std()),
        prevalence=float(np.mean([r.prevalence for r in reports])),
        auc_roc=f"{roc.mean():.3f}±{roc.std():.3f}",
        auc_pr=f"{pr.mean():.3f}±{pr.std():.3f}",
        per_seed=reports,
    )


def format_table(aggregates: Iterable[AggregateReport]) -> str:
    """Aligned-column text table, one row per variant."""
    header = ["variant", "runs", "auc_roc", "auc_pr", "prevalence"]
    rows: List[List[str]] = [
        [a.variant or "-", str(a.n_runs), a.auc_roc, a.auc_pr, f"{a.prevalence:.3f}"]
        for a in aggregates
    ]
    widths = [max(len(row[i]) for row in [header] + rows) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in [header] + rows]
    return "\n".join(lines) + "\n"


def aggregate_by_variant(reports: Iterable[MetricsReport]) -> Dict[str, AggregateReport]:
    grouped: Dict[str, List[MetricsReport]] = {}
    for report in reports:
        grouped.setdefault(report.variant or "-", []).append(report)
    return {variant: summarize_runs(rs, variant) for variant, rs in grouped.items()}
