"""Metrics and run-manifest schemas."""

from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field


class MetricsReport(BaseModel):
    """Ranking quality of one score vector against held-out labels."""

    auc_roc: float = Field(..., ge=0.0, le=1.0)
    auc_pr: float = Field(..., ge=0.0, le=1.0)
    prevalence: float = Field(..., gt=0.0, lt=1.0)
    seed: Optional[int] = None
    variant: Optional[str] = None


class AggregateReport(BaseModel):
    """Mean and population std of per-seed reports."""

    variant: Optional[str] = None
    n_runs: int = Field(..., ge=1)
    auc_roc_mean: float
    auc_roc_std: float = Field(..., ge=0.0)
    auc_pr_mean: float
    auc_pr_std: float = Field(..., ge=0.0)
    prevalence: float
    auc_roc: str  # "0.850±0.050"
    auc_pr: str
    per_seed: List[MetricsReport]


class AlignmentReport(BaseModel):
    """What happened during joint alignment (one seed, one objective)."""

    objective: str
    epochs: int
    steps_per_epoch: int
    trace: List[float] = Field(default_factory=list)
    sinkhorn_seconds: Optional[float] = None
    sinkhorn_solves: int = 0
    sinkhorn_unconverged: int = 0
    final_losses: Dict[str, float] = Field(default_factory=dict)


class StageSummary(BaseModel):
    stage: str
    epochs: int
    steps: int
    final_loss: Optional[float] = None
    details: Dict[str, Any] = Field(default_factory=dict)
