"""
Deviation loss.

Z-score deviation dev = (score - mu) / sigma; normals are pulled to |dev| = 0
and anomalies pushed to dev >= a. With ``reference = "sampled"`` mu and
sigma are re-estimated every call from draws of N(mu, sigma).
"""

from typing import Optional

import torch

from ..core.exceptions import StructuralError
from ..engine.diffcore import DTYPE, clamp_min
from ..schemas.config import DeviationConfig


def deviation(scores: torch.Tensor, mu: float, sigma: float) -> torch.Tensor:
    return (scores - mu) / sigma


def deviation_loss(
    scores: torch.Tensor,
    labels: torch.Tensor,
    cfg: Optional[DeviationConfig] = None,
    generator: Optional[torch.Generator] = None,
) -> torch.Tensor:
    """
    Mean of (1 - y) |dev| + y max(0, a - dev)

    Args:
        scores: Per-node scores
        labels: Per-node 0/1 labels (1 = anomaly)
        cfg: mu, sigma, margin a and reference mode
        generator: Stream for the sampled reference

    Returns:
        torch.Tensor: scalar loss
    """
    cfg = cfg or DeviationConfig()
    labels = torch.as_tensor(labels, dtype=DTYPE)
    if labels.shape != scores.shape:
        raise StructuralError(f"labels {tuple(labels.shape)} do not match scores {tuple(scores.shape)}")

    mu, sigma = cfg.mu, cfg.sigma
    if cfg.reference == "sampled":
        reference = cfg.mu + cfg.sigma * torch.randn(cfg.reference_size, generator=generator, dtype=DTYPE)
        mu, sigma = reference.mean(), reference.std(unbiased=False)

    dev = deviation(scores, mu, sigma)
    per_node = (1 - labels) * dev.abs() + labels * clamp_min(cfg.margin - dev, 0.0)
    return per_node.mean()
