"""Topology contrastive loss over centre / positive / negative embeddings."""

import torch

from ..core.exceptions import StructuralError
from ..engine.diffcore import log_sigmoid


def contrastive_loss(
    z_u: torch.Tensor,
    z_v: torch.Tensor,
    z_vn: torch.Tensor,
    negatives: int,
) -> torch.Tensor:
    """
    Negative-sampling contrastive loss

    Per centre u: -log sigma(z_u . z_v) - Q * mean_n log sigma(-z_u . z_vn),
    averaged over centres. The negative term is the Q-scaled Monte-Carlo
    mean over the Q sampled negatives.

    Args:
        z_u: B x M centre embeddings
        z_v: B x M positive embeddings, row i paired with centre i
        z_vn: (Q*B) x M negative embeddings, centre-major
        negatives: Q

    Returns:
        torch.Tensor: scalar loss
    """
    if z_v.shape != z_u.shape:
        raise StructuralError(f"positives {tuple(z_v.shape)} do not match centres {tuple(z_u.shape)}")
    if z_vn.shape != (negatives * z_u.shape[0], z_u.shape[1]):
        raise StructuralError(
            f"negatives have shape {tuple(z_vn.shape)}, expected ({negatives * z_u.shape[0]}, {z_u.shape[1]})"
        )

    positive = log_sigmoid((z_u * z_v).sum(dim=1))
    anchors = z_u.repeat_interleave(negatives, dim=0)
    negative = log_sigmoid(-(anchors * z_vn).sum(dim=1)).view(-1, negatives).mean(dim=1)
    return (-positive - negatives * negative).mean()
