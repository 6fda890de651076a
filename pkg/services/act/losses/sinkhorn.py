"""
Sinkhorn Divergence Module

Debiased entropic optimal transport between two uniformly weighted point
clouds with squared-Euclidean ground cost::

    S_eps(a, b) = OT_eps(a, b) - 1/2 OT_eps(a, a) - 1/2 OT_eps(b, b)

Dual potentials are found by log-domain Sinkhorn iterations with symmetric
(averaged) updates and eps-scaling: eps starts at the largest pairwise cost
and shrinks by ``scaling`` per iteration until it reaches ``blur``, where
iterations continue until the potentials move less than ``tolerance``.

Gradients use the envelope theorem: potentials are held fixed at their
converged values and the gradient of OT_eps w.r.t. the cost matrix is the
transport plan.
"""

import logging
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np
import torch

from ..core.exceptions import StructuralError
from ..schemas.config import SinkhornConfig

logger = logging.getLogger(__name__)


@dataclass
class SinkhornResult:
    """Divergence value (differentiable), convergence flag and iteration count."""

    value: torch.Tensor
    converged: bool
    iterations: int

    def __float__(self) -> float:
        return float(self.value.detach())


def squared_distances(x: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    """|x_i - y_j|^2 for every pair, clamped at zero."""
    xx = (x * x).sum(dim=1, keepdim=True)
    yy = (y * y).sum(dim=1, keepdim=True).T
    return torch.clamp(xx + yy - 2.0 * (x @ y.T), min=0.0)


def _softmin(eps: float, cost: torch.Tensor, h: torch.Tensor) -> torch.Tensor:
    """-eps log sum_j exp(h_j - cost_ij / eps)."""
    return -eps * torch.logsumexp(h.unsqueeze(0) - cost / eps, dim=1)


def _eps_schedule(diameter: float, cfg: SinkhornConfig) -> List[float]:
    schedule = []
    eps = max(diameter, cfg.blur)
    while eps > cfg.blur:
        schedule.append(eps)
        eps *= cfg.scaling
    return schedule


def _potentials(
    c_xy: torch.Tensor,
    a_log: torch.Tensor,
    b_log: torch.Tensor,
    schedule: List[float],
    cfg: SinkhornConfig,
) -> Tuple[torch.Tensor, torch.Tensor, bool, int]:
    c_yx = c_xy.T
    eps = schedule[0] if schedule else cfg.blur
    f = _softmin(eps, c_xy, b_log)
    g = _softmin(eps, c_yx, a_log)

    for eps in schedule:
        f_t = _softmin(eps, c_xy, b_log + g / eps)
        g_t = _softmin(eps, c_yx, a_log + f / eps)
        f, g = 0.5 * (f + f_t), 0.5 * (g + g_t)

    eps = cfg.blur
    for iteration in range(1, cfg.max_iterations + 1):
        f_t = _softmin(eps, c_xy, b_log + g / eps)
        g_t = _softmin(eps, c_yx, a_log + f / eps)
        f_new, g_new = 0.5 * (f + f_t), 0.5 * (g + g_t)
        delta = max(float((f_new - f).abs().max()), float((g_new - g).abs().max()))
        f, g = f_new, g_new
        if delta < cfg.tolerance:
            return f, g, True, iteration
    return f, g, False, cfg.max_iterations


def _entropic_ot(
    x: torch.Tensor,
    y: torch.Tensor,
    schedule: List[float],
    cfg: SinkhornConfig,
) -> Tuple[torch.Tensor, bool, int]:
    """OT_eps(x, y) with the envelope gradient attached."""
    cost = squared_distances(x, y)
    a_log = torch.full((x.shape[0],), -np.log(x.shape[0]), dtype=x.dtype)
    b_log = torch.full((y.shape[0],), -np.log(y.shape[0]), dtype=y.dtype)

    with torch.no_grad():
        f, g, converged, iterations = _potentials(cost.detach(), a_log, b_log, schedule, cfg)
        value = (a_log.exp() * f).sum() + (b_log.exp() * g).sum()
        plan = torch.exp(a_log[:, None] + b_log[None, :] + (f[:, None] + g[None, :] - cost) / cfg.blur)

    surrogate = (plan * cost).sum()
    return surrogate + (value - surrogate.detach()), converged, iterations


def sinkhorn_divergence(
    z_s: torch.Tensor,
    z_t: torch.Tensor,
    cfg: SinkhornConfig = None,
) -> SinkhornResult:
    """
    Debiased Sinkhorn divergence between two point clouds

    Gradients flow to whichever cloud requires them; alignment passes a
    detached source cloud so only the target receives a gradient.

    Args:
        z_s: n x M cloud
        z_t: m x M cloud
        cfg: blur, iteration budget, tolerance and eps-scaling factor

    Returns:
        SinkhornResult: value, converged flag (all three OT problems),
            iterations (worst of the three)

    Raises:
        StructuralError: empty cloud or dimension mismatch
    """
    cfg = cfg or SinkhornConfig()
    if z_s.ndim != 2 or z_t.ndim != 2 or z_s.shape[0] == 0 or z_t.shape[0] == 0:
        raise StructuralError("sinkhorn_divergence needs two nonempty 2-d clouds")
    if z_s.shape[1] != z_t.shape[1]:
        raise StructuralError(f"cloud dims differ: {z_s.shape[1]} vs {z_t.shape[1]}")

    with torch.no_grad():
        diameter = max(
            float(squared_distances(z_s, z_t).max()),
            float(squared_distances(z_s, z_s).max()),
            float(squared_distances(z_t, z_t).max()),
        )
    schedule = _eps_schedule(diameter, cfg)

    ot_st, ok_st, it_st = _entropic_ot(z_s, z_t, schedule, cfg)
    ot_ss, ok_ss, it_ss = _entropic_ot(z_s, z_s, schedule, cfg)
    ot_tt, ok_tt, it_tt = _entropic_ot(z_t, z_t, schedule, cfg)

    value = ot_st - 0.5 * ot_ss - 0.5 * ot_tt
    converged = ok_st and ok_ss and ok_tt
    if not converged:
        logger.debug(f"Sinkhorn did not converge in {cfg.max_iterations} iterations at blur {cfg.blur}")
    return SinkhornResult(value=value, converged=converged, iterations=max(it_st, it_ss, it_tt))
