"""
Differentiable Core Module

Reverse-mode differentiation and ADAM updates for every training objective.

All arithmetic runs in float64 on the CPU. Expressions are plain callables
over named torch tensors; gradients come from ``torch.autograd``.

Supported building blocks beyond the torch primitives (matmul, add, scale,
sigmoid, relu, abs, mean) are the guarded ``safe_log`` / ``safe_div`` and
``clamp_min``; they keep log-domain terms finite when sigmoids saturate.
"""

from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, Mapping, Optional, Tuple, Union

import numpy as np
import torch
import torch.nn.functional as F

from ..core.exceptions import StructuralError

DTYPE = torch.float64
LOG_EPS = 1e-12

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

Expression = Callable[..., torch.Tensor]
ArrayLike = Union[np.ndarray, torch.Tensor, float]


def as_tensor(value, requires_grad: bool = False) -> torch.Tensor:
    """Copy ``value`` into a fresh float64 leaf tensor."""
    if isinstance(value, torch.Tensor):
        value = value.detach().cpu().numpy()
    tensor = torch.as_tensor(np.asarray(value, dtype=np.float64), dtype=DTYPE).clone()
    if tensor.ndim == 0:
        tensor = tensor.reshape(1)
    if requires_grad:
        tensor.requires_grad_(True)
    return tensor


def safe_log(x: torch.Tensor) -> torch.Tensor:
    return torch.log(torch.clamp(x, min=LOG_EPS))


def safe_div(numerator: torch.Tensor, denominator: torch.Tensor) -> torch.Tensor:
    return numerator / torch.clamp(denominator, min=LOG_EPS)


def clamp_min(x: torch.Tensor, floor: float) -> torch.Tensor:
    """Elementwise max(x, floor)."""
    return torch.clamp(x, min=floor)


def log_sigmoid(x: torch.Tensor) -> torch.Tensor:
    # Closed form log(1 / (1 + exp(-x))); never needs the clamp.
    return F.logsigmoid(x)


def row_mean(x: torch.Tensor) -> torch.Tensor:
    return x.mean(dim=1, keepdim=True)


def squared_norm(x: torch.Tensor) -> torch.Tensor:
    return (x * x).sum()


def evaluate_with_gradients(
    expression: Expression,
    inputs: Mapping[str, ArrayLike],
) -> Tuple[float, Dict[str, np.ndarray]]:
    """
    Evaluate a scalar expression and its gradient w.r.t. every input

    Args:
        expression: Callable taking the inputs as keyword tensors and
            returning a single-element tensor
        inputs: Named input arrays

    Returns:
        (value, gradients) with one gradient array per input, same shape

    Raises:
        StructuralError: shape mismatch inside the expression or a
            non-scalar result
    """
    leaves = {name: as_tensor(value, requires_grad=True) for name, value in inputs.items()}
    try:
        out = expression(**leaves)
    except RuntimeError as e:
        raise StructuralError(f"expression failed: {e}")

    if out.numel() != 1:
        raise StructuralError(f"expression must be scalar, got shape {tuple(out.shape)}")

    grads = torch.autograd.grad(out.reshape(()), list(leaves.values()), allow_unused=True)
    gradients = {}
    for (name, leaf), grad in zip(leaves.items(), grads):
        if grad is None:
            grad = torch.zeros_like(leaf)
        gradients[name] = grad.detach().numpy().reshape(np.shape(inputs[name]))
    return float(out.detach().reshape(())), gradients


def finite_difference_check(
    expression: Expression,
    inputs: Mapping[str, ArrayLike],
    h: float = 1e-6,
    floor: float = 1e-8,
) -> float:
    """
    Worst per-coordinate relative error between analytic and central-difference
    gradients. Denominator is max(|analytic|, |numeric|, floor).
    """
    if h <= 0:
        raise ValueError("h must be positive")

    _, analytic = evaluate_with_gradients(expression, inputs)
    base = {name: np.atleast_1d(np.array(value, dtype=np.float64)) for name, value in inputs.items()}

    def value_at(point: Dict[str, np.ndarray]) -> float:
        with torch.no_grad():
            out = expression(**{name: as_tensor(arr) for name, arr in point.items()})
        return float(out.reshape(()))

    worst = 0.0
    for name, arr in base.items():
        flat = arr.reshape(-1)
        grad = analytic[name].reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + h
            upper = value_at(base)
            flat[i] = original - h
            lower = value_at(base)
            flat[i] = original
            numeric = (upper - lower) / (2.0 * h)
            denominator = max(abs(grad[i]), abs(numeric), floor)
            worst = max(worst, abs(grad[i] - numeric) / denominator)
    return worst


@dataclass
class AdamState:
    """
    Moment accumulators of the ADAM recurrence

    ``first_moment`` / ``second_moment`` are keyed like the parameters they
    track and created lazily on the first step that touches a parameter.
    """

    lr: float
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS
    step: int = 0
    first_moment: Dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: Dict[str, np.ndarray] = field(default_factory=dict)
    param_steps: Dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")


class AdamOptimizer(torch.optim.Adam):
    """
    ``torch.optim.Adam`` with float64 defaults and zero-gradient skipping

    A parameter whose gradient is identically zero is left untouched,
    moments included, so a zero gradient is the identity for any state.
    """

    def __init__(self, params: Iterable[torch.nn.Parameter], lr: float):
        if lr <= 0:
            raise ValueError("lr must be positive")
        super().__init__(params, lr=lr, betas=(ADAM_BETA1, ADAM_BETA2), eps=ADAM_EPS)
        self.steps = 0

    @torch.no_grad()
    def step(self, closure: Optional[Callable] = None):
        for group in self.param_groups:
            for param in group["params"]:
                if param.grad is not None and not torch.any(param.grad):
                    param.grad = None
        self.steps += 1
        return super().step(closure)


def adam_step(
    params: Mapping[str, ArrayLike],
    grads: Mapping[str, ArrayLike],
    state: AdamState,
) -> Tuple[Dict[str, np.ndarray], AdamState]:
    """
    One ADAM update on named arrays

    The moments in ``state`` are loaded into a ``torch.optim.Adam`` instance,
    stepped once, and read back.

    Raises:
        StructuralError: a gradient is missing or its shape differs from the
            parameter's
    """
    if set(params) != set(grads):
        raise StructuralError(f"gradient names {sorted(grads)} do not match parameters {sorted(params)}")

    tensors: Dict[str, torch.Tensor] = {}
    for name, value in params.items():
        param = torch.nn.Parameter(as_tensor(value).reshape(np.shape(value)))
        grad = as_tensor(grads[name]).reshape(np.shape(grads[name]))
        if grad.shape != param.shape:
            raise StructuralError(
                f"gradient for '{name}' has shape {tuple(grad.shape)}, expected {tuple(param.shape)}"
            )
        param.grad = grad
        tensors[name] = param

    optimizer = AdamOptimizer(tensors.values(), lr=state.lr)
    optimizer.param_groups[0]["betas"] = (state.beta1, state.beta2)
    optimizer.param_groups[0]["eps"] = state.eps
    for name, param in tensors.items():
        if name in state.first_moment:
            optimizer.state[param] = {
                "step": torch.tensor(float(state.param_steps.get(name, state.step))),
                "exp_avg": as_tensor(state.first_moment[name]).reshape(param.shape),
                "exp_avg_sq": as_tensor(state.second_moment[name]).reshape(param.shape),
            }
    optimizer.step()

    new_state = AdamState(
        lr=state.lr,
        beta1=state.beta1,
        beta2=state.beta2,
        eps=state.eps,
        step=state.step + 1,
        first_moment=dict(state.first_moment),
        second_moment=dict(state.second_moment),
        param_steps=dict(state.param_steps),
    )
    for name, param in tensors.items():
        moments = optimizer.state.get(param)
        if moments:
            new_state.first_moment[name] = moments["exp_avg"].numpy().copy()
            new_state.second_moment[name] = moments["exp_avg_sq"].numpy().copy()
            new_state.param_steps[name] = int(moments["step"])

    updated = {name: param.detach().numpy().reshape(np.shape(params[name])).copy() for name, param in tensors.items()}
    return updated, new_state
