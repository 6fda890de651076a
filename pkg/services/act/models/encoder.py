"""
Encoder Module

GraphSAGE mean-aggregating encoder psi and the affine anomaly score head eta.

Layer k computes::

    h^k_v = act(W^k . mean({h^{k-1}_v} U {h^{k-1}_u : u in sampled N(v)}))

with ReLU on hidden layers and a linear output layer; h^0 is the raw
feature row.
"""

from dataclasses import dataclass
from typing import List, Literal, Optional, Sequence

import numpy as np
import torch
import torch.nn as nn

from ..core.exceptions import StructuralError
from ..data.graph import AttributedGraph
from ..data.sampler import SampledNeighborhood
from ..engine.diffcore import DTYPE
from ..schemas.reports import StageSummary

Activation = Literal["relu", "linear"]


def _uniform_(weight: torch.Tensor, fan_in: int, generator: torch.Generator) -> None:
    bound = 1.0 / np.sqrt(fan_in)
    with torch.no_grad():
        weight.copy_(torch.rand(weight.shape, generator=generator, dtype=DTYPE) * (2 * bound) - bound)


class SageEncoder(nn.Module):
    """
    Mean-aggregator GraphSAGE encoder

    Args:
        dims: Layer widths [d, hidden, ..., M]; len(dims) - 1 layers
        generator: Init stream; weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in))
        activations: Per-layer activation; defaults to ReLU on hidden layers
            and linear on the output layer
    """

    def __init__(
        self,
        dims: Sequence[int],
        generator: torch.Generator,
        activations: Optional[Sequence[Activation]] = None,
    ):
        super().__init__()
        if len(dims) < 2:
            raise ValueError("encoder needs at least one layer")
        self.dims = [int(d) for d in dims]
        depth = len(self.dims) - 1
        self.activations: List[Activation] = list(
            activations or (["relu"] * (depth - 1) + ["linear"])
        )
        if len(self.activations) != depth:
            raise ValueError(f"{len(self.activations)} activations for {depth} layers")

        self.layers = nn.ModuleList(
            nn.Linear(d_in, d_out, bias=False, dtype=DTYPE)
            for d_in, d_out in zip(self.dims[:-1], self.dims[1:])
        )
        for layer in self.layers:
            _uniform_(layer.weight, layer.in_features, generator)

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def input_dim(self) -> int:
        return self.dims[0]

    @property
    def output_dim(self) -> int:
        return self.dims[-1]

    def forward(self, features: torch.Tensor, neighborhood: SampledNeighborhood) -> torch.Tensor:
        """
        Encode the neighbourhood's output nodes

        Args:
            features: Raw features of ``neighborhood.input_nodes`` (rows aligned)
            neighborhood: One block per layer

        Returns:
            torch.Tensor: |output nodes| x M embeddings

        Raises:
            StructuralError: feature width differs from W^1's input width or
                the block count differs from the depth
        """
        if features.shape[1] != self.input_dim:
            raise StructuralError(
                f"features have {features.shape[1]} columns; encoder expects {self.input_dim}"
            )
        if len(neighborhood.blocks) != self.depth:
            raise StructuralError(
                f"{len(neighborhood.blocks)} sampled hops for a {self.depth}-layer encoder"
            )

        h = features
        for layer, activation, block in zip(self.layers, self.activations, neighborhood.blocks):
            h = layer(torch.sparse.mm(block.aggregator, h))
            if activation == "relu":
                h = torch.relu(h)
        return h


class ScoreHead(nn.Module):
    """Affine anomaly scorer eta(z) = w . z + b."""

    def __init__(self, dim: int, generator: torch.Generator):
        super().__init__()
        self.linear = nn.Linear(dim, 1, dtype=DTYPE)
        _uniform_(self.linear.weight, dim, generator)
        _uniform_(self.linear.bias, dim, generator)

    @classmethod
    def zeros(cls, dim: int) -> "ScoreHead":
        """Head scoring every embedding 0; refitting starts from here."""
        head = cls(dim, torch.Generator().manual_seed(0))
        with torch.no_grad():
            nn.init.zeros_(head.linear.weight)
            nn.init.zeros_(head.linear.bias)
        return head

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        if z.shape[-1] != self.linear.in_features:
            raise StructuralError(
                f"embedding width {z.shape[-1]} differs from head width {self.linear.in_features}"
            )
        return self.linear(z).squeeze(-1)


def score(head: ScoreHead, z) -> torch.Tensor:
    """Score one embedding row (or a batch of rows)."""
    z = torch.as_tensor(z, dtype=DTYPE)
    return head(z)


@dataclass
class ModelBundle:
    """
    Encoder psi plus score head eta for one domain

    ``head`` is None for a target encoder between alignment and refit.
    """

    encoder: SageEncoder
    head: Optional[ScoreHead]
    domain: str
    summary: Optional[StageSummary] = None

    def __post_init__(self):
        if self.head is not None and self.head.linear.in_features != self.encoder.output_dim:
            raise StructuralError(
                f"head input {self.head.linear.in_features} != encoder output {self.encoder.output_dim}"
            )

    def embed(self, graph: AttributedGraph, neighborhood: SampledNeighborhood) -> torch.Tensor:
        features = torch.from_numpy(np.array(graph.features[neighborhood.input_nodes]))
        return self.encoder(features, neighborhood)

    def named_parameters(self):
        yield from (("encoder." + k, v) for k, v in self.encoder.named_parameters())
        if self.head is not None:
            yield from (("head." + k, v) for k, v in self.head.named_parameters())

    def parameters(self) -> List[nn.Parameter]:
        return [p for _, p in self.named_parameters()]

    def freeze(self) -> "ModelBundle":
        for p in self.parameters():
            p.requires_grad_(False)
        return self


def build_encoder(
    input_dim: int,
    hidden: int,
    output_dim: int,
    depth: int,
    generator: torch.Generator,
) -> SageEncoder:
    """input_dim -> hidden x (depth - 1) -> output_dim."""
    dims = [input_dim] + [hidden] * (depth - 1) + [output_dim]
    return SageEncoder(dims, generator)
