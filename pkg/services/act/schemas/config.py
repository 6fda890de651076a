"""
Run configuration schemas.

Every knob of a run is a field of one of these models. ``RunConfig`` is the
JSON document written by ``init`` and read by every other subcommand.
"""

import json
from pathlib import Path
from typing import List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from ..core.config import get_settings
from ..core.exceptions import ConfigError


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class SyntheticPairConfig(_Strict):
    """
    Synthetic cross-domain benchmark configuration

    Both domains share community centroids in a latent feature space; the
    target is passed through a rotation, per-feature affine rescale and a
    random projection to its own dimensionality.
    """

    n_source: int = Field(800, ge=10)
    n_target: int = Field(800, ge=10)
    dim_source: int = Field(32, ge=2)
    dim_target: int = Field(24, ge=2)
    communities: int = Field(4, ge=1)
    p_intra: float = Field(0.03, ge=0.0, le=1.0)
    p_inter: float = Field(0.002, ge=0.0, le=1.0)
    anomaly_ratio_source: float = Field(0.05, gt=0.0, le=0.2)
    anomaly_ratio_target: float = Field(0.05, gt=0.0, le=0.2)
    structural_fraction: float = Field(0.7, ge=0.0, le=1.0)
    structural_extra_edges: int = Field(15, ge=0)
    attribute_shift: float = Field(1.5, ge=0.0)  # in feature std units
    centroid_scale: float = Field(5.0, gt=0.0)  # std of the community centroids
    feature_noise: float = Field(1.25, gt=0.0)
    domain_shift: float = Field(0.5, ge=0.0)  # rotation / translation strength
    seed: int = Field(0, ge=0)


class SamplerConfig(_Strict):
    """Minibatch construction: centres, Q negatives per centre, per-hop fanouts."""

    batch_size: int = Field(128, ge=1)
    negatives: int = Field(5, ge=1)  # Q
    # Outermost hops; a list shorter than the encoder depth by one leaves the
    # first hop exact. None means "all neighbours".
    fanouts: List[Optional[int]] = Field(default_factory=lambda: [25, 10], min_length=1)
    negative_distribution: Literal["uniform", "degree"] = "uniform"
    seed: Optional[int] = Field(None, ge=0)

    @field_validator("fanouts")
    @classmethod
    def _positive_fanouts(cls, value: List[Optional[int]]) -> List[Optional[int]]:
        for fanout in value:
            if fanout is not None and fanout < 1:
                raise ValueError("fanouts must be >= 1 or null")
        return value


class SinkhornConfig(_Strict):
    """Debiased entropic OT with squared-Euclidean ground cost."""

    blur: float = Field(0.05, gt=0.0)  # entropic epsilon
    max_iterations: int = Field(200, ge=1)
    tolerance: float = Field(1e-6, gt=0.0)
    scaling: float = Field(0.5, gt=0.0, lt=1.0)
    p: Literal[2] = 2


class DeviationConfig(_Strict):
    """Z-score deviation loss: normals pulled to mu, anomalies pushed past margin."""

    mu: float = 0.0
    sigma: float = Field(1.0, gt=0.0)
    margin: float = Field(5.0, gt=0.0)
    reference: Literal["fixed", "sampled"] = "fixed"
    reference_size: int = Field(5000, ge=2)


class ForestConfig(_Strict):
    n_trees: int = Field(100, ge=1)
    subsample: int = Field(256, ge=2)
    seed: Optional[int] = Field(None, ge=0)
    n_jobs: int = 1


class TrainConfig(_Strict):
    """
    Training configuration for the three ACT stages

    Defaults: 50 source epochs at 1e-3, 50
    alignment epochs at 1e-4, refit at 1e-4, alpha = 2.5, q = 25.
    """

    source_epochs: int = Field(50, ge=1)
    source_lr: float = Field(1e-3, gt=0.0)
    align_epochs: int = Field(50, ge=1)
    align_lr: float = Field(1e-4, gt=0.0)
    refit_epochs: int = Field(50, ge=0)
    refit_lr: float = Field(1e-4, gt=0.0)

    sampler: SamplerConfig = Field(default_factory=SamplerConfig)
    sinkhorn: SinkhornConfig = Field(default_factory=SinkhornConfig)
    deviation: DeviationConfig = Field(default_factory=DeviationConfig)
    forest: ForestConfig = Field(default_factory=ForestConfig)

    alpha: float = Field(2.5, gt=0.0)
    q: float = Field(25.0, gt=0.0, lt=100.0)
    one_class_source_batches: bool = True
    # Deviation stages draw half of every batch from the anomalies, with replacement.
    balanced_deviation_batches: bool = True
    labelled_fraction: float = Field(1.0, ge=0.005, le=1.0)
    detector: Literal["iforest", "eta_s"] = "iforest"
    align_on: Literal["centres", "batch"] = "centres"

    depth: int = Field(3, ge=1)
    source_hidden: int = Field(256, ge=1)
    target_hidden: int = Field(64, ge=1)
    embedding_dim: int = Field(64, ge=1)

    monitor_size: int = Field(256, ge=2)
    snapshot_epochs: List[int] = Field(default_factory=list)
    seed: int = Field(0, ge=0)

    @model_validator(mode="after")
    def _fanouts_match_depth(self) -> "TrainConfig":
        if len(self.sampler.fanouts) not in (self.depth - 1, self.depth):
            raise ValueError(
                f"sampler.fanouts has {len(self.sampler.fanouts)} entries; "
                f"expected {self.depth - 1} or {self.depth} for depth {self.depth}"
            )
        return self

    @property
    def batch_size(self) -> int:
        return self.sampler.batch_size

    @property
    def sampler_seed(self) -> int:
        return self.seed if self.sampler.seed is None else self.sampler.seed

    @property
    def forest_seed(self) -> int:
        return self.seed if self.forest.seed is None else self.forest.seed

    def hop_fanouts(self) -> List[Optional[int]]:
        """Fanout per hop, counted outward from the output layer."""
        fanouts = list(self.sampler.fanouts)
        if len(fanouts) == self.depth - 1:
            fanouts = [None] + fanouts
        return fanouts


class DataConfig(_Strict):
    """Either two dataset directories or a synthetic generator section."""

    source_dir: Optional[Path] = None
    target_dir: Optional[Path] = None
    generator: Optional[SyntheticPairConfig] = Field(default_factory=SyntheticPairConfig)
    max_degree: int = Field(128, ge=1)

    @model_validator(mode="after")
    def _one_data_source(self) -> "DataConfig":
        has_dirs = self.source_dir is not None or self.target_dir is not None
        if has_dirs:
            if self.source_dir is None or self.target_dir is None:
                raise ValueError("source_dir and target_dir must be given together")
            for path in (self.source_dir, self.target_dir):
                if not Path(path).is_dir():
                    raise ValueError(f"dataset directory does not exist: {path}")
        elif self.generator is None:
            raise ValueError("either dataset directories or a generator section is required")
        return self

    @property
    def uses_generator(self) -> bool:
        return self.source_dir is None


class RunConfig(_Strict):
    data: DataConfig = Field(default_factory=DataConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    output_dir: Path = Field(default_factory=lambda: Path(get_settings().OUTPUT_DIR))
    seeds: List[int] = Field(default_factory=lambda: [0, 1, 2, 3, 4], min_length=1)

    @field_validator("seeds")
    @classmethod
    def _non_negative(cls, value: List[int]) -> List[int]:
        if any(seed < 0 for seed in value):
            raise ValueError("seeds must be non-negative")
        return value

    def for_seed(self, seed: int) -> TrainConfig:
        return self.train.model_copy(update={"seed": seed})


def load_run_config(path: Union[str, Path]) -> RunConfig:
    """
    Load and validate a JSON run configuration

    Raises:
        ConfigError: unreadable file, malformed JSON or failed validation
    """
    path = Path(path)
    try:
        payload = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e.msg} at line {e.lineno})")
    return parse_run_config(payload, source=str(path))


def parse_run_config(payload: dict, source: str = "<config>") -> RunConfig:
    try:
        return RunConfig.model_validate(payload)
    except ValidationError as e:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors()
        )
        raise ConfigError(f"{source}: {problems}")


def default_config_json() -> str:
    """Full-default template emitted by ``init``."""
    return RunConfig().model_dump_json(indent=2) + "\n"
