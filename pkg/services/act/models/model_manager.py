"""
Checkpoint Manager Module

Persists and restores stage checkpoints of encoder/head bundles.

Layout of one checkpoint directory::

    manifest.json   stage, seed, domain, layer dims, parameter order and
                    shapes, dtype, SHA256 of the weight file
    weights.bin     flat 64-bit little-endian floats in manifest order

Manifests carry no timestamps, so re-running a stage rewrites identical
bytes.
"""

import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np
import torch

from ..core.exceptions import MissingStageError, StructuralError
from ..data.io import write_json
from .encoder import ModelBundle, ScoreHead, SageEncoder

logger = logging.getLogger(__name__)

MANIFEST_FILE = "manifest.json"
WEIGHTS_FILE = "weights.bin"
WEIGHT_DTYPE = "<f8"


class CheckpointManager:
    """
    Stage checkpoint store rooted at one run directory

    Example:
        >>> manager = CheckpointManager(Path("runs/seed_0"))
        >>> manager.save("pretrain", bundle, seed=0)
        >>> bundle = manager.load("pretrain")
    """

    def __init__(self, root: Union[str, Path]):
        self.root = Path(root)

    def path(self, stage: str) -> Path:
        return self.root / stage

    def exists(self, stage: str) -> bool:
        return (self.path(stage) / MANIFEST_FILE).exists() and (self.path(stage) / WEIGHTS_FILE).exists()

    def _calculate_checksum(self, file_path: Path) -> str:
        sha256 = hashlib.sha256()
        with open(file_path, "rb") as f:
            for chunk in iter(lambda: f.read(8192), b""):
                sha256.update(chunk)
        return sha256.hexdigest()

    def save(
        self,
        stage: str,
        bundle: ModelBundle,
        seed: int,
        extra: Optional[Dict[str, Any]] = None,
    ) -> Path:
        """
        Write ``bundle`` as the checkpoint of ``stage``

        Returns:
            Path: checkpoint directory
        """
        directory = self.path(stage)
        directory.mkdir(parents=True, exist_ok=True)

        named = list(bundle.named_parameters())
        flat = np.concatenate([p.detach().numpy().ravel() for _, p in named]) if named else np.empty(0)
        weights_path = directory / WEIGHTS_FILE
        weights_path.write_bytes(flat.astype(WEIGHT_DTYPE).tobytes())

        manifest = {
            "stage": stage,
            "seed": seed,
            "domain": bundle.domain,
            "dims": bundle.encoder.dims,
            "activations": bundle.encoder.activations,
            "has_head": bundle.head is not None,
            "parameters": [{"name": name, "shape": list(p.shape)} for name, p in named],
            "dtype": WEIGHT_DTYPE,
            "num_parameters": int(flat.size),
            "checksum": self._calculate_checksum(weights_path),
            "extra": extra or {},
        }
        write_json(manifest, directory / MANIFEST_FILE)
        logger.info(
            f"Saved {stage} checkpoint: {flat.size:,} parameters, checksum {manifest['checksum'][:16]}...",
            extra={"stage": stage, "seed": seed},
        )
        return directory

    def manifest(self, stage: str) -> Dict[str, Any]:
        if not self.exists(stage):
            raise MissingStageError(stage)
        return json.loads((self.path(stage) / MANIFEST_FILE).read_text())

    def load(self, stage: str) -> ModelBundle:
        """
        Restore the bundle saved for ``stage``

        Raises:
            MissingStageError: no checkpoint for ``stage``
            StructuralError: checksum or size mismatch
        """
        manifest = self.manifest(stage)
        weights_path = self.path(stage) / WEIGHTS_FILE

        checksum = self._calculate_checksum(weights_path)
        if checksum != manifest["checksum"]:
            raise StructuralError(f"{weights_path}: checksum mismatch")

        flat = np.frombuffer(weights_path.read_bytes(), dtype=manifest["dtype"]).astype(np.float64)
        if flat.size != manifest["num_parameters"]:
            raise StructuralError(f"{weights_path}: {flat.size} weights, manifest says {manifest['num_parameters']}")

        # Weights are overwritten below; the init stream is irrelevant.
        generator = torch.Generator().manual_seed(0)
        encoder = SageEncoder(manifest["dims"], generator, manifest["activations"])
        head = ScoreHead(encoder.output_dim, generator) if manifest["has_head"] else None
        bundle = ModelBundle(encoder, head, manifest["domain"])

        params = dict(bundle.named_parameters())
        offset = 0
        with torch.no_grad():
            for entry in manifest["parameters"]:
                param = params[entry["name"]]
                size = int(np.prod(entry["shape"]))
                param.copy_(torch.from_numpy(flat[offset:offset + size].reshape(entry["shape"])))
                offset += size

        logger.info(f"Loaded {stage} checkpoint from {self.path(stage)}", extra={"stage": stage})
        return bundle
