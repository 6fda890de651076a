"""
Dataset file ingestion and export.

Directory layout of one domain::

    edges.txt      "u v" per line, zero-based ids, whitespace separated
    features.csv   row i = features of node i, no header
    labels.txt     one 0/1 per line (optional)
"""

import json
import logging
import re
from pathlib import Path
from typing import Optional, Union

import numpy as np
import pandas as pd

from ..core.exceptions import ParseError, StructuralError
from .graph import AttributedGraph, Domain

logger = logging.getLogger(__name__)

EDGE_FILE = "edges.txt"
FEATURE_FILE = "features.csv"
LABEL_FILE = "labels.txt"

PathLike = Union[str, Path]

_PANDAS_LINE = re.compile(r"line (\d+)")


def _read_edges(path: Path) -> np.ndarray:
    edges = []
    with open(path, "r") as f:
        for lineno, line in enumerate(f, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 2:
                raise ParseError(path, lineno, f"expected 'u v', got {line.strip()!r}")
            try:
                edges.append((int(parts[0]), int(parts[1])))
            except ValueError:
                raise ParseError(path, lineno, f"node ids must be integers, got {line.strip()!r}")
    return np.asarray(edges, dtype=np.int64).reshape(-1, 2)


def _first_non_numeric_line(path: Path) -> int:
    """One-based line of the first row holding a value that is not a float, 0 if none."""
    raw = pd.read_csv(path, header=None, dtype=str, skip_blank_lines=False, keep_default_na=False).fillna("")
    coerced = raw.apply(pd.to_numeric, errors="coerce")
    bad = ((raw.apply(lambda column: column.str.strip()) != "") & coerced.isna()).any(axis=1).to_numpy()
    return int(np.flatnonzero(bad)[0]) + 1 if bad.any() else 0


def _read_features(path: Path) -> np.ndarray:
    # Blank lines are kept as rows so row i is physical line i + 1.
    try:
        frame = pd.read_csv(
            path,
            header=None,
            dtype=np.float64,
            float_precision="round_trip",
            skip_blank_lines=False,
        )
    except pd.errors.EmptyDataError:
        raise ParseError(path, 1, "feature file is empty")
    except pd.errors.ParserError as e:
        match = _PANDAS_LINE.search(str(e))
        raise ParseError(path, int(match.group(1)) if match else 0, str(e).strip())
    except ValueError as e:
        raise ParseError(path, _first_non_numeric_line(path), f"non-numeric feature value: {e}")

    bad = frame.isna().any(axis=1).to_numpy()
    if bad.any():
        row = int(np.flatnonzero(bad)[0])
        raise ParseError(path, row + 1, "blank line or missing feature value")
    return frame.to_numpy(dtype=np.float64)


def _read_labels(path: Path) -> np.ndarray:
    labels = []
    with open(path, "r") as f:
        for lineno, line in enumerate(f, start=1):
            token = line.strip()
            if not token:
                continue
            if token not in ("0", "1"):
                raise ParseError(path, lineno, f"label must be 0 or 1, got {token!r}")
            labels.append(int(token))
    return np.asarray(labels, dtype=np.int64)


def load_graph(
    edge_file: PathLike,
    feature_file: PathLike,
    label_file: Optional[PathLike] = None,
    domain: Domain = "source",
) -> AttributedGraph:
    """
    Load an attributed graph from the plain-text dataset files

    The node count is the feature row count. Target-domain labels are stored
    as held-out evaluation labels.

    Raises:
        ParseError: malformed line (path and line number in the message)
        StructuralError: node id out of range or label count mismatch
    """
    edge_file, feature_file = Path(edge_file), Path(feature_file)
    features = _read_features(feature_file)
    edges = _read_edges(edge_file)
    n = features.shape[0]

    labels = None
    if label_file is not None:
        labels = _read_labels(Path(label_file))
        if labels.size != n:
            raise StructuralError(f"{label_file}: {labels.size} labels for {n} feature rows")

    loops = int((edges[:, 0] == edges[:, 1]).sum()) if edges.size else 0
    if loops:
        logger.warning(f"{edge_file}: dropping {loops} self loops")

    graph = AttributedGraph.from_edges(
        n, edges, features, labels, domain=domain, heldout=(domain == "target")
    )
    logger.info(
        f"Loaded {domain} graph: {graph.num_nodes} nodes, {graph.num_edges} edges, "
        f"{graph.num_features} features"
    )
    return graph


def load_dataset_dir(directory: PathLike, domain: Domain) -> AttributedGraph:
    directory = Path(directory)
    label_file = directory / LABEL_FILE
    return load_graph(
        directory / EDGE_FILE,
        directory / FEATURE_FILE,
        label_file if label_file.exists() else None,
        domain=domain,
    )


def save_graph(graph: AttributedGraph, directory: PathLike) -> None:
    """Write a graph in the dataset layout; output is a pure function of the graph."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    edges = graph.edge_array()
    with open(directory / EDGE_FILE, "w") as f:
        f.writelines(f"{u} {v}\n" for u, v in edges)

    pd.DataFrame(graph.features).to_csv(
        directory / FEATURE_FILE, header=False, index=False, float_format="%.17g"
    )

    labels = graph.heldout_labels if graph.heldout_labels is not None else graph.labels
    if labels is not None:
        with open(directory / LABEL_FILE, "w") as f:
            f.writelines(f"{int(y)}\n" for y in labels)


def write_json(payload, path: PathLike) -> None:
    """Deterministic JSON: sorted keys, fixed indent, trailing newline."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
