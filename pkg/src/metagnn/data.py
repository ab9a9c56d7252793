"""Loading Planetoid-style citation datasets from raw ``.content``/``.cites`` files."""

from __future__ import annotations

import logging
from os import PathLike
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ParseError
from .graph import GraphDataset

log = logging.getLogger(__name__)


def encode_labels(names: Sequence[str]) -> tuple[np.ndarray, dict[str, int]]:
    """Map label strings to ids in ascending lexicographic order of the names."""
    mapping = {name: i for i, name in enumerate(sorted(set(names)))}
    return np.array([mapping[n] for n in names], dtype=np.int64), mapping


def row_normalize_features(x) -> np.ndarray:
    """Divide every nonzero row by its sum; zero rows stay zero."""
    x = np.asarray(x, dtype=np.float64)
    sums = x.sum(axis=1, keepdims=True)
    safe = np.where(sums == 0, 1.0, sums)
    return x / safe


def _read_lines(path) -> list[str]:
    try:
        return Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc.strerror or exc}") from exc


def load_planetoid(content_path: str | PathLike, cites_path: str | PathLike,
                   normalize: bool = True, name: str = "") -> GraphDataset:
    """Parse a content file (key, feature tokens, label) and a cites file (key pairs).

    Node ids follow content-file order. Citations naming unknown keys are
    dropped and counted in a warning; self-citations and duplicates vanish
    when the adjacency is built.
    """
    keys: dict[str, int] = {}
    rows: list[list[float]] = []
    label_names: list[str] = []
    width = None
    for lineno, line in enumerate(_read_lines(content_path), start=1):
        tokens = line.split()
        if not tokens:
            continue
        if len(tokens) < 3:
            raise ParseError(f"{content_path}:{lineno}: expected key, features and label")
        key, feats, label = tokens[0], tokens[1:-1], tokens[-1]
        if width is None:
            width = len(feats)
        elif len(feats) != width:
            raise ParseError(
                f"{content_path}:{lineno}: {len(feats)} features, expected {width}")
        if key in keys:
            raise ParseError(f"{content_path}:{lineno}: duplicate node key {key!r}")
        try:
            rows.append([float(t) for t in feats])
        except ValueError as exc:
            raise ParseError(f"{content_path}:{lineno}: {exc}") from exc
        keys[key] = len(keys)
        label_names.append(label)
    if not keys:
        raise ParseError(f"{content_path}: no nodes")

    edges = []
    dropped = 0
    for lineno, line in enumerate(_read_lines(cites_path), start=1):
        tokens = line.split()
        if not tokens:
            continue
        if len(tokens) != 2:
            raise ParseError(f"{cites_path}:{lineno}: expected two node keys")
        a, b = (keys.get(t) for t in tokens)
        if a is None or b is None:
            dropped += 1
            continue
        edges.append((a, b))
    if dropped:
        log.warning("%s: dropped %d citations referencing unknown nodes", cites_path, dropped)

    features = np.array(rows, dtype=np.float64)
    if normalize:
        features = row_normalize_features(features)
    labels, mapping = encode_labels(label_names)
    names = tuple(sorted(mapping, key=mapping.get))
    edge_array = np.array(edges, dtype=np.int64).reshape(-1, 2)
    return GraphDataset(features, labels, edge_array, names, name=name)
