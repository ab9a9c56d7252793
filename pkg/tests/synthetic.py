"""Synthetic citation graphs written in Planetoid text format.

A planted-partition graph with bag-of-words features drawn from per-class
topic distributions. Used as a stand-in wherever a test needs a
Cora-shaped input and not Cora itself.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

CORA_LIKE = dict(class_sizes=(818, 426, 418, 351, 298, 217, 180), n_features=1433,
                 n_edges=5278, words_per_node=18, homophily=0.81)


def make_citation_files(directory: Path, name: str = "synth", class_sizes=(30, 25, 20, 15),
                        n_features: int = 40, n_edges: int = 120, words_per_node: int = 6,
                        homophily: float = 0.8, topic_words: int | None = None,
                        seed: int = 0) -> tuple[Path, Path]:
    rng = np.random.default_rng(seed)
    n_classes = len(class_sizes)
    labels = np.repeat(np.arange(n_classes), class_sizes)
    rng.shuffle(labels)
    n = labels.size
    topic_words = topic_words or max(2, n_features // (2 * n_classes))
    topics = [rng.choice(n_features, size=topic_words, replace=False) for _ in range(n_classes)]

    features = np.zeros((n, n_features), dtype=int)
    for v in range(n):
        own = rng.random(words_per_node) < 0.6
        words = np.where(own, rng.choice(topics[labels[v]], size=words_per_node),
                         rng.integers(0, n_features, size=words_per_node))
        features[v, words] = 1

    by_class = [np.flatnonzero(labels == c) for c in range(n_classes)]
    edges = set()
    while len(edges) < n_edges:
        a = int(rng.integers(n))
        if rng.random() < homophily:
            b = int(rng.choice(by_class[labels[a]]))
        else:
            b = int(rng.integers(n))
        if a != b:
            edges.add((min(a, b), max(a, b)))

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    content = directory / f"{name}.content"
    cites = directory / f"{name}.cites"
    keys = [f"p{v:05d}" for v in range(n)]
    with content.open("w", encoding="utf-8") as f:
        for v in range(n):
            bits = "\t".join(str(b) for b in features[v])
            f.write(f"{keys[v]}\t{bits}\tclass_{labels[v]}\n")
    with cites.open("w", encoding="utf-8") as f:
        for a, b in sorted(edges):
            f.write(f"{keys[b]}\t{keys[a]}\n")
    return content, cites
