"""Evaluation metrics and clustering of causes by symptom grouping."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.cluster import hierarchy
from scipy.spatial.distance import squareform


def _check_simplex(v, name: str, tol: float = 1e-8) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size < 2:
        raise ValueError(f"{name} must be a vector with at least two causes")
    if np.any(v < -tol) or abs(v.sum() - 1.0) > tol:
        raise ValueError(f"{name} is not a probability vector (sum={v.sum():.6g})")
    return v


def csmf_accuracy(pi_hat, pi_true) -> float:
    """1 - sum_c |pi_hat_c - pi_c| / (2 (1 - min_c pi_c))."""
    pi_hat = _check_simplex(pi_hat, "pi_hat")
    pi_true = _check_simplex(pi_true, "pi_true")
    if pi_hat.shape != pi_true.shape:
        raise ValueError(f"cause sets differ: {pi_hat.size} vs {pi_true.size} causes")
    return float(1.0 - np.abs(pi_hat - pi_true).sum() / (2.0 * (1.0 - pi_true.min())))


def top_cause_accuracy(assignments, truth) -> float:
    assignments, truth = np.asarray(assignments), np.asarray(truth)
    if assignments.shape != truth.shape:
        raise ValueError("assignments and truth must have the same length")
    if assignments.size == 0:
        raise ValueError("no deaths to evaluate")
    return float(np.mean(assignments == truth))


def _pairs(counts: np.ndarray) -> float:
    counts = np.asarray(counts, dtype=float)
    return float(np.sum(counts * (counts - 1) / 2.0))


def adjusted_rand_index(a, b) -> float:
    """Hubert-Arabie adjusted Rand index of two labelings of the same items."""
    a, b = np.asarray(a).ravel(), np.asarray(b).ravel()
    if a.shape != b.shape:
        raise ValueError(f"partitions have different lengths: {a.size} vs {b.size}")
    _, ia = np.unique(a, return_inverse=True)
    _, ib = np.unique(b, return_inverse=True)
    table = np.zeros((ia.max(initial=-1) + 1, ib.max(initial=-1) + 1))
    np.add.at(table, (ia, ib), 1)
    index = _pairs(table)
    sum_a, sum_b = _pairs(table.sum(axis=1)), _pairs(table.sum(axis=0))
    total = _pairs([a.size])
    expected = sum_a * sum_b / total if total else 0.0
    top = (sum_a + sum_b) / 2.0
    if top == expected:
        # both partitions trivial in the same way (all together or all apart)
        return 1.0
    return float((index - expected) / (top - expected))


@dataclass
class Dendrogram:
    names: list[str]
    dissimilarity: np.ndarray  # (C, C)
    linkage: np.ndarray  # scipy linkage matrix
    method: str

    @property
    def merges(self) -> list[dict]:
        """Merge list with scipy numbering: leaves 0..C-1, merge i creates C + i."""
        return [
            {"id": len(self.names) + i, "left": int(a), "right": int(b), "height": float(hgt), "size": int(n)}
            for i, (a, b, hgt, n) in enumerate(self.linkage)
        ]

    def to_json(self) -> dict:
        return {"method": self.method, "leaves": self.names, "merges": self.merges,
                "dissimilarity": self.dissimilarity.tolist()}

    def newick(self) -> str:
        if len(self.names) == 1:
            return f"{_newick_name(self.names[0])};"
        root = hierarchy.to_tree(self.linkage)

        def walk(node, parent_height):
            length = parent_height - node.dist
            if node.is_leaf():
                return f"{_newick_name(self.names[node.id])}:{length:.6g}"
            return f"({walk(node.left, node.dist)},{walk(node.right, node.dist)}):{length:.6g}"

        return f"({walk(root.left, root.dist)},{walk(root.right, root.dist)});"


def _newick_name(name: str) -> str:
    if any(ch in name for ch in " ():;,[]'"):
        return "'" + name.replace("'", "''") + "'"
    return name


def cause_dissimilarity(s_mode) -> np.ndarray:
    s_mode = np.asarray(s_mode)
    C = s_mode.shape[0]
    d = np.zeros((C, C))
    for c in range(C):
        for c2 in range(c + 1, C):
            d[c, c2] = d[c2, c] = 1.0 - adjusted_rand_index(s_mode[c], s_mode[c2])
    return np.clip(d, 0.0, None)


def cause_dendrogram(s_mode, names=None, method: str = "average") -> Dendrogram:
    """Agglomerative clustering of causes on 1 - ARI between their symptom
    groupings.  ``method`` is any scipy linkage: average, single, complete."""
    s_mode = np.asarray(s_mode)
    C = s_mode.shape[0]
    names = list(names) if names is not None else [f"cause_{c + 1}" for c in range(C)]
    if len(names) != C:
        raise ValueError("need one name per cause")
    d = cause_dissimilarity(s_mode)
    Z = hierarchy.linkage(squareform(d, checks=False), method=method) if C > 1 else np.zeros((0, 4))
    return Dendrogram(names=names, dissimilarity=d, linkage=Z, method=method)
