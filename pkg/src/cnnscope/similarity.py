"""Pearson-correlation similarity over batch-summed feature maps.

Filters whose flattened summed maps correlate above a threshold are grouped
transitively (union-find over the thresholded correlation graph); the lowest
index of each group is the representative that survives pruning.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .tensors import as_float_array

_DEGENERATE_STD = 1e-12
_EQUAL_ATOL = 1e-12


def pcc(x, y) -> float:
    """Pearson's correlation coefficient of two equal-length vectors.

    Degenerate rule: when either vector has (near-)zero standard deviation,
    the value is 1.0 if the vectors are elementwise equal within 1e-12 and
    0.0 otherwise; dead filters therefore correlate only with dead filters.
    """
    x = as_float_array(x, 1, "x")
    y = as_float_array(y, 1, "y")
    if x.shape != y.shape:
        raise ValueError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < 2:
        raise ValueError("vectors must have at least 2 entries")
    cx = x - x.mean()
    cy = y - y.mean()
    nx = np.sqrt((cx * cx).sum())
    ny = np.sqrt((cy * cy).sum())
    if np.std(x) < _DEGENERATE_STD or np.std(y) < _DEGENERATE_STD:
        return 1.0 if np.all(np.abs(x - y) <= _EQUAL_ATOL) else 0.0
    return float(np.clip((cx * cy).sum() / (nx * ny), -1.0, 1.0))


def pcc_matrix(summed) -> np.ndarray:
    """All-pairs PCC of flattened filter maps in a [m,m,f] tensor.

    The upper triangle is computed and mirrored, so the result is bitwise
    symmetric with an exact unit diagonal.
    """
    summed = as_float_array(summed, 3, "summed activations")
    m, m2, f = summed.shape
    if f < 2:
        raise ValueError("need at least 2 filters")
    if m * m2 < 2:
        raise ValueError("feature maps must have at least 2 pixels")
    rows = summed.reshape(m * m2, f).T.copy()  # [f, m*m] flattened windows
    centered = rows - rows.mean(axis=1, keepdims=True)
    norms = np.sqrt((centered * centered).sum(axis=1))
    degenerate = rows.std(axis=1) < _DEGENERATE_STD

    safe = np.where(norms > 0, norms, 1.0)
    unit = centered / safe[:, None]
    corr = np.clip(unit @ unit.T, -1.0, 1.0)

    for i in np.flatnonzero(degenerate):
        equal = np.all(np.abs(rows - rows[i]) <= _EQUAL_ATOL, axis=1)
        corr[i, :] = np.where(equal, 1.0, 0.0)
        corr[:, i] = corr[i, :]

    upper = np.triu(corr, 1)
    return upper + upper.T + np.eye(f)


@dataclass(frozen=True)
class Group:
    """A set of mutually redundant filters; the smallest index is kept."""

    members: tuple[int, ...]
    keep: int

    def __post_init__(self):
        if len(self.members) < 2:
            raise ValueError("a group needs at least 2 members")
        if list(self.members) != sorted(self.members):
            raise ValueError("members must be sorted")
        if self.keep != min(self.members):
            raise ValueError("keep must be the smallest member")


def group_filters(matrix, threshold: float) -> list[Group]:
    """Connected components of the graph {(i,j): matrix[i,j] >= threshold}.

    Components with at least two members become groups, ordered by their
    kept (minimum) index.  Deterministic: no randomized clustering.
    """
    matrix = as_float_array(matrix, 2, "matrix")
    if not 0.0 < threshold <= 1.0:
        raise ValueError("threshold must be in (0, 1]")
    f = matrix.shape[0]
    parent = list(range(f))

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i in range(f):
        for j in range(i + 1, f):
            if matrix[i, j] >= threshold:
                ra, rb = find(i), find(j)
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)

    components: dict[int, list[int]] = {}
    for i in range(f):
        components.setdefault(find(i), []).append(i)
    groups = [
        Group(members=tuple(sorted(m)), keep=min(m))
        for m in components.values()
        if len(m) >= 2
    ]
    return sorted(groups, key=lambda g: g.keep)


@dataclass
class SimilarityReport:
    """PCC matrix + threshold + redundant-filter groups for one layer/step."""

    step: int
    layer_id: int
    matrix: np.ndarray
    threshold: float
    groups: list[Group]

    def to_jsonable(self) -> dict:
        return {
            "step": self.step,
            "layer": self.layer_id,
            "threshold": self.threshold,
            "matrix": self.matrix.tolist(),
            "groups": [{"members": list(g.members), "keep": g.keep} for g in self.groups],
        }

    @classmethod
    def from_jsonable(cls, obj: dict) -> "SimilarityReport":
        return cls(
            step=obj["step"],
            layer_id=obj["layer"],
            matrix=np.asarray(obj["matrix"], dtype=np.float64),
            threshold=obj["threshold"],
            groups=[Group(members=tuple(g["members"]), keep=g["keep"]) for g in obj["groups"]],
        )

    def to_json(self) -> str:
        return json.dumps(self.to_jsonable(), sort_keys=True, separators=(",", ":"))


def similarity_report(summed, threshold: float, step: int, layer_id: int) -> SimilarityReport:
    """Compute the full report for one layer's batch-summed activations."""
    matrix = pcc_matrix(summed)
    return SimilarityReport(
        step=step,
        layer_id=layer_id,
        matrix=matrix,
        threshold=threshold,
        groups=group_filters(matrix, threshold),
    )


def save_heatmap_csv(matrix: np.ndarray, path: str) -> None:
    """Dump an f x f PCC matrix as plain CSV rows for offline inspection."""
    with open(path, "w", newline="") as f:
        for row in np.asarray(matrix, dtype=np.float64):
            f.write(",".join("%.17g" % v for v in row) + "\n")
