"""Retrieval evaluation: mAP, mAP@k, Precision@H2, Precision@R, curve AUC.

Relevance is exact label equality. Conventions that the literature leaves
open are pinned explicitly and recorded in every report:

* plain AP divides by the total number of relevant items in the database;
  AP@cutoff divides by the number of relevant items within the cutoff, so
  a full cutoff reproduces plain AP exactly;
* a query whose radius-2 Hamming ball is empty contributes 0 to
  Precision@H2 (not skipped);
* ranking ties are broken by ascending database index.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, DomainError
from .index import PackedCodes, hamming_to_db

CONVENTIONS = {
    "map_denominator": "relevant-in-database (plain) / relevant-within-cutoff (mAP@k)",
    "h2_empty_ball": "zero",
    "tie_break": "ascending-database-index",
}


@dataclass
class CurvePoint:
    """One point of the quality-vs-training-size curve."""

    x: float  # training instances seen
    y: float  # mAP at that point


@dataclass
class MetricReport:
    map: float
    map_at_k: float
    map_cutoff: int
    precision_h2: float
    precision_at_r: list[float]
    auc: float | None
    bits: int
    seed: int
    config_digest: str
    method: str = "trained"
    conventions: dict = field(default_factory=lambda: dict(CONVENTIONS))


def average_precision(result, rel: np.ndarray, cutoff: int | None = None) -> float:
    """AP of one ranking against per-database-item relevance flags."""
    if rel.shape[0] != result.ranked_ids.shape[0]:
        raise DimensionError(
            f"relevance length {rel.shape[0]} != ranking length {result.ranked_ids.shape[0]}"
        )
    ranked_rel = rel[result.ranked_ids].astype(np.float64)
    if cutoff is not None:
        ranked_rel = ranked_rel[:cutoff]
        total = ranked_rel.sum()
    else:
        total = rel.sum()
    if total == 0:
        return 0.0
    cum = np.cumsum(ranked_rel)
    ranks = np.arange(1, ranked_rel.shape[0] + 1)
    return float(((cum / ranks) * ranked_rel).sum() / total)


def _rankings(queries: PackedCodes, db: PackedCodes):
    if queries.n == 0:
        raise DomainError("empty query set")
    if queries.k != db.k:
        raise DimensionError(f"query bits {queries.k} != database bits {db.k}")
    if queries.labels is None or db.labels is None:
        raise DomainError("labels are required for relevance judgments")
    for i in range(queries.n):
        dists = hamming_to_db(queries.words[i], db)
        order = np.argsort(dists, kind="stable")
        rel = db.labels == queries.labels[i]
        yield order, dists, rel


def mean_ap(queries: PackedCodes, db: PackedCodes, cutoff: int | None = None) -> float:
    """Mean AP over all queries, optionally truncated at a rank cutoff."""
    aps = []
    for order, dists, rel in _rankings(queries, db):
        ranked_rel = rel[order].astype(np.float64)
        if cutoff is not None:
            ranked_rel_c = ranked_rel[:cutoff]
            total = ranked_rel_c.sum()
        else:
            ranked_rel_c = ranked_rel
            total = rel.sum()
        if total == 0:
            aps.append(0.0)
            continue
        cum = np.cumsum(ranked_rel_c)
        ranks = np.arange(1, ranked_rel_c.shape[0] + 1)
        aps.append(float(((cum / ranks) * ranked_rel_c).sum() / total))
    return float(np.mean(aps))


def precision_h2(queries: PackedCodes, db: PackedCodes) -> float:
    """Mean precision within the radius-2 Hamming ball of each query."""
    precisions = []
    for _, dists, rel in _rankings(queries, db):
        ball = dists <= 2
        hits = int(ball.sum())
        precisions.append(float(rel[ball].sum() / hits) if hits else 0.0)
    return float(np.mean(precisions))


def precision_at_r(queries: PackedCodes, db: PackedCodes, r_max: int) -> np.ndarray:
    """Mean precision of the top R neighbors for every R in 1..r_max."""
    if r_max > db.n:
        raise DomainError(f"r_max={r_max} exceeds database size {db.n}")
    if r_max < 1:
        raise DomainError("r_max must be at least 1")
    acc = np.zeros(r_max)
    n_queries = 0
    for order, _, rel in _rankings(queries, db):
        top = rel[order][:r_max].astype(np.float64)
        acc += np.cumsum(top) / np.arange(1, r_max + 1)
        n_queries += 1
    return acc / n_queries


def curve_auc(points) -> float:
    """Trapezoidal area under a curve, normalized by its x-range.

    Accepts CurvePoints or (x, y) pairs; x must be strictly increasing.
    """
    xs = np.array([p.x if isinstance(p, CurvePoint) else p[0] for p in points], dtype=float)
    ys = np.array([p.y if isinstance(p, CurvePoint) else p[1] for p in points], dtype=float)
    if xs.shape[0] < 2:
        raise DomainError("curve AUC needs at least 2 points")
    if np.any(np.diff(xs) <= 0):
        raise DomainError("curve x values must be strictly increasing")
    return float(np.trapezoid(ys, xs) / (xs[-1] - xs[0]))
