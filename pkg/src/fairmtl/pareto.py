"""Staircase non-dominated sort over (performance, fairness) pairs.

The frontier builder walks candidates in performance order and appends a
point whenever its fairness distance |1 - y| improves on the last front
point. A brute-force pairwise dominance filter ships alongside it as an
independent check; the two can legitimately differ (the staircase keeps
at most one point per performance level), and callers that care report
both. All functions here are pure.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractError

SELECT_POLICIES = ("best_fairness", "best_performance", "knee")


@dataclass(frozen=True)
class ParetoPoint:
    x: float          # performance score (accuracy, AUROC, ...)
    y: float          # fairness score (disparate-impact ratio)
    model_id: int | str

    def __post_init__(self):
        if not (np.isfinite(self.x) and np.isfinite(self.y)):
            raise ContractError(f"non-finite point ({self.x}, {self.y})")

    @property
    def fairness_distance(self) -> float:
        return abs(1.0 - self.y)


@dataclass
class ParetoFront:
    points: list[ParetoPoint]   # in frontier order
    max_x: bool
    max_y: bool


def _sort_key(p: ParetoPoint, max_x: bool):
    primary = -p.x if max_x else p.x
    # Ties in x: better fairness first, then model id for a total order.
    return (primary, p.fairness_distance, str(p.model_id))


def pareto_frontier(points: list[ParetoPoint], max_x: bool = True, max_y: bool = True) -> ParetoFront:
    """Build the staircase frontier.

    Candidates are sorted by x (descending when max_x), the first seeds
    the front, and each subsequent point is appended iff its |1 - y|
    improves on the last front point (max_y=True) or worsens it
    (max_y=False, kept as specified though no shipped flow uses it).
    """
    if not points:
        raise ContractError("cannot build a frontier from zero points")
    ordered = sorted(points, key=lambda p: _sort_key(p, max_x))
    front = [ordered[0]]
    for p in ordered:
        last = front[-1].fairness_distance
        if max_y:
            if p.fairness_distance < last:
                front.append(p)
        else:
            if p.fairness_distance > last:
                front.append(p)
    return ParetoFront(points=front, max_x=max_x, max_y=max_y)


def _dominates(a: ParetoPoint, b: ParetoPoint, max_x: bool) -> bool:
    x_ge = a.x >= b.x if max_x else a.x <= b.x
    f_le = a.fairness_distance <= b.fairness_distance
    if not (x_ge and f_le):
        return False
    x_gt = a.x > b.x if max_x else a.x < b.x
    return x_gt or a.fairness_distance < b.fairness_distance


def dominance_oracle(points: list[ParetoPoint], max_x: bool = True) -> list[ParetoPoint]:
    """Brute-force O(n^2) non-dominated set under (x, |1 - y|).

    Exists to verify the staircase; keeps the input order.
    """
    if not points:
        raise ContractError("cannot filter zero points")
    return [
        p for i, p in enumerate(points)
        if not any(_dominates(q, p, max_x) for j, q in enumerate(points) if j != i)
    ]


def select_model(front: ParetoFront, policy: str = "best_fairness") -> int | str:
    """Pick one model id off the front.

    best_fairness minimizes |1 - y|, best_performance maximizes x, and
    knee maximizes the gap between min-max normalized performance and
    fairness distance.
    """
    if policy not in SELECT_POLICIES:
        raise ContractError(f"unknown selection policy {policy!r}")
    pts = front.points
    if not pts:
        raise ContractError("empty front")
    if policy == "best_fairness":
        return min(pts, key=lambda p: p.fairness_distance).model_id
    if policy == "best_performance":
        return max(pts, key=lambda p: p.x).model_id
    xs = np.array([p.x for p in pts])
    fd = np.array([p.fairness_distance for p in pts])

    def norm(v):
        span = v.max() - v.min()
        return np.zeros_like(v) if span == 0 else (v - v.min()) / span

    gap = norm(xs) - norm(fd)
    return pts[int(np.argmax(gap))].model_id


def front_to_rows(front: ParetoFront) -> list[dict]:
    return [
        {
            "model_id": p.model_id,
            "x": p.x,
            "y": p.y,
            "fairness_distance": p.fairness_distance,
        }
        for p in front.points
    ]


def save_front_csv(front: ParetoFront, path: str | Path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model_id", "x", "y", "fairness_distance"])
        for row in front_to_rows(front):
            writer.writerow([row["model_id"], repr(row["x"]), repr(row["y"]),
                             repr(row["fairness_distance"])])
