"""Biometric evaluation of bona-fide scores.

Conventions throughout: scores are oriented so that higher means bona
fide, the classification rule is score >= threshold => bona fide, labels
are 0 (attack) and 1 (bona fide). APCER is the fraction of attacks
accepted, BPCER the fraction of bona fide presentations rejected.
Candidate thresholds for operating-point searches are the midpoints of
adjacent distinct scores plus -inf and +inf, which makes every sweep
finite and exact.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "SingleClassError",
    "ScoreSet",
    "RocCurve",
    "roc",
    "auc",
    "apcer_bpcer",
    "hter",
    "eer_threshold",
    "bpcer_at_apcer",
    "evaluate",
    "candidate_thresholds",
]


class SingleClassError(ValueError):
    """Threshold metrics need at least one sample of each class."""


@dataclass
class ScoreSet:
    """Parallel bona-fide scores and binary labels.

    input
    -----
      scores:      array of floats, higher = bona fide
      labels:      array of {0, 1}, same length
      sample_ids:  optional parallel identifiers (for CSV export)
      dataset_ids: optional parallel dataset tags
    """

    scores: np.ndarray
    labels: np.ndarray
    sample_ids: list[str] | None = None
    dataset_ids: list[str] | None = None

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.scores.ndim != 1 or self.scores.shape != self.labels.shape:
            raise ValueError(
                f"scores {self.scores.shape} and labels {self.labels.shape} must be parallel 1-D")
        if len(self.scores) and not np.isin(self.labels, (0, 1)).all():
            raise ValueError("labels must be 0 (attack) or 1 (bona fide)")
        for name in ("sample_ids", "dataset_ids"):
            ids = getattr(self, name)
            if ids is not None and len(ids) != len(self.scores):
                raise ValueError(f"{name} length does not match scores")

    def __len__(self) -> int:
        return len(self.scores)

    @property
    def bona(self) -> np.ndarray:
        return self.scores[self.labels == 1]

    @property
    def attack(self) -> np.ndarray:
        return self.scores[self.labels == 0]

    def require_both_classes(self) -> None:
        if len(self.bona) == 0 or len(self.attack) == 0:
            raise SingleClassError("need at least one bona fide and one attack sample")

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["sample_id", "score", "label", "dataset_id"])
            for i in range(len(self)):
                sid = self.sample_ids[i] if self.sample_ids else str(i)
                did = self.dataset_ids[i] if self.dataset_ids else ""
                w.writerow([sid, repr(float(self.scores[i])), int(self.labels[i]), did])
        return path

    @classmethod
    def from_csv(cls, path: str | Path) -> "ScoreSet":
        scores, labels, sids, dids = [], [], [], []
        with Path(path).open(newline="") as fh:
            for row in csv.DictReader(fh):
                sids.append(row["sample_id"])
                scores.append(float(row["score"]))
                labels.append(int(row["label"]))
                dids.append(row.get("dataset_id", ""))
        return cls(np.array(scores), np.array(labels), sids, dids)


@dataclass
class RocCurve:
    """Operating points (APCER, 1 - BPCER) swept from +inf down.

    Both coordinates are nondecreasing along the sweep; the first point is
    (0, 0) and the last is (1, 1).
    """

    points: list[tuple[float, float]] = field(default_factory=list)

    def __post_init__(self):
        arr = np.asarray(self.points, dtype=np.float64)
        if len(arr) and (np.any(np.diff(arr[:, 0]) < 0) or np.any(np.diff(arr[:, 1]) < 0)):
            raise ValueError("ROC coordinates must be nondecreasing along the sweep")

    def trapezoid_area(self) -> float:
        arr = np.asarray(self.points, dtype=np.float64)
        trapezoid = getattr(np, "trapezoid", None) or np.trapz  # numpy < 2
        return float(trapezoid(arr[:, 1], arr[:, 0]))

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["apcer", "one_minus_bpcer"])
            for x, y in self.points:
                w.writerow([repr(x), repr(y)])
        return path


def _rates(scoreset: ScoreSet, threshold: float) -> tuple[float, float]:
    apcer = float(np.mean(scoreset.attack >= threshold))
    bpcer = float(np.mean(scoreset.bona < threshold))
    return apcer, bpcer


def roc(scoreset: ScoreSet) -> RocCurve:
    """
    curve = roc(scoreset)

    One point per distinct score value used as a threshold, descending,
    preceded by the (0, 0) point from the +inf threshold. The final point
    is (1, 1) since every score passes the minimum threshold.
    """
    scoreset.require_both_classes()
    points = [(0.0, 0.0)]
    for thr in np.unique(scoreset.scores)[::-1]:
        apcer, bpcer = _rates(scoreset, float(thr))
        points.append((apcer, 1.0 - bpcer))
    return RocCurve(points)


def auc(scoreset: ScoreSet) -> float:
    """
    value = auc(scoreset)

    Exact pair statistic P(bona > attack) + 0.5 * P(bona == attack),
    computed from average ranks; ties get half credit.
    """
    scoreset.require_both_classes()
    x = scoreset.scores
    order = np.argsort(x, kind="mergesort")
    sx = x[order]
    boundaries = np.flatnonzero(sx[1:] != sx[:-1]) + 1
    group_edges = np.concatenate([[0], boundaries, [len(sx)]])
    ranks_sorted = np.empty(len(sx), dtype=np.float64)
    for a, b in zip(group_edges[:-1], group_edges[1:]):
        ranks_sorted[a:b] = 0.5 * (a + 1 + b)  # mean of ranks a+1 .. b
    ranks = np.empty(len(sx), dtype=np.float64)
    ranks[order] = ranks_sorted
    nb = int((scoreset.labels == 1).sum())
    na = len(scoreset) - nb
    u = ranks[scoreset.labels == 1].sum() - nb * (nb + 1) / 2.0
    return float(u / (nb * na))


def apcer_bpcer(scoreset: ScoreSet, threshold: float) -> tuple[float, float]:
    """
    apcer, bpcer = apcer_bpcer(scoreset, threshold)

    APCER: attacks with score >= threshold (accepted as bona fide).
    BPCER: bona fide with score < threshold (rejected).
    """
    scoreset.require_both_classes()
    return _rates(scoreset, threshold)


def hter(scoreset: ScoreSet, threshold: float) -> float:
    """Half total error rate, (APCER + BPCER) / 2 at the given threshold."""
    apcer, bpcer = apcer_bpcer(scoreset, threshold)
    return (apcer + bpcer) / 2.0


def candidate_thresholds(scores: np.ndarray) -> np.ndarray:
    """Midpoints of adjacent distinct scores, bracketed by -inf and +inf."""
    uniq = np.unique(np.asarray(scores, dtype=np.float64))
    mids = (uniq[:-1] + uniq[1:]) / 2.0
    return np.concatenate([[-np.inf], mids, [np.inf]])


def eer_threshold(scoreset: ScoreSet) -> float:
    """
    thr = eer_threshold(scoreset)

    The candidate threshold minimizing |APCER - BPCER|; ties break toward
    the smaller APCER, then the smaller threshold.
    """
    scoreset.require_both_classes()
    best = None
    for thr in candidate_thresholds(scoreset.scores):
        apcer, bpcer = _rates(scoreset, float(thr))
        key = (abs(apcer - bpcer), apcer, thr)
        if best is None or key < best[0]:
            best = (key, float(thr))
    return best[1]


def bpcer_at_apcer(scoreset: ScoreSet, target: float = 0.01) -> float:
    """
    value = bpcer_at_apcer(scoreset, target)

    Minimum BPCER over candidate thresholds whose APCER <= target. The
    +inf candidate always qualifies (APCER 0, BPCER 1), so the result is
    1.0 when no useful threshold meets the target.
    """
    scoreset.require_both_classes()
    best = 1.0
    for thr in candidate_thresholds(scoreset.scores):
        apcer, bpcer = _rates(scoreset, float(thr))
        if apcer <= target and bpcer < best:
            best = bpcer
    return best


def evaluate(scoreset: ScoreSet, apcer_target: float = 0.01) -> dict:
    """All headline metrics at the set's own equal-error threshold."""
    thr = eer_threshold(scoreset)
    apcer, bpcer = apcer_bpcer(scoreset, thr)
    return {
        "count": len(scoreset),
        "bona_count": int((scoreset.labels == 1).sum()),
        "attack_count": int((scoreset.labels == 0).sum()),
        "auc": auc(scoreset),
        "eer_threshold": thr,
        "apcer": apcer,
        "bpcer": bpcer,
        "hter": (apcer + bpcer) / 2.0,
        "bpcer_at_apcer": {"target": apcer_target, "value": bpcer_at_apcer(scoreset, apcer_target)},
    }
