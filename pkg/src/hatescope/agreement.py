"""Multi-annotator agreement statistics and gold-label aggregation.

Implements the per-category chance-corrected kappa for ``n`` subjects
rated by ``m`` annotators into ``k`` mutually exclusive categories,
pooled into an overall score:

    p_j   = sum_i x_ij / (n m)
    k_j   = 1 - sum_i x_ij (m - x_ij) / (n m (m-1) p_j (1 - p_j))
    k_bar = sum_j p_j (1-p_j) k_j / sum_j p_j (1-p_j)

Categories with p_j in {0, 1} leave k_j undefined; they are reported
as NaN and excluded from the overall weighted mean.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np


class AgreementError(ValueError):
    """Invalid annotation matrix or annotation file."""


class DegenerateAgreementError(AgreementError):
    """Every category is degenerate; no chance-corrected score exists."""


@dataclass(frozen=True)
class AnnotationMatrix:
    """Subject-by-category vote counts; every row sums to ``m``."""

    x: np.ndarray
    m: int
    categories: tuple[str, ...] = ()

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.int64)
        object.__setattr__(self, "x", x)
        if x.ndim != 2:
            raise AgreementError("vote matrix must be 2-dimensional")
        n, k = x.shape
        if n < 1 or k < 2:
            raise AgreementError(f"need n >= 1 subjects and k >= 2 categories, got {x.shape}")
        if self.m < 2:
            raise AgreementError(f"need m >= 2 annotators, got {self.m}")
        if (x < 0).any():
            raise AgreementError("vote counts must be non-negative")
        bad = np.nonzero(x.sum(axis=1) != self.m)[0]
        if bad.size:
            raise AgreementError(
                f"rows {bad.tolist()} do not sum to m={self.m} votes"
            )
        if self.categories and len(self.categories) != k:
            raise AgreementError("categories length does not match matrix width")

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def k(self) -> int:
        return self.x.shape[1]


@dataclass(frozen=True)
class KappaReport:
    """Per-category proportions and kappas plus the pooled overall score."""

    p_bar: np.ndarray
    kappa: np.ndarray  # NaN where degenerate
    overall: float
    categories: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        names = self.categories or tuple(
            f"category{j}" for j in range(len(self.p_bar))
        )
        per_category = {}
        for j, name in enumerate(names):
            kj = float(self.kappa[j])
            per_category[name] = {
                "p_bar": float(self.p_bar[j]),
                "kappa": None if math.isnan(kj) else kj,
            }
        return {"per_category": per_category, "overall": self.overall}


def category_proportion(matrix: AnnotationMatrix, j: int) -> float:
    """Share of all votes falling on category ``j``."""
    if not 0 <= j < matrix.k:
        raise AgreementError(f"category index {j} outside [0, {matrix.k})")
    return float(matrix.x[:, j].sum()) / (matrix.n * matrix.m)


def category_kappa(matrix: AnnotationMatrix, j: int) -> float:
    """Chance-corrected agreement for category ``j``; NaN when degenerate."""
    p = category_proportion(matrix, j)
    if p == 0.0 or p == 1.0:
        return math.nan
    x = matrix.x[:, j].astype(np.float64)
    m = matrix.m
    disagreement = float((x * (m - x)).sum())
    return 1.0 - disagreement / (matrix.n * m * (m - 1) * p * (1.0 - p))


def overall_kappa(matrix: AnnotationMatrix) -> float:
    """Variance-weighted mean of the per-category kappas.

    Raises :class:`DegenerateAgreementError` when every category is
    degenerate (all votes in a single category for all subjects).
    """
    num = 0.0
    den = 0.0
    for j in range(matrix.k):
        p = category_proportion(matrix, j)
        w = p * (1.0 - p)
        if w == 0.0:
            continue
        num += w * category_kappa(matrix, j)
        den += w
    if den == 0.0:
        raise DegenerateAgreementError(
            "all categories are degenerate; overall kappa is undefined"
        )
    return num / den


def kappa_report(matrix: AnnotationMatrix) -> KappaReport:
    p_bar = np.array(
        [category_proportion(matrix, j) for j in range(matrix.k)], dtype=np.float64
    )
    kappas = np.array(
        [category_kappa(matrix, j) for j in range(matrix.k)], dtype=np.float64
    )
    return KappaReport(
        p_bar=p_bar,
        kappa=kappas,
        overall=overall_kappa(matrix),
        categories=matrix.categories,
    )


def majority_label(votes) -> object | None:
    """Strict-majority vote over one subject's labels; ``None`` when tied.

    A label must win more than half the votes; plurality without a
    strict majority counts as undecided.
    """
    votes = list(votes)
    if len(votes) < 2:
        raise AgreementError(f"need at least 2 votes, got {len(votes)}")
    counts: dict = {}
    for v in votes:
        counts[v] = counts.get(v, 0) + 1
    best = max(counts.items(), key=lambda kv: kv[1])
    if best[1] * 2 > len(votes):
        return best[0]
    return None


def aggregate_majority(votes_by_subject: dict) -> dict:
    """Gold labels from per-subject votes; undecided subjects are dropped.

    Returns only the subjects with a strict majority, which is the
    default policy when building training corpora from annotations.
    """
    gold = {}
    for subject, votes in votes_by_subject.items():
        label = majority_label(votes)
        if label is not None:
            gold[subject] = label
    return gold


def load_annotations(path, categories=None) -> AnnotationMatrix:
    """Pivot an annotation CSV (columns id, annotator, label) into a matrix.

    Every subject must carry the same number of votes; subjects with a
    deviating count are rejected with an error naming them.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise AgreementError(f"{path}: empty annotation file")
        for col in ("id", "annotator", "label"):
            if col not in reader.fieldnames:
                raise AgreementError(f"{path}: missing required column {col!r}")
        rows = list(reader)
    if not rows:
        raise AgreementError(f"{path}: no annotations")

    votes: dict[str, list[str]] = {}
    for row in rows:
        votes.setdefault(row["id"], []).append(row["label"])
    counts = {len(v) for v in votes.values()}
    if len(counts) != 1:
        # infer m as the modal vote count, ties toward the larger count
        m = max(
            counts,
            key=lambda c: (sum(1 for v in votes.values() if len(v) == c), c),
        )
        offenders = sorted(sid for sid, v in votes.items() if len(v) != m)
        raise AgreementError(
            f"{path}: subjects {offenders} do not have m={m} votes each"
        )
    m = counts.pop()
    if categories is None:
        categories = tuple(sorted({label for v in votes.values() for label in v}))
    else:
        categories = tuple(categories)
    cat_index = {c: j for j, c in enumerate(categories)}
    subject_ids = sorted(votes)
    x = np.zeros((len(subject_ids), len(categories)), dtype=np.int64)
    for i, sid in enumerate(subject_ids):
        for label in votes[sid]:
            if label not in cat_index:
                raise AgreementError(f"{path}: unknown label {label!r} on subject {sid!r}")
            x[i, cat_index[label]] += 1
    return AnnotationMatrix(x=x, m=m, categories=categories)
