"""Rationale extraction and explanation-quality scoring.

Comprehensiveness is the drop in the predicted-class probability when
the rationale tokens are deleted; sufficiency is the gap between the
full-document probability and the rationale-only probability. Both are
probability differences, so they live in [-1, 1]. A predicted
rationale matches a gold one when it covers at least half of it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .corpus import Document, LabeledCorpus
from .explain import LrpConfig, RelevanceMap, relevance
from .network.model import ModelGraph, doc_proba


class FaithfulnessError(ValueError):
    """Invalid rationale or scoring request."""


@dataclass(frozen=True)
class Rationale:
    """A subset of a document's token positions claimed to justify its label."""

    doc_id: str
    positions: frozenset[int]
    source: str  # "gold" or "extracted"
    fraction: float

    def __len__(self) -> int:
        return len(self.positions)


def gold_rationale(doc: Document) -> Rationale | None:
    if doc.gold_rationale is None:
        return None
    n = len(doc.tokens)
    return Rationale(
        doc_id=doc.id,
        positions=frozenset(doc.gold_rationale),
        source="gold",
        fraction=len(doc.gold_rationale) / n if n else 0.0,
    )


def extract_rationale(rel: RelevanceMap, doc: Document, p: float) -> Rationale:
    """Top ``ceil(p * len)`` tokens by absolute relevance.

    Ties for the last slot go to the earlier position.
    """
    if not 0.0 < p <= 1.0:
        raise FaithfulnessError(f"fraction p must be in (0, 1], got {p}")
    if rel.doc_id != doc.id:
        raise FaithfulnessError(
            f"relevance map belongs to doc {rel.doc_id!r}, not {doc.id!r}"
        )
    n = len(rel.positions)
    size = math.ceil(p * n)
    ranked = sorted(
        zip(rel.positions, rel.scores), key=lambda ps: (-abs(ps[1]), ps[0])
    )
    positions = frozenset(pos for pos, _ in ranked[:size])
    return Rationale(
        doc_id=doc.id,
        positions=positions,
        source="extracted",
        fraction=len(positions) / n if n else 0.0,
    )


def delete_positions(tokens, positions) -> list[str]:
    """Remove the given positions; remaining tokens keep their order."""
    return [tok for i, tok in enumerate(tokens) if i not in positions]


def keep_positions(tokens, positions) -> list[str]:
    return [tok for i, tok in enumerate(tokens) if i in positions]


def comprehensiveness(
    model: ModelGraph, doc: Document, rationale: Rationale, target_class: int
) -> float:
    """p_c(doc) minus p_c(doc with the rationale deleted)."""
    if rationale.doc_id != doc.id:
        raise FaithfulnessError("rationale belongs to a different document")
    full = float(doc_proba(model, doc.tokens)[target_class])
    contrast = delete_positions(doc.tokens, rationale.positions)
    reduced = float(doc_proba(model, contrast)[target_class])
    return full - reduced


def sufficiency(
    model: ModelGraph,
    doc: Document,
    rationale: Rationale,
    target_class: int,
    mode: str = "difference",
) -> float:
    """p_c(doc) minus p_c(rationale tokens only).

    ``mode="product"`` multiplies the two probabilities instead; it is
    kept only for compatibility and is not the default.
    """
    if rationale.doc_id != doc.id:
        raise FaithfulnessError("rationale belongs to a different document")
    full = float(doc_proba(model, doc.tokens)[target_class])
    only = keep_positions(doc.tokens, rationale.positions)
    reduced = float(doc_proba(model, only)[target_class])
    if mode == "difference":
        return full - reduced
    if mode == "product":
        return full * reduced
    raise FaithfulnessError(f"unknown sufficiency mode {mode!r}")


def rationale_match(predicted: Rationale, gold: Rationale) -> bool | None:
    """True when the prediction covers at least half of the gold positions.

    Empty gold rationales are undefined and return None (excluded from
    match rates).
    """
    if predicted.doc_id != gold.doc_id:
        raise FaithfulnessError("rationales belong to different documents")
    if len(gold.positions) == 0:
        return None
    overlap = len(predicted.positions & gold.positions)
    return overlap / len(gold.positions) >= 0.5


@dataclass(frozen=True)
class FaithfulnessReport:
    model_id: str
    explainer: str
    p: float
    per_doc: tuple[dict, ...]
    mean_comprehensiveness: float
    mean_sufficiency: float
    match_rate: float | None

    def to_dict(self) -> dict:
        return {
            "model": self.model_id,
            "explainer": self.explainer,
            "p": self.p,
            "per_doc": list(self.per_doc),
            "mean_e": self.mean_comprehensiveness,
            "mean_s": self.mean_sufficiency,
            "match_rate": self.match_rate,
        }


def faithfulness_report(
    model: ModelGraph,
    corpus: LabeledCorpus,
    explainer: str = "lrp",
    p: float = 0.2,
    lrp_config: LrpConfig | None = None,
    model_id: str = "model",
    sufficiency_mode: str = "difference",
) -> FaithfulnessReport:
    """Score every non-empty document on its predicted class."""
    per_doc = []
    e_values, s_values, matches = [], [], []
    for doc in corpus.documents:
        if doc.empty:
            continue
        pred = int(np.argmax(doc_proba(model, doc.tokens)))
        rel = relevance(model, doc, pred, explainer, lrp_config)
        extracted = extract_rationale(rel, doc, p)
        e = comprehensiveness(model, doc, extracted, pred)
        s = sufficiency(model, doc, extracted, pred, mode=sufficiency_mode)
        gold = gold_rationale(doc)
        match = rationale_match(extracted, gold) if gold is not None else None
        entry = {"id": doc.id, "e": e, "s": s, "match": match}
        per_doc.append(entry)
        e_values.append(e)
        s_values.append(s)
        if match is not None:
            matches.append(match)
    if not per_doc:
        raise FaithfulnessError("no scorable documents in corpus")
    return FaithfulnessReport(
        model_id=model_id,
        explainer=explainer,
        p=p,
        per_doc=tuple(per_doc),
        mean_comprehensiveness=float(np.mean(e_values)),
        mean_sufficiency=float(np.mean(s_values)),
        match_rate=float(np.mean(matches)) if matches else None,
    )
