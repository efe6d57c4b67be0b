"""Token-level attribution: sensitivity analysis, layer-wise relevance
propagation, permutation feature importance, leave-one-out deltas,
global term rankings, and heat-map rendering.

Sensitivity analysis scores each input coordinate with the squared
partial derivative of the pre-softmax class score; a token's score is
the sum over its embedding coordinates and the total equals the
squared gradient norm. LRP redistributes the class score backwards
under the layer conservation rule; leave-one-out works on output
probabilities instead.
"""

from __future__ import annotations

import html as _html
import math
from dataclasses import dataclass

import numpy as np

from .corpus import Document, LabeledCorpus
from .metrics import macro_f1
from .network.layers import EmbeddingLayer
from .network.model import (
    ModelGraph,
    doc_proba,
    encode_doc,
    forward,
    input_gradient,
)


class ExplainError(ValueError):
    """Unsupported attribution request."""


@dataclass(frozen=True)
class LrpConfig:
    """Stabilizer and bias handling for the relevance redistribution rule."""

    epsilon: float = 0.001
    delta: float = 1.0

    def __post_init__(self):
        if not math.isfinite(self.epsilon) or self.epsilon < 0:
            raise ExplainError(f"epsilon must be finite and >= 0, got {self.epsilon}")
        if self.delta not in (0.0, 1.0):
            raise ExplainError(f"delta must be 0 or 1, got {self.delta}")


@dataclass(frozen=True)
class RelevanceMap:
    """Per-token relevance for one document and one target class."""

    doc_id: str
    target_class: int
    method: str
    positions: tuple[int, ...]
    tokens: tuple[str, ...]
    scores: tuple[float, ...]
    total_relevance: float

    def __len__(self) -> int:
        return len(self.positions)

    def to_dict(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "class": self.target_class,
            "method": self.method,
            "tokens": [
                {"pos": p, "token": t, "score": s}
                for p, t, s in zip(self.positions, self.tokens, self.scores)
            ],
            "total": self.total_relevance,
        }


@dataclass(frozen=True)
class PermutationReport:
    """Mean per-feature importance from repeated column shuffles."""

    reference_score: float
    importances: tuple[float, ...]
    n_repeats: int
    seed: int

    def to_dict(self) -> dict:
        return {
            "reference_score": self.reference_score,
            "importances": list(self.importances),
            "n_repeats": self.n_repeats,
            "seed": self.seed,
        }


def _real_positions(model: ModelGraph, doc: Document) -> int:
    """Number of document tokens visible to the model window."""
    return min(len(doc.tokens), model.max_len)


def _make_map(doc, target_class, method, scores, total=None) -> RelevanceMap:
    n = len(scores)
    positions = tuple(range(n))
    tokens = tuple(doc.tokens[:n])
    if total is None:
        total = float(sum(scores))
    return RelevanceMap(
        doc_id=doc.id,
        target_class=target_class,
        method=method,
        positions=positions,
        tokens=tokens,
        scores=tuple(float(s) for s in scores),
        total_relevance=float(total),
    )


def sa_relevance(model: ModelGraph, doc: Document, target_class: int) -> RelevanceMap:
    """Squared-gradient relevance per token of ``doc``.

    The input space is the document's embedded tokens; pad positions
    are masked out, so the total equals the squared L2 norm of the
    gradient restricted to real tokens.
    """
    grad = input_gradient(model, encode_doc(model, doc.tokens), target_class)
    n_real = _real_positions(model, doc)
    per_coord = grad[:n_real] ** 2
    scores = per_coord.sum(axis=1)
    return _make_map(doc, target_class, "sa", scores, total=float(per_coord.sum()))


def sa_input_relevance(model: ModelGraph, x, target_class: int) -> np.ndarray:
    """Per-coordinate squared partials for a raw encoded input."""
    return input_gradient(model, x, target_class) ** 2


def lrp_input_relevance(
    model: ModelGraph, x, target_class: int, config: LrpConfig | None = None
) -> np.ndarray:
    """Relevance over the model input space for one encoded sample.

    Seeds the output layer with the pre-softmax score of the target
    class (other output neurons are ignored) and applies each layer's
    redistribution rule in reverse.
    """
    config = config or LrpConfig()
    if not 0 <= target_class < model.num_classes:
        raise ExplainError(f"class {target_class} outside [0, {model.num_classes})")
    _, trace = forward(model, x, mode="eval", trace=True)
    r = np.zeros(model.num_classes)
    r[target_class] = trace.logits[target_class]
    for idx in range(len(model.layers) - 2, -1, -1):
        layer = model.layers[idx]
        if not hasattr(layer, "lrp"):
            raise ExplainError(f"layer {layer.name} does not support relevance propagation")
        r = layer.lrp(r, trace.records[idx].cache, config.epsilon, config.delta)
        if isinstance(layer, EmbeddingLayer):
            break
    return r


def lrp_relevance(
    model: ModelGraph,
    doc: Document,
    target_class: int,
    config: LrpConfig | None = None,
) -> RelevanceMap:
    """Layer-wise relevance propagation aggregated per token."""
    r = lrp_input_relevance(
        model, encode_doc(model, doc.tokens), target_class, config
    )
    n_real = _real_positions(model, doc)
    scores = r[:n_real].sum(axis=1)
    return _make_map(doc, target_class, "lrp", scores)


def leave_one_out(model: ModelGraph, doc: Document, target_class: int) -> RelevanceMap:
    """Probability drop from deleting each token in turn.

    ``score(t) = p_c(doc) - p_c(doc without token t)``; deleting the
    only token scores against the model's empty-input output.
    """
    if len(doc.tokens) == 0:
        raise ExplainError(f"document {doc.id!r} has no tokens")
    base = float(doc_proba(model, doc.tokens)[target_class])
    n_real = _real_positions(model, doc)
    scores = []
    for t in range(n_real):
        reduced = list(doc.tokens[:t]) + list(doc.tokens[t + 1 :])
        scores.append(base - float(doc_proba(model, reduced)[target_class]))
    return _make_map(doc, target_class, "loo", scores)


_RELEVANCE_FNS = {
    "sa": lambda model, doc, c, cfg: sa_relevance(model, doc, c),
    "lrp": lambda model, doc, c, cfg: lrp_relevance(model, doc, c, cfg),
    "loo": lambda model, doc, c, cfg: leave_one_out(model, doc, c),
}


def relevance(
    model: ModelGraph,
    doc: Document,
    target_class: int,
    method: str,
    config: LrpConfig | None = None,
) -> RelevanceMap:
    """Dispatch to one of the attribution methods by name."""
    if method not in _RELEVANCE_FNS:
        raise ExplainError(
            f"unknown method {method!r}; expected one of {sorted(_RELEVANCE_FNS)}"
        )
    return _RELEVANCE_FNS[method](model, doc, target_class, config)


def permutation_importance(
    model,
    X,
    y,
    n_repeats: int = 5,
    seed: int = 0,
    num_classes: int | None = None,
    score_fn=None,
) -> PermutationReport:
    """Mean macro-F1 drop from shuffling each feature column.

    ``model`` needs a ``predict(X)`` method. For flat models the
    columns are feature dimensions; for sequence models they are token
    positions, so shuffling permutes which token identity sits at a
    position across documents.
    """
    if n_repeats < 1:
        raise ExplainError("n_repeats must be >= 1")
    X = np.asarray(X)
    y = np.asarray(y, dtype=np.int64)
    if X.shape[0] < 2:
        raise ExplainError("need at least 2 rows to permute")
    k = num_classes if num_classes is not None else int(y.max()) + 1
    if score_fn is None:
        score_fn = lambda gold, pred: macro_f1(gold, pred, k)
    reference = float(score_fn(y, np.asarray(model.predict(X))))
    rng = np.random.default_rng(seed)
    importances = []
    for col in range(X.shape[1]):
        total = 0.0
        for _ in range(n_repeats):
            shuffled = X.copy()
            shuffled[:, col] = shuffled[rng.permutation(X.shape[0]), col]
            total += float(score_fn(y, np.asarray(model.predict(shuffled))))
        importances.append(reference - total / n_repeats)
    return PermutationReport(
        reference_score=reference,
        importances=tuple(importances),
        n_repeats=n_repeats,
        seed=seed,
    )


def global_terms(
    model: ModelGraph,
    corpus: LabeledCorpus,
    method: str = "lrp",
    k: int = 20,
    config: LrpConfig | None = None,
) -> dict:
    """Most and least relevant token types per class.

    For each class, relevance is computed on correctly classified
    documents w.r.t. their gold class and averaged per token type over
    all occurrences. Classes with no correct prediction come back
    empty and flagged.
    """
    if len(corpus) == 0:
        raise ExplainError("empty corpus")
    if k < 1:
        raise ExplainError("k must be >= 1")
    sums: dict[int, dict[str, float]] = {c: {} for c in range(corpus.num_classes)}
    counts: dict[int, dict[str, int]] = {c: {} for c in range(corpus.num_classes)}
    for doc in corpus.documents:
        if doc.empty:
            continue
        pred = int(np.argmax(doc_proba(model, doc.tokens)))
        if pred != doc.label:
            continue
        rel = relevance(model, doc, doc.label, method, config)
        for tok, score in zip(rel.tokens, rel.scores):
            sums[doc.label][tok] = sums[doc.label].get(tok, 0.0) + score
            counts[doc.label][tok] = counts[doc.label].get(tok, 0) + 1
    result = {}
    for c in range(corpus.num_classes):
        means = {
            tok: sums[c][tok] / counts[c][tok] for tok in sums[c]
        }
        ranked = sorted(means.items(), key=lambda kv: (-kv[1], kv[0]))
        result[corpus.class_name(c)] = {
            "top": ranked[:k],
            "bottom": ranked[::-1][:k],
            "no_correct_predictions": len(ranked) == 0,
        }
    return result


_WARM = "214,39,40"   # red for positive relevance
_COOL = "31,119,180"  # blue for negative relevance


def render_heatmap(
    doc: Document,
    rel: RelevanceMap,
    out_path=None,
    class_name: str | None = None,
) -> str:
    """Self-contained HTML heat map of one relevance map.

    Background opacity is each token's |score| normalized by the
    maximum |score|; positive scores use a warm hue, negative a cool
    one. With an all-zero map the text renders unhighlighted.
    """
    if rel.doc_id != doc.id:
        raise ExplainError(
            f"relevance map belongs to doc {rel.doc_id!r}, not {doc.id!r}"
        )
    max_abs = max((abs(s) for s in rel.scores), default=0.0)
    by_pos = dict(zip(rel.positions, rel.scores))
    spans = []
    for pos, token in enumerate(doc.tokens):
        text = _html.escape(token)
        score = by_pos.get(pos)
        if score is None or max_abs == 0.0 or score == 0.0:
            spans.append(f"<span>{text}</span>")
            continue
        hue = _WARM if score > 0 else _COOL
        opacity = abs(score) / max_abs
        spans.append(
            f'<span style="background-color: rgba({hue},{opacity:.4f})" '
            f'title="{score:.6g}">{text}</span>'
        )
    target = class_name if class_name is not None else str(rel.target_class)
    page = (
        "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n"
        f"<title>relevance {_html.escape(doc.id)}</title>\n"
        "<style>body{font-family:sans-serif;max-width:60em;margin:2em auto}"
        ".tokens span{padding:0.1em 0.15em;border-radius:0.15em}"
        ".legend{color:#555;font-size:0.9em}</style>\n</head>\n<body>\n"
        f"<h3>Document {_html.escape(doc.id)}</h3>\n"
        f'<p class="legend">class: {_html.escape(target)} | method: {rel.method} '
        f"| max |relevance|: {max_abs:.6g}</p>\n"
        f'<p class="tokens">{" ".join(spans)}</p>\n'
        "</body>\n</html>\n"
    )
    if out_path is not None:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(page)
    return page
