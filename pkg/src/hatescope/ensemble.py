"""Majority-vote and CV-weighted ensembles with metric-based selection.

``cv_train`` fits one model per cross-validation fold, weights each by
its held-out macro F1 (normalized to sum to 1), and combines member
distributions either by weighted soft voting or hard majority voting.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import LabeledCorpus, fit_length
from .features import Vocabulary
from .metrics import macro_f1
from .network.model import build_model, doc_proba
from .network.train import TrainConfig, TrainingError, train

COMBINE_RULES = ("hard-majority", "weighted-soft")


class EnsembleError(ValueError):
    """Invalid ensemble construction or voting request."""


def majority_vote(distributions) -> int:
    """Label with the most member argmax votes.

    Ties go to the highest mean probability among the tied labels,
    then to the lowest class index.
    """
    dists = np.asarray(distributions, dtype=np.float64)
    if dists.ndim != 2 or dists.shape[0] < 2:
        raise EnsembleError("need at least 2 member distributions")
    votes = np.argmax(dists, axis=1)
    counts = np.bincount(votes, minlength=dists.shape[1])
    best = counts.max()
    tied = np.nonzero(counts == best)[0]
    if len(tied) == 1:
        return int(tied[0])
    mean_probs = dists.mean(axis=0)
    order = sorted(tied, key=lambda c: (-mean_probs[c], c))
    return int(order[0])


@dataclass(frozen=True)
class CandidateScore:
    """Validation metrics used to pick ensemble members."""

    model_id: str
    macro_f1: float
    mcc: float
    log_norm: float


def select_top_k(candidates, k: int, rule: str = "metric-then-lognorm"):
    """Best ``k`` candidates by macro F1, ties broken by lower log-norm."""
    if rule != "metric-then-lognorm":
        raise EnsembleError(f"unknown selection rule {rule!r}")
    candidates = list(candidates)
    if k <= 0:
        raise EnsembleError(f"k must be positive, got {k}")
    if k > len(candidates):
        raise EnsembleError(f"k={k} exceeds candidate count {len(candidates)}")
    ranked = sorted(candidates, key=lambda c: (-c.macro_f1, c.log_norm))
    return ranked[:k]


@dataclass
class EnsembleModel:
    """Frozen member models with normalized combination weights."""

    members: tuple
    weights: np.ndarray
    combine: str = "hard-majority"
    fold_scores: tuple[float, ...] = ()
    member_ids: tuple[str, ...] = ()

    def __post_init__(self):
        if len(self.members) < 2:
            raise EnsembleError("an ensemble needs at least 2 members")
        if self.combine not in COMBINE_RULES:
            raise EnsembleError(
                f"unknown combine rule {self.combine!r}; expected {COMBINE_RULES}"
            )
        w = np.asarray(self.weights, dtype=np.float64)
        if w.shape != (len(self.members),):
            raise EnsembleError("one weight per member required")
        if (w < 0).any():
            raise EnsembleError("weights must be non-negative")
        total = w.sum()
        if total <= 0:
            raise EnsembleError("weights must not all be zero")
        object.__setattr__(self, "weights", w / total)

    @property
    def num_classes(self) -> int:
        return self.members[0].num_classes


def member_distributions(ensemble: EnsembleModel, tokens) -> np.ndarray:
    return np.stack([doc_proba(m, tokens) for m in ensemble.members])


def ensemble_predict(ensemble: EnsembleModel, tokens) -> tuple[np.ndarray, int]:
    """Combined class distribution and label for one token sequence.

    Weighted-soft returns the normalized weighted mixture; hard
    majority returns the vote shares with the majority label.
    """
    dists = member_distributions(ensemble, tokens)
    if ensemble.combine == "weighted-soft":
        mixed = ensemble.weights @ dists
        mixed = mixed / mixed.sum()
        return mixed, int(np.argmax(mixed))
    votes = np.argmax(dists, axis=1)
    shares = np.bincount(votes, minlength=ensemble.num_classes) / len(votes)
    return shares, majority_vote(dists)


def ensemble_predict_corpus(ensemble: EnsembleModel, docs) -> np.ndarray:
    return np.array(
        [ensemble_predict(ensemble, d.tokens if hasattr(d, "tokens") else d)[1]
         for d in docs],
        dtype=np.int64,
    )


def fold_weights(scores) -> np.ndarray:
    """Normalize fold scores into ensemble weights.

    A zero-score fold gets weight 0 with the rest renormalized; if
    every fold scores 0 the weights are uniform.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if (scores < 0).any():
        raise EnsembleError("fold scores must be non-negative")
    total = scores.sum()
    if total == 0:
        return np.full(len(scores), 1.0 / len(scores))
    return scores / total


def stratified_folds(labels, n_folds: int, seed: int) -> np.ndarray:
    """Per-document fold assignment, class-balanced and seeded."""
    labels = np.asarray(labels, dtype=np.int64)
    rng = np.random.default_rng(seed)
    assignment = np.empty(len(labels), dtype=np.int64)
    for c in np.unique(labels):
        idx = np.nonzero(labels == c)[0]
        if len(idx) < n_folds:
            raise EnsembleError(
                f"class {int(c)} has {len(idx)} documents; cannot fill "
                f"{n_folds} folds"
            )
        idx = idx[rng.permutation(len(idx))]
        assignment[idx] = np.arange(len(idx)) % n_folds
    return assignment


def cv_train(
    corpus: LabeledCorpus,
    n_folds: int,
    specs,
    config: TrainConfig,
    max_len: int = 100,
    vocab_size: int | None = 20000,
    combine: str = "weighted-soft",
) -> EnsembleModel:
    """Train one model per fold and weight members by held-out macro F1.

    Fold weights are ``alpha_m = F1_m / sum F1``; when every fold
    scores zero the weights fall back to uniform.
    """
    if n_folds < 2:
        raise EnsembleError(f"need at least 2 folds, got {n_folds}")
    docs = [d for d in corpus.documents]
    labels = corpus.labels()
    folds = stratified_folds(labels, n_folds, config.seed)
    vocab = Vocabulary.from_documents([d.tokens for d in docs], max_size=vocab_size)
    X = np.stack([vocab.encode(fit_length(list(d.tokens), max_len)[0]) for d in docs])
    members = []
    fold_scores = []
    for m in range(n_folds):
        train_idx = np.nonzero(folds != m)[0]
        held_idx = np.nonzero(folds == m)[0]
        model = build_model(
            specs,
            num_classes=corpus.num_classes,
            seed=config.seed + m,
            vocab=vocab,
            max_len=max_len,
            class_names=corpus.class_names or None,
        )
        fold_config = TrainConfig(
            optimizer=config.optimizer,
            learning_rate=config.learning_rate,
            epochs=config.epochs,
            batch_size=config.batch_size,
            seed=config.seed + m,
            clip_norm=config.clip_norm,
        )
        try:
            train(model, X[train_idx], labels[train_idx], fold_config)
        except TrainingError as exc:
            raise TrainingError(f"fold {m}: {exc}") from exc
        pred = np.array(
            [int(np.argmax(doc_proba(model, docs[i].tokens))) for i in held_idx]
        )
        fold_scores.append(macro_f1(labels[held_idx], pred, corpus.num_classes))
        members.append(model)
    weights = fold_weights(fold_scores)
    return EnsembleModel(
        members=tuple(members),
        weights=weights,
        combine=combine,
        fold_scores=tuple(float(s) for s in fold_scores),
        member_ids=tuple(f"fold{m}" for m in range(n_folds)),
    )


def ensemble_manifest(
    ensemble: EnsembleModel, checkpoint_paths, validation_scores=None
) -> dict:
    """JSON-serializable description: member paths, weights, rule, scores."""
    return {
        "members": list(checkpoint_paths),
        "weights": [float(w) for w in ensemble.weights],
        "combine": ensemble.combine,
        "fold_scores": list(ensemble.fold_scores),
        "validation_scores": validation_scores,
    }
