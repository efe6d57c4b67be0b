"""Vocabulary building, TF-IDF featurization, and embedding tables.

The TF-IDF feature space is the union of word unigrams and character
n-grams (extracted from the whitespace-joined token sequence, spaces
included). Weights use add-one smoothed IDF, ``tf * (ln((1+N)/(1+df)) + 1)``,
and rows are L2-normalized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator, TransformerMixin

from .corpus import PAD_TOKEN, UNK_TOKEN, LabeledCorpus


class FeatureError(ValueError):
    """Invalid featurizer configuration or input."""


class EmbeddingFormatError(FeatureError):
    """Malformed plain-text embedding file."""


class Vocabulary:
    """Token-to-index map with reserved pad (0) and unk (1) entries.

    Tokens are ranked by corpus frequency, ties broken lexicographically,
    then truncated to ``max_size`` non-special entries.
    """

    PAD = 0
    UNK = 1
    _SPECIALS = (PAD_TOKEN, UNK_TOKEN)

    def __init__(self, tokens):
        self._index_to_token = list(self._SPECIALS) + [
            t for t in tokens if t not in self._SPECIALS
        ]
        self._token_to_index = {t: i for i, t in enumerate(self._index_to_token)}
        if len(self._token_to_index) != len(self._index_to_token):
            raise FeatureError("duplicate tokens in vocabulary")

    @classmethod
    def from_documents(cls, docs, max_size: int | None = None) -> "Vocabulary":
        counts: dict[str, int] = {}
        n_docs = 0
        for doc in docs:
            tokens = doc.tokens if hasattr(doc, "tokens") else doc
            n_docs += 1
            for tok in tokens:
                counts[tok] = counts.get(tok, 0) + 1
        if n_docs == 0:
            raise FeatureError("cannot build a vocabulary from an empty corpus")
        ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        if max_size is not None:
            ranked = ranked[:max_size]
        return cls([tok for tok, _ in ranked])

    def __len__(self) -> int:
        return len(self._index_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self._token_to_index

    @property
    def tokens(self) -> list[str]:
        return list(self._index_to_token)

    def index(self, token: str) -> int:
        return self._token_to_index.get(token, self.UNK)

    def token(self, index: int) -> str:
        return self._index_to_token[index]

    def encode(self, tokens) -> np.ndarray:
        return np.array([self.index(t) for t in tokens], dtype=np.int64)

    def decode(self, ids) -> list[str]:
        return [self.token(int(i)) for i in ids]


def build_vocabulary(corpus: LabeledCorpus, max_size: int | None = None) -> Vocabulary:
    return Vocabulary.from_documents(corpus.documents, max_size=max_size)


def _char_ngrams(tokens, lo: int, hi: int):
    text = " ".join(tokens)
    for n in range(lo, hi + 1):
        for i in range(len(text) - n + 1):
            yield text[i : i + n]


class TfidfFeaturizer(BaseEstimator, TransformerMixin):
    """Fit a TF-IDF space over word unigrams and/or character n-grams.

    Parameters
    ----------
    char_ngram_range : tuple (lo, hi) or None
        Inclusive range of character n-gram lengths; None disables
        character features.
    use_word_unigrams : bool
        Include one feature per token type.
    """

    def __init__(self, char_ngram_range=(2, 5), use_word_unigrams=True):
        self.char_ngram_range = char_ngram_range
        self.use_word_unigrams = use_word_unigrams

    def _check_params(self):
        if self.char_ngram_range is not None:
            lo, hi = self.char_ngram_range
            if lo < 1 or lo > hi:
                raise FeatureError(
                    f"invalid char_ngram_range {self.char_ngram_range}: need 1 <= lo <= hi"
                )
        if self.char_ngram_range is None and not self.use_word_unigrams:
            raise FeatureError("no feature family enabled")

    @staticmethod
    def _doc_tokens(doc):
        return doc.tokens if hasattr(doc, "tokens") else doc

    def _doc_features(self, tokens) -> dict:
        counts: dict[tuple[str, str], int] = {}
        if self.use_word_unigrams:
            for tok in tokens:
                key = ("w", tok)
                counts[key] = counts.get(key, 0) + 1
        if self.char_ngram_range is not None and tokens:
            lo, hi = self.char_ngram_range
            for gram in _char_ngrams(tokens, lo, hi):
                key = ("c", gram)
                counts[key] = counts.get(key, 0) + 1
        return counts

    def fit(self, docs, y=None):
        self._check_params()
        docs = list(docs.documents) if isinstance(docs, LabeledCorpus) else list(docs)
        df: dict[tuple[str, str], int] = {}
        n_docs = 0
        for doc in docs:
            n_docs += 1
            for key in self._doc_features(self._doc_tokens(doc)):
                df[key] = df.get(key, 0) + 1
        if n_docs == 0:
            raise FeatureError("cannot fit TF-IDF on an empty corpus")
        self.n_docs_ = n_docs
        self.feature_index_ = {key: i for i, key in enumerate(sorted(df))}
        self.df_ = np.array([df[key] for key in sorted(df)], dtype=np.int64)
        self.idf_ = np.log((1.0 + n_docs) / (1.0 + self.df_)) + 1.0
        self.feature_names_ = [
            f"{kind}={value}" for kind, value in sorted(df)
        ]
        return self

    def transform(self, docs) -> sp.csr_matrix:
        if not hasattr(self, "feature_index_"):
            raise FeatureError("featurizer is not fitted")
        docs = list(docs.documents) if isinstance(docs, LabeledCorpus) else list(docs)
        indptr = [0]
        indices: list[int] = []
        data: list[float] = []
        for doc in docs:
            counts = self._doc_features(self._doc_tokens(doc))
            row = []
            for key, tf in counts.items():
                col = self.feature_index_.get(key)
                if col is None:
                    continue  # unseen feature, dropped
                row.append((col, tf * self.idf_[col]))
            row.sort()
            norm = np.sqrt(sum(w * w for _, w in row))
            if norm > 0:
                row = [(c, w / norm) for c, w in row]
            indices.extend(c for c, _ in row)
            data.extend(w for _, w in row)
            indptr.append(len(indices))
        return sp.csr_matrix(
            (np.array(data, dtype=np.float64), np.array(indices, dtype=np.int64), indptr),
            shape=(len(docs), len(self.feature_index_)),
        )

    def transform_tokens(self, tokens) -> np.ndarray:
        """Dense TF-IDF vector for a single token sequence."""
        return self.transform([list(tokens)]).toarray()[0]


def featurizer_to_dict(featurizer: TfidfFeaturizer) -> dict:
    """JSON-serializable snapshot of a fitted featurizer."""
    if not hasattr(featurizer, "feature_index_"):
        raise FeatureError("featurizer is not fitted")
    ordered = sorted(featurizer.feature_index_, key=featurizer.feature_index_.get)
    return {
        "char_ngram_range": list(featurizer.char_ngram_range)
        if featurizer.char_ngram_range is not None
        else None,
        "use_word_unigrams": featurizer.use_word_unigrams,
        "n_docs": featurizer.n_docs_,
        "features": [[kind, value] for kind, value in ordered],
        "df": featurizer.df_.tolist(),
    }


def featurizer_from_dict(state: dict) -> TfidfFeaturizer:
    rng = state["char_ngram_range"]
    featurizer = TfidfFeaturizer(
        char_ngram_range=tuple(rng) if rng is not None else None,
        use_word_unigrams=state["use_word_unigrams"],
    )
    featurizer.n_docs_ = state["n_docs"]
    keys = [(kind, value) for kind, value in state["features"]]
    featurizer.feature_index_ = {key: i for i, key in enumerate(keys)}
    featurizer.df_ = np.array(state["df"], dtype=np.int64)
    featurizer.idf_ = np.log((1.0 + featurizer.n_docs_) / (1.0 + featurizer.df_)) + 1.0
    featurizer.feature_names_ = [f"{kind}={value}" for kind, value in keys]
    return featurizer


@dataclass(frozen=True)
class EmbeddingTable:
    """Fixed-dimension token vectors with a fallback for unknown tokens."""

    dim: int
    vectors: dict[str, np.ndarray]
    fallback: str = "zeros"

    def lookup(self, token: str) -> np.ndarray:
        if token == PAD_TOKEN:
            return np.zeros(self.dim, dtype=np.float64)
        vec = self.vectors.get(token)
        if vec is not None:
            return vec
        if self.fallback == "zeros":
            return np.zeros(self.dim, dtype=np.float64)
        raise FeatureError(f"token {token!r} has no embedding")

    def __contains__(self, token: str) -> bool:
        return token in self.vectors

    def __len__(self) -> int:
        return len(self.vectors)


def load_embedding_table(path, fallback: str = "zeros") -> EmbeddingTable:
    """Read a plain-text vector file: header ``<count> <dim>``, then one
    ``<token> <f1> ... <fdim>`` row per line."""
    vectors: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise EmbeddingFormatError(
                f"{path}:1: header must be '<count> <dim>', got {header}"
            )
        try:
            count, dim = int(header[0]), int(header[1])
        except ValueError:
            raise EmbeddingFormatError(
                f"{path}:1: non-integer header fields {header}"
            ) from None
        if dim < 1:
            raise EmbeddingFormatError(f"{path}:1: dimension must be positive")
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split(" ")
            token = parts[0]
            values = parts[1:]
            if len(values) != dim:
                raise EmbeddingFormatError(
                    f"{path}:{lineno}: expected {dim} floats, got {len(values)}"
                )
            try:
                vectors[token] = np.array([float(v) for v in values], dtype=np.float64)
            except ValueError:
                raise EmbeddingFormatError(
                    f"{path}:{lineno}: non-numeric vector component"
                ) from None
    if len(vectors) != count:
        raise EmbeddingFormatError(
            f"{path}: header declares {count} rows, file has {len(vectors)}"
        )
    return EmbeddingTable(dim=dim, vectors=vectors, fallback=fallback)


def embed_sequence(tokens, table: EmbeddingTable) -> np.ndarray:
    """Stack per-token vectors into a (len, dim) matrix; pads map to zeros."""
    if not tokens:
        return np.zeros((0, table.dim), dtype=np.float64)
    return np.stack([table.lookup(tok) for tok in tokens])
