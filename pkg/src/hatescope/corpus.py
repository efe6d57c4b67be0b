"""Labeled text corpora: loading, preprocessing, filtering, splitting, synthesis.

A corpus is an immutable collection of tokenized, labeled documents.
Preprocessing follows a fixed pipeline (mention/emoji stripping, hashtag
normalization, punctuation-aware tokenization, duplicate collapsing,
optional stemming) and is alignment-preserving, so gold rationale
positions survive it.
"""

from __future__ import annotations

import csv
import math
import unicodedata
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"

#: Default class schema for four-way hate classification.
DEFAULT_CLASS_NAMES = ("personal", "political", "religious", "geopolitical")


class CorpusError(ValueError):
    """Base error for corpus loading and manipulation."""


class SchemaError(CorpusError):
    """A required column is missing or the schema is inconsistent."""


class LabelError(CorpusError):
    """A row carries a label that cannot be resolved to a class index."""


class StratificationError(CorpusError):
    """A stratified split cannot be constructed for the given corpus."""


class SynthSpecError(CorpusError):
    """The synthetic-corpus specification is invalid."""


@dataclass(frozen=True)
class Document:
    """One tokenized document with a class label and optional gold rationale.

    ``gold_rationale`` holds positions into ``tokens``; ``None`` means
    no rationale was annotated (distinct from an empty one).
    """

    id: str
    raw: str
    tokens: tuple[str, ...]
    label: int
    gold_rationale: frozenset[int] | None = None

    def __post_init__(self):
        if self.gold_rationale is not None:
            bad = [p for p in self.gold_rationale if not 0 <= p < len(self.tokens)]
            if bad:
                raise CorpusError(
                    f"document {self.id!r}: rationale positions {sorted(bad)} "
                    f"out of range for {len(self.tokens)} tokens"
                )

    @property
    def empty(self) -> bool:
        """True when preprocessing or filtering removed every token."""
        return len(self.tokens) == 0


@dataclass(frozen=True)
class LabeledCorpus:
    """Immutable list of documents plus the class schema they are labeled in."""

    documents: tuple[Document, ...]
    num_classes: int
    class_names: tuple[str, ...] = ()
    provenance: str = ""

    def __post_init__(self):
        if self.num_classes < 2:
            raise CorpusError(f"need at least 2 classes, got {self.num_classes}")
        if self.class_names and len(self.class_names) != self.num_classes:
            raise CorpusError("class_names length does not match num_classes")
        seen = set()
        for doc in self.documents:
            if doc.id in seen:
                raise CorpusError(f"duplicate document id {doc.id!r}")
            seen.add(doc.id)
            if not 0 <= doc.label < self.num_classes:
                raise LabelError(
                    f"document {doc.id!r} has label {doc.label} outside "
                    f"[0, {self.num_classes})"
                )

    def __len__(self) -> int:
        return len(self.documents)

    def __iter__(self):
        return iter(self.documents)

    def labels(self) -> np.ndarray:
        return np.array([d.label for d in self.documents], dtype=np.int64)

    def class_name(self, label: int) -> str:
        if self.class_names:
            return self.class_names[label]
        return f"class{label}"

    def resolve_class(self, name_or_index: str) -> int:
        """Map a class name (or numeric string) to its index."""
        if self.class_names and name_or_index in self.class_names:
            return self.class_names.index(name_or_index)
        try:
            idx = int(name_or_index)
        except ValueError:
            raise LabelError(f"unknown class {name_or_index!r}") from None
        if not 0 <= idx < self.num_classes:
            raise LabelError(f"class index {idx} outside [0, {self.num_classes})")
        return idx


@dataclass(frozen=True)
class PreprocessConfig:
    """Switches for the text cleanup pipeline.

    ``stemmer`` is applied to each token as the final step; it defaults
    to identity because no language-specific stemmer ships with the
    library.
    """

    normalize_hashtags: bool = True
    strip_emojis_mentions_duplicates: bool = True
    stemmer: Callable[[str], str] | None = None
    lowercase: bool = True
    min_df: int = 5
    max_len: int = 100

    def __post_init__(self):
        if self.min_df < 1:
            raise CorpusError(f"min_df must be >= 1, got {self.min_df}")
        if self.max_len < 1:
            raise CorpusError(f"max_len must be >= 1, got {self.max_len}")


# Common ASCII emoticons, matched as whole whitespace-delimited chunks.
_EMOTICONS = {
    ":)", ":(", ":-)", ":-(", ":d", ":-d", ";)", ";-)", ":p", ":-p",
    ":o", ":-o", ":/", ":-/", ":|", ":'(", "xd", "<3", "</3", ":*",
    "=)", "=(", "^^", "^_^", "-_-", "o_o",
}

# Unicode ranges treated as emoji / pictographs.
_EMOJI_RANGES = (
    (0x1F000, 0x1FFFF),  # pictographs, emoticons, transport, flags, ...
    (0x2600, 0x27BF),    # misc symbols and dingbats
    (0x2B00, 0x2BFF),    # misc symbols and arrows (stars etc.)
    (0xFE00, 0xFE0F),    # variation selectors
    (0x200D, 0x200D),    # zero-width joiner
    (0x20E3, 0x20E3),    # combining keycap
)


def _is_emoji_char(ch: str) -> bool:
    cp = ord(ch)
    return any(lo <= cp <= hi for lo, hi in _EMOJI_RANGES)


def _split_punctuation(chunk: str) -> list[str]:
    """Split a whitespace-free chunk on unicode punctuation characters."""
    pieces, buf = [], []
    for ch in chunk:
        if unicodedata.category(ch).startswith("P"):
            if buf:
                pieces.append("".join(buf))
                buf = []
        else:
            buf.append(ch)
    if buf:
        pieces.append("".join(buf))
    return pieces


def preprocess_aligned(
    raw: str, config: PreprocessConfig | None = None
) -> tuple[list[str], list[int]]:
    """Tokenize and clean ``raw``, keeping chunk-level alignment.

    Returns ``(tokens, sources)`` where ``sources[t]`` is the index of
    the whitespace-delimited chunk of ``raw`` that produced token ``t``.
    The alignment lets rationale positions be remapped through
    preprocessing.
    """
    config = config or PreprocessConfig()
    strip = config.strip_emojis_mentions_duplicates
    tokens: list[str] = []
    sources: list[int] = []
    for chunk_idx, chunk in enumerate(raw.split()):
        if strip and chunk.startswith("@") and len(chunk) > 1:
            continue
        if strip and chunk.lower() in _EMOTICONS:
            continue
        if strip:
            chunk = "".join(ch for ch in chunk if not _is_emoji_char(ch))
            if not chunk:
                continue
        if chunk.startswith("#") and len(chunk) > 1:
            if config.normalize_hashtags:
                chunk = chunk[1:]
            else:
                # Hashtag kept as one atomic token.
                tok = chunk.lower() if config.lowercase else chunk
                tokens.append(tok)
                sources.append(chunk_idx)
                continue
        for piece in _split_punctuation(chunk):
            if strip and piece.lower() in _EMOTICONS:
                continue  # emoticon remnants like the "xD" of ":xD"
            tok = piece.lower() if config.lowercase else piece
            tokens.append(tok)
            sources.append(chunk_idx)
    if strip:
        deduped_tokens, deduped_sources = [], []
        for tok, src in zip(tokens, sources):
            if deduped_tokens and deduped_tokens[-1] == tok:
                continue
            deduped_tokens.append(tok)
            deduped_sources.append(src)
        tokens, sources = deduped_tokens, deduped_sources
    if config.stemmer is not None:
        tokens = [config.stemmer(tok) for tok in tokens]
    return tokens, sources


def preprocess(raw: str, config: PreprocessConfig | None = None) -> list[str]:
    """Clean and tokenize one text. Empty output is permitted."""
    return preprocess_aligned(raw, config)[0]


def preprocess_corpus(
    corpus: LabeledCorpus, config: PreprocessConfig | None = None
) -> LabeledCorpus:
    """Re-tokenize every document from its raw text.

    Gold rationale positions are remapped through the alignment: a new
    position is kept when its source chunk was part of the original
    rationale (positions indexing the whitespace chunks of ``raw``).
    """
    docs = []
    for doc in corpus.documents:
        tokens, sources = preprocess_aligned(doc.raw, config)
        rationale = None
        if doc.gold_rationale is not None:
            rationale = frozenset(
                t for t, src in enumerate(sources) if src in doc.gold_rationale
            )
        docs.append(
            Document(
                id=doc.id,
                raw=doc.raw,
                tokens=tuple(tokens),
                label=doc.label,
                gold_rationale=rationale,
            )
        )
    return replace(corpus, documents=tuple(docs))


def load_corpus(
    path,
    schema: dict | None = None,
    class_names: Sequence[str] | None = None,
) -> LabeledCorpus:
    """Load a corpus from CSV (columns id, text, label, optional rationale).

    ``schema`` remaps column names, e.g. ``{"text": "comment"}``.
    ``class_names`` fixes the label order; when omitted, K is inferred
    from the distinct labels in sorted order. Stored text is split on
    whitespace; rationale indices refer to those whitespace tokens.
    """
    schema = schema or {}
    col = {
        "id": schema.get("id", "id"),
        "text": schema.get("text", "text"),
        "label": schema.get("label", "label"),
        "rationale": schema.get("rationale", "rationale"),
    }
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise CorpusError(f"{path}: no documents")
        for key in ("id", "text", "label"):
            if col[key] not in reader.fieldnames:
                raise SchemaError(f"{path}: missing required column {col[key]!r}")
        rows = list(reader)
    if not rows:
        raise CorpusError(f"{path}: no documents")

    if class_names is None:
        class_names = tuple(sorted({row[col["label"]] for row in rows}))
    else:
        class_names = tuple(class_names)
    label_to_index = {name: i for i, name in enumerate(class_names)}

    has_rationale = col["rationale"] in rows[0]
    docs = []
    for row in rows:
        doc_id = row[col["id"]]
        label_str = row[col["label"]]
        if label_str not in label_to_index:
            raise LabelError(
                f"row {doc_id!r}: unknown label {label_str!r} "
                f"(expected one of {list(class_names)})"
            )
        text = row[col["text"]]
        tokens = tuple(text.split())
        rationale = None
        if has_rationale and row[col["rationale"]]:
            rationale = frozenset(
                int(p) for p in row[col["rationale"]].split(";") if p != ""
            )
        docs.append(
            Document(
                id=doc_id,
                raw=text,
                tokens=tokens,
                label=label_to_index[label_str],
                gold_rationale=rationale,
            )
        )
    return LabeledCorpus(
        documents=tuple(docs),
        num_classes=len(class_names),
        class_names=class_names,
        provenance=str(path),
    )


def save_corpus(corpus: LabeledCorpus, path) -> None:
    """Write a corpus back to CSV with tokens whitespace-joined."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "text", "label", "rationale"])
        for doc in corpus.documents:
            rationale = ""
            if doc.gold_rationale is not None:
                rationale = ";".join(str(p) for p in sorted(doc.gold_rationale))
            writer.writerow(
                [doc.id, " ".join(doc.tokens), corpus.class_name(doc.label), rationale]
            )


def document_frequencies(corpus: LabeledCorpus) -> dict[str, int]:
    """Number of documents each token type occurs in."""
    df: dict[str, int] = {}
    for doc in corpus.documents:
        for tok in set(doc.tokens):
            df[tok] = df.get(tok, 0) + 1
    return df


def filter_infrequent(corpus: LabeledCorpus, min_df: int = 5) -> LabeledCorpus:
    """Drop token types whose document frequency is below ``min_df``.

    Documents reduced to zero tokens are retained (flagged via
    ``Document.empty``). Gold rationale positions are remapped to the
    surviving tokens; positions of removed tokens are dropped.
    """
    if min_df < 1:
        raise CorpusError(f"min_df must be >= 1, got {min_df}")
    if min_df == 1:
        return corpus
    df = document_frequencies(corpus)
    keep = {tok for tok, n in df.items() if n >= min_df}
    docs = []
    for doc in corpus.documents:
        kept_positions = [p for p, tok in enumerate(doc.tokens) if tok in keep]
        tokens = tuple(doc.tokens[p] for p in kept_positions)
        rationale = None
        if doc.gold_rationale is not None:
            old_to_new = {old: new for new, old in enumerate(kept_positions)}
            rationale = frozenset(
                old_to_new[p] for p in doc.gold_rationale if p in old_to_new
            )
        docs.append(replace(doc, tokens=tokens, gold_rationale=rationale))
    return replace(corpus, documents=tuple(docs))


def fit_length(
    tokens: Sequence[str], max_len: int, pad_token: str = PAD_TOKEN
) -> tuple[list[str], list[int]]:
    """Truncate or pad ``tokens`` to exactly ``max_len``.

    Longer sequences keep their head; shorter ones are right-padded.
    Returns ``(tokens, mask)`` with ``mask[t] = 1`` for real tokens.
    """
    if max_len < 1:
        raise CorpusError(f"max_len must be >= 1, got {max_len}")
    kept = list(tokens[:max_len])
    n_real = len(kept)
    kept.extend([pad_token] * (max_len - n_real))
    mask = [1] * n_real + [0] * (max_len - n_real)
    return kept, mask


def split_train_test(
    corpus: LabeledCorpus, test_fraction: float, seed: int
) -> tuple[LabeledCorpus, LabeledCorpus]:
    """Stratified, seeded train/test partition.

    Each class contributes ``round(test_fraction * class_size)`` test
    documents; the split fails when any class would leave either side
    empty or has fewer than two documents.
    """
    if not 0.0 < test_fraction < 1.0:
        raise StratificationError(
            f"test_fraction must be in (0, 1), got {test_fraction}"
        )
    by_class: dict[int, list[int]] = {}
    for idx, doc in enumerate(corpus.documents):
        by_class.setdefault(doc.label, []).append(idx)
    rng = np.random.default_rng(seed)
    test_indices: set[int] = set()
    for label in sorted(by_class):
        indices = np.array(by_class[label])
        n_c = len(indices)
        if n_c < 2:
            raise StratificationError(
                f"class {corpus.class_name(label)!r} has {n_c} document(s); "
                "need at least 2 to stratify"
            )
        n_test = int(math.floor(test_fraction * n_c + 0.5))
        if n_test == 0 or n_test == n_c:
            raise StratificationError(
                f"class {corpus.class_name(label)!r}: fraction {test_fraction} "
                f"of {n_c} documents leaves an empty partition"
            )
        chosen = rng.permutation(n_c)[:n_test]
        test_indices.update(int(indices[i]) for i in chosen)
    train_docs = tuple(
        d for i, d in enumerate(corpus.documents) if i not in test_indices
    )
    test_docs = tuple(d for i, d in enumerate(corpus.documents) if i in test_indices)
    train = replace(corpus, documents=train_docs, provenance=corpus.provenance + "[train]")
    test = replace(corpus, documents=test_docs, provenance=corpus.provenance + "[test]")
    return train, test


def synth_corpus(
    num_classes: int = 4,
    docs_per_class: int = 50,
    planted_per_class: int = 2,
    vocab_size: int = 100,
    noise_len: int = 20,
    seed: int = 0,
    planted_tokens: Sequence[Sequence[str]] | None = None,
) -> LabeledCorpus:
    """Generate a planted-token corpus with known gold rationales.

    Every document of class ``c`` contains a random non-empty subset of
    that class's planted tokens inserted among ``noise_len`` noise
    tokens drawn from a shared vocabulary. Gold rationales are the
    planted positions. Identical seeds give identical corpora.
    """
    if num_classes < 2:
        raise SynthSpecError(f"need at least 2 classes, got {num_classes}")
    if docs_per_class < 1 or planted_per_class < 1:
        raise SynthSpecError("docs_per_class and planted_per_class must be >= 1")
    if noise_len < 0 or vocab_size < 1:
        raise SynthSpecError("noise_len must be >= 0 and vocab_size >= 1")
    if planted_tokens is None:
        planted_tokens = [
            [f"plant{c}{chr(ord('a') + j)}" for j in range(planted_per_class)]
            for c in range(num_classes)
        ]
    else:
        planted_tokens = [list(toks) for toks in planted_tokens]
        if len(planted_tokens) != num_classes:
            raise SynthSpecError("planted_tokens must list one set per class")
        if any(len(toks) == 0 for toks in planted_tokens):
            raise SynthSpecError("every class needs at least one planted token")
    flat = [tok for toks in planted_tokens for tok in toks]
    if len(set(flat)) != len(flat):
        raise SynthSpecError("planted-token sets overlap between classes")

    noise_vocab = [f"w{i:03d}" for i in range(vocab_size)]
    planted_set = set(flat)
    if planted_set & set(noise_vocab):
        raise SynthSpecError("planted tokens collide with the noise vocabulary")

    rng = np.random.default_rng(seed)
    docs = []
    doc_idx = 0
    for c in range(num_classes):
        for _ in range(docs_per_class):
            tokens = [
                noise_vocab[int(i)]
                for i in rng.integers(0, vocab_size, size=noise_len)
            ]
            n_planted = int(rng.integers(1, len(planted_tokens[c]) + 1))
            chosen = rng.choice(len(planted_tokens[c]), size=n_planted, replace=False)
            for j in sorted(int(x) for x in chosen):
                pos = int(rng.integers(0, len(tokens) + 1))
                tokens.insert(pos, planted_tokens[c][j])
            rationale = frozenset(
                p for p, tok in enumerate(tokens) if tok in planted_set
            )
            docs.append(
                Document(
                    id=f"s{doc_idx:05d}",
                    raw=" ".join(tokens),
                    tokens=tuple(tokens),
                    label=c,
                    gold_rationale=rationale,
                )
            )
            doc_idx += 1
    return LabeledCorpus(
        documents=tuple(docs),
        num_classes=num_classes,
        class_names=tuple(f"class{c}" for c in range(num_classes)),
        provenance=f"synthetic(seed={seed})",
    )
