import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hatescope.features import (
    EmbeddingFormatError,
    FeatureError,
    TfidfFeaturizer,
    Vocabulary,
    embed_sequence,
    featurizer_from_dict,
    featurizer_to_dict,
    load_embedding_table,
)


class TestVocabulary:
    def test_frequency_ranking_with_cap(self):
        docs = [["a"] * 5 + ["b"] * 4 + ["c"] * 3 + ["d"] * 2 + ["e"]]
        vocab = Vocabulary.from_documents(docs, max_size=3)
        assert len(vocab) == 5  # 3 tokens + pad + unk
        assert vocab.tokens == ["<pad>", "<unk>", "a", "b", "c"]

    def test_tie_broken_lexicographically(self):
        vocab = Vocabulary.from_documents([["zeta", "alpha"]], max_size=1)
        assert "alpha" in vocab
        assert "zeta" not in vocab

    def test_specials_fixed(self):
        vocab = Vocabulary.from_documents([["x"]])
        assert vocab.index("<pad>") == 0
        assert vocab.index("<unk>") == 1
        assert vocab.index("never-seen") == 1

    def test_encode_decode(self):
        vocab = Vocabulary.from_documents([["a", "b"]])
        ids = vocab.encode(["a", "b", "zzz", "<pad>"])
        assert ids.tolist() == [2, 3, 1, 0]
        assert vocab.decode(ids) == ["a", "b", "<unk>", "<pad>"]

    def test_empty_corpus_errors(self):
        with pytest.raises(FeatureError):
            Vocabulary.from_documents([])


def tfidf_oracle(doc_tokens, all_docs, char_range, use_words):
    """Independent loop computation of tf * (ln((1+N)/(1+df)) + 1), L2
    normalized over the fitted feature space."""
    def feats(tokens):
        out = {}
        if use_words:
            for t in tokens:
                out[("w", t)] = out.get(("w", t), 0) + 1
        if char_range and tokens:
            text = " ".join(tokens)
            for n in range(char_range[0], char_range[1] + 1):
                for i in range(len(text) - n + 1):
                    key = ("c", text[i : i + n])
                    out[key] = out.get(key, 0) + 1
        return out

    n_docs = len(all_docs)
    df = {}
    for tokens in all_docs:
        for key in feats(tokens):
            df[key] = df.get(key, 0) + 1
    weights = {}
    for key, tf in feats(doc_tokens).items():
        if key not in df:
            continue
        weights[key] = tf * (math.log((1 + n_docs) / (1 + df[key])) + 1.0)
    norm = math.sqrt(sum(w * w for w in weights.values()))
    if norm > 0:
        weights = {k: w / norm for k, w in weights.items()}
    return weights


class TestTfidf:
    def test_document_frequency_counts_docs(self):
        docs = [["shared", "x"], ["shared", "y"]]
        model = TfidfFeaturizer(char_ngram_range=None).fit(docs)
        assert model.df_[model.feature_index_[("w", "shared")]] == 2
        assert model.df_[model.feature_index_[("w", "x")]] == 1

    def test_char_window_semantics(self):
        model = TfidfFeaturizer(
            char_ngram_range=(2, 3), use_word_unigrams=False
        ).fit([["ab"]])
        keys = set(model.feature_index_)
        assert keys == {("c", "ab")}

    def test_single_characters_only(self):
        model = TfidfFeaturizer(
            char_ngram_range=(1, 1), use_word_unigrams=False
        ).fit([["ab"]])
        assert set(model.feature_index_) == {("c", "a"), ("c", "b")}

    def test_single_doc_idf_is_one(self):
        model = TfidfFeaturizer(char_ngram_range=None).fit([["only"]])
        assert model.idf_[0] == pytest.approx(1.0)

    def test_unknown_doc_gives_zero_vector(self):
        model = TfidfFeaturizer(char_ngram_range=None).fit([["known"]])
        vec = model.transform([["unseen", "tokens"]])
        assert vec.nnz == 0

    def test_unit_norm_when_nonzero(self):
        rng = np.random.default_rng(0)
        docs = [
            [f"t{int(i)}" for i in rng.integers(0, 12, size=6)] for _ in range(8)
        ]
        X = TfidfFeaturizer().fit(docs).transform(docs)
        norms = np.sqrt(np.asarray(X.multiply(X).sum(axis=1)).ravel())
        assert np.all(np.abs(norms - 1.0) < 1e-9)

    def test_fit_corpus_has_no_unseen_features(self):
        docs = [["a", "b"], ["b", "c"], ["c", "d"]]
        model = TfidfFeaturizer().fit(docs)
        X = model.transform(docs)
        assert np.all(np.asarray(X.sum(axis=1)).ravel() > 0)

    def test_matches_oracle_on_random_corpus(self):
        rng = np.random.default_rng(1)
        vocab = ["ab", "bc", "cat", "dog", "eel"]
        docs = [
            [vocab[int(i)] for i in rng.integers(0, len(vocab), size=4)]
            for _ in range(5)
        ]
        char_range = (2, 3)
        model = TfidfFeaturizer(char_ngram_range=char_range).fit(docs)
        X = model.transform(docs)
        for row, tokens in enumerate(docs):
            expected = tfidf_oracle(tokens, docs, char_range, True)
            got = X.getrow(row).toarray().ravel()
            for key, weight in expected.items():
                col = model.feature_index_[key]
                assert got[col] == pytest.approx(weight, abs=1e-12)
            assert np.count_nonzero(got) == len(expected)

    def test_transform_before_fit_errors(self):
        with pytest.raises(FeatureError, match="not fitted"):
            TfidfFeaturizer().transform([["x"]])

    def test_bad_range_rejected(self):
        with pytest.raises(FeatureError):
            TfidfFeaturizer(char_ngram_range=(3, 2)).fit([["x"]])

    def test_state_roundtrip(self):
        docs = [["aa", "bb"], ["bb", "cc"]]
        model = TfidfFeaturizer(char_ngram_range=(2, 2)).fit(docs)
        clone = featurizer_from_dict(featurizer_to_dict(model))
        a = model.transform(docs).toarray()
        b = clone.transform(docs).toarray()
        assert np.array_equal(a, b)

    def test_sklearn_get_params(self):
        model = TfidfFeaturizer(char_ngram_range=(1, 2), use_word_unigrams=False)
        params = model.get_params()
        assert params["char_ngram_range"] == (1, 2)
        assert params["use_word_unigrams"] is False


class TestEmbeddingTable:
    def _write(self, tmp_path, text):
        path = tmp_path / "vectors.txt"
        path.write_text(text, encoding="utf-8")
        return path

    def test_load(self, tmp_path):
        path = self._write(tmp_path, "2 3\nfoo 1.0 2.0 3.0\nbar 0.5 0.5 0.5\n")
        table = load_embedding_table(path)
        assert table.dim == 3
        assert len(table) == 2
        assert np.allclose(table.lookup("foo"), [1.0, 2.0, 3.0])

    def test_dimension_mismatch_names_line(self, tmp_path):
        path = self._write(tmp_path, "2 3\nfoo 1.0 2.0 3.0\nbar 0.5 0.5\n")
        with pytest.raises(EmbeddingFormatError, match=":3"):
            load_embedding_table(path)

    def test_count_mismatch(self, tmp_path):
        path = self._write(tmp_path, "3 2\nfoo 1.0 2.0\n")
        with pytest.raises(EmbeddingFormatError, match="declares 3"):
            load_embedding_table(path)

    def test_unknown_token_zero_fallback(self, tmp_path):
        path = self._write(tmp_path, "1 2\nfoo 1.0 2.0\n")
        table = load_embedding_table(path)
        assert np.array_equal(table.lookup("nope"), np.zeros(2))

    def test_embed_sequence_shapes(self, tmp_path):
        path = self._write(tmp_path, "2 4\na 1 2 3 4\nb 5 6 7 8\n")
        table = load_embedding_table(path)
        mat = embed_sequence(["a", "b", "a"], table)
        assert mat.shape == (3, 4)
        assert np.array_equal(mat[0], mat[2])

    def test_all_pad_is_zero_matrix(self, tmp_path):
        path = self._write(tmp_path, "1 2\na 1 1\n")
        table = load_embedding_table(path)
        mat = embed_sequence(["<pad>", "<pad>"], table)
        assert np.array_equal(mat, np.zeros((2, 2)))

    @given(st.permutations(["a", "b", "c"]))
    def test_rowwise_independence(self, order):
        table_vectors = {
            "a": np.array([1.0, 0.0]),
            "b": np.array([0.0, 1.0]),
            "c": np.array([1.0, 1.0]),
        }
        from hatescope.features import EmbeddingTable

        table = EmbeddingTable(dim=2, vectors=table_vectors)
        base = embed_sequence(["a", "b", "c"], table)
        permuted = embed_sequence(list(order), table)
        lookup = {"a": 0, "b": 1, "c": 2}
        for i, tok in enumerate(order):
            assert np.array_equal(permuted[i], base[lookup[tok]])
