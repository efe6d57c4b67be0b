import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import hatescope as hs
from hatescope.ensemble import (
    CandidateScore,
    EnsembleError,
    EnsembleModel,
    cv_train,
    ensemble_predict,
    ensemble_predict_corpus,
    fold_weights,
    majority_vote,
    select_top_k,
    stratified_folds,
)
from hatescope.metrics import macro_f1
from hatescope.network import (
    Conv1D,
    Dense,
    Embedding,
    Flatten,
    MaxPool1D,
    Softmax,
    TrainConfig,
    doc_proba,
)


class TestMajorityVote:
    def test_simple_majority(self):
        dists = [[0.9, 0.1], [0.8, 0.2], [0.2, 0.8]]
        assert majority_vote(dists) == 0

    def test_tie_broken_by_mean_probability(self):
        dists = [[0.6, 0.4], [0.45, 0.55]]
        # one vote each; means are (0.525, 0.475) so class 0 wins
        assert majority_vote(dists) == 0

    def test_unanimous(self):
        dists = [[0.1, 0.9], [0.2, 0.8], [0.4, 0.6]]
        assert majority_vote(dists) == 1

    def test_remaining_tie_lowest_index(self):
        dists = [[0.5, 0.5], [0.5, 0.5]]
        assert majority_vote(dists) == 0

    def test_needs_two_members(self):
        with pytest.raises(EnsembleError):
            majority_vote([[1.0, 0.0]])

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 10_000))
    def test_member_order_invariance(self, seed):
        rng = np.random.default_rng(seed)
        m, k = int(rng.integers(2, 7)), int(rng.integers(2, 5))
        dists = rng.dirichlet(np.ones(k), size=m)
        base = majority_vote(dists)
        perm = rng.permutation(m)
        assert majority_vote(dists[perm]) == base


class TestSelectTopK:
    def _candidates(self):
        return [
            CandidateScore("m1", macro_f1=0.86, mcc=0.80, log_norm=2.5),
            CandidateScore("m2", macro_f1=0.85, mcc=0.77, log_norm=2.2),
            CandidateScore("m3", macro_f1=0.87, mcc=0.81, log_norm=2.4),
            CandidateScore("m4", macro_f1=0.86, mcc=0.79, log_norm=2.1),
        ]

    def test_worst_excluded_from_top_three(self):
        kept = select_top_k(self._candidates(), 3)
        assert [c.model_id for c in kept] == ["m3", "m4", "m1"]
        assert all(c.model_id != "m2" for c in kept)

    def test_tie_broken_by_lower_log_norm(self):
        candidates = [
            CandidateScore("a", 0.9, 0.8, 3.0),
            CandidateScore("b", 0.9, 0.8, 1.0),
        ]
        assert select_top_k(candidates, 1)[0].model_id == "b"

    def test_k_equal_count_keeps_all_ordered(self):
        kept = select_top_k(self._candidates(), 4)
        assert [c.model_id for c in kept] == ["m3", "m4", "m1", "m2"]

    def test_nonpositive_k_rejected(self):
        with pytest.raises(EnsembleError):
            select_top_k(self._candidates(), 0)

    def test_k_beyond_count_rejected(self):
        with pytest.raises(EnsembleError):
            select_top_k(self._candidates(), 5)


class TestFoldWeights:
    def test_equal_scores_give_uniform(self):
        assert np.allclose(fold_weights([0.5, 0.5, 0.5]), 1 / 3)

    def test_zero_fold_renormalized(self):
        w = fold_weights([0.0, 1.0, 1.0])
        assert w.tolist() == [0.0, 0.5, 0.5]

    def test_all_zero_uniform_fallback(self):
        assert np.allclose(fold_weights([0.0, 0.0]), 0.5)

    def test_negative_rejected(self):
        with pytest.raises(EnsembleError):
            fold_weights([-0.1, 0.5])


def _two_member_ensemble(dists_by_member):
    class _Stub:
        def __init__(self, dist):
            self.dist = np.asarray(dist, dtype=np.float64)
            self.num_classes = len(dist)

    members = tuple(_Stub(d) for d in dists_by_member)
    return members


class TestEnsemblePredict:
    def _manual_ensemble(self, dists, weights, combine):
        # bypass doc_proba by stubbing members through member_distributions
        import hatescope.ensemble as ens_mod

        members = _two_member_ensemble(dists)
        ens = EnsembleModel(members=members, weights=np.asarray(weights),
                            combine=combine)
        original = ens_mod.doc_proba
        ens_mod.doc_proba = lambda m, tokens: m.dist
        try:
            return ensemble_predict(ens, ["tok"])
        finally:
            ens_mod.doc_proba = original

    def test_weighted_soft_mixture(self):
        dist, label = self._manual_ensemble(
            [[0.8, 0.2], [0.6, 0.4]], [0.5, 0.5], "weighted-soft"
        )
        assert np.allclose(dist, [0.7, 0.3])
        assert label == 0

    def test_dominant_weight_equals_member(self):
        dist, label = self._manual_ensemble(
            [[0.1, 0.9], [0.7, 0.3]], [1.0, 0.0], "weighted-soft"
        )
        assert np.allclose(dist, [0.1, 0.9])
        assert label == 1

    def test_weight_scaling_invariance(self):
        a = self._manual_ensemble([[0.8, 0.2], [0.4, 0.6]], [0.3, 0.7], "weighted-soft")
        b = self._manual_ensemble([[0.8, 0.2], [0.4, 0.6]], [0.6, 1.4], "weighted-soft")
        assert np.allclose(a[0], b[0])
        assert a[1] == b[1]

    def test_hard_majority_vote_shares(self):
        dist, label = self._manual_ensemble(
            [[0.9, 0.1], [0.8, 0.2]], [0.5, 0.5], "hard-majority"
        )
        assert np.allclose(dist, [1.0, 0.0])
        assert label == 0

    def test_uniform_weights_over_identical_members(self):
        member = [0.3, 0.7]
        dist, label = self._manual_ensemble(
            [member, member, member], [1, 1, 1], "weighted-soft"
        )
        assert np.allclose(dist, member)
        assert label == int(np.argmax(member))

    def test_weights_normalized_on_construction(self):
        members = _two_member_ensemble([[1, 0], [0, 1]])
        ens = EnsembleModel(members=members, weights=np.array([2.0, 2.0]))
        assert np.allclose(ens.weights, [0.5, 0.5])

    def test_single_member_rejected(self):
        with pytest.raises(EnsembleError):
            EnsembleModel(members=_two_member_ensemble([[1, 0]]),
                          weights=np.array([1.0]))


class TestStratifiedFolds:
    def test_every_fold_gets_every_class(self):
        labels = np.array([0] * 12 + [1] * 12)
        folds = stratified_folds(labels, 3, seed=0)
        for m in range(3):
            got = labels[folds == m]
            assert set(got.tolist()) == {0, 1}

    def test_class_too_small_rejected(self):
        with pytest.raises(EnsembleError):
            stratified_folds(np.array([0, 0, 1]), 2, seed=0)


class TestCvTrain:
    def _corpus(self):
        return hs.synth_corpus(
            num_classes=2, docs_per_class=40, planted_per_class=1,
            vocab_size=10, noise_len=4, seed=21,
        )

    def _specs(self):
        return [
            Embedding(8), Conv1D(8, 3, "relu"), MaxPool1D(2), Flatten(),
            Dense(2, "linear"), Softmax(2),
        ]

    def test_weights_sum_to_one_and_members_count(self):
        corpus = self._corpus()
        ens = cv_train(
            corpus, 3, self._specs(),
            TrainConfig(optimizer="adam", learning_rate=0.02, epochs=6, seed=0),
            max_len=8, combine="weighted-soft",
        )
        assert len(ens.members) == 3
        assert ens.weights.sum() == pytest.approx(1.0, abs=1e-12)
        assert len(ens.fold_scores) == 3

    def test_ensemble_close_to_best_member(self):
        corpus = self._corpus()
        train_set, test_set = hs.split_train_test(corpus, 0.2, seed=1)
        ens = cv_train(
            train_set, 3, self._specs(),
            TrainConfig(optimizer="adam", learning_rate=0.02, epochs=12, seed=0),
            max_len=8, combine="weighted-soft",
        )
        y = test_set.labels()
        ens_f1 = macro_f1(y, ensemble_predict_corpus(ens, test_set.documents), 2)
        member_f1 = max(
            macro_f1(
                y,
                np.array([
                    int(np.argmax(doc_proba(m, d.tokens)))
                    for d in test_set.documents
                ]),
                2,
            )
            for m in ens.members
        )
        assert ens_f1 >= member_f1 - 0.02
