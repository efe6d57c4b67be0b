"""Acceptance suite: every criterion asserted at its stated tolerance.

Each test prints one `ACCEPTANCE <n> ...: PASS` line when it holds
(run with `pytest -s` to see them on success).
"""

import json
import time

import numpy as np
import pytest

import hatescope as hs
from hatescope.agreement import AnnotationMatrix, overall_kappa
from hatescope.cli import main as cli_main
from hatescope.ensemble import cv_train, ensemble_predict_corpus, majority_vote
from hatescope.explain import LrpConfig, leave_one_out, lrp_relevance, sa_relevance
from hatescope.faithfulness import (
    Rationale,
    comprehensiveness,
    extract_rationale,
    gold_rationale,
    rationale_match,
    sufficiency,
)
from hatescope.metrics import class_report, macro_f1, mcc, mcc_degenerate
from hatescope.network import (
    Conv1D,
    Dense,
    Embedding,
    Flatten,
    MaxPool1D,
    Softmax,
    TrainConfig,
    doc_proba,
    forward,
    input_gradient,
)
from hatescope.network.layers import (
    Conv1DLayer,
    DenseLayer,
    EmbeddingLayer,
    lrp_linear,
)

from conftest import (
    fd_input_gradient,
    random_small_model,
    randomize_biases,
    zero_biases,
)

from test_agreement import kappa_transcription, random_matrix


def test_acceptance_1_kappa_oracle_suite():
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    checked = 0
    while checked < 200:
        mat = random_matrix(rng, n_max=6, m_max=4, k_max=4)
        try:
            expected = kappa_transcription(mat.x.tolist(), mat.m)
        except ZeroDivisionError:
            continue
        assert abs(overall_kappa(mat) - expected) <= 1e-12
        checked += 1
    perfect = AnnotationMatrix(
        x=np.array([[3, 0, 0], [0, 3, 0], [0, 0, 3]]), m=3
    )
    assert overall_kappa(perfect) == 1.0
    split = AnnotationMatrix(x=np.array([[1, 1], [1, 1]]), m=2)
    assert overall_kappa(split) == -1.0
    elapsed = time.perf_counter() - start
    assert elapsed < 1.0, f"kappa suite took {elapsed:.2f}s"
    print(f"ACCEPTANCE 1 (kappa oracle suite, 200 matrices, {elapsed:.2f}s): PASS")


def test_acceptance_2_gradient_checks():
    start = time.perf_counter()
    rng = np.random.default_rng(42)
    worst = 0.0
    for _ in range(100):
        model, ids = random_small_model(rng)
        target = int(rng.integers(0, 3))
        analytic = input_gradient(model, ids, target)
        numeric = fd_input_gradient(model, ids, target)
        scale = max(np.abs(numeric).max(), 1e-12)
        worst = max(worst, float(np.abs(analytic - numeric).max() / scale))
    elapsed = time.perf_counter() - start
    assert worst < 1e-4, f"max relative gradient error {worst:.3e}"
    assert elapsed < 30.0, f"gradient checks took {elapsed:.1f}s"
    print(
        f"ACCEPTANCE 2 (gradient checks, 100 models, worst {worst:.2e}, "
        f"{elapsed:.1f}s): PASS"
    )


def test_acceptance_3_lrp_conservation():
    start = time.perf_counter()
    rng = np.random.default_rng(7)

    # per-layer conservation with delta=1 on traced models with biases
    for _ in range(100):
        model, ids = random_small_model(rng)
        randomize_biases(model, rng)
        _, trace = forward(model, ids, trace=True)
        target = int(rng.integers(0, 3))
        r = np.zeros(3)
        r[target] = trace.logits[target]
        for idx in range(len(model.layers) - 2, -1, -1):
            layer = model.layers[idx]
            r_in = layer.lrp(r, trace.records[idx].cache, 0.001, 1.0)
            if isinstance(layer, (DenseLayer, Conv1DLayer)):
                incoming = float(r.sum())
                assert abs(float(r_in.sum()) - incoming) <= 1e-9 * max(
                    abs(incoming), 1e-12
                ), f"{layer.name} not conserving"
            r = r_in
            if isinstance(layer, EmbeddingLayer):
                break

    # end-to-end: with zero biases and epsilon 0 the input relevance sums
    # to the class score
    from hatescope.explain import lrp_input_relevance

    for _ in range(100):
        model, ids = random_small_model(rng)
        zero_biases(model)
        _, trace = forward(model, ids, trace=True)
        target = int(rng.integers(0, 3))
        rel = lrp_input_relevance(
            model, ids, target, LrpConfig(epsilon=0.0, delta=0.0)
        )
        score = float(trace.logits[target])
        assert abs(float(rel.sum()) - score) <= 1e-9 * max(abs(score), 1e-12)

    # the three hand-worked redistribution cases, exact
    r = lrp_linear(
        np.array([1.0, 1.0]), np.array([[2.0], [-1.0]]), np.array([0.0]),
        np.array([1.0]), np.array([1.0]), fan_in=2, epsilon=0.0, delta=1.0,
    )
    assert r.tolist() == [2.0, -1.0] and r.sum() == 1.0
    r = lrp_linear(
        np.array([1.0, 1.0]), np.array([[2.0], [-1.0]]), np.array([0.0]),
        np.array([1.0]), np.array([1.0]), fan_in=2, epsilon=0.01, delta=1.0,
    )
    assert abs(r[0] - 2.005 / 1.01) < 1e-15
    assert abs(r[1] - (-0.995 / 1.01)) < 1e-15
    assert abs(r.sum() - 1.0) < 1e-15
    r = lrp_linear(
        np.array([0.5, 0.5]), np.array([[1.0], [1.0]]), np.array([0.5]),
        np.array([1.5]), np.array([1.5]), fan_in=2, epsilon=0.0, delta=1.0,
    )
    assert r.tolist() == [0.75, 0.75] and r.sum() == 1.5

    elapsed = time.perf_counter() - start
    assert elapsed < 30.0, f"conservation suite took {elapsed:.1f}s"
    print(f"ACCEPTANCE 3 (LRP conservation, 100+100 models, {elapsed:.1f}s): PASS")


def test_acceptance_4_sa_identity():
    rng = np.random.default_rng(42)  # same model set as the gradient checks
    for _ in range(100):
        model, ids = random_small_model(rng)
        target = int(rng.integers(0, 3))
        tokens = [model.vocab.token(int(i)) for i in ids]
        doc = hs.Document(
            id="sa", raw=" ".join(tokens), tokens=tuple(tokens), label=0
        )
        rel = sa_relevance(model, doc, target)
        assert all(s >= 0.0 for s in rel.scores)
        grad = input_gradient(model, ids, target)
        norm_sq = float((grad**2).sum())
        assert abs(rel.total_relevance - norm_sq) <= 1e-9 * max(norm_sq, 1e-300)
        assert abs(sum(rel.scores) - rel.total_relevance) <= 1e-9 * max(
            rel.total_relevance, 1e-300
        )
    print("ACCEPTANCE 4 (SA squared-gradient identity, 100 models): PASS")


@pytest.fixture(scope="module")
def experiment(synth_experiment, trained_conv_lstm):
    corpus, train_set, test_set = synth_experiment
    clf, seconds = trained_conv_lstm
    return corpus, train_set, test_set, clf, seconds


def test_acceptance_5_end_to_end_synthetic(experiment):
    _, _, test_set, clf, seconds = experiment
    model = clf.graph_

    # (a) held-out macro F1 on one CPU core within the time budget
    assert seconds < 300.0, f"training took {seconds:.0f}s"
    test_docs = [list(d.tokens) for d in test_set.documents]
    y = test_set.labels()
    pred = clf.predict(test_docs)
    f1 = macro_f1(y, pred, test_set.num_classes)
    assert f1 >= 0.95, f"held-out macro F1 {f1:.3f}"

    planted = {c: {f"plant{c}a", f"plant{c}b"} for c in range(4)}
    rng = np.random.default_rng(99)
    top3_hits = 0
    n_correct = 0
    e_lrp, e_rand = [], []
    matches = []
    for doc, label, p_label in zip(test_set.documents, y, pred):
        if p_label != label:
            continue
        n_correct += 1
        rel = lrp_relevance(model, doc, int(label))
        order = np.argsort(np.array(rel.scores))[::-1]
        top3 = {rel.tokens[i] for i in order[:3]}
        if top3 & planted[int(label)]:
            top3_hits += 1
        extracted = extract_rationale(rel, doc, 0.2)
        e_lrp.append(comprehensiveness(model, doc, extracted, int(label)))
        random_positions = frozenset(
            int(i) for i in rng.choice(
                len(rel.scores), size=len(extracted.positions), replace=False
            )
        )
        random_rationale = Rationale(
            doc_id=doc.id, positions=random_positions, source="extracted",
            fraction=extracted.fraction,
        )
        e_rand.append(comprehensiveness(model, doc, random_rationale, int(label)))
        match = rationale_match(extracted, gold_rationale(doc))
        if match is not None:
            matches.append(match)

    # (b) LRP puts a planted token of the true class in the top 3
    top3_rate = top3_hits / n_correct
    assert top3_rate >= 0.9, f"top-3 planted rate {top3_rate:.3f}"
    # (c) LRP rationales beat random same-size rationales by >= 0.1
    margin = float(np.mean(e_lrp) - np.mean(e_rand))
    assert margin >= 0.1, f"comprehensiveness margin {margin:.3f}"
    # (d) extracted rationales recover the gold planted positions
    match_rate = float(np.mean(matches))
    assert match_rate >= 0.8, f"rationale match rate {match_rate:.3f}"
    print(
        f"ACCEPTANCE 5 (synthetic end-to-end: F1 {f1:.3f} in {seconds:.0f}s, "
        f"top3 {top3_rate:.2f}, margin {margin:.2f}, match {match_rate:.2f}): PASS"
    )


def test_acceptance_6_ensemble_behavior(experiment):
    _, train_set, test_set, _, _ = experiment
    specs = [
        Embedding(12), Conv1D(16, 3, "relu"), MaxPool1D(2), Flatten(),
        Dense(4, "linear"), Softmax(4),
    ]
    ens = cv_train(
        train_set, 5, specs,
        TrainConfig(optimizer="adam", learning_rate=0.01, epochs=5, seed=13),
        max_len=24, combine="weighted-soft",
    )
    assert abs(float(ens.weights.sum()) - 1.0) <= 1e-12
    y = test_set.labels()
    ens_f1 = macro_f1(y, ensemble_predict_corpus(ens, test_set.documents), 4)
    member_f1 = max(
        macro_f1(
            y,
            np.array([
                int(np.argmax(doc_proba(m, d.tokens)))
                for d in test_set.documents
            ]),
            4,
        )
        for m in ens.members
    )
    assert ens_f1 >= member_f1 - 0.02, (
        f"ensemble {ens_f1:.3f} vs best member {member_f1:.3f}"
    )

    rng = np.random.default_rng(50)
    for _ in range(50):
        m, k = int(rng.integers(2, 8)), int(rng.integers(2, 6))
        dists = rng.dirichlet(np.ones(k), size=m)
        base = majority_vote(dists)
        assert majority_vote(dists[rng.permutation(m)]) == base
    print(
        f"ACCEPTANCE 6 (5-fold CV ensemble: sum(alpha)=1, "
        f"F1 {ens_f1:.3f} >= best member {member_f1:.3f} - 0.02, "
        "vote order-invariant x50): PASS"
    )


def test_acceptance_7_faithfulness_identities(experiment):
    _, _, test_set, clf, _ = experiment
    model = clf.graph_
    for doc in test_set.documents:
        n = len(doc.tokens)
        whole = Rationale(
            doc_id=doc.id, positions=frozenset(range(n)), source="extracted",
            fraction=1.0,
        )
        empty = Rationale(
            doc_id=doc.id, positions=frozenset(), source="extracted", fraction=0.0,
        )
        assert sufficiency(model, doc, whole, doc.label) == 0.0
        assert comprehensiveness(model, doc, empty, doc.label) == 0.0
    print(
        f"ACCEPTANCE 7 (faithfulness identities on {len(test_set)} docs, exact): PASS"
    )


def test_acceptance_8_multiclass_mcc():
    rng = np.random.default_rng(123)
    checked = 0
    while checked < 500:
        cm = rng.integers(0, 25, size=(2, 2))
        tp, fn, fp, tn = cm[0, 0], cm[0, 1], cm[1, 0], cm[1, 1]
        num = tp * tn - fp * fn
        den_sq = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
        if mcc_degenerate(cm):
            assert mcc(cm) == 0.0
        else:
            binary = num / np.sqrt(den_sq)
            assert abs(mcc(cm) - binary) <= 1e-12
        checked += 1
    diagonal = np.diag([5, 8, 2, 4])
    assert class_report(diagonal)["macro_f1"] == 1.0
    assert mcc(diagonal) == pytest.approx(1.0, abs=1e-12)
    print("ACCEPTANCE 8 (multiclass MCC vs binary formula, 500 matrices): PASS")


def test_acceptance_9_cli_determinism(tmp_path):
    data_dir = tmp_path / "data"
    assert cli_main([
        "synth", "--classes", "2", "--per-class", "20", "--planted", "1",
        "--vocab-size", "12", "--noise-len", "5", "--seed", "3",
        "-o", str(data_dir),
    ]) == 0
    cfg_path = tmp_path / "run.cfg"
    cfg_path.write_text(
        "[model]\narchitecture = conv-lstm\nembedding_dim = 8\n"
        "conv_filters = 8\npool_size = 2\nlstm_units = 8\ndense_units =\n"
        "dropout = 0.1\nnoise_std = 0.05\n"
        "[preprocess]\nmax_len = 10\n"
        "[train]\noptimizer = adam\nlearning_rate = 0.02\nepochs = 3\n"
        "seed = 7\ntest_fraction = 0.2\n",
        encoding="utf-8",
    )
    corpus_file = str(data_dir / "corpus.csv")
    outputs = []
    for run in ("a", "b"):
        out = tmp_path / f"run-{run}"
        assert cli_main([
            "train", "--config", str(cfg_path), "--data", corpus_file,
            "-o", str(out),
        ]) == 0
        outputs.append(out)
    metrics_a = (outputs[0] / "metrics.json").read_bytes()
    metrics_b = (outputs[1] / "metrics.json").read_bytes()
    assert metrics_a == metrics_b

    rel_outputs = []
    for run in ("a", "b"):
        out = tmp_path / f"rel-{run}"
        assert cli_main([
            "explain", "--model", str(outputs[0] / "model.ckpt"),
            "--data", corpus_file, "--doc-id", "s00000", "--method", "lrp",
            "-o", str(out),
        ]) == 0
        rel_outputs.append(out / "relevance" / "s00000_lrp.json")
    assert rel_outputs[0].read_bytes() == rel_outputs[1].read_bytes()
    print("ACCEPTANCE 9 (CLI determinism: byte-identical metrics and relevance): PASS")


def test_acceptance_10_leave_one_out_probability(experiment):
    _, _, test_set, clf, _ = experiment
    model = clf.graph_
    gaps = []
    checked = 0
    for doc in test_set.documents:
        if checked >= 100:
            break
        target = int(np.argmax(doc_proba(model, doc.tokens)))
        rel = leave_one_out(model, doc, target)
        base = float(doc_proba(model, doc.tokens)[target])
        gaps.append(abs(base - sum(rel.scores)))
        best = int(np.argmax(np.array(rel.scores)))
        if rel.scores[best] <= 0:
            continue
        reduced = [t for i, t in enumerate(doc.tokens) if i != best]
        after = float(doc_proba(model, reduced)[target])
        assert after <= base + 1e-9
        checked += 1
    assert checked >= 90  # the planted-token models leave plenty of positive cases
    print(
        "ACCEPTANCE 10 (leave-one-out: removing the top positive token never "
        f"raises p_c on {checked} docs; mean |p_c - sum deltas| = "
        f"{np.mean(gaps):.3f}, reported, not asserted): PASS"
    )
