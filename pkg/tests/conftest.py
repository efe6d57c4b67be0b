import time

import numpy as np
import pytest

import hatescope as hs
from hatescope.features import Vocabulary
from hatescope.network import (
    BiRecurrent,
    Conv1D,
    Dense,
    Embedding,
    Flatten,
    MaxPool1D,
    NeuralTextClassifier,
    Recurrent,
    Softmax,
    build_model,
)

SYNTH_SEED = 11
SPLIT_SEED = 3


@pytest.fixture(scope="session")
def synth_experiment():
    """The planted-token benchmark corpus: K=4, 200 docs/class, 2 planted
    tokens/class, 20 noise tokens, fixed seed, stratified 80/20 split."""
    corpus = hs.synth_corpus(
        num_classes=4,
        docs_per_class=200,
        planted_per_class=2,
        vocab_size=50,
        noise_len=20,
        seed=SYNTH_SEED,
    )
    train_set, test_set = hs.split_train_test(corpus, 0.2, seed=SPLIT_SEED)
    return corpus, train_set, test_set


@pytest.fixture(scope="session")
def trained_conv_lstm(synth_experiment):
    """Conv-LSTM trained on the benchmark corpus; returns (clf, seconds)."""
    _, train_set, _ = synth_experiment
    docs = [list(d.tokens) for d in train_set.documents]
    clf = NeuralTextClassifier(
        architecture="conv-lstm",
        embedding_dim=16,
        conv_filters=(24,),
        kernel_size=3,
        pool_size=2,
        lstm_units=(24,),
        dense_units=(32,),
        dropout=0.1,
        noise_std=0.05,
        max_len=24,
        optimizer="adam",
        learning_rate=0.01,
        epochs=8,
        batch_size=32,
        seed=5,
    )
    start = time.time()
    clf.fit(docs, train_set.labels())
    return clf, time.time() - start


_TOKENS = ["alpha", "beta", "gamma", "delta", "echo", "fox", "golf", "hotel"]


def small_model_vocab():
    return Vocabulary(_TOKENS)


def random_small_model(rng, num_classes=3, smooth_only=True):
    """Random compact token model for gradient/relevance checks.

    Sequence length <= 6 and embedding dim <= 8. Dense/conv activations
    stay smooth (tanh/linear) so central differences are valid near the
    evaluation point.
    """
    vocab = small_model_vocab()
    max_len = int(rng.integers(3, 7))
    dim = int(rng.integers(2, 9))
    act = "tanh" if smooth_only else str(rng.choice(["tanh", "relu"]))
    kind = int(rng.integers(0, 6))
    if kind == 0:
        hidden = [Flatten(), Dense(int(rng.integers(3, 9)), act)]
    elif kind == 1:
        hidden = [Conv1D(int(rng.integers(2, 6)), 3, act), Flatten()]
    elif kind == 2:
        hidden = [Conv1D(int(rng.integers(2, 6)), 3, act), MaxPool1D(2), Flatten()]
    elif kind == 3:
        hidden = [Recurrent(int(rng.integers(2, 7)))]
    elif kind == 4:
        hidden = [BiRecurrent(int(rng.integers(2, 5)))]
    else:
        hidden = [
            Conv1D(int(rng.integers(2, 6)), 3, act),
            Recurrent(int(rng.integers(2, 7))),
        ]
    specs = [Embedding(dim)] + hidden + [
        Dense(num_classes, "linear"),
        Softmax(num_classes),
    ]
    model = build_model(
        specs,
        num_classes=num_classes,
        seed=int(rng.integers(0, 2**31)),
        vocab=vocab,
        max_len=max_len,
    )
    # distinct non-special ids so each position owns its embedding row
    ids = 2 + rng.permutation(len(_TOKENS))[:max_len]
    return model, ids


def randomize_biases(model, rng, scale=0.3):
    for layer in model.layers:
        for key, arr in layer.weights.items():
            if key.startswith("b"):
                arr[...] = rng.normal(0.0, scale, size=arr.shape)


def zero_biases(model):
    for layer in model.layers:
        for key, arr in layer.weights.items():
            if key.startswith("b"):
                arr[...] = 0.0


def fd_input_gradient(model, ids, target_class, h=1e-5):
    """Central-difference gradient over the embedded input, computed by
    nudging the embedding rows the (distinct) ids occupy."""
    from hatescope.network import forward

    E = model.layers[0].weights["E"]
    grad = np.zeros((len(ids), E.shape[1]))

    def score():
        _, trace = forward(model, ids, mode="eval", trace=True)
        return trace.logits[target_class]

    for t, row in enumerate(ids):
        for d in range(E.shape[1]):
            orig = E[row, d]
            E[row, d] = orig + h
            up = score()
            E[row, d] = orig - h
            down = score()
            E[row, d] = orig
            grad[t, d] = (up - down) / (2 * h)
    return grad
