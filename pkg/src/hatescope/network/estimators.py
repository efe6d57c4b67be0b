"""Scikit-learn style classifiers: the neural sequence models, the
softmax-regression baseline, and multinomial naive Bayes.

The neural presets mirror the usual desk-scale stacks: CNN (conv/pool
blocks into dense), Bi-LSTM (stacked bidirectional recurrence), and
Conv-LSTM (conv/pool blocks feeding a recurrent tail). Embedding
weights start from a supplied table when given, else uniform in
[-0.05, 0.05].
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator, ClassifierMixin

from ..corpus import fit_length
from ..features import EmbeddingTable, Vocabulary
from .layers import BuildError
from .model import (
    BiRecurrent,
    Conv1D,
    Dense,
    Dropout,
    Embedding,
    Flatten,
    GaussianNoise,
    MaxPool1D,
    Recurrent,
    Softmax,
    build_model,
    predict_matrix,
    proba_matrix,
)
from .train import TrainConfig, train

ARCHITECTURES = ("cnn", "bilstm", "conv-lstm")


def architecture_specs(
    architecture: str,
    num_classes: int,
    embedding_dim: int = 32,
    conv_filters=(32, 32),
    kernel_size: int = 3,
    pool_size: int = 2,
    lstm_units=(32,),
    dense_units=(64,),
    dropout: float = 0.2,
    noise_std: float = 0.1,
    activation: str = "relu",
):
    """Layer-spec list for one of the named presets."""
    specs = [Embedding(embedding_dim)]
    if noise_std > 0:
        specs.append(GaussianNoise(noise_std))
    if architecture == "cnn":
        for f in conv_filters:
            specs.append(Conv1D(f, kernel_size, activation))
            specs.append(MaxPool1D(pool_size))
        specs.append(Flatten())
    elif architecture == "bilstm":
        units = list(lstm_units)
        for i, u in enumerate(units):
            specs.append(BiRecurrent(u, return_sequences=i < len(units) - 1))
    elif architecture == "conv-lstm":
        for f in conv_filters:
            specs.append(Conv1D(f, kernel_size, activation))
            if dropout > 0:
                specs.append(Dropout(dropout))
            specs.append(MaxPool1D(pool_size))
        units = list(lstm_units)
        for i, u in enumerate(units):
            specs.append(Recurrent(u, return_sequences=i < len(units) - 1))
    else:
        raise BuildError(
            f"unknown architecture {architecture!r}; expected one of {ARCHITECTURES}"
        )
    for u in dense_units:
        specs.append(Dense(u, activation))
        if dropout > 0:
            specs.append(Dropout(dropout))
    specs.append(Dense(num_classes, "linear"))
    specs.append(Softmax(num_classes))
    return specs


def _doc_tokens(doc):
    return list(doc.tokens) if hasattr(doc, "tokens") else list(doc)


class NeuralTextClassifier(BaseEstimator, ClassifierMixin):
    """Sequence classifier over one of the desk-scale neural presets.

    ``fit`` accepts token lists (or Document objects) plus integer
    labels; it builds the vocabulary, encodes to fixed-length id rows
    and trains the graph. The trained graph is exposed as ``graph_``
    for the attribution and faithfulness tooling.
    """

    def __init__(
        self,
        architecture: str = "conv-lstm",
        embedding_dim: int = 32,
        conv_filters=(32, 32),
        kernel_size: int = 3,
        pool_size: int = 2,
        lstm_units=(32,),
        dense_units=(64,),
        dropout: float = 0.2,
        noise_std: float = 0.1,
        activation: str = "relu",
        max_len: int = 100,
        vocab_size: int | None = 20000,
        optimizer: str = "adagrad",
        learning_rate: float = 0.05,
        epochs: int = 5,
        batch_size: int = 32,
        seed: int = 0,
        clip_norm: float | None = 5.0,
        embedding_table: EmbeddingTable | None = None,
    ):
        self.architecture = architecture
        self.embedding_dim = embedding_dim
        self.conv_filters = conv_filters
        self.kernel_size = kernel_size
        self.pool_size = pool_size
        self.lstm_units = lstm_units
        self.dense_units = dense_units
        self.dropout = dropout
        self.noise_std = noise_std
        self.activation = activation
        self.max_len = max_len
        self.vocab_size = vocab_size
        self.optimizer = optimizer
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.seed = seed
        self.clip_norm = clip_norm
        self.embedding_table = embedding_table

    def _encode(self, docs) -> np.ndarray:
        rows = []
        for doc in docs:
            padded, _ = fit_length(_doc_tokens(doc), self.max_len)
            rows.append(self.vocab_.encode(padded))
        return np.stack(rows)

    def fit(self, docs, y, class_names=None):
        docs = list(docs)
        y = np.asarray(y, dtype=np.int64)
        if len(docs) != y.shape[0]:
            raise ValueError("docs and y lengths differ")
        class_names = tuple(class_names) if class_names else None
        num_classes = len(class_names) if class_names else int(y.max()) + 1
        self.vocab_ = Vocabulary.from_documents(
            [_doc_tokens(d) for d in docs], max_size=self.vocab_size
        )
        table = None
        if self.embedding_table is not None:
            if self.embedding_table.dim != self.embedding_dim:
                raise BuildError(
                    f"embedding table dimension {self.embedding_table.dim} "
                    f"does not match embedding_dim {self.embedding_dim}"
                )
            table = np.stack(
                [self.embedding_table.lookup(t) for t in self.vocab_.tokens]
            )
        specs = architecture_specs(
            self.architecture,
            num_classes,
            embedding_dim=self.embedding_dim,
            conv_filters=self.conv_filters,
            kernel_size=self.kernel_size,
            pool_size=self.pool_size,
            lstm_units=self.lstm_units,
            dense_units=self.dense_units,
            dropout=self.dropout,
            noise_std=self.noise_std,
            activation=self.activation,
        )
        self.graph_ = build_model(
            specs,
            num_classes=num_classes,
            seed=self.seed,
            vocab=self.vocab_,
            max_len=self.max_len,
            embedding_table=table,
            class_names=class_names,
        )
        config = TrainConfig(
            optimizer=self.optimizer,
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            batch_size=self.batch_size,
            seed=self.seed,
            clip_norm=self.clip_norm,
        )
        self.history_ = train(self.graph_, self._encode(docs), y, config)
        self.classes_ = np.arange(num_classes)
        return self

    def predict_proba(self, docs) -> np.ndarray:
        return proba_matrix(self.graph_, self._encode(list(docs)))

    def predict(self, docs) -> np.ndarray:
        return predict_matrix(self.graph_, self._encode(list(docs)))


class SoftmaxRegression(BaseEstimator, ClassifierMixin):
    """One dense layer plus softmax over feature vectors.

    This is the linear baseline: trained with the same optimizer and
    loss as the sequence models, so metrics and permutation importance
    share one code path.
    """

    def __init__(
        self,
        optimizer: str = "adagrad",
        learning_rate: float = 0.5,
        epochs: int = 30,
        batch_size: int = 32,
        seed: int = 0,
        clip_norm: float | None = None,
    ):
        self.optimizer = optimizer
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.seed = seed
        self.clip_norm = clip_norm

    @staticmethod
    def _dense(X) -> np.ndarray:
        if sp.issparse(X):
            return np.asarray(X.todense(), dtype=np.float64)
        return np.asarray(X, dtype=np.float64)

    def fit(self, X, y, num_classes: int | None = None):
        X = self._dense(X)
        y = np.asarray(y, dtype=np.int64)
        k = num_classes if num_classes is not None else int(y.max()) + 1
        self.graph_ = build_model(
            [Dense(k, "linear"), Softmax(k)],
            num_classes=k,
            seed=self.seed,
            input_dim=X.shape[1],
        )
        config = TrainConfig(
            optimizer=self.optimizer,
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            batch_size=self.batch_size,
            seed=self.seed,
            clip_norm=self.clip_norm,
        )
        self.history_ = train(self.graph_, X, y, config)
        self.classes_ = np.arange(k)
        return self

    def predict_proba(self, X) -> np.ndarray:
        return proba_matrix(self.graph_, self._dense(X))

    def predict(self, X) -> np.ndarray:
        return predict_matrix(self.graph_, self._dense(X))


class MultinomialNaiveBayes(BaseEstimator, ClassifierMixin):
    """Multinomial naive Bayes with additive smoothing.

    Accepts any non-negative feature matrix (counts or TF-IDF).
    """

    def __init__(self, alpha: float = 1.0):
        self.alpha = alpha

    def fit(self, X, y, num_classes: int | None = None):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if sp.issparse(X):
            X = X.tocsr()
            if X.nnz and X.data.min() < 0:
                raise ValueError("naive Bayes requires non-negative features")
        else:
            X = np.asarray(X, dtype=np.float64)
            if X.size and X.min() < 0:
                raise ValueError("naive Bayes requires non-negative features")
        y = np.asarray(y, dtype=np.int64)
        k = num_classes if num_classes is not None else int(y.max()) + 1
        n_features = X.shape[1]
        class_counts = np.bincount(y, minlength=k).astype(np.float64)
        missing = np.nonzero(class_counts == 0)[0]
        if missing.size:
            raise ValueError(
                f"classes {missing.tolist()} absent from training data; "
                "priors are undefined"
            )
        feature_counts = np.zeros((k, n_features))
        for c in range(k):
            rows = X[y == c]
            feature_counts[c] = np.asarray(rows.sum(axis=0)).ravel()
        smoothed = feature_counts + self.alpha
        self.feature_log_prob_ = np.log(smoothed) - np.log(
            smoothed.sum(axis=1, keepdims=True)
        )
        self.class_log_prior_ = np.log(class_counts) - np.log(class_counts.sum())
        self.classes_ = np.arange(k)
        return self

    def _joint(self, X) -> np.ndarray:
        if sp.issparse(X):
            scores = X @ self.feature_log_prob_.T
            scores = np.asarray(scores)
        else:
            scores = np.asarray(X, dtype=np.float64) @ self.feature_log_prob_.T
        return scores + self.class_log_prior_

    def predict_proba(self, X) -> np.ndarray:
        joint = self._joint(X)
        joint -= joint.max(axis=1, keepdims=True)
        p = np.exp(joint)
        return p / p.sum(axis=1, keepdims=True)

    def predict(self, X) -> np.ndarray:
        return np.argmax(self._joint(X), axis=1)
