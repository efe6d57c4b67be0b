from .layers import BuildError, NumericError, lrp_linear
from .model import (
    BiRecurrent,
    Conv1D,
    Dense,
    Dropout,
    Embedding,
    Flatten,
    ForwardTrace,
    GaussianNoise,
    MaxPool1D,
    ModelGraph,
    Recurrent,
    Softmax,
    backward_from_logits,
    build_model,
    doc_proba,
    encode_doc,
    forward,
    input_gradient,
    load_model,
    log_norm,
    predict_matrix,
    proba_matrix,
    save_model,
)
from .train import TrainConfig, TrainingError, train
from .estimators import (
    ARCHITECTURES,
    MultinomialNaiveBayes,
    NeuralTextClassifier,
    SoftmaxRegression,
    architecture_specs,
)

__all__ = [
    "ARCHITECTURES",
    "BiRecurrent",
    "BuildError",
    "Conv1D",
    "Dense",
    "Dropout",
    "Embedding",
    "Flatten",
    "ForwardTrace",
    "GaussianNoise",
    "MaxPool1D",
    "ModelGraph",
    "MultinomialNaiveBayes",
    "NeuralTextClassifier",
    "NumericError",
    "Recurrent",
    "Softmax",
    "SoftmaxRegression",
    "TrainConfig",
    "TrainingError",
    "architecture_specs",
    "backward_from_logits",
    "build_model",
    "doc_proba",
    "encode_doc",
    "forward",
    "input_gradient",
    "load_model",
    "log_norm",
    "lrp_linear",
    "predict_matrix",
    "proba_matrix",
    "save_model",
    "train",
]
