"""Model graphs: layer specs, shape-checked construction, traced
forward passes, input gradients, and checkpoint io."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from ..corpus import fit_length
from ..features import Vocabulary
from .layers import (
    TOKENS,
    BiLSTMLayer,
    BuildError,
    Conv1DLayer,
    DenseLayer,
    DropoutLayer,
    EmbeddingLayer,
    FlattenLayer,
    GaussianNoiseLayer,
    Layer,
    LSTMLayer,
    MaxPool1DLayer,
    NumericError,
    SoftmaxLayer,
)

CHECKPOINT_FORMAT_VERSION = 1


@dataclass(frozen=True)
class Embedding:
    dim: int


@dataclass(frozen=True)
class Dense:
    units: int
    activation: str = "linear"


@dataclass(frozen=True)
class Conv1D:
    filters: int
    kernel: int = 3
    activation: str = "relu"


@dataclass(frozen=True)
class MaxPool1D:
    pool: int = 2


@dataclass(frozen=True)
class Recurrent:
    units: int
    return_sequences: bool = False


@dataclass(frozen=True)
class BiRecurrent:
    units: int
    return_sequences: bool = False


@dataclass(frozen=True)
class Dropout:
    rate: float = 0.2


@dataclass(frozen=True)
class GaussianNoise:
    std: float = 0.1


@dataclass(frozen=True)
class Flatten:
    pass


@dataclass(frozen=True)
class Softmax:
    classes: int


_SPEC_KINDS = {
    "Embedding": Embedding,
    "Dense": Dense,
    "Conv1D": Conv1D,
    "MaxPool1D": MaxPool1D,
    "Recurrent": Recurrent,
    "BiRecurrent": BiRecurrent,
    "Dropout": Dropout,
    "GaussianNoise": GaussianNoise,
    "Flatten": Flatten,
    "Softmax": Softmax,
}


@dataclass
class ModelGraph:
    """Ordered layers plus the input contract they were built for."""

    layers: list
    specs: tuple
    num_classes: int
    input_kind: str  # "tokens" or "vector"
    max_len: int | None = None
    input_dim: int | None = None
    vocab: Vocabulary | None = None
    class_names: tuple[str, ...] | None = None

    def check_finite(self):
        for layer in self.layers:
            for key, arr in layer.weights.items():
                if not np.isfinite(arr).all():
                    raise NumericError(
                        f"layer {layer.name}: parameter {key} is not finite"
                    )


@dataclass
class LayerRecord:
    name: str
    inputs: np.ndarray
    output: np.ndarray
    cache: object


@dataclass
class ForwardTrace:
    """Per-layer activations captured during one forward pass."""

    records: list[LayerRecord]
    logits: np.ndarray
    probs: np.ndarray


def build_model(
    specs,
    num_classes: int,
    seed: int = 0,
    vocab: Vocabulary | None = None,
    max_len: int | None = None,
    input_dim: int | None = None,
    embedding_table: np.ndarray | None = None,
    class_names=None,
) -> ModelGraph:
    """Construct a shape-checked graph with seeded initialization.

    Token-sequence models pass ``vocab`` and ``max_len`` and must start
    with an Embedding spec; flat-vector models pass ``input_dim``.
    """
    specs = tuple(specs)
    if not specs or not isinstance(specs[-1], Softmax):
        raise BuildError("layer stack must end in a Softmax spec")
    if specs[-1].classes != num_classes:
        raise BuildError(
            f"Softmax declares {specs[-1].classes} classes, model has {num_classes}"
        )
    if vocab is not None:
        if max_len is None:
            raise BuildError("token models need max_len")
        shape = (TOKENS, max_len)
        input_kind = "tokens"
    else:
        if input_dim is None:
            raise BuildError("provide either vocab+max_len or input_dim")
        shape = (input_dim,)
        input_kind = "vector"

    rng = np.random.default_rng(seed)
    layers: list[Layer] = []
    counts: dict[str, int] = {}

    def unique_name(base):
        counts[base] = counts.get(base, 0) + 1
        return f"{base}{counts[base]}"

    for spec in specs:
        if isinstance(spec, Embedding):
            if vocab is None:
                raise BuildError("Embedding layer requires a vocabulary")
            if layers:
                raise BuildError("Embedding must be the first layer")
            layer = EmbeddingLayer(
                len(vocab), spec.dim, rng, table=embedding_table,
                name=unique_name("embedding"),
            )
        elif isinstance(spec, Dense):
            if shape and shape[0] == TOKENS:
                raise BuildError(
                    "Dense cannot consume raw token ids; an Embedding "
                    "layer must come first"
                )
            if len(shape) != 1:
                raise BuildError(
                    f"Dense({spec.units}) needs a flat vector but the previous "
                    f"layer produces shape {shape} (insert a Flatten layer)"
                )
            layer = DenseLayer(shape[0], spec.units, spec.activation, rng,
                               name=unique_name("dense"))
        elif isinstance(spec, Conv1D):
            if shape and shape[0] == TOKENS or len(shape) != 2:
                raise BuildError(
                    f"Conv1D({spec.filters}) needs (length, channels) input, "
                    f"previous layer produces {shape}"
                )
            layer = Conv1DLayer(shape[1], spec.filters, spec.kernel,
                                spec.activation, rng, name=unique_name("conv"))
        elif isinstance(spec, MaxPool1D):
            layer = MaxPool1DLayer(spec.pool, name=unique_name("maxpool"))
        elif isinstance(spec, Recurrent):
            if shape and shape[0] == TOKENS or len(shape) != 2:
                raise BuildError(
                    f"Recurrent({spec.units}) needs (length, channels) input, "
                    f"previous layer produces {shape}"
                )
            layer = LSTMLayer(shape[1], spec.units, spec.return_sequences, rng,
                              name=unique_name("lstm"))
        elif isinstance(spec, BiRecurrent):
            if shape and shape[0] == TOKENS or len(shape) != 2:
                raise BuildError(
                    f"BiRecurrent({spec.units}) needs (length, channels) input, "
                    f"previous layer produces {shape}"
                )
            layer = BiLSTMLayer(shape[1], spec.units, spec.return_sequences, rng,
                                name=unique_name("bilstm"))
        elif isinstance(spec, Dropout):
            layer = DropoutLayer(spec.rate, name=unique_name("dropout"))
        elif isinstance(spec, GaussianNoise):
            layer = GaussianNoiseLayer(spec.std, name=unique_name("noise"))
        elif isinstance(spec, Flatten):
            layer = FlattenLayer(name=unique_name("flatten"))
        elif isinstance(spec, Softmax):
            layer = SoftmaxLayer(spec.classes, name=unique_name("softmax"))
        else:
            raise BuildError(f"unknown layer spec {spec!r}")
        shape = layer.out_shape(shape)
        layers.append(layer)

    model = ModelGraph(
        layers=layers,
        specs=specs,
        num_classes=num_classes,
        input_kind=input_kind,
        max_len=max_len,
        input_dim=input_dim,
        vocab=vocab,
        class_names=tuple(class_names) if class_names else None,
    )
    model.check_finite()
    return model


def _check_input(model: ModelGraph, x) -> np.ndarray:
    if model.input_kind == "tokens":
        x = np.asarray(x, dtype=np.int64)
        if x.shape != (model.max_len,):
            raise ValueError(
                f"model expects {model.max_len} token ids, got shape {x.shape}"
            )
    else:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (model.input_dim,):
            raise ValueError(
                f"model expects a ({model.input_dim},) vector, got shape {x.shape}"
            )
    return x


def forward(model: ModelGraph, x, mode: str = "eval", trace: bool = False,
            rng: np.random.Generator | None = None):
    """Run one sample through the graph.

    Returns the class distribution, or ``(probs, ForwardTrace)`` when
    ``trace`` is set. Train mode activates Dropout/GaussianNoise and
    requires ``rng``.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    train = mode == "train"
    if train and rng is None:
        raise ValueError("train-mode forward needs an rng")
    a = _check_input(model, x)
    records = [] if trace else None
    logits = None
    for layer in model.layers:
        y, cache = layer.forward(a, rng=rng, train=train)
        if isinstance(layer, SoftmaxLayer):
            logits = cache[0]
        if not np.isfinite(y).all():
            raise NumericError(f"non-finite activation after layer {layer.name}")
        if trace:
            records.append(LayerRecord(name=layer.name, inputs=a, output=y, cache=cache))
        a = y
    probs = a
    if trace:
        return probs, ForwardTrace(records=records, logits=logits, probs=probs)
    return probs


def backward_from_logits(model: ModelGraph, trace: ForwardTrace, dlogits):
    """Backpropagate a gradient w.r.t. the logits through all layers.

    Returns ``(input_grad, grads)`` where ``grads`` is a per-layer dict
    list aligned with ``model.layers``. For token models ``input_grad``
    is the gradient at the embedding output (length x dim).
    """
    grads: list[dict] = [{} for _ in model.layers]
    dy = np.asarray(dlogits, dtype=np.float64)
    input_grad = None
    for idx in range(len(model.layers) - 2, -1, -1):
        layer = model.layers[idx]
        record = trace.records[idx]
        if isinstance(layer, EmbeddingLayer):
            input_grad = dy
            _, g = layer.backward(dy, record.cache)
            grads[idx] = g
            return input_grad, grads
        dy, g = layer.backward(dy, record.cache)
        grads[idx] = g
    return dy, grads


def input_gradient(model: ModelGraph, x, target_class: int) -> np.ndarray:
    """Gradient of the pre-softmax class score w.r.t. the model input.

    For token models the input space is the embedded sequence, so the
    result is (max_len, dim); for vector models it is (input_dim,).
    """
    if not 0 <= target_class < model.num_classes:
        raise ValueError(f"class {target_class} outside [0, {model.num_classes})")
    _, trace = forward(model, x, mode="eval", trace=True)
    dlogits = np.zeros(model.num_classes)
    dlogits[target_class] = 1.0
    input_grad, _ = backward_from_logits(model, trace, dlogits)
    return input_grad


def encode_doc(model: ModelGraph, tokens) -> np.ndarray:
    """Token sequence to a padded id vector using the model's vocabulary."""
    if model.input_kind != "tokens":
        raise ValueError("encode_doc only applies to token models")
    padded, _ = fit_length(list(tokens), model.max_len)
    return model.vocab.encode(padded)


def doc_proba(model: ModelGraph, tokens) -> np.ndarray:
    """Class distribution for a raw token sequence."""
    return forward(model, encode_doc(model, tokens), mode="eval")


def predict_matrix(model: ModelGraph, X) -> np.ndarray:
    """Argmax predictions for a matrix of encoded inputs (one row each)."""
    X = np.asarray(X)
    out = np.empty(X.shape[0], dtype=np.int64)
    for i in range(X.shape[0]):
        out[i] = int(np.argmax(forward(model, X[i], mode="eval")))
    return out


def proba_matrix(model: ModelGraph, X) -> np.ndarray:
    X = np.asarray(X)
    out = np.empty((X.shape[0], model.num_classes))
    for i in range(X.shape[0]):
        out[i] = forward(model, X[i], mode="eval")
    return out


def log_norm(model: ModelGraph, floor: float = -30.0) -> float:
    """Mean log10 squared Frobenius norm over the weight matrices.

    All-zero matrices are clamped at ``floor`` instead of -inf.
    Embedding tables and bias vectors are not counted.
    """
    values = []
    for layer in model.layers:
        for W in layer.weight_matrices():
            sq = float((W * W).sum())
            values.append(np.log10(sq) if sq > 0 else floor)
    if not values:
        raise ValueError("model has no weight matrices")
    return float(np.mean(values))


def save_model(model: ModelGraph, path) -> None:
    """Write a self-describing npz checkpoint (exact float64 round-trip)."""
    meta = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "num_classes": model.num_classes,
        "input_kind": model.input_kind,
        "max_len": model.max_len,
        "input_dim": model.input_dim,
        "class_names": list(model.class_names) if model.class_names else None,
        "specs": [
            {"kind": type(s).__name__, **asdict(s)} for s in model.specs
        ],
        "vocab": model.vocab.tokens if model.vocab is not None else None,
    }
    arrays = {"meta": np.array(json.dumps(meta, sort_keys=True))}
    for i, layer in enumerate(model.layers):
        for key, arr in layer.weights.items():
            arrays[f"layer{i}.{key}"] = arr
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_model(path) -> ModelGraph:
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        if meta.get("format_version") != CHECKPOINT_FORMAT_VERSION:
            raise ValueError(
                f"{path}: unsupported checkpoint format "
                f"{meta.get('format_version')!r}"
            )
        specs = []
        for entry in meta["specs"]:
            entry = dict(entry)
            kind = entry.pop("kind")
            if kind not in _SPEC_KINDS:
                raise ValueError(f"{path}: unknown layer kind {kind!r}")
            specs.append(_SPEC_KINDS[kind](**entry))
        vocab = Vocabulary(meta["vocab"][2:]) if meta["vocab"] else None
        model = build_model(
            specs,
            num_classes=meta["num_classes"],
            seed=0,
            vocab=vocab,
            max_len=meta["max_len"],
            input_dim=meta["input_dim"],
            class_names=meta["class_names"],
        )
        for i, layer in enumerate(model.layers):
            for key in layer.weights:
                layer.weights[key][...] = data[f"layer{i}.{key}"]
    model.check_finite()
    return model
