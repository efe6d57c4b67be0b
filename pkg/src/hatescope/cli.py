"""Command-line orchestration: synth, prepare, agree, train, eval,
explain, faithfulness, ensemble, global-terms.

Every subcommand writes a manifest (config snapshot, seed, versions)
into the output directory before doing any heavy work. Artifacts use
deterministic filenames; identical config and seed give byte-identical
metrics and relevance JSONs. Exit codes: 0 success, 1 runtime failure,
2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .agreement import kappa_report, load_annotations
from .config import BASELINE_ARCHITECTURES, ConfigError, RunConfig, validate_config
from .corpus import (
    LabeledCorpus,
    PreprocessConfig,
    filter_infrequent,
    load_corpus,
    preprocess_corpus,
    save_corpus,
    split_train_test,
    synth_corpus,
)
from .ensemble import cv_train, ensemble_manifest, ensemble_predict_corpus
from .explain import LrpConfig, global_terms, relevance, render_heatmap
from .faithfulness import faithfulness_report
from .features import (
    TfidfFeaturizer,
    featurizer_from_dict,
    featurizer_to_dict,
    load_embedding_table,
)
from .metrics import metrics_report
from .network import (
    MultinomialNaiveBayes,
    NeuralTextClassifier,
    SoftmaxRegression,
    architecture_specs,
    TrainConfig,
    doc_proba,
    load_model,
    log_norm,
    save_model,
)

OUTPUT_DIR_ENV = "HATESCOPE_OUTPUT_DIR"


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _output_dir(args, cfg: RunConfig) -> Path:
    out = getattr(args, "output_dir", None) or cfg.output_dir
    out = os.environ.get(OUTPUT_DIR_ENV, out)
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_manifest(out: Path, subcommand: str, cfg: RunConfig) -> None:
    manifest = {
        "subcommand": subcommand,
        "config": dataclasses.asdict(cfg),
        "seed": cfg.seed,
        "versions": {
            "hatescope": __version__,
            "python": sys.version.split()[0],
            "numpy": np.__version__,
        },
    }
    _write_json(out / "manifest.json", manifest)


def _config_from_args(args, extra_overrides=None) -> RunConfig:
    overrides = {}
    for key in ("seed", "epochs", "method", "p", "folds", "combine",
                "epsilon", "delta", "min_df", "max_len", "test_fraction"):
        if hasattr(args, key):
            overrides[key] = getattr(args, key)
    if extra_overrides:
        overrides.update(extra_overrides)
    return validate_config(getattr(args, "config", None), overrides)


def _load_data(args, cfg: RunConfig) -> LabeledCorpus:
    path = getattr(args, "data", None) or cfg.corpus
    if not path:
        raise ConfigError(["no corpus given (flag --data or config data.corpus)"])
    return load_corpus(path)


def _docs_and_labels(corpus: LabeledCorpus):
    return [list(d.tokens) for d in corpus.documents], corpus.labels()


def cmd_synth(args) -> int:
    cfg = _config_from_args(args)
    out = _output_dir(args, cfg)
    _write_manifest(out, "synth", cfg)
    corpus = synth_corpus(
        num_classes=args.classes,
        docs_per_class=args.per_class,
        planted_per_class=args.planted,
        vocab_size=args.vocab_size,
        noise_len=args.noise_len,
        seed=cfg.seed,
    )
    save_corpus(corpus, out / "corpus.csv")
    print(f"wrote {out / 'corpus.csv'} ({len(corpus)} documents)")
    return 0


def cmd_prepare(args) -> int:
    cfg = _config_from_args(args)
    out = _output_dir(args, cfg)
    _write_manifest(out, "prepare", cfg)
    corpus = _load_data(args, cfg)
    pp = PreprocessConfig(
        normalize_hashtags=cfg.normalize_hashtags,
        strip_emojis_mentions_duplicates=cfg.strip_emojis_mentions_duplicates,
        lowercase=cfg.lowercase,
        min_df=cfg.min_df,
        max_len=cfg.max_len,
    )
    prepared = filter_infrequent(preprocess_corpus(corpus, pp), cfg.min_df)
    save_corpus(prepared, out / "prepared_corpus.csv")
    n_empty = sum(1 for d in prepared.documents if d.empty)
    print(
        f"wrote {out / 'prepared_corpus.csv'} "
        f"({len(prepared)} documents, {n_empty} now empty)"
    )
    return 0


def cmd_agree(args) -> int:
    cfg = _config_from_args(args)
    out = _output_dir(args, cfg)
    _write_manifest(out, "agree", cfg)
    path = args.annotations or cfg.annotations
    if not path:
        raise ConfigError(["no annotation file given (--annotations)"])
    matrix = load_annotations(path)
    report = kappa_report(matrix)
    payload = report.to_dict()
    payload.update({"n": matrix.n, "m": matrix.m, "k": matrix.k})
    _write_json(out / "kappa.json", payload)
    print(f"wrote {out / 'kappa.json'} (overall kappa {report.overall:.4f})")
    return 0


def _neural_params(cfg: RunConfig) -> dict:
    return dict(
        architecture=cfg.architecture,
        embedding_dim=cfg.embedding_dim,
        conv_filters=cfg.conv_filters,
        kernel_size=cfg.kernel_size,
        pool_size=cfg.pool_size,
        lstm_units=cfg.lstm_units,
        dense_units=cfg.dense_units,
        dropout=cfg.dropout,
        noise_std=cfg.noise_std,
        activation=cfg.activation,
        max_len=cfg.max_len,
        vocab_size=cfg.vocab_size,
        optimizer=cfg.optimizer,
        learning_rate=cfg.learning_rate,
        epochs=cfg.epochs,
        batch_size=cfg.batch_size,
        seed=cfg.seed,
        clip_norm=cfg.clip_norm,
    )


def _save_baseline(path: Path, kind: str, featurizer, model, class_names) -> None:
    state = {
        "format_version": 1,
        "kind": "baseline",
        "model": kind,
        "class_names": list(class_names),
        "featurizer": featurizer_to_dict(featurizer),
    }
    if kind == "nb":
        state["feature_log_prob"] = model.feature_log_prob_.tolist()
        state["class_log_prior"] = model.class_log_prior_.tolist()
    else:
        dense = model.graph_.layers[0]
        state["W"] = dense.weights["W"].tolist()
        state["b"] = dense.weights["b"].tolist()
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(state, fh, sort_keys=True)
        fh.write("\n")


def cmd_train(args) -> int:
    cfg = _config_from_args(args)
    out = _output_dir(args, cfg)
    _write_manifest(out, "train", cfg)
    corpus = _load_data(args, cfg)
    train_set, test_set = split_train_test(corpus, cfg.test_fraction, cfg.seed)
    train_docs, y_train = _docs_and_labels(train_set)
    test_docs, y_test = _docs_and_labels(test_set)

    if cfg.architecture in BASELINE_ARCHITECTURES:
        featurizer = TfidfFeaturizer().fit(train_docs)
        X_train = featurizer.transform(train_docs)
        X_test = featurizer.transform(test_docs)
        if cfg.architecture == "nb":
            model = MultinomialNaiveBayes().fit(
                X_train, y_train, num_classes=corpus.num_classes
            )
        else:
            model = SoftmaxRegression(
                optimizer=cfg.optimizer,
                learning_rate=cfg.learning_rate,
                epochs=cfg.epochs,
                batch_size=cfg.batch_size,
                seed=cfg.seed,
                clip_norm=cfg.clip_norm,
            ).fit(X_train, y_train, num_classes=corpus.num_classes)
        pred = np.asarray(model.predict(X_test))
        report = metrics_report(y_test, pred, corpus.num_classes)
        report["history"] = getattr(model, "history_", [])
        ckpt = out / "model_baseline.json"
        _save_baseline(ckpt, cfg.architecture, featurizer, model, corpus.class_names)
    else:
        params = _neural_params(cfg)
        if cfg.embedding_path:
            table = load_embedding_table(cfg.embedding_path)
            params["embedding_table"] = table
            params["embedding_dim"] = table.dim
        clf = NeuralTextClassifier(**params)
        clf.fit(train_docs, y_train, class_names=corpus.class_names)
        pred = clf.predict(test_docs)
        report = metrics_report(y_test, pred, corpus.num_classes)
        report["history"] = clf.history_
        report["log_norm"] = log_norm(clf.graph_)
        ckpt = out / "model.ckpt"
        save_model(clf.graph_, ckpt)
    _write_json(out / "metrics.json", report)
    print(
        f"wrote {ckpt} and {out / 'metrics.json'} "
        f"(test macro F1 {report['macro_f1']:.4f})"
    )
    return 0


def _load_any_model(path: str):
    """Load either a sequence checkpoint (npz) or a baseline (json)."""
    if str(path).endswith(".json"):
        with open(path, encoding="utf-8") as fh:
            state = json.load(fh)
        if state.get("kind") != "baseline":
            raise ValueError(f"{path}: not a baseline checkpoint")
        featurizer = featurizer_from_dict(state["featurizer"])
        if state["model"] == "nb":
            model = MultinomialNaiveBayes()
            model.feature_log_prob_ = np.array(state["feature_log_prob"])
            model.class_log_prior_ = np.array(state["class_log_prior"])
            model.classes_ = np.arange(len(state["class_log_prior"]))
        else:
            k = len(state["b"])
            n_features = len(state["W"][0])
            model = SoftmaxRegression()
            from .network import Dense, Softmax, build_model

            model.graph_ = build_model(
                [Dense(k, "linear"), Softmax(k)], num_classes=k, seed=0,
                input_dim=n_features,
            )
            model.graph_.layers[0].weights["W"][...] = np.array(state["W"])
            model.graph_.layers[0].weights["b"][...] = np.array(state["b"])
            model.classes_ = np.arange(k)
        return ("baseline", state["model"], featurizer, model,
                tuple(state["class_names"]))
    return ("sequence", None, None, load_model(path), None)


def _require_sequence_model(loaded, subcommand: str):
    kind = loaded[0]
    if kind != "sequence":
        raise ValueError(
            f"{subcommand} needs a sequence-model checkpoint (.ckpt); "
            "baseline TF-IDF models are not token-attributable here"
        )
    return loaded[3]


def cmd_eval(args) -> int:
    cfg = _config_from_args(args)
    out = _output_dir(args, cfg)
    _write_manifest(out, "eval", cfg)
    corpus = _load_data(args, cfg)
    loaded = _load_any_model(args.model)
    docs, y = _docs_and_labels(corpus)
    if loaded[0] == "baseline":
        _, _, featurizer, model, _ = loaded
        pred = np.asarray(model.predict(featurizer.transform(docs)))
    else:
        model = loaded[3]
        pred = np.array(
            [int(np.argmax(doc_proba(model, toks))) for toks in docs], dtype=np.int64
        )
    report = metrics_report(y, pred, corpus.num_classes)
    _write_json(out / "metrics.json", report)
    print(f"wrote {out / 'metrics.json'} (macro F1 {report['macro_f1']:.4f})")
    return 0


def cmd_explain(args) -> int:
    cfg = _config_from_args(args)
    out = _output_dir(args, cfg)
    _write_manifest(out, "explain", cfg)
    corpus = _load_data(args, cfg)
    model = _require_sequence_model(_load_any_model(args.model), "explain")
    by_id = {d.id: d for d in corpus.documents}
    if args.doc_id not in by_id:
        raise ValueError(f"document id {args.doc_id!r} not found in corpus")
    doc = by_id[args.doc_id]
    if args.target_class is not None:
        target = corpus.resolve_class(args.target_class)
    else:
        target = int(np.argmax(doc_proba(model, doc.tokens)))
    lrp_cfg = LrpConfig(epsilon=cfg.epsilon, delta=cfg.delta)
    rel = relevance(model, doc, target, cfg.method, lrp_cfg)
    rel_path = out / "relevance" / f"{doc.id}_{cfg.method}.json"
    _write_json(rel_path, rel.to_dict())
    html_path = out / "heatmaps" / f"{doc.id}_{cfg.method}.html"
    html_path.parent.mkdir(parents=True, exist_ok=True)
    render_heatmap(doc, rel, html_path, class_name=corpus.class_name(target))
    print(f"wrote {rel_path} and {html_path}")
    return 0


def cmd_faithfulness(args) -> int:
    cfg = _config_from_args(args)
    out = _output_dir(args, cfg)
    _write_manifest(out, "faithfulness", cfg)
    corpus = _load_data(args, cfg)
    model = _require_sequence_model(_load_any_model(args.model), "faithfulness")
    lrp_cfg = LrpConfig(epsilon=cfg.epsilon, delta=cfg.delta)
    report = faithfulness_report(
        model, corpus, explainer=cfg.method, p=cfg.p, lrp_config=lrp_cfg,
        model_id=str(args.model),
    )
    _write_json(out / "faithfulness.json", report.to_dict())
    print(
        f"wrote {out / 'faithfulness.json'} "
        f"(mean e {report.mean_comprehensiveness:.4f}, "
        f"mean s {report.mean_sufficiency:.4f})"
    )
    return 0


def cmd_global_terms(args) -> int:
    cfg = _config_from_args(args)
    out = _output_dir(args, cfg)
    _write_manifest(out, "global-terms", cfg)
    corpus = _load_data(args, cfg)
    model = _require_sequence_model(_load_any_model(args.model), "global-terms")
    lrp_cfg = LrpConfig(epsilon=cfg.epsilon, delta=cfg.delta)
    ranking = global_terms(model, corpus, method=cfg.method, k=args.k, config=lrp_cfg)
    _write_json(out / "global_terms.json", ranking)
    print(f"wrote {out / 'global_terms.json'}")
    return 0


def cmd_ensemble(args) -> int:
    cfg = _config_from_args(args)
    out = _output_dir(args, cfg)
    _write_manifest(out, "ensemble", cfg)
    corpus = _load_data(args, cfg)
    train_set, test_set = split_train_test(corpus, cfg.test_fraction, cfg.seed)
    specs = architecture_specs(
        cfg.architecture if cfg.architecture not in BASELINE_ARCHITECTURES
        else "cnn",
        corpus.num_classes,
        embedding_dim=cfg.embedding_dim,
        conv_filters=cfg.conv_filters,
        kernel_size=cfg.kernel_size,
        pool_size=cfg.pool_size,
        lstm_units=cfg.lstm_units,
        dense_units=cfg.dense_units,
        dropout=cfg.dropout,
        noise_std=cfg.noise_std,
        activation=cfg.activation,
    )
    train_config = TrainConfig(
        optimizer=cfg.optimizer,
        learning_rate=cfg.learning_rate,
        epochs=cfg.epochs,
        batch_size=cfg.batch_size,
        seed=cfg.seed,
        clip_norm=cfg.clip_norm,
    )
    ens = cv_train(
        train_set,
        cfg.folds,
        specs,
        train_config,
        max_len=cfg.max_len,
        vocab_size=cfg.vocab_size,
        combine=cfg.combine,
    )
    paths = []
    for i, member in enumerate(ens.members):
        path = out / f"member{i}.ckpt"
        save_model(member, path)
        paths.append(str(path))
    pred = ensemble_predict_corpus(ens, test_set.documents)
    report = metrics_report(test_set.labels(), pred, corpus.num_classes)
    _write_json(out / "metrics.json", report)
    _write_json(
        out / "ensemble.json",
        ensemble_manifest(ens, paths, validation_scores=report["macro_f1"]),
    )
    print(
        f"wrote {out / 'ensemble.json'} "
        f"(test macro F1 {report['macro_f1']:.4f}, weights {ens.weights.round(4).tolist()})"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hatescope",
        description="Explainable hate-speech classification toolkit",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p, config=False, data=False, model=False):
        p.add_argument("-o", "--output-dir", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override seed")
        if config:
            p.add_argument("--config", help="INI config file")
        if data:
            p.add_argument("--data", help="corpus CSV (overrides config)")
        if model:
            p.add_argument("--model", required=True, help="model checkpoint")

    p = sub.add_parser("synth", help="generate a planted-token corpus")
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--per-class", type=int, default=50)
    p.add_argument("--planted", type=int, default=2)
    p.add_argument("--vocab-size", type=int, default=100)
    p.add_argument("--noise-len", type=int, default=20)
    common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("prepare", help="preprocess and filter a corpus")
    common(p, config=True, data=True)
    p.add_argument("--min-df", dest="min_df", type=int, default=None)
    p.add_argument("--max-len", dest="max_len", type=int, default=None)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("agree", help="annotator agreement report")
    p.add_argument("--annotations", help="annotation CSV (id,annotator,label)")
    common(p, config=True)
    p.set_defaults(func=cmd_agree)

    p = sub.add_parser("train", help="train a classifier and write metrics")
    common(p, config=True, data=True)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--test-fraction", dest="test_fraction", type=float, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a corpus")
    common(p, config=True, data=True, model=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("explain", help="token relevance for one document")
    common(p, config=True, data=True, model=True)
    p.add_argument("--doc-id", required=True)
    p.add_argument("--method", choices=("sa", "lrp", "loo"), default=None)
    p.add_argument("--class", dest="target_class", default=None,
                   help="target class name or index (default: predicted)")
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--delta", type=float, default=None)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("faithfulness", help="comprehensiveness/sufficiency report")
    common(p, config=True, data=True, model=True)
    p.add_argument("--method", choices=("sa", "lrp", "loo"), default=None)
    p.add_argument("--p", type=float, default=None, help="rationale fraction")
    p.set_defaults(func=cmd_faithfulness)

    p = sub.add_parser("global-terms", help="per-class term rankings")
    common(p, config=True, data=True, model=True)
    p.add_argument("--method", choices=("sa", "lrp"), default=None)
    p.add_argument("-k", type=int, default=20)
    p.set_defaults(func=cmd_global_terms)

    p = sub.add_parser("ensemble", help="cross-validation ensemble")
    common(p, config=True, data=True)
    p.add_argument("--folds", type=int, default=None)
    p.add_argument("--combine", choices=("hard-majority", "weighted-soft"),
                   default=None)
    p.set_defaults(func=cmd_ensemble)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"hatescope: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - single CLI failure boundary
        print(f"hatescope: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
