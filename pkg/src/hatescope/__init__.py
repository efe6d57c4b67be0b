"""hatescope: explainable hate-speech text classification at desk scale.

Train small traced neural classifiers and TF-IDF baselines, attribute
predictions to tokens (sensitivity analysis, layer-wise relevance
propagation, leave-one-out), score explanation faithfulness, measure
annotator agreement, and combine models into voting or CV-weighted
ensembles.
"""

__version__ = "0.1.0"

from .agreement import (
    AnnotationMatrix,
    KappaReport,
    category_kappa,
    category_proportion,
    kappa_report,
    load_annotations,
    majority_label,
    overall_kappa,
)
from .corpus import (
    DEFAULT_CLASS_NAMES,
    Document,
    LabeledCorpus,
    PreprocessConfig,
    filter_infrequent,
    fit_length,
    load_corpus,
    preprocess,
    preprocess_corpus,
    save_corpus,
    split_train_test,
    synth_corpus,
)
from .ensemble import (
    CandidateScore,
    EnsembleModel,
    cv_train,
    ensemble_predict,
    majority_vote,
    select_top_k,
)
from .explain import (
    LrpConfig,
    PermutationReport,
    RelevanceMap,
    global_terms,
    leave_one_out,
    lrp_relevance,
    permutation_importance,
    relevance,
    render_heatmap,
    sa_relevance,
)
from .faithfulness import (
    FaithfulnessReport,
    Rationale,
    comprehensiveness,
    extract_rationale,
    faithfulness_report,
    rationale_match,
    sufficiency,
)
from .features import (
    EmbeddingTable,
    TfidfFeaturizer,
    Vocabulary,
    build_vocabulary,
    embed_sequence,
    load_embedding_table,
)
from .metrics import class_report, confusion_matrix, macro_f1, mcc, metrics_report
from .network import (
    MultinomialNaiveBayes,
    NeuralTextClassifier,
    SoftmaxRegression,
    TrainConfig,
    build_model,
    forward,
    input_gradient,
    load_model,
    log_norm,
    save_model,
    train,
)
