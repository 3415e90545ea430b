"""scikit-learn style estimator facade.

Wraps vocabulary building, model construction, training and greedy decoding
behind fit/predict/score so the parser composes with sklearn tooling
(get_params, set_params, clone).  Inputs are lists of AnnotatedSentence or
paths to CoNLL-U files.
"""

from __future__ import annotations

from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .conllu import AnnotatedSentence, build_vocab, read_conllu, validate_tree
from .evaluation import EvalConfig, score
from .model import ModelVariant, ParserModel
from .training import TrainConfig, parse_corpus, train


def check_sentences(X, require_gold: bool = True):
    """Validate estimator input; accepts a CoNLL-U path or a sentence list."""
    if isinstance(X, (str, bytes)) or hasattr(X, "__fspath__"):
        return read_conllu(X)
    sentences = list(X)
    for i, sent in enumerate(sentences):
        if not isinstance(sent, AnnotatedSentence):
            raise TypeError(f"X[{i}] is {type(sent).__name__}, expected AnnotatedSentence")
        if require_gold:
            validate_tree(sent)
    return sentences


class GraphTransitionParser(BaseEstimator):
    """Greedy transition parser with a graph-conditioned attention encoder.

    Parameters follow the desk-scale defaults; `variant` selects the model
    family (e.g. "sentence,graph", "state", "state,graph,comp").
    """

    def __init__(self, variant="sentence,graph", layers=2, heads=4, model_dim=64,
                 ff_dim=128, max_positions=512, dropout=0.05, exist_hidden=64,
                 relation_hidden=32, min_freq=2, learning_rate=1e-3, beta1=0.9,
                 beta2=0.999, epsilon=1e-6, weight_decay=0.01, clip_norm=1.0,
                 warmup=0.01, epochs=12, patience=5, punctuation="include", seed=0):
        self.variant = variant
        self.layers = layers
        self.heads = heads
        self.model_dim = model_dim
        self.ff_dim = ff_dim
        self.max_positions = max_positions
        self.dropout = dropout
        self.exist_hidden = exist_hidden
        self.relation_hidden = relation_hidden
        self.min_freq = min_freq
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.weight_decay = weight_decay
        self.clip_norm = clip_norm
        self.warmup = warmup
        self.epochs = epochs
        self.patience = patience
        self.punctuation = punctuation
        self.seed = seed

    def _train_config(self) -> TrainConfig:
        return TrainConfig(learning_rate=self.learning_rate, beta1=self.beta1,
                           beta2=self.beta2, epsilon=self.epsilon,
                           weight_decay=self.weight_decay, clip_norm=self.clip_norm,
                           warmup=self.warmup, epochs=self.epochs,
                           patience=self.patience, seed=self.seed)

    def fit(self, X, y=None, dev=None):
        """Train on gold trees; `dev` (default: X itself) drives early stopping."""
        sentences = check_sentences(X)
        dev_sentences = sentences if dev is None else check_sentences(dev)
        vocab = build_vocab(sentences, min_freq=self.min_freq)
        model = ParserModel(
            ModelVariant.from_string(self.variant), vocab, seed=self.seed,
            layers=self.layers, heads=self.heads, model_dim=self.model_dim,
            ff_dim=self.ff_dim, max_positions=self.max_positions,
            dropout=self.dropout, exist_hidden=self.exist_hidden,
            relation_hidden=self.relation_hidden)
        self.report_ = train(model, sentences, dev_sentences, self._train_config(),
                             EvalConfig(punctuation=self.punctuation))
        self.model_ = model
        return self

    def _check_fitted(self) -> ParserModel:
        if not hasattr(self, "model_"):
            raise NotFittedError("GraphTransitionParser is not fitted; call fit first")
        return self.model_

    def predict(self, X):
        """Greedy-parse sentences into predicted trees."""
        model = self._check_fitted()
        return parse_corpus(model, check_sentences(X, require_gold=False))

    def score(self, X, y=None) -> float:
        """Labelled attachment score as a fraction in [0, 1]."""
        model = self._check_fitted()
        sentences = check_sentences(X)
        predicted = parse_corpus(model, sentences)
        _, las = score(sentences, predicted, EvalConfig(punctuation=self.punctuation))
        return las / 100.0

    def save(self, path) -> None:
        self._check_fitted().save(path)

    @classmethod
    def from_checkpoint(cls, path) -> "GraphTransitionParser":
        model = ParserModel.load(path)
        est = cls(variant=model.variant.to_string(), seed=model.seed,
                  layers=model.dims["layers"], heads=model.dims["heads"],
                  model_dim=model.dims["model_dim"], ff_dim=model.dims["ff_dim"],
                  max_positions=model.dims["max_positions"], dropout=model.dims["dropout"],
                  exist_hidden=model.dims["exist_hidden"],
                  relation_hidden=model.dims["relation_hidden"])
        est.model_ = model
        return est
