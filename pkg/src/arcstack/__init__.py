"""arcstack: transition-based dependency parsing with graph-conditioned attention."""

from .conllu import (
    AnnotatedSentence, ConlluError, ParseError, TokenRecord, TreeValidationError,
    Vocabulary, build_vocab, read_conllu, validate_tree, write_conllu,
)
from .encoder import EncoderConfig, GraphEncoder, InputAssembly, RelationMatrix
from .estimator import GraphTransitionParser, check_sentences
from .evaluation import (
    ErrorReport, EvalConfig, analyze, bin_dependency_length, bin_root_distance,
    bin_sentence_length, deprel_table, relative_error_reduction, score,
)
from .model import ModelVariant, ParseEpisode, ParserModel, parse_sentence
from .training import TrainConfig, TrainReport, parse_corpus, step_loss, train
from .transitions import (
    Action, ActionKind, IllegalActionError, ParserState, apply, initial_state,
    is_terminal, legal_actions, oracle_sequence, projective_order, replay,
)

__version__ = "0.1.0"

__all__ = [
    "Action", "ActionKind", "AnnotatedSentence", "ConlluError", "EncoderConfig",
    "ErrorReport", "EvalConfig", "GraphEncoder", "GraphTransitionParser",
    "IllegalActionError", "InputAssembly", "ModelVariant", "ParseEpisode",
    "ParseError", "ParserModel", "ParserState", "RelationMatrix", "TokenRecord",
    "TrainConfig", "TrainReport", "TreeValidationError", "Vocabulary", "analyze",
    "apply", "bin_dependency_length", "bin_root_distance", "bin_sentence_length",
    "build_vocab", "check_sentences", "deprel_table", "initial_state", "is_terminal",
    "legal_actions", "oracle_sequence", "parse_corpus", "parse_sentence",
    "projective_order", "read_conllu", "relative_error_reduction", "replay", "score",
    "step_loss", "train", "validate_tree", "write_conllu",
]
