"""Parser models over the graph-conditioned encoder.

Two input layouts share one encoder: the state layout feeds the live parser
configuration ([CLS] stack / [SEP] buffer / [SEP] deleted), the sentence
layout feeds the sentence once ([CLS] [ROOT] words [SEP]) and lets the
relation codes carry the parse so far.  Edge prediction reads the output
embeddings of the two stack tops and the buffer front; a separate classifier
scores labels for the chosen arc direction.  Optional submodels: recursive
composition of head embeddings and an LSTM over the action history.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import conllu
from .autodiff import ParamStore, Tensor
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .encoder import EncoderConfig, GraphEncoder, InputAssembly, RelationMatrix
from .transitions import (
    ARC_KINDS, Action, ActionKind, ParserState, apply, initial_state, is_terminal,
    legal_actions,
)


class VariantError(ValueError):
    pass


@dataclass(frozen=True)
class ModelVariant:
    """Feature flags selecting one model of the family."""

    base: str = "sentence"            # "state" | "sentence"
    graph_input: bool = True
    graph_output: str = "token_pair"  # "token_pair" | "cls"
    composition: bool = False
    history: bool = False

    def __post_init__(self):
        if self.base not in ("state", "sentence"):
            raise VariantError(f"unknown base {self.base!r}")
        if self.graph_output not in ("token_pair", "cls"):
            raise VariantError(f"unknown graph_output {self.graph_output!r}")
        if self.base == "sentence" and (self.composition or self.history):
            raise VariantError("the sentence base has no composition or history submodel")

    @classmethod
    def from_string(cls, spec: str) -> "ModelVariant":
        """Parse names like "state,graph", "sentence,graph", "state,graph,comp,cls".

        The state base defaults to composition plus history; enabling graph
        input drops composition (the relation codes replace it) unless an
        explicit "comp" token keeps it.
        """
        tokens = [t.strip() for t in spec.split(",") if t.strip()]
        if not tokens or tokens[0] not in ("state", "sentence"):
            raise VariantError(f"variant must start with 'state' or 'sentence': {spec!r}")
        base = tokens[0]
        flags = set(tokens[1:])
        unknown = flags - {"graph", "comp", "nocomp", "hist", "nohist", "cls"}
        if unknown:
            raise VariantError(f"unknown variant tokens: {sorted(unknown)}")
        graph = "graph" in flags
        if base == "sentence":
            if flags & {"comp", "hist"}:
                raise VariantError("composition/history are not available with the sentence base")
            comp = hist = False
        else:
            comp = "comp" in flags or (not graph and "nocomp" not in flags)
            if "nocomp" in flags:
                comp = False
            hist = "nohist" not in flags
        return cls(base=base, graph_input=graph,
                   graph_output="cls" if "cls" in flags else "token_pair",
                   composition=comp, history=hist)

    def to_string(self) -> str:
        tokens = [self.base]
        if self.graph_input:
            tokens.append("graph")
        if self.base == "state":
            if self.composition != (not self.graph_input):
                tokens.append("comp" if self.composition else "nocomp")
            if not self.history:
                tokens.append("nohist")
        if self.graph_output == "cls":
            tokens.append("cls")
        return ",".join(tokens)

    def flags(self) -> dict:
        return {"base": self.base, "graph_input": self.graph_input,
                "graph_output": self.graph_output, "composition": self.composition,
                "history": self.history}


# segment ids in the state layout
SEG_STACK, SEG_BUFFER, SEG_DELETED = 0, 1, 2


@dataclass
class CompositionState:
    """Per-token composed embeddings and each head's most recent dependent."""

    vectors: dict[int, Tensor]          # token -> current composed embedding (1, m)
    last_dep: dict[int, Tensor | None]  # token -> embedding of its newest dependent
    last_label: dict[int, int]          # token -> row in the directional label table


@dataclass
class HistoryState:
    h: Tensor
    c: Tensor


class ParserModel:
    def __init__(self, variant: ModelVariant, vocab: conllu.Vocabulary, *,
                 layers: int = 2, heads: int = 4, model_dim: int = 64, ff_dim: int = 128,
                 max_positions: int = 512, dropout: float = 0.05,
                 exist_hidden: int = 64, relation_hidden: int = 32, seed: int = 0):
        self.variant = variant
        self.vocab = vocab
        self.seed = seed
        self.dims = {
            "layers": layers, "heads": heads, "model_dim": model_dim, "ff_dim": ff_dim,
            "max_positions": max_positions, "dropout": dropout,
            "exist_hidden": exist_hidden, "relation_hidden": relation_hidden,
        }
        self.rng = np.random.default_rng(seed)
        store = ParamStore(self.rng)
        if variant.base == "state":
            segment_count = 3 if variant.graph_input else 2
        else:
            segment_count = 0
        enc_cfg = EncoderConfig(layers=layers, heads=heads, model_dim=model_dim,
                                ff_dim=ff_dim, max_positions=max_positions,
                                segment_count=segment_count, dropout=dropout,
                                graph_input=variant.graph_input)
        self.encoder = GraphEncoder(enc_cfg, len(vocab.forms), len(vocab.upos),
                                    vocab.num_labels, store)
        m = model_dim
        num_labels = vocab.num_labels
        self.pad_out = store.normal("cls.pad", (1, m))
        exist_in = (m if variant.graph_output == "cls" else 3 * m) + (m if variant.history else 0)
        self.exist_w1 = store.normal("cls.exist.w1", (exist_in, exist_hidden))
        self.exist_b1 = store.zeros("cls.exist.b1", (exist_hidden,))
        self.exist_w2 = store.normal("cls.exist.w2", (exist_hidden, len(ActionKind)))
        self.exist_b2 = store.zeros("cls.exist.b2", (len(ActionKind),))
        self.rel_w1 = store.normal("cls.rel.w1", (2 * m, relation_hidden))
        self.rel_b1 = store.zeros("cls.rel.b1", (relation_hidden,))
        self.rel_w2 = store.normal("cls.rel.w2", (relation_hidden, 2 * num_labels))
        self.rel_b2 = store.zeros("cls.rel.b2", (2 * num_labels,))
        if variant.composition:
            self.comp_w = store.normal("comp.w", (3 * m, m))
            self.comp_b = store.zeros("comp.b", (m,))
            # row 0 is the no-dependent label; rows 2l-1 / 2l are label l left / right
            self.comp_label = store.normal("comp.label", (2 * num_labels + 1, m))
        if variant.history:
            self.hist_wx = store.normal("hist.wx", (m, 4 * m))
            self.hist_wh = store.normal("hist.wh", (m, 4 * m))
            self.hist_b = store.zeros("hist.b", (4 * m,))
            self.hist_action = store.normal("hist.action", (len(ActionKind), m))
            self.hist_label = store.normal("hist.label", (num_labels + 1, m))
        self.store = store
        self.training = False

    # -- bookkeeping ---------------------------------------------------

    @property
    def model_dim(self) -> int:
        return self.dims["model_dim"]

    def train_mode(self, flag: bool = True) -> None:
        self.training = flag

    def parameters(self):
        return self.store.tensors()

    def zero_grads(self) -> None:
        self.store.zero_grads()

    def manifest_meta(self) -> dict:
        return {
            "variant": self.variant.flags(),
            "dims": self.dims,
            "seed": self.seed,
            "vocab": {"forms": self.vocab.forms, "upos": self.vocab.upos,
                      "deprel": self.vocab.deprel},
        }

    def save(self, path, extra_meta: dict | None = None) -> None:
        meta = self.manifest_meta()
        if extra_meta:
            meta.update(extra_meta)
        save_checkpoint(path, self.store.state_arrays(), meta)

    @classmethod
    def load(cls, path) -> "ParserModel":
        arrays, meta = load_checkpoint(path)
        try:
            variant = ModelVariant(**meta["variant"])
            vocab = conllu.Vocabulary(forms=meta["vocab"]["forms"],
                                      upos=meta["vocab"]["upos"],
                                      deprel=meta["vocab"]["deprel"])
            model = cls(variant, vocab, seed=meta["seed"], **meta["dims"])
        except (KeyError, TypeError) as exc:
            raise CheckpointError(f"{path}: malformed manifest ({exc})") from exc
        model.store.load_state_arrays(arrays)
        return model

    # -- input assembly --------------------------------------------------

    def sentence_token_ids(self, sentence) -> tuple[list[int], list[int]]:
        """Word/upos id sequences over nodes 0..n (0 is the root symbol)."""
        word_ids = [conllu.ROOT] + [self.vocab.form_id(t.form) for t in sentence.tokens]
        upos_ids = [0] + [self.vocab.upos_id(t.upos) for t in sentence.tokens]
        return word_ids, upos_ids

    def assemble_input(self, state: ParserState, word_ids, upos_ids,
                       graph: RelationMatrix, comp: CompositionState | None,
                       ) -> tuple[InputAssembly, RelationMatrix]:
        if self.variant.base == "state":
            return self._assemble_state(state, word_ids, upos_ids, graph, comp)
        return self._assemble_sentence(state, word_ids, upos_ids, graph)

    def _assemble_state(self, state, word_ids, upos_ids, graph, comp):
        entries: list[tuple[str, int | None]] = [("cls", None)]
        segments = [SEG_STACK]
        for tok in state.stack:
            entries.append(("tok", tok))
            segments.append(SEG_STACK)
        entries.append(("sep", None))
        segments.append(SEG_BUFFER)
        for tok in state.buffer:
            entries.append(("tok", tok))
            segments.append(SEG_BUFFER)
        if self.variant.graph_input:
            entries.append(("sep", None))
            segments.append(SEG_DELETED)
            for tok in state.deleted:
                entries.append(("tok", tok))
                segments.append(SEG_DELETED)
        w_ids, u_ids, sources = [], [], []
        for kind, tok in entries:
            if kind == "cls":
                w_ids.append(conllu.CLS)
                u_ids.append(0)
                sources.append(None)
            elif kind == "sep":
                w_ids.append(conllu.SEP)
                u_ids.append(0)
                sources.append(None)
            else:
                w_ids.append(word_ids[tok])
                u_ids.append(upos_ids[tok])
                sources.append(tok)
        composition = None
        if comp is not None:
            composition = [None if src is None else comp.vectors[src] for src in sources]
        relmat = graph.gather(sources)
        asm = InputAssembly(
            word_ids=w_ids, upos_ids=u_ids, position_ids=list(range(len(w_ids))),
            segment_ids=segments,
            dep_label_ids=list(relmat.dep_labels) if self.variant.graph_input else None,
            sources=sources, composition=composition)
        return asm, relmat

    def _assemble_sentence(self, state, word_ids, upos_ids, graph):
        n = len(word_ids) - 1
        w_ids = [conllu.CLS] + word_ids + [conllu.SEP]
        u_ids = [0] + upos_ids + [0]
        sources: list[int | None] = [None] + list(range(n + 1)) + [None]
        relmat = graph.gather(sources)
        asm = InputAssembly(
            word_ids=w_ids, upos_ids=u_ids, position_ids=list(range(len(w_ids))),
            segment_ids=None,
            dep_label_ids=list(relmat.dep_labels) if self.variant.graph_input else None,
            sources=sources)
        return asm, relmat

    # -- submodels ---------------------------------------------------------

    def init_composition(self, word_ids, upos_ids) -> CompositionState | None:
        if not self.variant.composition:
            return None
        base = self.encoder.token_embeddings(word_ids, upos_ids)
        vectors = {tok: ad.take_rows(base, [tok]) for tok in range(len(word_ids))}
        return CompositionState(vectors=vectors,
                                last_dep={tok: None for tok in range(len(word_ids))},
                                last_label={tok: 0 for tok in range(len(word_ids))})

    def _null_dependent(self) -> Tensor:
        return self.encoder.token_embeddings([conllu.NULL], [0])

    def comp_label_row(self, label_id: int, kind: ActionKind) -> int:
        offset = 1 if kind == ActionKind.LEFT_ARC else 2
        return 2 * (label_id - 1) + offset

    def compose_step(self, comp: CompositionState, action: Action, label_id: int,
                     state_before: ParserState) -> CompositionState:
        """Recompute composed embeddings after one transition.

        The only token that can have gained a dependent is the head of a new
        arc; every other stack/buffer token re-composes with its most recent
        dependent (or the null dependent).  Popped tokens keep their final
        embedding.  A skip connection biases each update toward the previous
        embedding.
        """
        new_last_dep = dict(comp.last_dep)
        new_last_label = dict(comp.last_label)
        active = set(state_before.stack) | set(state_before.buffer)
        if action.kind in ARC_KINDS:
            s1, s2 = state_before.stack[-1], state_before.stack[-2]
            head, dep = (s1, s2) if action.kind == ActionKind.LEFT_ARC else (s2, s1)
            new_last_dep[head] = comp.vectors[dep]
            new_last_label[head] = self.comp_label_row(label_id, action.kind)
            active.discard(dep)
        vectors = dict(comp.vectors)
        tokens = sorted(active)
        if tokens:
            # one batched update for every live slot
            null_dep = None
            omegas = []
            for tok in tokens:
                omega = new_last_dep[tok]
                if omega is None:
                    if null_dep is None:
                        null_dep = self._null_dependent()
                    omega = null_dep
                omegas.append(omega)
            psi = ad.concat([comp.vectors[tok] for tok in tokens], axis=0)
            packed = ad.concat([
                psi,
                ad.concat(omegas, axis=0),
                ad.rows(self.comp_label, [new_last_label[tok] for tok in tokens]),
            ], axis=1)
            composed = ad.add(ad.tanh(ad.add(ad.matmul(packed, self.comp_w), self.comp_b)), psi)
            for i, tok in enumerate(tokens):
                vectors[tok] = ad.take_rows(composed, [i])
        return CompositionState(vectors=vectors, last_dep=new_last_dep,
                                last_label=new_last_label)

    def init_history(self) -> HistoryState | None:
        if not self.variant.history:
            return None
        m = self.model_dim
        return HistoryState(h=ad.constant(np.zeros((1, m))), c=ad.constant(np.zeros((1, m))))

    def history_step(self, hist: HistoryState, kind: ActionKind, label_id: int) -> HistoryState:
        """One LSTM cell update over the taken transition (gate order i, f, g, o)."""
        m = self.model_dim
        x = ad.add(ad.rows(self.hist_action, [int(kind)]), ad.rows(self.hist_label, [label_id]))
        gates = ad.add(ad.add(ad.matmul(x, self.hist_wx), ad.matmul(hist.h, self.hist_wh)), self.hist_b)
        i = ad.sigmoid(ad.take_cols(gates, 0, m))
        f = ad.sigmoid(ad.take_cols(gates, m, 2 * m))
        g = ad.tanh(ad.take_cols(gates, 2 * m, 3 * m))
        o = ad.sigmoid(ad.take_cols(gates, 3 * m, 4 * m))
        c = ad.add(ad.mul(f, hist.c), ad.mul(i, g))
        return HistoryState(h=ad.mul(o, ad.tanh(c)), c=c)

    # -- classifiers -------------------------------------------------------

    def _slot_embedding(self, Z: Tensor, pos_of: dict, token: int | None) -> Tensor:
        if token is None:
            return self.pad_out
        return ad.take_rows(Z, [pos_of[token]])

    def predict_action(self, Z: Tensor, asm: InputAssembly, state: ParserState,
                       hist: HistoryState | None) -> Tensor:
        """Raw transition scores in ActionKind order; legality is applied downstream."""
        if self.variant.graph_output == "cls":
            feats = ad.take_rows(Z, [0])
        else:
            pos_of = {src: i for i, src in enumerate(asm.sources) if src is not None}
            feats = ad.concat([
                self._slot_embedding(Z, pos_of, state.s2),
                self._slot_embedding(Z, pos_of, state.s1),
                self._slot_embedding(Z, pos_of, state.b1),
            ], axis=1)
        if hist is not None:
            feats = ad.concat([feats, hist.h], axis=1)
        hidden = ad.relu(ad.add(ad.matmul(feats, self.exist_w1), self.exist_b1))
        hidden = ad.dropout(hidden, self.dims["dropout"], self.rng, self.training)
        return ad.add(ad.matmul(hidden, self.exist_w2), self.exist_b2)

    def predict_label(self, Z: Tensor, asm: InputAssembly, state: ParserState,
                      direction: ActionKind) -> Tensor:
        """Label scores for the block matching the arc direction."""
        if direction not in ARC_KINDS:
            raise ValueError(f"direction must be an arc kind, got {direction}")
        pos_of = {src: i for i, src in enumerate(asm.sources) if src is not None}
        feats = ad.concat([
            self._slot_embedding(Z, pos_of, state.s2),
            self._slot_embedding(Z, pos_of, state.s1),
        ], axis=1)
        hidden = ad.relu(ad.add(ad.matmul(feats, self.rel_w1), self.rel_b1))
        hidden = ad.dropout(hidden, self.dims["dropout"], self.rng, self.training)
        scores = ad.add(ad.matmul(hidden, self.rel_w2), self.rel_b2)
        num_labels = self.vocab.num_labels
        if direction == ActionKind.LEFT_ARC:
            return ad.take_cols(scores, 0, num_labels)
        return ad.take_cols(scores, num_labels, 2 * num_labels)


def legality_mask(state: ParserState) -> np.ndarray:
    mask = np.zeros(len(ActionKind), dtype=bool)
    for kind in legal_actions(state):
        mask[int(kind)] = True
    return mask


class ParseEpisode:
    """One sentence's walk through the transition system.

    Drives assembly, encoding and the classifiers; callers choose the action
    (gold during training, argmax during greedy decoding) and feed it back via
    advance().  Sentence-layout encoder outputs are cached until the graph
    grows, state-layout inputs change at every transition.
    """

    def __init__(self, model: ParserModel, sentence):
        self.model = model
        self.sentence = sentence
        self.n = len(sentence)
        self.state = initial_state(sentence)
        self.graph = RelationMatrix.empty(self.n + 1)
        self.word_ids, self.upos_ids = model.sentence_token_ids(sentence)
        self.comp = model.init_composition(self.word_ids, self.upos_ids)
        self.hist = model.init_history()
        self._cache_key = None
        self._cache: tuple[Tensor, InputAssembly] | None = None

    def encode_current(self) -> tuple[Tensor, InputAssembly]:
        model = self.model
        if model.variant.base == "sentence":
            key = len(self.state.arcs) if model.variant.graph_input else 0
            if self._cache is not None and self._cache_key == key:
                return self._cache
        asm, relmat = model.assemble_input(self.state, self.word_ids, self.upos_ids,
                                           self.graph, self.comp)
        Z = model.encoder.encode(asm, relmat, model.rng, model.training)
        if model.variant.base == "sentence":
            self._cache_key = len(self.state.arcs) if model.variant.graph_input else 0
            self._cache = (Z, asm)
        return Z, asm

    def action_scores(self) -> tuple[Tensor, np.ndarray, Tensor, InputAssembly]:
        Z, asm = self.encode_current()
        scores = self.model.predict_action(Z, asm, self.state, self.hist)
        return scores, legality_mask(self.state), Z, asm

    def label_scores(self, Z: Tensor, asm: InputAssembly, direction: ActionKind) -> Tensor:
        return self.model.predict_label(Z, asm, self.state, direction)

    def advance(self, action: Action, label_id: int = 0) -> None:
        """Apply the chosen transition and update graph/composition/history."""
        if action.kind in ARC_KINDS:
            s1, s2 = self.state.stack[-1], self.state.stack[-2]
            head, dep = (s1, s2) if action.kind == ActionKind.LEFT_ARC else (s2, s1)
            self.graph.add_arc(head, dep, label_id)
        if self.comp is not None:
            self.comp = self.model.compose_step(self.comp, action, label_id, self.state)
        if self.hist is not None:
            self.hist = self.model.history_step(self.hist, action.kind, label_id)
        self.state = apply(self.state, action)

    def greedy_step(self) -> Action:
        """Pick the highest scoring legal transition, predict its label, advance."""
        scores, mask, Z, asm = self.action_scores()
        masked = np.where(mask, scores.data.reshape(-1), -np.inf)
        kind = ActionKind(int(np.argmax(masked)))
        if kind in ARC_KINDS:
            label_scores = self.label_scores(Z, asm, kind)
            label_id = int(np.argmax(label_scores.data.reshape(-1))) + 1
            action = Action(kind, self.model.vocab.deprel_name(label_id))
        else:
            label_id = 0
            action = Action(kind)
        self.advance(action, label_id)
        return action

    def run_greedy(self) -> ParserState:
        limit = self.n * (self.n + 1) + 1
        steps = 0
        while not is_terminal(self.state):
            self.greedy_step()
            steps += 1
            if steps > limit:
                raise RuntimeError(f"greedy parse exceeded {limit} transitions")
        return self.state


def parse_sentence(model: ParserModel, sentence) -> conllu.AnnotatedSentence:
    """Greedy-parse one sentence into a predicted tree."""
    final = ParseEpisode(model, sentence).run_greedy()
    heads = {dep: (head, label) for head, dep, label in final.arcs}
    tokens = []
    for t in sentence.tokens:
        head, label = heads[t.id]
        tokens.append(conllu.TokenRecord(id=t.id, form=t.form, upos=t.upos,
                                         head=head, deprel=str(label),
                                         is_punct=t.is_punct))
    return conllu.AnnotatedSentence(tokens=tokens, comments=list(sentence.comments))
