"""Graph-conditioned multi-head attention encoder.

Attention is standard scaled dot-product except that every token pair
carries one of three relation codes (none / head-of / dependent-of); a
learned embedding of the code is added to the key inside the score and to
the value inside the weighted sum.  With those embeddings zeroed the layer
reduces exactly to vanilla attention.  Dependency labels enter separately,
as embeddings added to the input embedding of the dependent token.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import ParamStore, Tensor

CODE_NONE = 0
CODE_HEAD = 1   # row token is the head of the column token
CODE_DEP = 2    # row token is a dependent of the column token
NUM_CODES = 3


class RelationMatrix:
    """Pairwise relation codes plus the per-token attachment label (0 = none)."""

    __slots__ = ("codes", "dep_labels")

    def __init__(self, codes: np.ndarray, dep_labels: np.ndarray):
        self.codes = codes
        self.dep_labels = dep_labels

    @classmethod
    def empty(cls, n: int) -> "RelationMatrix":
        return cls(np.zeros((n, n), dtype=np.int64), np.zeros(n, dtype=np.int64))

    @classmethod
    def from_arcs(cls, n: int, arcs) -> "RelationMatrix":
        """Build codes over nodes 0..n-1 from (head, dependent, label_id) triples."""
        rel = cls.empty(n)
        for head, dep, label_id in arcs:
            rel.add_arc(head, dep, label_id)
        return rel

    def add_arc(self, head: int, dep: int, label_id: int) -> None:
        self.codes[head, dep] = CODE_HEAD
        self.codes[dep, head] = CODE_DEP
        self.dep_labels[dep] = label_id

    def gather(self, sources) -> "RelationMatrix":
        """Project onto a token sequence; None sources (special symbols) get no relations."""
        n = len(sources)
        out = RelationMatrix.empty(n)
        pos = np.array([i for i, s in enumerate(sources) if s is not None], dtype=np.int64)
        if pos.size:
            src = np.array([sources[i] for i in pos], dtype=np.int64)
            out.codes[np.ix_(pos, pos)] = self.codes[np.ix_(src, src)]
            out.dep_labels[pos] = self.dep_labels[src]
        return out

    def copy(self) -> "RelationMatrix":
        return RelationMatrix(self.codes.copy(), self.dep_labels.copy())

    def validate(self) -> None:
        codes = self.codes
        if np.any(np.diag(codes) != CODE_NONE):
            raise AssertionError("relation matrix has a nonzero diagonal")
        if not np.array_equal(codes == CODE_HEAD, codes.T == CODE_DEP):
            raise AssertionError("head/dependent codes are not mirrored")
        attached = np.zeros(len(self.dep_labels), dtype=bool)
        heads_of = np.nonzero(codes == CODE_HEAD)
        attached[heads_of[1]] = True
        if not np.array_equal(attached, self.dep_labels != 0):
            raise AssertionError("dep_labels inconsistent with codes")


@dataclass
class EncoderConfig:
    layers: int = 2
    heads: int = 4
    model_dim: int = 64
    ff_dim: int = 128
    max_positions: int = 512
    segment_count: int = 0        # 0 disables segment embeddings (sentence layout)
    dropout: float = 0.05
    graph_input: bool = True

    def __post_init__(self):
        if self.model_dim % self.heads != 0:
            raise ValueError(f"model_dim {self.model_dim} not divisible by heads {self.heads}")

    @property
    def head_dim(self) -> int:
        return self.model_dim // self.heads


@dataclass
class InputAssembly:
    """Aligned id sequences for one encoder call, plus provenance pointers."""

    word_ids: list[int]
    upos_ids: list[int]
    position_ids: list[int]
    segment_ids: list[int] | None = None
    dep_label_ids: list[int] | None = None
    sources: list[int | None] = field(default_factory=list)  # sentence token per position
    composition: list[Tensor | None] | None = None           # per-position override of T_w
    mask: np.ndarray | None = None

    def __len__(self):
        return len(self.word_ids)


class EncoderLayer:
    def __init__(self, store: ParamStore, prefix: str, cfg: EncoderConfig):
        m, d = cfg.model_dim, cfg.head_dim
        self.cfg = cfg
        self.heads = []
        for h in range(cfg.heads):
            self.heads.append((
                store.normal(f"{prefix}.h{h}.wq", (m, d)),
                store.normal(f"{prefix}.h{h}.wk", (m, d)),
                store.normal(f"{prefix}.h{h}.wv", (m, d)),
            ))
        # relation embeddings are shared by the heads of one layer
        self.wl1 = store.normal(f"{prefix}.graph.wl1", (NUM_CODES, d)) if cfg.graph_input else None
        self.wl2 = store.normal(f"{prefix}.graph.wl2", (NUM_CODES, d)) if cfg.graph_input else None
        self.wo = store.normal(f"{prefix}.attn.wo", (m, m))
        self.bo = store.zeros(f"{prefix}.attn.bo", (m,))
        self.ln1_gain = store.ones(f"{prefix}.ln1.gain", (m,))
        self.ln1_bias = store.zeros(f"{prefix}.ln1.bias", (m,))
        self.ff_w1 = store.normal(f"{prefix}.ff.w1", (m, cfg.ff_dim))
        self.ff_b1 = store.zeros(f"{prefix}.ff.b1", (cfg.ff_dim,))
        self.ff_w2 = store.normal(f"{prefix}.ff.w2", (cfg.ff_dim, m))
        self.ff_b2 = store.zeros(f"{prefix}.ff.b2", (m,))
        self.ln2_gain = store.ones(f"{prefix}.ln2.gain", (m,))
        self.ln2_bias = store.zeros(f"{prefix}.ln2.bias", (m,))

    def attention_scores(self, x: Tensor, codes, head: int, wl1_t: Tensor | None = None) -> Tensor:
        """e[i,j] = q_i . (k_j + rel_emb(code_ij)) / sqrt(d)"""
        wq, wk, _ = self.heads[head]
        q = ad.matmul(x, wq)
        e = ad.matmul(q, ad.transpose(ad.matmul(x, wk)))
        if self.wl1 is not None and codes is not None:
            if wl1_t is None:
                wl1_t = ad.transpose(self.wl1)
            e = ad.add(e, ad.relation_gather(ad.matmul(q, wl1_t), codes))
        return ad.scale(e, 1.0 / math.sqrt(self.cfg.head_dim))

    def attention_values(self, alpha: Tensor, x: Tensor, codes, head: int) -> Tensor:
        """z_i = sum_j alpha_ij (v_j + rel_emb(code_ij))"""
        _, _, wv = self.heads[head]
        z = ad.matmul(alpha, ad.matmul(x, wv))
        if self.wl2 is not None and codes is not None:
            z = ad.add(z, ad.matmul(ad.relation_mix(alpha, codes, NUM_CODES), self.wl2))
        return z

    def forward(self, x: Tensor, codes, mask, rng, training: bool) -> Tensor:
        wl1_t = ad.transpose(self.wl1) if (self.wl1 is not None and codes is not None) else None
        outs = []
        for h in range(self.cfg.heads):
            alpha = ad.softmax_rows(self.attention_scores(x, codes, h, wl1_t), mask)
            outs.append(self.attention_values(alpha, x, codes, h))
        attn = ad.add(ad.matmul(ad.concat(outs, axis=1), self.wo), self.bo)
        attn = ad.dropout(attn, self.cfg.dropout, rng, training)
        x = ad.layer_norm(ad.add(x, attn), self.ln1_gain, self.ln1_bias)
        ff = ad.add(ad.matmul(ad.relu(ad.add(ad.matmul(x, self.ff_w1), self.ff_b1)), self.ff_w2), self.ff_b2)
        ff = ad.dropout(ff, self.cfg.dropout, rng, training)
        return ad.layer_norm(ad.add(x, ff), self.ln2_gain, self.ln2_bias)


class GraphEncoder:
    """Embedding tables plus the stack of graph-conditioned attention layers."""

    def __init__(self, cfg: EncoderConfig, num_words: int, num_upos: int,
                 num_labels: int, store: ParamStore):
        m = cfg.model_dim
        self.cfg = cfg
        self.word_table = store.normal("emb.word", (num_words, m))
        self.upos_table = store.normal("emb.upos", (num_upos, m))
        self.position_table = store.normal("emb.position", (cfg.max_positions, m))
        self.segment_table = store.normal("emb.segment", (cfg.segment_count, m)) if cfg.segment_count else None
        if cfg.graph_input:
            self.label_table = store.normal("emb.label", (num_labels + 1, m))
            self.label_table.data[0, :] = 0.0  # NULL row pinned to zero
        else:
            self.label_table = None
        self.layers = [EncoderLayer(store, f"enc.L{i}", cfg) for i in range(cfg.layers)]

    def token_embeddings(self, word_ids, upos_ids) -> Tensor:
        """T_w: word embedding plus PoS embedding."""
        return ad.add(ad.rows(self.word_table, word_ids), ad.rows(self.upos_table, upos_ids))

    def embed(self, assembly: InputAssembly) -> Tensor:
        n = len(assembly)
        if n > self.cfg.max_positions:
            raise ValueError(f"sequence of {n} tokens exceeds max_positions={self.cfg.max_positions}")
        if assembly.composition is None:
            x = self.token_embeddings(assembly.word_ids, assembly.upos_ids)
        else:
            rows_list = []
            for i, comp in enumerate(assembly.composition):
                if comp is not None:
                    rows_list.append(comp)
                else:
                    rows_list.append(self.token_embeddings(assembly.word_ids[i:i + 1],
                                                           assembly.upos_ids[i:i + 1]))
            x = ad.concat(rows_list, axis=0)
        x = ad.add(x, ad.rows(self.position_table, assembly.position_ids))
        if self.segment_table is not None and assembly.segment_ids is not None:
            x = ad.add(x, ad.rows(self.segment_table, assembly.segment_ids))
        if self.label_table is not None and assembly.dep_label_ids is not None:
            ids = np.asarray(assembly.dep_label_ids, dtype=np.int64)
            label_terms = ad.rows(self.label_table, ids)
            attached = ad.constant((ids != 0).astype(np.float64).reshape(-1, 1))
            x = ad.add(x, ad.mul(label_terms, attached))
        return x

    def encode(self, assembly: InputAssembly, relmat: RelationMatrix | None,
               rng=None, training: bool = False) -> Tensor:
        codes = relmat.codes if (relmat is not None and self.cfg.graph_input) else None
        x = self.embed(assembly)
        for layer in self.layers:
            x = layer.forward(x, codes, assembly.mask, rng, training)
        return x
