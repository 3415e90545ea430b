"""Attachment scoring and error analysis.

UAS/LAS follow the usual conventions: punctuation is either scored (UD
style) or dropped from numerator and denominator (WSJ style), decided by the
gold token's punctuation flag.  The analysis bins labelled F-scores by
dependency length and by distance to the root word, and LAS by sentence
length, plus a per-label table.

Binned F-score: precision counts predicted arcs falling in the bin, recall
counts gold arcs in the bin; an arc is correct when head and label both
match.  Root distances are measured on each side's own tree.
"""

from __future__ import annotations

from dataclasses import dataclass, field

INCLUDE_PUNCT = "include"
EXCLUDE_PUNCT = "exclude"

DISTANCE_BINS = ["ROOT"] + [str(i) for i in range(1, 10)] + [">=10"]
SENT_LENGTH_BINS = ["1-9", "10-19", "20-29", "30-39", "40-49", ">=50"]


class EvalError(Exception):
    pass


@dataclass
class EvalConfig:
    punctuation: str = INCLUDE_PUNCT

    def __post_init__(self):
        if self.punctuation not in (INCLUDE_PUNCT, EXCLUDE_PUNCT):
            raise ValueError(f"punctuation mode must be include or exclude, got {self.punctuation!r}")

    @property
    def exclude_punct(self) -> bool:
        return self.punctuation == EXCLUDE_PUNCT


def _check_alignment(gold, predicted):
    if len(gold) != len(predicted):
        raise EvalError(f"corpus size mismatch: {len(gold)} gold vs {len(predicted)} predicted sentences")
    for g, p in zip(gold, predicted):
        if len(g.tokens) != len(p.tokens):
            raise EvalError(f"sentence {g.sent_id}: {len(g.tokens)} gold tokens vs {len(p.tokens)} predicted")


def _scored_pairs(gold, predicted, cfg: EvalConfig):
    """Yield (gold_sent, gold_token, predicted_token) for every scored token."""
    for g, p in zip(gold, predicted):
        for gt, pt in zip(g.tokens, p.tokens):
            if cfg.exclude_punct and gt.is_punct:
                continue
            yield g, gt, pt


def score(gold, predicted, cfg: EvalConfig | None = None) -> tuple[float, float]:
    """(UAS, LAS) in percent over the scored tokens."""
    cfg = cfg or EvalConfig()
    _check_alignment(gold, predicted)
    scored = head_ok = both_ok = 0
    for _, gt, pt in _scored_pairs(gold, predicted, cfg):
        scored += 1
        if pt.head == gt.head:
            head_ok += 1
            if pt.deprel == gt.deprel:
                both_ok += 1
    if scored == 0:
        return 0.0, 0.0
    return 100.0 * head_ok / scored, 100.0 * both_ok / scored


def relative_error_reduction(las_old: float, las_new: float) -> float:
    """Percentage of the old error mass removed: (new - old) / (100 - old) * 100."""
    if not (0.0 <= las_old <= 100.0 and 0.0 <= las_new <= 100.0):
        raise ValueError("attachment scores must lie in [0, 100]")
    if las_old == 100.0:
        raise ValueError("relative error reduction undefined at las_old = 100")
    return (las_new - las_old) / (100.0 - las_old) * 100.0


@dataclass
class BinTable:
    bins: list[str]
    gold_counts: dict[str, int] = field(default_factory=dict)
    pred_counts: dict[str, int] = field(default_factory=dict)
    tp_gold: dict[str, int] = field(default_factory=dict)
    tp_pred: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        for b in self.bins:
            self.gold_counts.setdefault(b, 0)
            self.pred_counts.setdefault(b, 0)
            self.tp_gold.setdefault(b, 0)
            self.tp_pred.setdefault(b, 0)

    def f_score(self, b: str) -> float:
        precision = self.tp_pred[b] / self.pred_counts[b] if self.pred_counts[b] else 0.0
        recall = self.tp_gold[b] / self.gold_counts[b] if self.gold_counts[b] else 0.0
        if precision + recall == 0.0:
            return 0.0
        return 200.0 * precision * recall / (precision + recall)

    def rows(self):
        for b in self.bins:
            yield b, self.f_score(b), self.gold_counts[b], self.pred_counts[b]


def _distance_bin(value: int) -> str:
    return str(value) if value < 10 else ">=10"


def _length_bin(head: int, dep: int) -> str:
    return "ROOT" if head == 0 else _distance_bin(abs(head - dep))


def bin_dependency_length(gold, predicted, cfg: EvalConfig | None = None) -> BinTable:
    """Labelled F-score per dependency length; root attachments get their own bin."""
    cfg = cfg or EvalConfig()
    _check_alignment(gold, predicted)
    table = BinTable(bins=list(DISTANCE_BINS))
    for _, gt, pt in _scored_pairs(gold, predicted, cfg):
        gbin = _length_bin(gt.head, gt.id)
        pbin = _length_bin(pt.head, pt.id)
        table.gold_counts[gbin] += 1
        table.pred_counts[pbin] += 1
        if pt.head == gt.head and pt.deprel == gt.deprel:
            table.tp_gold[gbin] += 1
            table.tp_pred[pbin] += 1
    return table


def root_depths(sentence) -> dict[int, int]:
    """Arcs on the path from each token to the sentence's root word (root word: 0)."""
    children: dict[int, list[int]] = {i: [] for i in range(len(sentence.tokens) + 1)}
    for t in sentence.tokens:
        children[t.head].append(t.id)
    depth = {}
    stack = [(0, -1)]
    while stack:
        node, d = stack.pop()
        if node > 0:
            depth[node] = d
        for child in children[node]:
            stack.append((child, d + 1))
    return depth


def _depth_bin(depth: int) -> str:
    return "ROOT" if depth == 0 else _distance_bin(depth)


def bin_root_distance(gold, predicted, cfg: EvalConfig | None = None) -> BinTable:
    """Labelled F-score per distance to the root word, each side on its own tree."""
    cfg = cfg or EvalConfig()
    _check_alignment(gold, predicted)
    table = BinTable(bins=list(DISTANCE_BINS))
    for g, p in zip(gold, predicted):
        gold_depth = root_depths(g)
        pred_depth = root_depths(p)
        for gt, pt in zip(g.tokens, p.tokens):
            if cfg.exclude_punct and gt.is_punct:
                continue
            gbin = _depth_bin(gold_depth[gt.id])
            pbin = _depth_bin(pred_depth[pt.id])
            table.gold_counts[gbin] += 1
            table.pred_counts[pbin] += 1
            if pt.head == gt.head and pt.deprel == gt.deprel:
                table.tp_gold[gbin] += 1
                table.tp_pred[pbin] += 1
    return table


def _sentence_bin(length: int) -> str:
    if length >= 50:
        return ">=50"
    if length <= 9:
        return "1-9"
    lo = (length // 10) * 10
    return f"{lo}-{lo + 9}"


def bin_sentence_length(gold, predicted, cfg: EvalConfig | None = None):
    """LAS per sentence-length bin: list of (bin, las, scored_tokens)."""
    cfg = cfg or EvalConfig()
    _check_alignment(gold, predicted)
    scored = {b: 0 for b in SENT_LENGTH_BINS}
    correct = {b: 0 for b in SENT_LENGTH_BINS}
    for g, p in zip(gold, predicted):
        if not g.tokens:
            continue
        b = _sentence_bin(len(g.tokens))
        for gt, pt in zip(g.tokens, p.tokens):
            if cfg.exclude_punct and gt.is_punct:
                continue
            scored[b] += 1
            if pt.head == gt.head and pt.deprel == gt.deprel:
                correct[b] += 1
    return [(b, 100.0 * correct[b] / scored[b] if scored[b] else 0.0, scored[b])
            for b in SENT_LENGTH_BINS]


@dataclass
class LabelScore:
    label: str
    f: float
    gold_count: int
    pred_count: int


def deprel_table(gold, predicted, cfg: EvalConfig | None = None) -> list[LabelScore]:
    """Per-label F-score; labels absent from both sides are omitted."""
    cfg = cfg or EvalConfig()
    _check_alignment(gold, predicted)
    gold_counts: dict[str, int] = {}
    pred_counts: dict[str, int] = {}
    tp: dict[str, int] = {}
    for _, gt, pt in _scored_pairs(gold, predicted, cfg):
        gold_counts[gt.deprel] = gold_counts.get(gt.deprel, 0) + 1
        pred_counts[pt.deprel] = pred_counts.get(pt.deprel, 0) + 1
        if pt.head == gt.head and pt.deprel == gt.deprel:
            tp[gt.deprel] = tp.get(gt.deprel, 0) + 1
    out = []
    for label in sorted(set(gold_counts) | set(pred_counts)):
        g = gold_counts.get(label, 0)
        p = pred_counts.get(label, 0)
        t = tp.get(label, 0)
        precision = t / p if p else 0.0
        recall = t / g if g else 0.0
        f = 200.0 * precision * recall / (precision + recall) if precision + recall else 0.0
        out.append(LabelScore(label=label, f=f, gold_count=g, pred_count=p))
    return out


def deprel_comparison(reference: list[LabelScore], other: list[LabelScore]) -> list[tuple[str, float, float, float]]:
    """(label, ref_f, other_f, rer) with the reduction computed against the reference score."""
    ref = {s.label: s.f for s in reference}
    oth = {s.label: s.f for s in other}
    rows = []
    for label in sorted(set(ref) & set(oth)):
        if ref[label] == 100.0:
            continue
        rer = relative_error_reduction(ref[label], oth[label])
        rows.append((label, ref[label], oth[label], rer))
    rows.sort(key=lambda r: r[3])
    return rows


@dataclass
class ErrorReport:
    uas: float
    las: float
    dependency_length: BinTable
    root_distance: BinTable
    sentence_length: list
    labels: list[LabelScore]

    def to_text(self) -> str:
        lines = [f"UAS\t{self.uas:.2f}", f"LAS\t{self.las:.2f}", ""]
        for title, table in (("labelled F-score by dependency length", self.dependency_length),
                             ("labelled F-score by distance to root", self.root_distance)):
            lines.append(f"# {title}")
            lines.append("bin\tf\tgold\tpredicted")
            for b, f, g, p in table.rows():
                lines.append(f"{b}\t{f:.2f}\t{g}\t{p}")
            lines.append("")
        lines.append("# LAS by sentence length")
        lines.append("bin\tlas\ttokens")
        for b, las, count in self.sentence_length:
            lines.append(f"{b}\t{las:.2f}\t{count}")
        lines.append("")
        lines.append("# F-score by dependency label")
        lines.append("label\tf\tgold\tpredicted")
        for s in self.labels:
            lines.append(f"{s.label}\t{s.f:.2f}\t{s.gold_count}\t{s.pred_count}")
        lines.append("")
        return "\n".join(lines)


def analyze(gold, predicted, cfg: EvalConfig | None = None) -> ErrorReport:
    cfg = cfg or EvalConfig()
    uas, las = score(gold, predicted, cfg)
    return ErrorReport(
        uas=uas, las=las,
        dependency_length=bin_dependency_length(gold, predicted, cfg),
        root_distance=bin_root_distance(gold, predicted, cfg),
        sentence_length=bin_sentence_length(gold, predicted, cfg),
        labels=deprel_table(gold, predicted, cfg),
    )
