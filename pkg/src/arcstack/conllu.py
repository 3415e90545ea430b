"""CoNLL-U treebank reading, writing, validation and vocabulary building.

Only the columns the parser consumes are kept: id, form, upos, head, deprel.
Multi-word token ranges ("3-4") and empty nodes ("5.1") are skipped on read.
Sentences whose head column does not form a single tree rooted at 0 are
rejected.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field


class ConlluError(Exception):
    """Base error for treebank I/O problems."""


class ParseError(ConlluError):
    """Malformed CoNLL-U input; carries the offending line number."""

    def __init__(self, path, line_no, message):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = path
        self.line_no = line_no


class TreeValidationError(ConlluError):
    """The head column of a sentence is not a single rooted tree."""

    def __init__(self, sent_id, message):
        super().__init__(f"sentence {sent_id}: {message}")
        self.sent_id = sent_id


# punctuation detection rules: UD treebanks mark punctuation with the PUNCT
# tag, Stanford-style conversions with the "punct" relation
PUNCT_BY_UPOS = "upos"
PUNCT_BY_DEPREL = "deprel"


@dataclass(eq=True)
class TokenRecord:
    id: int          # 1-based position in the sentence
    form: str
    upos: str
    head: int        # 0 means the artificial root
    deprel: str
    is_punct: bool = False


@dataclass(eq=True)
class AnnotatedSentence:
    tokens: list[TokenRecord]
    comments: list[str] = field(default_factory=list)

    def __len__(self):
        return len(self.tokens)

    @property
    def sent_id(self) -> str:
        for c in self.comments:
            if c.startswith("# sent_id"):
                _, _, value = c.partition("=")
                return value.strip()
        return "<unknown>"

    def heads(self) -> list[int]:
        return [t.head for t in self.tokens]

    def labels(self) -> list[str]:
        return [t.deprel for t in self.tokens]

    def arc_set(self) -> set[tuple[int, int, str]]:
        """Gold arcs as (head, dependent, label) triples."""
        return {(t.head, t.id, t.deprel) for t in self.tokens}


def _is_punct(upos: str, deprel: str, rule: str) -> bool:
    if rule == PUNCT_BY_UPOS:
        return upos == "PUNCT"
    if rule == PUNCT_BY_DEPREL:
        return deprel == "punct"
    raise ValueError(f"unknown punctuation rule: {rule!r}")


def validate_tree(sentence: AnnotatedSentence, sent_id: str | None = None) -> None:
    """Check heads form a single tree rooted at 0; raise TreeValidationError."""
    sid = sent_id if sent_id is not None else sentence.sent_id
    n = len(sentence)
    children: dict[int, list[int]] = {i: [] for i in range(n + 1)}
    roots = 0
    for t in sentence.tokens:
        if t.head == t.id:
            raise TreeValidationError(sid, f"token {t.id} is its own head")
        if not 0 <= t.head <= n:
            raise TreeValidationError(sid, f"token {t.id} has head {t.head} out of range")
        if t.head == 0:
            roots += 1
        children[t.head].append(t.id)
    if n > 0 and roots == 0:
        raise TreeValidationError(sid, "no token attaches to the root")
    if roots > 1:
        raise TreeValidationError(sid, f"{roots} tokens attach to the root; multi-root trees are rejected")
    # every token must be reachable from node 0 (DFS); unreached => cycle
    seen = set()
    stack = [0]
    while stack:
        node = stack.pop()
        if node in seen:
            continue
        seen.add(node)
        stack.extend(children[node])
    if len(seen) != n + 1:
        missing = sorted(set(range(n + 1)) - seen)
        raise TreeValidationError(sid, f"cycle detected; tokens {missing} unreachable from root")


def read_conllu(path, punct_rule: str = PUNCT_BY_UPOS) -> list[AnnotatedSentence]:
    """Read a CoNLL-U file into validated sentences, in file order."""
    sentences: list[AnnotatedSentence] = []
    comments: list[str] = []
    tokens: list[TokenRecord] = []

    def flush(line_no):
        if not tokens and not comments:
            return
        sent = AnnotatedSentence(tokens=list(tokens), comments=list(comments))
        expected = 1
        for t in sent.tokens:
            if t.id != expected:
                raise ParseError(path, line_no, f"token ids not contiguous (saw {t.id}, expected {expected})")
            expected += 1
        validate_tree(sent)
        sentences.append(sent)
        comments.clear()
        tokens.clear()

    with open(path, encoding="utf-8") as handle:
        line_no = 0
        for raw in handle:
            line_no += 1
            line = raw.rstrip("\n")
            if line == "":
                flush(line_no)
                continue
            if line.startswith("#"):
                comments.append(line)
                continue
            cols = line.split("\t")
            if len(cols) != 10:
                raise ParseError(path, line_no, f"expected 10 tab-separated columns, got {len(cols)}")
            tok_id = cols[0]
            if "-" in tok_id or "." in tok_id:
                continue  # multi-word token range or empty node
            try:
                idx = int(tok_id)
            except ValueError:
                raise ParseError(path, line_no, f"non-integer token id {tok_id!r}") from None
            try:
                head = int(cols[6])
            except ValueError:
                raise ParseError(path, line_no, f"non-integer head {cols[6]!r}") from None
            upos, deprel = cols[3], cols[7]
            tokens.append(TokenRecord(
                id=idx, form=cols[1], upos=upos, head=head, deprel=deprel,
                is_punct=_is_punct(upos, deprel, punct_rule),
            ))
        flush(line_no + 1)
    return sentences


def write_conllu(sentences, path) -> None:
    """Serialize sentences; unfilled columns get "_". Comments written verbatim."""
    try:
        with open(path, "w", encoding="utf-8") as handle:
            for sent in sentences:
                for comment in sent.comments:
                    handle.write(comment + "\n")
                for t in sent.tokens:
                    handle.write("\t".join([
                        str(t.id), t.form, "_", t.upos, "_", "_",
                        str(t.head), t.deprel, "_", "_",
                    ]) + "\n")
                handle.write("\n")
    except OSError as exc:
        raise ConlluError(f"cannot write {path}: {exc}") from exc


# reserved vocabulary slots; ids 0-5 are stable across save/load
PAD, UNK, ROOT, CLS, SEP, NULL = range(6)
RESERVED_FORMS = ["[PAD]", "[UNK]", "[ROOT]", "[CLS]", "[SEP]", "[NULL]"]
NULL_TAG = "[NULL]"
NULL_LABEL = "[NULL]"


@dataclass
class Vocabulary:
    """Closed string-to-id maps for forms, PoS tags and dependency labels.

    Forms below the frequency threshold map to UNK.  The upos and deprel maps
    reserve id 0 for the NULL symbol (used for special tokens and for not yet
    attached words).
    """

    forms: dict[str, int]
    upos: dict[str, int]
    deprel: dict[str, int]

    def form_id(self, form: str) -> int:
        return self.forms.get(form, UNK)

    def upos_id(self, tag: str) -> int:
        return self.upos.get(tag, 0)

    def deprel_id(self, label: str) -> int:
        return self.deprel.get(label, 0)

    @property
    def num_labels(self) -> int:
        """Real dependency labels, NULL excluded."""
        return len(self.deprel) - 1

    def deprel_name(self, label_id: int) -> str:
        for name, idx in self.deprel.items():
            if idx == label_id:
                return name
        raise KeyError(label_id)

    def label_names(self) -> list[str]:
        """Real label names ordered by id (1..num_labels)."""
        by_id = sorted((i, name) for name, i in self.deprel.items() if i > 0)
        return [name for _, name in by_id]

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            for section, mapping in (("forms", self.forms), ("upos", self.upos), ("deprel", self.deprel)):
                handle.write(f"#section\t{section}\n")
                for token, idx in sorted(mapping.items(), key=lambda kv: kv[1]):
                    handle.write(f"{token}\t{idx}\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        sections: dict[str, dict[str, int]] = {"forms": {}, "upos": {}, "deprel": {}}
        current = None
        with open(path, encoding="utf-8") as handle:
            for line in handle:
                line = line.rstrip("\n")
                if not line:
                    continue
                if line.startswith("#section\t"):
                    current = line.split("\t", 1)[1]
                    continue
                token, idx = line.rsplit("\t", 1)
                sections[current][token] = int(idx)
        return cls(forms=sections["forms"], upos=sections["upos"], deprel=sections["deprel"])


def _ranked(counter: Counter) -> list[str]:
    # frequency first, lexicographic to break ties: deterministic ids
    return [item for item, _ in sorted(counter.items(), key=lambda kv: (-kv[1], kv[0]))]


def build_vocab(sentences, min_freq: int = 2) -> Vocabulary:
    """Build deterministic vocabularies; forms rarer than min_freq become UNK."""
    if min_freq < 1:
        raise ValueError("min_freq must be >= 1")
    form_counts: Counter = Counter()
    upos_counts: Counter = Counter()
    deprel_counts: Counter = Counter()
    for sent in sentences:
        for t in sent.tokens:
            form_counts[t.form] += 1
            upos_counts[t.upos] += 1
            deprel_counts[t.deprel] += 1

    forms = {name: i for i, name in enumerate(RESERVED_FORMS)}
    for form in _ranked(form_counts):
        if form_counts[form] >= min_freq:
            forms[form] = len(forms)

    upos = {NULL_TAG: 0}
    for tag in _ranked(upos_counts):
        upos[tag] = len(upos)

    deprel = {NULL_LABEL: 0}
    for label in _ranked(deprel_counts):
        deprel[label] = len(deprel)

    return Vocabulary(forms=forms, upos=upos, deprel=deprel)
