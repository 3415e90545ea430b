import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from arcstack.conllu import AnnotatedSentence, TokenRecord

DATA_DIR = Path(__file__).resolve().parent / "data"

UPOS_CYCLE = ["NOUN", "VERB", "ADJ", "ADV", "PRON"]
LABEL_CYCLE = ["nsubj", "obj", "nmod", "det", "advmod"]


def sentence_from_heads(heads, labels=None, forms=None, upos=None, sent_id="gen"):
    """Build an AnnotatedSentence from 1-based head values (0 = root)."""
    n = len(heads)
    if labels is None:
        labels = ["root" if h == 0 else LABEL_CYCLE[i % len(LABEL_CYCLE)] for i, h in enumerate(heads)]
    if forms is None:
        forms = [f"w{i + 1}" for i in range(n)]
    if upos is None:
        upos = [UPOS_CYCLE[i % len(UPOS_CYCLE)] for i in range(n)]
    tokens = [
        TokenRecord(id=i + 1, form=forms[i], upos=upos[i], head=heads[i],
                    deprel=labels[i], is_punct=upos[i] == "PUNCT")
        for i in range(n)
    ]
    return AnnotatedSentence(tokens=tokens, comments=[f"# sent_id = {sent_id}"])


def random_projective_heads(n, rng):
    heads = [0] * (n + 1)
    spans = [(1, n, 0)]
    while spans:
        lo, hi, parent = spans.pop()
        if lo > hi:
            continue
        h = int(rng.integers(lo, hi + 1))
        heads[h] = parent
        spans.append((lo, h - 1, h))
        spans.append((h + 1, hi, h))
    return heads[1:]


def random_heads(n, rng):
    """Random single-rooted tree; linear order ignored, so often non-projective."""
    order = list(rng.permutation(n) + 1)
    heads = [0] * (n + 1)
    attached = [order[0]]
    heads[order[0]] = 0
    for tok in order[1:]:
        heads[tok] = int(attached[int(rng.integers(0, len(attached)))])
        attached.append(tok)
    return heads[1:]


def random_sentence(n, rng, projective=False, sent_id="gen"):
    heads = random_projective_heads(n, rng) if projective else random_heads(n, rng)
    return sentence_from_heads(heads, sent_id=sent_id)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
