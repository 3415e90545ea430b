"""Arc-standard transition system with SWAP and its static oracle.

Token indices double as original sentence positions; index 0 is the
artificial root, which sits at the bottom of the stack for the whole parse.
Arc actions attach the two topmost stack tokens and move the new dependent
to the deleted list, kept in sentence order.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum


class ActionKind(IntEnum):
    # index order is also the classifier output order
    SHIFT = 0
    SWAP = 1
    RIGHT_ARC = 2
    LEFT_ARC = 3


ARC_KINDS = (ActionKind.RIGHT_ARC, ActionKind.LEFT_ARC)


@dataclass(frozen=True)
class Action:
    kind: ActionKind
    label: object = None  # deprel (string or id); required for arc actions

    def __post_init__(self):
        if self.kind in ARC_KINDS and self.label is None:
            raise ValueError(f"{self.kind.name} requires a label")
        if self.kind not in ARC_KINDS and self.label is not None:
            raise ValueError(f"{self.kind.name} takes no label")

    def __str__(self):
        if self.label is None:
            return self.kind.name
        return f"{self.kind.name}({self.label})"


class IllegalActionError(Exception):
    pass


@dataclass(frozen=True)
class ParserState:
    """Immutable machine configuration; apply() returns a new state."""

    n: int                                   # number of real tokens
    stack: tuple[int, ...]                   # bottom first; stack[0] == 0
    buffer: tuple[int, ...]                  # front first
    deleted: tuple[int, ...]                 # sentence order
    arcs: frozenset[tuple[int, int, object]]  # (head, dependent, label)
    step: int = 0

    @property
    def s1(self) -> int | None:
        return self.stack[-1] if len(self.stack) >= 1 else None

    @property
    def s2(self) -> int | None:
        return self.stack[-2] if len(self.stack) >= 2 else None

    @property
    def b1(self) -> int | None:
        return self.buffer[0] if self.buffer else None


def initial_state(sentence) -> ParserState:
    n = len(sentence)
    return ParserState(
        n=n, stack=(0,), buffer=tuple(range(1, n + 1)), deleted=(), arcs=frozenset(),
    )


def is_terminal(state: ParserState) -> bool:
    return not state.buffer and state.stack == (0,)


def legal_actions(state: ParserState) -> set[ActionKind]:
    legal: set[ActionKind] = set()
    if state.buffer:
        legal.add(ActionKind.SHIFT)
    if len(state.stack) >= 2:
        s1, s2 = state.stack[-1], state.stack[-2]
        if s2 != 0:
            legal.add(ActionKind.LEFT_ARC)
            legal.add(ActionKind.RIGHT_ARC)
            if s2 < s1:
                legal.add(ActionKind.SWAP)
        elif not state.buffer and len(state.stack) == 2:
            # the forced final attachment of the sentence root
            legal.add(ActionKind.RIGHT_ARC)
    return legal


def _illegality_reason(state: ParserState, kind: ActionKind) -> str:
    if kind == ActionKind.SHIFT:
        return "buffer is empty"
    if len(state.stack) < 2:
        return "needs two stack items"
    if kind == ActionKind.SWAP:
        if state.s2 == 0:
            return "root cannot be swapped"
        return "second stack item must precede the top in original order"
    if state.s2 == 0:
        if kind == ActionKind.LEFT_ARC:
            return "root cannot be a dependent"
        return "attachment to root is only allowed as the final action"
    return "unknown"


def apply(state: ParserState, action: Action) -> ParserState:
    if action.kind not in legal_actions(state):
        raise IllegalActionError(
            f"{action} is illegal ({_illegality_reason(state, action.kind)}) "
            f"in stack={list(state.stack)} buffer={list(state.buffer)}")
    stack, buffer, deleted, arcs = state.stack, state.buffer, state.deleted, state.arcs
    if action.kind == ActionKind.SHIFT:
        stack = stack + (buffer[0],)
        buffer = buffer[1:]
    elif action.kind == ActionKind.SWAP:
        # second-from-top stack token returns to the buffer front
        s2 = stack[-2]
        stack = stack[:-2] + (stack[-1],)
        buffer = (s2,) + buffer
    else:
        s1, s2 = stack[-1], stack[-2]
        if action.kind == ActionKind.LEFT_ARC:
            head, dep = s1, s2
            stack = stack[:-2] + (s1,)
        else:
            head, dep = s2, s1
            stack = stack[:-1]
        arcs = arcs | {(head, dep, action.label)}
        deleted = tuple(sorted(deleted + (dep,)))
    return ParserState(n=state.n, stack=stack, buffer=buffer, deleted=deleted,
                       arcs=arcs, step=state.step + 1)


def replay(sentence, actions) -> ParserState:
    """Apply a full action sequence from the initial state."""
    state = initial_state(sentence)
    for action in actions:
        state = apply(state, action)
    return state


def projective_order(sentence) -> list[int]:
    """In-order traversal rank of every node (root included), length n+1.

    Heads are visited between their left and right dependent blocks,
    dependents in surface order; for projective trees the rank equals the
    surface position.
    """
    n = len(sentence)
    children: list[list[int]] = [[] for _ in range(n + 1)]
    for t in sentence.tokens:
        children[t.head].append(t.id)
    rank = [0] * (n + 1)
    counter = 0
    stack = [(0, "enter")]
    while stack:
        node, phase = stack.pop()
        if phase == "enter":
            left = [c for c in children[node] if c < node]
            right = [c for c in children[node] if c > node]
            stack.extend((c, "enter") for c in reversed(right))
            stack.append((node, "visit"))
            stack.extend((c, "enter") for c in reversed(left))
        else:
            rank[node] = counter
            counter += 1
    return rank


def oracle_sequence(sentence) -> list[Action]:
    """Gold action sequence for a validated single-rooted tree.

    Rule, in priority order: LEFT_ARC when the stack top is the gold head of
    the token below it and that token's dependents are complete; RIGHT_ARC in
    the mirror case; SWAP when the projective order of the top two stack
    tokens is inverted; otherwise SHIFT.
    """
    n = len(sentence)
    head = [0] * (n + 1)
    label: list[object] = [None] * (n + 1)
    gold_deps = [0] * (n + 1)
    for t in sentence.tokens:
        head[t.id] = t.head
        label[t.id] = t.deprel
        gold_deps[t.head] += 1

    order = projective_order(sentence)
    attached_deps = [0] * (n + 1)
    actions: list[Action] = []
    state = initial_state(sentence)
    limit = n * (n + 1) + 1
    while not is_terminal(state):
        if len(actions) > limit:
            raise RuntimeError(f"oracle exceeded {limit} steps for sentence {getattr(sentence, 'sent_id', '?')}")
        legal = legal_actions(state)
        s1, s2 = state.s1, state.s2
        action = None
        if len(state.stack) >= 2:
            if ActionKind.LEFT_ARC in legal and head[s2] == s1 and attached_deps[s2] == gold_deps[s2]:
                action = Action(ActionKind.LEFT_ARC, label[s2])
            elif ActionKind.RIGHT_ARC in legal and head[s1] == s2 and attached_deps[s1] == gold_deps[s1]:
                action = Action(ActionKind.RIGHT_ARC, label[s1])
            elif ActionKind.SWAP in legal and order[s2] > order[s1]:
                action = Action(ActionKind.SWAP)
        if action is None:
            action = Action(ActionKind.SHIFT)
        if action.kind in ARC_KINDS:
            attached_deps[s1 if action.kind == ActionKind.LEFT_ARC else s2] += 1
        actions.append(action)
        state = apply(state, action)
    return actions


def verify_oracle(sentence) -> None:
    """Replay the oracle and assert it reproduces the gold arcs exactly."""
    actions = oracle_sequence(sentence)
    final = replay(sentence, actions)
    if not is_terminal(final):
        raise AssertionError(f"oracle replay did not terminate for sentence {sentence.sent_id}")
    if final.arcs != frozenset(sentence.arc_set()):
        raise AssertionError(f"oracle replay arc mismatch for sentence {sentence.sent_id}")
