"""Teacher-forced training and greedy corpus decoding.

One sentence per optimizer step: the state-layout input changes shape at
every transition, so there is nothing to batch.  The loss is cross-entropy
over legal transition kinds at every step plus cross-entropy over labels at
arc steps, conditioned on the gold direction.  Optimization is AdamW with
decoupled weight decay, linear warmup and global-norm gradient clipping;
early stopping tracks dev LAS.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .evaluation import EvalConfig, relative_error_reduction, score  # noqa: F401  (re-exported)
from .model import ParseEpisode, ParserModel, parse_sentence
from .transitions import ARC_KINDS, oracle_sequence


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-6
    weight_decay: float = 0.01
    clip_norm: float = 1.0
    warmup: float = 0.01
    epochs: int = 12
    patience: int = 5
    seed: int = 0


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    dev_uas: float
    dev_las: float


@dataclass
class TrainReport:
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_las: float = 0.0
    wall_time: float = 0.0

    def serialize(self) -> str:
        lines = ["epoch\tloss\tdev_uas\tdev_las"]
        for r in self.records:
            lines.append(f"{r.epoch}\t{r.loss:.6f}\t{r.dev_uas:.2f}\t{r.dev_las:.2f}")
        lines.append(f"best\t{self.best_epoch}")
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(self.serialize())


class DivergenceError(RuntimeError):
    def __init__(self, epoch, step):
        super().__init__(f"loss diverged (non-finite) at epoch {epoch}, sentence {step}")
        self.epoch = epoch
        self.step = step


class AdamW:
    """Adam with decoupled weight decay: a zero-gradient parameter still
    shrinks by lr * wd * theta each step."""

    def __init__(self, store, cfg: TrainConfig, warmup_steps: int = 0):
        self.store = store
        self.cfg = cfg
        self.warmup_steps = warmup_steps
        self.t = 0
        self.m = {name: np.zeros_like(p.data) for name, p in store.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in store.items()}

    def _clip(self) -> None:
        if self.cfg.clip_norm <= 0:
            return
        total = 0.0
        for p in self.store.tensors():
            total += float((p.grad ** 2).sum())
        norm = np.sqrt(total)
        if norm > self.cfg.clip_norm:
            factor = self.cfg.clip_norm / norm
            for p in self.store.tensors():
                p.grad *= factor

    def step(self) -> None:
        cfg = self.cfg
        self._clip()
        self.t += 1
        lr = cfg.learning_rate
        if self.warmup_steps > 0:
            lr *= min(1.0, self.t / self.warmup_steps)
        b1, b2 = cfg.beta1, cfg.beta2
        for name, p in self.store.items():
            g = p.grad
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            m_hat = m / (1 - b1 ** self.t)
            v_hat = v / (1 - b2 ** self.t)
            p.data -= lr * (m_hat / (np.sqrt(v_hat) + cfg.epsilon) + cfg.weight_decay * p.data)


def step_loss(model: ParserModel, sentence, actions):
    """Summed cross-entropy along one gold action sequence.

    Returns (loss Tensor or None, transition count).  Label loss is computed
    at arc steps only, over the block matching the gold direction.
    """
    episode = ParseEpisode(model, sentence)
    terms = []
    for action in actions:
        scores, mask, Z, asm = episode.action_scores()
        terms.append(ad.cross_entropy(scores, int(action.kind), mask))
        label_id = 0
        if action.kind in ARC_KINDS:
            label_id = model.vocab.deprel_id(action.label)
            block = episode.label_scores(Z, asm, action.kind)
            terms.append(ad.cross_entropy(block, label_id - 1))
        episode.advance(action, label_id)
    if not terms:
        return None, 0
    loss = terms[0]
    for term in terms[1:]:
        loss = ad.add(loss, term)
    return loss, len(actions)


def parse_corpus(model: ParserModel, sentences) -> list:
    """Greedy-parse every sentence with dropout disabled."""
    was_training = model.training
    model.train_mode(False)
    try:
        return [parse_sentence(model, sent) for sent in sentences]
    finally:
        model.train_mode(was_training)


def train(model: ParserModel, train_set, dev_set, cfg: TrainConfig | None = None,
          eval_cfg: EvalConfig | None = None, log=None) -> TrainReport:
    """Optimize the model on oracle sequences; keeps and restores the best-dev-LAS weights."""
    cfg = cfg or TrainConfig()
    eval_cfg = eval_cfg or EvalConfig()
    if not train_set or not dev_set:
        raise ValueError("train and dev sets must be non-empty")
    started = time.monotonic()
    shuffle_rng = np.random.default_rng(cfg.seed)
    oracles = [oracle_sequence(sent) for sent in train_set]
    total_steps = cfg.epochs * len(train_set)
    warmup_steps = int(round(cfg.warmup * total_steps)) if cfg.warmup > 0 else 0
    optimizer = AdamW(model.store, cfg, warmup_steps=warmup_steps)
    report = TrainReport()
    best_state = None
    stale = 0
    for epoch in range(1, cfg.epochs + 1):
        model.train_mode(True)
        order = shuffle_rng.permutation(len(train_set))
        loss_sum = 0.0
        step_sum = 0
        for idx in order:
            loss, steps = step_loss(model, train_set[idx], oracles[idx])
            if steps == 0:
                continue
            value = float(loss.data)
            if not np.isfinite(value):
                raise DivergenceError(epoch, int(idx))
            model.zero_grads()
            ad.backward(loss)
            optimizer.step()
            loss_sum += value
            step_sum += steps
        model.train_mode(False)
        mean_loss = loss_sum / max(step_sum, 1)
        predicted = parse_corpus(model, dev_set)
        dev_uas, dev_las = score(dev_set, predicted, eval_cfg)
        report.records.append(EpochRecord(epoch=epoch, loss=mean_loss,
                                          dev_uas=dev_uas, dev_las=dev_las))
        if log is not None:
            log(f"epoch {epoch}: loss {mean_loss:.4f} dev UAS {dev_uas:.2f} LAS {dev_las:.2f}")
        if best_state is None or dev_las > report.best_las:
            report.best_las = dev_las
            report.best_epoch = epoch
            best_state = model.store.state_arrays()
            stale = 0
        else:
            stale += 1
            if cfg.patience and stale >= cfg.patience:
                break
    if best_state is not None:
        model.store.load_state_arrays(best_state)
    report.wall_time = time.monotonic() - started
    return report
