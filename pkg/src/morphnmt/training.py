"""Mini-batch Adam training with dev-set early stopping, and lambda tuning."""
from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, backward, no_grad
from .decoding import greedy_decode_batch
from .evaluation import bleu
from .model import AnnotatedExample, NMTModel, make_batch
from .optim import AdamConfig, AdamState, adam_step
from .text import CharVocab

_logger = logging.getLogger(__name__)

DEFAULT_LAMBDA_GRID = (0.3, 0.5, 0.7, 1.0)


@dataclass
class TrainConfig:
    lr: float = 0.005
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 32
    epochs: int = 10
    lam: float = 0.5
    seed: int = 0
    clip: float = 5.0
    patience: int = 3

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must lie in [0, 1], got {self.lam}")
        if self.batch_size < 1 or self.epochs < 0 or self.patience < 1:
            raise ValueError("batch_size and patience must be >= 1 and epochs >= 0")
        AdamConfig(self.lr, self.beta1, self.beta2, self.eps, self.clip)

    def adam(self) -> AdamConfig:
        return AdamConfig(self.lr, self.beta1, self.beta2, self.eps, self.clip)


@dataclass
class DevSet:
    examples: list[AnnotatedExample]
    sources: list[str]
    references: list[str]

    def __post_init__(self):
        if not (len(self.examples) == len(self.sources) == len(self.references)):
            raise ValueError("dev examples, sources and references must align")

    def __len__(self):
        return len(self.examples)


@dataclass
class EpochRecord:
    epoch: int
    train_nll: float
    dev_nll: float | None
    dev_bleu: float | None
    seconds: float


@dataclass
class TrainReport:
    rows: list[EpochRecord] = field(default_factory=list)
    lam: float = 1.0
    best_epoch: int = 0
    stopped_early: bool = False

    def to_csv(self, path, record_time: bool = False):
        """One row per epoch.  Wall time is left blank unless asked for, so reruns are byte-identical."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "train_nll", "dev_nll", "dev_bleu", "seconds"])
            for r in self.rows:
                w.writerow([r.epoch, _fmt(r.train_nll), _fmt(r.dev_nll), _fmt(r.dev_bleu),
                            f"{r.seconds:.3f}" if record_time else ""])


def _fmt(x) -> str:
    return "" if x is None else f"{x:.6f}"


def make_batches(examples: Sequence[AnnotatedExample], batch_size: int, rng: np.random.Generator):
    """Shuffle, group similar target lengths into batches, then shuffle the batches."""
    order = rng.permutation(len(examples))
    pool = batch_size * 8
    batches = []
    for start in range(0, len(order), pool):
        chunk = sorted(order[start: start + pool], key=lambda i: (len(examples[i].target), i))
        batches.extend(chunk[k: k + batch_size] for k in range(0, len(chunk), batch_size))
    return [batches[i] for i in rng.permutation(len(batches))]


def train_step(model: NMTModel, examples: Sequence[AnnotatedExample], lam: float, state: AdamState,
               adam: AdamConfig) -> tuple[float, int]:
    """One Adam update on a batch (loss averaged per character); returns (translation NLL sum, chars)."""
    batch = make_batch(examples)
    model.params.zero_grads()
    with Tape() as tape:
        res = model.forward_sequence(batch, lam)
        loss = ad.scale(res.loss, 1.0 / res.n_chars)
    backward(loss, tape)
    adam_step(model.params, state, adam)
    return res.char_nll, res.n_chars


def evaluate_loss(model: NMTModel, examples: Sequence[AnnotatedExample], batch_size: int = 64) -> tuple[float, float]:
    """Per-character (translation NLL, annotation NLL) under teacher forcing."""
    char_total = label_total = 0.0
    n = 0
    ordered = sorted(examples, key=lambda e: len(e.target))
    with no_grad():
        for i in range(0, len(ordered), batch_size):
            res = model.forward_sequence(make_batch(ordered[i: i + batch_size]), 1.0)
            char_total += res.char_nll
            label_total += res.label_nll
            n += res.n_chars
    return char_total / n, label_total / n


def translate_greedy(model: NMTModel, examples: Sequence[AnnotatedExample], sources: Sequence[str],
                     char_vocab: CharVocab) -> list[str]:
    limits = [3 * len(s) + 10 for s in sources]
    ids = greedy_decode_batch(model, [e.source for e in examples], limits, char_vocab.bos_id, char_vocab.eos_id)
    return [char_vocab.decode(seq) for seq in ids]


def train(model: NMTModel, examples: Sequence[AnnotatedExample], config: TrainConfig,
          dev: DevSet | None = None, char_vocab: CharVocab | None = None,
          on_epoch: Callable[[EpochRecord], None] | None = None) -> TrainReport:
    """Train in place; with a dev set, early-stop on dev NLL and keep the best-dev weights."""
    if not examples:
        raise ValueError("training corpus is empty")
    lam = config.lam if model.config.use_aux else 1.0
    report = TrainReport(lam=lam)
    adam = config.adam()
    state = AdamState()
    best_nll, best_params, stale = math.inf, None, 0
    for epoch in range(1, config.epochs + 1):
        t0 = time.perf_counter()
        rng = np.random.default_rng([config.seed, epoch])
        total, chars = 0.0, 0
        for idx in make_batches(examples, config.batch_size, rng):
            nll, n = train_step(model, [examples[i] for i in idx], lam, state, adam)
            total += nll
            chars += n
        dev_nll = dev_bleu = None
        if dev is not None and len(dev):
            dev_nll = evaluate_loss(model, dev.examples)[0]
            if char_vocab is not None:
                dev_bleu = bleu(translate_greedy(model, dev.examples, dev.sources, char_vocab), dev.references).value
        rec = EpochRecord(epoch, total / chars, dev_nll, dev_bleu, time.perf_counter() - t0)
        report.rows.append(rec)
        _logger.info("epoch %d train_nll %.4f dev_nll %s dev_bleu %s", epoch, rec.train_nll, dev_nll, dev_bleu)
        if on_epoch is not None:
            on_epoch(rec)
        if dev_nll is None:
            report.best_epoch = epoch
            continue
        if dev_nll < best_nll:
            best_nll, best_params, stale = dev_nll, model.params.snapshot(), 0
            report.best_epoch = epoch
        else:
            stale += 1
            if stale >= config.patience:
                report.stopped_early = True
                break
    if best_params is not None:
        model.params.restore(best_params)
    return report


def tune_lambda(make_model: Callable[[], NMTModel], examples: Sequence[AnnotatedExample], dev: DevSet,
                char_vocab: CharVocab, config: TrainConfig,
                grid: Sequence[float] = DEFAULT_LAMBDA_GRID) -> tuple[float, dict[float, float]]:
    """Train one model per grid value (same seed) and pick the best dev BLEU; ties go to the larger lambda."""
    if dev is None or not len(dev):
        raise ValueError("lambda tuning needs a non-empty dev set")
    values = sorted({float(x) for x in grid})
    if not values:
        raise ValueError("lambda grid is empty")
    for lam in values:
        if not 0.0 <= lam <= 1.0:
            raise ValueError(f"lambda grid value {lam} outside [0, 1]")
    scores: dict[float, float] = {}
    if len(values) == 1:
        return values[0], scores
    for lam in values:
        cfg = TrainConfig(**{**config.__dict__, "lam": lam})
        model = make_model()
        train(model, examples, cfg, dev, char_vocab)
        scores[lam] = bleu(translate_greedy(model, dev.examples, dev.sources, char_vocab), dev.references).value
    best = max(values, key=lambda lam: (scores[lam], lam))
    return best, scores
