"""Affix-embedding pretraining with a compositional word-level GRU language model.

A word is represented as its surface embedding plus the embeddings of its
morphs, so affixes shared by many words receive gradient from all of them.
The trained affix vectors then seed the decoder's morphology table.
"""
from __future__ import annotations

import logging
import math
import zlib
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import ParameterSet, ShapeError, Tape, Tensor, backward, no_grad
from .model import gru_cell
from .morphology import LABEL_SPECIALS, PREFIX, SUFFIX, LabelSet, Segmentation, affix_label
from .optim import AdamConfig, AdamState, adam_step
from .text import normalize, read_lines, write_lines

_logger = logging.getLogger(__name__)

SENT_START = "<s>"
SENT_END = "</s>"


class DivergenceError(FloatingPointError):
    pass


@dataclass
class LMConfig:
    dim: int = 32
    hidden: int = 64
    epochs: int = 5
    batch_size: int = 100
    lr: float = 0.005
    init_scale: float = 0.08
    seed: int = 0


def morph_keys(seg: Segmentation, labels: LabelSet) -> list[str]:
    """Keys of a word's morphs: the stem string itself, kept affixes by class name."""
    keys = []
    for i, m in enumerate(seg.morphs):
        if i == seg.stem_index:
            keys.append(m)
            continue
        name = affix_label(m, PREFIX if i < seg.stem_index else SUFFIX)
        if name in labels:
            keys.append(name)
    return keys


class CompositionalLM:
    def __init__(self, words: Sequence[str], segmentations: Mapping[str, Segmentation], labels: LabelSet,
                 config: LMConfig | None = None):
        self.config = config = config or LMConfig()
        self.words = [SENT_START, SENT_END] + sorted(set(words) - {SENT_START, SENT_END})
        self.word_index = {w: i for i, w in enumerate(self.words)}
        # affix classes always get a row, even if no training word uses them
        affixes = [s for s in labels.symbols if s not in LABEL_SPECIALS]
        stems = sorted({segmentations[w].stem for w in self.words[2:] if w in segmentations} - set(affixes))
        self.morphs = affixes + stems
        self.morph_index = {m: i for i, m in enumerate(self.morphs)}
        self.labels = labels
        self.segmentations = segmentations

        comp = np.zeros((len(self.words), len(self.morphs)))
        for w, i in self.word_index.items():
            seg = segmentations.get(w)
            if seg is not None:
                for k in morph_keys(seg, labels):
                    comp[i, self.morph_index[k]] += 1.0
        self.composition = comp

        d, H = config.dim, config.hidden
        self.params = ParameterSet()
        self._param("surface", (len(self.words), d))
        self._param("morph", (len(self.morphs), d))
        self._param("gru.W", (d, 3 * H))
        self.params.create("gru.b", np.zeros(3 * H))
        self._param("gru.U_zr", (H, 2 * H))
        self._param("gru.U_n", (H, H))
        self._param("out.W", (H, len(self.words)))
        self.params.create("out.b", np.zeros(len(self.words)))

    def _param(self, name, shape):
        seq = np.random.SeedSequence([self.config.seed, zlib.crc32(name.encode())])
        s = self.config.init_scale
        self.params.create(name, np.random.default_rng(seq).uniform(-s, s, size=shape))

    @property
    def dim(self) -> int:
        return self.config.dim

    def word_vectors(self) -> Tensor:
        """Composed representation of every vocabulary word (rows)."""
        return ad.add(self.params["surface"], ad.matmul(Tensor(self.composition), self.params["morph"]))

    def morph_vector(self, key: str) -> np.ndarray:
        return self.params["morph"].data[self.morph_index[key]]

    def encode_sentence(self, sentence: str) -> list[int]:
        return [self.word_index[w] for w in normalize(sentence).split()]

    def sequence_loss(self, sentences: Sequence[Sequence[int]]) -> tuple[Tensor, int]:
        """Summed next-word NLL of a batch of word-id sequences, and the number of predictions."""
        P = self.params
        B = len(sentences)
        T = max(len(s) for s in sentences) + 1
        inp = np.zeros((B, T), dtype=np.int64)
        out = np.zeros((B, T), dtype=np.int64)
        mask = np.zeros((B, T))
        for b, s in enumerate(sentences):
            inp[b, 0] = 0
            inp[b, 1: len(s) + 1] = s
            out[b, : len(s)] = s
            out[b, len(s)] = 1
            mask[b, : len(s) + 1] = 1.0
        x = ad.add(ad.matmul(ad.embedding(self.word_vectors(), inp), P["gru.W"]), P["gru.b"])
        h = Tensor(np.zeros((B, self.config.hidden)))
        hs = []
        for t in range(T):
            h = gru_cell(x[:, t], h, P["gru.U_zr"], P["gru.U_n"])
            hs.append(h)
        logits = ad.add(ad.matmul(ad.stack(hs, axis=1), P["out.W"]), P["out.b"])
        return ad.cross_entropy(logits, out, mask), int(mask.sum())

    def nll(self, sentences: Sequence[Sequence[int]], batch_size: int = 100) -> float:
        """Mean next-word NLL per prediction."""
        total, count = 0.0, 0
        with no_grad():
            for i in range(0, len(sentences), batch_size):
                loss, n = self.sequence_loss(sentences[i: i + batch_size])
                total += float(loss.data)
                count += n
        return total / max(count, 1)


def compose_word_embedding(word: str, segmentation: Segmentation | None, lm: CompositionalLM) -> np.ndarray:
    """Surface vector (zero if unknown) plus every known morph vector."""
    i = lm.word_index.get(word)
    vec = lm.params["surface"].data[i].copy() if i is not None else np.zeros(lm.dim)
    if segmentation is not None:
        for k in morph_keys(segmentation, lm.labels):
            j = lm.morph_index.get(k)
            if j is not None:
                vec += lm.params["morph"].data[j]
    return vec


def lm_step(lm: CompositionalLM, prev_vec, hidden) -> tuple[Tensor, Tensor]:
    """One GRU update on a composed word vector; returns (new hidden, next-word distribution)."""
    P = lm.params
    prev_vec, hidden = ad.as_tensor(prev_vec), ad.as_tensor(hidden)
    if prev_vec.shape[-1] != lm.dim or hidden.shape[-1] != lm.config.hidden:
        raise ShapeError(f"expected word vector of size {lm.dim} and state of size {lm.config.hidden}, "
                         f"got {prev_vec.shape} and {hidden.shape}")
    x = ad.add(ad.matmul(prev_vec, P["gru.W"]), P["gru.b"])
    h = gru_cell(x, hidden, P["gru.U_zr"], P["gru.U_n"])
    return h, ad.softmax(ad.add(ad.matmul(h, P["out.W"]), P["out.b"]))


def pretrain(sentences: Sequence[str], segmentations: Mapping[str, Segmentation], labels: LabelSet,
             config: LMConfig | None = None) -> tuple[CompositionalLM, list[float]]:
    """Train the LM on target sentences; returns it with the per-epoch training NLL (epoch 0 first)."""
    config = config or LMConfig()
    sentences = [normalize(s) for s in sentences if normalize(s)]
    if not sentences:
        raise ValueError("no sentences to pretrain on")
    words = {w for s in sentences for w in s.split()}
    lm = CompositionalLM(sorted(words), segmentations, labels, config)
    data = [lm.encode_sentence(s) for s in sentences]
    history = [lm.nll(data)]
    state = AdamState()
    adam = AdamConfig(lr=config.lr)
    for epoch in range(1, config.epochs + 1):
        order = np.random.default_rng([config.seed, epoch]).permutation(len(data))
        for i in range(0, len(order), config.batch_size):
            batch = [data[k] for k in order[i: i + config.batch_size]]
            lm.params.zero_grads()
            with Tape() as tape:
                loss, n = lm.sequence_loss(batch)
                loss = ad.scale(loss, 1.0 / n)
            if not math.isfinite(float(loss.data)):
                raise DivergenceError(f"LM loss became non-finite in epoch {epoch} (history {history})")
            backward(loss, tape)
            adam_step(lm.params, state, adam)
        nll = lm.nll(data)
        if not math.isfinite(nll):
            raise DivergenceError(f"LM NLL became non-finite after epoch {epoch} (history {history})")
        history.append(nll)
        _logger.info("lm epoch %d nll %.4f", epoch, nll)
    if config.epochs > 0 and not history[-1] < history[0]:
        raise RuntimeError(f"pretraining did not reduce the training NLL: {history}")
    return lm, history


def init_morph_table(lm: CompositionalLM, labels: LabelSet, dim: int | None = None, seed: int = 0,
                     scale: float = 0.08) -> np.ndarray:
    """Rows for affix classes copy the LM's morph vectors; special classes are random."""
    dim = lm.dim if dim is None else dim
    if dim != lm.dim:
        raise ShapeError(f"table dimension {dim} differs from the LM embedding size {lm.dim}")
    return table_from_vectors({m: lm.morph_vector(m) for m in lm.morphs}, labels, dim, seed, scale)


def table_from_vectors(vectors: Mapping[str, np.ndarray], labels: LabelSet, dim: int, seed: int = 0,
                       scale: float = 0.08) -> np.ndarray:
    rng = np.random.default_rng([seed, zlib.crc32(b"morph_table.specials")])
    table = np.empty((len(labels), dim))
    for u, name in enumerate(labels.symbols):
        if name in LABEL_SPECIALS:
            table[u] = rng.uniform(-scale, scale, size=dim)
            continue
        try:
            vec = np.asarray(vectors[name], dtype=np.float64)
        except KeyError:
            raise KeyError(f"no pretrained vector for affix class {name!r}") from None
        if vec.shape != (dim,):
            raise ShapeError(f"vector for {name!r} has shape {vec.shape}, expected ({dim},)")
        table[u] = vec
    return table


def save_embeddings(path, lm: CompositionalLM):
    """Morph embeddings as 'symbol<TAB>v1 v2 ... vd' with round-trip-exact floats."""
    P = lm.params["morph"].data
    write_lines(path, (m + "\t" + " ".join(repr(float(x)) for x in P[i]) for i, m in enumerate(lm.morphs)))


def load_embeddings(path) -> dict[str, np.ndarray]:
    out = {}
    for n, line in enumerate(read_lines(path), 1):
        if not line:
            continue
        sym, sep, vals = line.partition("\t")
        if not sep:
            raise ValueError(f"{path}:{n}: expected 'symbol<TAB>values'")
        out[sym] = np.array([float(v) for v in vals.split(" ")])
    return out
