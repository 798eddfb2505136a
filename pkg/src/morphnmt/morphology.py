"""Unsupervised MDL segmentation, affix extraction and per-character labels.

The segmenter is a small recursive greedy learner in the spirit of the
Morfessor baseline: every word is split at the binary cut that minimises the
two-part code length of the whole corpus, recursively, and kept whole when no
cut helps.
"""
from __future__ import annotations

import logging
import math
import random
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .text import Vocab, normalize, read_lines, write_lines

_logger = logging.getLogger(__name__)

STEM_C = "stem-C"
UNK_C = "UNK-C"
EOS_C = "EOS-C"
WSPACE_L = "w-space"
BOS_L = "BOS"
LABEL_SPECIALS = (BOS_L, WSPACE_L, STEM_C, UNK_C, EOS_C)

PREFIX, SUFFIX = "prefix", "suffix"


def affix_label(affix: str, kind: str) -> str:
    # prefixes carry a trailing '+' so a string used both ways gets two classes
    return f"{affix}+-C" if kind == PREFIX else f"{affix}-C"


@dataclass(frozen=True)
class Segmentation:
    word: str
    morphs: tuple[str, ...]
    stem_index: int = -1

    def __post_init__(self):
        if "".join(self.morphs) != self.word:
            raise ValueError(f"morphs {self.morphs} do not spell {self.word!r}")
        if self.stem_index < 0:
            object.__setattr__(self, "stem_index", longest_morph(self.morphs))
        elif not 0 <= self.stem_index < len(self.morphs):
            raise ValueError("stem index out of range")

    @property
    def stem(self) -> str:
        return self.morphs[self.stem_index]

    @property
    def prefixes(self) -> tuple[str, ...]:
        return self.morphs[: self.stem_index]

    @property
    def suffixes(self) -> tuple[str, ...]:
        return self.morphs[self.stem_index + 1:]

    def boundaries(self) -> set[int]:
        cuts, pos = set(), 0
        for m in self.morphs[:-1]:
            pos += len(m)
            cuts.add(pos)
        return cuts


def longest_morph(morphs) -> int:
    """Index of the longest morph; the leftmost wins ties."""
    best = 0
    for i, m in enumerate(morphs):
        if len(m) > len(morphs[best]):
            best = i
    return best


# ------------------------------------------------------------- segmenter


@dataclass
class SegmenterConfig:
    per_morph_cost: float = 6.0
    corpus_weight: float = 0.3
    max_epochs: int = 8
    tolerance: float = 1e-4
    seed: int = 0
    # "none": token frequencies, "log": 1+log(freq), "ones": word types
    dampening: str = "none"


class MdlSegmenter:
    """Greedy recursive minimum-description-length segmenter.

    cost = corpus_weight * (-sum_m c(m) log(c(m)/N))
           + per_morph_cost * |lexicon| + sum_{m in lexicon} charcost(m)

    where ``charcost`` codes the morph's letters plus an end marker under the
    corpus letter distribution.
    """

    def __init__(self, config: SegmenterConfig | None = None):
        self.config = config or SegmenterConfig()
        self.counts: Counter = Counter()
        self._tokens = 0
        self._clogc = 0.0
        self._lexicon_chars = 0.0
        self._char_cost: dict[str, float] = {}
        self._end_cost = 0.0
        # construction -> [count, cut]; cut 0 marks a real morph
        self._nodes: dict[str, list] = {}
        self.analyses: dict[str, tuple[str, ...]] = {}
        self.split_deltas: list[float] = []

    # cost bookkeeping, O(1) per count change

    def _morph_char_cost(self, morph: str) -> float:
        unknown = self._unknown_cost
        return sum(self._char_cost.get(ch, unknown) for ch in morph) + self._end_cost

    def _modify(self, morph: str, delta: float):
        old = self.counts.get(morph, 0)
        new = old + delta
        if new < -1e-9:
            raise RuntimeError(f"negative count for {morph!r}")
        if old > 0:
            self._clogc -= old * math.log(old)
        if new > 1e-12:
            self._clogc += new * math.log(new)
            self.counts[morph] = new
        else:
            new = 0
            self.counts.pop(morph, None)
        self._tokens += new - old
        if old == 0 and new > 0:
            self._lexicon_chars += self._morph_char_cost(morph)
        elif old > 0 and new == 0:
            self._lexicon_chars -= self._morph_char_cost(morph)

    def cost(self) -> float:
        n = self._tokens
        corpus = n * math.log(n) - self._clogc if n > 0 else 0.0
        lexicon = self.config.per_morph_cost * len(self.counts) + self._lexicon_chars
        return self.config.corpus_weight * corpus + lexicon

    def _weight(self, freq: float) -> float:
        mode = self.config.dampening
        if mode == "none":
            return float(freq)
        if mode == "log":
            return 1.0 + math.log(freq)
        if mode == "ones":
            return 1.0
        raise ValueError(f"unknown dampening {mode!r}")

    def _modify_construction(self, construction: str, delta: float):
        """Change a construction's count and push the change down its split tree."""
        node = self._nodes.get(construction)
        if node is None:
            node = self._nodes[construction] = [0.0, 0]
        node[0] += delta
        cut = node[1]
        if cut:
            self._modify_construction(construction[:cut], delta)
            self._modify_construction(construction[cut:], delta)
        else:
            self._modify(construction, delta)
        if node[0] <= 1e-12:
            del self._nodes[construction]

    def _recursive_split(self, construction: str):
        node = self._nodes.get(construction)
        if node is None or len(construction) == 1:
            return
        count = node[0]
        self._modify_construction(construction, -count)
        self._nodes[construction] = [0.0, 0]
        self._modify_construction(construction, count)
        whole_cost = self.cost()
        best_cost, best_cut = whole_cost, 0
        for cut in range(1, len(construction)):
            self._modify_construction(construction, -count)
            self._nodes[construction] = [0.0, cut]
            self._modify_construction(construction, count)
            c = self.cost()
            if c < best_cost - 1e-9:
                best_cost, best_cut = c, cut
        self._modify_construction(construction, -count)
        self._nodes[construction] = [0.0, best_cut]
        self._modify_construction(construction, count)
        if best_cut:
            delta = self.cost() - whole_cost
            assert delta <= 1e-9, f"accepted split of {construction!r} raised the cost by {delta}"
            self.split_deltas.append(delta)
            self._recursive_split(construction[:best_cut])
            self._recursive_split(construction[best_cut:])

    def _expand(self, construction: str) -> list[str]:
        cut = self._nodes[construction][1]
        if not cut:
            return [construction]
        return self._expand(construction[:cut]) + self._expand(construction[cut:])

    def fit(self, word_counts: Mapping[str, int]) -> dict[str, "Segmentation"]:
        words = sorted(w for w, f in word_counts.items() if w and f > 0)
        if not words:
            raise ValueError("segmenter needs a nonempty word list")
        weights = {w: self._weight(word_counts[w]) for w in words}

        letters = Counter()
        ends = 0.0
        for w in words:
            for ch in w:
                letters[ch] += weights[w]
            ends += weights[w]
        total = sum(letters.values()) + ends
        self._char_cost = {ch: -math.log(c / total) for ch, c in letters.items()}
        self._end_cost = -math.log(ends / total)
        self._unknown_cost = -math.log(0.5 / total)

        for w in words:
            self._modify_construction(w, weights[w])
        rng = random.Random(self.config.seed)
        previous = self.cost()
        _logger.info("segmenter: %d word types, initial cost %.1f", len(words), previous)
        for epoch in range(self.config.max_epochs):
            order = list(words)
            rng.shuffle(order)
            for w in order:
                self._recursive_split(w)
            current = self.cost()
            _logger.info("segmenter epoch %d: cost %.1f, lexicon %d", epoch + 1, current, len(self.counts))
            if previous - current < self.config.tolerance * abs(previous):
                break
            previous = current
        self.analyses = {w: tuple(self._expand(w)) for w in words}
        return {w: Segmentation(w, self.analyses[w]) for w in words}

    def segment(self, word: str) -> tuple[str, ...]:
        """Viterbi segmentation of a (possibly unseen) word with the learned lexicon."""
        if word in self.analyses:
            return self.analyses[word]
        n = self._tokens
        best = [0.0] + [math.inf] * len(word)
        back = [0] * (len(word) + 1)
        for j in range(1, len(word) + 1):
            for i in range(j):
                m = word[i:j]
                c = self.counts.get(m)
                cost = -math.log(c / n) if c else self._morph_char_cost(m) + self.config.per_morph_cost + math.log(n + 1)
                if best[i] + cost < best[j]:
                    best[j], back[j] = best[i] + cost, i
        morphs, j = [], len(word)
        while j > 0:
            morphs.append(word[back[j]:j])
            j = back[j]
        return tuple(reversed(morphs))


def segment_corpus(word_counts: Mapping[str, int], config: SegmenterConfig | None = None) -> dict[str, Segmentation]:
    return MdlSegmenter(config).fit(word_counts)


def word_counts(sentences: Iterable[str]) -> Counter:
    counts = Counter()
    for s in sentences:
        counts.update(s.split())
    return counts


def boundary_recall(predicted: Mapping[str, Segmentation], gold: Mapping[str, Segmentation]) -> tuple[float, float]:
    """(recall, precision) of morph boundaries over words present in both maps."""
    hit = gold_n = pred_n = 0
    for w, g in gold.items():
        p = predicted.get(w)
        if p is None:
            continue
        gb, pb = g.boundaries(), p.boundaries()
        hit += len(gb & pb)
        gold_n += len(gb)
        pred_n += len(pb)
    recall = hit / gold_n if gold_n else 1.0
    precision = hit / pred_n if pred_n else 1.0
    return recall, precision


def save_segmentations(path, segs: Mapping[str, Segmentation]):
    write_lines(path, (f"{w}\t{' '.join(segs[w].morphs)}" for w in sorted(segs)))


def load_segmentations(path) -> dict[str, Segmentation]:
    out = {}
    for n, line in enumerate(read_lines(path), 1):
        if not line:
            continue
        try:
            word, morphs = line.split("\t")
        except ValueError:
            raise ValueError(f"{path}:{n}: expected 'word<TAB>morphs'") from None
        out[word] = Segmentation(word, tuple(morphs.split(" ")))
    return out


# --------------------------------------------------------------- affixes


@dataclass
class AffixInventory:
    prefixes: Counter = field(default_factory=Counter)
    suffixes: Counter = field(default_factory=Counter)

    @property
    def counts(self) -> dict[tuple[str, str], int]:
        out = {(a, PREFIX): c for a, c in self.prefixes.items()}
        out.update({(a, SUFFIX): c for a, c in self.suffixes.items()})
        return out

    def __len__(self):
        return len(self.prefixes) + len(self.suffixes)

    def save(self, path):
        rows = sorted(self.counts.items(), key=lambda kv: (-kv[1], kv[0][1], kv[0][0]))
        write_lines(path, (f"{a}\t{kind}\t{c}" for (a, kind), c in rows))

    @classmethod
    def load(cls, path) -> "AffixInventory":
        inv = cls()
        for n, line in enumerate(read_lines(path), 1):
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3 or parts[1] not in (PREFIX, SUFFIX):
                raise ValueError(f"{path}:{n}: expected 'affix<TAB>prefix|suffix<TAB>count'")
            target = inv.prefixes if parts[1] == PREFIX else inv.suffixes
            target[parts[0]] = int(parts[2])
        return inv


def extract_affixes(segmentations: Mapping[str, Segmentation] | Iterable[Segmentation], min_count: int = 5,
                    counts: Mapping[str, int] | None = None) -> AffixInventory:
    """Split every word around its longest morph and keep affixes seen >= min_count times.

    ``counts`` gives word frequencies; without it every segmentation counts once.
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    segs = list(segmentations.values()) if isinstance(segmentations, Mapping) else list(segmentations)
    if not segs:
        raise ValueError("no segmentations given")
    pre, suf = Counter(), Counter()
    for seg in segs:
        f = counts.get(seg.word, 0) if counts is not None else 1
        if f <= 0:
            continue
        for a in seg.prefixes:
            pre[a] += f
        for a in seg.suffixes:
            suf[a] += f
    return AffixInventory(
        Counter({a: c for a, c in pre.items() if c >= min_count}),
        Counter({a: c for a, c in suf.items() if c >= min_count}),
    )


# ---------------------------------------------------------------- labels


class LabelSet(Vocab):
    """Morphological classes: specials first, then affix classes by frequency."""

    def __init__(self, symbols):
        super().__init__(symbols)
        for s in LABEL_SPECIALS:
            if s not in self.index:
                raise ValueError(f"label set lacks {s!r}")
        self.bos_id = self.index[BOS_L]
        self.wspace_id = self.index[WSPACE_L]
        self.stem_id = self.index[STEM_C]
        self.unk_id = self.index[UNK_C]
        self.eos_id = self.index[EOS_C]

    @classmethod
    def load(cls, path) -> "LabelSet":
        return cls(read_lines(path))

    def affix_id(self, affix: str, kind: str) -> int:
        return self.index.get(affix_label(affix, kind), self.unk_id)


def build_label_vocab(inventory: AffixInventory) -> LabelSet:
    rows = [(c, affix_label(a, kind)) for (a, kind), c in inventory.counts.items()]
    rows.sort(key=lambda r: (-r[0], r[1]))
    return LabelSet(list(LABEL_SPECIALS) + [name for _, name in rows])


@dataclass(frozen=True)
class AnnotatedTarget:
    char_ids: tuple[int, ...]
    label_ids: tuple[int, ...]

    def __post_init__(self):
        if len(self.char_ids) != len(self.label_ids):
            raise ValueError("characters and labels differ in length")


def word_labels(word: str, seg: Segmentation | None, labels: LabelSet) -> list[int]:
    if seg is None or seg.word != word:
        return [labels.stem_id] * len(word)
    out = []
    for i, m in enumerate(seg.morphs):
        if i == seg.stem_index:
            lab = labels.stem_id
        else:
            lab = labels.affix_id(m, PREFIX if i < seg.stem_index else SUFFIX)
        out.extend([lab] * len(m))
    return out


def label_sequence(sentence: str, segmentations: Mapping[str, Segmentation], labels: LabelSet) -> list[int]:
    """Labels aligned with ``CharVocab.encode(sentence)``: BOS, characters, EOS."""
    out = [labels.bos_id]
    for k, word in enumerate(normalize(sentence).split(" ")):
        if k:
            out.append(labels.wspace_id)
        if word:
            out.extend(word_labels(word, segmentations.get(word), labels))
    out.append(labels.eos_id)
    return out


def label_characters(sentence: str, segmentations: Mapping[str, Segmentation], labels: LabelSet,
                     char_vocab) -> AnnotatedTarget:
    return AnnotatedTarget(tuple(char_vocab.encode(sentence)), tuple(label_sequence(sentence, segmentations, labels)))
