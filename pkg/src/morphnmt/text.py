"""Corpus ingestion, source-side BPE and the target character vocabulary."""
from __future__ import annotations

import hashlib
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

EOW = "</w>"

BOS = "<s>"
EOS = "</s>"
UNK_CHAR = "<unk>"
WSPACE = "<w>"
CHAR_RESERVED = (BOS, EOS, UNK_CHAR, WSPACE)

SRC_UNK = "<unk>"

# printed in place of an out-of-vocabulary target character
UNK_PRINT = "�"


def normalize(sentence: str) -> str:
    return " ".join(sentence.split())


# ------------------------------------------------------------------ corpus


@dataclass
class ParallelCorpus:
    pairs: list[tuple[str, str]] = field(default_factory=list)
    split: str = "train"

    def __len__(self):
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    @property
    def sources(self) -> list[str]:
        return [s for s, _ in self.pairs]

    @property
    def targets(self) -> list[str]:
        return [t for _, t in self.pairs]


def read_lines(path) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh]


def write_lines(path, lines: Iterable[str]):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in lines:
            fh.write(line + "\n")


def read_parallel(src_path, tgt_path, split: str = "train") -> ParallelCorpus:
    """Read line-aligned files; pairs with an empty side are dropped."""
    src, tgt = read_lines(src_path), read_lines(tgt_path)
    if len(src) != len(tgt):
        raise ValueError(f"{src_path} has {len(src)} lines but {tgt_path} has {len(tgt)}")
    pairs = []
    for s, t in zip(src, tgt):
        s, t = normalize(s), normalize(t)
        if s and t:
            pairs.append((s, t))
    return ParallelCorpus(pairs, split)


def write_parallel(corpus: ParallelCorpus, src_path, tgt_path):
    write_lines(src_path, corpus.sources)
    write_lines(tgt_path, corpus.targets)


# ------------------------------------------------------------- vocabularies


class Vocab:
    """Ordered symbol list; a symbol's id is its index."""

    def __init__(self, symbols: Sequence[str], unk: str | None = None):
        self.symbols = list(symbols)
        self.index = {s: i for i, s in enumerate(self.symbols)}
        if len(self.index) != len(self.symbols):
            raise ValueError("duplicate symbols in vocabulary")
        if unk is not None and unk not in self.index:
            raise ValueError(f"vocabulary lacks its unknown symbol {unk!r}")
        self.unk = unk
        self.unk_id = self.index[unk] if unk is not None else None

    def __len__(self):
        return len(self.symbols)

    def __contains__(self, sym):
        return sym in self.index

    def id(self, sym: str) -> int:
        i = self.index.get(sym)
        if i is None:
            if self.unk_id is None:
                raise KeyError(sym)
            return self.unk_id
        return i

    def __getitem__(self, i: int) -> str:
        return self.symbols[i]

    def save(self, path):
        write_lines(path, self.symbols)

    def digest(self) -> str:
        return hashlib.sha256("\n".join(self.symbols).encode("utf-8")).hexdigest()


class CharVocab(Vocab):
    """Target characters plus BOS, EOS, UNK-char and the explicit w-space."""

    def __init__(self, symbols: Sequence[str]):
        super().__init__(symbols, unk=UNK_CHAR)
        for r in CHAR_RESERVED:
            if r not in self.index:
                raise ValueError(f"char vocabulary lacks reserved symbol {r!r}")
        self.bos_id = self.index[BOS]
        self.eos_id = self.index[EOS]
        self.wspace_id = self.index[WSPACE]

    @classmethod
    def load(cls, path) -> "CharVocab":
        return cls(read_lines(path))

    def encode(self, sentence: str) -> list[int]:
        ids = [self.bos_id]
        for ch in normalize(sentence):
            ids.append(self.wspace_id if ch == " " else self.id(ch))
        ids.append(self.eos_id)
        return ids

    def decode(self, ids: Iterable[int]) -> str:
        out = []
        for i in ids:
            i = int(i)
            if i == self.bos_id:
                continue
            if i == self.eos_id:
                break
            if i == self.wspace_id:
                out.append(" ")
            elif i == self.unk_id:
                out.append(UNK_PRINT)
            else:
                out.append(self.symbols[i])
        return "".join(out)


def build_char_vocab(sentences: Iterable[str], cap: int = 400) -> CharVocab:
    """Keep the ``cap`` most frequent characters (ties: lower code point first)."""
    if cap < 1:
        raise ValueError("cap must be >= 1")
    counts = Counter()
    n = 0
    for s in sentences:
        n += 1
        counts.update(ch for ch in s if not ch.isspace())
    if n == 0 or not counts:
        raise ValueError("cannot build a character vocabulary from an empty corpus")
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], ord(kv[0])))
    kept = [ch for ch, _ in ranked[:cap]]
    return CharVocab(list(CHAR_RESERVED) + kept)


class UnitVocab(Vocab):
    """Source-side BPE units with a dedicated source-UNK id (id 0)."""

    def __init__(self, symbols: Sequence[str]):
        super().__init__(symbols, unk=SRC_UNK)

    @classmethod
    def load(cls, path) -> "UnitVocab":
        return cls(read_lines(path))


def build_unit_vocab(unit_sequences: Iterable[Sequence[str]]) -> UnitVocab:
    counts = Counter()
    for units in unit_sequences:
        counts.update(units)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return UnitVocab([SRC_UNK] + [u for u, _ in ranked if u != SRC_UNK])


# --------------------------------------------------------------------- BPE


def _word_symbols(word: str) -> tuple[str, ...]:
    return tuple(word[:-1]) + (word[-1] + EOW,)


def _merge_word(symbols: tuple[str, ...], left: str, right: str) -> tuple[str, ...]:
    out = []
    i, n = 0, len(symbols)
    while i < n:
        if i < n - 1 and symbols[i] == left and symbols[i + 1] == right:
            out.append(left + right)
            i += 2
        else:
            out.append(symbols[i])
            i += 1
    return tuple(out)


@dataclass
class BpeModel:
    merges: list[tuple[str, str]]
    # segmentation of every training word as observed at learning time
    learned_words: dict[str, tuple[str, ...]] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._cache: dict[str, tuple[str, ...]] = {}

    @property
    def vocabulary(self) -> set[str]:
        units = set()
        for seg in self.learned_words.values():
            units.update(seg)
        return units

    def segment_word(self, word: str) -> tuple[str, ...]:
        seg = self._cache.get(word)
        if seg is None:
            seg = _word_symbols(word)
            for left, right in self.merges:
                if len(seg) == 1:
                    break
                if left in seg:
                    seg = _merge_word(seg, left, right)
            self._cache[word] = seg
        return seg

    def save(self, path):
        write_lines(path, (f"{a} {b}" for a, b in self.merges))

    @classmethod
    def load(cls, path) -> "BpeModel":
        merges = []
        for n, line in enumerate(read_lines(path), 1):
            if not line:
                continue
            parts = line.split(" ")
            if len(parts) != 2:
                raise ValueError(f"{path}:{n}: expected 'left right', got {line!r}")
            merges.append((parts[0], parts[1]))
        return cls(merges)


def learn_bpe(sentences: Iterable[str], num_merges: int) -> BpeModel:
    """Learn merges by repeatedly fusing the most frequent adjacent pair.

    Words end in an end-of-word marker attached to their last character.  Ties
    between equally frequent pairs go to the lexicographically smallest pair.
    """
    if num_merges < 0:
        raise ValueError("num_merges must be >= 0")
    freqs = Counter()
    for s in sentences:
        freqs.update(s.split())
    if not freqs:
        raise ValueError("cannot learn BPE from an empty corpus")
    words = {w: _word_symbols(w) for w in sorted(freqs)}
    merges: list[tuple[str, str]] = []
    for _ in range(num_merges):
        pairs = Counter()
        for w, seg in words.items():
            f = freqs[w]
            for pair in zip(seg, seg[1:]):
                pairs[pair] += f
        if not pairs:
            break
        best = min(pairs.items(), key=lambda kv: (-kv[1], kv[0]))[0]
        merges.append(best)
        for w, seg in words.items():
            if len(seg) > 1:
                words[w] = _merge_word(seg, *best)
    return BpeModel(merges, learned_words=dict(words))


def apply_bpe(model: BpeModel, sentence: str) -> list[str]:
    units: list[str] = []
    for word in sentence.split():
        units.extend(model.segment_word(word))
    return units


def undo_bpe(units: Iterable[str]) -> str:
    words, cur = [], []
    for u in units:
        if u.endswith(EOW):
            cur.append(u[: -len(EOW)])
            words.append("".join(cur))
            cur = []
        else:
            cur.append(u)
    if cur:
        words.append("".join(cur))
    return " ".join(words)


# ---------------------------------------------------------------- encoding


@dataclass(frozen=True)
class EncodedExample:
    source: tuple[int, ...]
    target: tuple[int, ...]


def encode_example(pair: tuple[str, str], bpe: BpeModel, src_vocab: UnitVocab,
                   char_vocab: CharVocab) -> EncodedExample:
    src, tgt = pair
    units = apply_bpe(bpe, src)
    return EncodedExample(tuple(src_vocab.id(u) for u in units), tuple(char_vocab.encode(tgt)))
