"""A seeded toy agglutinative language with English-like glosses.

Target words are a stem followed by a chain of suffixes drawn from ordered
slots (number, possessive, case), as in ``terbiye.siz.lik.leri.nden``.  The
source side spells the same content analytically: ``from their houses``.
"""
from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field

from .morphology import Segmentation
from .text import ParallelCorpus

CONSONANTS = "bcdfgkmprstvz"
VOWELS = "aeiou"


@dataclass(frozen=True)
class Affix:
    gloss: str
    form: str
    # source realisation: a word placed before the stem gloss ("before") or a
    # string glued onto the stem gloss ("glue")
    source: str
    attach: str = "before"


@dataclass
class SuffixSlot:
    name: str
    affixes: list[Affix]
    prob: float = 0.5


def default_slots() -> list[SuffixSlot]:
    return [
        SuffixSlot("number", [Affix("PL", "ler", "s", "glue")], prob=0.5),
        SuffixSlot("possessive", [
            Affix("P1SG", "im", "my"),
            Affix("P2SG", "un", "your"),
            Affix("P3PL", "leri", "their"),
        ], prob=0.5),
        SuffixSlot("case", [
            Affix("ABL", "den", "from"),
            Affix("DAT", "ya", "to"),
            Affix("LOC", "ta", "at"),
            Affix("GEN", "nin", "of"),
        ], prob=0.6),
    ]


@dataclass
class SyntheticLangSpec:
    n_stems: int = 60
    stem_len: tuple[int, int] = (4, 7)
    slots: list[SuffixSlot] = field(default_factory=default_slots)
    max_suffixes: int = 3
    sentence_len: tuple[int, int] = (2, 4)
    seed: int = 0


@dataclass
class Lexicon:
    stems: list[str]
    glosses: list[str]


def _random_stem(rng: random.Random, lo: int, hi: int) -> str:
    n = rng.randint(lo, hi)
    vowel_first = rng.random() < 0.3
    letters = []
    for i in range(n):
        vowel = (i % 2 == 0) == vowel_first
        letters.append(rng.choice(VOWELS if vowel else CONSONANTS))
    return "".join(letters)


def build_lexicon(spec: SyntheticLangSpec) -> Lexicon:
    rng = random.Random(f"lexicon-{spec.seed}")
    affix_forms = {a.form for slot in spec.slots for a in slot.affixes}
    function_words = {a.source for slot in spec.slots for a in slot.affixes}
    stems: list[str] = []
    seen = set()
    while len(stems) < spec.n_stems:
        s = _random_stem(rng, *spec.stem_len)
        # stems and affixes come from disjoint string sets, and no stem may
        # end in something that reads like a suffix
        if s in seen or s in affix_forms or any(s.endswith(f) for f in affix_forms):
            continue
        seen.add(s)
        stems.append(s)
    glosses: list[str] = []
    gseen = set(function_words)
    while len(glosses) < spec.n_stems:
        g = "".join(rng.choice("hjklnwxy" if i % 2 == 0 else "aeiou") for i in range(rng.randint(3, 5)))
        if g in gseen:
            continue
        gseen.add(g)
        glosses.append(g)
    return Lexicon(stems, glosses)


def make_word(stem_idx: int, affixes: list[Affix], lex: Lexicon) -> tuple[str, str, Segmentation]:
    stem = lex.stems[stem_idx]
    morphs = (stem,) + tuple(a.form for a in affixes)
    gloss = lex.glosses[stem_idx] + "".join(a.source for a in affixes if a.attach == "glue")
    before = [a.source for a in reversed(affixes) if a.attach == "before"]
    source = " ".join(before + [gloss])
    word = "".join(morphs)
    return word, source, Segmentation(word, morphs, 0)


def _sample_affixes(rng: random.Random, spec: SyntheticLangSpec) -> list[Affix]:
    chosen = []
    for slot in spec.slots:
        if len(chosen) >= spec.max_suffixes:
            break
        if rng.random() < slot.prob:
            chosen.append(slot.affixes[rng.randrange(len(slot.affixes))])
    return chosen


def gen_synthetic_corpus(spec: SyntheticLangSpec, n: int, stream: str = "train"):
    """Return ``n`` sentence pairs plus the gold segmentation of every target word."""
    if n < 1:
        raise ValueError("n must be >= 1")
    lex = build_lexicon(spec)
    rng = random.Random(f"{stream}-{spec.seed}")
    pairs, gold = [], {}
    for _ in range(n):
        src_words, tgt_words = [], []
        for _ in range(rng.randint(*spec.sentence_len)):
            word, source, seg = make_word(rng.randrange(spec.n_stems), _sample_affixes(rng, spec), lex)
            tgt_words.append(word)
            src_words.append(source)
            # a surface string with two analyses keeps the first one
            gold.setdefault(word, seg)
        pairs.append((" ".join(src_words), " ".join(tgt_words)))
    return ParallelCorpus(pairs, stream), gold


def synthetic_splits(spec: SyntheticLangSpec, n_train: int, n_dev: int, n_test: int):
    """Train/dev/test corpora from independent seeded streams, plus merged gold segmentations."""
    gold = {}
    out = []
    for name, n in (("train", n_train), ("dev", n_dev), ("test", n_test)):
        corpus, g = gen_synthetic_corpus(spec, n, name)
        out.append(corpus)
        for w, s in g.items():
            gold.setdefault(w, s)
    return out[0], out[1], out[2], gold


def word_closure(spec: SyntheticLangSpec) -> set[tuple[str, ...]]:
    """Every suffix-form chain the grammar can produce (stem excluded)."""
    chains = set()
    options = [[None] + [a.form for a in slot.affixes] for slot in spec.slots]
    for combo in itertools.product(*options):
        chain = tuple(f for f in combo if f is not None)
        if len(chain) <= spec.max_suffixes:
            chains.add(chain)
    return chains
