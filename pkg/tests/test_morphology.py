import itertools
import math
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from morphnmt.morphology import (BOS_L, EOS_C, LABEL_SPECIALS, STEM_C, UNK_C, WSPACE_L, AffixInventory, LabelSet,
                                 MdlSegmenter, Segmentation, SegmenterConfig, boundary_recall, build_label_vocab,
                                 extract_affixes, label_characters, label_sequence, load_segmentations,
                                 save_segmentations, segment_corpus)
from morphnmt.text import build_char_vocab


def oracle_cost(analyses: dict[str, list[str]], freqs: dict[str, int], cfg: SegmenterConfig) -> float:
    """Two-part code length computed from scratch for a full corpus analysis."""
    letters, ends = Counter(), 0
    for w, f in freqs.items():
        for ch in w:
            letters[ch] += f
        ends += f
    total = sum(letters.values()) + ends
    char_cost = {ch: -math.log(c / total) for ch, c in letters.items()}
    end_cost = -math.log(ends / total)
    counts = Counter()
    for w, morphs in analyses.items():
        for m in morphs:
            counts[m] += freqs[w]
    n = sum(counts.values())
    corpus = -sum(c * math.log(c / n) for c in counts.values())
    lexicon = sum(cfg.per_morph_cost + sum(char_cost[ch] for ch in m) + end_cost for m in counts)
    return cfg.corpus_weight * corpus + lexicon


def all_segmentations(word):
    for k in range(len(word)):
        for cuts in itertools.combinations(range(1, len(word)), k):
            bounds = (0,) + cuts + (len(word),)
            yield [word[a:b] for a, b in zip(bounds, bounds[1:])]


TERBIYE = {"terbiye": 50, "terbiyesiz": 50, "siz": 50}


def test_terbiyesiz_split_matches_brute_force_oracle():
    cfg = SegmenterConfig()
    base = {"terbiye": ["terbiye"], "siz": ["siz"]}
    costs = {}
    for seg in all_segmentations("terbiyesiz"):
        costs[tuple(seg)] = oracle_cost({**base, "terbiyesiz": seg}, TERBIYE, cfg)
    best = min(costs, key=costs.get)
    assert best == ("terbiye", "siz")
    segs = segment_corpus(TERBIYE, cfg)
    assert segs["terbiyesiz"].morphs == best
    assert segs["terbiye"].morphs == ("terbiye",)


def test_segmenter_cost_agrees_with_oracle():
    cfg = SegmenterConfig()
    seg = MdlSegmenter(cfg)
    out = seg.fit(TERBIYE)
    assert seg.cost() == pytest.approx(oracle_cost({w: list(s.morphs) for w, s in out.items()}, TERBIYE, cfg),
                                       rel=1e-12)


def test_single_word_is_not_split():
    assert segment_corpus({"abc": 1})["abc"].morphs == ("abc",)


def test_terbiyesizliklerinden_regression():
    # every stem takes every combination of four optional suffix slots, so
    # each suffix is far more frequent than any particular word
    stems = ["terbiye", "kitap", "defter", "kalem", "masa", "bardak", "sokak", "orman", "kapi", "pencere",
             "tabak", "cocuk"]
    slots = [["", "siz"], ["", "lik"], ["", "leri"], ["", "nden"]]
    counts = {s + "".join(c): 5 for s in stems for c in itertools.product(*slots)}
    segs = segment_corpus(counts)
    assert segs["terbiyesizliklerinden"].morphs == ("terbiye", "siz", "lik", "leri", "nden")


@settings(max_examples=25, deadline=None)
@given(st.dictionaries(st.text(alphabet="abcdr", min_size=1, max_size=9), st.integers(1, 30),
                       min_size=1, max_size=25))
def test_segmentation_round_trip_and_mdl_monotone(counts):
    seg = MdlSegmenter(SegmenterConfig(max_epochs=3))
    out = seg.fit(counts)
    for w, s in out.items():
        assert "".join(s.morphs) == w
    assert all(d <= 1e-9 for d in seg.split_deltas)


def test_unseen_word_viterbi_round_trip():
    seg = MdlSegmenter()
    seg.fit({"kitaplar": 30, "kitap": 30, "masalar": 30, "masa": 30})
    assert "".join(seg.segment("defterlar")) == "defterlar"


# ----------------------------------------------------------------- affixes


def test_stem_is_longest_morph_leftmost_on_ties():
    s = Segmentation("terbiyesizlik", ("terbiye", "siz", "lik"))
    assert s.stem == "terbiye" and s.suffixes == ("siz", "lik") and s.prefixes == ()
    t = Segmentation("undo", ("un", "do"))
    assert t.stem == "un" and t.suffixes == ("do",)


def test_segmentation_rejects_bad_round_trip():
    with pytest.raises(ValueError):
        Segmentation("abc", ("ab", "d"))


def test_extract_affixes_threshold():
    segs = [Segmentation("terbiyesizlik", ("terbiye", "siz", "lik")), Segmentation("kitapsiz", ("kitap", "siz"))]
    inv = extract_affixes(segs, min_count=2)
    assert dict(inv.suffixes) == {"siz": 2}
    assert not inv.prefixes
    inv1 = extract_affixes(segs, min_count=1)
    assert set(inv1.suffixes) == {"siz", "lik"}
    with pytest.raises(ValueError):
        extract_affixes(segs, min_count=0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.lists(st.sampled_from(["ab", "c", "dde", "f", "ghij"]), min_size=1, max_size=4), min_size=1,
                max_size=20), st.integers(1, 6))
def test_extract_affixes_never_below_min_count(morph_lists, min_count):
    segs = [Segmentation("".join(m), tuple(m)) for m in morph_lists]
    inv = extract_affixes(segs, min_count)
    assert all(c >= min_count for c in inv.counts.values())


def test_label_vocab_order():
    assert build_label_vocab(AffixInventory()).symbols == list(LABEL_SPECIALS)
    inv = AffixInventory(suffixes=Counter({"siz": 10, "lik": 10, "ler": 30}))
    assert build_label_vocab(inv).symbols[len(LABEL_SPECIALS):] == ["ler-C", "lik-C", "siz-C"]


def test_label_vocab_size_counts_affixes_plus_specials():
    inv = AffixInventory(suffixes=Counter({f"a{i}": i + 1 for i in range(304)}))
    assert len(build_label_vocab(inv)) == 304 + 5


def test_inventory_and_segmentation_files_round_trip(tmp_path):
    inv = AffixInventory(Counter({"un": 7}), Counter({"siz": 10, "un": 3}))
    inv.save(tmp_path / "aff")
    assert AffixInventory.load(tmp_path / "aff").counts == inv.counts
    segs = {"terbiyesiz": Segmentation("terbiyesiz", ("terbiye", "siz"))}
    save_segmentations(tmp_path / "segs", segs)
    assert load_segmentations(tmp_path / "segs") == segs


# ------------------------------------------------------------------ labels


def _labels(*affixes):
    return build_label_vocab(AffixInventory(suffixes=Counter({a: 10 for a in affixes})))


def test_label_characters_terbiyesizlik():
    labels = _labels("siz", "lik")
    segs = {"terbiyesizlik": Segmentation("terbiyesizlik", ("terbiye", "siz", "lik"))}
    cv = build_char_vocab(["terbiyesizlik"])
    out = label_characters("terbiyesizlik", segs, labels, cv)
    names = [labels.symbols[i] for i in out.label_ids]
    assert names == [BOS_L] + [STEM_C] * 7 + ["siz-C"] * 3 + ["lik-C"] * 3 + [EOS_C]
    assert len(out.char_ids) == len(out.label_ids)


def test_label_single_char_word_and_space():
    labels = _labels()
    assert [labels.symbols[i] for i in label_sequence("a", {}, labels)] == [BOS_L, STEM_C, EOS_C]
    names = [labels.symbols[i] for i in label_sequence("ab cd", {}, labels)]
    assert names[3] == WSPACE_L


def test_dropped_affix_gets_unk_label():
    labels = _labels("siz")
    segs = {"kitapsizlik": Segmentation("kitapsizlik", ("kitap", "siz", "lik"))}
    names = [labels.symbols[i] for i in label_sequence("kitapsizlik", segs, labels)]
    assert names[-4:-1] == [UNK_C] * 3


@settings(max_examples=100, deadline=None)
@given(st.lists(st.text(alphabet="abcxyz", min_size=1, max_size=8), min_size=1, max_size=5))
def test_label_length_matches_characters(words):
    sentence = " ".join(words)
    labels = _labels("ab", "c")
    segs = {w: Segmentation(w, tuple(w[i:i + 2] for i in range(0, len(w), 2))) for w in words}
    cv = build_char_vocab([sentence])
    out = label_characters(sentence, segs, labels, cv)
    assert len(out.char_ids) == len(out.label_ids)


def test_boundary_recall_counts():
    gold = {"abcd": Segmentation("abcd", ("ab", "cd"))}
    assert boundary_recall({"abcd": Segmentation("abcd", ("ab", "cd"))}, gold) == (1.0, 1.0)
    assert boundary_recall({"abcd": Segmentation("abcd", ("a", "b", "cd"))}, gold) == (1.0, 0.5)


def test_label_set_requires_specials():
    with pytest.raises(ValueError):
        LabelSet(["stem-C"])
