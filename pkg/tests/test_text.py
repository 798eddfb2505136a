from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from morphnmt.text import (BOS, CHAR_RESERVED, EOS, EOW, SRC_UNK, WSPACE, BpeModel, CharVocab, ParallelCorpus,
                           apply_bpe, build_char_vocab, build_unit_vocab, encode_example, learn_bpe, read_parallel,
                           undo_bpe, write_lines)


def _pair_counts(words):
    """Brute-force adjacent-pair counts over character+EOW symbol sequences."""
    c = Counter()
    for w in words:
        syms = list(w[:-1]) + [w[-1] + EOW]
        for a, b in zip(syms, syms[1:]):
            c[(a, b)] += 1
    return c


# ------------------------------------------------------------- char vocab


def test_char_vocab_keeps_most_frequent():
    cv = build_char_vocab(["aaaaabbbc"], cap=2)
    assert set(cv.symbols) - set(CHAR_RESERVED) == {"a", "b"}
    assert cv.id("c") == cv.unk_id


def test_char_vocab_tie_goes_to_smaller_code_point():
    corpus = ["bbbaaa"]
    counts = Counter("bbbaaa")
    oracle = sorted(counts, key=lambda ch: (-counts[ch], ord(ch)))[:1]
    cv = build_char_vocab(corpus, cap=1)
    assert cv.symbols[len(CHAR_RESERVED):] == oracle == ["a"]


def test_char_vocab_large_cap_keeps_everything():
    text = "the quick brown fox"
    cv = build_char_vocab([text], cap=400)
    assert all(cv.id(ch) != cv.unk_id for ch in text if ch != " ")


def test_char_vocab_rejects_empty_corpus_and_bad_cap():
    with pytest.raises(ValueError):
        build_char_vocab([], cap=10)
    with pytest.raises(ValueError):
        build_char_vocab(["abc"], cap=0)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.text(min_size=1, max_size=20), min_size=1, max_size=5), st.integers(1, 30))
def test_char_vocab_size_bounded(sentences, cap):
    if not any(ch for s in sentences for ch in s if not ch.isspace()):
        return
    cv = build_char_vocab(sentences, cap)
    assert len(cv) <= cap + len(CHAR_RESERVED)
    assert cv.symbols[: len(CHAR_RESERVED)] == list(CHAR_RESERVED)


def test_encode_wraps_and_marks_spaces():
    cv = build_char_vocab(["ab"], cap=10)
    assert cv.encode("ab") == [cv.bos_id, cv.id("a"), cv.id("b"), cv.eos_id]
    assert cv.encode("a b") == [cv.bos_id, cv.id("a"), cv.wspace_id, cv.id("b"), cv.eos_id]
    assert cv.symbols[cv.wspace_id] == WSPACE


@settings(max_examples=100, deadline=None)
@given(st.lists(st.text(alphabet="abcdxyzé", min_size=1, max_size=6), min_size=1, max_size=5))
def test_encode_decode_lossless_in_vocabulary(words):
    sentence = " ".join(words)
    cv = build_char_vocab([sentence], cap=400)
    assert cv.decode(cv.encode(sentence)) == sentence


def test_char_vocab_reserved_check(tmp_path):
    with pytest.raises(ValueError):
        CharVocab([BOS, EOS, "a"])
    cv = build_char_vocab(["hello"], 5)
    cv.save(tmp_path / "v")
    assert CharVocab.load(tmp_path / "v").symbols == cv.symbols


# --------------------------------------------------------------------- BPE


def test_bpe_first_merge_aaab():
    oracle = _pair_counts(["aaab"])
    best = min(oracle.items(), key=lambda kv: (-kv[1], kv[0]))[0]
    assert learn_bpe(["aaab"], 1).merges == [best] == [("a", "a")]


def test_bpe_low_lower_tie_rule():
    words = ["low", "low", "lower"]
    oracle = _pair_counts(words)
    # the end marker rides on the last character, so o-w splits into
    # (o, w</w>) x2 and (o, w) x1 and l-o wins outright
    assert oracle[("l", "o")] == 3 and oracle[("o", "w" + EOW)] == 2
    best = min(oracle.items(), key=lambda kv: (-kv[1], kv[0]))[0]
    assert learn_bpe([" ".join(words)], 1).merges[0] == best == ("l", "o")


def test_bpe_tie_goes_to_lexicographically_smallest_pair():
    # "ab" and "cd" each contribute one pair with count 2
    assert learn_bpe(["cd ab cd ab"], 1).merges == [("a", "b" + EOW)]


def test_bpe_zero_merges_is_characters():
    model = learn_bpe(["hello world"], 0)
    assert apply_bpe(model, "hello") == ["h", "e", "l", "l", "o" + EOW]


def test_bpe_rejects_empty_and_negative():
    with pytest.raises(ValueError):
        learn_bpe([""], 3)
    with pytest.raises(ValueError):
        learn_bpe(["a"], -1)


def test_apply_bpe_empty_and_unknown_character():
    model = learn_bpe(["abab abab"], 5)
    assert apply_bpe(model, "") == []
    units = apply_bpe(model, "abqab")
    assert "q" in units
    assert undo_bpe(units) == "abqab"


def test_bpe_file_round_trip(tmp_path):
    model = learn_bpe(["the cat sat on the mat", "the hat"], 10)
    model.save(tmp_path / "codes")
    loaded = BpeModel.load(tmp_path / "codes")
    assert loaded.merges == model.merges
    assert apply_bpe(loaded, "the cat") == apply_bpe(model, "the cat")


def test_bpe_load_rejects_malformed(tmp_path):
    write_lines(tmp_path / "codes", ["a b c"])
    with pytest.raises(ValueError):
        BpeModel.load(tmp_path / "codes")


_words = st.text(alphabet="abcde", min_size=1, max_size=7)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.lists(_words, min_size=1, max_size=5).map(" ".join), min_size=1, max_size=6),
       st.integers(0, 25))
def test_bpe_replay_reproduces_learning_and_is_deterministic(sentences, merges):
    a = learn_bpe(sentences, merges)
    b = learn_bpe(sentences, merges)
    assert a.merges == b.merges
    for word, seg in a.learned_words.items():
        assert a.segment_word(word) == seg
    for s in sentences:
        assert undo_bpe(apply_bpe(a, s)) == " ".join(s.split())


# ---------------------------------------------------------- corpus/encode


def test_read_parallel_filters_and_checks(tmp_path):
    write_lines(tmp_path / "s", ["a b", "", "c"])
    write_lines(tmp_path / "t", ["x", "y", ""])
    corpus = read_parallel(tmp_path / "s", tmp_path / "t")
    assert corpus.pairs == [("a b", "x")]
    write_lines(tmp_path / "t2", ["x"])
    with pytest.raises(ValueError):
        read_parallel(tmp_path / "s", tmp_path / "t2")


def test_encode_example_maps_oov_units_to_source_unk():
    corpus = ParallelCorpus([("the cat", "kedi")])
    bpe = learn_bpe(corpus.sources, 3)
    src_vocab = build_unit_vocab(apply_bpe(bpe, s) for s in corpus.sources)
    cv = build_char_vocab(corpus.targets)
    ex = encode_example(("the dog", "kedi"), bpe, src_vocab, cv)
    assert src_vocab.id(SRC_UNK) == 0
    assert 0 in ex.source
    assert ex.target[0] == cv.bos_id and ex.target[-1] == cv.eos_id
    assert all(0 <= i < len(src_vocab) for i in ex.source)
