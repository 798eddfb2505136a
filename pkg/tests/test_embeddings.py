import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from morphnmt import autodiff as ad
from morphnmt.autodiff import ShapeError, Tape, backward, finite_diff_check
from morphnmt.embeddings import (CompositionalLM, LMConfig, compose_word_embedding, init_morph_table,
                                 load_embeddings, lm_step, pretrain, save_embeddings, table_from_vectors)
from morphnmt.experiment import prepare
from morphnmt.model import ModelConfig, NMTModel, make_batch
from morphnmt.morphology import LABEL_SPECIALS, AffixInventory, Segmentation, build_label_vocab
from morphnmt.optim import AdamConfig, AdamState, adam_step
from morphnmt.synthetic import SyntheticLangSpec, synthetic_splits
from morphnmt.training import TrainConfig, train

LABELS = build_label_vocab(AffixInventory(suffixes=Counter({"siz": 10, "lik": 10, "ler": 10})))
SEGS = {
    "terbiyesizlik": Segmentation("terbiyesizlik", ("terbiye", "siz", "lik")),
    "terbiye": Segmentation("terbiye", ("terbiye",)),
    "kitaplar": Segmentation("kitaplar", ("kitap", "lar")),
}


def tiny_lm(dim=2, **kw):
    return CompositionalLM(list(SEGS), SEGS, LABELS, LMConfig(dim=dim, hidden=3, **kw))


def test_compose_sums_surface_and_morphs():
    lm = tiny_lm()
    lm.params["surface"].data[lm.word_index["terbiyesizlik"]] = [1.0, 0.0]
    lm.params["morph"].data[...] = 0.0
    lm.params["morph"].data[lm.morph_index["siz-C"]] = [0.0, 1.0]
    lm.params["morph"].data[lm.morph_index["lik-C"]] = [1.0, 1.0]
    assert compose_word_embedding("terbiyesizlik", SEGS["terbiyesizlik"], lm).tolist() == [2.0, 2.0]


def test_compose_without_known_morphs_is_surface_alone():
    lm = tiny_lm()
    seg = Segmentation("terbiye", ("terbiye",))
    lm.params["morph"].data[lm.morph_index["terbiye"]] = 0.0
    assert np.array_equal(compose_word_embedding("terbiye", seg, lm),
                          lm.params["surface"].data[lm.word_index["terbiye"]])
    unknown = Segmentation("xyzqq", ("xyz", "qq"))
    assert np.array_equal(compose_word_embedding("xyzqq", unknown, lm), np.zeros(2))


def test_compose_all_zero_embeddings():
    lm = tiny_lm()
    lm.params["surface"].data[...] = 0.0
    lm.params["morph"].data[...] = 0.0
    assert not compose_word_embedding("terbiyesizlik", SEGS["terbiyesizlik"], lm).any()


def test_dropped_affix_contributes_nothing():
    # "lar" is not in the label inventory, so only surface + stem count
    lm = tiny_lm()
    P = lm.params
    expected = P["surface"].data[lm.word_index["kitaplar"]] + P["morph"].data[lm.morph_index["kitap"]]
    assert np.array_equal(compose_word_embedding("kitaplar", SEGS["kitaplar"], lm), expected)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 16), st.lists(st.sampled_from(["siz", "lik", "ler"]), min_size=1, max_size=4),
       st.integers(0, 4))
def test_compose_is_additive(seed, affixes, split):
    lm = tiny_lm(dim=4, seed=seed)
    word = "terbiye" + "".join(affixes)
    seg = Segmentation(word, ("terbiye",) + tuple(affixes))
    head = Segmentation("terbiye" + "".join(affixes[:split]), ("terbiye",) + tuple(affixes[:split]))
    extra = sum((lm.morph_vector(a + "-C") for a in affixes[split:]), np.zeros(4))
    lhs = compose_word_embedding(word, seg, lm)
    rhs = compose_word_embedding(word, head, lm) + extra
    assert np.array_equal(lhs, rhs) or np.max(np.abs(lhs - rhs)) <= 1e-15


def test_composition_matrix_matches_compose():
    lm = tiny_lm(dim=3)
    table = lm.word_vectors().data
    for w in SEGS:
        assert np.allclose(table[lm.word_index[w]], compose_word_embedding(w, SEGS[w], lm), atol=1e-15)


def test_lm_step_zero_weights_halves_state():
    lm = tiny_lm()
    for p in lm.params:
        p.data[...] = 0.0
    h_prev = np.array([[0.4, -1.0, 2.0]])
    h, dist = lm_step(lm, np.ones((1, 2)), h_prev)
    assert np.array_equal(h.data, 0.5 * h_prev)
    # zero output weights give uniform logits
    assert np.allclose(dist.data, 1 / len(lm.words), atol=1e-15)


def test_lm_step_rejects_shape_mismatch():
    with pytest.raises(ShapeError):
        lm_step(tiny_lm(), np.ones((1, 5)), np.zeros((1, 3)))


def test_lm_loss_gradients_match_finite_differences():
    lm = tiny_lm(dim=3, init_scale=0.5)
    data = [lm.encode_sentence("terbiye terbiyesizlik kitaplar"), lm.encode_sentence("kitaplar terbiye")]
    report = finite_diff_check(lm.params, lambda: lm.sequence_loss(data)[0], 1e-5)
    assert max(report.values()) <= 1e-4, report


def test_sequence_loss_matches_lm_step_rollout():
    lm = tiny_lm(dim=3, init_scale=0.5)
    ids = lm.encode_sentence("terbiye kitaplar")
    loss, n = lm.sequence_loss([ids])
    vecs = lm.word_vectors().data
    h = np.zeros((1, 3))
    total = 0.0
    for prev, nxt in zip([0] + ids, ids + [1]):
        h_t, dist = lm_step(lm, vecs[prev][None], h)
        total -= math.log(dist.data[0, nxt])
        h = h_t.data
    assert n == 3
    assert abs(total - float(loss.data)) <= 1e-12


def test_pretrain_overfits_alternating_corpus():
    labels = build_label_vocab(AffixInventory())
    segs = {"a": Segmentation("a", ("a",)), "b": Segmentation("b", ("b",))}
    corpus = ["a b a b a b a b a b a b"] * 20
    lm, history = pretrain(corpus, segs, labels, LMConfig(dim=8, hidden=16, epochs=60, batch_size=10, lr=0.02))
    assert history[-1] < history[0]
    # perplexity over the pattern's predictions, sentence boundaries excluded
    ids = lm.encode_sentence(corpus[0])
    vecs = lm.word_vectors().data
    h = np.zeros((1, 16))
    nll = []
    for k, (prev, nxt) in enumerate(zip([0] + ids, ids)):
        h_t, dist = lm_step(lm, vecs[prev][None], h)
        if k > 0:
            nll.append(-math.log(dist.data[0, nxt]))
        h = h_t.data
    assert math.exp(np.mean(nll)) < 1.2


def test_pretrain_zero_epochs_returns_initialisation():
    lm, history = pretrain(["terbiye kitaplar"], SEGS, LABELS, LMConfig(dim=2, hidden=3, epochs=0))
    fresh = CompositionalLM(["kitaplar", "terbiye"], SEGS, LABELS, LMConfig(dim=2, hidden=3))
    assert len(history) == 1
    for p in lm.params:
        assert np.array_equal(p.data, fresh.params[p.name].data)


def test_pretrain_same_seed_same_parameters():
    corpus = ["terbiye kitaplar", "terbiyesizlik terbiye", "kitaplar terbiyesizlik terbiye"] * 5
    cfg = LMConfig(dim=4, hidden=5, epochs=3, batch_size=4, seed=3)
    a, ha = pretrain(corpus, SEGS, LABELS, cfg)
    b, hb = pretrain(corpus, SEGS, LABELS, cfg)
    assert ha == hb
    for p in a.params:
        assert np.array_equal(p.data, b.params[p.name].data)
    assert all(y < x for x, y in zip(ha, ha[1:2]))


def test_pretrain_rejects_empty_corpus():
    with pytest.raises(ValueError):
        pretrain(["   "], SEGS, LABELS)


# ------------------------------------------------------------------- table


def test_table_copies_affix_vectors_bit_identically():
    lm = tiny_lm(dim=4, seed=5)
    table = init_morph_table(lm, LABELS)
    for u, name in enumerate(LABELS.symbols):
        if name not in LABEL_SPECIALS:
            assert np.array_equal(table[u], lm.morph_vector(name))
        else:
            assert np.all(np.abs(table[u]) <= 0.08)


def test_table_dimension_mismatch_rejected():
    with pytest.raises(ShapeError):
        init_morph_table(tiny_lm(dim=4), LABELS, dim=5)
    with pytest.raises(KeyError):
        table_from_vectors({}, LABELS, 4)


def test_embedding_file_round_trip(tmp_path):
    lm = tiny_lm(dim=4, seed=8)
    save_embeddings(tmp_path / "e.tsv", lm)
    vecs = load_embeddings(tmp_path / "e.tsv")
    assert set(vecs) == set(lm.morphs)
    for m, v in vecs.items():
        assert np.array_equal(v, lm.morph_vector(m))
    assert np.array_equal(table_from_vectors(vecs, LABELS, 4), init_morph_table(lm, LABELS))


def _synthetic_data():
    tr, dv, te, _ = synthetic_splits(SyntheticLangSpec(), 40, 8, 8)
    return prepare(tr, dv, te)


def test_one_mo_step_moves_the_table():
    data = _synthetic_data()
    cfg = ModelConfig(len(data.src_vocab), len(data.char_vocab), len(data.labels), "mo", hidden=16,
                      attention=8, readout=16)
    model = NMTModel(cfg)
    before = model.params["morph_table"].data.copy()
    batch = make_batch(data.train[:8])
    with Tape() as tape:
        loss = model.forward_sequence(batch, 0.5).loss
    backward(loss, tape)
    adam_step(model.params, AdamState(), AdamConfig(lr=1e-3))
    assert np.count_nonzero(model.params["morph_table"].data != before) >= 1


def test_table_frozen_in_effect_for_o_over_an_epoch():
    data = _synthetic_data()
    cfg = ModelConfig(len(data.src_vocab), len(data.char_vocab), len(data.labels), "o", hidden=16,
                      attention=8, readout=16)
    model = NMTModel(cfg)
    before = model.params["morph_table"].data.copy()
    train(model, data.train, TrainConfig(epochs=1, batch_size=8))
    assert np.array_equal(model.params["morph_table"].data, before)
