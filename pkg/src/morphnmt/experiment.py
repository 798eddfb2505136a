"""End-to-end data preparation and the four-variant comparison."""
from __future__ import annotations

import csv
import logging
import statistics
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

from .checkpoint import save_checkpoint
from .decoding import beam_search
from .embeddings import LMConfig, init_morph_table, pretrain
from .evaluation import bleu, paired_bootstrap
from .model import VARIANTS, AnnotatedExample, ModelConfig, NMTModel
from .morphology import (LabelSet, MdlSegmenter, Segmentation, SegmenterConfig, build_label_vocab,
                         extract_affixes, label_sequence, word_counts)
from .text import (BpeModel, CharVocab, ParallelCorpus, UnitVocab, apply_bpe, build_char_vocab,
                   build_unit_vocab, learn_bpe, write_lines)
from .training import DevSet, TrainConfig, train

_logger = logging.getLogger(__name__)


@dataclass
class PipelineConfig:
    bpe_merges: int = 100
    char_cap: int = 400
    min_affix_count: int = 5
    segmenter: SegmenterConfig = field(default_factory=SegmenterConfig)
    lm: LMConfig = field(default_factory=LMConfig)


@dataclass
class PreparedData:
    bpe: BpeModel
    src_vocab: UnitVocab
    char_vocab: CharVocab
    labels: LabelSet
    segmentations: dict[str, Segmentation]
    train: list[AnnotatedExample]
    dev: DevSet
    test: DevSet

    def vocab_hashes(self) -> dict[str, str]:
        return {"source": self.src_vocab.digest(), "char": self.char_vocab.digest(), "label": self.labels.digest()}


def segment_all(train_targets: Sequence[str], other_targets: Sequence[str],
                config: SegmenterConfig | None = None) -> dict[str, Segmentation]:
    """Fit the segmenter on training words; segment unseen dev/test words with the learned lexicon."""
    seg = MdlSegmenter(config)
    out = dict(seg.fit(word_counts(train_targets)))
    for w in sorted(word_counts(other_targets)):
        if w not in out:
            out[w] = Segmentation(w, seg.segment(w))
    return out


def annotate(corpus: ParallelCorpus, bpe: BpeModel, src_vocab: UnitVocab, char_vocab: CharVocab,
             segmentations: Mapping[str, Segmentation], labels: LabelSet) -> list[AnnotatedExample]:
    out = []
    for src, tgt in corpus:
        units = apply_bpe(bpe, src)
        out.append(AnnotatedExample(tuple(src_vocab.id(u) for u in units), tuple(char_vocab.encode(tgt)),
                                    tuple(label_sequence(tgt, segmentations, labels))))
    return out


def prepare(train: ParallelCorpus, dev: ParallelCorpus, test: ParallelCorpus,
            config: PipelineConfig | None = None) -> PreparedData:
    config = config or PipelineConfig()
    bpe = learn_bpe(train.sources, config.bpe_merges)
    src_vocab = build_unit_vocab(apply_bpe(bpe, s) for s in train.sources)
    char_vocab = build_char_vocab(train.targets, config.char_cap)
    segs = segment_all(train.targets, dev.targets + test.targets, config.segmenter)
    counts = word_counts(train.targets)
    inventory = extract_affixes({w: segs[w] for w in counts}, config.min_affix_count, counts)
    labels = build_label_vocab(inventory)

    def devset(corpus):
        return DevSet(annotate(corpus, bpe, src_vocab, char_vocab, segs, labels), corpus.sources, corpus.targets)

    return PreparedData(bpe, src_vocab, char_vocab, labels, segs,
                        annotate(train, bpe, src_vocab, char_vocab, segs, labels), devset(dev), devset(test))


def model_config_for(data: PreparedData, variant: str, seed: int, **dims) -> ModelConfig:
    return ModelConfig(len(data.src_vocab), len(data.char_vocab), len(data.labels), variant=variant, seed=seed, **dims)


def translate_beam(model: NMTModel, data: PreparedData, split: DevSet, beam: int) -> list[str]:
    cv = data.char_vocab
    out = []
    for ex, src in zip(split.examples, split.sources):
        hyp = beam_search(model, ex.source, beam, 3 * len(src) + 10, cv.bos_id, cv.eos_id)
        out.append(cv.decode(hyp.ids))
    return out


@dataclass
class VariantResult:
    seed: int
    variant: str
    dev_bleu: float
    test_bleu: float
    delta_vs_baseline: float | None = None
    significant: bool | None = None
    win_fraction: float | None = None


@dataclass
class ExperimentReport:
    rows: list[VariantResult]

    def medians(self) -> dict[str, tuple[float, float]]:
        out = {}
        for v in VARIANTS:
            rows = [r for r in self.rows if r.variant == v]
            if rows:
                out[v] = (statistics.median(r.dev_bleu for r in rows), statistics.median(r.test_bleu for r in rows))
        return out

    def significant_count(self, variant: str) -> int:
        return sum(1 for r in self.rows if r.variant == variant and r.significant)

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["seed", "variant", "dev_bleu", "test_bleu", "delta_vs_baseline", "significant"])
            for r in self.rows:
                w.writerow([r.seed, r.variant, f"{r.dev_bleu:.6f}", f"{r.test_bleu:.6f}",
                            "" if r.delta_vs_baseline is None else f"{r.delta_vs_baseline:.6f}",
                            "" if r.significant is None else str(r.significant).lower()])


def train_variant(data: PreparedData, variant: str, seed: int, train_cfg: TrainConfig,
                  model_dims: Mapping | None = None, lm_config: LMConfig | None = None) -> NMTModel:
    cfg = model_config_for(data, variant, seed, **(model_dims or {}))
    table = None
    if cfg.use_table:
        lm_cfg = replace(lm_config or LMConfig(), dim=cfg.morph_dim, seed=seed)
        lm, _ = pretrain([data.char_vocab.decode(e.target) for e in data.train], data.segmentations,
                         data.labels, lm_cfg)
        table = init_morph_table(lm, data.labels, cfg.morph_dim, seed)
    model = NMTModel(cfg, table)
    train(model, data.train, replace(train_cfg, seed=seed), data.dev, data.char_vocab)
    return model


def compare_variants(data: PreparedData, seeds: Sequence[int], train_cfg: TrainConfig,
                     variants: Sequence[str] = tuple(VARIANTS), model_dims: Mapping | None = None,
                     lm_config: LMConfig | None = None, beam: int = 5, samples: int = 1000, p: float = 0.05,
                     out_dir=None) -> ExperimentReport:
    """Train every variant for every seed on the same data; bootstrap each against the baseline."""
    if len(seeds) < 1:
        raise ValueError("need at least one seed")
    variants = list(variants)
    if "baseline" not in variants:
        variants.insert(0, "baseline")
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    rows = []
    for seed in seeds:
        outputs = {}
        for variant in variants:
            model = train_variant(data, variant, seed, train_cfg, model_dims, lm_config)
            dev_hyps = translate_beam(model, data, data.dev, beam)
            test_hyps = translate_beam(model, data, data.test, beam)
            outputs[variant] = test_hyps
            rows.append(VariantResult(seed, variant, bleu(dev_hyps, data.dev.references).value,
                                      bleu(test_hyps, data.test.references).value))
            _logger.info("seed %d %s dev %.4f test %.4f", seed, variant, rows[-1].dev_bleu, rows[-1].test_bleu)
            if out is not None:
                save_checkpoint(model, out / f"{variant}.seed{seed}.ckpt", data.vocab_hashes())
                write_lines(out / f"{variant}.seed{seed}.test.hyp", test_hyps)
        base = next(r for r in rows if r.seed == seed and r.variant == "baseline")
        for r in rows:
            if r.seed != seed or r.variant == "baseline":
                continue
            res = paired_bootstrap(outputs[r.variant], outputs["baseline"], data.test.references, samples, p, seed)
            r.delta_vs_baseline = r.test_bleu - base.test_bleu
            r.significant = res.significant
            r.win_fraction = res.win_fraction_a
    return ExperimentReport(rows)
