"""Command-line interface: ``morphnmt <command> [options]``.

Every command works inside a working directory (``--workdir``, default ``.``)
and reads or writes conventionally named files there unless a path option
overrides it.  Options may also come from ``--config FILE``; precedence is
command-line flag, then config file, then built-in default.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .checkpoint import CheckpointError, load_model, save_checkpoint
from .config import ConfigError, load_config, parse_bool
from .decoding import beam_search, default_max_len
from .embeddings import LMConfig, load_embeddings, pretrain, save_embeddings, table_from_vectors
from .evaluation import bleu, paired_bootstrap
from .experiment import PipelineConfig, annotate, compare_variants, prepare, segment_all
from .model import VARIANTS, ModelConfig, NMTModel
from .morphology import (LabelSet, SegmenterConfig, boundary_recall, build_label_vocab, extract_affixes,
                         load_segmentations, save_segmentations, word_counts)
from .synthetic import SyntheticLangSpec, synthetic_splits
from .text import (BpeModel, CharVocab, UnitVocab, apply_bpe, build_char_vocab, build_unit_vocab, learn_bpe,
                   read_lines, read_parallel, write_lines, write_parallel)
from .training import DevSet, TrainConfig, train, tune_lambda
from .visualize import plot_deltas, table_attention, write_attention

_logger = logging.getLogger("morphnmt")

FILES = {
    "bpe": "bpe.codes",
    "src_vocab": "src.vocab",
    "char_vocab": "char.vocab",
    "segs": "segs.tsv",
    "gold": "gold.seg",
    "affixes": "affixes.tsv",
    "labels": "labels.txt",
    "embeddings": "embeddings.tsv",
    "checkpoint": "model.ckpt",
    "report": "report.csv",
}


class UsageError(Exception):
    pass


def _path(args, attr: str, default_name: str) -> Path:
    value = getattr(args, attr, None)
    return Path(value) if value else Path(args.workdir) / default_name


def _need(path: Path, what: str) -> Path:
    if not path.is_file():
        raise FileNotFoundError(f"{what} not found: {path}")
    return path


def _split(args, split: str) -> tuple[Path, Path]:
    w = Path(args.workdir)
    return w / f"{split}.src", w / f"{split}.tgt"


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


# ---------------------------------------------------------------- commands


def cmd_gen_synth(args):
    spec = SyntheticLangSpec(n_stems=args.n_stems, max_suffixes=args.max_suffixes, seed=args.seed)
    train, dev, test, gold = synthetic_splits(spec, args.n_train, args.n_dev, args.n_test)
    w = Path(args.workdir)
    w.mkdir(parents=True, exist_ok=True)
    for name, corpus in (("train", train), ("dev", dev), ("test", test)):
        write_parallel(corpus, w / f"{name}.src", w / f"{name}.tgt")
    save_segmentations(w / FILES["gold"], gold)
    print(f"wrote {len(train)}/{len(dev)}/{len(test)} sentence pairs and {len(gold)} gold segmentations to {w}")


def cmd_learn_bpe(args):
    src = _need(Path(args.input) if args.input else _split(args, "train")[0], "source corpus")
    model = learn_bpe(read_lines(src), args.merges)
    out = _path(args, "output", FILES["bpe"])
    model.save(out)
    print(f"learned {len(model.merges)} merges -> {out}")


def cmd_build_vocab(args):
    src_path, tgt_path = _split(args, "train")
    corpus = read_parallel(_need(src_path, "source corpus"), _need(tgt_path, "target corpus"))
    bpe = BpeModel.load(_need(_path(args, "bpe", FILES["bpe"]), "BPE codes"))
    src_vocab = build_unit_vocab(apply_bpe(bpe, s) for s in corpus.sources)
    char_vocab = build_char_vocab(corpus.targets, args.char_cap)
    src_vocab.save(_path(args, "src_vocab", FILES["src_vocab"]))
    char_vocab.save(_path(args, "char_vocab", FILES["char_vocab"]))
    print(f"source units: {len(src_vocab)}  target characters: {len(char_vocab)}")


def _segmenter_config(args) -> SegmenterConfig:
    return SegmenterConfig(per_morph_cost=args.per_morph_cost, corpus_weight=args.corpus_weight, seed=args.seed)


def cmd_segment(args):
    tgt = _need(Path(args.input) if args.input else _split(args, "train")[1], "target corpus")
    others = []
    for split in ("dev", "test"):
        p = _split(args, split)[1]
        if p.is_file():
            others.extend(read_lines(p))
    segs = segment_all(read_lines(tgt), others, _segmenter_config(args))
    out = _path(args, "output", FILES["segs"])
    save_segmentations(out, segs)
    print(f"segmented {len(segs)} word types -> {out}")
    gold_path = _path(args, "gold", FILES["gold"])
    if gold_path.is_file():
        recall, precision = boundary_recall(segs, load_segmentations(gold_path))
        print(f"gold boundary recall {recall:.4f} precision {precision:.4f}")


def cmd_build_affixes(args):
    tgt = _need(_split(args, "train")[1], "target corpus")
    segs = load_segmentations(_need(_path(args, "segs", FILES["segs"]), "segmentation file"))
    counts = word_counts(read_lines(tgt))
    missing = [w for w in counts if w not in segs]
    if missing:
        raise ValueError(f"{len(missing)} training words lack a segmentation (e.g. {missing[0]!r})")
    inventory = extract_affixes({w: segs[w] for w in counts}, args.min_count, counts)
    inventory.save(_path(args, "output", FILES["affixes"]))
    labels = build_label_vocab(inventory)
    labels.save(_path(args, "labels", FILES["labels"]))
    print(f"{len(inventory.prefixes)} prefixes, {len(inventory.suffixes)} suffixes, {len(labels)} label classes")


def cmd_pretrain_embeddings(args):
    tgt = _need(_split(args, "train")[1], "target corpus")
    segs = load_segmentations(_need(_path(args, "segs", FILES["segs"]), "segmentation file"))
    labels = LabelSet.load(_need(_path(args, "labels", FILES["labels"]), "label file"))
    cfg = LMConfig(dim=args.dim, hidden=args.lm_hidden, epochs=args.epochs, batch_size=args.batch_size,
                   lr=args.lr, seed=args.seed)
    lm, history = pretrain(read_lines(tgt), segs, labels, cfg)
    out = _path(args, "output", FILES["embeddings"])
    save_embeddings(out, lm)
    print("next-word NLL per epoch: " + " ".join(f"{x:.4f}" for x in history))
    print(f"wrote {len(lm.morphs)} morph embeddings -> {out}")


def _model_dims(args) -> dict:
    return {"src_embed": args.src_embed, "char_embed": args.char_embed, "hidden": args.hidden,
            "attention": args.attention, "morph_dim": args.morph_dim, "readout": args.readout,
            "decoder_layers": args.decoder_layers}


class _Resources:
    """Vocabularies and segmentations shared by train/translate/export."""

    def __init__(self, args, need_labels: bool = True):
        self.bpe = BpeModel.load(_need(_path(args, "bpe", FILES["bpe"]), "BPE codes"))
        self.src_vocab = UnitVocab.load(_need(_path(args, "src_vocab", FILES["src_vocab"]), "source vocabulary"))
        self.char_vocab = CharVocab.load(_need(_path(args, "char_vocab", FILES["char_vocab"]), "char vocabulary"))
        self.labels = None
        self.segs = {}
        if need_labels:
            self.labels = LabelSet.load(_need(_path(args, "labels", FILES["labels"]), "label file"))
            self.segs = load_segmentations(_need(_path(args, "segs", FILES["segs"]), "segmentation file"))

    def hashes(self, with_labels: bool = True) -> dict[str, str]:
        out = {"source": self.src_vocab.digest(), "char": self.char_vocab.digest()}
        if with_labels and self.labels is not None:
            out["label"] = self.labels.digest()
        return out

    def source_ids(self, sentence: str) -> tuple[int, ...]:
        ids = tuple(self.src_vocab.id(u) for u in apply_bpe(self.bpe, sentence))
        if not ids:
            raise ValueError("empty source sentence")
        return ids


def cmd_train(args):
    res = _Resources(args)
    train_corpus = read_parallel(*(_need(p, "training corpus") for p in _split(args, "train")))
    examples = annotate(train_corpus, res.bpe, res.src_vocab, res.char_vocab, res.segs, res.labels)
    dev = None
    dev_src, dev_tgt = _split(args, "dev")
    if dev_src.is_file() and dev_tgt.is_file():
        dev_corpus = read_parallel(dev_src, dev_tgt, "dev")
        dev = DevSet(annotate(dev_corpus, res.bpe, res.src_vocab, res.char_vocab, res.segs, res.labels),
                     dev_corpus.sources, dev_corpus.targets)
    cfg = ModelConfig(len(res.src_vocab), len(res.char_vocab), len(res.labels), variant=args.variant,
                      seed=args.seed, **_model_dims(args))
    table = None
    if cfg.use_table:
        emb_path = _path(args, "embeddings", FILES["embeddings"])
        if args.embeddings or emb_path.is_file():
            table = table_from_vectors(load_embeddings(_need(emb_path, "embedding file")), res.labels,
                                       cfg.morph_dim, args.seed)
        else:
            _logger.warning("no pretrained embeddings at %s; morphology table starts random", emb_path)
    tcfg = TrainConfig(lr=args.lr, batch_size=args.batch_size, epochs=args.epochs, lam=args.lam, seed=args.seed,
                       clip=args.clip, patience=args.patience)
    if args.lambda_grid:
        if not cfg.use_aux:
            raise ValueError(f"variant {args.variant!r} has no label channel; lambda tuning does not apply")
        best, scores = tune_lambda(lambda: NMTModel(cfg, table), examples, dev, res.char_vocab, tcfg,
                                   _floats(args.lambda_grid))
        print("lambda grid dev BLEU: " + " ".join(f"{k:g}={v:.4f}" for k, v in sorted(scores.items())))
        tcfg = replace(tcfg, lam=best)
    model = NMTModel(cfg, table)
    report = train(model, examples, tcfg, dev, res.char_vocab)
    out = _path(args, "output", FILES["checkpoint"])
    save_checkpoint(model, out, res.hashes(), {"lambda": report.lam, "best_epoch": report.best_epoch})
    report.to_csv(_path(args, "report", FILES["report"]), record_time=args.record_time)
    print(f"variant {args.variant}, lambda {report.lam:g}, best epoch {report.best_epoch} -> {out}")


def _load_checkpoint(args, res: _Resources):
    ckpt = Path(args.checkpoint) if args.checkpoint else Path(args.workdir) / FILES["checkpoint"]
    if not ckpt.is_file():
        raise FileNotFoundError(f"checkpoint not found: {ckpt}")
    return load_model(ckpt, res.hashes(with_labels=False))[0]


def cmd_translate(args):
    res = _Resources(args, need_labels=False)
    model = _load_checkpoint(args, res)
    src = _need(Path(args.input) if args.input else _split(args, "test")[0], "input file")
    cv = res.char_vocab
    out = []
    for line in read_lines(src):
        if not line.strip():
            out.append("")
            continue
        max_len = args.max_len or default_max_len(line)
        hyp = beam_search(model, res.source_ids(line), args.beam, max_len, cv.bos_id, cv.eos_id, args.length_norm)
        out.append(cv.decode(hyp.ids))
    dest = _path(args, "output", "test.hyp")
    write_lines(dest, out)
    print(f"translated {len(out)} sentences -> {dest}")


def cmd_evaluate(args):
    hyps = read_lines(_need(Path(args.hyp), "hypothesis file"))
    refs = read_lines(_need(Path(args.ref), "reference file"))
    score = bleu(hyps, refs)
    print(f"BLEU {score.value:.6f}")
    print("precisions " + " ".join(f"{p:.6f}" for p in score.precisions) + f" BP {score.brevity_penalty:.6f}"
          f" hyp_len {score.hyp_len} ref_len {score.ref_len}")


def cmd_bootstrap(args):
    a = read_lines(_need(Path(args.sys_a), "system A output"))
    b = read_lines(_need(Path(args.sys_b), "system B output"))
    refs = read_lines(_need(Path(args.ref), "reference file"))
    res = paired_bootstrap(a, b, refs, args.samples, args.p, args.seed)
    text = res.to_json()
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    sys.stdout.write(text)


def cmd_export_attention(args):
    res = _Resources(args)
    model = _load_checkpoint(args, res)
    if args.source is not None:
        sentence = args.source
    else:
        lines = read_lines(_need(Path(args.input) if args.input else _split(args, "test")[0], "input file"))
        if not 0 <= args.line < len(lines):
            raise ValueError(f"line {args.line} out of range (file has {len(lines)} lines)")
        sentence = lines[args.line]
    export = table_attention(model, res.source_ids(sentence), res.char_vocab, res.labels.symbols,
                             args.max_len or default_max_len(sentence))
    paths = write_attention(export, _path(args, "output_prefix", "attention"), args.top_k)
    print("wrote " + " ".join(str(p) for p in paths))


def cmd_compare_variants(args):
    seeds = _ints(args.seeds)
    if len(seeds) < 3 and not args.allow_few_seeds:
        raise ValueError("compare-variants needs at least 3 seeds (use --allow-few-seeds for smoke runs)")
    corpora = [read_parallel(*(_need(p, f"{s} corpus") for p in _split(args, s)), s) for s in ("train", "dev", "test")]
    pcfg = PipelineConfig(bpe_merges=args.merges, min_affix_count=args.min_count,
                          segmenter=_segmenter_config(args), lm=LMConfig(epochs=args.lm_epochs))
    data = prepare(*corpora, pcfg)
    tcfg = TrainConfig(lr=args.lr, batch_size=args.batch_size, epochs=args.epochs, lam=args.lam, clip=args.clip,
                       patience=args.patience)
    out = _path(args, "output_dir", "compare")
    variants = [v.strip() for v in args.variants.split(",") if v.strip()]
    for v in variants:
        if v not in VARIANTS:
            raise ValueError(f"unknown variant {v!r}")
    report = compare_variants(data, seeds, tcfg, variants, _model_dims(args), pcfg.lm, args.beam,
                              args.samples, args.p, out)
    report.to_csv(out / "report.csv")
    deltas = {v: [r.delta_vs_baseline for r in report.rows if r.variant == v] for v in variants if v != "baseline"}
    plot_deltas(deltas, out / "deltas.png")
    for v, (dev_b, test_b) in report.medians().items():
        sig = "" if v == "baseline" else f"  significant vs baseline in {report.significant_count(v)}/{len(seeds)} seeds"
        print(f"{v:9s} median dev BLEU {dev_b:.4f}  median test BLEU {test_b:.4f}{sig}")
    print(f"report -> {out / 'report.csv'}")


# ------------------------------------------------------------------ parser


def _add_model_dims(p):
    d = ModelConfig(1, 1, 1)
    p.add_argument("--hidden", type=int, default=d.hidden)
    p.add_argument("--src-embed", type=int, default=d.src_embed)
    p.add_argument("--char-embed", type=int, default=d.char_embed)
    p.add_argument("--attention", type=int, default=d.attention)
    p.add_argument("--morph-dim", type=int, default=d.morph_dim)
    p.add_argument("--readout", type=int, default=d.readout)
    p.add_argument("--decoder-layers", type=int, default=d.decoder_layers)


def _add_train_opts(p, epochs: int):
    d = TrainConfig()
    p.add_argument("--epochs", type=int, default=epochs)
    p.add_argument("--lr", type=float, default=d.lr)
    p.add_argument("--batch-size", type=int, default=d.batch_size)
    p.add_argument("--lambda", dest="lam", type=float, default=d.lam)
    p.add_argument("--clip", type=float, default=d.clip)
    p.add_argument("--patience", type=int, default=d.patience)


def _add_segmenter_opts(p):
    d = SegmenterConfig()
    p.add_argument("--per-morph-cost", type=float, default=d.per_morph_cost)
    p.add_argument("--corpus-weight", type=float, default=d.corpus_weight)


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--workdir", default=".", help="directory holding corpora and artifacts")
    common.add_argument("--config", help="flat key = value file supplying option defaults")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="morphnmt", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)
    subs = {}

    def add(name, func, help_text):
        p = sub.add_parser(name, parents=[common], help=help_text, description=help_text)
        p.set_defaults(func=func)
        subs[name] = p
        return p

    p = add("gen-synth", cmd_gen_synth, "generate the synthetic agglutinative corpus and gold segmentations")
    p.add_argument("--n-train", type=int, default=2000)
    p.add_argument("--n-dev", type=int, default=200)
    p.add_argument("--n-test", type=int, default=200)
    p.add_argument("--n-stems", type=int, default=SyntheticLangSpec.n_stems)
    p.add_argument("--max-suffixes", type=int, default=SyntheticLangSpec.max_suffixes)

    p = add("learn-bpe", cmd_learn_bpe, "learn BPE merges on the source side")
    p.add_argument("--merges", type=int, default=100)
    p.add_argument("--input")
    p.add_argument("--output")

    p = add("build-vocab", cmd_build_vocab, "build the source-unit and target-character vocabularies")
    p.add_argument("--bpe")
    p.add_argument("--char-cap", type=int, default=400)
    p.add_argument("--src-vocab")
    p.add_argument("--char-vocab")

    p = add("segment", cmd_segment, "segment target words with the MDL segmenter")
    p.add_argument("--input")
    p.add_argument("--output")
    p.add_argument("--gold", help="gold segmentations for a boundary-recall report")
    _add_segmenter_opts(p)

    p = add("build-affixes", cmd_build_affixes, "extract the affix inventory and label classes")
    p.add_argument("--segs")
    p.add_argument("--min-count", type=int, default=5)
    p.add_argument("--output")
    p.add_argument("--labels")

    d = LMConfig()
    p = add("pretrain-embeddings", cmd_pretrain_embeddings, "pretrain affix embeddings with a compositional LM")
    p.add_argument("--segs")
    p.add_argument("--labels")
    p.add_argument("--epochs", type=int, default=d.epochs)
    p.add_argument("--dim", type=int, default=d.dim)
    p.add_argument("--lm-hidden", type=int, default=d.hidden)
    p.add_argument("--batch-size", type=int, default=d.batch_size)
    p.add_argument("--lr", type=float, default=d.lr)
    p.add_argument("--output")

    p = add("train", cmd_train, "train one model variant")
    p.add_argument("--variant", choices=sorted(VARIANTS), default="mo")
    _add_train_opts(p, epochs=TrainConfig().epochs)
    p.add_argument("--lambda-grid", help="comma-separated lambda values to tune on the dev set")
    _add_model_dims(p)
    for opt in ("--bpe", "--src-vocab", "--char-vocab", "--segs", "--labels", "--embeddings", "--output", "--report"):
        p.add_argument(opt)
    p.add_argument("--record-time", action="store_true", help="fill the seconds column of the report")

    p = add("translate", cmd_translate, "beam-search translation of a source file")
    p.add_argument("--checkpoint")
    p.add_argument("--input")
    p.add_argument("--output")
    p.add_argument("--beam", type=int, default=5)
    p.add_argument("--max-len", type=int, default=0, help="0 means 3 x source length + 10")
    p.add_argument("--length-norm", action="store_true")
    for opt in ("--bpe", "--src-vocab", "--char-vocab"):
        p.add_argument(opt)

    p = add("evaluate", cmd_evaluate, "corpus BLEU of a hypothesis file")
    p.add_argument("--hyp", required=True)
    p.add_argument("--ref", required=True)

    p = add("bootstrap", cmd_bootstrap, "paired bootstrap test: is system A better than B?")
    p.add_argument("--sys-a", required=True)
    p.add_argument("--sys-b", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--p", type=float, default=0.05)
    p.add_argument("--output")

    p = add("export-attention", cmd_export_attention, "export morphology-table attention for one sentence")
    p.add_argument("--checkpoint")
    p.add_argument("--source", help="source sentence (otherwise --input/--line)")
    p.add_argument("--input")
    p.add_argument("--line", type=int, default=0)
    p.add_argument("--top-k", type=int, default=10)
    p.add_argument("--max-len", type=int, default=0)
    p.add_argument("--output-prefix")
    for opt in ("--bpe", "--src-vocab", "--char-vocab", "--segs", "--labels"):
        p.add_argument(opt)

    p = add("compare-variants", cmd_compare_variants, "train all variants over several seeds and compare")
    p.add_argument("--seeds", default="1,2,3,4,5")
    p.add_argument("--variants", default=",".join(VARIANTS))
    p.add_argument("--allow-few-seeds", action="store_true")
    _add_train_opts(p, epochs=35)
    _add_model_dims(p)
    _add_segmenter_opts(p)
    p.add_argument("--merges", type=int, default=100)
    p.add_argument("--min-count", type=int, default=5)
    p.add_argument("--lm-epochs", type=int, default=LMConfig().epochs)
    p.add_argument("--beam", type=int, default=5)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--p", type=float, default=0.05)
    p.add_argument("--output-dir")
    return parser, subs


def _apply_config(parser, sub: argparse.ArgumentParser, argv: list[str], args) -> argparse.Namespace:
    """Re-parse with config-file values installed as defaults (flags still win)."""
    values = load_config(args.config)
    actions = {}
    for a in sub._actions:
        if a.dest in ("help", "config", "func"):
            continue
        actions[a.dest] = a
        # keys may also be spelled like the flag ("lambda" for --lambda)
        for opt in a.option_strings:
            if opt.startswith("--"):
                actions.setdefault(opt[2:].replace("-", "_"), a)
    defaults = {}
    for key, value in values.items():
        action = actions.get(key)
        if action is None:
            raise ConfigError(f"{args.config}: unknown key {key!r} for command {args.command!r}")
        if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            defaults[action.dest] = parse_bool(value)
        else:
            # string defaults go through the option's type conversion
            defaults[action.dest] = value
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, subs = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.config:
            args = _apply_config(parser, subs[args.command], argv, args)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(name)s: %(message)s")
        args.func(args)
    except (FileNotFoundError, ValueError, KeyError, CheckpointError, ConfigError, FloatingPointError,
            RuntimeError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"morphnmt {args.command}: error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
