"""Corpus BLEU-4 and paired bootstrap resampling."""
from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

MAX_ORDER = 4


@dataclass
class BleuScore:
    value: float
    precisions: list[float]
    brevity_penalty: float
    hyp_len: int
    ref_len: int


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i: i + n]) for i in range(len(tokens) - n + 1))


def sentence_stats(hyp: str, ref: str) -> np.ndarray:
    """[hyp_len, ref_len, match_1, total_1, ..., match_4, total_4] for one pair."""
    h, r = hyp.split(), ref.split()
    row = [len(h), len(r)]
    for n in range(1, MAX_ORDER + 1):
        hc, rc = _ngrams(h, n), _ngrams(r, n)
        row.append(sum(min(c, rc[g]) for g, c in hc.items()))
        row.append(max(0, len(h) - n + 1))
    return np.array(row, dtype=np.int64)


def corpus_stats(hyps: Sequence[str], refs: Sequence[str]) -> np.ndarray:
    if len(hyps) != len(refs):
        raise ValueError(f"{len(hyps)} hypotheses but {len(refs)} references")
    if not hyps:
        raise ValueError("BLEU of an empty corpus is undefined")
    return np.stack([sentence_stats(h, r) for h, r in zip(hyps, refs)])


def bleu_from_stats(totals) -> BleuScore:
    c, r = int(totals[0]), int(totals[1])
    precisions = []
    for n in range(MAX_ORDER):
        m, t = int(totals[2 + 2 * n]), int(totals[3 + 2 * n])
        if n > 0 and m == 0:
            # add-one smoothing for empty higher-order matches
            precisions.append(1.0 / (t + 1))
        else:
            precisions.append(m / t if t else 0.0)
    if c == 0 or precisions[0] == 0.0:
        return BleuScore(0.0, precisions, 0.0 if c == 0 else 1.0, c, r)
    bp = 1.0 if c > r else math.exp(1.0 - r / c)
    value = bp * math.exp(sum(math.log(p) for p in precisions) / MAX_ORDER)
    return BleuScore(value, precisions, bp, c, r)


def bleu(hyps: Sequence[str], refs: Sequence[str]) -> BleuScore:
    return bleu_from_stats(corpus_stats(hyps, refs).sum(axis=0))


@dataclass
class BootstrapResult:
    win_fraction_a: float
    significant: bool
    samples: int
    seed: int
    p: float
    bleu_a: float
    bleu_b: float

    def to_json(self) -> str:
        d = {"winFractionA": self.win_fraction_a, "significant": self.significant,
             "samples": self.samples, "seed": self.seed, "p": self.p,
             "bleuA": self.bleu_a, "bleuB": self.bleu_b}
        return json.dumps(d, indent=2, sort_keys=True) + "\n"


def paired_bootstrap(sys_a: Sequence[str], sys_b: Sequence[str], refs: Sequence[str],
                     samples: int = 1000, p: float = 0.05, seed: int = 0) -> BootstrapResult:
    """Is system A better than B?  Significant iff A wins (strictly) in >= 1-p of resamples."""
    if not (len(sys_a) == len(sys_b) == len(refs)):
        raise ValueError("system outputs and references must be aligned")
    if samples < 100:
        raise ValueError("samples must be >= 100")
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    # canonical order makes the verdict independent of how the pairs were listed
    triples = sorted(zip(sys_a, sys_b, refs))
    stats_a = corpus_stats([t[0] for t in triples], [t[2] for t in triples])
    stats_b = corpus_stats([t[1] for t in triples], [t[2] for t in triples])
    n = len(triples)
    rng = np.random.default_rng(seed)
    wins = 0
    for _ in range(samples):
        weights = np.bincount(rng.integers(0, n, size=n), minlength=n)
        a = bleu_from_stats(weights @ stats_a).value
        b = bleu_from_stats(weights @ stats_b).value
        wins += a > b
    frac = wins / samples
    return BootstrapResult(frac, bool(frac >= 1.0 - p), samples, seed, p,
                           bleu_from_stats(stats_a.sum(0)).value, bleu_from_stats(stats_b.sum(0)).value)
