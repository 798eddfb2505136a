"""Morphology-table attention export and report figures."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .decoding import greedy_decode  # noqa: E402
from .model import NMTModel  # noqa: E402
from .text import CharVocab  # noqa: E402

# keeps PNG bytes identical across runs and matplotlib versions
PNG_METADATA = {"Software": None}


@dataclass
class AttentionExport:
    chars: list[str]
    columns: list[str]
    weights: np.ndarray   # (steps, columns)


def _char_name(char_vocab: CharVocab, i: int) -> str:
    return char_vocab.symbols[i]


def table_attention(model: NMTModel, src_ids: Sequence[int], char_vocab: CharVocab, columns: Sequence[str],
                    max_len: int) -> AttentionExport:
    """Greedy-decode one sentence and collect the table weights of every step."""
    if not model.config.use_table:
        raise ValueError(f"variant {model.variant!r} has no morphology table to visualise")
    if len(columns) != model.config.label_vocab_size:
        raise ValueError(f"{len(columns)} column names for a table of {model.config.label_vocab_size} rows")
    out = greedy_decode(model, src_ids, max_len, char_vocab.bos_id, char_vocab.eos_id, keep_attention=True)
    chars = [_char_name(char_vocab, i) for i in out.ids[1:]]
    return AttentionExport(chars, list(columns), np.array(out.betas).reshape(len(chars), len(columns)))


def write_attention(export: AttentionExport, prefix, top_k: int = 10) -> list[Path]:
    """Write <prefix>.csv (full matrix), <prefix>.topk.tsv and <prefix>.png."""
    prefix = Path(prefix)
    paths = [prefix.with_name(prefix.name + ext) for ext in (".csv", ".topk.tsv", ".png")]
    with open(paths[0], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "char"] + export.columns)
        for t, (ch, row) in enumerate(zip(export.chars, export.weights), 1):
            w.writerow([t, ch] + [repr(float(x)) for x in row])
    with open(paths[1], "w", encoding="utf-8", newline="\n") as fh:
        for t, (ch, row) in enumerate(zip(export.chars, export.weights), 1):
            top = np.argsort(-row, kind="stable")[:top_k]
            fh.write(f"{t}\t{ch}\t" + "\t".join(f"{export.columns[u]}:{row[u]:.6f}" for u in top) + "\n")
    plot_attention(export, paths[2])
    return paths


def plot_attention(export: AttentionExport, path):
    steps, cols = export.weights.shape
    fig, ax = plt.subplots(figsize=(max(4.0, 0.35 * cols + 1.5), max(3.0, 0.25 * steps + 1.0)))
    im = ax.imshow(export.weights, aspect="auto", cmap="Greys", vmin=0.0, vmax=1.0)
    ax.set_xticks(range(cols))
    ax.set_xticklabels(export.columns, rotation=90, fontsize=7)
    ax.set_yticks(range(steps))
    ax.set_yticklabels(export.chars, fontsize=7)
    ax.set_xlabel("morphology table column")
    ax.set_ylabel("generated character")
    fig.colorbar(im, ax=ax, fraction=0.04)
    fig.tight_layout()
    fig.savefig(path, format="png", dpi=100, metadata=PNG_METADATA)
    plt.close(fig)


def plot_deltas(deltas: dict[str, list[float]], path):
    """Bar chart of test-BLEU gains over the baseline: one bar per variant (median), dots per seed."""
    names = list(deltas)
    med = [float(np.median(deltas[n])) if deltas[n] else 0.0 for n in names]
    fig, ax = plt.subplots(figsize=(4.5, 3.2))
    ax.bar(range(len(names)), [100 * m for m in med], color="0.6")
    for k, n in enumerate(names):
        ax.plot([k] * len(deltas[n]), [100 * d for d in deltas[n]], "k.", markersize=4)
    ax.axhline(0.0, color="k", linewidth=0.8)
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names)
    ax.set_ylabel("test BLEU minus baseline (x100)")
    fig.tight_layout()
    fig.savefig(path, format="png", dpi=100, metadata=PNG_METADATA)
    plt.close(fig)
