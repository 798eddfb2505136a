"""Greedy and beam-search character decoding over a trained model."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .autodiff import Tensor, log_softmax_np, no_grad
from .model import NMTModel


def default_max_len(source_text: str) -> int:
    return 3 * len(source_text) + 10


@dataclass
class Hypothesis:
    ids: tuple[int, ...]
    logp: float
    state: list[np.ndarray] = field(repr=False, default_factory=list)
    finished: bool = False

    def score(self, length_norm: bool = False) -> float:
        if length_norm:
            return self.logp / max(1, len(self.ids) - 1)
        return self.logp


@dataclass
class GreedyOutput:
    ids: list[int]
    logp: float
    betas: list[np.ndarray]
    alphas: list[np.ndarray]


def beam_search(model: NMTModel, src_ids: Sequence[int], beam_width: int, max_len: int,
                bos_id: int, eos_id: int, length_norm: bool = False) -> Hypothesis:
    """Best finished hypothesis by summed log-probability (or best live one at max_len).

    Candidates from all live hypotheses compete for ``beam_width`` slots;
    a candidate ending in EOS is set aside as finished and keeps its slot.
    Ties are broken toward lower (hypothesis, symbol) indices.
    """
    if beam_width < 1 or max_len < 1:
        raise ValueError("beam_width and max_len must be >= 1")
    with no_grad():
        memory = model.encode(np.asarray([src_ids], dtype=np.int64))
        live = [Hypothesis((bos_id,), 0.0, [s.data[0] for s in model.initial_state(1)])]
        finished: list[Hypothesis] = []
        for _ in range(max_len):
            rows = np.zeros(len(live), dtype=np.int64)
            state = [Tensor(np.stack([h.state[k] for h in live])) for k in range(model.config.decoder_layers)]
            out = model.decode_step([h.ids[-1] for h in live], state, memory.select(rows))
            logp = log_softmax_np(out.char_logits.data)
            totals = np.array([h.logp for h in live])[:, None] + logp
            V = totals.shape[1]
            order = np.argsort(-totals.reshape(-1), kind="stable")[:beam_width]
            new_live = []
            for flat in order:
                b, v = divmod(int(flat), V)
                hyp = Hypothesis(live[b].ids + (v,), float(totals[b, v]),
                                 [s.data[b] for s in out.h], v == eos_id)
                (finished if hyp.finished else new_live).append(hyp)
            live = new_live
            if not live:
                break
            if finished and not length_norm:
                # scores only fall as hypotheses grow, so no live one can win
                if max(f.logp for f in finished) >= max(h.logp for h in live):
                    break
        pool = finished if finished else live
        best = pool[0]
        for h in pool[1:]:
            if h.score(length_norm) > best.score(length_norm):
                best = h
        return best


def greedy_decode(model: NMTModel, src_ids: Sequence[int], max_len: int, bos_id: int, eos_id: int,
                  keep_attention: bool = False) -> GreedyOutput:
    with no_grad():
        memory = model.encode(np.asarray([src_ids], dtype=np.int64))
        state = model.initial_state(1)
        prev = bos_id
        ids, total, betas, alphas = [bos_id], 0.0, [], []
        for _ in range(max_len):
            out = model.decode_step([prev], state, memory)
            logp = log_softmax_np(out.char_logits.data)[0]
            prev = int(np.argmax(logp))
            total += float(logp[prev])
            ids.append(prev)
            if keep_attention:
                alphas.append(out.alpha.data[0].copy())
                if out.beta is not None:
                    betas.append(out.beta.data[0].copy())
            state = out.h
            if prev == eos_id:
                break
        return GreedyOutput(ids, total, betas, alphas)


def greedy_decode_batch(model: NMTModel, sources: Sequence[Sequence[int]], max_lens: Sequence[int],
                        bos_id: int, eos_id: int, batch_size: int = 64) -> list[list[int]]:
    """Greedy decoding of many sentences at once (used for dev-set BLEU)."""
    results: list[list[int]] = [None] * len(sources)
    order = sorted(range(len(sources)), key=lambda i: len(sources[i]))
    with no_grad():
        for start in range(0, len(order), batch_size):
            idx = order[start: start + batch_size]
            B = len(idx)
            n = max(len(sources[i]) for i in idx)
            src = np.zeros((B, n), dtype=np.int64)
            mask = np.zeros((B, n))
            for b, i in enumerate(idx):
                src[b, : len(sources[i])] = sources[i]
                mask[b, : len(sources[i])] = 1.0
            limits = np.array([max_lens[i] for i in idx])
            memory = model.encode(src, mask)
            state = model.initial_state(B)
            prev = np.full(B, bos_id, dtype=np.int64)
            done = np.zeros(B, dtype=bool)
            outs = [[bos_id] for _ in range(B)]
            for t in range(int(limits.max())):
                out = model.decode_step(prev, state, memory)
                prev = np.argmax(out.char_logits.data, axis=1)
                for b in range(B):
                    if not done[b]:
                        outs[b].append(int(prev[b]))
                        if prev[b] == eos_id or len(outs[b]) - 1 >= limits[b]:
                            done[b] = True
                if done.all():
                    break
                state = out.h
            for b, i in enumerate(idx):
                results[i] = outs[b]
    return results
