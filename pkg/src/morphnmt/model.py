"""Character-level encoder-decoder with source attention, an attended
morphology table and an auxiliary morphological-label channel.

Four variants share one implementation:

========  ===============  ================
variant   morphology table  label channel
========  ===============  ================
baseline  no               no
m         yes              no
o         no               yes
mo        yes              yes
========  ===============  ================

Every variant owns a ``morph_table`` parameter so checkpoints and training
code treat them uniformly; without the table flag it is simply unreachable
and its gradient stays exactly zero.
"""
from __future__ import annotations

import zlib
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import ParameterSet, Tensor

VARIANTS = {
    "baseline": (False, False),
    "m": (True, False),
    "o": (False, True),
    "mo": (True, True),
}

NEG_INF = -1e9


def variant_flags(variant: str) -> tuple[bool, bool]:
    """(use_morph_table, use_aux_channel) for a variant name."""
    try:
        return VARIANTS[variant]
    except KeyError:
        raise ValueError(f"unknown variant {variant!r}; expected one of {sorted(VARIANTS)}") from None


@dataclass
class ModelConfig:
    src_vocab_size: int
    char_vocab_size: int
    label_vocab_size: int
    variant: str = "mo"
    src_embed: int = 32
    char_embed: int = 32
    hidden: int = 64
    attention: int = 32
    morph_dim: int = 32
    readout: int = 64
    decoder_layers: int = 1
    init_scale: float = 0.08
    seed: int = 0

    def __post_init__(self):
        variant_flags(self.variant)
        if not 1 <= self.decoder_layers <= 4:
            raise ValueError("decoder_layers must be between 1 and 4")

    @property
    def use_table(self) -> bool:
        return VARIANTS[self.variant][0]

    @property
    def use_aux(self) -> bool:
        return VARIANTS[self.variant][1]

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class AnnotatedExample:
    source: tuple[int, ...]
    target: tuple[int, ...]
    labels: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.labels is not None and len(self.labels) != len(self.target):
            raise ValueError(f"{len(self.target)} target characters but {len(self.labels)} labels")
        if len(self.target) < 2:
            raise ValueError("target must hold at least BOS and EOS")


@dataclass
class Batch:
    src: np.ndarray
    src_mask: np.ndarray
    tgt_in: np.ndarray
    tgt_out: np.ndarray
    labels_out: np.ndarray | None
    tgt_mask: np.ndarray

    @property
    def size(self) -> int:
        return self.src.shape[0]

    @property
    def n_chars(self) -> int:
        return int(self.tgt_mask.sum())


def make_batch(examples: Sequence[AnnotatedExample]) -> Batch:
    """Pad a list of examples; the decoder reads target[:-1] and predicts target[1:]."""
    if not examples:
        raise ValueError("empty batch")
    for ex in examples:
        if not ex.source:
            raise ValueError("empty source sequence")
    B = len(examples)
    n = max(len(ex.source) for ex in examples)
    T = max(len(ex.target) for ex in examples) - 1
    src = np.zeros((B, n), dtype=np.int64)
    src_mask = np.zeros((B, n))
    tgt_in = np.zeros((B, T), dtype=np.int64)
    tgt_out = np.zeros((B, T), dtype=np.int64)
    tgt_mask = np.zeros((B, T))
    has_labels = all(ex.labels is not None for ex in examples)
    labels_out = np.zeros((B, T), dtype=np.int64) if has_labels else None
    for b, ex in enumerate(examples):
        src[b, : len(ex.source)] = ex.source
        src_mask[b, : len(ex.source)] = 1.0
        k = len(ex.target) - 1
        tgt_in[b, :k] = ex.target[:-1]
        tgt_out[b, :k] = ex.target[1:]
        tgt_mask[b, :k] = 1.0
        if has_labels:
            labels_out[b, :k] = ex.labels[1:]
    return Batch(src, src_mask, tgt_in, tgt_out, labels_out, tgt_mask)


@dataclass
class Memory:
    """Encoder output plus precomputed attention keys, shared by all decode steps."""

    states: Tensor          # (B, n, 2H): s_j
    keys: Tensor            # (B, n, A): W_s s_j
    bias: np.ndarray        # (B, n): 0 for real positions, -1e9 for padding
    table: Tensor | None    # (U, d): row u is f_u
    table_keys: Tensor | None  # (U, A): W_f f_u

    def select(self, rows: np.ndarray) -> "Memory":
        """Reindex the batch dimension (used by beam search), no gradients."""
        return Memory(Tensor(self.states.data[rows]), Tensor(self.keys.data[rows]), self.bias[rows],
                      self.table, self.table_keys)


@dataclass
class StepOutput:
    h: list[Tensor]
    c: Tensor
    alpha: Tensor
    char_logits: Tensor
    cm: Tensor | None = None
    beta: Tensor | None = None
    label_logits: Tensor | None = None

    @property
    def top(self) -> Tensor:
        return self.h[-1]


@dataclass
class ForwardResult:
    loss: Tensor
    char_nll: float
    label_nll: float
    n_chars: int
    alphas: list[np.ndarray] = field(default_factory=list)
    betas: list[np.ndarray] = field(default_factory=list)
    char_logits: Tensor | None = None
    label_logits: Tensor | None = None


def gru_cell(x_proj: Tensor, h: Tensor, U_zr: Tensor, U_n: Tensor) -> Tensor:
    """One GRU update given the precomputed input projection ``x W + b``.

    z, r = sigmoid(x W_zr + h U_zr); n = tanh(x W_n + (r * h) U_n);
    h' = z * h + (1 - z) * n
    """
    H = h.shape[-1]
    zr = ad.sigmoid(ad.add(x_proj[..., : 2 * H], ad.matmul(h, U_zr)))
    z, r = zr[..., :H], zr[..., H:]
    n = ad.tanh(ad.add(x_proj[..., 2 * H:], ad.matmul(ad.mul(r, h), U_n)))
    return ad.add(n, ad.mul(z, ad.sub(h, n)))


def additive_scores(keys: Tensor, query: Tensor, v: Tensor) -> Tensor:
    """e = v^T tanh(keys + query) for keys (..., K, A) and query (B, A) -> (B, K)."""
    B, A = query.shape
    q = ad.reshape(query, (B, 1, A))
    e = ad.matmul(ad.tanh(ad.add(keys, q)), v)
    return ad.reshape(e, (B, e.shape[-2]))


class NMTModel:
    def __init__(self, config: ModelConfig, table_init: np.ndarray | None = None):
        self.config = config
        self.params = ParameterSet()
        self._build(table_init)

    @property
    def variant(self) -> str:
        return self.config.variant

    def _init(self, name: str, shape, zero: bool = False) -> np.ndarray:
        if zero:
            return np.zeros(shape)
        # per-name streams: parameters shared by two variants start identical
        seq = np.random.SeedSequence([self.config.seed, zlib.crc32(name.encode())])
        s = self.config.init_scale
        return np.random.default_rng(seq).uniform(-s, s, size=shape)

    def _param(self, name, shape, zero=False):
        return self.params.create(name, self._init(name, shape, zero))

    def _build(self, table_init):
        c = self.config
        H, A, E, R, d = c.hidden, c.attention, c.char_embed, c.readout, c.morph_dim
        self._param("src_embed", (c.src_vocab_size, c.src_embed))
        for side in ("enc_fwd", "enc_bwd"):
            self._param(f"{side}.W", (c.src_embed, 3 * H))
            self._param(f"{side}.b", (3 * H,), zero=True)
            self._param(f"{side}.U_zr", (H, 2 * H))
            self._param(f"{side}.U_n", (H, H))
        self._param("att.W_s", (2 * H, A))
        self._param("att.W_h", (H, A))
        self._param("att.v", (A, 1))

        if table_init is not None:
            table_init = np.asarray(table_init, dtype=np.float64)
            if table_init.shape != (c.label_vocab_size, d):
                raise ValueError(f"table init has shape {table_init.shape}, expected {(c.label_vocab_size, d)}")
            self.params.create("morph_table", table_init)
        else:
            self._param("morph_table", (c.label_vocab_size, d))
        if c.use_table:
            self._param("matt.W_f", (d, A))
            self._param("matt.W_h", (H, A))
            self._param("matt.v", (A, 1))

        self._param("tgt_embed", (c.char_vocab_size, E))
        for layer in range(c.decoder_layers):
            p = f"dec{layer}"
            if layer == 0:
                self._param(f"{p}.W_e", (E, 3 * H))
                self._param(f"{p}.W_c", (2 * H, 3 * H))
            else:
                self._param(f"{p}.W", (H, 3 * H))
            self._param(f"{p}.b", (3 * H,), zero=True)
            self._param(f"{p}.U_zr", (H, 2 * H))
            self._param(f"{p}.U_n", (H, H))

        self._param("readout.W_h", (H, R))
        self._param("readout.W_e", (E, R))
        self._param("readout.W_c", (2 * H, R))
        if c.use_table:
            self._param("readout.W_m", (d, R))
        self._param("readout.b", (R,), zero=True)
        self._param("out_char.W", (R, c.char_vocab_size))
        self._param("out_char.b", (c.char_vocab_size,), zero=True)
        if c.use_aux:
            self._param("out_label.W", (R, c.label_vocab_size))
            self._param("out_label.b", (c.label_vocab_size,), zero=True)

    def label_channel_names(self) -> list[str]:
        return [n for n in self.params.names() if n.startswith("out_label.")]

    # ------------------------------------------------------------ encoder

    def _run_gru(self, prefix: str, x_proj: Tensor, mask: np.ndarray | None, reverse: bool) -> list[Tensor]:
        P = self.params
        B, n = x_proj.shape[0], x_proj.shape[1]
        H = self.config.hidden
        h = Tensor(np.zeros((B, H)))
        out: list[Tensor | None] = [None] * n
        steps = range(n - 1, -1, -1) if reverse else range(n)
        for t in steps:
            h_new = gru_cell(x_proj[:, t], h, P[f"{prefix}.U_zr"], P[f"{prefix}.U_n"])
            if mask is not None and not mask[:, t].all():
                # padded positions keep the previous state
                m = mask[:, t: t + 1]
                h_new = ad.add(h, ad.mul(Tensor(m), ad.sub(h_new, h)))
            h = h_new
            out[t] = h
        return out

    def encode(self, src: np.ndarray, src_mask: np.ndarray | None = None) -> Memory:
        """Bidirectional GRU encoder; s_j = [forward_j; backward_j]."""
        src = np.atleast_2d(np.asarray(src, dtype=np.int64))
        if src.shape[1] == 0:
            raise ValueError("cannot encode an empty source sequence")
        if src_mask is None:
            src_mask = np.ones(src.shape)
        P = self.params
        x = ad.embedding(P["src_embed"], src)
        padded = src_mask if not src_mask.all() else None
        fwd = self._run_gru("enc_fwd", ad.add(ad.matmul(x, P["enc_fwd.W"]), P["enc_fwd.b"]), padded, False)
        bwd = self._run_gru("enc_bwd", ad.add(ad.matmul(x, P["enc_bwd.W"]), P["enc_bwd.b"]), padded, True)
        states = ad.stack([ad.concat([f, b]) for f, b in zip(fwd, bwd)], axis=1)
        keys = ad.matmul(states, P["att.W_s"])
        bias = np.where(src_mask > 0, 0.0, NEG_INF)
        table = table_keys = None
        if self.config.use_table:
            table = P["morph_table"]
            table_keys = ad.matmul(table, P["matt.W_f"])
        return Memory(states, keys, bias, table, table_keys)

    # ---------------------------------------------------------- attention

    def attend_source(self, memory: Memory, h_prev: Tensor) -> tuple[Tensor, Tensor]:
        """c_i = sum_j alpha_ij s_j with alpha = softmax(v^T tanh(W_s s_j + W_h h_{i-1}))."""
        P = self.params
        e = additive_scores(memory.keys, ad.matmul(h_prev, P["att.W_h"]), P["att.v"])
        alpha = ad.softmax(ad.add(e, memory.bias))
        B, n = alpha.shape
        c = ad.matmul(ad.reshape(alpha, (B, 1, n)), memory.states)
        return ad.reshape(c, (B, c.shape[-1])), alpha

    def attend_morphology(self, memory: Memory, h_prev: Tensor) -> tuple[Tensor, Tensor]:
        """c^m_i = sum_u beta_iu f_u with beta = softmax(v_m^T tanh(W_f f_u + W_mh h_{i-1}))."""
        P = self.params
        e = additive_scores(memory.table_keys, ad.matmul(h_prev, P["matt.W_h"]), P["matt.v"])
        beta = ad.softmax(e)
        return ad.matmul(beta, memory.table), beta

    # ------------------------------------------------------------ decoder

    def initial_state(self, batch_size: int) -> list[Tensor]:
        return [Tensor(np.zeros((batch_size, self.config.hidden))) for _ in range(self.config.decoder_layers)]

    def _advance(self, emb_proj: Tensor, c: Tensor, state: list[Tensor]) -> list[Tensor]:
        P = self.params
        x0 = ad.add(ad.add(emb_proj, ad.matmul(c, P["dec0.W_c"])), P["dec0.b"])
        h = [gru_cell(x0, state[0], P["dec0.U_zr"], P["dec0.U_n"])]
        for layer in range(1, self.config.decoder_layers):
            p = f"dec{layer}"
            x = ad.add(ad.matmul(h[-1], P[f"{p}.W"]), P[f"{p}.b"])
            h.append(gru_cell(x, state[layer], P[f"{p}.U_zr"], P[f"{p}.U_n"]))
        return h

    def readout(self, h: Tensor, emb: Tensor, c: Tensor, cm: Tensor | None):
        """Shared last hidden layer and the two output channels."""
        P = self.params
        pre = ad.add(ad.add(ad.matmul(h, P["readout.W_h"]), ad.matmul(emb, P["readout.W_e"])),
                     ad.matmul(c, P["readout.W_c"]))
        if self.config.use_table:
            pre = ad.add(pre, ad.matmul(cm, P["readout.W_m"]))
        r = ad.tanh(ad.add(pre, P["readout.b"]))
        char_logits = ad.add(ad.matmul(r, P["out_char.W"]), P["out_char.b"])
        label_logits = None
        if self.config.use_aux:
            label_logits = ad.add(ad.matmul(r, P["out_label.W"]), P["out_label.b"])
        return char_logits, label_logits

    def decode_step(self, prev_ids, state: list[Tensor], memory: Memory, cm_override=None) -> StepOutput:
        """One target character: attend, update the GRU stack, read out.

        ``cm_override`` replaces the attended morphological context with a
        given vector; it exists for equivalence checks.
        """
        P = self.params
        prev_ids = np.asarray(prev_ids, dtype=np.int64).reshape(-1)
        h_prev = state[-1]
        c, alpha = self.attend_source(memory, h_prev)
        cm = beta = None
        if self.config.use_table:
            if cm_override is not None:
                cm = ad.as_tensor(np.broadcast_to(np.asarray(cm_override, dtype=np.float64),
                                                  (len(prev_ids), self.config.morph_dim)).copy())
            else:
                cm, beta = self.attend_morphology(memory, h_prev)
        emb = ad.embedding(P["tgt_embed"], prev_ids)
        h = self._advance(ad.matmul(emb, P["dec0.W_e"]), c, state)
        char_logits, label_logits = self.readout(h[-1], emb, c, cm)
        return StepOutput(h, c, alpha, char_logits, cm, beta, label_logits)

    # --------------------------------------------------------------- loss

    def forward_sequence(self, batch: Batch, lam: float = 1.0, keep_attention: bool = False) -> ForwardResult:
        """Teacher-forced pass over the gold targets; returns the joint loss."""
        if self.config.use_aux and batch.labels_out is None:
            raise ValueError("variant needs morphological labels")
        if batch.labels_out is not None and batch.labels_out.shape != batch.tgt_out.shape:
            raise ValueError("labels and characters differ in length")
        P = self.params
        B, T = batch.tgt_in.shape
        memory = self.encode(batch.src, batch.src_mask)
        emb_all = ad.embedding(P["tgt_embed"], batch.tgt_in)
        emb_proj = ad.matmul(emb_all, P["dec0.W_e"])
        state = self.initial_state(B)
        hs, cs, cms, alphas, betas = [], [], [], [], []
        for t in range(T):
            h_prev = state[-1]
            c, alpha = self.attend_source(memory, h_prev)
            if self.config.use_table:
                cm, beta = self.attend_morphology(memory, h_prev)
                cms.append(cm)
                if keep_attention:
                    betas.append(beta.data)
            if keep_attention:
                alphas.append(alpha.data)
            state = self._advance(emb_proj[:, t], c, state)
            hs.append(state[-1])
            cs.append(c)
        cm_all = ad.stack(cms, axis=1) if cms else None
        char_logits, label_logits = self.readout(ad.stack(hs, axis=1), emb_all, ad.stack(cs, axis=1), cm_all)
        loss, char_nll, label_nll = joint_loss(char_logits, label_logits, batch.tgt_out, batch.labels_out,
                                               lam if self.config.use_aux else 1.0, batch.tgt_mask)
        return ForwardResult(loss, char_nll, label_nll, batch.n_chars, alphas, betas, char_logits, label_logits)


def joint_loss(char_logits: Tensor, label_logits: Tensor | None, chars, labels, lam: float, mask=None):
    """-(lam * sum log P(y_t) + (1 - lam) * sum log P(m_t)) over real positions.

    Returns (loss tensor, translation NLL, annotation NLL); the last two are
    unweighted sums for reporting.
    """
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    chars = np.asarray(chars)
    mask = np.ones(chars.shape) if mask is None else np.asarray(mask, dtype=np.float64)
    char_loss = ad.cross_entropy(char_logits, chars, mask)
    char_nll = float(char_loss.data)
    if label_logits is None:
        return char_loss, char_nll, 0.0
    if labels is None or np.shape(labels) != chars.shape:
        raise ValueError("label sequence must match the character sequence")
    label_loss = ad.cross_entropy(label_logits, labels, mask)
    loss = ad.add(ad.scale(char_loss, lam), ad.scale(label_loss, 1.0 - lam))
    return loss, char_nll, float(label_loss.data)
