"""Transformer students: decoder-only fine-tuning, an encoder-decoder baseline, generation, checkpoints."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import tensor as T
from .corpus import CODE_MARKER, COMMENT_MARKER, PromptRecord
from .tokenizer import SubwordTokenizer, WordVocab


class ModelError(ValueError):
    """Invalid configuration, input, or checkpoint."""


@dataclass
class ModelConfig:
    """Hyperparameters for one student model.

    d/L/h are embedding dimension, layer count, and attention heads; r, e, o
    are learning rate, epochs, and dropout. encoder_decoder models also carry
    the summary-side vocab and length (the code side uses vocab_size and
    context_length).
    """

    kind: str = "decoder_only"
    d: int = 64
    L: int = 2
    h: int = 2
    r: float = 1e-3
    e: int = 3
    o: float = 0.1
    vocab_size: int = 512
    context_length: int = 256
    batch_size: int = 8
    summary_vocab_size: int = 0
    summary_length: int = 0

    def __post_init__(self) -> None:
        if self.kind not in ("decoder_only", "encoder_decoder"):
            raise ModelError(f"unknown model kind {self.kind!r}")
        if self.d % self.h != 0:
            raise ModelError(f"d={self.d} not divisible by h={self.h}")
        if self.L < 1:
            raise ModelError("L must be >= 1")
        if not 0.0 <= self.o < 1.0:
            raise ModelError(f"dropout must be in [0, 1), got {self.o}")
        if self.e < 1:
            raise ModelError("epochs must be >= 1")
        if self.kind == "encoder_decoder" and (self.summary_vocab_size < 5 or self.summary_length < 2):
            raise ModelError("encoder_decoder needs summary_vocab_size and summary_length")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind, "d": self.d, "L": self.L, "h": self.h,
            "r": self.r, "e": self.e, "o": self.o,
            "vocab_size": self.vocab_size, "context_length": self.context_length,
            "batch_size": self.batch_size,
            "summary_vocab_size": self.summary_vocab_size,
            "summary_length": self.summary_length,
        }


# The three published decoder-only settings (parameter sizes assume the
# 50257-token vocabulary) and two desk-scale settings that train from
# scratch on a laptop CPU. Desk learning rates are higher because there is
# no pretrained starting point.
PAPER_SCALE_CONFIGS = {
    "38m": ModelConfig(d=512, L=4, h=4, r=3e-5, e=3, o=0.2, vocab_size=50257, context_length=1024),
    "110m": ModelConfig(d=768, L=10, h=8, r=3e-5, e=3, o=0.2, vocab_size=50257, context_length=1024),
    "350m": ModelConfig(d=1024, L=24, h=16, r=3e-5, e=3, o=0.2, vocab_size=50257, context_length=1024),
}
DESK_CONFIGS = {
    "desk-small": ModelConfig(
        d=64, L=2, h=2, r=2e-3, e=10, o=0.0, vocab_size=512, context_length=256, batch_size=16
    ),
    "desk-medium": ModelConfig(
        d=128, L=4, h=4, r=1e-3, e=10, o=0.0, vocab_size=512, context_length=256, batch_size=16
    ),
}
ENCDEC_DEFAULT = ModelConfig(
    kind="encoder_decoder", d=100, L=2, h=4, r=1e-3, e=10, o=0.1,
    vocab_size=70_000, context_length=50, summary_vocab_size=10_908,
    summary_length=13, batch_size=50,
)


@dataclass
class DecodeConfig:
    strategy: str = "greedy"
    max_new_tokens: int = 64
    eos_id: int = -1

    def __post_init__(self) -> None:
        if self.strategy != "greedy":
            raise ModelError(f"unsupported decode strategy {self.strategy!r}")
        if self.max_new_tokens < 1:
            raise ModelError("max_new_tokens must be >= 1")


def decoder_param_count(config: ModelConfig) -> int:
    """Closed-form count: tied embeddings, learned positions, pre-LN blocks."""
    d, L = config.d, config.L
    per_layer = 12 * d * d + 13 * d  # qkv + proj + 4x mlp pair + two layer norms
    return config.vocab_size * d + config.context_length * d + L * per_layer + 2 * d


def encdec_param_count(config: ModelConfig) -> int:
    d, L = config.d, config.L
    enc_layer = 12 * d * d + 13 * d
    dec_layer = 16 * d * d + 19 * d  # extra cross-attention + its layer norm
    return (
        config.vocab_size * d + config.context_length * d
        + config.summary_vocab_size * d + config.summary_length * d
        + L * enc_layer + L * dec_layer
        + 2 * d + 2 * d  # final layer norms for both stacks
        + d * config.summary_vocab_size  # untied output head
    )


def _block_param_shapes(prefix: str, d: int) -> list[tuple[str, tuple[int, ...]]]:
    return [
        (f"{prefix}.ln1.g", (d,)), (f"{prefix}.ln1.b", (d,)),
        (f"{prefix}.attn.wq", (d, d)), (f"{prefix}.attn.bq", (d,)),
        (f"{prefix}.attn.wk", (d, d)), (f"{prefix}.attn.bk", (d,)),
        (f"{prefix}.attn.wv", (d, d)), (f"{prefix}.attn.bv", (d,)),
        (f"{prefix}.attn.wo", (d, d)), (f"{prefix}.attn.bo", (d,)),
        (f"{prefix}.ln2.g", (d,)), (f"{prefix}.ln2.b", (d,)),
        (f"{prefix}.mlp.w1", (d, 4 * d)), (f"{prefix}.mlp.b1", (4 * d,)),
        (f"{prefix}.mlp.w2", (4 * d, d)), (f"{prefix}.mlp.b2", (d,)),
    ]


def _cross_param_shapes(prefix: str, d: int) -> list[tuple[str, tuple[int, ...]]]:
    return [
        (f"{prefix}.lnx.g", (d,)), (f"{prefix}.lnx.b", (d,)),
        (f"{prefix}.xattn.wq", (d, d)), (f"{prefix}.xattn.bq", (d,)),
        (f"{prefix}.xattn.wk", (d, d)), (f"{prefix}.xattn.bk", (d,)),
        (f"{prefix}.xattn.wv", (d, d)), (f"{prefix}.xattn.bv", (d,)),
        (f"{prefix}.xattn.wo", (d, d)), (f"{prefix}.xattn.bo", (d,)),
    ]


def _param_shapes(config: ModelConfig) -> list[tuple[str, tuple[int, ...]]]:
    d = config.d
    shapes: list[tuple[str, tuple[int, ...]]] = []
    if config.kind == "decoder_only":
        shapes.append(("tok_emb", (config.vocab_size, d)))
        shapes.append(("pos_emb", (config.context_length, d)))
        for i in range(config.L):
            shapes.extend(_block_param_shapes(f"dec{i}", d))
        shapes.extend([("lnf.g", (d,)), ("lnf.b", (d,))])
    else:
        shapes.append(("enc_tok_emb", (config.vocab_size, d)))
        shapes.append(("enc_pos_emb", (config.context_length, d)))
        for i in range(config.L):
            shapes.extend(_block_param_shapes(f"enc{i}", d))
        shapes.extend([("enc_lnf.g", (d,)), ("enc_lnf.b", (d,))])
        shapes.append(("dec_tok_emb", (config.summary_vocab_size, d)))
        shapes.append(("dec_pos_emb", (config.summary_length, d)))
        for i in range(config.L):
            shapes.extend(_block_param_shapes(f"dec{i}", d))
            shapes.extend(_cross_param_shapes(f"dec{i}", d))
        shapes.extend([("dec_lnf.g", (d,)), ("dec_lnf.b", (d,))])
        shapes.append(("head", (d, config.summary_vocab_size)))
    return shapes


class StudentModel:
    """A trainable student: config plus named parameter tensors."""

    def __init__(self, config: ModelConfig, params: dict[str, T.Tensor]):
        self.config = config
        self.params = params

    @classmethod
    def init(cls, config: ModelConfig, seed: int) -> "StudentModel":
        rng = np.random.default_rng(seed)
        params: dict[str, T.Tensor] = {}
        for name, shape in _param_shapes(config):
            leaf = name.rsplit(".", 1)[-1]
            if leaf == "g":  # layer-norm gain
                arr = np.ones(shape, dtype=np.float32)
            elif leaf.startswith("b") or leaf == "b":  # biases and ln shifts
                arr = np.zeros(shape, dtype=np.float32)
            else:
                arr = rng.normal(0.0, 0.02, size=shape).astype(np.float32)
            params[name] = T.Tensor(arr, requires_grad=True)
        model = cls(config, params)
        actual = sum(p.array.size for p in params.values())
        expected = model.param_count()
        if actual != expected:
            raise ModelError(f"parameter count mismatch: built {actual}, formula {expected}")
        return model

    def param_count(self) -> int:
        if self.config.kind == "decoder_only":
            return decoder_param_count(self.config)
        return encdec_param_count(self.config)

    def parameters(self) -> list[T.Tensor]:
        return list(self.params.values())

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()


def init_model(config: ModelConfig, seed: int) -> StudentModel:
    """Deterministic initialization: weights ~ normal(0, 0.02), zero biases."""
    return StudentModel.init(config, seed)


def _attention(params, prefix, x, h, mask, drop, B, Tq, d):
    """Multi-head attention over x (self-attention when kv is x)."""
    return _attention_kv(params, prefix, x, x, h, mask, drop, B, Tq, x.shape[1], d)


def _attention_kv(params, prefix, xq, xkv, h, mask, drop, B, Tq, Tk, d):
    dh = d // h
    q = T.add(T.matmul(xq, params[f"{prefix}.wq"]), params[f"{prefix}.bq"])
    k = T.add(T.matmul(xkv, params[f"{prefix}.wk"]), params[f"{prefix}.bk"])
    v = T.add(T.matmul(xkv, params[f"{prefix}.wv"]), params[f"{prefix}.bv"])
    q = T.transpose(T.reshape(q, (B, Tq, h, dh)), (0, 2, 1, 3))
    k = T.transpose(T.reshape(k, (B, Tk, h, dh)), (0, 2, 3, 1))
    v = T.transpose(T.reshape(v, (B, Tk, h, dh)), (0, 2, 1, 3))
    scores = T.mul(T.matmul(q, k), np.float32(1.0 / math.sqrt(dh)))
    if mask is not None:
        scores = T.add(scores, mask)
    att = T.softmax_rows(scores)
    att = drop(att)
    out = T.matmul(att, v)
    out = T.reshape(T.transpose(out, (0, 2, 1, 3)), (B, Tq, d))
    out = T.add(T.matmul(out, params[f"{prefix}.wo"]), params[f"{prefix}.bo"])
    return drop(out)


def _causal_mask(t: int) -> np.ndarray:
    mask = np.zeros((t, t), dtype=np.float32)
    mask[np.triu_indices(t, k=1)] = -np.inf
    return mask


def _forward_decoder_batch(model: StudentModel, ids: np.ndarray, training: bool, rng) -> T.Tensor:
    cfg = model.config
    p = model.params
    B, t = ids.shape
    if t > cfg.context_length:
        raise ModelError(f"sequence length {t} exceeds context length {cfg.context_length}")

    def drop(x):
        return T.dropout(x, cfg.o, rng, training)

    x = T.add(T.embedding(p["tok_emb"], ids), T.embedding(p["pos_emb"], np.arange(t)))
    x = drop(x)
    mask = _causal_mask(t)
    for i in range(cfg.L):
        pre = f"dec{i}"
        a = T.layer_norm(x, p[f"{pre}.ln1.g"], p[f"{pre}.ln1.b"])
        x = T.add(x, _attention(p, f"{pre}.attn", a, cfg.h, mask, drop, B, t, cfg.d))
        m = T.layer_norm(x, p[f"{pre}.ln2.g"], p[f"{pre}.ln2.b"])
        m = T.matmul(T.gelu(T.add(T.matmul(m, p[f"{pre}.mlp.w1"]), p[f"{pre}.mlp.b1"])), p[f"{pre}.mlp.w2"])
        m = T.add(m, p[f"{pre}.mlp.b2"])
        x = T.add(x, drop(m))
    x = T.layer_norm(x, p["lnf.g"], p["lnf.b"])
    # tied output head: logits = x @ tok_emb^T
    return T.matmul(x, T.transpose(p["tok_emb"], (1, 0)))


def forward_logits(model: StudentModel, ids: Sequence[int]) -> T.Tensor:
    """Causal logits (T x V) for one token sequence, dropout off."""
    if model.config.kind != "decoder_only":
        raise ModelError("forward_logits is for decoder_only models")
    if len(ids) < 1:
        raise ModelError("ids must be nonempty")
    arr = np.asarray(ids, dtype=np.int64).reshape(1, -1)
    with T.no_grad():
        out = _forward_decoder_batch(model, arr, training=False, rng=None)
    return T.Tensor(out.array[0])


def _forward_encdec_batch(model, code_ids, dec_in_ids, training, rng):
    cfg = model.config
    p = model.params
    B, tc = code_ids.shape
    _, ts = dec_in_ids.shape

    def drop(x):
        return T.dropout(x, cfg.o, rng, training)

    # keys at pad positions are masked out of every attention over the code
    key_pad = np.where(code_ids == WordVocab.PAD, np.float32(-np.inf), np.float32(0.0))
    key_pad = key_pad.reshape(B, 1, 1, tc)

    x = T.add(T.embedding(p["enc_tok_emb"], code_ids), T.embedding(p["enc_pos_emb"], np.arange(tc)))
    x = drop(x)
    for i in range(cfg.L):
        pre = f"enc{i}"
        a = T.layer_norm(x, p[f"{pre}.ln1.g"], p[f"{pre}.ln1.b"])
        x = T.add(x, _attention(p, f"{pre}.attn", a, cfg.h, key_pad, drop, B, tc, cfg.d))
        m = T.layer_norm(x, p[f"{pre}.ln2.g"], p[f"{pre}.ln2.b"])
        m = T.matmul(T.gelu(T.add(T.matmul(m, p[f"{pre}.mlp.w1"]), p[f"{pre}.mlp.b1"])), p[f"{pre}.mlp.w2"])
        m = T.add(m, p[f"{pre}.mlp.b2"])
        x = T.add(x, drop(m))
    enc_out = T.layer_norm(x, p["enc_lnf.g"], p["enc_lnf.b"])

    y = T.add(T.embedding(p["dec_tok_emb"], dec_in_ids), T.embedding(p["dec_pos_emb"], np.arange(ts)))
    y = drop(y)
    causal = _causal_mask(ts)
    for i in range(cfg.L):
        pre = f"dec{i}"
        a = T.layer_norm(y, p[f"{pre}.ln1.g"], p[f"{pre}.ln1.b"])
        y = T.add(y, _attention(p, f"{pre}.attn", a, cfg.h, causal, drop, B, ts, cfg.d))
        c = T.layer_norm(y, p[f"{pre}.lnx.g"], p[f"{pre}.lnx.b"])
        y = T.add(y, _attention_kv(p, f"{pre}.xattn", c, enc_out, cfg.h, key_pad, drop, B, ts, tc, cfg.d))
        m = T.layer_norm(y, p[f"{pre}.ln2.g"], p[f"{pre}.ln2.b"])
        m = T.matmul(T.gelu(T.add(T.matmul(m, p[f"{pre}.mlp.w1"]), p[f"{pre}.mlp.b1"])), p[f"{pre}.mlp.w2"])
        m = T.add(m, p[f"{pre}.mlp.b2"])
        y = T.add(y, drop(m))
    y = T.layer_norm(y, p["dec_lnf.g"], p["dec_lnf.b"])
    return T.matmul(y, p["head"])


def forward_encdec_logits(model: StudentModel, code_ids: Sequence[int], dec_in_ids: Sequence[int]) -> T.Tensor:
    """Decoder logits (c x summary vocab) for one code/decoder-input pair."""
    if model.config.kind != "encoder_decoder":
        raise ModelError("forward_encdec_logits is for encoder_decoder models")
    ci = np.asarray(code_ids, dtype=np.int64).reshape(1, -1)
    di = np.asarray(dec_in_ids, dtype=np.int64).reshape(1, -1)
    with T.no_grad():
        out = _forward_encdec_batch(model, ci, di, training=False, rng=None)
    return T.Tensor(out.array[0])


# ---------------------------------------------------------------------------
# Record tokenization for decoder-only training and generation.
#
# Records are encoded segment-wise (marker, code, bridge, summary) so the
# code span can be left-truncated without re-tokenizing and so the
# generation prompt is a strict prefix of the training encoding. The BPE
# segmentation never merges across the marker boundaries, which makes the
# segment-wise encoding equal to encoding the whole record text.
# ---------------------------------------------------------------------------


def _marker_ids(tok: SubwordTokenizer) -> tuple[list[int], list[int]]:
    return tok.encode(CODE_MARKER), tok.encode("\n" + COMMENT_MARKER)


def encode_record(tok: SubwordTokenizer, code: str, summary: str, context_length: int) -> tuple[list[int], int]:
    """Token ids for one training record plus the prompt prefix length.

    Overlong records are truncated from the left of the code, never the
    summary.
    """
    head, bridge = _marker_ids(tok)
    summary_ids = tok.encode(summary) + [tok.eos_id]
    budget = context_length - len(head) - len(bridge) - len(summary_ids)
    if budget < 1:
        raise ModelError("record does not fit the context even with empty code")
    code_ids = tok.encode(code)
    if len(code_ids) > budget:
        code_ids = code_ids[-budget:]
    ids = head + code_ids + bridge + summary_ids
    return ids, len(head) + len(code_ids) + len(bridge)


def encode_prompt(tok: SubwordTokenizer, code: str, context_length: int, max_new_tokens: int) -> list[int]:
    """Generation prompt ids: marker + (left-truncated) code + comment bridge."""
    head, bridge = _marker_ids(tok)
    budget = context_length - len(head) - len(bridge) - max_new_tokens
    if budget < 1:
        raise ModelError("prompt exceeds context length after truncation policy")
    code_ids = tok.encode(code)
    if len(code_ids) > budget:
        code_ids = code_ids[-budget:]
    return head + code_ids + bridge


@dataclass
class TrainLog:
    epoch_losses: list[float] = field(default_factory=list)
    grad_clip_norm: float = 1.0
    clipped_batches: int = 0
    batches: int = 0


def train(
    model: StudentModel,
    records: Sequence[PromptRecord],
    tok: SubwordTokenizer,
    config: ModelConfig | None = None,
    seed: int = 0,
    grad_clip_norm: float = 1.0,
) -> TrainLog:
    """Autoregressive fine-tuning over all token positions (code and summary).

    Runs config.e epochs at learning rate config.r with dropout config.o;
    returns the per-epoch mean loss curve. Aborts on non-finite loss.
    """
    if model.config.kind != "decoder_only":
        raise ModelError("train() handles decoder_only models; see train_encdec")
    cfg = config or model.config
    if not records:
        raise ModelError("empty dataset")
    encoded = [encode_record(tok, r.code, r.summary, cfg.context_length)[0] for r in records]
    rng = np.random.default_rng(seed)
    params = model.parameters()
    state = T.AdamState(params)
    log = TrainLog(grad_clip_norm=grad_clip_norm)

    for epoch in range(cfg.e):
        order = rng.permutation(len(encoded))
        total_nll = 0.0
        total_tokens = 0
        for start in range(0, len(order), cfg.batch_size):
            batch = [encoded[i] for i in order[start : start + cfg.batch_size]]
            t_max = max(len(ids) for ids in batch)
            B = len(batch)
            inp = np.full((B, t_max - 1), tok.pad_id, dtype=np.int64)
            tgt = np.full((B, t_max - 1), 0, dtype=np.int64)
            msk = np.zeros((B, t_max - 1), dtype=bool)
            for bi, ids in enumerate(batch):
                n = len(ids)
                inp[bi, : n - 1] = ids[:-1]
                tgt[bi, : n - 1] = ids[1:]
                msk[bi, : n - 1] = True
            logits = _forward_decoder_batch(model, inp, training=True, rng=rng)
            flat = T.reshape(logits, (B * (t_max - 1), cfg.vocab_size))
            loss = T.cross_entropy_next_token(flat, tgt.reshape(-1), msk.reshape(-1))
            value = loss.item()
            if not math.isfinite(value):
                raise T.NonFiniteError(
                    f"non-finite loss at epoch {epoch + 1}, batch {start // cfg.batch_size}"
                )
            model.zero_grad()
            T.backward(loss)
            grads = [p.grad for p in params]
            norm = T.clip_global_norm(grads, grad_clip_norm)
            if norm > grad_clip_norm:
                log.clipped_batches += 1
            T.adam_step(params, grads, state, lr=cfg.r)
            n_tok = int(msk.sum())
            total_nll += value * n_tok
            total_tokens += n_tok
            log.batches += 1
        log.epoch_losses.append(total_nll / total_tokens)
    return log


def generate_summary(model: StudentModel, code: str, tok: SubwordTokenizer, dc: DecodeConfig) -> str:
    """Greedy decode of the summary for one method; stops at end-of-sequence."""
    if not code:
        raise ModelError("code must be nonempty")
    eos = dc.eos_id if dc.eos_id >= 0 else tok.eos_id
    ids = encode_prompt(tok, code, model.config.context_length, dc.max_new_tokens)
    out: list[int] = []
    with T.no_grad():
        for _ in range(dc.max_new_tokens):
            arr = np.asarray(ids + out, dtype=np.int64).reshape(1, -1)
            logits = _forward_decoder_batch(model, arr, training=False, rng=None)
            nxt = int(np.argmax(logits.array[0, -1]))
            if nxt == eos:
                break
            out.append(nxt)
            if len(ids) + len(out) >= model.config.context_length:
                break
    return tok.decode(out).strip()


def train_encdec(
    model: StudentModel,
    pairs: Sequence[tuple[str, str]],
    code_vocab: WordVocab,
    sum_vocab: WordVocab,
    config: ModelConfig | None = None,
    seed: int = 0,
    val_fraction: float = 0.1,
    grad_clip_norm: float = 1.0,
) -> TrainLog:
    """Teacher-forced training of the encoder-decoder baseline.

    Trains up to config.e epochs and keeps the parameters from the epoch with
    the best validation loss.
    """
    if model.config.kind != "encoder_decoder":
        raise ModelError("train_encdec() handles encoder_decoder models")
    cfg = config or model.config
    if not pairs:
        raise ModelError("empty dataset")
    rng = np.random.default_rng(seed)

    code_mat = np.asarray([code_vocab.encode(c) for c, _ in pairs], dtype=np.int64)
    tgt_mat = np.asarray([sum_vocab.encode(s) for _, s in pairs], dtype=np.int64)
    dec_in = np.full_like(tgt_mat, WordVocab.BOS)
    dec_in[:, 1:] = tgt_mat[:, :-1]

    n_val = int(len(pairs) * val_fraction) if len(pairs) > 1 else 0
    order = rng.permutation(len(pairs))
    val_idx, train_idx = order[:n_val], order[n_val:]
    if len(train_idx) == 0 or len(val_idx) == 0:  # degenerate split: validate on train
        train_idx = order
        val_idx = order

    params = model.parameters()
    state = T.AdamState(params)
    log = TrainLog(grad_clip_norm=grad_clip_norm)
    best_val = math.inf
    best_snapshot: list[np.ndarray] | None = None

    def batch_loss(idx: np.ndarray, training: bool) -> float:
        total, count = 0.0, 0
        for start in range(0, len(idx), cfg.batch_size):
            sel = idx[start : start + cfg.batch_size]
            B = len(sel)
            logits = _forward_encdec_batch(model, code_mat[sel], dec_in[sel], training, rng)
            flat = T.reshape(logits, (B * cfg.summary_length, cfg.summary_vocab_size))
            tgt = tgt_mat[sel].reshape(-1)
            msk = tgt != WordVocab.PAD
            loss = T.cross_entropy_next_token(flat, tgt, msk)
            value = loss.item()
            if not math.isfinite(value):
                raise T.NonFiniteError("non-finite loss in encoder-decoder training")
            if training:
                model.zero_grad()
                T.backward(loss)
                grads = [p.grad for p in params]
                T.clip_global_norm(grads, grad_clip_norm)
                T.adam_step(params, grads, state, lr=cfg.r)
                log.batches += 1
            n = int(msk.sum())
            total += value * n
            count += n
        return total / max(count, 1)

    for _ in range(cfg.e):
        train_loss = batch_loss(rng.permutation(train_idx), training=True)
        log.epoch_losses.append(train_loss)
        with T.no_grad():
            val_loss = batch_loss(val_idx, training=False)
        if val_loss < best_val:
            best_val = val_loss
            best_snapshot = [p.array.copy() for p in params]
    if best_snapshot is not None:
        for p, arr in zip(params, best_snapshot):
            p.array = arr
    return log


def generate_encdec_summary(model: StudentModel, code: str, code_vocab: WordVocab, sum_vocab: WordVocab) -> str:
    """Greedy decode from the encoder-decoder baseline."""
    cfg = model.config
    code_ids = np.asarray(code_vocab.encode(code), dtype=np.int64).reshape(1, -1)
    out: list[int] = []
    with T.no_grad():
        for _ in range(cfg.summary_length - 1):
            dec = [WordVocab.BOS] + out
            dec = dec + [WordVocab.PAD] * (cfg.summary_length - len(dec))
            logits = _forward_encdec_batch(
                model, code_ids, np.asarray(dec, dtype=np.int64).reshape(1, -1), False, None
            )
            # ids beyond the learned vocabulary are unused head rows
            nxt = int(np.argmax(logits.array[0, len(out), : len(sum_vocab)]))
            if nxt in (WordVocab.EOS, WordVocab.PAD):
                break
            out.append(nxt)
    return sum_vocab.decode(out)


CHECKPOINT_VERSION = 1


def save_checkpoint(model: StudentModel, path: str | Path) -> None:
    """UTF-8 header line (version, config, tensor manifest) then raw little-endian float32."""
    path = Path(path)
    manifest = [[name, list(p.array.shape)] for name, p in model.params.items()]
    header = {
        "kind": "student_checkpoint",
        "version": CHECKPOINT_VERSION,
        "config": model.config.to_dict(),
        "manifest": manifest,
    }
    with path.open("wb") as fh:
        fh.write((json.dumps(header, ensure_ascii=False) + "\n").encode("utf-8"))
        for p in model.params.values():
            fh.write(p.array.astype("<f4", copy=False).tobytes(order="C"))


def load_checkpoint(path: str | Path) -> StudentModel:
    path = Path(path)
    with path.open("rb") as fh:
        header_line = fh.readline()
        try:
            header = json.loads(header_line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ModelError(f"{path}: malformed checkpoint header") from exc
        if header.get("kind") != "student_checkpoint":
            raise ModelError(f"{path}: not a student checkpoint")
        version = header.get("version")
        if version != CHECKPOINT_VERSION:
            raise ModelError(
                f"{path}: checkpoint version {version} does not match supported version {CHECKPOINT_VERSION}"
            )
        config = ModelConfig(**header["config"])
        expected_shapes = dict((name, tuple(shape)) for name, shape in header["manifest"])
        declared = _param_shapes(config)
        if {n for n, _ in declared} != set(expected_shapes):
            raise ModelError(f"{path}: manifest does not match the config's parameter set")
        for name, shape in declared:
            if expected_shapes[name] != shape:
                raise ModelError(
                    f"{path}: tensor {name} has shape {expected_shapes[name]}, config implies {shape}"
                )
        blob = fh.read()
    total = sum(int(np.prod(shape)) for _, shape in header["manifest"])
    if len(blob) < total * 4:
        raise ModelError(f"{path}: truncated checkpoint ({len(blob)} bytes, expected {total * 4})")
    if len(blob) > total * 4:
        raise ModelError(f"{path}: checkpoint has {len(blob) - total * 4} trailing bytes")
    params: dict[str, T.Tensor] = {}
    offset = 0
    for name, shape in header["manifest"]:
        n = int(np.prod(shape))
        arr = np.frombuffer(blob, dtype="<f4", count=n, offset=offset).reshape(shape)
        params[name] = T.Tensor(arr.copy(), requires_grad=True)
        offset += n * 4
    return StudentModel(config, params)
