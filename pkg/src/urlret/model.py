"""Encoder-decoder transformer with teacher-forced cross-entropy training.

Built directly on torch tensors/autograd (exact reverse-mode gradients;
verified against finite differences in the test suite). Pre-LN blocks,
ReLU feed-forward, learned positional embeddings, input embeddings shared
between encoder and decoder and (by default) tied to the output
projection. All math runs in float32; probe builds may switch the module
to float64 for finite-difference checks.
"""

from __future__ import annotations

import hashlib
import io
import json
import math
import struct
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .data import TrainingPair
from .tokenizer import PAD, BOS

SIZE_LADDER = {
    "tiny": dict(d_model=64, n_heads=4, n_enc_layers=2, n_dec_layers=2, d_ff=256),
    "small": dict(d_model=128, n_heads=4, n_enc_layers=4, n_dec_layers=4, d_ff=512),
    "medium": dict(d_model=256, n_heads=8, n_enc_layers=6, n_dec_layers=6, d_ff=1024),
}

CHECKPOINT_MAGIC = b"URLRET01"


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    d_model: int = 64
    n_heads: int = 4
    n_enc_layers: int = 2
    n_dec_layers: int = 2
    d_ff: int = 256
    max_source_len: int = 80
    max_target_len: int = 80
    dropout: float = 0.0
    param_init_scale: float = 0.02
    tie_output: bool = True
    size_tag: str = "tiny"

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ModelError("d_model must be divisible by n_heads")
        if self.vocab_size < 5:
            raise ModelError("vocab_size too small")
        if not 0 <= self.dropout < 1:
            raise ModelError("dropout must be in [0, 1)")
        if self.param_init_scale <= 0:
            raise ModelError("param_init_scale must be positive")

    @classmethod
    def from_tag(cls, size_tag: str, vocab_size: int, **overrides) -> "ModelConfig":
        if size_tag not in SIZE_LADDER:
            raise ModelError(f"unknown size tag {size_tag!r}")
        return cls(vocab_size=vocab_size, size_tag=size_tag,
                   **SIZE_LADDER[size_tag], **overrides)


@dataclass
class TrainConfig:
    lr_peak: float = 3e-4
    warmup_steps: int = 200
    max_steps: int = 2000
    batch_size: int = 32
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    grad_clip: float | None = 1.0
    seed: int = 0
    eval_every: int = 100

    def __post_init__(self):
        if self.warmup_steps > self.max_steps:
            raise ModelError("warmup_steps must be <= max_steps")
        if self.batch_size < 1:
            raise ModelError("batch_size must be >= 1")

    def lr(self, step: int) -> float:
        """Linear warmup to lr_peak, constant afterwards."""
        if self.warmup_steps == 0:
            return self.lr_peak
        return self.lr_peak * min(1.0, step / self.warmup_steps)


@dataclass
class TrainStats:
    step: int
    loss: float
    lr: float
    ppl: float | None = None


class _MultiHeadAttention(nn.Module):
    def __init__(self, d_model: int, n_heads: int, dropout: float):
        super().__init__()
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        self.wq = nn.Linear(d_model, d_model)
        self.wk = nn.Linear(d_model, d_model)
        self.wv = nn.Linear(d_model, d_model)
        self.wo = nn.Linear(d_model, d_model)
        self.drop = nn.Dropout(dropout)

    def forward(self, q, kv, mask):
        # mask: (B, 1, Tq, Tk) boolean, True = attend
        B, Tq, _ = q.shape
        Tk = kv.shape[1]
        qh = self.wq(q).view(B, Tq, self.n_heads, self.d_head).transpose(1, 2)
        kh = self.wk(kv).view(B, Tk, self.n_heads, self.d_head).transpose(1, 2)
        vh = self.wv(kv).view(B, Tk, self.n_heads, self.d_head).transpose(1, 2)
        scores = qh @ kh.transpose(-1, -2) / math.sqrt(self.d_head)
        scores = scores.masked_fill(~mask, float("-inf"))
        attn = self.drop(torch.softmax(scores, dim=-1))
        out = (attn @ vh).transpose(1, 2).reshape(B, Tq, -1)
        return self.wo(out)


class _FeedForward(nn.Module):
    def __init__(self, d_model: int, d_ff: int, dropout: float):
        super().__init__()
        self.fc1 = nn.Linear(d_model, d_ff)
        self.fc2 = nn.Linear(d_ff, d_model)
        self.drop = nn.Dropout(dropout)

    def forward(self, x):
        return self.fc2(self.drop(F.relu(self.fc1(x))))


class _EncoderLayer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.ln1 = nn.LayerNorm(cfg.d_model)
        self.attn = _MultiHeadAttention(cfg.d_model, cfg.n_heads, cfg.dropout)
        self.ln2 = nn.LayerNorm(cfg.d_model)
        self.ff = _FeedForward(cfg.d_model, cfg.d_ff, cfg.dropout)
        self.drop = nn.Dropout(cfg.dropout)

    def forward(self, x, mask):
        h = self.ln1(x)
        x = x + self.drop(self.attn(h, h, mask))
        x = x + self.drop(self.ff(self.ln2(x)))
        return x


class _DecoderLayer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.ln1 = nn.LayerNorm(cfg.d_model)
        self.self_attn = _MultiHeadAttention(cfg.d_model, cfg.n_heads, cfg.dropout)
        self.ln2 = nn.LayerNorm(cfg.d_model)
        self.cross_attn = _MultiHeadAttention(cfg.d_model, cfg.n_heads, cfg.dropout)
        self.ln3 = nn.LayerNorm(cfg.d_model)
        self.ff = _FeedForward(cfg.d_model, cfg.d_ff, cfg.dropout)
        self.drop = nn.Dropout(cfg.dropout)

    def forward(self, x, memory, self_mask, cross_mask):
        h = self.ln1(x)
        x = x + self.drop(self.self_attn(h, h, self_mask))
        x = x + self.drop(self.cross_attn(self.ln2(x), memory, cross_mask))
        x = x + self.drop(self.ff(self.ln3(x)))
        return x


class Seq2SeqModel(nn.Module):
    """The generation model: encodes a source, decodes a target prefix."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        c = config
        self.tok_emb = nn.Embedding(c.vocab_size, c.d_model)
        self.src_pos = nn.Embedding(c.max_source_len, c.d_model)
        self.tgt_pos = nn.Embedding(c.max_target_len, c.d_model)
        self.enc_layers = nn.ModuleList(_EncoderLayer(c) for _ in range(c.n_enc_layers))
        self.dec_layers = nn.ModuleList(_DecoderLayer(c) for _ in range(c.n_dec_layers))
        self.enc_ln = nn.LayerNorm(c.d_model)
        self.dec_ln = nn.LayerNorm(c.d_model)
        if c.tie_output:
            self.out_proj = None
        else:
            self.out_proj = nn.Linear(c.d_model, c.vocab_size, bias=False)
        self.drop = nn.Dropout(c.dropout)
        self.step = 0

    def encode(self, source: torch.Tensor, source_pad: torch.Tensor) -> torch.Tensor:
        T = source.shape[1]
        if T > self.config.max_source_len:
            raise ModelError(f"source length {T} exceeds {self.config.max_source_len}")
        pos = torch.arange(T, device=source.device)
        x = self.drop(self.tok_emb(source) + self.src_pos(pos))
        mask = source_pad[:, None, None, :]  # (B,1,1,Ts)
        for layer in self.enc_layers:
            x = layer(x, mask)
        return self.enc_ln(x)

    def decode(self, memory, source_pad, target_prefix: torch.Tensor) -> torch.Tensor:
        T = target_prefix.shape[1]
        if T > self.config.max_target_len:
            raise ModelError(f"target length {T} exceeds {self.config.max_target_len}")
        pos = torch.arange(T, device=target_prefix.device)
        x = self.drop(self.tok_emb(target_prefix) + self.tgt_pos(pos))
        causal = torch.tril(torch.ones(T, T, dtype=torch.bool, device=x.device))
        self_mask = causal[None, None, :, :]
        cross_mask = source_pad[:, None, None, :]
        for layer in self.dec_layers:
            x = layer(x, memory, self_mask, cross_mask)
        x = self.dec_ln(x)
        if self.out_proj is not None:
            return self.out_proj(x)
        return x @ self.tok_emb.weight.T

    def forward(self, source: torch.Tensor, target_prefix: torch.Tensor) -> torch.Tensor:
        """Logits of shape (B, target_len, vocab); position t sees only
        source and target_prefix[:t+1]."""
        source_pad = source != PAD
        memory = self.encode(source, source_pad)
        return self.decode(memory, source_pad, target_prefix)

    def param_count(self) -> int:
        return sum(p.numel() for p in self.parameters())


def init_model(cfg: ModelConfig, seed: int) -> Seq2SeqModel:
    """Seeded deterministic init: scaled normal weights, zero biases."""
    gen = torch.Generator().manual_seed(seed)
    model = Seq2SeqModel(cfg)
    with torch.no_grad():
        for name, p in sorted(model.named_parameters()):
            if p.dim() >= 2:
                p.copy_(torch.randn(p.shape, generator=gen) * cfg.param_init_scale)
            else:
                p.zero_()
        for m in model.modules():
            if isinstance(m, nn.LayerNorm):
                m.weight.fill_(1.0)
    return model


def _pad_batch(seqs: list[tuple[int, ...]], length: int | None = None) -> torch.Tensor:
    n = length if length is not None else max(len(s) for s in seqs)
    out = torch.full((len(seqs), n), PAD, dtype=torch.long)
    for i, s in enumerate(seqs):
        out[i, : len(s)] = torch.tensor(s, dtype=torch.long)
    return out


def batch_tensors(pairs: list[TrainingPair]) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """(source, decoder_input, decoder_target) with BOS-shifted inputs."""
    source = _pad_batch([p.source.ids for p in pairs])
    targets = [p.target.ids for p in pairs]
    dec_in = _pad_batch([(BOS,) + t[:-1] for t in targets])
    dec_out = _pad_batch(targets)
    return source, dec_in, dec_out


def cross_entropy(logits: torch.Tensor, target: torch.Tensor) -> tuple[torch.Tensor, int]:
    """Summed NLL over non-PAD target positions, plus the token count.

    exp(-result) over one pair equals the chained product of per-step
    next-token probabilities.
    """
    mask = target != PAD
    logp = F.log_softmax(logits, dim=-1)
    nll = -logp.gather(-1, target.unsqueeze(-1)).squeeze(-1)
    return (nll * mask).sum(), int(mask.sum().item())


class Trainer:
    """Adam with linear warmup over a fixed batch order; deterministic."""

    def __init__(self, model: Seq2SeqModel, tcfg: TrainConfig):
        self.model = model
        self.tcfg = tcfg
        self.opt = torch.optim.Adam(
            model.parameters(), lr=tcfg.lr(model.step),
            betas=(tcfg.beta1, tcfg.beta2), eps=tcfg.eps,
        )
        self.rng = torch.Generator().manual_seed(tcfg.seed)

    def sample_batch(self, pairs: list[TrainingPair]) -> list[TrainingPair]:
        n = min(self.tcfg.batch_size, len(pairs))
        idx = torch.randperm(len(pairs), generator=self.rng)[:n]
        return [pairs[i] for i in idx.tolist()]

    def step(self, batch: list[TrainingPair]) -> TrainStats:
        tcfg, model = self.tcfg, self.model
        if model.step >= tcfg.max_steps:
            raise ModelError("max_steps reached")
        lr = tcfg.lr(model.step)
        for group in self.opt.param_groups:
            group["lr"] = lr
        source, dec_in, dec_out = batch_tensors(batch)
        model.train()
        logits = model(source, dec_in)
        loss_sum, n_tok = cross_entropy(logits, dec_out)
        loss = loss_sum / max(n_tok, 1)
        if not torch.isfinite(loss):
            raise ModelError(f"non-finite loss at step {model.step}: {loss.item()}")
        self.opt.zero_grad()
        loss.backward()
        if tcfg.grad_clip is not None:
            torch.nn.utils.clip_grad_norm_(model.parameters(), tcfg.grad_clip)
        self.opt.step()
        model.step += 1
        return TrainStats(step=model.step, loss=float(loss.item()), lr=lr)


def train(
    model: Seq2SeqModel,
    pairs: list[TrainingPair],
    tcfg: TrainConfig,
    eval_pairs: list[TrainingPair] | None = None,
    stats_path: str | Path | None = None,
    on_eval=None,
) -> list[TrainStats]:
    """Run to tcfg.max_steps, evaluating perplexity every eval_every steps."""
    trainer = Trainer(model, tcfg)
    stats: list[TrainStats] = []
    fh = open(stats_path, "a", encoding="utf-8") if stats_path else None
    try:
        if fh is not None and fh.tell() == 0:
            fh.write("step,loss,lr,ppl\n")
        while model.step < tcfg.max_steps:
            entry = trainer.step(trainer.sample_batch(pairs))
            if tcfg.eval_every and entry.step % tcfg.eval_every == 0:
                entry.ppl = perplexity(model, eval_pairs or pairs)
                if on_eval is not None:
                    on_eval(entry)
            stats.append(entry)
            if fh is not None:
                ppl = "" if entry.ppl is None else f"{entry.ppl:.6f}"
                fh.write(f"{entry.step},{entry.loss:.6f},{entry.lr:.8g},{ppl}\n")
    finally:
        if fh is not None:
            fh.close()
    return stats


@torch.no_grad()
def perplexity(model: Seq2SeqModel, data: list[TrainingPair], batch_size: int = 64) -> float:
    """exp(total cross-entropy / total non-PAD target tokens)."""
    if not data:
        raise ModelError("perplexity needs a nonempty dataset")
    model.eval()
    total, count = 0.0, 0
    for i in range(0, len(data), batch_size):
        source, dec_in, dec_out = batch_tensors(data[i:i + batch_size])
        loss_sum, n_tok = cross_entropy(model(source, dec_in), dec_out)
        total += float(loss_sum.item())
        count += n_tok
    return math.exp(total / count)


# -- checkpointing ----------------------------------------------------------
# Layout: magic, then little-endian u32 header length, then a JSON header
# {config, tokenizer_hash, step, params: [name, shape]...}, then the raw
# float32 little-endian payload in header order.


def parameter_order(model: Seq2SeqModel) -> list[str]:
    return [name for name, _ in model.named_parameters()]


def save_checkpoint(model: Seq2SeqModel, path: str | Path, tokenizer_hash: str) -> None:
    names = parameter_order(model)
    params = dict(model.named_parameters())
    header = json.dumps({
        "version": 1,
        "config": asdict(model.config),
        "tokenizer_hash": tokenizer_hash,
        "step": model.step,
        "params": [[n, list(params[n].shape)] for n in names],
    }, sort_keys=True).encode("utf-8")
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<I", len(header)))
    buf.write(header)
    for n in names:
        buf.write(params[n].detach().to(torch.float32).numpy().astype("<f4").tobytes())
    Path(path).write_bytes(buf.getvalue())


def load_checkpoint(path: str | Path, tokenizer_hash: str | None = None) -> Seq2SeqModel:
    raw = Path(path).read_bytes()
    if raw[:8] != CHECKPOINT_MAGIC:
        raise ModelError("not a checkpoint file")
    (hlen,) = struct.unpack("<I", raw[8:12])
    header = json.loads(raw[12:12 + hlen])
    if tokenizer_hash is not None and header["tokenizer_hash"] != tokenizer_hash:
        raise ModelError("checkpoint tokenizer hash mismatch")
    cfg = ModelConfig(**header["config"])
    model = Seq2SeqModel(cfg)
    offset = 12 + hlen
    with torch.no_grad():
        params = dict(model.named_parameters())
        for name, shape in header["params"]:
            n = int(torch.tensor(shape).prod().item()) if shape else 1
            arr = np.frombuffer(raw, dtype="<f4", count=n, offset=offset).reshape(shape)
            params[name].copy_(torch.from_numpy(arr.copy()))
            offset += 4 * n
    model.step = header["step"]
    return model


def checkpoint_hash(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
