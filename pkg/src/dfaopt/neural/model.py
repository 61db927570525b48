"""Encoder-decoder models emitting per-step logits over the label alphabet plus EOS."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F
from torch import Tensor

DTYPE = torch.float64


@dataclass
class ModelConfig:
    model_kind: str = "transformer"
    d_model: int = 64
    heads: int = 4
    encoder_layers: int = 2
    decoder_layers: int = 2
    ff_mult: int = 2
    dropout_rate: float = 0.2
    learning_rate: float = 1e-3
    use_positional_encoding: bool = True
    mask_in_training: bool = True

    def __post_init__(self) -> None:
        if self.model_kind not in ("transformer", "lstm"):
            raise ValueError(f"unknown model kind {self.model_kind!r}")
        if self.d_model % self.heads:
            raise ValueError("d_model must be divisible by heads")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout must lie in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Vocabulary:
    """Labels 0..size-1; BOS, EOS, PAD follow. Logit row index ``size`` is EOS."""

    size: int

    @property
    def bos(self) -> int:
        return self.size

    @property
    def eos(self) -> int:
        return self.size + 1

    @property
    def pad(self) -> int:
        return self.size + 2

    @property
    def n_tokens(self) -> int:
        return self.size + 3

    @property
    def n_logits(self) -> int:
        return self.size + 1

    def logit_index(self, token: int) -> int:
        return self.size if token == self.eos else token


@dataclass(frozen=True)
class InputSchema:
    """Encoder row layout: one embedding table per categorical column, plus continuous values.

    The last id of every categorical table is reserved for padding.
    """

    categorical_sizes: tuple
    n_continuous: int

    def pad_row(self) -> list:
        return [s - 1 for s in self.categorical_sizes]

    def to_dict(self) -> dict:
        return {"categorical_sizes": list(self.categorical_sizes), "n_continuous": self.n_continuous}


def sinusoidal(length: int, d: int) -> Tensor:
    pos = torch.arange(length, dtype=DTYPE)[:, None]
    div = torch.exp(torch.arange(0, d, 2, dtype=DTYPE) * (-math.log(10000.0) / d))
    pe = torch.zeros(length, d, dtype=DTYPE)
    pe[:, 0::2] = torch.sin(pos * div)
    pe[:, 1::2] = torch.cos(pos * div)[:, : d // 2]
    return pe


class InputEmbedding(nn.Module):
    """Learned embeddings for categorical features, a linear map for continuous ones, then GELU."""

    def __init__(self, schema: InputSchema, d: int) -> None:
        super().__init__()
        self.tables = nn.ModuleList(nn.Embedding(s, d) for s in schema.categorical_sizes)
        self.cont = nn.Linear(schema.n_continuous, d) if schema.n_continuous else None

    def forward(self, cat: Tensor, cont: Tensor) -> Tensor:
        x = sum(t(cat[..., i]) for i, t in enumerate(self.tables))
        if self.cont is not None:
            x = x + self.cont(cont)
        return F.gelu(x)


class Attention(nn.Module):
    def __init__(self, d: int, heads: int, dropout: float) -> None:
        super().__init__()
        self.heads = heads
        self.q = nn.Linear(d, d)
        self.k = nn.Linear(d, d)
        self.v = nn.Linear(d, d)
        self.o = nn.Linear(d, d)
        self.drop = nn.Dropout(dropout)

    def forward(self, x: Tensor, mem: Tensor, key_pad: Tensor | None = None, causal: bool = False) -> Tensor:
        B, T, d = x.shape
        S = mem.shape[1]
        h = self.heads

        def split(t: Tensor, n: int) -> Tensor:
            return t.view(B, n, h, d // h).transpose(1, 2)

        q, k, v = split(self.q(x), T), split(self.k(mem), S), split(self.v(mem), S)
        scores = q @ k.transpose(-1, -2) / math.sqrt(d // h)
        if key_pad is not None:
            scores = scores.masked_fill(key_pad[:, None, None, :], float("-inf"))
        if causal:
            future = torch.ones(T, S, dtype=torch.bool).triu(1)
            scores = scores.masked_fill(future, float("-inf"))
        att = torch.softmax(scores, dim=-1)
        out = (att @ v).transpose(1, 2).reshape(B, T, d)
        return self.drop(self.o(out))


class FeedForward(nn.Module):
    def __init__(self, d: int, mult: int, dropout: float) -> None:
        super().__init__()
        self.net = nn.Sequential(nn.Linear(d, mult * d), nn.GELU(), nn.Linear(mult * d, d), nn.Dropout(dropout))

    def forward(self, x: Tensor) -> Tensor:
        return self.net(x)


class EncoderLayer(nn.Module):
    def __init__(self, cfg: ModelConfig) -> None:
        super().__init__()
        d = cfg.d_model
        self.ln1, self.ln2 = nn.LayerNorm(d), nn.LayerNorm(d)
        self.att = Attention(d, cfg.heads, cfg.dropout_rate)
        self.ff = FeedForward(d, cfg.ff_mult, cfg.dropout_rate)

    def forward(self, x: Tensor, pad: Tensor) -> Tensor:
        y = self.ln1(x)
        x = x + self.att(y, y, pad)
        return x + self.ff(self.ln2(x))


class DecoderLayer(nn.Module):
    def __init__(self, cfg: ModelConfig) -> None:
        super().__init__()
        d = cfg.d_model
        self.ln1, self.ln2, self.ln3 = nn.LayerNorm(d), nn.LayerNorm(d), nn.LayerNorm(d)
        self.self_att = Attention(d, cfg.heads, cfg.dropout_rate)
        self.cross_att = Attention(d, cfg.heads, cfg.dropout_rate)
        self.ff = FeedForward(d, cfg.ff_mult, cfg.dropout_rate)

    def forward(self, x: Tensor, mem: Tensor, mem_pad: Tensor) -> Tensor:
        y = self.ln1(x)
        x = x + self.self_att(y, y, causal=True)
        x = x + self.cross_att(self.ln2(x), mem, mem_pad)
        return x + self.ff(self.ln3(x))


class Seq2Seq(nn.Module):
    """Shared surface: ``encode`` gives H^enc, ``decode`` gives logits for every prefix position."""

    def __init__(self, cfg: ModelConfig, vocab: Vocabulary, schema: InputSchema) -> None:
        super().__init__()
        self.cfg, self.vocab, self.schema = cfg, vocab, schema

    def encode(self, cat: Tensor, cont: Tensor, pad: Tensor) -> Tensor:
        raise NotImplementedError

    def decode(self, mem: Tensor, mem_pad: Tensor, tokens: Tensor) -> Tensor:
        """Logits (B, T, |labels|+1); position t sees tokens[:, :t+1] only."""
        if tokens.shape[1] == 0 or bool((tokens[:, 0] != self.vocab.bos).any()):
            raise ValueError("decoder prefix must start with BOS")
        is_pad = tokens == self.vocab.pad
        # trailing PAD is fine, PAD followed by a real token is not
        if bool((is_pad[:, :-1] & ~is_pad[:, 1:]).any()):
            raise ValueError("decoder prefix has PAD at an interior position")
        return self._decode(mem, mem_pad, tokens)

    def _decode(self, mem: Tensor, mem_pad: Tensor, tokens: Tensor) -> Tensor:
        raise NotImplementedError

    def forward(self, cat: Tensor, cont: Tensor, pad: Tensor, tokens: Tensor) -> Tensor:
        return self.decode(self.encode(cat, cont, pad), pad, tokens)


class TransformerSeq2Seq(Seq2Seq):
    def __init__(self, cfg: ModelConfig, vocab: Vocabulary, schema: InputSchema, max_len: int = 256) -> None:
        super().__init__(cfg, vocab, schema)
        d = cfg.d_model
        self.embed_in = InputEmbedding(schema, d)
        self.embed_out = nn.Embedding(vocab.n_tokens, d)
        self.register_buffer("pe", sinusoidal(max_len, d), persistent=False)
        self.drop = nn.Dropout(cfg.dropout_rate)
        self.enc = nn.ModuleList(EncoderLayer(cfg) for _ in range(cfg.encoder_layers))
        self.dec = nn.ModuleList(DecoderLayer(cfg) for _ in range(cfg.decoder_layers))
        self.enc_ln, self.dec_ln = nn.LayerNorm(d), nn.LayerNorm(d)
        self.proj = nn.Linear(d, vocab.n_logits)

    def encode(self, cat: Tensor, cont: Tensor, pad: Tensor) -> Tensor:
        x = self.embed_in(cat, cont)
        if self.cfg.use_positional_encoding:
            x = x + self.pe[: x.shape[1]]
        x = self.drop(x)
        for layer in self.enc:
            x = layer(x, pad)
        return self.enc_ln(x)

    def _decode(self, mem: Tensor, mem_pad: Tensor, tokens: Tensor) -> Tensor:
        # output positions are meaningful, so the decoder always gets positions
        x = self.drop(self.embed_out(tokens) + self.pe[: tokens.shape[1]])
        for layer in self.dec:
            x = layer(x, mem, mem_pad)
        return self.proj(self.dec_ln(x))


class LSTMSeq2Seq(Seq2Seq):
    """LSTM encoder-decoder; the decoder state starts from the encoder's last valid output."""

    def __init__(self, cfg: ModelConfig, vocab: Vocabulary, schema: InputSchema) -> None:
        super().__init__(cfg, vocab, schema)
        d = cfg.d_model
        self.layers = cfg.encoder_layers
        drop = cfg.dropout_rate if self.layers > 1 else 0.0
        self.embed_in = InputEmbedding(schema, d)
        self.embed_out = nn.Embedding(vocab.n_tokens, d)
        self.drop = nn.Dropout(cfg.dropout_rate)
        self.enc = nn.LSTM(d, d, num_layers=self.layers, batch_first=True, dropout=drop)
        self.dec = nn.LSTM(d, d, num_layers=self.layers, batch_first=True, dropout=drop)
        self.bridge_h = nn.Linear(d, d * self.layers)
        self.bridge_c = nn.Linear(d, d * self.layers)
        self.proj = nn.Linear(d, vocab.n_logits)

    def encode(self, cat: Tensor, cont: Tensor, pad: Tensor) -> Tensor:
        x = self.drop(self.embed_in(cat, cont))
        lengths = (~pad).sum(1).clamp(min=1)
        packed = nn.utils.rnn.pack_padded_sequence(x, lengths, batch_first=True, enforce_sorted=False)
        out, _ = self.enc(packed)
        out, _ = nn.utils.rnn.pad_packed_sequence(out, batch_first=True, total_length=x.shape[1])
        return out

    def _decode(self, mem: Tensor, mem_pad: Tensor, tokens: Tensor) -> Tensor:
        B, d = mem.shape[0], mem.shape[2]
        last = (~mem_pad).sum(1).clamp(min=1) - 1
        summary = mem[torch.arange(B), last]
        h0 = torch.tanh(self.bridge_h(summary)).view(B, self.layers, d).transpose(0, 1).contiguous()
        c0 = self.bridge_c(summary).view(B, self.layers, d).transpose(0, 1).contiguous()
        out, _ = self.dec(self.drop(self.embed_out(tokens)), (h0, c0))
        return self.proj(self.drop(out))


def build_model(cfg: ModelConfig, vocab: Vocabulary, schema: InputSchema, seed: int = 0) -> Seq2Seq:
    torch.manual_seed(seed)
    cls = TransformerSeq2Seq if cfg.model_kind == "transformer" else LSTMSeq2Seq
    return cls(cfg, vocab, schema).to(DTYPE)
