"""Decoder-only transformer over event tokens, plus checkpoint io.

The block layout is pre-norm RMSNorm, rotary position embeddings on
queries and keys, multi-head causal attention, and a SwiGLU feed-forward;
no bias terms anywhere, untied output head. Computation stays in the
module's dtype so the whole model can run in float64 for numerical
checks.

Checkpoints are a small versioned JSON header (model config, vocabulary
hash, tensor manifest, optionally an embedded BPE merge table) followed by
raw little-endian float32 tensor data. No pickle on either path.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .vocab import PAD, VOCAB_SIZE

CHECKPOINT_MAGIC = b"MGC1"
CHECKPOINT_VERSION = 1


class SequenceTooLong(ValueError):
    """Input length exceeds the model's maximum sequence length."""


class EmptyMask(ValueError):
    """A loss was requested over zero target positions."""


class CheckpointError(ValueError):
    """The checkpoint file is unreadable or inconsistent."""


class VocabHashMismatch(CheckpointError):
    """The checkpoint was trained against a different vocabulary."""


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int = VOCAB_SIZE
    n_layers: int = 4
    d_model: int = 128
    n_heads: int = 4
    d_head: int = 32
    max_seq_len: int = 512
    ffn_hidden: Optional[int] = None
    rope_base: float = 10000.0
    norm_eps: float = 1e-8

    def __post_init__(self) -> None:
        if self.d_model != self.n_heads * self.d_head:
            raise ValueError(
                f"d_model must equal n_heads * d_head: {self.d_model} != {self.n_heads} * {self.d_head}"
            )
        if self.d_head % 2:
            raise ValueError(f"d_head must be even for rotary pairs: {self.d_head}")
        if self.vocab_size < 5 or self.n_layers < 1 or self.max_seq_len < 2:
            raise ValueError("degenerate model configuration")

    @property
    def ffn_width(self) -> int:
        if self.ffn_hidden is not None:
            return self.ffn_hidden
        # 8/3 expansion rounded up to a multiple of 8
        return ((8 * self.d_model + 23) // 24) * 8

    def to_json_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json_dict(cls, data: dict) -> "ModelConfig":
        fields = set(cls.__dataclass_fields__)
        unknown = set(data) - fields
        if unknown:
            raise ValueError(f"unknown model config field: {sorted(unknown)[0]}")
        return cls(**data)


class RMSNorm(nn.Module):
    def __init__(self, dim: int, eps: float) -> None:
        super().__init__()
        self.eps = eps
        self.weight = nn.Parameter(torch.ones(dim))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        scale = torch.rsqrt(x.pow(2).mean(dim=-1, keepdim=True) + self.eps)
        return x * scale * self.weight


class Rotary(nn.Module):
    """Precomputed cos/sin tables; rotates (even, odd) channel pairs."""

    def __init__(self, d_head: int, max_seq_len: int, base: float) -> None:
        super().__init__()
        half = d_head // 2
        freq = base ** (-torch.arange(half, dtype=torch.float64) * 2 / d_head)
        angles = torch.arange(max_seq_len, dtype=torch.float64)[:, None] * freq[None, :]
        self.register_buffer("cos", angles.cos().to(torch.get_default_dtype()), persistent=False)
        self.register_buffer("sin", angles.sin().to(torch.get_default_dtype()), persistent=False)

    def forward(self, x: torch.Tensor, offset: int) -> torch.Tensor:
        # x: (B, H, T, d_head)
        t = x.shape[-2]
        cos = self.cos[offset : offset + t].to(x.dtype)
        sin = self.sin[offset : offset + t].to(x.dtype)
        x1, x2 = x[..., 0::2], x[..., 1::2]
        y1 = x1 * cos - x2 * sin
        y2 = x1 * sin + x2 * cos
        return torch.stack((y1, y2), dim=-1).flatten(-2)


class LayerCache:
    """Per-layer key/value store for incremental decoding."""

    def __init__(self, n_heads: int, max_len: int, d_head: int, dtype: torch.dtype) -> None:
        self.k = torch.zeros(1, n_heads, max_len, d_head, dtype=dtype)
        self.v = torch.zeros(1, n_heads, max_len, d_head, dtype=dtype)


class KVCache:
    def __init__(self, model: "DecoderModel") -> None:
        cfg = model.config
        dtype = model.tok_emb.weight.dtype
        self.layers = [
            LayerCache(cfg.n_heads, cfg.max_seq_len, cfg.d_head, dtype)
            for _ in range(cfg.n_layers)
        ]
        self.length = 0


def _causal_bias(t_q: int, t_k: int, offset: int, dtype: torch.dtype) -> torch.Tensor:
    """Additive bias: 0 where key j <= offset + query i, else -inf."""
    i = torch.arange(t_q)[:, None]
    j = torch.arange(t_k)[None, :]
    bias = torch.zeros(t_q, t_k, dtype=dtype)
    return bias.masked_fill(j > offset + i, float("-inf"))


class CausalSelfAttention(nn.Module):
    def __init__(self, cfg: ModelConfig) -> None:
        super().__init__()
        self.n_heads, self.d_head = cfg.n_heads, cfg.d_head
        width = cfg.n_heads * cfg.d_head
        self.wq = nn.Linear(cfg.d_model, width, bias=False)
        self.wk = nn.Linear(cfg.d_model, width, bias=False)
        self.wv = nn.Linear(cfg.d_model, width, bias=False)
        self.wo = nn.Linear(width, cfg.d_model, bias=False)

    def forward(
        self,
        x: torch.Tensor,
        rope: Rotary,
        offset: int = 0,
        cache: Optional[LayerCache] = None,
    ) -> torch.Tensor:
        b, t, _ = x.shape
        shape = (b, t, self.n_heads, self.d_head)
        q = rope(self.wq(x).view(shape).transpose(1, 2), offset)
        k = rope(self.wk(x).view(shape).transpose(1, 2), offset)
        v = self.wv(x).view(shape).transpose(1, 2)
        if cache is not None:
            cache.k[:, :, offset : offset + t] = k
            cache.v[:, :, offset : offset + t] = v
            k = cache.k[:, :, : offset + t]
            v = cache.v[:, :, : offset + t]
        scores = q @ k.transpose(-1, -2) / math.sqrt(self.d_head)
        scores = scores + _causal_bias(t, k.shape[-2], offset, scores.dtype)
        out = torch.softmax(scores, dim=-1) @ v
        return self.wo(out.transpose(1, 2).reshape(b, t, -1))


class SwiGLU(nn.Module):
    def __init__(self, d_model: int, hidden: int) -> None:
        super().__init__()
        self.w_gate = nn.Linear(d_model, hidden, bias=False)
        self.w_up = nn.Linear(d_model, hidden, bias=False)
        self.w_down = nn.Linear(hidden, d_model, bias=False)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.w_down(F.silu(self.w_gate(x)) * self.w_up(x))


class Block(nn.Module):
    def __init__(self, cfg: ModelConfig) -> None:
        super().__init__()
        self.attn_norm = RMSNorm(cfg.d_model, cfg.norm_eps)
        self.attn = CausalSelfAttention(cfg)
        self.ffn_norm = RMSNorm(cfg.d_model, cfg.norm_eps)
        self.ffn = SwiGLU(cfg.d_model, cfg.ffn_width)

    def forward(self, x, rope, offset=0, cache=None):
        x = x + self.attn(self.attn_norm(x), rope, offset, cache)
        return x + self.ffn(self.ffn_norm(x))


class DecoderModel(nn.Module):
    def __init__(self, config: ModelConfig) -> None:
        super().__init__()
        self.config = config
        self.tok_emb = nn.Embedding(config.vocab_size, config.d_model)
        self.rope = Rotary(config.d_head, config.max_seq_len, config.rope_base)
        self.blocks = nn.ModuleList(Block(config) for _ in range(config.n_layers))
        self.final_norm = RMSNorm(config.d_model, config.norm_eps)
        self.head = nn.Linear(config.d_model, config.vocab_size, bias=False)
        self.reset_parameters()

    def reset_parameters(self) -> None:
        residual_std = 0.02 / math.sqrt(2 * self.config.n_layers)
        for name, module in self.named_modules():
            if isinstance(module, (nn.Linear, nn.Embedding)):
                std = residual_std if name.endswith((".wo", ".w_down")) else 0.02
                nn.init.normal_(module.weight, mean=0.0, std=std)
            elif isinstance(module, RMSNorm):
                nn.init.ones_(module.weight)

    def n_params(self) -> int:
        return sum(p.numel() for p in self.parameters())

    def _check_length(self, t: int) -> None:
        if t > self.config.max_seq_len:
            raise SequenceTooLong(f"sequence of {t} exceeds max_seq_len {self.config.max_seq_len}")

    def _as_batch(self, ids) -> torch.Tensor:
        if not torch.is_tensor(ids):
            ids = torch.tensor(ids, dtype=torch.long)
        if ids.dim() == 1:
            ids = ids.unsqueeze(0)
        return ids

    def hidden_states(self, ids) -> torch.Tensor:
        """Final-norm hidden states, shape (B, T, d_model)."""
        ids = self._as_batch(ids)
        self._check_length(ids.shape[1])
        x = self.tok_emb(ids)
        for block in self.blocks:
            x = block(x, self.rope)
        return self.final_norm(x)

    def logits(self, ids) -> torch.Tensor:
        return self.head(self.hidden_states(ids))

    def log_probs(self, ids) -> torch.Tensor:
        """Normalized next-token log-probabilities at every position."""
        return F.log_softmax(self.logits(ids), dim=-1)

    def loss(self, ids, target_mask) -> torch.Tensor:
        """Mean negative log-likelihood over masked target positions.

        ids is (B, T); target_mask is (B, T-1) and marks which of the
        shifted targets ids[:, 1:] count toward the loss.
        """
        ids = self._as_batch(ids)
        if not torch.is_tensor(target_mask):
            target_mask = torch.tensor(target_mask, dtype=torch.bool)
        if target_mask.dim() == 1:
            target_mask = target_mask.unsqueeze(0)
        if target_mask.shape != (ids.shape[0], ids.shape[1] - 1):
            raise ValueError(
                f"target mask shape {tuple(target_mask.shape)} does not match ids {tuple(ids.shape)}"
            )
        n = int(target_mask.sum())
        if n == 0:
            raise EmptyMask("no target positions selected")
        logits = self.logits(ids)[:, :-1]
        nll = F.cross_entropy(
            logits.reshape(-1, self.config.vocab_size),
            ids[:, 1:].reshape(-1),
            reduction="none",
        ).reshape(target_mask.shape)
        return (nll * target_mask).sum() / n

    def embed(self, ids, pad_id: int = PAD) -> torch.Tensor:
        """Mean of final-norm hidden states over non-pad positions, (d_model,)."""
        batch = self.embed_batch([ids], pad_id)
        return batch[0]

    def embed_batch(self, seqs: Sequence, pad_id: int = PAD) -> torch.Tensor:
        rows = [s if torch.is_tensor(s) else torch.tensor(s, dtype=torch.long) for s in seqs]
        width = max(len(r) for r in rows)
        ids = torch.full((len(rows), width), pad_id, dtype=torch.long)
        for i, r in enumerate(rows):
            ids[i, : len(r)] = r
        hidden = self.hidden_states(ids)
        keep = (ids != pad_id).to(hidden.dtype)
        counts = keep.sum(dim=1, keepdim=True).clamp(min=1)
        return (hidden * keep.unsqueeze(-1)).sum(dim=1) / counts

    # -- incremental decoding ---------------------------------------------

    def prefill(self, ids) -> tuple[torch.Tensor, KVCache]:
        """Run the full context once; returns last-position logits and the cache."""
        ids = self._as_batch(ids)
        if ids.shape[0] != 1:
            raise ValueError("incremental decoding supports a single sequence")
        self._check_length(ids.shape[1])
        cache = KVCache(self)
        x = self.tok_emb(ids)
        for block, layer in zip(self.blocks, cache.layers):
            x = block(x, self.rope, 0, layer)
        cache.length = ids.shape[1]
        return self.head(self.final_norm(x))[0, -1], cache

    def decode_step(self, token_id: int, cache: KVCache) -> torch.Tensor:
        """Extend the cached context by one token; returns next logits."""
        self._check_length(cache.length + 1)
        x = self.tok_emb(torch.tensor([[token_id]], dtype=torch.long))
        for block, layer in zip(self.blocks, cache.layers):
            x = block(x, self.rope, cache.length, layer)
        cache.length += 1
        return self.head(self.final_norm(x))[0, -1]


# --------------------------------------------------------------------------
# checkpoints


def save_checkpoint(model: DecoderModel, path: str, vocab_hash: str, bpe_model=None) -> None:
    manifest = []
    chunks = []
    offset = 0
    for name, tensor in model.state_dict().items():
        raw = tensor.detach().to(torch.float32).contiguous().numpy().astype("<f4").tobytes()
        manifest.append({"name": name, "shape": list(tensor.shape), "offset": offset})
        chunks.append(raw)
        offset += len(raw)
    header = {
        "version": CHECKPOINT_VERSION,
        "config": model.config.to_json_dict(),
        "vocab_sha256": vocab_hash,
        "tensors": manifest,
        "bpe": bpe_model.to_json_dict() if bpe_model is not None else None,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for raw in chunks:
            fh.write(raw)


def load_checkpoint(path: str, expected_vocab_hash: Optional[str] = None):
    """Returns (model, bpe_model or None, header dict)."""
    from .bpe import BpeModel  # local import keeps module deps one-way

    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError("not a model checkpoint (bad magic)")
    if len(data) < 16:
        raise CheckpointError("checkpoint preamble is truncated")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    (header_len,) = struct.unpack_from("<Q", data, 8)
    try:
        header = json.loads(data[16 : 16 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"unreadable checkpoint header: {exc}") from exc
    if expected_vocab_hash is not None and header.get("vocab_sha256") != expected_vocab_hash:
        raise VocabHashMismatch(
            "checkpoint vocabulary hash does not match the running vocabulary"
        )
    config = ModelConfig.from_json_dict(header["config"])
    payload = data[16 + header_len :]
    state = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        if start + 4 * count > len(payload):
            raise CheckpointError(f"tensor {entry['name']} is truncated")
        arr = np.frombuffer(payload, dtype="<f4", count=count, offset=start)
        state[entry["name"]] = torch.from_numpy(arr.copy()).reshape(shape)
    model = DecoderModel(config)
    try:
        model.load_state_dict(state)
    except RuntimeError as exc:
        raise CheckpointError(f"tensor manifest mismatch: {exc}") from exc
    model.eval()
    bpe = header.get("bpe")
    return model, (BpeModel.from_json_dict(bpe) if bpe else None), header
