"""Autoregressive generation, optionally constrained by the token grammar.

Two modes: greedy (argmax, first index wins ties) and top-k sampling with
temperature. With the grammar mask on, ids the recognizer would reject are
forced to -inf before selection, so every finished sequence parses; with
the mask off the model is on its own and callers must syntax-check the
result. For BPE-space models a merged id is legal exactly when its full
base expansion is accepted from the current recognizer state, and the
returned sequence is always decoded back to base space.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import torch

from .bpe import BpeModel, bpe_decode
from .conditions import ConditionSet, encode_prefix
from .model import DecoderModel, SequenceTooLong
from .tokenizer import GrammarState, TokenSequence
from .vocab import BOS, EOS, VOCAB, Vocabulary


class NoValidToken(RuntimeError):
    """Every candidate token is masked out at the current step."""


@dataclass(frozen=True)
class SamplerConfig:
    mode: str = "top_k"
    top_k: int = 5
    temperature: float = 1.0
    max_new_tokens: int = 1024
    grammar_mask: bool = True

    def __post_init__(self) -> None:
        if self.mode not in ("greedy", "top_k"):
            raise ValueError(f"unknown sampling mode: {self.mode!r}")
        if self.top_k < 1:
            raise ValueError(f"top_k must be positive: {self.top_k}")
        if not self.temperature > 0:
            raise ValueError(f"temperature must be positive: {self.temperature}")
        if self.max_new_tokens < 1:
            raise ValueError(f"max_new_tokens must be positive: {self.max_new_tokens}")


def sample_next(
    logits: torch.Tensor,
    cfg: SamplerConfig,
    generator: Optional[torch.Generator] = None,
    allowed: Optional[torch.Tensor] = None,
) -> int:
    """Pick one token id from a (V,) logit vector."""
    work = logits.detach().clone()
    if allowed is not None:
        work = work.masked_fill(~allowed, float("-inf"))
    if not torch.isfinite(work).any():
        raise NoValidToken("all candidate tokens are masked")
    if cfg.mode == "greedy":
        return int(torch.argmax(work))
    k = min(cfg.top_k, work.shape[-1])
    values, indices = torch.topk(work, k)
    probs = torch.softmax(values / cfg.temperature, dim=-1)
    choice = torch.multinomial(probs, 1, generator=generator)
    return int(indices[choice])


def _allowed_tensor(
    state: GrammarState,
    model_vocab: int,
    expansions: dict[int, tuple[int, ...]],
) -> torch.Tensor:
    allowed = torch.zeros(model_vocab, dtype=torch.bool)
    base = torch.from_numpy(state.allowed_mask())
    allowed[: base.shape[0]] = base
    for merged_id, expansion in expansions.items():
        if merged_id >= model_vocab:
            continue
        probe = state.copy()
        ok = True
        for t in expansion:
            if not probe.permits(t):
                ok = False
                break
            probe.feed(t)
        allowed[merged_id] = ok
    return allowed


def generate(
    model: DecoderModel,
    conditions: ConditionSet,
    sampler: SamplerConfig,
    seed: int = 0,
    bpe_model: Optional[BpeModel] = None,
    vocab: Vocabulary = VOCAB,
) -> TokenSequence:
    """Sample one body for the given conditions; returns base-space tokens.

    The sequence ends with eos unless the token or context budget ran out
    first, in which case it will fail syntax validation and the caller
    decides what to do with it.
    """
    prompt = (BOS,) + encode_prefix(conditions, vocab)
    if len(prompt) >= model.config.max_seq_len:
        raise SequenceTooLong(
            f"condition prefix of {len(prompt)} leaves no room to generate"
        )
    generator = torch.Generator()
    generator.manual_seed(seed & 0x7FFF_FFFF_FFFF_FFFF)
    expansions = bpe_model.expansions() if bpe_model is not None else {}
    state = GrammarState(vocab) if sampler.grammar_mask else None

    with torch.no_grad():
        logits, cache = model.prefill(prompt)
        out: list[int] = []
        n_base = 0
        while n_base < sampler.max_new_tokens:
            allowed = None
            if state is not None:
                allowed = _allowed_tensor(state, model.config.vocab_size, expansions)
            token = sample_next(logits, sampler, generator, allowed)
            out.append(token)
            base_run = expansions.get(token, (token,))
            n_base += len(base_run)
            if state is not None:
                for t in base_run:
                    state.feed(t)
            if token == EOS:
                break
            if cache.length >= model.config.max_seq_len:
                break  # out of context; sequence stays unterminated
            logits = model.decode_step(token, cache)

    seq = TokenSequence(tuple(out), space="bpe" if bpe_model is not None else "base")
    if bpe_model is not None:
        seq = bpe_decode(bpe_model, seq)
    return seq
