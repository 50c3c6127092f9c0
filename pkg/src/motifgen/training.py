"""Training loop: AdamW, linear warmup then linear decay, condition drops.

Every example is laid out as

    bos  <condition prefix ... sep>  <body ... eos>  pad*

and the loss covers exactly the positions whose target falls after sep,
so the model is never trained to predict its own conditioning. Condition
categories are re-dropped independently each time an example is visited,
which is what lets one model answer any subset of conditions later.
"""

from __future__ import annotations

import csv
import random
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import torch

from .bpe import BpeModel, bpe_encode
from .conditions import ConditionSet, DropPolicy, apply_drop, encode_prefix
from .model import DecoderModel, ModelConfig
from .tokenizer import TokenSequence
from .vocab import BOS, PAD, VOCAB


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 16
    total_steps: int = 10_000
    warmup_steps: int = 2_000
    peak_lr: float = 3e-4
    weight_decay: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.95
    adam_eps: float = 1e-8
    drop_probability: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        if self.total_steps < 1 or self.batch_size < 1:
            raise ValueError("total_steps and batch_size must be positive")
        if not 1 <= self.warmup_steps < self.total_steps:
            raise ValueError(
                f"warmup_steps must lie in [1, total_steps): {self.warmup_steps}"
            )

    @classmethod
    def from_json_dict(cls, data: dict) -> "TrainConfig":
        fields = set(cls.__dataclass_fields__)
        unknown = set(data) - fields
        if unknown:
            raise ValueError(f"unknown train config field: {sorted(unknown)[0]}")
        return cls(**data)


def lr_at(step: int, cfg: TrainConfig) -> float:
    """Linear ramp to peak_lr at warmup_steps, linear decay to 0 at total_steps."""
    if step <= cfg.warmup_steps:
        return cfg.peak_lr * step / cfg.warmup_steps
    return cfg.peak_lr * (cfg.total_steps - step) / (cfg.total_steps - cfg.warmup_steps)


@dataclass(frozen=True)
class Example:
    """A ready-to-batch sequence; targets from position n_context-1 count."""

    ids: tuple[int, ...]
    n_context: int  # bos + prefix including sep


def build_example(
    conds: ConditionSet,
    body: TokenSequence,
    bpe_model: Optional[BpeModel] = None,
) -> Example:
    encoded = bpe_encode(bpe_model, body) if bpe_model is not None else body
    prefix = encode_prefix(conds)
    return Example(ids=(BOS,) + prefix + encoded.ids, n_context=1 + len(prefix))


def batchify(examples: Sequence[Example]) -> tuple[torch.Tensor, torch.Tensor]:
    width = max(len(e.ids) for e in examples)
    ids = torch.full((len(examples), width), PAD, dtype=torch.long)
    mask = torch.zeros(len(examples), width - 1, dtype=torch.bool)
    for i, e in enumerate(examples):
        ids[i, : len(e.ids)] = torch.tensor(e.ids, dtype=torch.long)
        mask[i, e.n_context - 1 : len(e.ids) - 1] = True
    return ids, mask


def write_step_log(rows: Iterable[tuple[int, float, float]], path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "lr", "loss"])
        writer.writerows(rows)


def train(
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    dataset: Sequence[tuple[ConditionSet, TokenSequence]],
    bpe_model: Optional[BpeModel] = None,
    log_path: Optional[str] = None,
    progress: Optional[int] = None,
) -> tuple[DecoderModel, list[tuple[int, float, float]]]:
    """Train from scratch; returns the model and (step, lr, loss) rows.

    Deterministic for a fixed seed at a fixed thread count: the seed fixes
    initialization, data order, and every condition drop.
    """
    if not dataset:
        raise ValueError("empty training dataset")
    required = VOCAB.size if bpe_model is None else bpe_model.vocab_size
    if model_cfg.vocab_size < required:
        raise ValueError(
            f"model vocab_size {model_cfg.vocab_size} cannot hold the "
            f"{required}-token id space in use"
        )
    torch.manual_seed(train_cfg.seed)
    model = DecoderModel(model_cfg)
    model.train()
    rng = random.Random(train_cfg.seed)
    policy = DropPolicy(train_cfg.drop_probability, train_cfg.seed)

    decay, no_decay = [], []
    for param in model.parameters():
        (decay if param.dim() >= 2 else no_decay).append(param)
    optimizer = torch.optim.AdamW(
        [
            {"params": decay, "weight_decay": train_cfg.weight_decay},
            {"params": no_decay, "weight_decay": 0.0},
        ],
        lr=train_cfg.peak_lr,
        betas=(train_cfg.beta1, train_cfg.beta2),
        eps=train_cfg.adam_eps,
    )

    log: list[tuple[int, float, float]] = []
    step = 0
    order = list(range(len(dataset)))
    while step < train_cfg.total_steps:
        rng.shuffle(order)
        for start in range(0, len(order), train_cfg.batch_size):
            if step >= train_cfg.total_steps:
                break
            picked = order[start : start + train_cfg.batch_size]
            if not picked:
                break
            examples = []
            for i in picked:
                conds, body = dataset[i]
                examples.append(build_example(apply_drop(conds, policy, rng), body, bpe_model))
            ids, mask = batchify(examples)
            step += 1
            lr = lr_at(step, train_cfg)
            for group in optimizer.param_groups:
                group["lr"] = lr
            loss = model.loss(ids, mask)
            optimizer.zero_grad(set_to_none=True)
            loss.backward()
            optimizer.step()
            log.append((step, lr, float(loss.detach())))
            if progress and step % progress == 0:
                print(f"step {step}/{train_cfg.total_steps} lr {lr:.2e} loss {float(loss):.4f}")
    model.eval()
    if log_path:
        write_step_log(log, log_path)
    return model, log
