"""Shared fixtures: a tiny trained model reused across test modules.

Training even a micro model takes a few seconds, so the fixture is
session-scoped and the result is treated as read-only by every consumer.
"""

from __future__ import annotations

from types import SimpleNamespace

import pytest

from motifgen.conditions import extract_metadata
from motifgen.model import ModelConfig, save_checkpoint
from motifgen.synthetic import synth_corpus
from motifgen.tokenizer import tokenize
from motifgen.training import TrainConfig, train
from motifgen.vocab import VOCAB


@pytest.fixture(scope="session")
def micro(tmp_path_factory: pytest.TempPathFactory) -> SimpleNamespace:
    """A 2-layer model trained briefly on a small synthetic corpus.

    Provides the corpus, the (conditions, body) dataset, both configs,
    the trained model, the step log, and a saved checkpoint path.
    """
    corpus = synth_corpus(48, seed=11)
    dataset = [(extract_metadata(song), tokenize(song)) for song in corpus]
    model_cfg = ModelConfig(
        n_layers=2, d_model=32, n_heads=2, d_head=16, max_seq_len=320
    )
    train_cfg = TrainConfig(
        batch_size=8, total_steps=120, warmup_steps=20, peak_lr=2e-3, seed=0
    )
    model, log = train(model_cfg, train_cfg, dataset)
    model.eval()

    ckpt_path = tmp_path_factory.mktemp("ckpt") / "micro.mgc"
    save_checkpoint(model, ckpt_path, VOCAB.hash_hex())

    return SimpleNamespace(
        corpus=corpus,
        dataset=dataset,
        model_cfg=model_cfg,
        train_cfg=train_cfg,
        model=model,
        log=log,
        ckpt_path=ckpt_path,
    )
