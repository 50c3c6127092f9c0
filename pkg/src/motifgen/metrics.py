"""Evaluation: perplexity, embedding density/coverage, controllability.

Density and coverage follow the k-NN manifold estimates: each real
embedding gets a radius equal to the distance to its k-th nearest other
real embedding (closed ball, self excluded by index),

    density  = (1 / (k M)) sum_j sum_i [ d(r_i, g_j) <= rad_i ]
    coverage = (1 / N) sum_i [ exists j : d(r_i, g_j) <= rad_i ]

computed with plain elementwise arithmetic so an explicit double loop over
pairs reproduces the numbers bit for bit.

Controllability compares what was asked for against what a generated
window actually contains: instrument Jaccard, absolute errors of the four
means (requested side snapped to its bin center, generated side raw), and
chord recall both strict (root and quality) and root-only. Samples that
fail syntax validation are excluded upstream and reported as a count.
"""

from __future__ import annotations

import csv
import json
import math
import random
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import torch

from .bpe import BpeModel, bpe_encode
from .conditions import (
    ConditionSet,
    DropPolicy,
    apply_drop,
    extract_metadata,
    quantize_conditions,
)
from .midi_io import DRUM_CLASS, TOTAL_UNITS, NoteSong
from .model import DecoderModel
from .sampling import SamplerConfig, generate
from .tokenizer import TokenSequence, detokenize, validate_syntax
from .training import Example, batchify, build_example


class DegenerateManifold(ValueError):
    """All real embeddings coincide; k-NN radii are all zero."""


# --------------------------------------------------------------------------
# perplexity


def perplexity(model: DecoderModel, examples: Sequence[Example], batch_size: int = 32) -> float:
    """exp of mean NLL over all masked target positions, pooled globally."""
    if not examples:
        raise ValueError("no examples to evaluate")
    total_nll = 0.0
    total_count = 0
    model.eval()
    with torch.no_grad():
        for start in range(0, len(examples), batch_size):
            chunk = examples[start : start + batch_size]
            ids, mask = batchify(chunk)
            n = int(mask.sum())
            if n == 0:
                continue
            total_nll += float(model.loss(ids, mask)) * n
            total_count += n
    if total_count == 0:
        raise ValueError("examples contain no target positions")
    return float(np.exp(total_nll / total_count))


# --------------------------------------------------------------------------
# density / coverage


def _pairwise_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    diff = a[:, None, :] - b[None, :, :]
    return np.sqrt((diff * diff).sum(axis=-1))


def knn_radii(real: np.ndarray, k: int) -> np.ndarray:
    """Distance from each real point to its k-th nearest other real point."""
    n = real.shape[0]
    if k < 1 or k >= n:
        raise ValueError(f"k must satisfy 1 <= k < n_real, got k={k}, n_real={n}")
    dists = _pairwise_distances(real, real)
    np.fill_diagonal(dists, np.inf)  # exclude self by index
    return np.sort(dists, axis=1)[:, k - 1]


def density_coverage(
    real: np.ndarray, generated: np.ndarray, k: int = 5
) -> tuple[float, float]:
    real = np.asarray(real, dtype=np.float64)
    generated = np.asarray(generated, dtype=np.float64)
    if real.ndim != 2 or generated.ndim != 2 or real.shape[1] != generated.shape[1]:
        raise ValueError("embeddings must be 2-D with a shared feature dimension")
    if generated.shape[0] == 0:
        raise ValueError("no generated embeddings")
    radii = knn_radii(real, k)
    if float(radii.max()) == 0.0:
        raise DegenerateManifold("all real embeddings are identical")
    cross = _pairwise_distances(real, generated)
    inside = cross <= radii[:, None]
    density = float(inside.sum()) / (k * generated.shape[0])
    coverage = float(inside.any(axis=1).mean())
    return density, coverage


# --------------------------------------------------------------------------
# controllability


@dataclass(frozen=True)
class ControlReport:
    instrument_jaccard: Optional[float]
    mean_pitch_err: Optional[float]
    mean_tempo_err: Optional[float]
    mean_velocity_err: Optional[float]
    mean_duration_err: Optional[float]
    chord_strict_recall: Optional[float]
    chord_root_recall: Optional[float]
    n_pairs: int
    n_excluded_syntax: int


def _generated_stats(song: NoteSong) -> dict:
    melodic = [n.pitch for n in song.notes if n.instrument_class != DRUM_CLASS]
    weighted = 0.0
    for i, (unit, bpm) in enumerate(song.tempo_changes):
        end = song.tempo_changes[i + 1][0] if i + 1 < len(song.tempo_changes) else TOTAL_UNITS
        weighted += bpm * (end - unit)
    from .tokenizer import half_bar_chords

    return {
        "instruments": {n.instrument_class for n in song.notes},
        "mean_pitch": sum(melodic) / len(melodic) if melodic else None,
        "mean_tempo": weighted / TOTAL_UNITS,
        "mean_velocity": (
            sum(n.velocity for n in song.notes) / len(song.notes) if song.notes else None
        ),
        "mean_duration": (
            sum(n.duration for n in song.notes) / len(song.notes) if song.notes else None
        ),
        "chords": {lab for lab in half_bar_chords(song) if lab is not None},
    }


def controllability(
    pairs: Sequence[tuple[ConditionSet, NoteSong]],
    n_excluded_syntax: int = 0,
) -> ControlReport:
    """Aggregate request-vs-outcome agreement over (conditions, window) pairs.

    Each metric averages over the pairs where both sides define it; the
    requested means are first snapped to their bin centers, since that is
    all the prefix ever told the model.
    """
    acc: dict[str, list[float]] = {key: [] for key in (
        "i", "mp", "mt", "mv", "md", "sc", "rc",
    )}
    for requested, song in pairs:
        req = quantize_conditions(requested)
        got = _generated_stats(song)
        if req.instruments is not None:
            union = req.instruments | got["instruments"]
            inter = req.instruments & got["instruments"]
            acc["i"].append(len(inter) / len(union) if union else 0.0)
        for name, col in (
            ("mean_pitch", "mp"),
            ("mean_tempo", "mt"),
            ("mean_velocity", "mv"),
            ("mean_duration", "md"),
        ):
            want = getattr(req, name)
            have = got[name]
            if want is not None and have is not None:
                acc[col].append(abs(want - have))
        if req.chords is not None:
            roots = {c.root for c in got["chords"]}
            strict = sum(1 for c in req.chords if c in got["chords"]) / len(req.chords)
            rooty = sum(1 for c in req.chords if c.root in roots) / len(req.chords)
            acc["sc"].append(strict)
            acc["rc"].append(rooty)

    def mean(values: list[float]) -> Optional[float]:
        return sum(values) / len(values) if values else None

    return ControlReport(
        instrument_jaccard=mean(acc["i"]),
        mean_pitch_err=mean(acc["mp"]),
        mean_tempo_err=mean(acc["mt"]),
        mean_velocity_err=mean(acc["mv"]),
        mean_duration_err=mean(acc["md"]),
        chord_strict_recall=mean(acc["sc"]),
        chord_root_recall=mean(acc["rc"]),
        n_pairs=len(pairs),
        n_excluded_syntax=n_excluded_syntax,
    )


# --------------------------------------------------------------------------
# the full evaluation row

METRIC_COLUMNS = (
    "perplexity",
    "density",
    "coverage",
    "instrument_jaccard",
    "mean_pitch_err",
    "mean_tempo_err",
    "mean_velocity_err",
    "mean_duration_err",
    "chord_strict_recall",
    "chord_root_recall",
)

ROW_COLUMNS = ("input_set",) + METRIC_COLUMNS + ("n_excluded_syntax",)


def evaluate_table(
    model: DecoderModel,
    dataset: Sequence[tuple[ConditionSet, TokenSequence]],
    input_set: str = "superset",
    *,
    drop_probability: float = 0.5,
    subset_seed: int = 0,
    sampler: Optional[SamplerConfig] = None,
    gen_seed: int = 1,
    gen_items: Optional[int] = None,
    knn_k: int = 5,
    bpe_model: Optional[BpeModel] = None,
) -> dict:
    """One results row for a model under one conditioning regime.

    input_set "superset" feeds each window's full metadata; "subset" drops
    categories with the given probability (seeded, shared across calls so
    different models see identical subsets). Perplexity uses the whole
    dataset; generation-based metrics use the first gen_items windows (all
    by default). Samples failing syntax validation are excluded from the
    metrics and counted.
    """
    if input_set not in ("superset", "subset"):
        raise ValueError(f"unknown input regime: {input_set!r}")
    if sampler is None:
        sampler = SamplerConfig(mode="greedy", grammar_mask=False)

    rng = random.Random(subset_seed)
    policy = DropPolicy(drop_probability, subset_seed)
    fed: list[ConditionSet] = []
    for conds, _ in dataset:
        fed.append(apply_drop(conds, policy, rng) if input_set == "subset" else conds)

    examples = [build_example(c, body, bpe_model) for c, (_, body) in zip(fed, dataset)]
    ppl = perplexity(model, examples)

    n_gen = len(dataset) if gen_items is None else min(gen_items, len(dataset))
    pairs: list[tuple[ConditionSet, NoteSong]] = []
    real_embs: list[np.ndarray] = []
    gen_embs: list[np.ndarray] = []
    n_excluded = 0
    with torch.no_grad():
        for i in range(n_gen):
            real_embs.append(model.embed(examples[i].ids).numpy())
            body = generate(model, fed[i], sampler, seed=gen_seed + i, bpe_model=bpe_model)
            verdict = validate_syntax(body.ids)
            if not verdict.valid:
                n_excluded += 1
                continue
            pairs.append((fed[i], detokenize(body)))
            gen_embs.append(
                model.embed(build_example(fed[i], body, bpe_model).ids).numpy()
            )

    density = coverage = float("nan")
    if pairs:
        balance = random.Random(subset_seed + 1)
        m = min(len(real_embs), len(gen_embs))
        idx_r = list(range(len(real_embs)))
        idx_g = list(range(len(gen_embs)))
        balance.shuffle(idx_r)
        balance.shuffle(idx_g)
        real = np.stack([real_embs[i] for i in sorted(idx_r[:m])])
        gen = np.stack([gen_embs[i] for i in sorted(idx_g[:m])])
        if m > knn_k:
            try:
                density, coverage = density_coverage(real, gen, knn_k)
            except DegenerateManifold:
                density = coverage = float("nan")

    control = controllability(pairs, n_excluded)
    row = {"input_set": input_set, "perplexity": ppl, "density": density, "coverage": coverage}
    for col, value in (
        ("instrument_jaccard", control.instrument_jaccard),
        ("mean_pitch_err", control.mean_pitch_err),
        ("mean_tempo_err", control.mean_tempo_err),
        ("mean_velocity_err", control.mean_velocity_err),
        ("mean_duration_err", control.mean_duration_err),
        ("chord_strict_recall", control.chord_strict_recall),
        ("chord_root_recall", control.chord_root_recall),
    ):
        row[col] = float("nan") if value is None else value
    row["n_excluded_syntax"] = n_excluded
    return row


def write_rows_csv(rows: Sequence[dict], path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=ROW_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k) for k in ROW_COLUMNS})


def row_to_json_dict(row: dict) -> dict:
    """Undefined metrics travel as nan internally but as null in JSON."""
    out = {}
    for key, value in row.items():
        if isinstance(value, float) and math.isnan(value):
            out[key] = None
        else:
            out[key] = value
    return out


def write_rows_json(rows: Sequence[dict], path: str) -> None:
    with open(path, "w") as fh:
        json.dump([row_to_json_dict(r) for r in rows], fh, indent=2, allow_nan=False)
        fh.write("\n")
