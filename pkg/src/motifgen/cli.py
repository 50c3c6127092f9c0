"""Command-line interface: corpus preparation, training, generation, serving.

Every subcommand prints a one-object JSON summary to stdout on success.
Failures print {"category": <exception class>, "message": ...} to stderr
and exit non-zero, so scripts can branch on the category without parsing
prose.

File formats used between stages:

  tokens    text, one window per line, space-separated decimal token ids
  metadata  JSON lines, one condition object per window, same line order
  bpe       JSON produced by bpe-train
  config    JSON object {"model": {...}, "train": {...}} (TOML accepted
            on Python 3.11+)
  model     binary checkpoint with the vocabulary hash and optional BPE
            merge table embedded
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Optional

from .bpe import BpeModel, bpe_encode, train_bpe
from .conditions import ConditionSet, extract_metadata
from .midi_io import MalformedMidi, UnsupportedTimeSignature, parse_midi, write_midi
from .metrics import (
    ROW_COLUMNS,
    evaluate_table,
    row_to_json_dict,
    write_rows_csv,
    write_rows_json,
)
from .model import ModelConfig, load_checkpoint, save_checkpoint
from .sampling import SamplerConfig, generate
from .synthetic import synth_corpus
from .tokenizer import (
    TokenSequence,
    detokenize,
    sequences_to_text,
    text_to_sequences,
    tokenize,
    validate_syntax,
)
from .training import TrainConfig, train, write_step_log
from .vocab import VOCAB

MODEL_ENV_VAR = "MOTIFGEN_MODEL"


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage errors in the same JSON shape as runtime ones."""

    def error(self, message: str) -> None:  # type: ignore[override]
        print(json.dumps({"category": "UsageError", "message": message}), file=sys.stderr)
        raise SystemExit(2)


def _emit(summary: dict) -> None:
    print(json.dumps(summary, sort_keys=True))


def _read_tokens(path: str) -> list[TokenSequence]:
    with open(path) as fh:
        return text_to_sequences(fh.read())


def _read_metadata(path: str) -> list[ConditionSet]:
    out = []
    with open(path) as fh:
        for i, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(ConditionSet.from_json_dict(json.loads(line)))
            except (json.JSONDecodeError, ValueError) as exc:
                raise ValueError(f"{path}:{i + 1}: {exc}") from exc
    return out


def _read_dataset(tokens_path: str, metadata_path: str) -> list[tuple[ConditionSet, TokenSequence]]:
    tokens = _read_tokens(tokens_path)
    metadata = _read_metadata(metadata_path)
    if len(tokens) != len(metadata):
        raise ValueError(
            f"{tokens_path} has {len(tokens)} windows but "
            f"{metadata_path} has {len(metadata)} entries"
        )
    return list(zip(metadata, tokens))


def _read_config(path: str) -> dict:
    if path.endswith(".toml"):
        try:
            import tomllib
        except ImportError as exc:
            raise ValueError("TOML configs need Python 3.11+; use JSON here") from exc
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    with open(path) as fh:
        return json.load(fh)


def _read_conditions(arg: str) -> ConditionSet:
    text = arg
    if arg.startswith("@"):
        with open(arg[1:]) as fh:
            text = fh.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"conditions: not valid JSON: {exc}") from exc
    return ConditionSet.from_json_dict(data)


def _load_bpe(path: Optional[str]) -> Optional[BpeModel]:
    if path is None:
        return None
    with open(path) as fh:
        return BpeModel.from_json(fh.read())


# --------------------------------------------------------------------------
# subcommands


def _cmd_synth(args: argparse.Namespace) -> None:
    corpus = synth_corpus(args.count, seed=args.seed)
    if args.out_dir is not None:
        os.makedirs(args.out_dir, exist_ok=True)
        for i, song in enumerate(corpus):
            with open(os.path.join(args.out_dir, f"piece_{i:05d}.mid"), "wb") as fh:
                fh.write(write_midi(song, 1))
        _emit({"command": "synth", "count": len(corpus), "out_dir": args.out_dir})
        return
    seqs = [tokenize(song) for song in corpus]
    with open(args.out_tokens, "w") as fh:
        fh.write(sequences_to_text(seqs))
    with open(args.out_metadata, "w") as fh:
        for song in corpus:
            fh.write(json.dumps(extract_metadata(song).to_json_dict(), sort_keys=True) + "\n")
    _emit(
        {
            "command": "synth",
            "count": len(corpus),
            "out_tokens": args.out_tokens,
            "out_metadata": args.out_metadata,
        }
    )


def _cmd_ingest(args: argparse.Namespace) -> None:
    names = sorted(
        n for n in os.listdir(args.midi_dir) if n.lower().endswith((".mid", ".midi"))
    )
    windows = []
    skipped_malformed = 0
    skipped_time_signature = 0
    ingested = 0
    for name in names:
        with open(os.path.join(args.midi_dir, name), "rb") as fh:
            data = fh.read()
        try:
            songs = parse_midi(data)
        except MalformedMidi:
            skipped_malformed += 1
            continue
        except UnsupportedTimeSignature:
            skipped_time_signature += 1
            continue
        ingested += 1
        windows.extend(songs)
    with open(args.out_tokens, "w") as fh:
        fh.write(sequences_to_text(tokenize(song) for song in windows))
    with open(args.out_metadata, "w") as fh:
        for song in windows:
            fh.write(json.dumps(extract_metadata(song).to_json_dict(), sort_keys=True) + "\n")
    _emit(
        {
            "command": "ingest",
            "files": len(names),
            "ingested_files": ingested,
            "skipped_malformed": skipped_malformed,
            "skipped_time_signature": skipped_time_signature,
            "windows": len(windows),
        }
    )


def _cmd_tokenize(args: argparse.Namespace) -> None:
    with open(args.midi, "rb") as fh:
        songs = parse_midi(fh.read())
    text = sequences_to_text(tokenize(song) for song in songs)
    if args.out is None:
        sys.stdout.write(text)
    else:
        with open(args.out, "w") as fh:
            fh.write(text)
        _emit({"command": "tokenize", "windows": len(songs), "out": args.out})


def _cmd_bpe_train(args: argparse.Namespace) -> None:
    corpus = _read_tokens(args.tokens)
    model = train_bpe(corpus, target_ratio=args.target_ratio)
    with open(args.out, "w") as fh:
        fh.write(model.to_json())
    base = sum(len(s.ids) for s in corpus)
    encoded = sum(len(bpe_encode(model, s).ids) for s in corpus)
    _emit(
        {
            "command": "bpe-train",
            "n_merges": len(model.merges),
            "achieved_ratio": encoded / base,
            "out": args.out,
        }
    )


def _cmd_train(args: argparse.Namespace) -> None:
    dataset = _read_dataset(args.tokens, args.metadata)
    config = _read_config(args.config)
    bpe_model = _load_bpe(args.bpe)
    model_data = dict(config.get("model", {}))
    if bpe_model is not None and "vocab_size" not in model_data:
        model_data["vocab_size"] = bpe_model.vocab_size
    model_cfg = ModelConfig.from_json_dict(model_data)
    train_data = dict(config.get("train", {}))
    if args.seed is not None:
        train_data["seed"] = args.seed
    train_cfg = TrainConfig.from_json_dict(train_data)
    model, log = train(model_cfg, train_cfg, dataset, bpe_model, progress=args.progress)
    save_checkpoint(model, args.out, VOCAB.hash_hex(), bpe_model)
    if args.log is not None:
        write_step_log(log, args.log)
    _emit(
        {
            "command": "train",
            "steps": len(log),
            "final_loss": log[-1][2],
            "n_params": model.n_params(),
            "out": args.out,
        }
    )


def _cmd_generate(args: argparse.Namespace) -> None:
    model, bpe_model, _ = load_checkpoint(args.model, expected_vocab_hash=VOCAB.hash_hex())
    conds = _read_conditions(args.conditions)
    sampler = SamplerConfig(
        mode=args.mode,
        top_k=args.top_k,
        temperature=args.temperature,
        max_new_tokens=args.max_new_tokens,
        grammar_mask=not args.no_grammar_mask,
    )
    root, ext = os.path.splitext(args.out)
    ext = ext or ".mid"
    written = []
    invalid = 0
    for i in range(args.num_samples):
        seq = generate(model, conds, sampler, seed=args.seed + i, bpe_model=bpe_model)
        if not validate_syntax(seq.ids).valid:
            invalid += 1
            continue
        path = f"{root}{ext}" if args.num_samples == 1 else f"{root}_{i:02d}{ext}"
        with open(path, "wb") as fh:
            fh.write(write_midi(detokenize(seq), args.repetitions))
        written.append(path)
    _emit(
        {
            "command": "generate",
            "written": written,
            "invalid": invalid,
            "seed": args.seed,
        }
    )


def _cmd_evaluate(args: argparse.Namespace) -> None:
    model, bpe_model, _ = load_checkpoint(args.model, expected_vocab_hash=VOCAB.hash_hex())
    dataset = _read_dataset(args.tokens, args.metadata)
    row = evaluate_table(
        model,
        dataset,
        args.regime,
        drop_probability=args.drop_prob,
        subset_seed=args.seed,
        gen_items=args.gen_items,
        bpe_model=bpe_model,
    )
    if args.out_csv is not None:
        write_rows_csv([row], args.out_csv)
    if args.out_json is not None:
        write_rows_json([row], args.out_json)
    clean = row_to_json_dict(row)
    _emit({"command": "evaluate", **{k: clean[k] for k in ROW_COLUMNS}})


def _cmd_serve(args: argparse.Namespace) -> None:
    import uvicorn

    from .service import create_app

    model_path = args.model or os.environ.get(MODEL_ENV_VAR)
    if model_path is None:
        raise ValueError(f"no model: pass --model or set {MODEL_ENV_VAR}")
    app = create_app(model_path, webui_dir=args.webui)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")


# --------------------------------------------------------------------------
# wiring


def build_parser() -> _Parser:
    parser = _Parser(prog="motifgen", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a deterministic synthetic corpus")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--out-dir", help="write one MIDI file per piece")
    group.add_argument("--out-tokens", help="write token lines (needs --out-metadata)")
    p.add_argument("--out-metadata")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("ingest", help="MIDI directory to token and metadata files")
    p.add_argument("--midi-dir", required=True)
    p.add_argument("--out-tokens", required=True)
    p.add_argument("--out-metadata", required=True)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("tokenize", help="print token lines for one MIDI file")
    p.add_argument("--midi", required=True)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_tokenize)

    p = sub.add_parser("bpe-train", help="learn a BPE merge table from token lines")
    p.add_argument("--tokens", required=True)
    p.add_argument("--target-ratio", type=float, default=0.66)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_bpe_train)

    p = sub.add_parser("train", help="train a model from token and metadata files")
    p.add_argument("--tokens", required=True)
    p.add_argument("--metadata", required=True)
    p.add_argument("--config", required=True, help='JSON {"model": {...}, "train": {...}}')
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--log", help="per-step CSV log path")
    p.add_argument("--bpe", help="BPE model JSON from bpe-train")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--progress", type=int, help="print a progress line every N steps")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("generate", help="sample MIDI from a checkpoint")
    p.add_argument("--model", required=True)
    p.add_argument("--conditions", default="{}", help="JSON object or @file")
    p.add_argument("--out", required=True, help="output path; numbered if num-samples > 1")
    p.add_argument("--num-samples", type=int, default=1)
    p.add_argument("--mode", choices=("top_k", "greedy"), default="top_k")
    p.add_argument("--top-k", type=int, default=5)
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--repetitions", type=int, default=1)
    p.add_argument("--no-grammar-mask", action="store_true")
    p.add_argument("--max-new-tokens", type=int, default=1024)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("evaluate", help="write a one-row metrics report")
    p.add_argument("--model", required=True)
    p.add_argument("--tokens", required=True)
    p.add_argument("--metadata", required=True)
    p.add_argument("--regime", choices=("superset", "subset"), default="superset")
    p.add_argument("--drop-prob", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--gen-items", type=int)
    p.add_argument("--out-csv")
    p.add_argument("--out-json")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--model", help=f"checkpoint path (default: ${MODEL_ENV_VAR})")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--webui", help="static directory to serve at /")
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "synth" and args.out_tokens is not None and args.out_metadata is None:
        parser.error("--out-tokens needs --out-metadata")
    try:
        args.func(args)
    except Exception as exc:  # noqa: BLE001 — single reporting point for scripts
        print(
            json.dumps({"category": type(exc).__name__, "message": str(exc)}),
            file=sys.stderr,
        )
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
