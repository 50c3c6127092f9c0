"""HTTP service exposing generation, rendering, and vocabulary lookups.

The app is stateless apart from the model loaded at startup. Endpoints:

  GET  /api/health      readiness flag
  GET  /api/vocab       full event inventory plus bin tables
  GET  /api/model-info  architecture, parameter count, vocabulary hash
  POST /api/generate    sample 4-bar pieces from a condition subset
  POST /api/render      note list JSON to standard MIDI bytes

Every MIDI payload the service returns re-parses to the note list shipped
alongside it: generated songs are passed through a write/parse cycle once
before the response is assembled, so client edits can round trip through
/api/render byte for byte.
"""

from __future__ import annotations

import base64
import dataclasses
import secrets
from typing import Literal, Optional

from fastapi import FastAPI
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .conditions import ConditionSet, EmptySong, extract_metadata
from .midi_io import NoteSong, parse_midi, write_midi
from .model import SequenceTooLong, load_checkpoint
from .sampling import NoValidToken, SamplerConfig, generate
from .tokenizer import detokenize, validate_syntax
from .vocab import (
    DURATION_VALUES,
    N_EVENTS,
    TEMPO_CENTERS,
    VELOCITY_CENTERS,
    VOCAB,
)

MAX_SAMPLES = 16
MAX_REPETITIONS = 1024
MAX_NEW_TOKENS = 1024


class GenerateRequest(BaseModel):
    conditions: dict = Field(default_factory=dict)
    num_samples: int = Field(default=1, ge=1, le=MAX_SAMPLES)
    repetitions: int = Field(default=1, ge=1, le=MAX_REPETITIONS)
    temperature: float = Field(default=1.0, gt=0.0)
    top_k: int = Field(default=5, ge=1)
    mode: Literal["greedy", "top_k"] = "top_k"
    seed: Optional[int] = None


class RenderRequest(BaseModel):
    notes: dict
    repetitions: int = Field(default=1, ge=1, le=MAX_REPETITIONS)


def _error(status: int, category: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"category": category, "message": message})


def _instrument_jaccard(requested: frozenset[int], detected: frozenset[int]) -> float:
    union = requested | detected
    if not union:
        return 0.0
    return len(requested & detected) / len(union)


def create_app(model_path: Optional[str] = None, *, webui_dir: Optional[str] = None) -> FastAPI:
    """Build the app, loading the checkpoint now so a bad one fails startup."""
    app = FastAPI(title="motifgen", docs_url=None, redoc_url=None)
    if model_path is not None:
        model, bpe_model, header = load_checkpoint(
            model_path, expected_vocab_hash=VOCAB.hash_hex()
        )
    else:
        model = bpe_model = header = None
    app.state.model = model
    app.state.bpe_model = bpe_model
    app.state.header = header

    @app.exception_handler(RequestValidationError)
    async def _on_bad_request(request, exc):  # noqa: ANN001 — fastapi signature
        first = exc.errors()[0]
        path = ".".join(str(p) for p in first.get("loc", ()) if p != "body")
        return _error(400, "InvalidRequest", f"{path or 'request'}: {first['msg']}")

    @app.get("/api/health")
    def health() -> dict:
        return {"ready": app.state.model is not None}

    @app.get("/api/vocab")
    def vocab() -> dict:
        payload = VOCAB.to_json_dict()
        payload["event_count"] = N_EVENTS
        payload["vocab_size"] = VOCAB.size
        payload["sha256"] = VOCAB.hash_hex()
        payload["tempo_centers"] = list(TEMPO_CENTERS)
        payload["duration_values"] = list(DURATION_VALUES)
        payload["velocity_centers"] = list(VELOCITY_CENTERS)
        return payload

    @app.get("/api/model-info")
    def model_info():
        if app.state.model is None:
            return _error(503, "ModelNotLoaded", "start the service with a model checkpoint")
        cfg = dataclasses.asdict(app.state.model.config)
        bpe = app.state.bpe_model
        return {
            "config": cfg,
            "vocab_sha256": app.state.header["vocab_sha256"],
            "n_params": app.state.model.n_params(),
            "max_seq_len": cfg["max_seq_len"],
            "bpe": None
            if bpe is None
            else {"vocab_size": bpe.vocab_size, "n_merges": len(bpe.merges)},
        }

    @app.post("/api/generate")
    def api_generate(req: GenerateRequest):
        if app.state.model is None:
            return _error(503, "ModelNotLoaded", "start the service with a model checkpoint")
        try:
            conds = ConditionSet.from_json_dict(req.conditions)
        except ValueError as exc:
            return _error(400, "InvalidRequest", str(exc))
        sampler = SamplerConfig(
            mode=req.mode,
            top_k=req.top_k,
            temperature=req.temperature,
            max_new_tokens=MAX_NEW_TOKENS,
            grammar_mask=True,
        )
        seed = req.seed if req.seed is not None else secrets.randbelow(2**31)
        samples = []
        jaccards = []
        for i in range(req.num_samples):
            try:
                seq = generate(
                    app.state.model, conds, sampler, seed=seed + i, bpe_model=app.state.bpe_model
                )
            except NoValidToken as exc:
                return _error(500, "NoValidToken", f"sample {i}: {exc}")
            except SequenceTooLong as exc:
                return _error(400, "SequenceTooLong", str(exc))
            if not validate_syntax(seq.ids).valid:
                samples.append(
                    {
                        "midi_base64": None,
                        "notes": None,
                        "detected": None,
                        "token_count": len(seq.ids),
                        "syntax_valid": False,
                    }
                )
                continue
            # One write/parse cycle up front so the notes in the response are
            # exactly what a client will read back out of the MIDI bytes.
            song = parse_midi(write_midi(detokenize(seq), 1))[0]
            try:
                detected = extract_metadata(song).to_json_dict()
            except EmptySong:
                detected = {}
            if conds.instruments is not None:
                jaccards.append(
                    _instrument_jaccard(conds.instruments, frozenset(song.instrument_classes()))
                )
            samples.append(
                {
                    "midi_base64": base64.b64encode(write_midi(song, req.repetitions)).decode(
                        "ascii"
                    ),
                    "notes": song.to_json_dict(),
                    "detected": detected,
                    "token_count": len(seq.ids),
                    "syntax_valid": True,
                }
            )
        return {
            "seed": seed,
            "samples": samples,
            "instrument_jaccard_mean": (sum(jaccards) / len(jaccards)) if jaccards else None,
        }

    @app.post("/api/render")
    def api_render(req: RenderRequest):
        try:
            song = NoteSong.from_json_dict(req.notes)
        except ValueError as exc:
            return _error(400, "InvalidSong", str(exc))
        return Response(content=write_midi(song, req.repetitions), media_type="audio/midi")

    if webui_dir is not None:
        app.mount("/", StaticFiles(directory=webui_dir, html=True), name="webui")
    return app
