"""HTTP service tests over the in-process test client."""

import base64
import io

import pytest
import torch
from fastapi.testclient import TestClient

from motifgen.midi_io import parse_midi
from motifgen.model import DecoderModel, ModelConfig, save_checkpoint
from motifgen.service import create_app
from motifgen.vocab import N_EVENTS, VOCAB


@pytest.fixture(scope="module")
def client(micro):
    return TestClient(create_app(str(micro.ckpt_path)))


@pytest.fixture(scope="module")
def bare_client():
    return TestClient(create_app(None))


class TestHealth:
    def test_ready_with_model(self, client):
        assert client.get("/api/health").json() == {"ready": True}

    def test_not_ready_without_model(self, bare_client):
        assert bare_client.get("/api/health").json() == {"ready": False}


class TestVocabEndpoint:
    def test_inventory_and_tables(self, bare_client):
        payload = bare_client.get("/api/vocab").json()
        assert payload["event_count"] == N_EVENTS == 528
        assert payload["vocab_size"] == VOCAB.size == 532
        assert payload["sha256"] == VOCAB.hash_hex()
        assert len(payload["tempo_centers"]) == 32
        assert len(payload["duration_values"]) == 58
        assert len(payload["velocity_centers"]) == 32


class TestModelInfo:
    def test_reports_architecture(self, client, micro):
        info = client.get("/api/model-info").json()
        assert info["n_params"] == micro.model.n_params()
        assert info["config"]["d_model"] == micro.model_cfg.d_model
        assert info["vocab_sha256"] == VOCAB.hash_hex()
        assert info["bpe"] is None
        assert info["max_seq_len"] == micro.model_cfg.max_seq_len

    def test_503_without_model(self, bare_client):
        resp = bare_client.get("/api/model-info")
        assert resp.status_code == 503
        assert resp.json()["category"] == "ModelNotLoaded"


class TestGenerate:
    def test_unconditioned_samples_round_trip(self, client):
        resp = client.post(
            "/api/generate", json={"conditions": {}, "num_samples": 2, "seed": 7}
        )
        assert resp.status_code == 200
        body = resp.json()
        assert body["seed"] == 7
        assert len(body["samples"]) == 2
        for sample in body["samples"]:
            assert isinstance(sample["token_count"], int)
            if not sample["syntax_valid"]:
                assert sample["midi_base64"] is None
                continue
            raw = base64.b64decode(sample["midi_base64"])
            songs = parse_midi(raw)
            assert len(songs) == 1
            # the notes field is exactly what the MIDI bytes parse back to
            assert songs[0].to_json_dict() == sample["notes"]

    def test_fixed_seed_is_deterministic(self, client):
        req = {"conditions": {}, "num_samples": 1, "seed": 11}
        a = client.post("/api/generate", json=req).json()
        b = client.post("/api/generate", json=req).json()
        assert a == b

    def test_missing_seed_gets_assigned(self, client):
        body = client.post("/api/generate", json={"conditions": {}}).json()
        assert isinstance(body["seed"], int)

    def test_instrument_conditions_report_jaccard(self, client):
        resp = client.post(
            "/api/generate",
            json={"conditions": {"instruments": [0]}, "num_samples": 1, "seed": 3},
        )
        body = resp.json()
        valid = [s for s in body["samples"] if s["syntax_valid"]]
        if valid:
            assert 0.0 <= body["instrument_jaccard_mean"] <= 1.0

    def test_repetitions_tile_the_midi(self, client):
        resp = client.post(
            "/api/generate",
            json={"conditions": {}, "num_samples": 1, "seed": 5, "repetitions": 3},
        ).json()
        sample = resp["samples"][0]
        if sample["syntax_valid"]:
            songs = parse_midi(base64.b64decode(sample["midi_base64"]))
            assert len(songs) == 3
            assert songs[0] == songs[1] == songs[2]

    def test_bad_conditions_are_a_400(self, client):
        resp = client.post(
            "/api/generate", json={"conditions": {"instruments": []}}
        )
        assert resp.status_code == 400
        assert resp.json()["category"] == "InvalidRequest"

    def test_unknown_condition_field_is_a_400(self, client):
        resp = client.post(
            "/api/generate", json={"conditions": {"mood": "sad"}}
        )
        assert resp.status_code == 400

    def test_pydantic_validation_reports_the_field(self, client):
        resp = client.post("/api/generate", json={"num_samples": 0})
        assert resp.status_code == 400
        body = resp.json()
        assert body["category"] == "InvalidRequest"
        assert "num_samples" in body["message"]

    def test_503_without_model(self, bare_client):
        resp = bare_client.post("/api/generate", json={"conditions": {}})
        assert resp.status_code == 503
        assert resp.json()["category"] == "ModelNotLoaded"

    def test_overflowing_prefix_is_a_400(self, tmp_path):
        torch.manual_seed(0)
        cramped = DecoderModel(
            ModelConfig(vocab_size=VOCAB.size, n_layers=1, d_model=16,
                        n_heads=2, d_head=8, max_seq_len=8)
        )
        path = tmp_path / "cramped.mgc"
        save_checkpoint(cramped, path, VOCAB.hash_hex())
        app_client = TestClient(create_app(str(path)))
        resp = app_client.post(
            "/api/generate",
            json={
                "conditions": {
                    "instruments": [0, 1, 2],
                    "mean_tempo": 120, "mean_pitch": 60,
                    "mean_velocity": 80, "mean_duration": 12,
                },
                "seed": 1,
            },
        )
        assert resp.status_code == 400
        assert resp.json()["category"] == "SequenceTooLong"


class TestRender:
    def generated_notes(self, client):
        body = client.post(
            "/api/generate", json={"conditions": {}, "num_samples": 1, "seed": 13}
        ).json()
        sample = body["samples"][0]
        if not sample["syntax_valid"]:
            pytest.skip("sampled an unterminated sequence at this seed")
        return sample

    def test_render_matches_generate_bytes(self, client):
        sample = self.generated_notes(client)
        resp = client.post(
            "/api/render", json={"notes": sample["notes"], "repetitions": 1}
        )
        assert resp.status_code == 200
        assert resp.headers["content-type"].startswith("audio/midi")
        assert resp.content == base64.b64decode(sample["midi_base64"])

    def test_render_repetitions_tile(self, client):
        sample = self.generated_notes(client)
        resp = client.post(
            "/api/render", json={"notes": sample["notes"], "repetitions": 2}
        )
        songs = parse_midi(resp.content)
        assert len(songs) == 2

    def test_invalid_song_is_a_400(self, client):
        resp = client.post("/api/render", json={"notes": {"notes": "nope"}})
        assert resp.status_code == 400
        assert resp.json()["category"] == "InvalidSong"

    def test_missing_notes_field_is_a_400(self, client):
        resp = client.post("/api/render", json={"repetitions": 1})
        assert resp.status_code == 400
        assert resp.json()["category"] == "InvalidRequest"


class TestStaticMount:
    def test_serves_the_ui_when_given_a_directory(self, tmp_path):
        (tmp_path / "index.html").write_text("<h1>console</h1>")
        app_client = TestClient(create_app(None, webui_dir=str(tmp_path)))
        resp = app_client.get("/")
        assert resp.status_code == 200
        assert "console" in resp.text

    def test_no_mount_without_a_directory(self, bare_client):
        assert bare_client.get("/").status_code == 404
