"""Transformer unit tests: config checks, layer math, decoding, checkpoints."""

import dataclasses
import math
import struct

import numpy as np
import pytest
import torch

from motifgen.bpe import BpeModel
from motifgen.model import (
    CheckpointError,
    DecoderModel,
    EmptyMask,
    ModelConfig,
    RMSNorm,
    Rotary,
    SequenceTooLong,
    SwiGLU,
    VocabHashMismatch,
    load_checkpoint,
    save_checkpoint,
)
from motifgen.vocab import PAD, VOCAB, VOCAB_SIZE


def tiny_config(**overrides) -> ModelConfig:
    base = dict(
        vocab_size=64, n_layers=2, d_model=32, n_heads=2, d_head=16, max_seq_len=48
    )
    base.update(overrides)
    return ModelConfig(**base)


def tiny_model(seed: int = 0, **overrides) -> DecoderModel:
    torch.manual_seed(seed)
    return DecoderModel(tiny_config(**overrides)).eval()


def rand_ids(n: int, vocab: int = 64, seed: int = 1) -> torch.Tensor:
    g = torch.Generator().manual_seed(seed)
    return torch.randint(0, vocab, (n,), generator=g)


class TestModelConfig:
    def test_defaults(self):
        cfg = ModelConfig()
        assert cfg.vocab_size == VOCAB_SIZE == 532
        assert (cfg.n_layers, cfg.d_model, cfg.n_heads, cfg.d_head) == (4, 128, 4, 32)
        assert cfg.max_seq_len == 512

    @pytest.mark.parametrize(
        "d_model,n_heads,d_head,expected",
        [(16, 2, 8, 48), (24, 2, 12, 64), (32, 2, 16, 88), (96, 4, 24, 256), (128, 4, 32, 344)],
    )
    def test_ffn_width_values(self, d_model, n_heads, d_head, expected):
        cfg = ModelConfig(d_model=d_model, n_heads=n_heads, d_head=d_head)
        assert cfg.ffn_width == expected

    @pytest.mark.parametrize("d_model,n_heads,d_head", [(16, 2, 8), (64, 4, 16), (128, 4, 32)])
    def test_ffn_width_is_smallest_multiple_of_8_covering_8_thirds(
        self, d_model, n_heads, d_head
    ):
        width = ModelConfig(d_model=d_model, n_heads=n_heads, d_head=d_head).ffn_width
        assert width % 8 == 0
        assert 3 * width >= 8 * d_model
        assert 3 * (width - 8) < 8 * d_model

    def test_explicit_ffn_hidden_wins(self):
        assert tiny_config(ffn_hidden=200).ffn_width == 200

    @pytest.mark.parametrize(
        "overrides",
        [
            {"d_model": 33},
            {"n_heads": 3},
            {"d_head": 15, "d_model": 30},
            {"vocab_size": 4},
            {"n_layers": 0},
            {"max_seq_len": 1},
        ],
    )
    def test_invalid_configs_rejected(self, overrides):
        with pytest.raises(ValueError):
            tiny_config(**overrides)

    def test_config_is_frozen(self):
        cfg = tiny_config()
        with pytest.raises(dataclasses.FrozenInstanceError):
            cfg.d_model = 64

    def test_json_round_trip(self):
        cfg = tiny_config(ffn_hidden=96, rope_base=500.0)
        assert ModelConfig.from_json_dict(cfg.to_json_dict()) == cfg

    def test_unknown_json_field_rejected(self):
        data = tiny_config().to_json_dict()
        data["dropout"] = 0.1
        with pytest.raises(ValueError, match="dropout"):
            ModelConfig.from_json_dict(data)


class TestRMSNorm:
    def test_matches_reference_formula(self):
        torch.manual_seed(2)
        norm = RMSNorm(16, eps=1e-8).double()
        with torch.no_grad():
            norm.weight.copy_(torch.randn(16, dtype=torch.float64))
        x = torch.randn(3, 5, 16, dtype=torch.float64)
        with torch.no_grad():
            got = norm(x).numpy()

        xn = x.numpy()
        wn = norm.weight.detach().numpy()
        rms = np.sqrt(np.mean(xn**2, axis=-1, keepdims=True) + 1e-8)
        assert np.allclose(got, xn / rms * wn, atol=1e-12, rtol=0)

    @pytest.mark.parametrize("scale", [0.5, 2.0, 10.0, 100.0])
    def test_scale_invariance(self, scale):
        torch.manual_seed(3)
        norm = RMSNorm(24, eps=1e-8).double()
        x = torch.randn(4, 24, dtype=torch.float64)
        with torch.no_grad():
            base = norm(x)
            scaled = norm(x * scale)
        # eps keeps this from being an identity; at these magnitudes the
        # shift is below 1e-7 even for the 0.5 downscale
        assert torch.allclose(scaled, base, atol=1e-7, rtol=0)

    def test_scale_invariance_float32_within_1e6(self):
        torch.manual_seed(4)
        norm = RMSNorm(32, eps=1e-8)
        x = torch.randn(8, 32)
        with torch.no_grad():
            assert torch.allclose(norm(x * 3.0), norm(x), atol=1e-6, rtol=0)

    def test_weight_scales_output_linearly(self):
        norm = RMSNorm(8, eps=1e-8)
        x = torch.randn(2, 8)
        with torch.no_grad():
            once = norm(x)
            norm.weight.mul_(2.0)
            assert torch.allclose(norm(x), 2.0 * once, atol=0, rtol=0)


class TestRotary:
    def test_hand_rotation_at_offset(self):
        # d_head 4 has pair frequencies [1, base**-0.5]; position 3 rotates
        # pair (x0, x1) by 3 rad and pair (x2, x3) by 3 * base**-0.5 rad.
        base = 100.0
        rope = Rotary(d_head=4, max_seq_len=8, base=base)
        x = torch.tensor([1.0, 2.0, 0.5, 3.0]).view(1, 1, 1, 4)
        got = rope(x, offset=3).view(4)

        a0, a1 = 3.0, 3.0 * base**-0.5
        expected = torch.tensor(
            [
                1.0 * math.cos(a0) - 2.0 * math.sin(a0),
                1.0 * math.sin(a0) + 2.0 * math.cos(a0),
                0.5 * math.cos(a1) - 3.0 * math.sin(a1),
                0.5 * math.sin(a1) + 3.0 * math.cos(a1),
            ]
        )
        assert torch.allclose(got, expected, atol=1e-6, rtol=0)

    def test_offset_slices_the_same_table(self):
        torch.manual_seed(5)
        rope = Rotary(d_head=8, max_seq_len=32, base=10000.0)
        x = torch.randn(1, 2, 12, 8)
        full = rope(x, offset=0)
        part = rope(x[:, :, 4:, :], offset=4)
        assert torch.equal(part, full[:, :, 4:, :])

    def test_dot_products_depend_only_on_relative_offset(self):
        torch.manual_seed(6)
        rope = Rotary(d_head=8, max_seq_len=64, base=10000.0)
        q = torch.randn(1, 1, 1, 8)
        k = torch.randn(1, 1, 1, 8)

        def dot(i, j):
            qi = rope(q, offset=i).view(8)
            kj = rope(k, offset=j).view(8)
            return float(qi @ kj)

        for shift in (1, 7, 23):
            assert dot(9, 4) == pytest.approx(dot(9 + shift, 4 + shift), abs=1e-5)

    def test_rotation_preserves_norms(self):
        torch.manual_seed(7)
        rope = Rotary(d_head=16, max_seq_len=16, base=10000.0)
        x = torch.randn(2, 2, 10, 16)
        y = rope(x, offset=3)
        assert torch.allclose(
            y.pow(2).sum(dim=-1), x.pow(2).sum(dim=-1), atol=1e-5, rtol=0
        )


class TestCausality:
    def test_prefix_logits_bit_exact_under_suffix_change(self):
        model = tiny_model()
        ids_a = rand_ids(24, seed=10)
        ids_b = ids_a.clone()
        ids_b[12:] = rand_ids(12, seed=11)
        assert not torch.equal(ids_a, ids_b)
        with torch.no_grad():
            la = model.logits(ids_a)
            lb = model.logits(ids_b)
        assert torch.equal(la[:, :12], lb[:, :12])
        assert not torch.allclose(la[:, 12:], lb[:, 12:])

    def test_prefix_run_matches_full_run(self):
        model = tiny_model()
        ids = rand_ids(20, seed=12)
        with torch.no_grad():
            short = model.logits(ids[:10])
            full = model.logits(ids)
        assert torch.allclose(short, full[:, :10], atol=1e-6, rtol=0)


class TestIncrementalDecoding:
    def test_prefill_and_steps_match_full_forward(self):
        model = tiny_model()
        ids = rand_ids(20, seed=13)
        with torch.no_grad():
            full = model.logits(ids)[0]
            vec, cache = model.prefill(ids[:8])
            assert torch.allclose(vec, full[7], atol=1e-5, rtol=0)
            for t in range(8, 20):
                vec = model.decode_step(int(ids[t]), cache)
                assert torch.allclose(vec, full[t], atol=1e-5, rtol=0)
        assert cache.length == 20

    def test_prefill_returns_vector_and_cache_length(self):
        model = tiny_model()
        vec, cache = model.prefill(rand_ids(5))
        assert vec.shape == (64,)
        assert cache.length == 5
        model.decode_step(3, cache)
        assert cache.length == 6

    def test_prefill_rejects_batches(self):
        model = tiny_model()
        with pytest.raises(ValueError, match="single sequence"):
            model.prefill(torch.zeros(2, 6, dtype=torch.long))

    def test_overlong_inputs_rejected(self):
        model = tiny_model(max_seq_len=8)
        with pytest.raises(SequenceTooLong):
            model.logits(rand_ids(9))
        with pytest.raises(SequenceTooLong):
            model.prefill(rand_ids(9))

    def test_decode_step_rejects_at_capacity(self):
        model = tiny_model(max_seq_len=8)
        _, cache = model.prefill(rand_ids(8))
        with pytest.raises(SequenceTooLong):
            model.decode_step(1, cache)


class TestLogProbs:
    def test_rows_are_normalized(self):
        model = tiny_model()
        with torch.no_grad():
            lp = model.log_probs(rand_ids(16, seed=14))
        total = torch.logsumexp(lp, dim=-1)
        assert torch.allclose(total, torch.zeros_like(total), atol=1e-5, rtol=0)


class TestSwiGLU:
    def test_zero_input_gives_exact_zero(self):
        torch.manual_seed(8)
        ffn = SwiGLU(16, 48)
        out = ffn(torch.zeros(2, 3, 16))
        assert torch.equal(out, torch.zeros(2, 3, 16))

    def test_matches_reference_formula(self):
        torch.manual_seed(9)
        ffn = SwiGLU(8, 24).double()
        x = torch.randn(4, 8, dtype=torch.float64)
        got = ffn(x).detach().numpy()

        xn = x.numpy()
        wg = ffn.w_gate.weight.detach().numpy()
        wu = ffn.w_up.weight.detach().numpy()
        wd = ffn.w_down.weight.detach().numpy()
        gate = xn @ wg.T
        silu = gate / (1.0 + np.exp(-gate))
        assert np.allclose(got, (silu * (xn @ wu.T)) @ wd.T, atol=1e-12, rtol=0)


class TestLoss:
    def test_matches_masked_mean_of_log_probs(self):
        model = tiny_model()
        g = torch.Generator().manual_seed(15)
        ids = torch.randint(0, 64, (2, 12), generator=g)
        mask = torch.rand(2, 11, generator=g) < 0.5
        mask[0, 0] = True  # never empty
        with torch.no_grad():
            loss = model.loss(ids, mask)
            lp = model.log_probs(ids)
        picked = lp[:, :-1].gather(-1, ids[:, 1:].unsqueeze(-1)).squeeze(-1)
        expected = -(picked * mask).sum() / mask.sum()
        assert torch.allclose(loss, expected, atol=1e-6, rtol=0)

    def test_mask_shape_must_be_targets_wide(self):
        model = tiny_model()
        ids = torch.zeros(2, 10, dtype=torch.long)
        with pytest.raises(ValueError, match="mask shape"):
            model.loss(ids, torch.ones(2, 10, dtype=torch.bool))

    def test_empty_mask_raises(self):
        model = tiny_model()
        ids = torch.zeros(1, 6, dtype=torch.long)
        with pytest.raises(EmptyMask):
            model.loss(ids, torch.zeros(1, 5, dtype=torch.bool))

    def test_accepts_plain_sequences(self):
        model = tiny_model()
        loss = model.loss([1, 5, 9, 2], [True, True, False])
        assert loss.ndim == 0 and torch.isfinite(loss)

    def test_masked_out_padding_does_not_change_loss(self):
        model = tiny_model()
        ids = rand_ids(8, seed=16)
        mask = torch.ones(1, 7, dtype=torch.bool)
        padded = torch.cat([ids, torch.full((4,), PAD)]).unsqueeze(0)
        padded_mask = torch.cat([mask, torch.zeros(1, 4, dtype=torch.bool)], dim=1)
        with torch.no_grad():
            a = model.loss(ids.unsqueeze(0), mask)
            b = model.loss(padded, padded_mask)
        assert torch.allclose(a, b, atol=1e-6, rtol=0)


class TestEmbedding:
    def test_embed_returns_model_width_vector(self):
        model = tiny_model()
        vec = model.embed([5, 9, 13])
        assert vec.shape == (32,)

    def test_trailing_pads_do_not_move_the_embedding(self):
        model = tiny_model()
        ids = [7, 11, 15, 19]
        with torch.no_grad():
            plain = model.embed(ids)
            padded = model.embed(ids + [PAD] * 5)
        assert torch.allclose(plain, padded, atol=1e-6, rtol=0)

    def test_batch_rows_are_order_independent(self):
        model = tiny_model()
        a, b = [3, 6, 9, 12, 15], [20, 25]
        with torch.no_grad():
            fwd = model.embed_batch([a, b])
            rev = model.embed_batch([b, a])
        assert torch.allclose(fwd[0], rev[1], atol=1e-6, rtol=0)
        assert torch.allclose(fwd[1], rev[0], atol=1e-6, rtol=0)

    def test_batch_row_matches_single_embed(self):
        model = tiny_model()
        a, b = [3, 6, 9, 12, 15], [20, 25]
        with torch.no_grad():
            batch = model.embed_batch([a, b])
            single = model.embed(b)
        assert torch.allclose(batch[1], single, atol=1e-6, rtol=0)

    def test_all_pad_row_stays_finite(self):
        model = tiny_model()
        with torch.no_grad():
            out = model.embed_batch([[PAD, PAD, PAD], [4, 5]])
        assert torch.isfinite(out).all()


class TestParameterInit:
    def test_seeded_construction_is_deterministic(self):
        a = tiny_model(seed=7)
        b = tiny_model(seed=7)
        for (name, pa), (_, pb) in zip(a.state_dict().items(), b.state_dict().items()):
            assert torch.equal(pa, pb), name

    def test_residual_projections_use_reduced_std(self):
        model = tiny_model(seed=3)
        attn = model.blocks[0].attn
        ffn = model.blocks[0].ffn
        # plain projections: std 0.02; residual-facing: 0.02 / sqrt(2 * 2) = 0.01
        with torch.no_grad():
            assert 0.017 < float(attn.wq.weight.std()) < 0.023
            assert 0.008 < float(attn.wo.weight.std()) < 0.012
            assert 0.008 < float(ffn.w_down.weight.std()) < 0.012
            assert 0.017 < float(ffn.w_gate.weight.std()) < 0.023

    def test_norm_weights_start_at_one(self):
        model = tiny_model()
        assert torch.equal(model.final_norm.weight, torch.ones(32))
        assert torch.equal(model.blocks[1].ffn_norm.weight, torch.ones(32))

    def test_parameter_count_matches_hand_total(self):
        model = tiny_model()
        expected = (
            64 * 32  # token embedding
            + 2
            * (
                4 * 32 * 32  # q, k, v, o projections
                + 2 * 32  # the two norms in each block
                + 3 * 32 * 88  # gate, up, down
            )
            + 32  # final norm
            + 64 * 32  # output head
        )
        assert model.n_params() == expected == 29344


class TestFloat64Mode:
    def test_double_precision_forward_works(self):
        model = tiny_model().double()
        with torch.no_grad():
            out = model.logits(rand_ids(10, seed=17))
        assert out.dtype == torch.float64
        assert torch.isfinite(out).all()


class TestCheckpoint:
    def save(self, tmp_path, model, bpe=None, vocab_hash=None):
        path = tmp_path / "model.mgc"
        save_checkpoint(model, path, vocab_hash or VOCAB.hash_hex(), bpe)
        return path

    def test_round_trip_is_bitwise(self, tmp_path):
        model = tiny_model(seed=21)
        path = self.save(tmp_path, model)
        loaded, bpe, header = load_checkpoint(path, VOCAB.hash_hex())
        assert bpe is None
        assert loaded.config == model.config
        assert not loaded.training
        for name, tensor in model.state_dict().items():
            assert torch.equal(loaded.state_dict()[name], tensor), name
        ids = rand_ids(12, seed=22)
        with torch.no_grad():
            assert torch.equal(loaded.logits(ids), model.logits(ids))

    def test_header_contents(self, tmp_path):
        model = tiny_model()
        path = self.save(tmp_path, model)
        _, _, header = load_checkpoint(path)
        assert header["version"] == 1
        assert header["vocab_sha256"] == VOCAB.hash_hex()
        names = {entry["name"] for entry in header["tensors"]}
        assert names == set(model.state_dict())

    def test_vocab_hash_mismatch(self, tmp_path):
        path = self.save(tmp_path, tiny_model())
        with pytest.raises(VocabHashMismatch):
            load_checkpoint(path, "0" * 64)
        load_checkpoint(path, VOCAB.hash_hex())
        load_checkpoint(path, None)

    def test_vocab_mismatch_is_a_checkpoint_error(self):
        assert issubclass(VocabHashMismatch, CheckpointError)

    def test_embedded_bpe_round_trips(self, tmp_path):
        bpe = BpeModel(VOCAB_SIZE, ((10, 11, 532), (532, 12, 533)))
        model = tiny_model(vocab_size=534)
        path = self.save(tmp_path, model, bpe=bpe)
        _, loaded, header = load_checkpoint(path)
        assert loaded is not None
        assert loaded.to_json_dict() == bpe.to_json_dict()
        assert header["bpe"] == bpe.to_json_dict()

    def test_rejects_bad_magic(self, tmp_path):
        path = self.save(tmp_path, tiny_model())
        data = path.read_bytes()
        path.write_bytes(b"XXXX" + data[4:])
        with pytest.raises(CheckpointError, match="magic"):
            load_checkpoint(path)

    def test_rejects_unknown_version(self, tmp_path):
        path = self.save(tmp_path, tiny_model())
        data = bytearray(path.read_bytes())
        data[4:8] = struct.pack("<I", 99)
        path.write_bytes(bytes(data))
        with pytest.raises(CheckpointError, match="version"):
            load_checkpoint(path)

    def test_rejects_garbage_header(self, tmp_path):
        blob = b"not json at all!"
        path = tmp_path / "bad.mgc"
        path.write_bytes(b"MGC1" + struct.pack("<I", 1) + struct.pack("<Q", len(blob)) + blob)
        with pytest.raises(CheckpointError, match="header"):
            load_checkpoint(path)

    def test_rejects_truncated_tensor_data(self, tmp_path):
        path = self.save(tmp_path, tiny_model())
        data = path.read_bytes()
        path.write_bytes(data[:-64])
        with pytest.raises(CheckpointError, match="truncated"):
            load_checkpoint(path)

    def test_rejects_file_cut_inside_the_header(self, tmp_path):
        path = self.save(tmp_path, tiny_model())
        path.write_bytes(path.read_bytes()[:6])
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_rejects_manifest_name_mismatch(self, tmp_path):
        path = self.save(tmp_path, tiny_model())
        data = path.read_bytes()
        patched = data.replace(b"tok_emb.weight", b"tok_emb.weigXt", 1)
        assert patched != data
        path.write_bytes(patched)
        with pytest.raises(CheckpointError, match="manifest"):
            load_checkpoint(path)

    def test_saves_float64_models_as_float32(self, tmp_path):
        model = tiny_model(seed=30).double()
        path = self.save(tmp_path, model)
        loaded, _, _ = load_checkpoint(path)
        assert loaded.tok_emb.weight.dtype == torch.float32
