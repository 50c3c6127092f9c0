"""Synthetic corpus tests: determinism, validity, metadata coverage."""

import pytest

from motifgen.conditions import extract_metadata
from motifgen.midi_io import DRUM_CLASS, parse_midi, write_midi
from motifgen.synthetic import synth_corpus, synth_song
from motifgen.tokenizer import detokenize, tokenize, validate_syntax
from motifgen.vocab import VOCAB


class TestDeterminism:
    def test_same_arguments_same_piece(self):
        assert synth_song(3, 5) == synth_song(3, 5)

    def test_corpus_pieces_depend_only_on_seed_and_index(self):
        corpus = synth_corpus(10, seed=1)
        assert corpus[4] == synth_song(1, 4)
        assert corpus[9] == synth_song(1, 9)

    def test_different_seeds_differ(self):
        assert synth_corpus(4, seed=0) != synth_corpus(4, seed=1)

    def test_count_must_be_positive(self):
        with pytest.raises(ValueError, match="positive"):
            synth_corpus(0)


class TestPieceShape:
    CORPUS = synth_corpus(30, seed=5)

    def test_every_piece_validates(self):
        for song in self.CORPUS:
            song.validate()
            assert song.bar_count == 4
            assert song.notes  # never an empty window

    def test_tempo_is_flat_and_midi_exact(self):
        for song in self.CORPUS:
            assert len(song.tempo_changes) == 1
            assert song.tempo_changes[0][0] == 0

    def test_both_drum_and_drumless_combos_appear(self):
        with_drums = [
            s for s in self.CORPUS
            if any(n.instrument_class == DRUM_CLASS for n in s.notes)
        ]
        assert 0 < len(with_drums) < len(self.CORPUS)

    def test_tempo_sits_in_a_coarse_style_bin(self):
        for song in self.CORPUS:
            meta = extract_metadata(song)
            assert VOCAB.tempo_bin(meta.mean_tempo) in {18, 21, 24, 27}


class TestMetadataCoverage:
    def test_all_six_categories_are_present(self):
        for song in synth_corpus(20, seed=9):
            meta = extract_metadata(song)
            assert meta.instruments
            assert meta.chords
            assert meta.mean_tempo is not None
            assert meta.mean_pitch is not None
            assert meta.mean_velocity is not None
            assert meta.mean_duration is not None
            assert len(meta.present_categories()) == 6


class TestRoundTrips:
    def test_tokenization_preserves_notes(self):
        for song in synth_corpus(15, seed=13):
            seq = tokenize(song)
            assert validate_syntax(seq.ids).valid
            back = detokenize(seq)
            assert back.notes == song.notes
            assert VOCAB.tempo_bin(back.tempo_changes[0][1]) == VOCAB.tempo_bin(
                song.tempo_changes[0][1]
            )

    def test_midi_write_parse_is_identity(self):
        for song in synth_corpus(15, seed=17):
            assert parse_midi(write_midi(song)) == [song]
