"""Conditioned 4-bar multitrack music generation.

MIDI in and out, an event tokenizer with a checkable grammar, optional BPE
over the event stream, a small decoder-only transformer conditioned on a
droppable metadata prefix, evaluation metrics, and a CLI plus HTTP service
on top.
"""

from .bpe import BpeModel, EmptyCorpus, UnknownToken, bpe_decode, bpe_encode, train_bpe
from .chords import detect_chord
from .conditions import (
    ConditionSet,
    DropPolicy,
    EmptySong,
    apply_drop,
    encode_prefix,
    decode_prefix,
    extract_metadata,
    quantize_conditions,
)
from .metrics import (
    ControlReport,
    DegenerateManifold,
    controllability,
    density_coverage,
    evaluate_table,
    perplexity,
)
from .midi_io import (
    MalformedMidi,
    NoteEvent,
    NoteSong,
    UnsupportedTimeSignature,
    parse_midi,
    write_midi,
)
from .model import (
    CheckpointError,
    DecoderModel,
    EmptyMask,
    ModelConfig,
    SequenceTooLong,
    VocabHashMismatch,
    load_checkpoint,
    save_checkpoint,
)
from .sampling import NoValidToken, SamplerConfig, generate, sample_next
from .synthetic import synth_corpus, synth_song
from .tokenizer import (
    GrammarState,
    InvalidSyntax,
    TokenSequence,
    detokenize,
    tokenize,
    validate_syntax,
)
from .training import TrainConfig, build_example, lr_at, train
from .vocab import VOCAB, ChordLabel, Vocabulary

__version__ = "0.1.0"
